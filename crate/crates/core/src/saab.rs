//! Saab and channel-wise Saab transforms.
//!
//! A Saab kernel splits a flattened `F×F` neighbourhood into the DC direction
//! `a_0 = (1,…,1)/F` and its orthogonal complement. The AC anchors are the
//! principal components of the data inside that complement, so the full set
//! `{a_0, a_1, …}` is an orthonormal basis and `y_m = a_m · x + b_m`.
//!
//! Energies are fractions of the total input variance: the DC entry is the
//! variance of the DC projection, the AC entries are the AC eigenvalues.
//! Biases default to zero; with no nonlinearity between layers they only
//! shift coefficients.

use crate::error::{Error, Result};
use crate::linalg::{canonical_sign, column_mean, covariance, symmetric_eigen};
use crate::scalar::{dot, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct SaabKernel<T> {
    filter_size: usize,
    mean: Vec<T>,
    anchors: Vec<Vec<T>>,
    bias: Vec<T>,
    energies: Vec<T>,
}

/// Unit DC anchor for a neighbourhood of `dim` samples.
pub fn dc_anchor<T: Scalar>(dim: usize) -> Vec<T> {
    vec![T::one() / T::of(dim as f64).sqrt(); dim]
}

/// Orthonormal basis of the complement of the all-ones direction (Helmert).
fn helmert_basis<T: Scalar>(dim: usize) -> Vec<Vec<T>> {
    (1..dim)
        .map(|k| {
            let norm = T::of(((k * (k + 1)) as f64).sqrt());
            let mut v = vec![T::zero(); dim];
            v[..k].iter_mut().for_each(|x| *x = T::one() / norm);
            v[k] = -T::of(k as f64) / norm;
            v
        })
        .collect()
}

impl<T: Scalar> SaabKernel<T> {
    /// Fits a kernel on `samples`, a row-major `N × (F·F)` matrix.
    ///
    /// AC anchors whose energy fraction is below `energy_threshold` are dropped;
    /// the DC anchor is always kept.
    pub fn fit(samples: &[T], filter_size: usize, energy_threshold: T) -> Result<Self> {
        let dim = filter_size * filter_size;
        if dim == 0 || !samples.len().is_multiple_of(dim) {
            return Err(Error::Config(format!(
                "sample buffer length {} is not a multiple of {dim}",
                samples.len()
            )));
        }
        let n = samples.len() / dim;
        if n < dim {
            return Err(Error::InsufficientData { needed: dim, got: n });
        }
        let mean = column_mean(samples, dim);
        let cov = covariance(samples, dim, &mean);
        Self::fit_covariance(mean, &cov, n, filter_size, energy_threshold)
    }

    /// Fits a kernel from precomputed sample mean and population covariance.
    pub fn fit_covariance(
        mean: Vec<T>,
        cov: &[T],
        n_samples: usize,
        filter_size: usize,
        energy_threshold: T,
    ) -> Result<Self> {
        let dim = filter_size * filter_size;
        if mean.len() != dim || cov.len() != dim * dim {
            return Err(Error::shape(dim * dim, cov.len()));
        }
        if n_samples < dim {
            return Err(Error::InsufficientData {
                needed: dim,
                got: n_samples,
            });
        }
        let total: T = (0..dim).map(|i| cov[i * dim + i]).sum();
        let a0 = dc_anchor::<T>(dim);

        if !(total > T::zero()) {
            return Ok(SaabKernel {
                filter_size,
                mean,
                anchors: vec![a0],
                bias: vec![T::zero()],
                energies: vec![T::one()],
            });
        }

        let ca0: Vec<T> = (0..dim).map(|i| dot(&cov[i * dim..(i + 1) * dim], &a0)).collect();
        let dc_energy = dot(&a0, &ca0) / total;

        // Covariance restricted to the AC subspace, expressed in the Helmert basis.
        let basis = helmert_basis::<T>(dim);
        let cq: Vec<Vec<T>> = basis
            .iter()
            .map(|q| (0..dim).map(|i| dot(&cov[i * dim..(i + 1) * dim], q)).collect())
            .collect();
        let k = dim - 1;
        let mut reduced = vec![T::zero(); k * k];
        for a in 0..k {
            for b in a..k {
                let v = dot(&basis[a], &cq[b]);
                reduced[a * k + b] = v;
                reduced[b * k + a] = v;
            }
        }
        let eig = symmetric_eigen(&reduced, k);

        let mut anchors = vec![a0];
        let mut energies = vec![dc_energy];
        for (value, coords) in eig.values.iter().zip(&eig.vectors) {
            let energy = value.max(T::zero()) / total;
            if energy < energy_threshold {
                continue;
            }
            let mut anchor = vec![T::zero(); dim];
            for (q, &c) in basis.iter().zip(coords) {
                for (a, &qi) in anchor.iter_mut().zip(q) {
                    *a = *a + c * qi;
                }
            }
            canonical_sign(&mut anchor);
            anchors.push(anchor);
            energies.push(energy);
        }
        let bias = vec![T::zero(); anchors.len()];
        Ok(SaabKernel {
            filter_size,
            mean,
            anchors,
            bias,
            energies,
        })
    }

    /// Reassembles a kernel from stored parts.
    pub fn from_parts(
        filter_size: usize,
        mean: Vec<T>,
        anchors: Vec<Vec<T>>,
        bias: Vec<T>,
        energies: Vec<T>,
    ) -> Result<Self> {
        let dim = filter_size * filter_size;
        let m = anchors.len();
        if m == 0 || mean.len() != dim || bias.len() != m || energies.len() != m {
            return Err(Error::Format("inconsistent Saab kernel parts".into()));
        }
        if let Some(a) = anchors.iter().find(|a| a.len() != dim) {
            return Err(Error::shape(dim, a.len()));
        }
        Ok(SaabKernel {
            filter_size,
            mean,
            anchors,
            bias,
            energies,
        })
    }

    pub fn filter_size(&self) -> usize {
        self.filter_size
    }

    pub fn dim(&self) -> usize {
        self.filter_size * self.filter_size
    }

    pub fn num_anchors(&self) -> usize {
        self.anchors.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn anchors(&self) -> &[Vec<T>] {
        &self.anchors
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn energies(&self) -> &[T] {
        &self.energies
    }

    pub fn set_bias(&mut self, bias: Vec<T>) -> Result<()> {
        if bias.len() != self.anchors.len() {
            return Err(Error::shape(self.anchors.len(), bias.len()));
        }
        self.bias = bias;
        Ok(())
    }

    /// Keeps the DC anchor and the AC anchors with energy ≥ `threshold`.
    pub fn pruned(&self, threshold: T) -> Self {
        let keep: Vec<usize> = (0..self.anchors.len())
            .filter(|&m| m == 0 || self.energies[m] >= threshold)
            .collect();
        SaabKernel {
            filter_size: self.filter_size,
            mean: self.mean.clone(),
            anchors: keep.iter().map(|&m| self.anchors[m].clone()).collect(),
            bias: keep.iter().map(|&m| self.bias[m]).collect(),
            energies: keep.iter().map(|&m| self.energies[m]).collect(),
        }
    }

    /// Coefficients `a_m · x + b_m` for every anchor.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(Error::shape(self.dim(), x.len()));
        }
        let mut out = vec![T::zero(); self.anchors.len()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked variant of [`apply`](Self::apply) writing into `out`.
    #[inline]
    pub fn apply_into(&self, x: &[T], out: &mut [T]) {
        for ((o, a), &b) in out.iter_mut().zip(&self.anchors).zip(&self.bias) {
            *o = dot(a, x) + b;
        }
    }

    /// Inverse transform `Σ (y_m − b_m) a_m`; exact when no anchor was pruned.
    pub fn reconstruct(&self, coefficients: &[T]) -> Result<Vec<T>> {
        if coefficients.len() != self.anchors.len() {
            return Err(Error::shape(self.anchors.len(), coefficients.len()));
        }
        let mut x = vec![T::zero(); self.dim()];
        for ((a, &y), &b) in self.anchors.iter().zip(coefficients).zip(&self.bias) {
            for (xi, &ai) in x.iter_mut().zip(a) {
                *xi = *xi + (y - b) * ai;
            }
        }
        Ok(x)
    }

    pub fn parameter_count(&self) -> usize {
        self.anchors.len() * self.dim() + self.bias.len()
    }
}

/// Channel-wise Saab layer: one independent kernel per parent channel.
#[derive(Clone, Debug, PartialEq)]
pub struct CwSaabLayer<T> {
    kernels: Vec<SaabKernel<T>>,
    parent_energies: Vec<T>,
    keep_mask: Vec<Vec<bool>>,
}

impl<T: Scalar> CwSaabLayer<T> {
    /// Fits one kernel per parent on that parent's `N_p × (F·F)` samples.
    ///
    /// Every child is fitted; a child is kept when its absolute energy
    /// (parent energy × child fraction) reaches `energy_threshold`.
    pub fn fit(
        per_parent_samples: &[Vec<T>],
        parent_energies: &[T],
        filter_size: usize,
        energy_threshold: T,
    ) -> Result<Self> {
        if per_parent_samples.is_empty() {
            return Err(Error::Config("channel-wise Saab needs at least one parent".into()));
        }
        if per_parent_samples.len() != parent_energies.len() {
            return Err(Error::shape(per_parent_samples.len(), parent_energies.len()));
        }
        let kernels = per_parent_samples
            .iter()
            .map(|s| SaabKernel::fit(s, filter_size, T::zero()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_kernels(kernels, parent_energies.to_vec(), energy_threshold)
    }

    pub fn from_kernels(
        kernels: Vec<SaabKernel<T>>,
        parent_energies: Vec<T>,
        energy_threshold: T,
    ) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::Config("channel-wise Saab needs at least one parent".into()));
        }
        if kernels.len() != parent_energies.len() {
            return Err(Error::shape(kernels.len(), parent_energies.len()));
        }
        let mut layer = CwSaabLayer {
            keep_mask: Vec::new(),
            kernels,
            parent_energies,
        };
        layer.keep_mask = layer.mask_for(energy_threshold);
        Ok(layer)
    }

    fn mask_for(&self, threshold: T) -> Vec<Vec<bool>> {
        self.kernels
            .iter()
            .zip(&self.parent_energies)
            .map(|(k, &pe)| k.energies().iter().map(|&e| pe * e >= threshold).collect())
            .collect()
    }

    /// Same kernels with the keep mask recomputed at `threshold`.
    pub fn pruned(&self, threshold: T) -> Self {
        let mut layer = self.clone();
        layer.keep_mask = self.mask_for(threshold);
        layer
    }

    /// Restricts the layer to a subset of parents (ascending indices).
    pub fn select_parents(&self, parents: &[usize]) -> Self {
        CwSaabLayer {
            kernels: parents.iter().map(|&p| self.kernels[p].clone()).collect(),
            parent_energies: parents.iter().map(|&p| self.parent_energies[p]).collect(),
            keep_mask: parents.iter().map(|&p| self.keep_mask[p].clone()).collect(),
        }
    }

    pub fn kernels(&self) -> &[SaabKernel<T>] {
        &self.kernels
    }

    pub fn parent_energies(&self) -> &[T] {
        &self.parent_energies
    }

    pub fn keep_mask(&self) -> &[Vec<bool>] {
        &self.keep_mask
    }

    pub fn num_parents(&self) -> usize {
        self.kernels.len()
    }

    /// Absolute child energies, parent-major.
    pub fn child_energies(&self) -> Vec<Vec<T>> {
        self.kernels
            .iter()
            .zip(&self.parent_energies)
            .map(|(k, &pe)| k.energies().iter().map(|&e| pe * e).collect())
            .collect()
    }

    pub fn num_children(&self) -> usize {
        self.kernels.iter().map(SaabKernel::num_anchors).sum()
    }

    pub fn num_retained(&self) -> usize {
        self.keep_mask.iter().flatten().filter(|&&k| k).count()
    }

    /// Retained child indices of parent `p`.
    pub fn retained(&self, p: usize) -> impl Iterator<Item = usize> + '_ {
        self.keep_mask[p]
            .iter()
            .enumerate()
            .filter_map(|(m, &k)| k.then_some(m))
    }

    /// Counts reals stored by kernels that contribute at least one child.
    pub fn parameter_count(&self) -> usize {
        self.kernels
            .iter()
            .zip(&self.keep_mask)
            .map(|(k, mask)| {
                let kept = mask.iter().filter(|&&b| b).count();
                kept * k.dim() + kept
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_samples(n: usize, dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn constant_neighbourhoods_give_dc_only_kernel() {
        let samples = vec![2.5f64; 20 * 9];
        let k = SaabKernel::fit(&samples, 3, 0.0).unwrap();
        assert_eq!(k.num_anchors(), 1);
        let y = k.apply(&[2.5; 9]).unwrap();
        assert!((y[0] - 2.5 * 3.0).abs() < 1e-12);
    }

    #[test]
    fn dc_anchor_entries_are_one_third() {
        let k = SaabKernel::fit(&random_samples(100, 9, 1), 3, 0.0).unwrap();
        assert!(k.anchors()[0].iter().all(|&v| v == 1.0 / 3.0));
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            SaabKernel::fit(&random_samples(8, 9, 1), 3, 0.0),
            Err(Error::InsufficientData { needed: 9, got: 8 })
        ));
    }

    #[test]
    fn constant_patch_gives_zero_ac() {
        let k = SaabKernel::fit(&random_samples(200, 9, 2), 3, 0.0).unwrap();
        let y = k.apply(&[0.7; 9]).unwrap();
        assert!((y[0] - 2.1).abs() < 1e-12);
        assert!(y[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let k = SaabKernel::fit(&random_samples(50, 4, 3), 2, 0.0).unwrap();
        assert!(matches!(k.apply(&[0.0; 5]), Err(Error::Shape { .. })));
    }

    #[test]
    fn unpruned_kernel_reconstructs() {
        let k = SaabKernel::fit(&random_samples(300, 9, 4), 3, 0.0).unwrap();
        assert_eq!(k.num_anchors(), 9);
        let x: Vec<f64> = (0..9).map(|i| (i as f64 * 0.37).sin()).collect();
        let back = k.reconstruct(&k.apply(&x).unwrap()).unwrap();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nine_parents_give_eighty_one_children() {
        let parents: Vec<Vec<f64>> = (0..9).map(|p| random_samples(100, 9, 10 + p)).collect();
        let layer = CwSaabLayer::fit(&parents, &[1.0 / 9.0; 9], 3, 0.0).unwrap();
        assert_eq!(layer.num_children(), 81);
        assert_eq!(layer.num_retained(), 81);
    }

    #[test]
    fn child_energy_scales_with_parent() {
        let s = random_samples(100, 9, 7);
        let layer = CwSaabLayer::fit(&[s.clone(), s], &[0.9, 0.1], 3, 0.0).unwrap();
        let e = layer.child_energies();
        let fractions = layer.kernels()[0].energies();
        for m in 0..9 {
            assert!((e[0][m] - 0.9 * fractions[m]).abs() < 1e-15);
            assert!((e[1][m] - 0.1 * fractions[m]).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_parent_set_is_config_error() {
        assert!(matches!(
            CwSaabLayer::<f64>::fit(&[], &[], 3, 0.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn f32_kernel_is_orthonormal() {
        let s: Vec<f32> = random_samples(200, 9, 9).into_iter().map(|v| v as f32).collect();
        let k = SaabKernel::fit(&s, 3, 0.0).unwrap();
        for (i, a) in k.anchors().iter().enumerate() {
            for (j, b) in k.anchors().iter().enumerate() {
                let d = dot(a, b);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((d - target).abs() < 1e-5);
            }
        }
    }
}
