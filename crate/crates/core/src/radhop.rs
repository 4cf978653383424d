//! Two-hop RadHop feature extractor.
//!
//! Hop-1 applies a Saab kernel to every 3×3 neighbourhood of an `S×S` patch
//! (valid convolution, `S-2` output), the maps are 2×2 max-pooled, and Hop-2
//! applies a channel-wise Saab kernel to each pooled map. On top of the local
//! maps every channel contributes one global scalar: the projection of its
//! flattened map on the first principal direction of that map over the
//! training patches.
//!
//! Output layout: Hop-1 local maps, Hop-2 local maps, Hop-1 globals, Hop-2
//! globals, each channel-major and row-major inside a map.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{leading_eigenpair, Moments};
use crate::saab::{CwSaabLayer, SaabKernel};
use crate::scalar::{dot, Scalar};

/// Side of the max-pool window and its stride.
pub const POOL: usize = 2;

/// Patches per accumulation chunk while fitting; fixed so that results do not
/// depend on the number of threads.
const FIT_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct RadHopConfig {
    pub patch_size: usize,
    /// Filter size shared by both hops.
    pub filter_size: usize,
    /// Pruning threshold on absolute energy (fraction of input variance).
    pub energy_threshold: f64,
    /// Whether DC channels contribute global features.
    pub include_dc: bool,
    pub min_fit_patches: usize,
}

impl Default for RadHopConfig {
    fn default() -> Self {
        RadHopConfig {
            patch_size: 24,
            filter_size: 3,
            energy_threshold: 0.002,
            include_dc: true,
            min_fit_patches: 1000,
        }
    }
}

/// Spatial sizes through the network: input, Hop-1, pooled, Hop-2.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpatialChain {
    pub input: usize,
    pub hop1: usize,
    pub pooled: usize,
    pub hop2: usize,
}

impl RadHopConfig {
    pub fn validate(&self) -> Result<SpatialChain> {
        let s = self.patch_size;
        let f = self.filter_size;
        if s == 0 || !s.is_multiple_of(2) {
            return Err(Error::Config(format!("patch size must be even, got {s}")));
        }
        if f == 0 {
            return Err(Error::Config("filter size must be positive".into()));
        }
        if !(self.energy_threshold >= 0.0 && self.energy_threshold < 1.0) {
            return Err(Error::Config(format!(
                "energy threshold must be in [0, 1), got {}",
                self.energy_threshold
            )));
        }
        let too_small = || Error::Config(format!("patch size {s} too small for filter {f}"));
        let hop1 = s.checked_sub(f - 1).filter(|&v| v >= POOL).ok_or_else(too_small)?;
        let pooled = hop1 / POOL;
        let hop2 = pooled.checked_sub(f - 1).filter(|&v| v >= 1).ok_or_else(too_small)?;
        Ok(SpatialChain {
            input: s,
            hop1,
            pooled,
            hop2,
        })
    }
}

/// Mean and first principal direction of one channel's flattened maps.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalPca<T> {
    pub mean: Vec<T>,
    /// Unit vector, or all zeros when the channel never varied.
    pub direction: Vec<T>,
}

impl<T: Scalar> GlobalPca<T> {
    fn from_moments(m: &Moments) -> Self {
        let dim = m.dim();
        let cov = m.covariance::<T>();
        let direction = leading_eigenpair(&cov, dim)
            .map(|(v, _)| v)
            .unwrap_or_else(|| vec![T::zero(); dim]);
        GlobalPca {
            mean: m.mean(),
            direction,
        }
    }

    pub fn project(&self, map: &[T]) -> T {
        map.iter()
            .zip(&self.mean)
            .zip(&self.direction)
            .fold(T::zero(), |acc, ((&x, &m), &d)| acc + (x - m) * d)
    }

    pub fn parameter_count(&self) -> usize {
        self.mean.len() + self.direction.len()
    }
}

/// Index ranges of the four feature groups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureLayout {
    pub hop1_local: Range<usize>,
    pub hop2_local: Range<usize>,
    pub hop1_global: Range<usize>,
    pub hop2_global: Range<usize>,
}

impl FeatureLayout {
    fn new(chain: SpatialChain, k1: usize, k2: usize, g1: usize, g2: usize) -> Self {
        let a = k1 * chain.hop1 * chain.hop1;
        let b = a + k2 * chain.hop2 * chain.hop2;
        let c = b + g1;
        FeatureLayout {
            hop1_local: 0..a,
            hop2_local: a..b,
            hop1_global: b..c,
            hop2_global: c..c + g2,
        }
    }

    pub fn len(&self) -> usize {
        self.hop2_global.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hop {
    One,
    Two,
}

/// Fitted extractor for one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct RadHopModel<T> {
    config: RadHopConfig,
    chain: SpatialChain,
    /// Original (unpruned) anchor index of every retained Hop-1 channel.
    hop1_ids: Vec<usize>,
    hop1: SaabKernel<T>,
    /// One kernel per retained Hop-1 channel.
    hop2: CwSaabLayer<T>,
    global1: Vec<GlobalPca<T>>,
    /// `global2[p][m]` is present iff child `m` of parent `p` is retained.
    global2: Vec<Vec<Option<GlobalPca<T>>>>,
    layout: FeatureLayout,
}

/// Stored parts of a model, as written to and read from the container.
#[derive(Clone, Debug, PartialEq)]
pub struct RadHopParts<T> {
    pub config: RadHopConfig,
    pub hop1_ids: Vec<usize>,
    pub hop1: SaabKernel<T>,
    pub hop2: CwSaabLayer<T>,
    pub global1: Vec<GlobalPca<T>>,
    pub global2: Vec<Vec<Option<GlobalPca<T>>>>,
}

/// Row-major valid `f×f` neighbourhood at `(i, j)` of an `n×n` map.
#[inline]
fn gather<T: Scalar>(map: &[T], n: usize, f: usize, i: usize, j: usize, out: &mut [T]) {
    for di in 0..f {
        let row = &map[(i + di) * n + j..(i + di) * n + j + f];
        out[di * f..(di + 1) * f].copy_from_slice(row);
    }
}

/// Responses of every anchor of `kernel` over the valid positions of an `n×n`
/// map; channel-major output of `m` maps of `(n-f+1)²`.
fn convolve<T: Scalar>(kernel: &SaabKernel<T>, anchors: &[usize], map: &[T], n: usize) -> Vec<T> {
    let f = kernel.filter_size();
    let o = n + 1 - f;
    let mut out = vec![T::zero(); anchors.len() * o * o];
    let mut nb = vec![T::zero(); f * f];
    for i in 0..o {
        for j in 0..o {
            gather(map, n, f, i, j, &mut nb);
            for (c, &m) in anchors.iter().enumerate() {
                out[c * o * o + i * o + j] = dot(&kernel.anchors()[m], &nb) + kernel.bias()[m];
            }
        }
    }
    out
}

fn max_pool<T: Scalar>(map: &[T], n: usize) -> Vec<T> {
    let p = n / POOL;
    let mut out = vec![T::zero(); p * p];
    for i in 0..p {
        for j in 0..p {
            let mut best = map[i * POOL * n + j * POOL];
            for di in 0..POOL {
                for dj in 0..POOL {
                    best = best.max(map[(i * POOL + di) * n + j * POOL + dj]);
                }
            }
            out[i * p + j] = best;
        }
    }
    out
}

fn for_each_neighbourhood<T: Scalar>(map: &[T], n: usize, f: usize, mut visit: impl FnMut(&[T])) {
    let mut nb = vec![T::zero(); f * f];
    for i in 0..=n - f {
        for j in 0..=n - f {
            gather(map, n, f, i, j, &mut nb);
            visit(&nb);
        }
    }
}

/// Accumulates moments over fixed-size chunks in parallel and merges them in
/// chunk order.
fn chunked_moments<P, F>(patches: &[P], shifts: &[Vec<f64>], fill: F) -> Vec<Moments>
where
    P: Sync,
    F: Fn(&P, &mut [Moments]) + Sync,
{
    let partials: Vec<Vec<Moments>> = patches
        .par_chunks(FIT_CHUNK)
        .map(|chunk| {
            let mut acc: Vec<Moments> = shifts.iter().map(|s| Moments::with_shift(s.clone())).collect();
            for p in chunk {
                fill(p, &mut acc);
            }
            acc
        })
        .collect();
    let mut total: Vec<Moments> = shifts.iter().map(|s| Moments::with_shift(s.clone())).collect();
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total
}

impl<T: Scalar> RadHopModel<T> {
    /// Fits both hops and the global PCA on `patches` (row-major `S×S`).
    ///
    /// Everything is fitted unpruned and then pruned at the configured
    /// threshold, so pruning only ever drops channels.
    pub fn fit<P: AsRef<[T]> + Sync>(patches: &[P], config: &RadHopConfig) -> Result<Self> {
        let chain = config.validate()?;
        if patches.len() < config.min_fit_patches.max(1) {
            return Err(Error::InsufficientData {
                needed: config.min_fit_patches.max(1),
                got: patches.len(),
            });
        }
        let s = chain.input;
        if let Some(p) = patches.iter().find(|p| p.as_ref().len() != s * s) {
            return Err(Error::shape(s * s, p.as_ref().len()));
        }
        let f = config.filter_size;
        let dim = f * f;
        let first = patches[0].as_ref();

        // Hop-1 kernel on every neighbourhood of every patch.
        let shift: Vec<f64> = {
            let mut nb = vec![T::zero(); dim];
            gather(first, s, f, 0, 0, &mut nb);
            nb.iter().map(|v| v.as_f64()).collect()
        };
        let m1 = chunked_moments(patches, &[shift], |p, acc| {
            for_each_neighbourhood(p.as_ref(), s, f, |nb| acc[0].add(nb));
        });
        let m1 = &m1[0];
        let hop1 = SaabKernel::fit_covariance(m1.mean(), &m1.covariance::<T>(), m1.count(), f, T::zero())?;
        let all1: Vec<usize> = (0..hop1.num_anchors()).collect();
        let k1 = all1.len();

        // Hop-2 kernels and Hop-1 global PCA from the Hop-1 maps.
        let (n1, np) = (chain.hop1, chain.pooled);
        let maps0 = convolve(&hop1, &all1, first, s);
        let mut shifts: Vec<Vec<f64>> = (0..k1)
            .map(|c| maps0[c * n1 * n1..(c + 1) * n1 * n1].iter().map(|v| v.as_f64()).collect())
            .collect();
        for c in 0..k1 {
            let pooled = max_pool(&maps0[c * n1 * n1..(c + 1) * n1 * n1], n1);
            let mut nb = vec![T::zero(); dim];
            gather(&pooled, np, f, 0, 0, &mut nb);
            shifts.push(nb.iter().map(|v| v.as_f64()).collect());
        }
        let moments = chunked_moments(patches, &shifts, |p, acc| {
            let maps = convolve(&hop1, &all1, p.as_ref(), s);
            for c in 0..k1 {
                let map = &maps[c * n1 * n1..(c + 1) * n1 * n1];
                acc[c].add(map);
                let pooled = max_pool(map, n1);
                let (_, rest) = acc.split_at_mut(k1);
                for_each_neighbourhood(&pooled, np, f, |nb| rest[c].add(nb));
            }
        });
        let global1: Vec<GlobalPca<T>> = moments[..k1].iter().map(GlobalPca::from_moments).collect();
        let kernels2 = moments[k1..]
            .iter()
            .map(|m| SaabKernel::fit_covariance(m.mean(), &m.covariance::<T>(), m.count(), f, T::zero()))
            .collect::<Result<Vec<_>>>()?;
        let hop2 = CwSaabLayer::from_kernels(kernels2, hop1.energies().to_vec(), T::zero())?;

        // Hop-2 global PCA.
        let n2 = chain.hop2;
        let children: Vec<(usize, usize)> = (0..k1)
            .flat_map(|p| (0..hop2.kernels()[p].num_anchors()).map(move |m| (p, m)))
            .collect();
        let hop2_maps = |patch: &[T]| -> Vec<T> {
            let maps = convolve(&hop1, &all1, patch, s);
            let mut out = Vec::with_capacity(children.len() * n2 * n2);
            for p in 0..k1 {
                let pooled = max_pool(&maps[p * n1 * n1..(p + 1) * n1 * n1], n1);
                let kernel = &hop2.kernels()[p];
                let ids: Vec<usize> = (0..kernel.num_anchors()).collect();
                out.extend(convolve(kernel, &ids, &pooled, np));
            }
            out
        };
        let maps0 = hop2_maps(first);
        let shifts2: Vec<Vec<f64>> = (0..children.len())
            .map(|c| maps0[c * n2 * n2..(c + 1) * n2 * n2].iter().map(|v| v.as_f64()).collect())
            .collect();
        let moments2 = chunked_moments(patches, &shifts2, |p, acc| {
            let maps = hop2_maps(p.as_ref());
            for (c, a) in acc.iter_mut().enumerate() {
                a.add(&maps[c * n2 * n2..(c + 1) * n2 * n2]);
            }
        });
        let mut global2: Vec<Vec<Option<GlobalPca<T>>>> = (0..k1)
            .map(|p| vec![None; hop2.kernels()[p].num_anchors()])
            .collect();
        for (&(p, m), mom) in children.iter().zip(&moments2) {
            global2[p][m] = Some(GlobalPca::from_moments(mom));
        }

        let full = RadHopModel::from_parts(RadHopParts {
            config: RadHopConfig {
                energy_threshold: 0.0,
                ..config.clone()
            },
            hop1_ids: all1,
            hop1,
            hop2,
            global1,
            global2,
        })?;
        full.pruned(config.energy_threshold)
    }

    /// Reassembles a model from stored parts, checking their consistency.
    pub fn from_parts(parts: RadHopParts<T>) -> Result<Self> {
        let chain = parts.config.validate()?;
        let RadHopParts {
            config,
            hop1_ids,
            hop1,
            hop2,
            global1,
            global2,
        } = parts;
        let bad = |what: &str| Error::Format(format!("inconsistent RadHop model: {what}"));
        let f = config.filter_size;
        let k1 = hop1.num_anchors();
        if hop1.filter_size() != f || hop1_ids.len() != k1 || global1.len() != k1 {
            return Err(bad("hop-1 channel counts"));
        }
        if hop2.num_parents() != k1 || global2.len() != k1 {
            return Err(bad("hop-2 parent count"));
        }
        let n1 = chain.hop1 * chain.hop1;
        let n2 = chain.hop2 * chain.hop2;
        if global1.iter().any(|g| g.mean.len() != n1 || g.direction.len() != n1) {
            return Err(bad("hop-1 global PCA size"));
        }
        for (p, kernel) in hop2.kernels().iter().enumerate() {
            if kernel.filter_size() != f || global2[p].len() != kernel.num_anchors() {
                return Err(bad("hop-2 kernel shape"));
            }
            for (m, g) in global2[p].iter().enumerate() {
                match (hop2.keep_mask()[p][m], g) {
                    (true, Some(g)) if g.mean.len() == n2 && g.direction.len() == n2 => {}
                    (false, None) => {}
                    _ => return Err(bad("hop-2 global PCA")),
                }
            }
        }
        let k2 = hop2.num_retained();
        let dc = |m: usize| config.include_dc || m != 0;
        let g1 = (0..k1).filter(|&c| dc(hop1_ids[c])).count();
        let g2 = (0..k1).flat_map(|p| hop2.retained(p)).filter(|&m| dc(m)).count();
        let layout = FeatureLayout::new(chain, k1, k2, g1, g2);
        Ok(RadHopModel {
            config,
            chain,
            hop1_ids,
            hop1,
            hop2,
            global1,
            global2,
            layout,
        })
    }

    pub fn to_parts(&self) -> RadHopParts<T> {
        RadHopParts {
            config: self.config.clone(),
            hop1_ids: self.hop1_ids.clone(),
            hop1: self.hop1.clone(),
            hop2: self.hop2.clone(),
            global1: self.global1.clone(),
            global2: self.global2.clone(),
        }
    }

    /// Drops channels whose absolute energy is below `threshold`.
    ///
    /// The threshold may only grow: channels pruned earlier have no stored
    /// global PCA.
    pub fn pruned(&self, threshold: f64) -> Result<Self> {
        if threshold < self.config.energy_threshold {
            return Err(Error::Config(format!(
                "cannot prune at {threshold} below the fitted threshold {}",
                self.config.energy_threshold
            )));
        }
        let t = T::of(threshold);
        let keep: Vec<usize> = (0..self.hop1.num_anchors())
            .filter(|&c| self.hop1_ids[c] == 0 || self.hop1.energies()[c] >= t)
            .collect();
        let pick = |v: &[T]| keep.iter().map(|&c| v[c]).collect::<Vec<T>>();
        let hop1 = SaabKernel::from_parts(
            self.hop1.filter_size(),
            self.hop1.mean().to_vec(),
            keep.iter().map(|&c| self.hop1.anchors()[c].clone()).collect(),
            pick(self.hop1.bias()),
            pick(self.hop1.energies()),
        )?;
        let hop2 = self.hop2.select_parents(&keep).pruned(t);
        let global2 = keep
            .iter()
            .enumerate()
            .map(|(np, &p)| {
                self.global2[p]
                    .iter()
                    .zip(&hop2.keep_mask()[np])
                    .map(|(g, &k)| if k { g.clone() } else { None })
                    .collect()
            })
            .collect();
        RadHopModel::from_parts(RadHopParts {
            config: RadHopConfig {
                energy_threshold: threshold,
                ..self.config.clone()
            },
            hop1_ids: keep.iter().map(|&c| self.hop1_ids[c]).collect(),
            hop1,
            hop2,
            global1: keep.iter().map(|&c| self.global1[c].clone()).collect(),
            global2,
        })
    }

    pub fn config(&self) -> &RadHopConfig {
        &self.config
    }

    pub fn chain(&self) -> SpatialChain {
        self.chain
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn feature_len(&self) -> usize {
        self.layout.len()
    }

    pub fn hop1(&self) -> &SaabKernel<T> {
        &self.hop1
    }

    pub fn hop2(&self) -> &CwSaabLayer<T> {
        &self.hop2
    }

    /// Unpruned anchor index of each Hop-1 channel.
    pub fn hop1_channel_ids(&self) -> &[usize] {
        &self.hop1_ids
    }

    /// `(unpruned parent anchor, child anchor)` of each retained Hop-2 child, in
    /// output order.
    pub fn hop2_channel_ids(&self) -> Vec<(usize, usize)> {
        (0..self.hop2.num_parents())
            .flat_map(|p| self.hop2.retained(p).map(move |m| (self.hop1_ids[p], m)))
            .collect()
    }

    pub fn num_hop1_channels(&self) -> usize {
        self.hop1.num_anchors()
    }

    pub fn num_hop2_channels(&self) -> usize {
        self.hop2.num_retained()
    }

    fn hop1_maps(&self, patch: &[T]) -> Vec<T> {
        let all: Vec<usize> = (0..self.hop1.num_anchors()).collect();
        convolve(&self.hop1, &all, patch, self.chain.input)
    }

    /// Feature vector of one `S×S` row-major patch.
    pub fn transform(&self, patch: &[T]) -> Result<Vec<T>> {
        let s = self.chain.input;
        if patch.len() != s * s {
            return Err(Error::shape(s * s, patch.len()));
        }
        let (n1, np, n2) = (self.chain.hop1, self.chain.pooled, self.chain.hop2);
        let mut out = Vec::with_capacity(self.layout.len());
        let maps1 = self.hop1_maps(patch);
        out.extend_from_slice(&maps1);

        let mut maps2: Vec<(usize, usize, Vec<T>)> = Vec::new();
        for p in 0..self.hop2.num_parents() {
            let pooled = max_pool(&maps1[p * n1 * n1..(p + 1) * n1 * n1], n1);
            let kept: Vec<usize> = self.hop2.retained(p).collect();
            let maps = convolve(&self.hop2.kernels()[p], &kept, &pooled, np);
            out.extend_from_slice(&maps);
            for (c, &m) in kept.iter().enumerate() {
                maps2.push((p, m, maps[c * n2 * n2..(c + 1) * n2 * n2].to_vec()));
            }
        }

        let dc = |m: usize| self.config.include_dc || m != 0;
        for (c, g) in self.global1.iter().enumerate() {
            if dc(self.hop1_ids[c]) {
                out.push(g.project(&maps1[c * n1 * n1..(c + 1) * n1 * n1]));
            }
        }
        for (p, m, map) in &maps2 {
            if dc(*m) {
                let g = self.global2[*p][*m].as_ref().expect("retained child has global PCA");
                out.push(g.project(map));
            }
        }
        debug_assert_eq!(out.len(), self.layout.len());
        Ok(out)
    }

    /// Transforms many patches in parallel, preserving order.
    pub fn transform_batch<P: AsRef<[T]> + Sync>(&self, patches: &[P]) -> Result<Vec<Vec<T>>> {
        patches.par_iter().map(|p| self.transform(p.as_ref())).collect()
    }

    /// Global feature of `map` for a retained channel.
    ///
    /// `channel` indexes retained Hop-1 channels for [`Hop::One`] and retained
    /// Hop-2 children in output order for [`Hop::Two`].
    pub fn global_feature(&self, hop: Hop, channel: usize, map: &[T]) -> Result<T> {
        let g = match hop {
            Hop::One => self.global1.get(channel),
            Hop::Two => self
                .hop2_channel_ids()
                .get(channel)
                .and_then(|_| self.global2_by_output(channel)),
        }
        .ok_or_else(|| Error::Config(format!("no retained channel {channel}")))?;
        if map.len() != g.mean.len() {
            return Err(Error::shape(g.mean.len(), map.len()));
        }
        Ok(g.project(map))
    }

    fn global2_by_output(&self, channel: usize) -> Option<&GlobalPca<T>> {
        self.global2.iter().flatten().flatten().nth(channel)
    }

    /// Stored reals: retained anchors and biases of both hops plus the global
    /// PCA means and directions.
    pub fn count_parameters(&self) -> usize {
        self.hop1.parameter_count()
            + self.hop2.parameter_count()
            + self.global1.iter().map(GlobalPca::parameter_count).sum::<usize>()
            + self
                .global2
                .iter()
                .flatten()
                .flatten()
                .map(GlobalPca::parameter_count)
                .sum::<usize>()
    }

    /// Floating point operations for one patch transform (multiply and add
    /// counted separately, pooling comparisons counted once each).
    pub fn flops_per_patch(&self) -> u64 {
        let dim = (self.config.filter_size * self.config.filter_size) as u64;
        let (n1, np, n2) = (
            self.chain.hop1 as u64,
            self.chain.pooled as u64,
            self.chain.hop2 as u64,
        );
        let k1 = self.num_hop1_channels() as u64;
        let k2 = self.num_hop2_channels() as u64;
        let g1 = self.layout.hop1_global.len() as u64;
        let g2 = self.layout.hop2_global.len() as u64;
        let conv = |positions: u64, channels: u64| positions * channels * 2 * dim;
        let pool = k1 * np * np * (POOL * POOL - 1) as u64;
        conv(n1 * n1, k1) + pool + conv(n2 * n2, k2) + 3 * (g1 * n1 * n1 + g2 * n2 * n2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn patches(n: usize, s: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.random_range(0.0..6.0), rng.random_range(0.0..6.0));
                (0..s * s)
                    .map(|k| {
                        let (y, x) = ((k / s) as f64, (k % s) as f64);
                        (0.3 * y + a).sin() * (0.2 * x + b).cos() + rng.random_range(-0.2..0.2)
                    })
                    .collect()
            })
            .collect()
    }

    fn small_config(threshold: f64) -> RadHopConfig {
        RadHopConfig {
            energy_threshold: threshold,
            min_fit_patches: 10,
            ..RadHopConfig::default()
        }
    }

    #[test]
    fn spatial_chains() {
        let c = RadHopConfig::default().validate().unwrap();
        assert_eq!((c.input, c.hop1, c.pooled, c.hop2), (24, 22, 11, 9));
        let c = RadHopConfig {
            patch_size: 32,
            ..RadHopConfig::default()
        }
        .validate()
        .unwrap();
        assert_eq!((c.input, c.hop1, c.pooled, c.hop2), (32, 30, 15, 13));
    }

    #[test]
    fn odd_patch_rejected() {
        let c = RadHopConfig {
            patch_size: 23,
            ..RadHopConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unpruned_layout_length() {
        let model = RadHopModel::fit(&patches(40, 24, 3), &small_config(0.0)).unwrap();
        assert_eq!(model.num_hop1_channels(), 9);
        assert_eq!(model.num_hop2_channels(), 81);
        assert_eq!(model.feature_len(), 11007);
        let v = model.transform(&patches(1, 24, 9)[0]).unwrap();
        assert_eq!(v.len(), 11007);
    }

    #[test]
    fn too_few_patches() {
        let cfg = RadHopConfig::default();
        assert!(matches!(
            RadHopModel::<f64>::fit(&patches(5, 24, 1), &cfg),
            Err(Error::InsufficientData { needed: 1000, got: 5 })
        ));
    }

    #[test]
    fn wrong_patch_size_is_shape_error() {
        let model = RadHopModel::fit(&patches(20, 24, 3), &small_config(0.002)).unwrap();
        assert!(matches!(
            model.transform(&[0.0; 10]),
            Err(Error::Shape { expected: 576, actual: 10 })
        ));
    }
}
