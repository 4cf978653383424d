//! Discriminant feature test.
//!
//! Each feature's range `[f_min, f_max]` is cut into `B` equal bins. For every
//! interior bin boundary the samples split into a left part (bins below the
//! boundary) and a right part, and the split costs
//! `n_L/n · H(L) + n_R/n · H(R)` with `H` the binary label entropy in nats.
//! A feature's score is its cheapest split; lower is more discriminant.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct DftConfig {
    pub bins: usize,
    pub keep_k: usize,
}

impl Default for DftConfig {
    fn default() -> Self {
        DftConfig {
            bins: 32,
            keep_k: 1000,
        }
    }
}

impl DftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::Config(format!("DFT needs at least 2 bins, got {}", self.bins)));
        }
        if self.keep_k == 0 {
            return Err(Error::Config("DFT keep_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Binary entropy (nats) of a part holding `pos` positives out of `n`.
pub fn binary_entropy(pos: usize, n: usize) -> f64 {
    if n == 0 || pos == 0 || pos == n {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
}

fn check_labels(labels: &[bool]) -> Result<usize> {
    let pos = labels.iter().filter(|&&l| l).count();
    if labels.len() < 2 || pos == 0 || pos == labels.len() {
        return Err(Error::DegenerateLabels(format!(
            "DFT needs both classes, got {pos} positives of {}",
            labels.len()
        )));
    }
    Ok(pos)
}

/// Bin of `v` among `bins` equal bins over `[lo, hi]`, with `hi` in the last bin.
#[inline]
fn bin_of(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let b = ((v - lo) / (hi - lo) * bins as f64).floor();
    if b <= 0.0 {
        0
    } else {
        (b as usize).min(bins - 1)
    }
}

fn score_prepared<I: Iterator<Item = (f64, bool)> + Clone>(
    values: I,
    n: usize,
    total_pos: usize,
    bins: usize,
) -> (f64, f64, f64) {
    let (lo, hi) = values
        .clone()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (v, _)| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return (binary_entropy(total_pos, n), lo, hi);
    }
    let mut pos = vec![0usize; bins];
    let mut all = vec![0usize; bins];
    for (v, l) in values {
        let b = bin_of(v, lo, hi, bins);
        all[b] += 1;
        pos[b] += l as usize;
    }
    let mut best = f64::INFINITY;
    let (mut left_n, mut left_pos) = (0usize, 0usize);
    for b in 1..bins {
        left_n += all[b - 1];
        left_pos += pos[b - 1];
        let right_n = n - left_n;
        let right_pos = total_pos - left_pos;
        let cost = left_n as f64 / n as f64 * binary_entropy(left_pos, left_n)
            + right_n as f64 / n as f64 * binary_entropy(right_pos, right_n);
        best = best.min(cost);
    }
    (best, lo, hi)
}

/// Minimum weighted split entropy of one feature.
pub fn dft_score<T: Scalar>(values: &[T], labels: &[bool], bins: usize) -> Result<f64> {
    if values.len() != labels.len() {
        return Err(Error::shape(labels.len(), values.len()));
    }
    if bins < 2 {
        return Err(Error::Config(format!("DFT needs at least 2 bins, got {bins}")));
    }
    let total_pos = check_labels(labels)?;
    let it = values.iter().map(|v| v.as_f64()).zip(labels.iter().copied());
    Ok(score_prepared(it, values.len(), total_pos, bins).0)
}

/// Per-feature scores and the retained indices of one feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DftSelection {
    pub scores: Vec<f64>,
    pub f_min: Vec<f64>,
    pub f_max: Vec<f64>,
    /// Retained indices by ascending score, ties by index.
    pub kept: Vec<usize>,
}

/// Features scored per parallel task.
const SCORE_CHUNK: usize = 64;

impl DftSelection {
    /// Scores every column of the row-major matrix `rows` and keeps the
    /// `keep_k` lowest.
    pub fn fit<T: Scalar, R: AsRef<[T]> + Sync>(
        rows: &[R],
        labels: &[bool],
        config: &DftConfig,
    ) -> Result<Self> {
        config.validate()?;
        if rows.len() != labels.len() {
            return Err(Error::shape(labels.len(), rows.len()));
        }
        let total_pos = check_labels(labels)?;
        let d = rows[0].as_ref().len();
        if d == 0 {
            return Err(Error::Config("DFT needs at least one feature".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.as_ref().len() != d) {
            return Err(Error::shape(d, r.as_ref().len()));
        }
        let n = rows.len();
        let starts: Vec<usize> = (0..d).step_by(SCORE_CHUNK).collect();
        let results: Vec<(f64, f64, f64)> = starts
            .par_iter()
            .flat_map_iter(|&start| {
                let end = (start + SCORE_CHUNK).min(d);
                let width = end - start;
                let mut columns = vec![0.0f64; width * n];
                for (i, row) in rows.iter().enumerate() {
                    for (c, v) in row.as_ref()[start..end].iter().enumerate() {
                        columns[c * n + i] = v.as_f64();
                    }
                }
                (0..width)
                    .map(|c| {
                        let col = &columns[c * n..(c + 1) * n];
                        let it = col.iter().copied().zip(labels.iter().copied());
                        score_prepared(it, n, total_pos, config.bins)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let scores: Vec<f64> = results.iter().map(|r| r.0).collect();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        order.truncate(config.keep_k.min(d));
        Ok(DftSelection {
            f_min: results.iter().map(|r| r.1).collect(),
            f_max: results.iter().map(|r| r.2).collect(),
            scores,
            kept: order,
        })
    }

    pub fn input_len(&self) -> usize {
        self.scores.len()
    }

    pub fn output_len(&self) -> usize {
        self.kept.len()
    }

    /// Picks the retained features of `v` in retained order.
    pub fn apply<T: Scalar>(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.input_len() {
            return Err(Error::shape(self.input_len(), v.len()));
        }
        Ok(self.kept.iter().map(|&i| v[i]).collect())
    }

    pub fn apply_into<T: Scalar>(&self, v: &[T], out: &mut Vec<T>) -> Result<()> {
        if v.len() != self.input_len() {
            return Err(Error::shape(self.input_len(), v.len()));
        }
        out.extend(self.kept.iter().map(|&i| v[i]));
        Ok(())
    }
}

/// Concatenates already-selected T2, ADC and DWI vectors, checking each against
/// its selection's output length.
pub fn fuse_sequences<T: Scalar>(parts: [&[T]; 3], selections: [&DftSelection; 3]) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(selections.iter().map(|s| s.output_len()).sum());
    for (p, s) in parts.iter().zip(selections) {
        if p.len() != s.output_len() {
            return Err(Error::shape(s.output_len(), p.len()));
        }
        out.extend_from_slice(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_split_scores_zero() {
        let v = [0.0, 0.1, 0.2, 0.8, 0.9, 1.0];
        let l = [false, false, false, true, true, true];
        assert_eq!(dft_score(&v, &l, 32).unwrap(), 0.0);
    }

    #[test]
    fn constant_feature_scores_full_entropy() {
        let l = [false, true, true, false];
        let s = dft_score(&[1.0f64; 4], &l, 8).unwrap();
        assert!((s - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn single_class_is_degenerate() {
        assert!(matches!(
            dft_score(&[1.0, 2.0], &[true, true], 4),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn selection_orders_by_score_then_index() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![1.0, i as f64, (i % 2) as f64, i as f64])
            .collect();
        let labels: Vec<bool> = (0..10).map(|i| i >= 5).collect();
        let sel = DftSelection::fit(&rows, &labels, &DftConfig { bins: 4, keep_k: 10 }).unwrap();
        assert_eq!(sel.kept, vec![1, 3, 2, 0]);
    }

    #[test]
    fn fuse_checks_lengths() {
        let sel = DftSelection {
            scores: vec![0.0; 3],
            f_min: vec![0.0; 3],
            f_max: vec![0.0; 3],
            kept: vec![0, 1],
        };
        let a = [1.0, 2.0];
        let fused = fuse_sequences([&a[..], &a[..], &a[..]], [&sel, &sel, &sel]).unwrap();
        assert_eq!(fused, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(fuse_sequences([&a[..1], &a[..], &a[..]], [&sel, &sel, &sel]).is_err());
    }
}
