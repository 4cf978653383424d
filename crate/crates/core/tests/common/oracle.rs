//! Independent reference computations shared by the oracle and acceptance
//! tests. Each `*_error` function builds one random instance from `seed` and
//! returns the largest absolute deviation from the library.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radhop::dft::dft_score;
use radhop::metrics::{auroc, average_precision};
use radhop::saab::SaabKernel;

pub fn random_samples(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<f64> {
    // Correlated neighbourhoods: a random mixing of independent sources.
    let mix: Vec<f64> = (0..dim * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let src: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let offset = rng.random_range(-2.0..2.0);
        for i in 0..dim {
            out.push(offset + (0..dim).map(|j| mix[i * dim + j] * src[j]).sum::<f64>());
        }
    }
    out
}

/// Anchors and energies against nalgebra's eigendecomposition of the
/// covariance projected off the DC direction. Anchors are compared up to sign.
pub fn saab_error(seed: u64) -> f64 {
    let dim = 9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 200;
    let x = random_samples(&mut rng, n, dim);
    let kernel = SaabKernel::fit(&x, 3, 0.0).unwrap();

    let m = DMatrix::from_row_slice(n, dim, &x);
    let mean = m.row_mean();
    let centered = DMatrix::from_fn(n, dim, |i, j| m[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let ones = DMatrix::from_element(dim, 1, 1.0 / (dim as f64).sqrt());
    let proj = DMatrix::identity(dim, dim) - &ones * ones.transpose();
    let eig = SymmetricEigen::new(&proj * &cov * &proj);
    let mut pairs: Vec<(f64, Vec<f64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &v)| (v, eig.eigenvectors.column(k).iter().copied().collect()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let trace = cov.trace();

    if kernel.num_anchors() != dim {
        return f64::INFINITY;
    }
    let mut err = pairs[dim - 1].0.abs();
    for (k, (value, vector)) in pairs.iter().take(dim - 1).enumerate() {
        err = err.max((kernel.energies()[k + 1] - value / trace).abs());
        let cos: f64 = kernel.anchors()[k + 1].iter().zip(vector).map(|(a, b)| a * b).sum();
        err = err.max((cos.abs() - 1.0).abs());
    }
    err
}

fn entropy(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    [p, 1.0 - p].iter().filter(|&&q| q > 0.0).map(|q| -q * q.ln()).sum()
}

/// Every boundary `lo + b (hi - lo) / bins` tried with a full recount.
pub fn dft_exhaustive(values: &[f64], labels: &[bool], bins: usize) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = values.len();
    let total_pos = labels.iter().filter(|&&l| l).count();
    if hi <= lo {
        return entropy(total_pos, n);
    }
    (1..bins)
        .map(|b| {
            let t = lo + (hi - lo) * b as f64 / bins as f64;
            let (mut ln, mut lp, mut rn, mut rp) = (0, 0, 0, 0);
            for (&v, &l) in values.iter().zip(labels) {
                if v < t {
                    ln += 1;
                    lp += l as usize;
                } else {
                    rn += 1;
                    rp += l as usize;
                }
            }
            ln as f64 / n as f64 * entropy(lp, ln) + rn as f64 / n as f64 * entropy(rp, rn)
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn dft_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(10..300);
    let bins = rng.random_range(2..40);
    let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0 || rng.random_bool(0.2)).collect();
    let values: Vec<f64> = labels
        .iter()
        .map(|&l| rng.random_range(0.0..1.0) + if l { rng.random_range(0.0..0.7) } else { 0.0 })
        .collect();
    (dft_score(&values, &labels, bins).unwrap() - dft_exhaustive(&values, &labels, bins)).abs()
}

/// Precision and recall recounted from scratch at every distinct threshold.
pub fn ap_sweep(hits: &[(f64, bool)], total: usize) -> f64 {
    let mut thresholds: Vec<f64> = hits.iter().map(|h| h.0).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let kept: Vec<&(f64, bool)> = hits.iter().filter(|h| h.0 >= t).collect();
        let tp = kept.iter().filter(|h| h.1).count();
        let precision = tp as f64 / kept.len() as f64;
        let recall = tp as f64 / total as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

pub fn ap_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..80);
    // Coarse scores force ties.
    let hits: Vec<(f64, bool)> = (0..n)
        .map(|_| ((rng.random_range(0..20) as f64) / 20.0, rng.random_bool(0.4)))
        .collect();
    let total = hits.iter().filter(|h| h.1).count() + rng.random_range(1..5);
    (average_precision(&hits, total).unwrap().ap - ap_sweep(&hits, total)).abs()
}

/// Mann-Whitney statistic over every positive/negative pair, ties ½.
pub fn auroc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in (0..scores.len()).filter(|&i| labels[i]) {
        for j in (0..scores.len()).filter(|&j| !labels[j]) {
            pairs += 1.0;
            wins += match scores[i].total_cmp(&scores[j]) {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Equal => 0.5,
                std::cmp::Ordering::Less => 0.0,
            };
        }
    }
    wins / pairs
}

pub fn auroc_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..120);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0..15) as f64) / 15.0).collect();
    (auroc(&scores, &labels).unwrap() - auroc_pairs(&scores, &labels)).abs()
}
