//! Gray-level co-occurrence features.
//!
//! One symmetric matrix per direction and distance, each normalized to sum 1,
//! then averaged; features are computed on the averaged matrix.

use super::{entropy2, Levels, DIRECTIONS};
use crate::linalg::symmetric_eigen;

pub const NAMES: &[&str] = &[
    "Autocorrelation",
    "JointAverage",
    "ClusterProminence",
    "ClusterShade",
    "ClusterTendency",
    "Contrast",
    "Correlation",
    "DifferenceAverage",
    "DifferenceEntropy",
    "DifferenceVariance",
    "JointEnergy",
    "JointEntropy",
    "Imc1",
    "Imc2",
    "Idm",
    "Idmn",
    "Id",
    "Idn",
    "InverseVariance",
    "MaximumProbability",
    "SumAverage",
    "SumEntropy",
    "SumSquares",
    "MCC",
];

/// Direction-averaged, normalized co-occurrence matrix, `ng × ng` row-major
/// over levels `1..=ng`. All zeros when no pixel pair lies inside the ROI.
pub fn cooccurrence(levels: &Levels, distances: &[usize]) -> Vec<f64> {
    let ng = levels.ng;
    let mut avg = vec![0.0; ng * ng];
    let mut used = 0usize;
    for &d in distances {
        for (dy, dx) in DIRECTIONS {
            let mut m = vec![0.0; ng * ng];
            let mut total = 0.0;
            for y in 0..levels.height as isize {
                for x in 0..levels.width as isize {
                    let a = levels.at(y, x);
                    let b = levels.at(y + dy * d as isize, x + dx * d as isize);
                    if a == 0 || b == 0 {
                        continue;
                    }
                    let (a, b) = (a as usize - 1, b as usize - 1);
                    m[a * ng + b] += 1.0;
                    m[b * ng + a] += 1.0;
                    total += 2.0;
                }
            }
            if total > 0.0 {
                avg.iter_mut().zip(&m).for_each(|(s, v)| *s += v / total);
                used += 1;
            }
        }
    }
    if used > 0 {
        avg.iter_mut().for_each(|v| *v /= used as f64);
    }
    avg
}

pub fn features(levels: &Levels, distances: &[usize]) -> Vec<f64> {
    let ng = levels.ng;
    let p = cooccurrence(levels, distances);
    if p.iter().all(|&v| v == 0.0) {
        return vec![0.0; NAMES.len()];
    }
    let cells = || {
        p.iter()
            .enumerate()
            .filter(|c| *c.1 > 0.0)
            .map(move |(k, &v)| ((k / ng + 1) as f64, (k % ng + 1) as f64, v))
    };
    let mut px = vec![0.0; ng];
    for (k, &v) in p.iter().enumerate() {
        px[k / ng] += v;
    }
    let mu: f64 = px.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
    let var: f64 = px.iter().enumerate().map(|(i, v)| ((i + 1) as f64 - mu).powi(2) * v).sum();
    let mut psum = vec![0.0; 2 * ng + 1];
    let mut pdiff = vec![0.0; ng];
    for (i, j, v) in cells() {
        psum[(i + j) as usize] += v;
        pdiff[(i - j).abs() as usize] += v;
    }

    let mut f = [0.0f64; 24];
    for (i, j, v) in cells() {
        let s = i + j - 2.0 * mu;
        let d = i - j;
        f[0] += i * j * v;
        f[2] += s.powi(4) * v;
        f[3] += s.powi(3) * v;
        f[4] += s * s * v;
        f[5] += d * d * v;
        f[10] += v * v;
        f[14] += v / (1.0 + d * d);
        f[15] += v / (1.0 + d * d / (ng * ng) as f64);
        f[16] += v / (1.0 + d.abs());
        f[17] += v / (1.0 + d.abs() / ng as f64);
        f[19] = f[19].max(v);
    }
    f[1] = mu;
    f[6] = if var > 0.0 { (f[0] - mu * mu) / var } else { 1.0 };
    let da: f64 = pdiff.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    f[7] = da;
    f[8] = entropy2(pdiff.iter().copied());
    f[9] = pdiff.iter().enumerate().map(|(k, v)| (k as f64 - da).powi(2) * v).sum();
    let hxy = entropy2(p.iter().copied());
    f[11] = hxy;
    let hx = entropy2(px.iter().copied());
    let (mut hxy1, mut hxy2) = (0.0, 0.0);
    for i in 0..ng {
        for j in 0..ng {
            let q = px[i] * px[j];
            if q > 0.0 {
                hxy1 -= p[i * ng + j] * q.log2();
                hxy2 -= q * q.log2();
            }
        }
    }
    f[12] = if hx > 0.0 { (hxy - hxy1) / hx } else { 0.0 };
    f[13] = (1.0 - (-2.0 * (hxy2 - hxy).max(0.0)).exp()).sqrt();
    f[18] = pdiff.iter().enumerate().skip(1).map(|(k, v)| v / (k * k) as f64).sum();
    f[20] = psum.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    f[21] = entropy2(psum.iter().copied());
    f[22] = var;
    f[23] = mcc(&p, &px);
    f.to_vec()
}

/// Second largest eigenvalue magnitude of `D^-1/2 P D^-1/2` over the occupied
/// levels, i.e. the square root of the second eigenvalue of `Q`.
fn mcc(p: &[f64], px: &[f64]) -> f64 {
    let ng = px.len();
    let occ: Vec<usize> = (0..ng).filter(|&i| px[i] > 0.0).collect();
    let n = occ.len();
    if n < 2 {
        return 1.0;
    }
    let mut s = vec![0.0; n * n];
    for (a, &i) in occ.iter().enumerate() {
        for (b, &j) in occ.iter().enumerate() {
            s[a * n + b] = p[i * ng + j] / (px[i] * px[j]).sqrt();
        }
    }
    let mut mags: Vec<f64> = symmetric_eigen(&s, n).values.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    mags[1].min(1.0)
}
