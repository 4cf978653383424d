//! Intensity statistics of the ROI pixels.

use super::{entropy2, Levels, Plane};

pub const NAMES: &[&str] = &[
    "Energy",
    "TotalEnergy",
    "Entropy",
    "Minimum",
    "10Percentile",
    "90Percentile",
    "Maximum",
    "Mean",
    "Median",
    "InterquartileRange",
    "Range",
    "MeanAbsoluteDeviation",
    "RobustMeanAbsoluteDeviation",
    "RootMeanSquared",
    "StandardDeviation",
    "Skewness",
    "Kurtosis",
    "Variance",
    "Uniformity",
];

/// Linear-interpolation percentile of sorted values, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean taken about the first value, so a constant sample is exact; zero
/// when empty.
fn mean(x: &[f64]) -> f64 {
    match x.first() {
        Some(&x0) => x0 + x.iter().map(|v| v - x0).sum::<f64>() / x.len() as f64,
        None => 0.0,
    }
}

pub fn features(plane: &Plane, levels: &Levels) -> Vec<f64> {
    let mut x: Vec<f64> = plane
        .values
        .iter()
        .zip(plane.mask)
        .filter(|p| *p.1)
        .map(|p| *p.0)
        .collect();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let energy: f64 = x.iter().map(|v| v * v).sum();
    let mu = mean(&x);
    let m2 = x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - mu).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mu).powi(4)).sum::<f64>() / n;
    let p10 = percentile(&x, 0.1);
    let p90 = percentile(&x, 0.9);
    let robust: Vec<f64> = x.iter().copied().filter(|&v| v >= p10 && v <= p90).collect();
    let robust_mu = mean(&robust);

    let mut hist = vec![0.0; levels.ng];
    for &l in levels.q.iter().filter(|&&l| l > 0) {
        hist[l as usize - 1] += 1.0;
    }
    hist.iter_mut().for_each(|h| *h /= n);

    let (skew, kurt) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (0.0, 0.0)
    };
    vec![
        energy,
        energy * plane.spacing[0] * plane.spacing[1],
        entropy2(hist.iter().copied()),
        x[0],
        p10,
        p90,
        x[x.len() - 1],
        mu,
        percentile(&x, 0.5),
        percentile(&x, 0.75) - percentile(&x, 0.25),
        x[x.len() - 1] - x[0],
        x.iter().map(|v| (v - mu).abs()).sum::<f64>() / n,
        robust.iter().map(|v| (v - robust_mu).abs()).sum::<f64>() / robust.len().max(1) as f64,
        (energy / n).sqrt(),
        m2.sqrt(),
        skew,
        kurt,
        m2,
        hist.iter().map(|p| p * p).sum(),
    ]
}
