//! Neighbouring gray-tone difference features over 3×3 neighbourhoods.
//!
//! Pixels without any ROI neighbour are left out.

use super::Levels;

pub const NAMES: &[&str] = &["Coarseness", "Contrast", "Busyness", "Complexity", "Strength"];

/// Coarseness reported when every difference is zero.
const FLAT_COARSENESS: f64 = 1e6;

/// Per-level pixel counts `n_i` and absolute difference sums `s_i`.
pub fn differences(levels: &Levels) -> (Vec<f64>, Vec<f64>) {
    let mut n = vec![0.0; levels.ng];
    let mut s = vec![0.0; levels.ng];
    for y in 0..levels.height as isize {
        for x in 0..levels.width as isize {
            let l = levels.at(y, x);
            if l == 0 {
                continue;
            }
            let (mut sum, mut cnt) = (0.0, 0.0);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let v = levels.at(y + dy, x + dx);
                    if (dy, dx) != (0, 0) && v > 0 {
                        sum += v as f64;
                        cnt += 1.0;
                    }
                }
            }
            if cnt > 0.0 {
                n[l as usize - 1] += 1.0;
                s[l as usize - 1] += (l as f64 - sum / cnt).abs();
            }
        }
    }
    (n, s)
}

pub fn features(levels: &Levels) -> Vec<f64> {
    let (n, s) = differences(levels);
    let nvp: f64 = n.iter().sum();
    if nvp == 0.0 {
        return vec![FLAT_COARSENESS, 0.0, 0.0, 0.0, 0.0];
    }
    let p: Vec<f64> = n.iter().map(|v| v / nvp).collect();
    let occ: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let ngp = occ.len() as f64;
    let s_total: f64 = s.iter().sum();
    let ps: f64 = occ.iter().map(|&i| p[i] * s[i]).sum();
    let lvl = |i: usize| (i + 1) as f64;

    let coarseness = if ps > 0.0 { 1.0 / ps } else { FLAT_COARSENESS };
    let (mut pair_sq, mut busy_den, mut complexity, mut strength) = (0.0, 0.0, 0.0, 0.0);
    for &i in &occ {
        for &j in &occ {
            let d = lvl(i) - lvl(j);
            pair_sq += p[i] * p[j] * d * d;
            busy_den += (lvl(i) * p[i] - lvl(j) * p[j]).abs();
            complexity += d.abs() * (p[i] * s[i] + p[j] * s[j]) / (p[i] + p[j]);
            strength += (p[i] + p[j]) * d * d;
        }
    }
    let contrast = if ngp > 1.0 {
        pair_sq / (ngp * (ngp - 1.0)) * s_total / nvp
    } else {
        0.0
    };
    vec![
        coarseness,
        contrast,
        if busy_den > 0.0 { ps / busy_den } else { 0.0 },
        complexity / nvp,
        if s_total > 0.0 { strength / s_total } else { 0.0 },
    ]
}
