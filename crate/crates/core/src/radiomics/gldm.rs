//! Gray-level dependence features: each ROI pixel contributes one entry of
//! size `1 +` its 8-neighbours inside the ROI with the same level.

use super::{Levels, SizeMatrix};

pub const NAMES: &[&str] = &[
    "SmallDependenceEmphasis",
    "LargeDependenceEmphasis",
    "GrayLevelNonUniformity",
    "DependenceNonUniformity",
    "DependenceNonUniformityNormalized",
    "GrayLevelVariance",
    "DependenceVariance",
    "DependenceEntropy",
    "LowGrayLevelEmphasis",
    "HighGrayLevelEmphasis",
    "SmallDependenceLowGrayLevelEmphasis",
    "SmallDependenceHighGrayLevelEmphasis",
    "LargeDependenceLowGrayLevelEmphasis",
    "LargeDependenceHighGrayLevelEmphasis",
];

pub fn features(levels: &Levels) -> Vec<f64> {
    let mut m = SizeMatrix::new(levels.ng, 9);
    for y in 0..levels.height as isize {
        for x in 0..levels.width as isize {
            let l = levels.at(y, x);
            if l == 0 {
                continue;
            }
            let mut dep = 1;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if (dy, dx) != (0, 0) && levels.at(y + dy, x + dx) == l {
                        dep += 1;
                    }
                }
            }
            m.add(l, dep);
        }
    }
    let s = m.statistics(levels.roi_pixels() as f64);
    // Same statistics as run lengths minus the normalized gray-level
    // non-uniformity and the percentage, which is always 1 here.
    [0, 1, 2, 4, 5, 7, 8, 9, 10, 11, 12, 13, 14, 15]
        .iter()
        .map(|&k| s[k])
        .collect()
}
