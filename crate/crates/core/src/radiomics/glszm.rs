//! Gray-level size-zone features over 8-connected zones of equal level.

use super::{Levels, SizeMatrix};

pub const NAMES: &[&str] = &[
    "SmallAreaEmphasis",
    "LargeAreaEmphasis",
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "SizeZoneNonUniformity",
    "SizeZoneNonUniformityNormalized",
    "ZonePercentage",
    "GrayLevelVariance",
    "ZoneVariance",
    "ZoneEntropy",
    "LowGrayLevelZoneEmphasis",
    "HighGrayLevelZoneEmphasis",
    "SmallAreaLowGrayLevelEmphasis",
    "SmallAreaHighGrayLevelEmphasis",
    "LargeAreaLowGrayLevelEmphasis",
    "LargeAreaHighGrayLevelEmphasis",
];

pub fn features(levels: &Levels) -> Vec<f64> {
    let (h, w) = (levels.height, levels.width);
    let pixels = levels.roi_pixels();
    let mut m = SizeMatrix::new(levels.ng, pixels);
    let mut seen = vec![false; h * w];
    let mut stack = Vec::new();
    for start in 0..h * w {
        let l = levels.q[start];
        if l == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut size = 0;
        while let Some(k) = stack.pop() {
            size += 1;
            let (y, x) = ((k / w) as isize, (k % w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (ny, nx) = (y + dy, x + dx);
                    if levels.at(ny, nx) == l {
                        let nk = ny as usize * w + nx as usize;
                        if !seen[nk] {
                            seen[nk] = true;
                            stack.push(nk);
                        }
                    }
                }
            }
        }
        m.add(l, size);
    }
    m.statistics(pixels as f64).to_vec()
}
