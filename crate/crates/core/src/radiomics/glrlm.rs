//! Gray-level run-length features, computed per direction and averaged.

use super::{Levels, SizeMatrix, DIRECTIONS};

pub const NAMES: &[&str] = &[
    "ShortRunEmphasis",
    "LongRunEmphasis",
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "RunLengthNonUniformity",
    "RunLengthNonUniformityNormalized",
    "RunPercentage",
    "GrayLevelVariance",
    "RunVariance",
    "RunEntropy",
    "LowGrayLevelRunEmphasis",
    "HighGrayLevelRunEmphasis",
    "ShortRunLowGrayLevelEmphasis",
    "ShortRunHighGrayLevelEmphasis",
    "LongRunLowGrayLevelEmphasis",
    "LongRunHighGrayLevelEmphasis",
];

/// Run counts along `(dy, dx)`: `m[(level - 1) * cols + (length - 1)]`.
pub fn run_lengths(levels: &Levels, (dy, dx): (isize, isize)) -> (usize, Vec<f64>) {
    let cols = levels.height.max(levels.width);
    let mut m = SizeMatrix::new(levels.ng, cols);
    for y in 0..levels.height as isize {
        for x in 0..levels.width as isize {
            let l = levels.at(y, x);
            if l == 0 || levels.at(y - dy, x - dx) == l {
                continue;
            }
            let mut len = 1;
            while levels.at(y + dy * len as isize, x + dx * len as isize) == l {
                len += 1;
            }
            m.add(l, len);
        }
    }
    (cols, m.m)
}

pub fn features(levels: &Levels) -> Vec<f64> {
    let pixels = levels.roi_pixels() as f64;
    let mut out = [0.0; 16];
    for dir in DIRECTIONS {
        let (cols, m) = run_lengths(levels, dir);
        let s = SizeMatrix { ng: levels.ng, cols, m }.statistics(pixels);
        out.iter_mut().zip(s).for_each(|(o, v)| *o += v / DIRECTIONS.len() as f64);
    }
    out.to_vec()
}
