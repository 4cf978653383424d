//! Handcrafted 2D radiomics over a masked ROI: 104 features per sequence.
//!
//! Order: first order (19), shape 2D (10), GLCM (24), GLRLM (16), GLSZM (16),
//! NGTDM (5), GLDM (14). Formulas are pinned in `FEATURES.md` next to this
//! crate. Texture families work on gray levels `1..=levels` obtained by
//! fixed-bin-count quantization over the ROI's own intensity range.

mod first_order;
mod glcm;
mod gldm;
mod glrlm;
mod glszm;
mod ngtdm;
mod shape;

use crate::error::{Error, Result};
use crate::volume::{window_origin, Sequence, Study};

pub use glcm::cooccurrence;
pub use glrlm::run_lengths;

/// Features per family, in output order.
pub const FAMILY_SIZES: [(&str, usize); 7] = [
    ("firstorder", first_order::NAMES.len()),
    ("shape2D", shape::NAMES.len()),
    ("glcm", glcm::NAMES.len()),
    ("glrlm", glrlm::NAMES.len()),
    ("glszm", glszm::NAMES.len()),
    ("ngtdm", ngtdm::NAMES.len()),
    ("gldm", gldm::NAMES.len()),
];

/// Features per sequence.
pub const FEATURES_PER_SEQUENCE: usize = 104;

/// `family_feature` names in output order.
pub fn feature_names() -> Vec<String> {
    let families: [(&str, &[&str]); 7] = [
        ("firstorder", first_order::NAMES),
        ("shape2D", shape::NAMES),
        ("glcm", glcm::NAMES),
        ("glrlm", glrlm::NAMES),
        ("glszm", glszm::NAMES),
        ("ngtdm", ngtdm::NAMES),
        ("gldm", gldm::NAMES),
    ];
    families
        .iter()
        .flat_map(|(f, names)| names.iter().map(move |n| format!("{f}_{n}")))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadiomicsConfig {
    pub levels: usize,
    /// Co-occurrence distances, each used along 4 symmetric directions.
    pub distances: Vec<usize>,
}

impl Default for RadiomicsConfig {
    fn default() -> Self {
        RadiomicsConfig {
            levels: 32,
            distances: vec![1],
        }
    }
}

impl RadiomicsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 || self.levels > u16::MAX as usize {
            return Err(Error::Config(format!("gray levels must be in [2, 65535], got {}", self.levels)));
        }
        if self.distances.is_empty() || self.distances.contains(&0) {
            return Err(Error::Config("co-occurrence distances must be nonempty and positive".into()));
        }
        Ok(())
    }
}

/// A 2D intensity plane with an ROI mask.
#[derive(Clone, Copy, Debug)]
pub struct Plane<'a> {
    pub height: usize,
    pub width: usize,
    pub values: &'a [f64],
    pub mask: &'a [bool],
    /// In-plane pixel spacing `[y, x]` in mm.
    pub spacing: [f64; 2],
}

/// 4 in-plane directions `(dy, dx)`: 0°, 45°, 90°, 135°.
pub(crate) const DIRECTIONS: [(isize, isize); 4] = [(0, 1), (-1, 1), (1, 0), (1, 1)];

/// Quantized plane: level `1..=ng` inside the mask, 0 outside.
#[derive(Clone, Debug)]
pub struct Levels {
    pub height: usize,
    pub width: usize,
    pub ng: usize,
    pub q: Vec<u16>,
}

impl Levels {
    #[inline]
    pub(crate) fn at(&self, y: isize, x: isize) -> u16 {
        if y < 0 || x < 0 || y as usize >= self.height || x as usize >= self.width {
            0
        } else {
            self.q[y as usize * self.width + x as usize]
        }
    }

    pub(crate) fn roi_pixels(&self) -> usize {
        self.q.iter().filter(|&&l| l > 0).count()
    }
}

/// `floor((x - min) / (max - min) · levels) + 1`, capped at `levels`; a flat
/// ROI is all level 1.
pub fn quantize(plane: &Plane, levels: usize) -> Levels {
    let inside = || plane.values.iter().zip(plane.mask).filter(|p| *p.1).map(|p| *p.0);
    let lo = inside().fold(f64::INFINITY, f64::min);
    let hi = inside().fold(f64::NEG_INFINITY, f64::max);
    let q = plane
        .values
        .iter()
        .zip(plane.mask)
        .map(|(&v, &m)| {
            if !m {
                0
            } else if !(hi > lo) {
                1
            } else {
                let b = ((v - lo) / (hi - lo) * levels as f64).floor() as usize + 1;
                b.min(levels) as u16
            }
        })
        .collect();
    Levels {
        height: plane.height,
        width: plane.width,
        ng: levels,
        q,
    }
}

fn check_plane(plane: &Plane) -> Result<()> {
    let n = plane.height * plane.width;
    if plane.values.len() != n || plane.mask.len() != n {
        return Err(Error::shape(n, plane.values.len().min(plane.mask.len())));
    }
    if plane.values.iter().zip(plane.mask).any(|(v, &m)| m && !v.is_finite()) {
        return Err(Error::DegenerateRoi("ROI holds non-finite intensities".into()));
    }
    let count = plane.mask.iter().filter(|&&m| m).count();
    if count < 2 {
        return Err(Error::DegenerateRoi(format!("ROI has {count} pixels, need at least 2")));
    }
    Ok(())
}

/// All 104 features of one plane, in family order.
pub fn extract_radiomics(plane: &Plane, config: &RadiomicsConfig) -> Result<Vec<f64>> {
    config.validate()?;
    check_plane(plane)?;
    let levels = quantize(plane, config.levels);
    let mut out = Vec::with_capacity(FEATURES_PER_SEQUENCE);
    out.extend(first_order::features(plane, &levels));
    out.extend(shape::features(plane));
    out.extend(glcm::features(&levels, &config.distances));
    out.extend(glrlm::features(&levels));
    out.extend(glszm::features(&levels));
    out.extend(ngtdm::features(&levels));
    out.extend(gldm::features(&levels));
    debug_assert_eq!(out.len(), FEATURES_PER_SEQUENCE);
    Ok(out)
}

/// A square ROI on one slice of a study.
#[derive(Clone, Debug, PartialEq)]
pub struct Roi {
    pub slice: usize,
    pub y0: usize,
    pub x0: usize,
    pub size: usize,
    pub mask: Vec<bool>,
}

impl Roi {
    /// Center of mass of the mask, rounded to the nearest voxel.
    pub fn center_of_mass(&self) -> [usize; 3] {
        let (mut sy, mut sx, mut n) = (0.0, 0.0, 0.0);
        for (i, _) in self.mask.iter().enumerate().filter(|m| *m.1) {
            sy += (i / self.size) as f64;
            sx += (i % self.size) as f64;
            n += 1.0;
        }
        [
            self.slice,
            self.y0 + (sy / n).round() as usize,
            self.x0 + (sx / n).round() as usize,
        ]
    }

    pub fn crop(&self, study: &Study, sequence: Sequence) -> Vec<f64> {
        study.channel(sequence).crop(self.slice, self.y0, self.x0, self.size)
    }
}

/// 104 features per sequence, concatenated T2, ADC, DWI.
pub fn study_radiomics(study: &Study, roi: &Roi, config: &RadiomicsConfig) -> Result<Vec<f64>> {
    let [_, sy, sx] = study.spacing();
    let mut out = Vec::with_capacity(3 * FEATURES_PER_SEQUENCE);
    for seq in Sequence::ALL {
        let values = roi.crop(study, seq);
        let plane = Plane {
            height: roi.size,
            width: roi.size,
            values: &values,
            mask: &roi.mask,
            spacing: [sy, sx],
        };
        out.extend(extract_radiomics(&plane, config)?);
    }
    Ok(out)
}

/// Square window of `size` around `center`, shifted inside the slice; the flag
/// reports whether a shift was needed.
pub fn clamped_window(center: [usize; 3], size: usize, dims: [usize; 3]) -> (usize, usize, bool) {
    let y0 = window_origin(center[1], size, dims[1]);
    let x0 = window_origin(center[2], size, dims[2]);
    let shifted = y0 + size / 2 != center[1] || x0 + size / 2 != center[2];
    (y0, x0, shifted)
}

/// Shannon entropy in bits of a probability vector, zero terms skipped.
pub(crate) fn entropy2(p: impl Iterator<Item = f64>) -> f64 {
    -p.filter(|&v| v > 0.0).map(|v| v * v.log2()).sum::<f64>()
}

/// Size-emphasis statistics shared by run, zone and dependence matrices.
///
/// `m[(i - 1) * cols + (j - 1)]` counts entries of gray level `i` and size `j`.
pub(crate) struct SizeMatrix {
    pub ng: usize,
    pub cols: usize,
    pub m: Vec<f64>,
}

impl SizeMatrix {
    pub fn new(ng: usize, cols: usize) -> Self {
        SizeMatrix {
            ng,
            cols,
            m: vec![0.0; ng * cols],
        }
    }

    pub fn add(&mut self, level: u16, size: usize) {
        self.m[(level as usize - 1) * self.cols + size - 1] += 1.0;
    }

    fn total(&self) -> f64 {
        self.m.iter().sum()
    }

    fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.m.iter().enumerate().filter(|c| *c.1 > 0.0).map(move |(k, &v)| {
            ((k / self.cols + 1) as f64, (k % self.cols + 1) as f64, v)
        })
    }

    /// The 16 statistics in run-length order: short/long emphasis, gray-level
    /// and size non-uniformity (plain and normalized), percentage, gray-level
    /// and size variance, entropy, then the six low/high gray-level emphases.
    pub fn statistics(&self, pixels: f64) -> [f64; 16] {
        let n = self.total();
        let mut gl = vec![0.0; self.ng];
        let mut sz = vec![0.0; self.cols];
        let mut s = [0.0f64; 16];
        let (mut mu_i, mut mu_j) = (0.0, 0.0);
        for (i, j, v) in self.cells() {
            gl[i as usize - 1] += v;
            sz[j as usize - 1] += v;
            let p = v / n;
            mu_i += p * i;
            mu_j += p * j;
            s[0] += p / (j * j);
            s[1] += p * j * j;
            s[10] += p / (i * i);
            s[11] += p * i * i;
            s[12] += p / (i * i * j * j);
            s[13] += p * i * i / (j * j);
            s[14] += p * j * j / (i * i);
            s[15] += p * i * i * j * j;
        }
        let gln: f64 = gl.iter().map(|g| g * g).sum();
        let sn: f64 = sz.iter().map(|g| g * g).sum();
        s[2] = gln / n;
        s[3] = gln / (n * n);
        s[4] = sn / n;
        s[5] = sn / (n * n);
        s[6] = n / pixels;
        for (i, j, v) in self.cells() {
            let p = v / n;
            s[7] += p * (i - mu_i).powi(2);
            s[8] += p * (j - mu_j).powi(2);
        }
        s[9] = entropy2(self.cells().map(|c| c.2 / n));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_sizes_add_up() {
        let sizes: Vec<usize> = FAMILY_SIZES.iter().map(|f| f.1).collect();
        assert_eq!(sizes, vec![19, 10, 24, 16, 16, 5, 14]);
        assert_eq!(feature_names().len(), FEATURES_PER_SEQUENCE);
    }

    #[test]
    fn quantization_spans_levels() {
        let values: Vec<f64> = (0..8).map(|v| v as f64).collect();
        let mask = vec![true; 8];
        let plane = Plane { height: 2, width: 4, values: &values, mask: &mask, spacing: [1.0, 1.0] };
        assert_eq!(quantize(&plane, 4).q, vec![1, 1, 2, 2, 3, 3, 4, 4]);
    }

    #[test]
    fn tiny_roi_is_degenerate() {
        let values = [1.0, 2.0];
        let mask = [true, false];
        let plane = Plane { height: 1, width: 2, values: &values, mask: &mask, spacing: [1.0, 1.0] };
        assert!(matches!(
            extract_radiomics(&plane, &RadiomicsConfig::default()),
            Err(Error::DegenerateRoi(_))
        ));
    }
}
