//! Per-slice square patch sampling and labelling.
//!
//! A patch of even size `S` centred at in-plane voxel `c` covers
//! `[c - S/2, c + S/2)`. Its label comes from the central 8×8 block
//! `[c - 4, c + 4)`: positive iff that block touches the lesion mask.
//! Sampling grids are anchored at coordinate 4 so that the stride-8 grid lands
//! on the centres of the 8×8 anomaly units.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::volume::{Sequence, Study};

/// Side of the central labelling block, equal to the anomaly unit size.
pub const CENTER_BLOCK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PatchLabel {
    Positive,
    Negative,
    Unlabeled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    /// `(z, y, x)` voxel coordinate of the centre.
    pub center: [usize; 3],
    pub size: usize,
    pub sequence: Sequence,
    /// `size × size` row-major intensities.
    pub pixels: Vec<f64>,
    pub label: PatchLabel,
}

/// Stride between positive tiles for a fractional `overlap` (0.25 → 18 for 24).
pub fn positive_stride(size: usize, overlap: f64) -> usize {
    ((size as f64 * (1.0 - overlap)).floor() as usize).max(1)
}

/// Tile centres covering `[lo, hi]` with central blocks, centred on the span.
fn tile_axis(lo: usize, hi: usize, stride: usize) -> impl Iterator<Item = usize> {
    let extent = hi - lo + 1;
    let n = extent.saturating_sub(CENTER_BLOCK).div_ceil(stride) + 1;
    // Twice the first centre, so odd spans stay exact before halving.
    let first2 = (lo + hi + 1) as i64 - ((n - 1) * stride) as i64;
    (0..n).map(move |k| ((first2 + 2 * (k * stride) as i64).max(0) / 2) as usize)
}

/// Whether a patch centred at `center` lies fully inside `[0, dim)`.
pub fn fits(center: usize, size: usize, dim: usize) -> bool {
    center >= size / 2 && center + (size - size / 2) <= dim
}

/// Coordinates of the sampling grid with the given stride along an axis.
pub fn grid_coords(dim: usize, stride: usize) -> impl Iterator<Item = usize> {
    let anchor = (CENTER_BLOCK / 2) % stride;
    (anchor..dim).step_by(stride)
}

/// Label of a patch centred at `(z, y, x)` by the central-block rule.
pub fn label_at(study: &Study, z: usize, y: usize, x: usize) -> PatchLabel {
    let Some(mask) = &study.lesion_mask else {
        return PatchLabel::Unlabeled;
    };
    let half = CENTER_BLOCK / 2;
    let (y0, y1) = (y.saturating_sub(half), (y + half).min(mask.height()));
    let (x0, x1) = (x.saturating_sub(half), (x + half).min(mask.width()));
    for yy in y0..y1 {
        for xx in x0..x1 {
            if mask.get(z, yy, xx) != 0 {
                return PatchLabel::Positive;
            }
        }
    }
    PatchLabel::Negative
}

/// Centres of positive tiles laid over every annotated lesion slice.
///
/// Per slice, the fewest tiles at `positive_stride(size, overlap)` whose
/// central blocks span the lesion bounding box are laid out symmetrically
/// about its centre. Centres are shifted inward so the patch stays in bounds,
/// and only tiles whose central block touches the lesion are kept.
pub fn positive_centers(study: &Study, size: usize, overlap: f64) -> Vec<[usize; 3]> {
    let Some(mask) = &study.lesion_mask else {
        return Vec::new();
    };
    let [depth, h, w] = mask.dims();
    let stride = positive_stride(size, overlap);
    let clamp = |c: usize, dim: usize| c.clamp(size / 2, dim - (size - size / 2));
    let mut out = BTreeSet::new();
    for z in 0..depth {
        let slice = mask.slice(z);
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for (i, &v) in slice.iter().enumerate() {
            if v == 0 {
                continue;
            }
            let (y, x) = (i / w, i % w);
            bbox = Some(match bbox {
                None => (y, y, x, x),
                Some((a, b, c, d)) => (a.min(y), b.max(y), c.min(x), d.max(x)),
            });
        }
        let Some((y0, y1, x0, x1)) = bbox else {
            continue;
        };
        for cy in tile_axis(y0, y1, stride) {
            for cx in tile_axis(x0, x1, stride) {
                let (py, px) = (clamp(cy, h), clamp(cx, w));
                if label_at(study, z, py, px) == PatchLabel::Positive {
                    out.insert([z, py, px]);
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Centres on the stride grid that lie inside the gland with the whole patch
/// inside the volume.
pub fn gland_grid_centers(study: &Study, size: usize, stride: usize) -> Vec<[usize; 3]> {
    let [_, h, w] = study.dims();
    let mut out = Vec::new();
    for z in study.gland_slices() {
        for y in grid_coords(h, stride).filter(|&y| fits(y, size, h)) {
            for x in grid_coords(w, stride).filter(|&x| fits(x, size, w)) {
                if study.in_gland(z, y, x) {
                    out.push([z, y, x]);
                }
            }
        }
    }
    out
}

/// Extracts labelled patches of one sequence: dense positive tiles over the
/// lesions plus gland patches on the `stride` grid.
pub fn extract_patches(
    study: &Study,
    sequence: Sequence,
    size: usize,
    stride: usize,
    positive_overlap: f64,
) -> Result<Vec<Patch>> {
    let [_, h, w] = study.dims();
    if size == 0 || size > h || size > w {
        return Err(Error::Config(format!(
            "patch size {size} exceeds slice dims {h}×{w}"
        )));
    }
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&positive_overlap) {
        return Err(Error::Config(format!(
            "positive overlap must be in [0, 1), got {positive_overlap}"
        )));
    }
    let gland_slices: BTreeSet<usize> = study.gland_slices().into_iter().collect();
    let mut centers: BTreeSet<[usize; 3]> = positive_centers(study, size, positive_overlap)
        .into_iter()
        .filter(|c| gland_slices.contains(&c[0]))
        .collect();
    centers.extend(gland_grid_centers(study, size, stride));

    let volume = study.channel(sequence);
    Ok(centers
        .into_iter()
        .map(|[z, y, x]| Patch {
            center: [z, y, x],
            size,
            sequence,
            pixels: volume.crop(z, y - size / 2, x - size / 2, size),
            label: label_at(study, z, y, x),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Volume;

    fn study(h: usize, w: usize, lesion: Option<Vec<(usize, usize)>>) -> Study {
        let vol = |v: f64| Volume::filled([1, h, w], [1.0, 1.0, 1.0], v).unwrap();
        let gland = Volume::filled([1, h, w], [1.0, 1.0, 1.0], 1u8).unwrap();
        let lesion = lesion.map(|pts| {
            let mut m = Volume::filled([1, h, w], [1.0, 1.0, 1.0], 0u16).unwrap();
            for (y, x) in pts {
                m.set(0, y, x, 1);
            }
            m
        });
        Study::new("s", vol(1.0), vol(2.0), vol(3.0), gland, lesion).unwrap()
    }

    #[test]
    fn stride_for_quarter_overlap() {
        assert_eq!(positive_stride(24, 0.25), 18);
        assert_eq!(positive_stride(32, 0.25), 24);
    }

    #[test]
    fn empty_lesion_mask_has_no_positives() {
        let s = study(64, 64, Some(vec![]));
        let patches = extract_patches(&s, Sequence::T2, 24, 8, 0.25).unwrap();
        assert!(!patches.is_empty());
        assert!(patches.iter().all(|p| p.label == PatchLabel::Negative));
    }

    #[test]
    fn grid_count_matches_brute_force() {
        let s = study(64, 64, None);
        let got = gland_grid_centers(&s, 24, 8).len();
        // Every voxel whose patch fits and that lies on the anchor-4 lattice.
        let mut brute = 0;
        for y in 0..64usize {
            for x in 0..64usize {
                let on_grid = y % 8 == 4 && x % 8 == 4;
                let inside = y >= 12 && y + 12 <= 64 && x >= 12 && x + 12 <= 64;
                if on_grid && inside {
                    brute += 1;
                }
            }
        }
        assert_eq!(got, brute);
        // Closed form: centres 12..=52 congruent to 4 mod 8 → 6 per axis.
        assert_eq!(got, 36);
    }

    #[test]
    fn oversize_patch_is_config_error() {
        let s = study(16, 16, None);
        assert!(matches!(
            extract_patches(&s, Sequence::T2, 24, 8, 0.25),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn positive_tiles_cover_lesion_and_stay_in_bounds() {
        let pts: Vec<(usize, usize)> = (2..20)
            .flat_map(|y| (30..50).map(move |x| (y, x)))
            .collect();
        let s = study(64, 64, Some(pts));
        let centers = positive_centers(&s, 24, 0.25);
        assert!(!centers.is_empty());
        for &[z, y, x] in &centers {
            assert!(fits(y, 24, 64) && fits(x, 24, 64));
            assert_eq!(label_at(&s, z, y, x), PatchLabel::Positive);
        }
    }

    #[test]
    fn patches_never_cross_the_boundary() {
        let s = study(40, 40, Some(vec![(0, 0), (39, 39)]));
        for p in extract_patches(&s, Sequence::Adc, 24, 3, 0.25).unwrap() {
            assert_eq!(p.pixels.len(), 24 * 24);
            assert!(fits(p.center[1], 24, 40) && fits(p.center[2], 24, 40));
            assert!(p.pixels.iter().all(|&v| v == 2.0));
        }
    }
}
