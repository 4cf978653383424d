//! Anomaly maps: 8×8-voxel units scored by 3×3 averaging of stride-8 stage-1
//! predictions, threshold calibration at a target TPR and 2×2 candidates.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stage1::{PredictionCache, Stage1Model};
use crate::volume::{Study, Volume};

/// Side of one anomaly unit in voxels; also the prediction stride feeding it.
pub const UNIT: usize = 8;
/// Units per side of a candidate square.
pub const CANDIDATE_UNITS: usize = 2;

/// In-plane receptive field of a unit averaged over a `window`×`window`
/// neighbourhood of stride-`stride` predictions from `patch`-wide patches.
pub fn receptive_field(patch: usize, stride: usize, window: usize) -> usize {
    patch + (window - 1) * stride
}

/// Span of a `units`×`units` block of anomaly units, including the context
/// every unit sees.
pub fn context_span(patch: usize, stride: usize, units: usize) -> usize {
    receptive_field(patch, stride, 3) + (units - 1) * stride
}

/// Predictions on the stride-8 grid of one slice: `None` where the unit holds
/// no gland voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitGrid {
    pub slice: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<Option<f64>>,
}

impl UnitGrid {
    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.values[r * self.cols + c]
    }
}

/// Scores of one slice's 8×8 units.
#[derive(Clone, Debug, PartialEq)]
pub struct AnomalyMap {
    pub slice: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major unit scores; zero where the unit holds no gland.
    pub scores: Vec<f64>,
    /// Units holding at least one gland voxel.
    pub active: Vec<bool>,
}

impl AnomalyMap {
    pub fn score(&self, r: usize, c: usize) -> f64 {
        self.scores[r * self.cols + c]
    }

    pub fn is_active(&self, r: usize, c: usize) -> bool {
        self.active[r * self.cols + c]
    }

    /// Voxel rectangle `(y0, x0, size)` of unit `(r, c)`.
    pub fn unit_rect(r: usize, c: usize) -> (usize, usize, usize) {
        (r * UNIT, c * UNIT, UNIT)
    }
}

/// Units whose 8×8 block holds at least one gland voxel, per slice.
fn active_units(study: &Study, z: usize) -> (usize, usize, Vec<bool>) {
    let [_, h, w] = study.dims();
    let (rows, cols) = (h / UNIT, w / UNIT);
    let mut active = vec![false; rows * cols];
    for y in 0..rows * UNIT {
        for x in 0..cols * UNIT {
            if study.in_gland(z, y, x) {
                active[(y / UNIT) * cols + x / UNIT] = true;
            }
        }
    }
    (rows, cols, active)
}

/// Stage-1 predictions at the centres of every active unit of every slice.
pub fn predict_unit_grids<T: Scalar>(
    study: &Study,
    model: &Stage1Model<T>,
    cache: &mut PredictionCache,
) -> Result<Vec<UnitGrid>> {
    let [_, h, w] = study.dims();
    if model.patch_size() > h.min(w) {
        return Err(Error::Config(format!("patch size {} exceeds slice {h}×{w}", model.patch_size())));
    }
    let mut grids = Vec::with_capacity(study.dims()[0]);
    let mut centers = Vec::new();
    for z in 0..study.dims()[0] {
        let (rows, cols, active) = active_units(study, z);
        for (i, _) in active.iter().enumerate().filter(|a| *a.1) {
            centers.push([z, (i / cols) * UNIT + UNIT / 2, (i % cols) * UNIT + UNIT / 2]);
        }
        grids.push((rows, cols, active));
    }
    let probs = model.predict_points(study, &centers, cache)?;
    let mut it = probs.into_iter();
    Ok(grids
        .into_iter()
        .enumerate()
        .map(|(z, (rows, cols, active))| UnitGrid {
            slice: z,
            rows,
            cols,
            values: active.iter().map(|&a| if a { it.next() } else { None }).collect(),
        })
        .collect())
}

/// 3×3 average of available predictions around every active unit.
pub fn compute_anomaly_map(grid: &UnitGrid) -> AnomalyMap {
    let (rows, cols) = (grid.rows, grid.cols);
    let mut scores = vec![0.0; rows * cols];
    let active: Vec<bool> = grid.values.iter().map(Option::is_some).collect();
    for r in 0..rows {
        for c in 0..cols {
            if !active[r * cols + c] {
                continue;
            }
            let (mut sum, mut n) = (0.0, 0usize);
            for rr in r.saturating_sub(1)..=(r + 1).min(rows - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(cols - 1) {
                    if let Some(v) = grid.get(rr, cc) {
                        sum += v;
                        n += 1;
                    }
                }
            }
            scores[r * cols + c] = sum / n as f64;
        }
    }
    AnomalyMap {
        slice: grid.slice,
        rows,
        cols,
        scores,
        active,
    }
}

/// Anomaly maps of every slice of a study.
pub fn study_anomaly_maps<T: Scalar>(
    study: &Study,
    model: &Stage1Model<T>,
    cache: &mut PredictionCache,
) -> Result<Vec<AnomalyMap>> {
    Ok(predict_unit_grids(study, model, cache)?
        .par_iter()
        .map(compute_anomaly_map)
        .collect())
}

/// Stacks per-slice maps into a unit-resolution volume.
pub fn anomaly_volume(maps: &[AnomalyMap], spacing: [f64; 3]) -> Result<Volume<f64>> {
    let (rows, cols) = maps.first().map_or((0, 0), |m| (m.rows, m.cols));
    let data = maps.iter().flat_map(|m| m.scores.iter().copied()).collect();
    Volume::new(
        [maps.len(), rows, cols],
        [spacing[0], spacing[1] * UNIT as f64, spacing[2] * UNIT as f64],
        data,
    )
}

/// Ground truth of the active units of one map: positive when at least
/// `min_fraction` of the unit's voxels are lesion.
pub fn unit_labels(study: &Study, map: &AnomalyMap, min_fraction: f64) -> Vec<(f64, bool)> {
    let mut out = Vec::new();
    for r in 0..map.rows {
        for c in 0..map.cols {
            if !map.is_active(r, c) {
                continue;
            }
            let (y0, x0, n) = AnomalyMap::unit_rect(r, c);
            let lesion = (y0..y0 + n)
                .flat_map(|y| (x0..x0 + n).map(move |x| (y, x)))
                .filter(|&(y, x)| study.lesion_at(map.slice, y, x) != 0)
                .count();
            out.push((map.score(r, c), lesion as f64 >= min_fraction * (n * n) as f64));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Calibration {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Highest observed score `T` whose rule `score ≥ T` keeps TPR at or above
/// `r`; FPR can only fall as `T` rises, so that is the least-FPR choice.
pub fn calibrate_threshold(units: &[(f64, bool)], r: f64) -> Result<Calibration> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Config(format!("target TPR must be in (0, 1], got {r}")));
    }
    let pos = units.iter().filter(|u| u.1).count();
    if pos == 0 {
        return Err(Error::DegenerateLabels("calibration has no positive units".into()));
    }
    let neg = units.len() - pos;
    let mut sorted: Vec<(f64, bool)> = units.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let tpr = tp as f64 / pos as f64;
        if tpr >= r {
            let fpr = if neg == 0 { 0.0 } else { fp as f64 / neg as f64 };
            return Ok(Calibration { threshold: t, tpr, fpr });
        }
    }
    unreachable!("the lowest score admits every positive")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub slice: usize,
    /// Top-left unit of the 2×2 square.
    pub row: usize,
    pub col: usize,
    pub mean_score: f64,
}

impl Candidate {
    /// Voxel rectangle `(y0, x0, size)` covered by the square.
    pub fn voxel_rect(&self) -> (usize, usize, usize) {
        (self.row * UNIT, self.col * UNIT, CANDIDATE_UNITS * UNIT)
    }

    pub fn overlaps(&self, other: &Candidate) -> bool {
        self.slice == other.slice && self.row.abs_diff(other.row) < 2 && self.col.abs_diff(other.col) < 2
    }
}

/// Every 2×2 square whose four units are active and score at least `t`.
pub fn hot_squares(map: &AnomalyMap, t: f64) -> Vec<Candidate> {
    let hot = |r: usize, c: usize| map.is_active(r, c) && map.score(r, c) >= t;
    let mut out = Vec::new();
    for r in 0..map.rows.saturating_sub(1) {
        for c in 0..map.cols.saturating_sub(1) {
            if hot(r, c) && hot(r + 1, c) && hot(r, c + 1) && hot(r + 1, c + 1) {
                let mean = (map.score(r, c) + map.score(r + 1, c) + map.score(r, c + 1) + map.score(r + 1, c + 1)) / 4.0;
                out.push(Candidate {
                    slice: map.slice,
                    row: r,
                    col: c,
                    mean_score: mean,
                });
            }
        }
    }
    out
}

/// Hot squares deduplicated greedily: by descending mean (ties row-major),
/// keep a square unless it shares a unit with one already kept.
pub fn detect_candidates(map: &AnomalyMap, t: f64) -> Vec<Candidate> {
    let mut squares = hot_squares(map, t);
    squares.sort_by(|a, b| {
        b.mean_score
            .total_cmp(&a.mean_score)
            .then((a.row, a.col).cmp(&(b.row, b.col)))
    });
    let mut kept: Vec<Candidate> = Vec::new();
    for s in squares {
        if !kept.iter().any(|k| k.overlaps(&s)) {
            kept.push(s);
        }
    }
    kept.sort_by_key(|c| (c.row, c.col));
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> UnitGrid {
        UnitGrid {
            slice: 0,
            rows,
            cols,
            values: (0..rows * cols).map(|i| Some(f(i / cols, i % cols))).collect(),
        }
    }

    #[test]
    fn geometry() {
        assert_eq!(receptive_field(24, 8, 3), 40);
        assert_eq!(context_span(24, 8, 3), 56);
    }

    #[test]
    fn uniform_predictions_stay_uniform() {
        let m = compute_anomaly_map(&grid(5, 6, |_, _| 0.3));
        assert!(m.scores.iter().all(|&s| (s - 0.3).abs() < 1e-15));
    }

    #[test]
    fn single_spike_spreads_to_nine_units() {
        let m = compute_anomaly_map(&grid(7, 7, |r, c| if (r, c) == (3, 3) { 1.0 } else { 0.0 }));
        for r in 0..7usize {
            for c in 0..7usize {
                let near = r.abs_diff(3) <= 1 && c.abs_diff(3) <= 1;
                assert_eq!(m.score(r, c), if near { 1.0 / 9.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn separated_scores_calibrate_between_classes() {
        let units = [(0.1, false), (0.2, false), (0.8, true), (0.9, true)];
        let c = calibrate_threshold(&units, 0.95).unwrap();
        assert_eq!(c, Calibration { threshold: 0.8, tpr: 1.0, fpr: 0.0 });
    }

    #[test]
    fn single_hot_unit_is_no_candidate() {
        let m = compute_anomaly_map(&grid(4, 4, |_, _| 0.0));
        let mut m2 = m.clone();
        m2.scores[5] = 1.0;
        assert!(detect_candidates(&m2, 0.5).is_empty());
        m2.scores[6] = 1.0;
        m2.scores[9] = 1.0;
        m2.scores[10] = 1.0;
        assert_eq!(detect_candidates(&m2, 0.5).len(), 1);
    }
}
