//! Stage-2 false-positive reduction on anomaly-map candidates.
//!
//! Each candidate is described by the 3×3 anomaly units around its strongest
//! unit (plus their mean and std), 104 radiomics features per sequence over
//! its 16×16 block and the fused stage-1 features at the ROI centre of mass.
//! A DFT-selected subset feeds a second boosted classifier whose probability
//! rescales the candidate's heatmap region.

use std::collections::BTreeSet;

use log::info;
use rayon::prelude::*;

use crate::anomaly::{detect_candidates, study_anomaly_maps, AnomalyMap, Candidate};
use crate::dft::{DftConfig, DftSelection};
use crate::error::{Error, Result};
use crate::gbdt::{GbdtModel, GbdtParams};
use crate::metrics::{connected_components, iou};
use crate::radiomics::{clamped_window, study_radiomics, RadiomicsConfig, Roi, FEATURES_PER_SEQUENCE};
use crate::scalar::Scalar;
use crate::stage1::{predict_heatmap, Heatmap, PredictionCache, Stage1Model};
use crate::volume::{Study, Volume};

/// Anomaly block features: 9 units, mean, std.
pub const ANOMALY_FEATURES: usize = 11;
/// Radiomics features over the three sequences.
pub const RADIOMICS_FEATURES: usize = 3 * FEATURES_PER_SEQUENCE;

/// Stage-2 vector length before selection for a given fused stage-1 length.
pub fn stage2_len(fused_len: usize) -> usize {
    ANOMALY_FEATURES + RADIOMICS_FEATURES + fused_len
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage2Config {
    pub radiomics: RadiomicsConfig,
    pub dft: DftConfig,
    pub gbdt: GbdtParams,
    /// Minimum in-slice IoU between a candidate block and a lesion for a
    /// positive label.
    pub label_iou: f64,
    /// Leave out of training the candidates that touch a lesion without
    /// reaching `label_iou`: they are neither true nor false positives.
    pub skip_ambiguous: bool,
    /// Stage-1 level that bounds the connected region a candidate rescales.
    pub region_floor: f64,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config {
            radiomics: RadiomicsConfig::default(),
            dft: DftConfig { bins: 32, keep_k: 500 },
            gbdt: GbdtParams {
                n_trees: 100,
                min_samples_leaf: 5,
                ..GbdtParams::default()
            },
            label_iou: 0.1,
            skip_ambiguous: false,
            region_floor: 0.05,
        }
    }
}

impl Stage2Config {
    pub fn validate(&self) -> Result<()> {
        self.radiomics.validate()?;
        self.dft.validate()?;
        self.gbdt.validate()?;
        if !(self.label_iou > 0.0 && self.label_iou <= 1.0) {
            return Err(Error::Config(format!("label IoU must be in (0, 1], got {}", self.label_iou)));
        }
        if !(self.region_floor > 0.0 && self.region_floor <= 1.0) {
            return Err(Error::Config(format!(
                "region floor must be in (0, 1], got {}",
                self.region_floor
            )));
        }
        Ok(())
    }
}

/// The 3×3 units centred on the candidate's highest unit (ties row-major),
/// row-major with zeros beyond the map, then their mean and population std.
pub fn anomaly_features(map: &AnomalyMap, cand: &Candidate) -> [f64; ANOMALY_FEATURES] {
    let mut best = (cand.row, cand.col);
    for r in cand.row..cand.row + 2 {
        for c in cand.col..cand.col + 2 {
            if map.score(r, c) > map.score(best.0, best.1) {
                best = (r, c);
            }
        }
    }
    let mut out = [0.0; ANOMALY_FEATURES];
    for dr in 0..3 {
        for dc in 0..3 {
            let (r, c) = (best.0 as isize + dr - 1, best.1 as isize + dc - 1);
            if r >= 0 && c >= 0 && (r as usize) < map.rows && (c as usize) < map.cols {
                out[(dr * 3 + dc) as usize] = map.score(r as usize, c as usize);
            }
        }
    }
    let mean = out[..9].iter().sum::<f64>() / 9.0;
    out[9] = mean;
    out[10] = (out[..9].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0).sqrt();
    out
}

/// ROI over the candidate block: gland voxels with stage-1 value at least
/// `threshold`, else all gland voxels, else the whole block.
pub fn candidate_roi(study: &Study, heatmap: &Heatmap, cand: &Candidate, threshold: f64) -> Roi {
    let (y0, x0, size) = cand.voxel_rect();
    let z = cand.slice;
    let coords = || (0..size * size).map(|k| (y0 + k / size, x0 + k % size));
    let gland: Vec<bool> = coords().map(|(y, x)| study.in_gland(z, y, x)).collect();
    let hot: Vec<bool> = coords()
        .zip(&gland)
        .map(|((y, x), &g)| g && heatmap.get(z, y, x) >= threshold)
        .collect();
    let enough = |m: &[bool]| m.iter().filter(|&&v| v).count() >= 2;
    let mask = if enough(&hot) {
        hot
    } else if enough(&gland) {
        gland
    } else {
        vec![true; size * size]
    };
    Roi {
        slice: z,
        y0,
        x0,
        size,
        mask,
    }
}

/// Whether the candidate block overlaps a lesion with in-slice IoU at least
/// `min_iou`.
pub fn candidate_label(study: &Study, cand: &Candidate, min_iou: f64) -> bool {
    let Some(mask) = &study.lesion_mask else {
        return false;
    };
    let (y0, x0, size) = cand.voxel_rect();
    let z = cand.slice;
    let block: Vec<usize> = (0..size * size)
        .map(|k| mask.index(z, y0 + k / size, x0 + k % size))
        .collect();
    let [_, h, w] = study.dims();
    study.lesion_ids().into_iter().any(|id| {
        let lesion: Vec<usize> = (0..h * w)
            .map(|k| mask.index(z, k / w, k % w))
            .filter(|&i| mask.data()[i] == id)
            .collect();
        !lesion.is_empty() && iou(&block, &lesion) >= min_iou
    })
}

/// Whether any voxel of the candidate block is lesion.
pub fn touches_lesion(study: &Study, cand: &Candidate) -> bool {
    let Some(mask) = &study.lesion_mask else {
        return false;
    };
    let (y0, x0, size) = cand.voxel_rect();
    (0..size * size).any(|k| mask.get(cand.slice, y0 + k / size, x0 + k % size) != 0)
}

/// One candidate with its stage-2 description.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateRecord {
    pub candidate: Candidate,
    pub roi_center: [usize; 3],
    /// The 24×24 window at the ROI centre had to be shifted into the slice.
    pub shifted: bool,
    pub features: Vec<f64>,
}

/// Stage-1 outputs of one study that stage 2 consumes.
#[derive(Clone, Debug)]
pub struct StudyAnalysis {
    pub heatmap: Heatmap,
    pub maps: Vec<AnomalyMap>,
    pub candidates: Vec<CandidateRecord>,
}

/// Heatmap, anomaly maps and described candidates of one study.
pub fn analyze_study<T: Scalar>(
    study: &Study,
    stage1: &Stage1Model<T>,
    threshold: f64,
    heatmap_stride: usize,
    radiomics: &RadiomicsConfig,
    cache: &mut PredictionCache,
) -> Result<StudyAnalysis> {
    let heatmap = predict_heatmap(study, stage1, heatmap_stride, cache)?;
    let maps = study_anomaly_maps(study, stage1, cache)?;
    let found: Vec<(usize, Candidate)> = maps
        .iter()
        .enumerate()
        .flat_map(|(k, m)| detect_candidates(m, threshold).into_iter().map(move |c| (k, c)))
        .collect();
    let candidates = found
        .par_iter()
        .map(|&(k, cand)| {
            let roi = candidate_roi(study, &heatmap, &cand, threshold);
            let center = roi.center_of_mass();
            let (_, _, shifted) = clamped_window(center, stage1.patch_size(), study.dims());
            let mut features = Vec::with_capacity(stage2_len(stage1.fused_len()));
            features.extend(anomaly_features(&maps[k], &cand));
            features.extend(study_radiomics(study, &roi, radiomics)?);
            features.extend(stage1.features(study, center)?.iter().map(|v| v.as_f64()));
            Ok(CandidateRecord {
                candidate: cand,
                roi_center: center,
                shifted,
                features,
            })
        })
        .collect::<Result<_>>()?;
    Ok(StudyAnalysis {
        heatmap,
        maps,
        candidates,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage2Dataset {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    /// `(study index, candidate)` of each row.
    pub origin: Vec<(usize, Candidate)>,
}

/// Labelled candidates of `studies`; `caches` holds one prediction cache per
/// study (possibly empty).
pub fn build_stage2_dataset<T: Scalar>(
    studies: &[Study],
    stage1: &Stage1Model<T>,
    threshold: f64,
    heatmap_stride: usize,
    config: &Stage2Config,
    caches: &mut [PredictionCache],
) -> Result<Stage2Dataset> {
    if caches.len() != studies.len() {
        return Err(Error::shape(studies.len(), caches.len()));
    }
    config.validate()?;
    let mut ds = Stage2Dataset {
        rows: Vec::new(),
        labels: Vec::new(),
        origin: Vec::new(),
    };
    for (i, (study, cache)) in studies.iter().zip(caches.iter_mut()).enumerate() {
        let analysis = analyze_study(study, stage1, threshold, heatmap_stride, &config.radiomics, cache)?;
        for rec in analysis.candidates {
            let label = candidate_label(study, &rec.candidate, config.label_iou);
            if !label && config.skip_ambiguous && touches_lesion(study, &rec.candidate) {
                continue;
            }
            ds.labels.push(label);
            ds.origin.push((i, rec.candidate));
            ds.rows.push(rec.features);
        }
    }
    if ds.rows.is_empty() {
        return Err(Error::EmptyStage("no stage-2 candidates at the calibrated threshold".into()));
    }
    info!(
        "stage 2: {} candidates, {} positive",
        ds.rows.len(),
        ds.labels.iter().filter(|&&l| l).count()
    );
    Ok(ds)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage2Model {
    pub selection: DftSelection,
    pub classifier: GbdtModel,
}

impl Stage2Model {
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        self.classifier.predict_proba(&self.selection.apply(features)?)
    }

    pub fn parameter_count(&self) -> usize {
        self.selection.output_len() + self.classifier.parameter_count()
    }
}

pub fn train_stage2(ds: &Stage2Dataset, config: &Stage2Config) -> Result<Stage2Model> {
    config.validate()?;
    let selection = DftSelection::fit(&ds.rows, &ds.labels, &config.dft)?;
    let rows: Vec<Vec<f64>> = ds
        .rows
        .iter()
        .map(|r| selection.apply(r))
        .collect::<Result<_>>()?;
    let classifier = GbdtModel::train(&rows, &ds.labels, &config.gbdt)?;
    Ok(Stage2Model {
        selection,
        classifier,
    })
}

/// How one candidate changed the heatmap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Refinement {
    pub stage1_max: f64,
    pub stage2_prob: f64,
    pub factor: f64,
}

/// Rescales each candidate's region so its stage-1 peak becomes the stage-2
/// probability, clamped to `[0, 1]`.
///
/// A region is the candidate's 16×16 block plus every 6-connected component
/// of stage-1 values at least `floor` touching it. Where regions overlap, the
/// candidate with the higher stage-2 probability (then the earlier one)
/// applies. Regions without stage-1 signal are left alone.
pub fn refine_heatmap(
    heatmap: &Heatmap,
    candidates: &[(Candidate, f64)],
    floor: f64,
) -> (Heatmap, Vec<Refinement>) {
    let components = connected_components(heatmap, floor);
    let mut owner = vec![usize::MAX; heatmap.len()];
    for (k, comp) in components.iter().enumerate() {
        for &i in comp {
            owner[i] = k;
        }
    }
    let mut choice: Vec<Option<(f64, usize)>> = vec![None; heatmap.len()];
    let mut records = Vec::with_capacity(candidates.len());
    for (c, &(cand, p2)) in candidates.iter().enumerate() {
        let (y0, x0, size) = cand.voxel_rect();
        let block: Vec<usize> = (0..size * size)
            .map(|k| heatmap.index(cand.slice, y0 + k / size, x0 + k % size))
            .collect();
        let touched: BTreeSet<usize> = block.iter().map(|&i| owner[i]).filter(|&o| o != usize::MAX).collect();
        let mut region: BTreeSet<usize> = block.into_iter().collect();
        for &k in &touched {
            region.extend(components[k].iter().copied());
        }
        let peak = region.iter().map(|&i| heatmap.data()[i]).fold(0.0, f64::max);
        let factor = if peak > 0.0 { p2 / peak } else { 1.0 };
        records.push(Refinement {
            stage1_max: peak,
            stage2_prob: p2,
            factor,
        });
        if peak > 0.0 {
            for i in region {
                if choice[i].is_none_or(|(q, _)| p2 > q) {
                    choice[i] = Some((p2, c));
                }
            }
        }
    }
    let data = heatmap
        .data()
        .iter()
        .zip(&choice)
        .map(|(&v, ch)| match ch {
            Some((_, c)) => (v * records[*c].factor).clamp(0.0, 1.0),
            None => v,
        })
        .collect();
    let refined = Volume::new(heatmap.dims(), heatmap.spacing(), data).expect("same grid as input");
    (refined, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(scores: Vec<f64>, rows: usize, cols: usize) -> AnomalyMap {
        AnomalyMap {
            slice: 0,
            rows,
            cols,
            active: vec![true; scores.len()],
            scores,
        }
    }

    #[test]
    fn uniform_block() {
        let m = map(vec![0.4; 25], 5, 5);
        let c = Candidate { slice: 0, row: 1, col: 1, mean_score: 0.4 };
        let f = anomaly_features(&m, &c);
        assert!(f[..10].iter().all(|&v| (v - 0.4).abs() < 1e-15));
        assert!(f[10].abs() < 1e-15);
    }

    #[test]
    fn ramp_block_mean_and_std() {
        let m = map((1..=9).map(|k| k as f64 / 10.0).collect(), 3, 3);
        let c = Candidate { slice: 0, row: 0, col: 0, mean_score: 0.3 };
        let f = anomaly_features(&m, &c);
        assert_eq!(f[..9], [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
        assert!((f[9] - 0.5).abs() < 1e-15);
        assert!((f[10] - (60.0f64 / 9.0).sqrt() / 10.0).abs() < 1e-15);
    }

    #[test]
    fn refinement_factor() {
        let heat = Volume::new([1, 16, 16], [1.0; 3], vec![0.5; 256]).unwrap();
        let cand = Candidate { slice: 0, row: 0, col: 0, mean_score: 0.5 };
        let (same, _) = refine_heatmap(&heat, &[(cand, 0.5)], 0.05);
        assert_eq!(same, heat);
        let (zeroed, rec) = refine_heatmap(&heat, &[(cand, 0.0)], 0.05);
        assert!(zeroed.data().iter().all(|&v| v == 0.0));
        assert_eq!(rec[0].stage1_max, 0.5);
    }
}
