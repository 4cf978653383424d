//! End-to-end training and prediction.
//!
//! Training holds out a stratified share of the cohort: stage 1 is trained on
//! the rest, the threshold is calibrated on the held-out anomaly maps and the
//! stage-2 classifier learns from the held-out candidates. A cohort of a
//! single study is used for every step, with a warning.

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::anomaly::{calibrate_threshold, study_anomaly_maps, unit_labels, AnomalyMap, Calibration};
use crate::config::RunConfig;
use crate::container::ModelContainer;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stage1::{train_stage1, Heatmap, PredictionCache, Stage1Report};
use crate::stage2::{analyze_study, build_stage2_dataset, refine_heatmap, train_stage2, CandidateRecord, Refinement};
use crate::volume::Study;

/// Indices of the stage-1 studies and of the held-out studies.
///
/// Lesion and clean studies are shuffled separately and each class gives
/// `round(fraction · n)` studies to the hold-out, at least one when the class
/// has two or more studies and the fraction is positive.
pub fn split_cohort(studies: &[Study], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..studies.len()).filter(|&i| studies[i].has_lesion() == class).collect();
        idx.shuffle(&mut rng);
        let mut k = (fraction * idx.len() as f64).round() as usize;
        if fraction > 0.0 && idx.len() >= 2 {
            k = k.clamp(1, idx.len() - 1);
        } else {
            k = k.min(idx.len().saturating_sub(1));
        }
        held.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    held.sort_unstable();
    (train, held)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub stage1: Stage1Report,
    pub train_studies: usize,
    pub holdout_studies: usize,
    pub calibration_units: usize,
    pub calibration: Calibration,
    pub stage2_candidates: usize,
    pub stage2_positives: usize,
    pub parameter_count: usize,
}

pub fn train_pipeline<T: Scalar>(studies: &[Study], config: &RunConfig) -> Result<(ModelContainer<T>, TrainReport)> {
    config.validate()?;
    if studies.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let (train_idx, mut held_idx) = split_cohort(studies, config.calibration.holdout_fraction, config.seed);
    let mut train_set: Vec<Study> = train_idx.iter().map(|&i| studies[i].clone()).collect();
    if held_idx.is_empty() || !held_idx.iter().any(|&i| studies[i].has_lesion()) {
        warn!("no held-out lesion study: calibration and stage 2 reuse the training studies");
        held_idx = (0..studies.len()).collect();
        train_set = studies.to_vec();
    }
    let held: Vec<Study> = held_idx.iter().map(|&i| studies[i].clone()).collect();
    info!("training on {} studies, {} held out", train_set.len(), held.len());

    let (stage1, stage1_report) = train_stage1::<T>(&train_set, &config.stage1).map_err(|e| e.within("stage1"))?;

    let mut caches: Vec<PredictionCache> = held.iter().map(|_| PredictionCache::default()).collect();
    let mut units = Vec::new();
    for (study, cache) in held.iter().zip(caches.iter_mut()) {
        for map in study_anomaly_maps(study, &stage1, cache).map_err(|e| e.within("anomaly-map"))? {
            units.extend(unit_labels(study, &map, config.calibration.unit_lesion_fraction));
        }
    }
    let calibration =
        calibrate_threshold(&units, config.calibration.target_tpr).map_err(|e| e.within("anomaly-map"))?;
    info!(
        "calibrated threshold {:.4} (TPR {:.3}, FPR {:.3}) over {} units",
        calibration.threshold,
        calibration.tpr,
        calibration.fpr,
        units.len()
    );

    let ds = build_stage2_dataset(
        &held,
        &stage1,
        calibration.threshold,
        config.calibration.heatmap_stride,
        &config.stage2,
        &mut caches,
    )
    .map_err(|e| e.within("stage2"))?;
    let stage2 = train_stage2(&ds, &config.stage2).map_err(|e| e.within("stage2"))?;
    let model = ModelContainer {
        config: config.clone(),
        stage1,
        calibration,
        stage2,
    };
    let report = TrainReport {
        stage1: stage1_report,
        train_studies: train_set.len(),
        holdout_studies: held.len(),
        calibration_units: units.len(),
        calibration,
        stage2_candidates: ds.rows.len(),
        stage2_positives: ds.labels.iter().filter(|&&l| l).count(),
        parameter_count: model.parameter_count(),
    };
    Ok((model, report))
}

/// Outputs for one study.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub heatmap: Heatmap,
    pub maps: Vec<AnomalyMap>,
    pub candidates: Vec<CandidateRecord>,
    /// Present unless stage 2 was skipped: refined heatmap and, per
    /// candidate, how it changed it.
    pub refined: Option<(Heatmap, Vec<Refinement>)>,
}

impl Prediction {
    /// The final heatmap: refined when available.
    pub fn final_heatmap(&self) -> &Heatmap {
        self.refined.as_ref().map_or(&self.heatmap, |r| &r.0)
    }
}

pub fn predict_study<T: Scalar>(model: &ModelContainer<T>, study: &Study, stage1_only: bool) -> Result<Prediction> {
    let mut cache = PredictionCache::default();
    let analysis = analyze_study(
        study,
        &model.stage1,
        model.calibration.threshold,
        model.config.calibration.heatmap_stride,
        &model.config.stage2.radiomics,
        &mut cache,
    )
    .map_err(|e| e.within("stage1"))?;
    let refined = if stage1_only {
        None
    } else {
        let scored = analysis
            .candidates
            .iter()
            .map(|c| Ok((c.candidate, model.stage2.predict(&c.features)?)))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.within("stage2"))?;
        Some(refine_heatmap(&analysis.heatmap, &scored, model.config.stage2.region_floor))
    };
    Ok(Prediction {
        heatmap: analysis.heatmap,
        maps: analysis.maps,
        candidates: analysis.candidates,
        refined,
    })
}
