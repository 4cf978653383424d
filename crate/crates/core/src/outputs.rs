//! Files written by prediction and evaluation.
//!
//! A prediction directory holds `heatmap.f32raw` (the final heatmap, refined
//! unless stage 2 was skipped), `anomaly.f32raw` (unit-resolution anomaly
//! scores) and `candidates.csv`. When stage 2 ran it also holds
//! `stage1_heatmap.f32raw` and `refinement.csv`. Evaluation writes
//! `report.csv`, `cases.csv` and `pr_curve.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::anomaly::anomaly_volume;
use crate::cohort::{read_manifest, study_dir};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, CaseInput, DetectionConfig, EvalReport};
use crate::pipeline::Prediction;
use crate::stage2::candidate_label;
use crate::volume::{load_study_dir, read_volume, sidecar_path, write_volume, Role, Study, Volume};

pub const HEATMAP: &str = "heatmap";
pub const STAGE1_HEATMAP: &str = "stage1_heatmap";
pub const ANOMALY: &str = "anomaly";
pub const CANDIDATES_CSV: &str = "candidates.csv";
pub const REFINEMENT_CSV: &str = "refinement.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const CASES_CSV: &str = "cases.csv";
pub const CURVE_CSV: &str = "pr_curve.csv";

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes every output of one study prediction into `dir`. Candidates of a
/// study with a lesion mask are labelled with in-slice IoU `label_iou` in
/// `refinement.csv`; the column is empty otherwise.
pub fn write_prediction(dir: &Path, study: &Study, p: &Prediction, label_iou: f64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_volume(dir, HEATMAP, p.final_heatmap(), Role::Heatmap)?;
    write_volume(dir, ANOMALY, &anomaly_volume(&p.maps, study.spacing())?, Role::Anomaly)?;

    let mut csv = String::from("slice,row,col,y0,x0,size,mean_score,roi_z,roi_y,roi_x,shifted\n");
    for r in &p.candidates {
        let c = &r.candidate;
        let (y0, x0, size) = c.voxel_rect();
        let [z, y, x] = r.roi_center;
        writeln!(
            csv,
            "{},{},{},{y0},{x0},{size},{},{z},{y},{x},{}",
            c.slice, c.row, c.col, c.mean_score, r.shifted as u8
        )
        .expect("string write");
    }
    write_text(&dir.join(CANDIDATES_CSV), &csv)?;

    let stage2_files = [
        dir.join(format!("{STAGE1_HEATMAP}.f32raw")),
        dir.join(format!("{STAGE1_HEATMAP}.meta.json")),
        dir.join(REFINEMENT_CSV),
    ];
    match &p.refined {
        Some((_, refinements)) => {
            write_volume(dir, STAGE1_HEATMAP, &p.heatmap, Role::Heatmap)?;
            let mut csv = String::from("slice,row,col,stage1_max,stage2_prob,factor,label\n");
            for (r, f) in p.candidates.iter().zip(refinements) {
                let c = &r.candidate;
                let label = match study.lesion_mask {
                    Some(_) => (candidate_label(study, c, label_iou) as u8).to_string(),
                    None => String::new(),
                };
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{label}",
                    c.slice, c.row, c.col, f.stage1_max, f.stage2_prob, f.factor
                )
                .expect("string write");
            }
            write_text(&dir.join(REFINEMENT_CSV), &csv)?;
        }
        None => {
            // A stage-1-only run must not leave stale stage-2 files behind.
            for f in &stage2_files {
                if f.exists() {
                    fs::remove_file(f).map_err(|e| Error::io(f, e))?;
                }
            }
        }
    }
    Ok(())
}

/// Reads `heatmap.f32raw` of every manifest case from `pred_dir/<case>/` and
/// scores it against the cohort's lesion masks.
pub fn evaluate_predictions(pred_dir: &Path, cohort: &Path, config: &DetectionConfig) -> Result<EvalReport> {
    let entries = read_manifest(cohort)?;
    let heatmap_path = |case: &str| pred_dir.join(case).join(format!("{HEATMAP}.f32raw"));
    let missing: Vec<&str> = entries
        .iter()
        .map(|e| e.case.as_str())
        .filter(|c| !heatmap_path(c).is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::io(
            pred_dir,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("missing predictions for cases: {}", missing.join(", ")),
            ),
        ));
    }
    let mut heatmaps: Vec<Volume<f64>> = Vec::with_capacity(entries.len());
    let mut lesions = Vec::with_capacity(entries.len());
    for e in &entries {
        let study = load_study_dir(&study_dir(cohort, &e.case))?;
        let raw = heatmap_path(&e.case);
        let (heat, role) = read_volume(&raw, &sidecar_path(&raw))?;
        if role != Role::Heatmap || heat.dims() != study.dims() {
            return Err(Error::Format(format!(
                "{}: expected a heatmap on the study grid {:?}",
                raw.display(),
                study.dims()
            )));
        }
        heatmaps.push(heat);
        lesions.push(study.lesion_voxel_sets().into_iter().map(|l| l.1).collect::<Vec<_>>());
    }
    let cases: Vec<CaseInput> = entries
        .iter()
        .zip(&heatmaps)
        .zip(lesions)
        .map(|((e, h), l)| CaseInput {
            id: e.case.clone(),
            heatmap: h,
            lesions: l,
        })
        .collect();
    evaluate(&cases, config)
}

/// Writes `report.csv`, `cases.csv` and `pr_curve.csv` into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let lesions: usize = report.cases.iter().map(|c| c.lesions).sum();
    let mut csv = String::from("metric,value\n");
    writeln!(csv, "ap,{}", report.ap).expect("string write");
    writeln!(csv, "auroc,{}", report.auroc).expect("string write");
    writeln!(csv, "score,{}", report.score).expect("string write");
    writeln!(csv, "cases,{}", report.cases.len()).expect("string write");
    writeln!(csv, "lesions,{lesions}").expect("string write");
    write_text(&dir.join(REPORT_CSV), &csv)?;

    let mut csv = String::from("case,label,score,lesions,detections,true_positives\n");
    for c in &report.cases {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            c.id, c.label as u8, c.score, c.lesions, c.detections, c.true_positives
        )
        .expect("string write");
    }
    write_text(&dir.join(CASES_CSV), &csv)?;

    let mut csv = String::from("threshold,precision,recall\n");
    for p in &report.curve {
        writeln!(csv, "{},{},{}", p.threshold, p.precision, p.recall).expect("string write");
    }
    write_text(&dir.join(CURVE_CSV), &csv)
}
