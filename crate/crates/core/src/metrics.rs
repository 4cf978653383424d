//! Lesion-level average precision, patient-level AUROC and their mean.
//!
//! Lesion candidates are the 6-connected components of a thresholded heatmap,
//! each scored by its maximum. Within a study, detections claim the unmatched
//! ground-truth lesion of highest IoU (at least `iou_min`) in descending score
//! order; the pooled ranking then yields precision/recall at every distinct
//! score and AP is the step sum `Σ (R_n - R_{n-1}) P_n`.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::volume::Volume;

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionConfig {
    pub min_prob: f64,
    pub min_voxels: usize,
    pub iou_min: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            min_prob: 0.05,
            min_voxels: 8,
            iou_min: 0.1,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_prob) || !(self.iou_min > 0.0 && self.iou_min <= 1.0) {
            return Err(Error::Config(format!(
                "detection min_prob {} must be in [0, 1] and iou_min {} in (0, 1]",
                self.min_prob, self.iou_min
            )));
        }
        Ok(())
    }
}

/// A scored connected component, voxel indices ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub voxels: Vec<usize>,
    pub score: f64,
}

/// 6-connected components of voxels with value at least `threshold`, in scan
/// order of their first voxel, each sorted ascending.
pub fn connected_components(vol: &Volume<f64>, threshold: f64) -> Vec<Vec<usize>> {
    let [d, h, w] = vol.dims();
    let data = vol.data();
    let mut seen = vec![false; data.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..data.len() {
        if seen[start] || !(data[start] >= threshold) {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            comp.push(i);
            let [z, y, x] = vol.coords(i);
            let mut visit = |j: usize| {
                if !seen[j] && data[j] >= threshold {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if z > 0 {
                visit(i - h * w);
            }
            if z + 1 < d {
                visit(i + h * w);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

pub fn extract_detections(heatmap: &Volume<f64>, min_prob: f64, min_voxels: usize) -> Vec<Detection> {
    connected_components(heatmap, min_prob)
        .into_iter()
        .filter(|c| c.len() >= min_voxels.max(1))
        .map(|voxels| {
            let score = voxels.iter().map(|&i| heatmap.data()[i]).fold(0.0, f64::max);
            Detection { voxels, score }
        })
        .collect()
}

/// IoU of two ascending voxel index sets.
pub fn iou(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Ranking of detections: score descending, then volume descending, then
/// first voxel ascending.
fn rank_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.voxels.len().cmp(&a.voxels.len()))
        .then(a.voxels.first().cmp(&b.voxels.first()))
}

/// Detections and ground-truth lesions of one study.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CaseDetections {
    pub detections: Vec<Detection>,
    pub lesions: Vec<Vec<usize>>,
}

/// Scores of the detections of one study with their hit flags.
pub fn match_case(case: &CaseDetections, iou_min: f64) -> Vec<(f64, bool)> {
    let mut order: Vec<&Detection> = case.detections.iter().collect();
    order.sort_by(|a, b| rank_order(a, b));
    let mut taken = vec![false; case.lesions.len()];
    order
        .into_iter()
        .map(|d| {
            let best = case
                .lesions
                .iter()
                .enumerate()
                .filter(|(k, _)| !taken[*k])
                .map(|(k, l)| (k, iou(&d.voxels, l)))
                .filter(|&(_, v)| v >= iou_min)
                .fold(None, |acc: Option<(usize, f64)>, c| match acc {
                    Some(a) if a.1 >= c.1 => Some(a),
                    _ => Some(c),
                });
            if let Some((k, _)) = best {
                taken[k] = true;
            }
            (d.score, best.is_some())
        })
        .collect()
}

/// A point on the precision/recall curve at one score threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApResult {
    pub ap: f64,
    pub curve: Vec<PrPoint>,
}

/// AP over scored hits given `total_lesions` ground-truth lesions.
pub fn average_precision(hits: &[(f64, bool)], total_lesions: usize) -> Result<ApResult> {
    if total_lesions == 0 {
        return Err(Error::DegenerateGroundTruth("no ground-truth lesions in the cohort".into()));
    }
    let mut sorted = hits.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp, mut ap, mut prev_recall) = (0usize, 0usize, 0.0, 0.0);
    let mut curve = Vec::new();
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
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / total_lesions as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        curve.push(PrPoint {
            threshold: t,
            precision,
            recall,
        });
    }
    Ok(ApResult { ap, curve })
}

pub fn match_and_ap(cases: &[CaseDetections], iou_min: f64) -> Result<ApResult> {
    let hits: Vec<(f64, bool)> = cases.iter().flat_map(|c| match_case(c, iou_min)).collect();
    average_precision(&hits, cases.iter().map(|c| c.lesions.len()).sum())
}

/// Probability that a random positive outscores a random negative, ties ½,
/// via midranks.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(labels.len(), scores.len()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels(format!(
            "AUROC needs both classes, got {pos} positive and {neg} negative cases"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0;
        rank_sum += midrank * order[i..j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j;
    }
    Ok((rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos * neg) as f64)
}

pub fn picai_score(ap: f64, auroc: f64) -> f64 {
    (ap + auroc) / 2.0
}

/// Per-case outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseScore {
    pub id: String,
    pub label: bool,
    pub score: f64,
    pub lesions: usize,
    pub detections: usize,
    pub true_positives: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub ap: f64,
    pub auroc: f64,
    pub score: f64,
    pub curve: Vec<PrPoint>,
    pub cases: Vec<CaseScore>,
}

/// One case to evaluate: its heatmap and ground-truth lesion voxel sets.
pub struct CaseInput<'a> {
    pub id: String,
    pub heatmap: &'a Volume<f64>,
    pub lesions: Vec<Vec<usize>>,
}

/// Full evaluation: patient score is the heatmap maximum, patient label is
/// whether any lesion exists.
pub fn evaluate(cases: &[CaseInput], config: &DetectionConfig) -> Result<EvalReport> {
    config.validate()?;
    let mut all = Vec::with_capacity(cases.len());
    let mut rows = Vec::with_capacity(cases.len());
    for c in cases {
        let dets = CaseDetections {
            detections: extract_detections(c.heatmap, config.min_prob, config.min_voxels),
            lesions: c.lesions.clone(),
        };
        let hits = match_case(&dets, config.iou_min);
        rows.push(CaseScore {
            id: c.id.clone(),
            label: !c.lesions.is_empty(),
            score: c.heatmap.data().iter().copied().fold(0.0, f64::max),
            lesions: c.lesions.len(),
            detections: hits.len(),
            true_positives: hits.iter().filter(|h| h.1).count(),
        });
        all.extend(hits);
    }
    let ap = average_precision(&all, cases.iter().map(|c| c.lesions.len()).sum())?;
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let labels: Vec<bool> = rows.iter().map(|r| r.label).collect();
    let auc = auroc(&scores, &labels)?;
    Ok(EvalReport {
        ap: ap.ap,
        auroc: auc,
        score: picai_score(ap.ap, auc),
        curve: ap.curve,
        cases: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_ranked_list() {
        let ap = average_precision(&[(0.9, true), (0.8, false), (0.7, true)], 2).unwrap();
        assert!((ap.ap - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn cube_overlap() {
        let a: Vec<usize> = (0..8).collect();
        let b: Vec<usize> = (4..12).collect();
        assert!((iou(&a, &b) - 4.0 / 12.0).abs() < 1e-15);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a[..2], &b[4..]), 0.0);
    }

    #[test]
    fn auroc_with_tie() {
        let s = [0.1, 0.4, 0.4, 0.8, 0.3, 0.9];
        let l = [false, true, false, true, false, true];
        // Pairs: positives {0.4, 0.8, 0.9} vs negatives {0.1, 0.4, 0.3}.
        assert!((auroc(&s, &l).unwrap() - 8.5 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn picai_reference_rows() {
        assert!((picai_score(0.407, 0.807) - 0.607).abs() < 1e-12);
        assert!((picai_score(0.374, 0.822) - 0.598).abs() < 1e-12);
    }

    #[test]
    fn gt_lesion_matched_once() {
        let lesion: Vec<usize> = (0..10).collect();
        let case = CaseDetections {
            detections: vec![
                Detection { voxels: (0..10).collect(), score: 0.9 },
                Detection { voxels: (0..9).collect(), score: 0.8 },
            ],
            lesions: vec![lesion],
        };
        assert_eq!(match_case(&case, 0.1), vec![(0.9, true), (0.8, false)]);
    }
}
