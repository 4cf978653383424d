//! Stage-1 detector: per-sequence RadHop features, DFT selection, fusion and
//! a two-step gradient-boosted classifier, applied densely over the gland.
//!
//! Training:
//!
//! 1. positives tile every lesion slice; negatives are drawn at random from
//!    the gland grid at `neg_pos_ratio` per positive;
//! 2. one RadHop model per sequence is fitted on those patches (topped up
//!    with extra gland patches to `radhop_fit_patches`), each followed by a
//!    DFT selection, and the selections are fused T2, ADC, DWI;
//! 3. the step-1 classifier is trained on that set;
//! 4. every gland-grid negative gets a soft label: out-of-fold probabilities
//!    for the negatives of the step-1 set, step-1 predictions for the rest;
//! 5. negatives are resampled by soft-label bin with exponentially decaying
//!    counts and the step-2 classifier, the deployed one, is trained on them.

use std::collections::{BTreeMap, BTreeSet};

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dft::{DftConfig, DftSelection};
use crate::error::{Error, Result};
use crate::gbdt::{cross_predict, GbdtModel, GbdtParams};
use crate::patches::{gland_grid_centers, grid_coords, label_at, positive_centers, PatchLabel};
use crate::radhop::{RadHopConfig, RadHopModel};
use crate::scalar::Scalar;
use crate::volume::{window_origin, Sequence, Study, Volume};

/// Voxel-wise stage-1 probabilities on the T2 grid.
pub type Heatmap = Volume<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct MiningConfig {
    pub lambda: f64,
    pub bins: usize,
    pub neg_pos_ratio: f64,
    /// Negatives kept for step 2; `None` means `neg_pos_ratio` × positives.
    pub total_negatives: Option<usize>,
    pub folds: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            lambda: 0.4,
            bins: 10,
            neg_pos_ratio: 4.0,
            total_negatives: None,
            folds: 5,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.bins < 2 {
            return Err(Error::Config(format!("need at least 2 mining bins, got {}", self.bins)));
        }
        if !(self.neg_pos_ratio > 0.0 && self.neg_pos_ratio.is_finite()) {
            return Err(Error::Config(format!(
                "neg_pos_ratio must be positive, got {}",
                self.neg_pos_ratio
            )));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Config {
    pub radhop: RadHopConfig,
    pub dft: DftConfig,
    pub gbdt: GbdtParams,
    pub mining: MiningConfig,
    pub positive_overlap: f64,
    /// Stride of the gland grid negatives are drawn from.
    pub negative_stride: usize,
    /// Patches used to fit each RadHop model.
    pub radhop_fit_patches: usize,
    pub seed: u64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            radhop: RadHopConfig::default(),
            dft: DftConfig::default(),
            gbdt: GbdtParams::default(),
            mining: MiningConfig::default(),
            positive_overlap: 0.67,
            negative_stride: 8,
            radhop_fit_patches: 2000,
            seed: 0,
        }
    }
}

impl Stage1Config {
    pub fn validate(&self) -> Result<()> {
        self.radhop.validate()?;
        self.dft.validate()?;
        self.gbdt.validate()?;
        self.mining.validate()?;
        if !(0.0..1.0).contains(&self.positive_overlap) {
            return Err(Error::Config(format!(
                "positive overlap must be in [0, 1), got {}",
                self.positive_overlap
            )));
        }
        if self.negative_stride == 0 {
            return Err(Error::Config("negative stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// A patch location in a cohort.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Site {
    pub study: usize,
    pub center: [usize; 3],
}

/// Labelled sites of the step-1 training set.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub sites: Vec<Site>,
    pub labels: Vec<bool>,
}

impl SampleSet {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Gland-grid sites of a study whose centre block misses every lesion.
fn negative_sites(study: &Study, index: usize, size: usize, stride: usize) -> Vec<Site> {
    gland_grid_centers(study, size, stride)
        .into_iter()
        .filter(|&[z, y, x]| label_at(study, z, y, x) != PatchLabel::Positive)
        .map(|center| Site { study: index, center })
        .collect()
}

/// Dense positives plus `neg_pos_ratio` random gland negatives per positive.
pub fn sample_step1_training(studies: &[Study], config: &Stage1Config) -> Result<SampleSet> {
    let size = config.radhop.patch_size;
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (i, study) in studies.iter().enumerate() {
        let slices: BTreeSet<usize> = study.gland_slices().into_iter().collect();
        positives.extend(
            positive_centers(study, size, config.positive_overlap)
                .into_iter()
                .filter(|c| slices.contains(&c[0]))
                .map(|center| Site { study: i, center }),
        );
        negatives.extend(negative_sites(study, i, size, config.negative_stride));
    }
    if positives.is_empty() {
        return Err(Error::DegenerateLabels("cohort yields no positive patches".into()));
    }
    let want = (positives.len() as f64 * config.mining.neg_pos_ratio).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    negatives.shuffle(&mut rng);
    negatives.truncate(want);
    negatives.sort();
    if negatives.is_empty() {
        return Err(Error::DegenerateLabels("cohort yields no negative patches".into()));
    }
    let labels = positives
        .iter()
        .map(|_| true)
        .chain(negatives.iter().map(|_| false))
        .collect();
    positives.extend(negatives);
    Ok(SampleSet {
        sites: positives,
        labels,
    })
}

/// Per-bin targets proportional to `exp(-λ(i-1))`, `i = 1..bins`, summing to
/// `total` by largest-remainder rounding (ties to the lower bin).
pub fn bin_targets(total: usize, bins: usize, lambda: f64) -> Vec<usize> {
    let weights: Vec<f64> = (0..bins)
        .map(|i| if i == 0 { 1.0 } else { (-lambda * i as f64).exp() })
        .collect();
    largest_remainder(total, &weights)
}

fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if total == 0 || !(sum > 0.0) {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

/// Soft-label bin of a probability among `bins` equal-width bins on `[0, 1]`.
pub fn soft_label_bin(p: f64, bins: usize) -> usize {
    ((p.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1)
}

/// Chooses `total` negatives by soft-label bin.
///
/// Bin 1 holds the lowest soft labels. Bins that cannot meet their target
/// give their shortfall to the bins with spare samples, in proportion to those
/// bins' weights, until the total is met or every bin is exhausted. Returns
/// ascending indices into `soft`.
pub fn hard_negative_resample(
    soft: &[f64],
    total: usize,
    config: &MiningConfig,
    seed: u64,
) -> Result<Vec<usize>> {
    config.validate()?;
    if soft.is_empty() {
        return Err(Error::Config("hard negative mining needs at least one negative".into()));
    }
    let bins = config.bins;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for (i, &p) in soft.iter().enumerate() {
        members[soft_label_bin(p, bins)].push(i);
    }
    let weights: Vec<f64> = (0..bins)
        .map(|i| if i == 0 { 1.0 } else { (-config.lambda * i as f64).exp() })
        .collect();
    let mut take = vec![0usize; bins];
    let mut remaining = total.min(soft.len());
    loop {
        let open: Vec<usize> = (0..bins).filter(|&b| take[b] < members[b].len()).collect();
        if remaining == 0 || open.is_empty() {
            break;
        }
        let w: Vec<f64> = open.iter().map(|&b| weights[b]).collect();
        let mut share = largest_remainder(remaining, &w);
        if share.iter().all(|&s| s == 0) {
            // Weights underflowed to zero outside the first open bin.
            share[0] = remaining;
        }
        for (&b, s) in open.iter().zip(share) {
            let got = s.min(members[b].len() - take[b]);
            take[b] += got;
            remaining -= got;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(total);
    for (m, &k) in members.iter_mut().zip(&take) {
        m.shuffle(&mut rng);
        chosen.extend_from_slice(&m[..k]);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Deployed stage-1 artifacts: one extractor and selection per sequence and
/// the step-2 classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Model<T> {
    pub radhop: [RadHopModel<T>; 3],
    pub selections: [DftSelection; 3],
    pub classifier: GbdtModel,
}

/// Counts gathered while training stage 1.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Stage1Report {
    pub positives: usize,
    pub step1_negatives: usize,
    pub mining_pool: usize,
    pub step2_negatives: usize,
    pub mined_bins: Vec<usize>,
}

/// `size×size` patch of one sequence centred at `center`, shifted to stay
/// inside the slice.
pub fn patch_at<T: Scalar>(study: &Study, sequence: Sequence, center: [usize; 3], size: usize) -> Vec<T> {
    let vol = study.channel(sequence);
    let [z, y, x] = center;
    let y0 = window_origin(y, size, vol.height());
    let x0 = window_origin(x, size, vol.width());
    vol.crop(z, y0, x0, size).into_iter().map(T::of).collect()
}

impl<T: Scalar> Stage1Model<T> {
    pub fn patch_size(&self) -> usize {
        self.radhop[0].config().patch_size
    }

    pub fn fused_len(&self) -> usize {
        self.selections.iter().map(|s| s.output_len()).sum()
    }

    /// Fused selected features at one site.
    pub fn features(&self, study: &Study, center: [usize; 3]) -> Result<Vec<T>> {
        let size = self.patch_size();
        let mut out = Vec::with_capacity(self.fused_len());
        for (k, seq) in Sequence::ALL.into_iter().enumerate() {
            let raw = self.radhop[k].transform(&patch_at::<T>(study, seq, center, size))?;
            self.selections[k].apply_into(&raw, &mut out)?;
        }
        Ok(out)
    }

    pub fn features_batch(&self, studies: &[Study], sites: &[Site]) -> Result<Vec<Vec<T>>> {
        sites
            .par_iter()
            .map(|s| self.features(&studies[s.study], s.center))
            .collect()
    }

    pub fn predict_at(&self, study: &Study, center: [usize; 3]) -> Result<f64> {
        self.classifier.predict_proba(&self.features(study, center)?)
    }

    /// Probabilities at `centers`, reusing and filling `cache`.
    pub fn predict_points(
        &self,
        study: &Study,
        centers: &[[usize; 3]],
        cache: &mut PredictionCache,
    ) -> Result<Vec<f64>> {
        let missing: Vec<[usize; 3]> = centers
            .iter()
            .filter(|c| !cache.values.contains_key(*c))
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let fresh: Vec<f64> = missing
            .par_iter()
            .map(|&c| self.predict_at(study, c))
            .collect::<Result<_>>()?;
        cache.values.extend(missing.into_iter().zip(fresh));
        Ok(centers.iter().map(|c| cache.values[c]).collect())
    }

    pub fn parameter_count(&self) -> usize {
        self.radhop.iter().map(RadHopModel::count_parameters).sum::<usize>()
            + self.selections.iter().map(|s| s.output_len()).sum::<usize>()
            + self.classifier.parameter_count()
    }

    /// Operations to score one voxel site.
    pub fn flops_per_site(&self) -> u64 {
        self.radhop.iter().map(RadHopModel::flops_per_patch).sum::<u64>()
            + self.classifier.flops_per_prediction()
    }
}

/// Stage-1 probabilities already computed for one study, keyed by centre.
#[derive(Clone, Debug, Default)]
pub struct PredictionCache {
    pub values: BTreeMap<[usize; 3], f64>,
}

/// Grid point whose nearest-cell contains coordinate `v` along one axis.
fn nearest_grid(v: usize, stride: usize, dim: usize) -> usize {
    let anchor = grid_coords(dim, stride).next().unwrap_or(0);
    let k = (v + stride / 2).saturating_sub(anchor) / stride;
    let last = (dim - 1 - anchor) / stride;
    anchor + k.min(last) * stride
}

/// Nearest stride-grid point of every gland voxel, in voxel order.
fn gland_grid_assignment(study: &Study, stride: usize) -> Vec<(usize, [usize; 3])> {
    let [d, h, w] = study.dims();
    let mut out = Vec::new();
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if study.in_gland(z, y, x) {
                    let c = [z, nearest_grid(y, stride, h), nearest_grid(x, stride, w)];
                    out.push((study.gland_mask.index(z, y, x), c));
                }
            }
        }
    }
    out
}

/// Dense stage-1 heatmap: predictions on the stride grid, each gland voxel
/// taking the value of its nearest grid point, zero outside the gland.
pub fn predict_heatmap<T: Scalar>(
    study: &Study,
    model: &Stage1Model<T>,
    stride: usize,
    cache: &mut PredictionCache,
) -> Result<Heatmap> {
    if stride == 0 {
        return Err(Error::Config("heatmap stride must be at least 1".into()));
    }
    let size = model.patch_size();
    let [_, h, w] = study.dims();
    if size > h || size > w {
        return Err(Error::Config(format!("patch size {size} exceeds slice {h}×{w}")));
    }
    let assignment = gland_grid_assignment(study, stride);
    if assignment.is_empty() {
        return Err(Error::Config(format!("study {} has an empty gland mask", study.patient_id)));
    }
    let centers: Vec<[usize; 3]> = assignment.iter().map(|a| a.1).collect();
    let probs = model.predict_points(study, &centers, cache)?;
    let mut heat = Volume::filled(study.dims(), study.spacing(), 0.0)?;
    for ((index, _), p) in assignment.iter().zip(probs) {
        heat.data_mut()[*index] = p;
    }
    Ok(heat)
}

/// Trains stage 1 on `studies`.
pub fn train_stage1<T: Scalar>(
    studies: &[Study],
    config: &Stage1Config,
) -> Result<(Stage1Model<T>, Stage1Report)> {
    config.validate()?;
    let size = config.radhop.patch_size;
    let set = sample_step1_training(studies, config)?;
    let n_pos = set.positives();
    info!(
        "stage 1: {} positive and {} negative training patches",
        n_pos,
        set.sites.len() - n_pos
    );

    // Extra gland patches so each extractor sees enough texture.
    let mut fit_sites = set.sites.clone();
    if fit_sites.len() < config.radhop_fit_patches {
        let taken: BTreeSet<Site> = fit_sites.iter().copied().collect();
        let mut pool: Vec<Site> = studies
            .iter()
            .enumerate()
            .flat_map(|(i, s)| {
                gland_grid_centers(s, size, config.negative_stride)
                    .into_iter()
                    .map(move |center| Site { study: i, center })
            })
            .filter(|s| !taken.contains(s))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
        pool.shuffle(&mut rng);
        pool.truncate(config.radhop_fit_patches - fit_sites.len());
        fit_sites.extend(pool);
    }

    let mut radhop = Vec::with_capacity(3);
    let mut selections = Vec::with_capacity(3);
    let mut fused: Vec<Vec<T>> = vec![Vec::new(); set.sites.len()];
    for seq in Sequence::ALL {
        let fit_patches: Vec<Vec<T>> = fit_sites
            .par_iter()
            .map(|s| patch_at(&studies[s.study], seq, s.center, size))
            .collect();
        let model = RadHopModel::<T>::fit(&fit_patches, &config.radhop)?;
        drop(fit_patches);
        let raw: Vec<Vec<T>> = set
            .sites
            .par_iter()
            .map(|s| model.transform(&patch_at(&studies[s.study], seq, s.center, size)))
            .collect::<Result<_>>()?;
        let selection = DftSelection::fit(&raw, &set.labels, &config.dft)?;
        for (f, r) in fused.iter_mut().zip(&raw) {
            selection.apply_into(r, f)?;
        }
        info!(
            "stage 1: {} extractor has {} features, {} kept",
            seq.name(),
            model.feature_len(),
            selection.output_len()
        );
        radhop.push(model);
        selections.push(selection);
    }
    let radhop: [RadHopModel<T>; 3] = radhop.try_into().expect("three sequences");
    let selections: [DftSelection; 3] = selections.try_into().expect("three sequences");

    let step1_params = GbdtParams {
        seed: config.seed.wrapping_add(2),
        ..config.gbdt.clone()
    };
    let step1 = GbdtModel::train(&fused, &set.labels, &step1_params)?;
    info!("stage 1: step-1 classifier trained");
    let oof = cross_predict(&fused, &set.labels, &step1_params, config.mining.folds)?;
    info!("stage 1: out-of-fold scores ready");
    let mut model = Stage1Model {
        radhop,
        selections,
        classifier: step1,
    };

    // Soft labels for every gland-grid negative.
    let in_set: BTreeMap<Site, usize> = set.sites.iter().enumerate().map(|(k, s)| (*s, k)).collect();
    let pool: Vec<Site> = studies
        .iter()
        .enumerate()
        .flat_map(|(i, s)| negative_sites(s, i, size, config.negative_stride))
        .collect();
    let soft: Vec<f64> = pool
        .par_iter()
        .map(|s| match in_set.get(s) {
            Some(&k) => Ok(oof[k]),
            None => model.predict_at(&studies[s.study], s.center),
        })
        .collect::<Result<_>>()?;
    let total = config
        .mining
        .total_negatives
        .unwrap_or((n_pos as f64 * config.mining.neg_pos_ratio).round() as usize);
    let chosen = hard_negative_resample(&soft, total, &config.mining, config.seed.wrapping_add(3))?;
    let mut mined_bins = vec![0; config.mining.bins];
    for &i in &chosen {
        mined_bins[soft_label_bin(soft[i], config.mining.bins)] += 1;
    }
    info!("stage 1: mined {} negatives from {}, per bin {:?}", chosen.len(), pool.len(), mined_bins);

    let mut rows: Vec<Vec<T>> = fused
        .into_iter()
        .zip(&set.labels)
        .filter_map(|(f, &l)| l.then_some(f))
        .collect();
    let mined: Vec<Site> = chosen.iter().map(|&i| pool[i]).collect();
    rows.extend(model.features_batch(studies, &mined)?);
    let labels: Vec<bool> = (0..rows.len()).map(|i| i < n_pos).collect();
    info!("stage 1: training step-2 classifier on {} patches", rows.len());
    model.classifier = GbdtModel::train(
        &rows,
        &labels,
        &GbdtParams {
            seed: config.seed.wrapping_add(4),
            ..config.gbdt.clone()
        },
    )?;
    let report = Stage1Report {
        positives: n_pos,
        step1_negatives: set.sites.len() - n_pos,
        mining_pool: pool.len(),
        step2_negatives: mined.len(),
        mined_bins,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_sum_to_total() {
        let t = bin_targets(1000, 10, 0.4);
        assert_eq!(t.iter().sum::<usize>(), 1000);
        assert!(t.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn infinite_lambda_puts_everything_in_first_bin() {
        assert_eq!(bin_targets(50, 10, f64::INFINITY), {
            let mut v = vec![0; 10];
            v[0] = 50;
            v
        });
    }

    #[test]
    fn one_populated_bin_supplies_what_it_has() {
        let soft = vec![0.95; 30];
        let cfg = MiningConfig::default();
        let chosen = hard_negative_resample(&soft, 100, &cfg, 1).unwrap();
        assert_eq!(chosen.len(), 30);
        let chosen = hard_negative_resample(&soft, 10, &cfg, 1).unwrap();
        assert_eq!(chosen.len(), 10);
    }

    #[test]
    fn nearest_grid_cells_match_units() {
        for y in 0..64 {
            assert_eq!(nearest_grid(y, 8, 64), (y / 8) * 8 + 4);
        }
        assert_eq!(nearest_grid(1, 4, 64), 0);
        assert_eq!(nearest_grid(2, 4, 64), 4);
        assert_eq!(nearest_grid(63, 4, 64), 60);
    }
}
