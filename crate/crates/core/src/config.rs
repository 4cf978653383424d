//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated
//! keys and unparsable values are configuration errors. [`RunConfig::to_text`]
//! writes every key with its effective value, in a fixed order, and parses
//! back to the same configuration.

use crate::anomaly::UNIT;
use crate::error::{Error, Result};
use crate::metrics::DetectionConfig;
use crate::stage1::Stage1Config;
use crate::stage2::Stage2Config;

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationConfig {
    /// Share of the training cohort held out for calibration and stage 2.
    pub holdout_fraction: f64,
    pub target_tpr: f64,
    /// Lesion share of an 8×8 unit that makes it positive.
    pub unit_lesion_fraction: f64,
    pub heatmap_stride: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            holdout_fraction: 0.3,
            target_tpr: 0.95,
            unit_lesion_fraction: 0.5,
            heatmap_stride: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub stage1: Stage1Config,
    pub calibration: CalibrationConfig,
    pub stage2: Stage2Config,
    pub detection: DetectionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = RunConfig {
            seed: 0,
            stage1: Stage1Config::default(),
            calibration: CalibrationConfig::default(),
            stage2: Stage2Config::default(),
            detection: DetectionConfig::default(),
        };
        c.sync_seeds();
        c
    }
}

/// Splits a `key = value` document into trimmed pairs, skipping blank and
/// `#` lines and rejecting malformed lines and repeated keys.
pub fn key_values(text: &str) -> Result<Vec<(&str, &str)>> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let key = key.trim();
        if !seen.insert(key) {
            return Err(Error::Config(format!("line {}: repeated key {key:?}", n + 1)));
        }
        out.push((key, value.trim()));
    }
    Ok(out)
}

trait Value: Sized {
    fn parse(s: &str) -> Option<Self>;
    fn render(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse(s: &str) -> Option<Self> {
                s.parse().ok()
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
plain_value!(usize, u64, f64, bool);

impl Value for Option<usize> {
    fn parse(s: &str) -> Option<Self> {
        if s == "auto" {
            Some(None)
        } else {
            s.parse().ok().map(Some)
        }
    }
    fn render(&self) -> String {
        self.map_or("auto".into(), |v| v.to_string())
    }
}

impl Value for Vec<usize> {
    fn parse(s: &str) -> Option<Self> {
        s.split(',').map(|p| p.trim().parse().ok()).collect()
    }
    fn render(&self) -> String {
        self.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

macro_rules! fields {
    ($($key:literal => $($path:ident).+;)*) => {
        const KEYS: &[&str] = &[$($key),*];

        fn set_field(c: &mut RunConfig, key: &str, value: &str) -> Result<()> {
            match key {
                $($key => {
                    c.$($path).+ = Value::parse(value).ok_or_else(|| {
                        Error::Config(format!("invalid value {value:?} for key {key}"))
                    })?;
                })*
                _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
            }
            Ok(())
        }

        fn entries(c: &RunConfig) -> Vec<(&'static str, String)> {
            vec![$(($key, c.$($path).+.render())),*]
        }
    };
}

fields! {
    "seed" => seed;
    "patch_size" => stage1.radhop.patch_size;
    "filter_size" => stage1.radhop.filter_size;
    "energy_threshold" => stage1.radhop.energy_threshold;
    "include_dc" => stage1.radhop.include_dc;
    "min_fit_patches" => stage1.radhop.min_fit_patches;
    "radhop_fit_patches" => stage1.radhop_fit_patches;
    "dft_bins" => stage1.dft.bins;
    "dft_keep" => stage1.dft.keep_k;
    "gbdt_trees" => stage1.gbdt.n_trees;
    "gbdt_max_depth" => stage1.gbdt.max_depth;
    "gbdt_learning_rate" => stage1.gbdt.learning_rate;
    "gbdt_min_samples_leaf" => stage1.gbdt.min_samples_leaf;
    "gbdt_subsample" => stage1.gbdt.subsample;
    "gbdt_l2" => stage1.gbdt.l2_leaf_reg;
    "positive_overlap" => stage1.positive_overlap;
    "negative_stride" => stage1.negative_stride;
    "mining_lambda" => stage1.mining.lambda;
    "mining_bins" => stage1.mining.bins;
    "mining_folds" => stage1.mining.folds;
    "neg_pos_ratio" => stage1.mining.neg_pos_ratio;
    "mining_total" => stage1.mining.total_negatives;
    "holdout_fraction" => calibration.holdout_fraction;
    "target_tpr" => calibration.target_tpr;
    "unit_lesion_fraction" => calibration.unit_lesion_fraction;
    "heatmap_stride" => calibration.heatmap_stride;
    "radiomics_levels" => stage2.radiomics.levels;
    "radiomics_distances" => stage2.radiomics.distances;
    "stage2_dft_bins" => stage2.dft.bins;
    "stage2_dft_keep" => stage2.dft.keep_k;
    "stage2_trees" => stage2.gbdt.n_trees;
    "stage2_max_depth" => stage2.gbdt.max_depth;
    "stage2_learning_rate" => stage2.gbdt.learning_rate;
    "stage2_min_samples_leaf" => stage2.gbdt.min_samples_leaf;
    "stage2_subsample" => stage2.gbdt.subsample;
    "stage2_l2" => stage2.gbdt.l2_leaf_reg;
    "stage2_label_iou" => stage2.label_iou;
    "stage2_skip_ambiguous" => stage2.skip_ambiguous;
    "region_floor" => stage2.region_floor;
    "detect_min_prob" => detection.min_prob;
    "detect_min_voxels" => detection.min_voxels;
    "detect_iou" => detection.iou_min;
}

impl RunConfig {
    pub fn keys() -> &'static [&'static str] {
        KEYS
    }

    /// Parses a config document over the defaults and validates it.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (key, value) in key_values(text)? {
            set_field(&mut c, key, value)?;
        }
        c.sync_seeds();
        c.validate()?;
        Ok(c)
    }

    /// Propagates the run seed into the components that draw random numbers.
    pub fn sync_seeds(&mut self) {
        self.stage1.seed = self.seed;
        self.stage1.gbdt.seed = self.seed;
        self.stage2.gbdt.seed = self.seed.wrapping_add(5);
    }

    pub fn validate(&self) -> Result<()> {
        self.stage1.validate()?;
        self.stage2.validate()?;
        self.detection.validate()?;
        let c = &self.calibration;
        if !(0.0..1.0).contains(&c.holdout_fraction) {
            return Err(Error::Config(format!(
                "holdout_fraction must be in [0, 1), got {}",
                c.holdout_fraction
            )));
        }
        if !(c.target_tpr > 0.0 && c.target_tpr <= 1.0) {
            return Err(Error::Config(format!("target_tpr must be in (0, 1], got {}", c.target_tpr)));
        }
        if !(c.unit_lesion_fraction > 0.0 && c.unit_lesion_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "unit_lesion_fraction must be in (0, 1], got {}",
                c.unit_lesion_fraction
            )));
        }
        if c.heatmap_stride == 0 || c.heatmap_stride > UNIT {
            return Err(Error::Config(format!(
                "heatmap_stride must be in [1, {UNIT}], got {}",
                c.heatmap_stride
            )));
        }
        Ok(())
    }

    /// Every key with its effective value, one `key = value` per line.
    pub fn to_text(&self) -> String {
        entries(self)
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(c.to_text().lines().count(), RunConfig::keys().len());
    }

    #[test]
    fn values_apply() {
        let c = RunConfig::parse("# comment\nseed = 7\nmining_total = 500\nradiomics_distances = 1,2\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.stage1.gbdt.seed, 7);
        assert_eq!(c.stage1.mining.total_negatives, Some(500));
        assert_eq!(c.stage2.radiomics.distances, vec![1, 2]);
    }

    #[test]
    fn rejects_bad_input() {
        for text in ["bogus = 1", "seed = x", "seed", "seed = 1\nseed = 2", "target_tpr = 0"] {
            assert!(matches!(RunConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }
}
