#![allow(dead_code)]

pub mod oracle;

use radhop::cohort::phantom_cohort;
use radhop::config::RunConfig;
use radhop::phantom::PhantomSpec;
use radhop::volume::Study;

/// A reduced configuration that trains in seconds.
pub const SMALL_CONFIG: &str = "\
gbdt_trees = 20
dft_keep = 100
radhop_fit_patches = 300
min_fit_patches = 100
mining_folds = 2
stage2_trees = 20
stage2_dft_keep = 50
stage2_min_samples_leaf = 2
holdout_fraction = 0.5
";

pub fn small_config() -> RunConfig {
    RunConfig::parse(SMALL_CONFIG).unwrap()
}

/// Alternating lesion and clean phantoms.
pub fn small_cohort(count: usize, seed: u64) -> Vec<Study> {
    phantom_cohort(&PhantomSpec { seed, ..PhantomSpec::default() }, count).unwrap()
}
