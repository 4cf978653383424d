//! Two-stage lesion detection on bi-parametric MRI volumes.
//!
//! Stage 1 extracts unsupervised Saab/PCA features from 2D patches of each
//! sequence ([`radhop`]), keeps the most discriminant ones ([`dft`]) and
//! scores patches with gradient-boosted trees trained with hard-negative
//! mining ([`gbdt`], [`stage1`]). The dense heatmap is pooled into an anomaly
//! map whose hot 2×2 blocks become candidates ([`anomaly`]); stage 2 describes
//! each candidate with anomaly, handcrafted radiomics ([`radiomics`]) and
//! stage-1 features and rescales its heatmap region ([`stage2`]).
//! [`metrics`] scores detections and cases; [`pipeline`] ties it together and
//! [`container`] stores a trained model in one file.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod anomaly;
pub mod codec;
pub mod cohort;
pub mod config;
pub mod container;
pub mod dft;
pub mod error;
pub mod gbdt;
pub mod linalg;
pub mod metrics;
pub mod outputs;
pub mod patches;
pub mod phantom;
pub mod pipeline;
pub mod radhop;
pub mod radiomics;
pub mod saab;
pub mod scalar;
pub mod stage1;
pub mod stage2;
pub mod volume;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type SaabKernel64 = saab::SaabKernel<f64>;
pub type RadHopModel64 = radhop::RadHopModel<f64>;
pub type Stage1Model64 = stage1::Stage1Model<f64>;
pub type Model64 = container::ModelContainer<f64>;
pub type SaabKernel32 = saab::SaabKernel<f32>;
pub type RadHopModel32 = radhop::RadHopModel<f32>;
pub type Stage1Model32 = stage1::Stage1Model<f32>;
pub type Model32 = container::ModelContainer<f32>;
