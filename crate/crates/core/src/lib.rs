//! No-reference image quality assessment in the curvelet domain.
//!
//! The pipeline is:
//!
//! 1. [`image_io`]: load an image as 8-bit grayscale and cut it into 256×256 blocks.
//! 2. [`fdct`]: fast discrete curvelet transform (frequency wrapping) of each block.
//! 3. [`features`]: eleven robust descriptors per block ([`robust_stats`]), pooled by mean.
//! 4. [`two_stage`]: a probabilistic distortion classifier plus one quality regressor per
//!    distortion class ([`svm`]), fused as `Q = pᵀq`.
//! 5. [`eval`]: rank correlations, accuracy and the paired Wilcoxon signed-rank test
//!    used to compare two models over many train/test rounds.
//!
//! [`datasets`] ingests subjective-score manifests and synthesizes degraded images
//! for dataset-free testing.

pub mod datasets;
pub mod eval;
pub mod fdct;
pub mod features;
pub mod image_io;
pub mod robust_stats;
pub mod selftest;
pub mod svm;
pub mod two_stage;

mod error;

pub use error::{Error, Result};

pub use datasets::{DatasetManifest, Distortion, Polarity, Record};
pub use eval::{RoundResult, WilcoxonOutcome};
pub use fdct::{CoefficientPyramid, CurveletConfig, CurveletTransform};
pub use features::{FeatureExtractor, FeatureVector, M1Extractor};
pub use image_io::{BlockPolicy, BlockSet, GrayImage};
pub use svm::{Standardizer, SvcModel, SvrModel};
pub use two_stage::{GridConfig, SplitPlan, TwoStageModel};
