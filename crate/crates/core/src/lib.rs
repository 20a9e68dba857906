//! Data-driven radar target localization: synthetic clutter scenes, NAMF
//! heatmap tensors, a convolutional regression localizer with few-shot
//! fine-tuning, and the clutter-subspace chordal distance used to predict how
//! well a trained localizer transfers to a displaced platform.

pub mod error;
pub mod harness;
pub mod linalg;
pub mod localize;
pub mod neural;
pub mod rng;
pub mod scene;
pub mod stap;
pub mod subspace;

pub use error::{Error, Result};
pub use harness::{ExperimentConfig, ExperimentReport};
pub use localize::{CartesianPoint, EncodedLabel, LabelBox};
pub use neural::{Architecture, CnnModel, TrainConfig};
pub use scene::{ArrayGeometry, RangeBinData, Scenario, ScenarioConfig, ScenarioTag, TargetTruth};
pub use stap::{CovarianceEstimate, HeatmapTensor, SteeringGrid};
pub use subspace::{BinPolicy, ChordalResult, RankRule, SubspaceBasis};
