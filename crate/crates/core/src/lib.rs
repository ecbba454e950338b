//! Regional epidemic monitoring with instance-based transfer learning.
//!
//! Daily per-region records are expanded into engineered features, scaled,
//! and fed to a weighted kNN regressor. A generic store built from other
//! regions is transferred into a dedicated store for the case-study region.
//! Hospitalization predictions drive a PPE-kit demand estimate.

pub mod dataset;
pub mod evaluation;
pub mod features;
pub mod knn;
pub mod matrix;
pub mod mtl;
pub mod ppe;
pub mod region;
pub mod scaling;
pub mod seed;
pub mod synth;

pub use dataset::{DataRow, FeatureRow, IngestError, RegionalDataset, TrainTestSplit};
pub use evaluation::{BootstrapConfig, Interval, Metric, MetricReport};
pub use knn::{InstanceStore, KnnConfig};
pub use matrix::{FeatureMatrix, TargetMatrix, TARGET_NAMES};
pub use mtl::{ExperimentPlan, MtlConfig, MtlError, MtlModel, SelectionMode, TrainReport};
pub use ppe::{KitComposition, PpeInputs};
pub use region::RegionId;
pub use synth::SyntheticSpec;
