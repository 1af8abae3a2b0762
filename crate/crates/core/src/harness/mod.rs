//! Data set generation, training and evaluation pipelines, the three
//! experiments, and file formats.

pub mod artifact;
pub mod config;
pub mod dataset;
pub mod experiments;
pub mod metrics;
pub mod pipeline;
pub mod selftest;

pub use artifact::{load_dataset, load_model, save_dataset, save_model, ModelArtifact};
pub use config::{CarrierDistribution, ExperimentConfig, Precision, SplitFractions, TrainingPolicy};
pub use dataset::{generate_dataset, DatasetSplit, SplitPart};
pub use experiments::{export_feature_scatter, run_accuracy_vs_trainsize, run_ber_sweep, run_doppler_sweep, Methods};
pub use metrics::{AccuracyPoint, BerCurve, BerPoint, Method};
pub use pipeline::{train_demodulators, ClassifierKind, ClassifierModel, Demodulator, FeatureScaler, TrainingMetadata};
