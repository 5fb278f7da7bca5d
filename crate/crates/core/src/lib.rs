//! Tree-ensemble fault classification for refrigeration sensor data, with
//! importance-ordered sensor selection and noise robustness analysis.

pub mod dataset;
pub mod ensemble;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod robustness;
pub mod selection;
pub mod simgen;
pub mod trees;

pub use dataset::{ClassId, Dataset, DatasetError, SensorMeta};
pub use ensemble::{
    feature_importance, fit_ensemble, EnsembleConfig, EnsembleError, EnsembleModel, Family, ImportanceRanking,
    Prediction, Voting,
};
pub use metrics::{confusion_matrix, macro_f1, ClassReport, ConfusionMatrix, MetricsError};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineError, PipelineOutputs};
pub use robustness::{
    fail_sensor, inject_awgn, noise_power_for_snr, run_scenarios, signal_power, NoiseSpec, PerturbedTestSet,
    RobustnessError, RobustnessReport, Scenario,
};
pub use selection::{run_rfa, RfaConfig, RfaTrace, SelectionError};
pub use simgen::{generate_dataset, GeneratorConfig, SimgenError};
pub use trees::{
    fit_tree, gini_impurity, DecisionTree, ImportanceMode, SplitStrategy, TreeConfig, TreeError, TreeTask,
};
