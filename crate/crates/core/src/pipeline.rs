//! End-to-end run: load or generate data, undersample, split, fit the
//! all-sensor model, rank sensors, run feature addition, then stress the
//! selected model with noise and sensor failure.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    load_dataset, split_train_test, undersample_majority, write_csv, Dataset, DatasetError, SchemaPolicy,
    UndersampleTarget,
};
use crate::ensemble::{
    feature_importance, fit_ensemble, EnsembleConfig, EnsembleError, EnsembleModel, Family, ImportanceRanking, Voting,
};
use crate::io::{to_json_pretty, write_atomic};
use crate::metrics::ClassReport;
use crate::rng::derive_seed;
use crate::robustness::{run_scenarios, RobustnessError, RobustnessReport};
use crate::selection::{run_rfa_with_model, RfaConfig, RfaTrace, SelectionError};
use crate::simgen::{generate_dataset, GeneratorConfig, SimgenError};
use crate::trees::{FeatureSubsample, ImportanceMode, SplitStrategy, TreeConfig};

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Simgen(#[from] SimgenError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Robustness(#[from] RobustnessError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid value for {field}: {constraint}")]
    InvalidValue { field: String, constraint: String },
    #[error("{module}::{operation}: {source}")]
    Stage {
        module: &'static str,
        operation: &'static str,
        #[source]
        source: StageError,
    },
}

impl PipelineError {
    fn invalid(field: &str, constraint: impl Into<String>) -> Self {
        PipelineError::InvalidValue {
            field: field.to_string(),
            constraint: constraint.into(),
        }
    }
}

/// Attaches module and operation names to a stage failure.
pub trait StageContext<T> {
    fn stage(self, module: &'static str, operation: &'static str) -> Result<T, PipelineError>;
}

impl<T, E: Into<StageError>> StageContext<T> for Result<T, E> {
    fn stage(self, module: &'static str, operation: &'static str) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::Stage {
            module,
            operation,
            source: e.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema_policy: SchemaPolicy,
    },
    Simgen(GeneratorConfig),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Simgen(GeneratorConfig::default())
    }
}

fn default_undersample() -> Option<UndersampleTarget> {
    Some(UndersampleTarget::MatchLargestMinority)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocessing {
    /// `null` keeps every row.
    #[serde(default = "default_undersample")]
    pub undersample: Option<UndersampleTarget>,
    pub train_fraction: f64,
    pub stratified: bool,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Preprocessing {
            undersample: default_undersample(),
            train_fraction: 0.75,
            stratified: true,
        }
    }
}

/// Ensemble settings layered over the family preset. Absent fields take
/// the preset's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSpec {
    pub family: Family,
    pub n_trees: Option<usize>,
    pub learning_rate: Option<f64>,
    pub split_strategy: SplitStrategy,
    pub max_depth: Option<usize>,
    pub min_leaf: Option<usize>,
    pub feature_subsample: Option<FeatureSubsample>,
    pub bootstrap: Option<bool>,
    pub voting: Voting,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            family: Family::Bagging,
            n_trees: None,
            learning_rate: None,
            split_strategy: SplitStrategy::Histogram { bins: 255 },
            max_depth: None,
            min_leaf: None,
            feature_subsample: None,
            bootstrap: None,
            voting: Voting::Soft,
        }
    }
}

impl EnsembleSpec {
    pub fn to_config(&self, master_seed: u64) -> EnsembleConfig {
        let mut cfg = match self.family {
            Family::Bagging => EnsembleConfig::random_forest(),
            Family::Boosting => EnsembleConfig::boosting_exact(),
        };
        cfg.master_seed = master_seed;
        cfg.voting = self.voting;
        cfg.tree = TreeConfig {
            split_strategy: self.split_strategy,
            max_depth: self.max_depth.or(cfg.tree.max_depth),
            min_leaf: self.min_leaf.unwrap_or(cfg.tree.min_leaf),
            feature_subsample: self.feature_subsample.unwrap_or(cfg.tree.feature_subsample),
            task: cfg.tree.task,
        };
        cfg.n_trees = self.n_trees.unwrap_or(cfg.n_trees);
        cfg.learning_rate = self.learning_rate.unwrap_or(cfg.learning_rate);
        cfg.bootstrap = self.bootstrap.unwrap_or(cfg.bootstrap);
        cfg
    }

    /// Same settings with every preset-dependent field spelled out.
    pub fn resolved(&self) -> EnsembleSpec {
        let cfg = self.to_config(0);
        EnsembleSpec {
            family: self.family,
            n_trees: Some(cfg.n_trees),
            learning_rate: Some(cfg.learning_rate),
            split_strategy: cfg.tree.split_strategy,
            max_depth: cfg.tree.max_depth,
            min_leaf: Some(cfg.tree.min_leaf),
            feature_subsample: Some(cfg.tree.feature_subsample),
            bootstrap: Some(cfg.bootstrap),
            voting: cfg.voting,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfaSettings {
    pub threshold: f64,
    pub snr_db: f64,
    pub max_sensors: Option<usize>,
}

impl Default for RfaSettings {
    fn default() -> Self {
        RfaSettings {
            threshold: 0.99,
            snr_db: 3.0,
            max_sensors: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessSettings {
    pub snr_list: Vec<f64>,
    pub include_failure: bool,
}

impl Default for RobustnessSettings {
    fn default() -> Self {
        RobustnessSettings {
            snr_list: vec![10.0, 3.0, 0.0],
            include_failure: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: DatasetSource,
    pub preprocessing: Preprocessing,
    pub ensemble: EnsembleSpec,
    /// Defaults to impurity for bagging and gain for boosting.
    pub importance: Option<ImportanceMode>,
    pub rfa: RfaSettings,
    pub robustness: RobustnessSettings,
    pub output_dir: Option<PathBuf>,
    /// Drives every random stream of the run.
    pub seed: u64,
}

/// Sub-seed indices under the top-level seed.
const SEED_UNDERSAMPLE: u64 = 1;
const SEED_SPLIT: u64 = 2;
const SEED_ENSEMBLE: u64 = 3;
const SEED_RFA_NOISE: u64 = 4;
const SEED_SCENARIOS: u64 = 5;

impl PipelineConfig {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let p = &self.preprocessing;
        if !(p.train_fraction > 0.0 && p.train_fraction < 1.0) {
            return Err(PipelineError::invalid(
                "preprocessing.train_fraction",
                "must be in (0, 1)",
            ));
        }
        if let Some(UndersampleTarget::Explicit(0)) = p.undersample {
            return Err(PipelineError::invalid(
                "preprocessing.undersample",
                "explicit target must be at least 1",
            ));
        }
        if !(self.rfa.threshold > 0.0 && self.rfa.threshold <= 1.0) {
            return Err(PipelineError::invalid("rfa.threshold", "must be in (0, 1]"));
        }
        if !self.rfa.snr_db.is_finite() {
            return Err(PipelineError::invalid("rfa.snr_db", "must be finite"));
        }
        if self.rfa.max_sensors == Some(0) {
            return Err(PipelineError::invalid("rfa.max_sensors", "must be at least 1"));
        }
        if self.robustness.snr_list.iter().any(|s| !s.is_finite()) {
            return Err(PipelineError::invalid("robustness.snr_list", "entries must be finite"));
        }
        if let DatasetSource::Simgen(g) = &self.dataset {
            g.validate()
                .map_err(|e| PipelineError::invalid("dataset.simgen", e.to_string()))?;
        }
        self.ensemble
            .to_config(0)
            .validate()
            .map_err(|e| PipelineError::invalid("ensemble", e.to_string()))?;
        Ok(())
    }

    /// Fills defaults that depend on other fields and pushes the top-level
    /// seed into the generator.
    pub fn resolve(mut self) -> Result<Self, PipelineError> {
        if let DatasetSource::Simgen(g) = &mut self.dataset {
            g.seed = self.seed;
        }
        self.ensemble = self.ensemble.resolved();
        self.importance = Some(self.importance_mode());
        self.validate()?;
        Ok(self)
    }

    pub fn importance_mode(&self) -> ImportanceMode {
        self.importance
            .unwrap_or_else(|| self.ensemble.family.default_importance())
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        self.ensemble.to_config(derive_seed(self.seed, SEED_ENSEMBLE))
    }

    pub fn undersample_seed(&self) -> u64 {
        derive_seed(self.seed, SEED_UNDERSAMPLE)
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, SEED_SPLIT)
    }

    pub fn rfa_noise_seed(&self) -> u64 {
        derive_seed(self.seed, SEED_RFA_NOISE)
    }

    pub fn scenario_seed(&self) -> u64 {
        derive_seed(self.seed, SEED_SCENARIOS)
    }
}

/// Everything a run produces, before anything is written.
#[derive(Debug, Clone)]
pub struct PipelineOutputs {
    pub config: PipelineConfig,
    pub train: Dataset,
    pub test: Dataset,
    pub full_model: EnsembleModel,
    pub full_report: ClassReport,
    pub ranking: ImportanceRanking,
    pub rfa: RfaTrace,
    pub model: EnsembleModel,
    pub class_report: ClassReport,
    pub robustness: RobustnessReport,
}

pub fn load_source(source: &DatasetSource) -> Result<Dataset, PipelineError> {
    match source {
        DatasetSource::Csv { path, schema_policy } => {
            load_dataset(path, *schema_policy).stage("dataset", "load_dataset")
        }
        DatasetSource::Simgen(g) => generate_dataset(g).stage("simgen", "generate_dataset"),
    }
}

/// Undersampling and splitting as configured.
pub fn prepare(cfg: &PipelineConfig, data: &Dataset) -> Result<(Dataset, Dataset), PipelineError> {
    let p = &cfg.preprocessing;
    let balanced = match p.undersample {
        Some(target) => {
            undersample_majority(data, target, cfg.undersample_seed()).stage("dataset", "undersample_majority")?
        }
        None => data.clone(),
    };
    let split = split_train_test(&balanced, p.train_fraction, p.stratified, cfg.split_seed())
        .stage("dataset", "split_train_test")?;
    Ok((split.train, split.test))
}

/// Runs every stage in memory. `cfg` is resolved first.
pub fn run_pipeline(cfg: PipelineConfig) -> Result<PipelineOutputs, PipelineError> {
    let cfg = cfg.resolve()?;
    let data = load_source(&cfg.dataset)?;
    let (train, test) = prepare(&cfg, &data)?;
    let ensemble = cfg.ensemble_config();

    let full_model = fit_ensemble(&train, &ensemble).stage("ensembles", "fit_ensemble")?;
    let full_report = full_model.evaluate(&test).stage("ensembles", "evaluate")?;
    let ranking = feature_importance(&full_model, cfg.importance_mode());

    let rfa_cfg = RfaConfig {
        threshold: cfg.rfa.threshold,
        ranking: ranking.clone(),
        ensemble_config: ensemble,
        robustness_snr_db: cfg.rfa.snr_db,
        max_sensors: cfg.rfa.max_sensors,
        noise_seed: cfg.rfa_noise_seed(),
    };
    // The last iteration's model was trained on exactly the selected
    // sensors with the run's seed, so it is the final model.
    let outcome = run_rfa_with_model(&train, &test, &rfa_cfg).stage("selection", "run_rfa")?;
    let test_selected = test
        .select_sensors(&outcome.trace.selected_set)
        .stage("dataset", "select_sensors")?;
    let class_report = outcome.model.evaluate(&test_selected).stage("ensembles", "evaluate")?;
    let robustness = run_scenarios(
        &outcome.model,
        &test_selected,
        &outcome.trace.noise_target,
        &cfg.robustness.snr_list,
        cfg.robustness.include_failure,
        cfg.scenario_seed(),
    )
    .stage("robustness", "run_scenarios")?;

    Ok(PipelineOutputs {
        config: cfg,
        train,
        test,
        full_model,
        full_report,
        ranking,
        rfa: outcome.trace,
        model: outcome.model,
        class_report,
        robustness,
    })
}

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";
pub const MODEL_FILE: &str = "model.json";
pub const RANKING_JSON_FILE: &str = "ranking.json";
pub const RANKING_CSV_FILE: &str = "ranking.csv";
pub const RFA_JSON_FILE: &str = "rfa_trace.json";
pub const RFA_CSV_FILE: &str = "rfa_trace.csv";
pub const RFA_SVG_FILE: &str = "rfa_curve.svg";
pub const ROBUSTNESS_JSON_FILE: &str = "robustness.json";
pub const ROBUSTNESS_CSV_FILE: &str = "robustness.csv";
pub const CLASS_REPORT_FILE: &str = "class_report.csv";
pub const FULL_REPORT_FILE: &str = "full_model_report.csv";
pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";

fn csv_bytes(d: &Dataset) -> Result<Vec<u8>, DatasetError> {
    let mut buf = Vec::new();
    write_csv(d, &mut buf)?;
    Ok(buf)
}

/// Writes all artifacts into `dir` and returns their paths in write order.
pub fn write_artifacts(out: &PipelineOutputs, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let files: Vec<(&str, Vec<u8>)> = vec![
        (
            RESOLVED_CONFIG_FILE,
            to_json_pretty(&out.config)
                .stage("cli", "write_artifacts")?
                .into_bytes(),
        ),
        (TRAIN_FILE, csv_bytes(&out.train).stage("dataset", "write_csv")?),
        (TEST_FILE, csv_bytes(&out.test).stage("dataset", "write_csv")?),
        (FULL_REPORT_FILE, out.full_report.to_csv().into_bytes()),
        (
            RANKING_JSON_FILE,
            to_json_pretty(&out.ranking)
                .stage("ensembles", "feature_importance")?
                .into_bytes(),
        ),
        (RANKING_CSV_FILE, out.ranking.to_csv().into_bytes()),
        (
            RFA_JSON_FILE,
            out.rfa.to_json().stage("selection", "run_rfa")?.into_bytes(),
        ),
        (RFA_CSV_FILE, out.rfa.to_csv().into_bytes()),
        (RFA_SVG_FILE, rfa_svg(&out.rfa).into_bytes()),
        (
            MODEL_FILE,
            out.model.to_json().stage("ensembles", "to_json")?.into_bytes(),
        ),
        (CLASS_REPORT_FILE, out.class_report.to_csv().into_bytes()),
        (
            ROBUSTNESS_JSON_FILE,
            out.robustness
                .to_json()
                .stage("robustness", "run_scenarios")?
                .into_bytes(),
        ),
        (ROBUSTNESS_CSV_FILE, out.robustness.to_csv().into_bytes()),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = dir.join(name);
        write_atomic(&path, &bytes).stage("cli", "write_artifacts")?;
        written.push(path);
    }
    Ok(written)
}

/// Line chart of clean and noisy F1 against the number of sensors.
pub fn rfa_svg(trace: &RfaTrace) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const LEFT: f64 = 60.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 30.0;
    const BOTTOM: f64 = 50.0;
    let n = trace.iterations.len().max(1);
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let x = |count: usize| {
        if n == 1 {
            LEFT + plot_w / 2.0
        } else {
            LEFT + plot_w * (count - 1) as f64 / (n - 1) as f64
        }
    };
    let y = |f1: f64| TOP + plot_h * (1.0 - f1.clamp(0.0, 1.0));
    let polyline = |values: Vec<(usize, f64)>, colour: &str| {
        let points: Vec<String> = values
            .iter()
            .map(|&(c, v)| format!("{:.2},{:.2}", x(c), y(v)))
            .collect();
        let mut s = format!(
            "  <polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\" points=\"{}\"/>\n",
            points.join(" ")
        );
        for &(c, v) in &values {
            s.push_str(&format!(
                "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{colour}\"/>\n",
                x(c),
                y(v)
            ));
        }
        s
    };

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    svg.push_str(&format!(
        "  <rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#444\"/>\n"
    ));
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        svg.push_str(&format!(
            "  <line x1=\"{LEFT}\" x2=\"{:.2}\" y1=\"{:.2}\" y2=\"{:.2}\" stroke=\"#ddd\"/>\n  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{v:.1}</text>\n",
            LEFT + plot_w,
            y(v),
            y(v),
            LEFT - 6.0,
            y(v) + 4.0
        ));
    }
    for it in &trace.iterations {
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            x(it.sensor_count),
            TOP + plot_h + 16.0,
            it.sensor_count
        ));
    }
    svg.push_str(&format!(
        "  <line x1=\"{LEFT}\" x2=\"{:.2}\" y1=\"{:.2}\" y2=\"{:.2}\" stroke=\"#888\" stroke-dasharray=\"6 4\"/>\n",
        LEFT + plot_w,
        y(trace.threshold),
        y(trace.threshold)
    ));
    svg.push_str(&polyline(
        trace
            .iterations
            .iter()
            .map(|it| (it.sensor_count, it.clean_f1))
            .collect(),
        "#1f77b4",
    ));
    svg.push_str(&polyline(
        trace
            .iterations
            .iter()
            .map(|it| (it.sensor_count, it.noisy_f1))
            .collect(),
        "#d62728",
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">sensors</text>\n",
        LEFT + plot_w / 2.0,
        H - 12.0
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">macro F1</text>\n",
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"20\" fill=\"#1f77b4\">clean</text>\n  <text x=\"{:.2}\" y=\"20\" fill=\"#d62728\">noisy ({} dB on {})</text>\n",
        LEFT,
        LEFT + 60.0,
        trace.robustness_snr_db,
        xml_escape(&trace.noise_target)
    ));
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::RfaIteration;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = PipelineConfig::from_json("{}").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.rfa.threshold, 0.99);
        assert_eq!(cfg.rfa.snr_db, 3.0);
        assert_eq!(cfg.preprocessing.train_fraction, 0.75);
        assert_eq!(cfg.importance_mode(), ImportanceMode::Mdi);
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let cfg = PipelineConfig::from_json(r#"{"rfa": {"threshold": 1.5}}"#).unwrap();
        match cfg.validate() {
            Err(PipelineError::InvalidValue { field, .. }) => assert_eq!(field, "rfa.threshold"),
            other => panic!("{other:?}"),
        }
        let cfg = PipelineConfig::from_json(r#"{"preprocessing": {"train_fraction": 1.0}}"#).unwrap();
        assert!(matches!(cfg.validate(), Err(PipelineError::InvalidValue { .. })));
        let cfg = PipelineConfig::from_json(r#"{"ensemble": {"family": "boosting", "learning_rate": 0.0}}"#).unwrap();
        assert!(matches!(cfg.validate(), Err(PipelineError::InvalidValue { .. })));
        assert!(PipelineConfig::from_json(r#"{"rfa": {"treshold": 0.9}}"#).is_err());
    }

    #[test]
    fn resolution_is_idempotent() {
        let cfg = PipelineConfig {
            seed: 7,
            ensemble: EnsembleSpec {
                family: Family::Boosting,
                ..EnsembleSpec::default()
            },
            ..PipelineConfig::default()
        };
        let once = cfg.resolve().unwrap();
        let json = to_json_pretty(&once).unwrap();
        let twice = PipelineConfig::from_json(&json).unwrap().resolve().unwrap();
        assert_eq!(once, twice);
        assert_eq!(once.importance, Some(ImportanceMode::Gain));
        assert_eq!(once.ensemble_config(), twice.ensemble_config());
    }

    #[test]
    fn svg_has_both_series() {
        let trace = RfaTrace {
            threshold: 0.99,
            noise_target: "T_FI".into(),
            robustness_snr_db: 3.0,
            iterations: (1..=3)
                .map(|k| RfaIteration {
                    sensor_added: format!("s{k}"),
                    sensor_count: k,
                    clean_f1: 0.3 * k as f64,
                    noisy_f1: 0.2 * k as f64,
                })
                .collect(),
            selected_set: vec!["s1".into(), "s2".into(), "s3".into()],
            threshold_met: false,
        };
        let svg = rfa_svg(&trace);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 6);
    }
}
