//! Argument handling and stage runners behind the `co2fdd` binary.

#![allow(clippy::result_large_err)]

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use co2fdd::dataset::{load_dataset, write_csv_file, Dataset, SchemaPolicy};
use co2fdd::ensemble::{feature_importance, fit_ensemble, EnsembleModel, Family, ImportanceRanking};
use co2fdd::io::{to_json_pretty, write_atomic};
use co2fdd::pipeline::{
    self, run_pipeline, write_artifacts, DatasetSource, PipelineConfig, PipelineError, StageContext, StageError,
};
use co2fdd::robustness::run_scenarios;
use co2fdd::selection::{run_rfa_with_model, RfaConfig};
use co2fdd::simgen::{generate_dataset, GeneratorConfig};
use co2fdd::trees::ImportanceMode;

/// Default output directory when neither a flag nor the config names one.
pub const OUT_ENV: &str = "CO2FDD_OUT";
pub const DEFAULT_OUT_DIR: &str = "co2fdd-out";
pub const ERROR_FILE: &str = "error.json";

#[derive(Debug, Parser)]
#[command(
    name = "co2fdd",
    version,
    about = "Fault classification, sensor selection and robustness analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labelled dataset as CSV.
    Simgen(SimgenArgs),
    /// Fit an ensemble on a training CSV.
    Train(TrainArgs),
    /// Rank sensors by importance from a saved model.
    Importance(ImportanceArgs),
    /// Add sensors in rank order until the F1 threshold is met.
    Rfa(RfaArgs),
    /// Score a saved model under noise and sensor failure.
    Robustness(RobustnessArgs),
    /// Run every stage end to end.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Bagging,
    Boosting,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Bagging => Family::Bagging,
            FamilyArg::Boosting => Family::Boosting,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Mdi,
    MdiUnweighted,
    Gain,
}

impl From<ModeArg> for ImportanceMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Mdi => ImportanceMode::Mdi,
            ModeArg::MdiUnweighted => ImportanceMode::MdiUnweighted,
            ModeArg::Gain => ImportanceMode::Gain,
        }
    }
}

/// Flags shared by stages that train or draw noise.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Pipeline config JSON; only the relevant sections are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: config, then $CO2FDD_OUT, then ./co2fdd-out]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    #[arg(long)]
    pub trees: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimgenArgs {
    /// Generator config JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// CSV destination.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Optional held-out CSV; writes a class report when given.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Defaults to mdi for bagging and gain for boosting.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RfaArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub ranking: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub max_sensors: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct RobustnessArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Comma-separated SNR values in dB.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub snr: Option<Vec<f64>>,
    /// Also zero the target sensor.
    #[arg(long)]
    pub fail_sensor: bool,
    /// Sensor to perturb [default: the model's first sensor]
    #[arg(long)]
    pub sensor: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Use a CSV instead of generated data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub max_sensors: Option<usize>,
}

/// Machine-readable failure, written as `error.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub module: String,
    pub operation: String,
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl Failure {
    fn new(module: &str, operation: &str, kind: &str, message: impl Into<String>) -> Self {
        Failure {
            module: module.into(),
            operation: operation.into(),
            kind: kind.into(),
            message: message.into(),
            field: None,
            line: None,
            column: None,
        }
    }

    fn parse(path: &Path, e: &serde_json::Error) -> Self {
        Failure {
            line: Some(e.line()),
            column: Some(e.column()),
            ..Failure::new("cli", "parse_config", "parse_error", format!("{}: {e}", path.display()))
        }
    }

    pub fn to_json(&self) -> String {
        to_json_pretty(&json!({ "error": self })).expect("failure serialises")
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::InvalidValue { field, constraint } => Failure {
                field: Some(field.clone()),
                ..Failure::new("cli", "parse_config", "invalid_value", format!("{field}: {constraint}"))
            },
            PipelineError::Stage {
                module,
                operation,
                source,
            } => {
                let kind = match &source {
                    StageError::Dataset(_) => "dataset_error",
                    StageError::Simgen(_) => "simgen_error",
                    StageError::Ensemble(_) => "ensemble_error",
                    StageError::Selection(_) => "selection_error",
                    StageError::Robustness(_) => "robustness_error",
                    StageError::Io(_) => "io_error",
                    StageError::Json(_) => "json_error",
                };
                Failure::new(module, operation, kind, source.to_string())
            }
        }
    }
}

type CliResult<T> = Result<T, Failure>;

/// Resolves the output directory: flag, then config, then environment.
pub fn resolve_out_dir(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.map(Path::to_path_buf))
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn read_text(path: &Path, module: &str, operation: &str) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| Failure::new(module, operation, "io_error", format!("{}: {e}", path.display())))
}

/// Reads a pipeline config file; a missing path yields the defaults.
pub fn read_config(path: Option<&Path>) -> CliResult<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text = read_text(p, "cli", "parse_config")?;
            PipelineConfig::from_json(&text).map_err(|e| Failure::parse(p, &e))
        }
    }
}

fn apply_common(cfg: &mut PipelineConfig, common: &CommonArgs) {
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(family) = common.family {
        let family = Family::from(family);
        if family != cfg.ensemble.family {
            // Preset-dependent values from the file belong to the other family.
            cfg.ensemble = pipeline::EnsembleSpec {
                family,
                split_strategy: cfg.ensemble.split_strategy,
                voting: cfg.ensemble.voting,
                ..Default::default()
            };
            cfg.importance = None;
        }
    }
    if let Some(trees) = common.trees {
        cfg.ensemble.n_trees = Some(trees);
    }
}

/// Config file plus flags, resolved, with the output directory.
fn resolve(common: &CommonArgs) -> CliResult<(PipelineConfig, PathBuf)> {
    let mut cfg = read_config(common.config.as_deref())?;
    apply_common(&mut cfg, common);
    let out = resolve_out_dir(common.out.as_deref(), cfg.output_dir.as_deref());
    Ok((cfg, out))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    write_atomic(path, bytes)
        .map_err(|e| Failure::new("cli", "write_artifacts", "io_error", format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text =
        to_json_pretty(value).map_err(|e| Failure::new("cli", "write_artifacts", "json_error", e.to_string()))?;
    write_file(path, text.as_bytes())
}

fn load_csv(path: &Path) -> CliResult<Dataset> {
    load_dataset(path, SchemaPolicy::Infer)
        .stage("dataset", "load_dataset")
        .map_err(Failure::from)
}

fn load_model(path: &Path) -> CliResult<EnsembleModel> {
    let text = read_text(path, "ensembles", "from_json")?;
    EnsembleModel::from_json(&text)
        .stage("ensembles", "from_json")
        .map_err(Failure::from)
}

/// The echo omits the output directory so that runs into different
/// directories produce identical files.
fn echo(cfg: &PipelineConfig) -> PipelineConfig {
    PipelineConfig {
        output_dir: None,
        ..cfg.clone()
    }
}

/// Runs one command. On failure, returns the failure and, when known, the
/// directory the error file belongs in.
pub fn execute(cli: Cli) -> Result<(), (Failure, Option<PathBuf>)> {
    let out_dir = match &cli.command {
        Command::Simgen(a) => a.out.parent().map(Path::to_path_buf),
        Command::Train(a) => Some(resolve_out_dir(a.common.out.as_deref(), None)),
        Command::Rfa(a) => Some(resolve_out_dir(a.common.out.as_deref(), None)),
        Command::Pipeline(a) => Some(resolve_out_dir(a.common.out.as_deref(), None)),
        Command::Importance(a) => Some(resolve_out_dir(a.out.as_deref(), None)),
        Command::Robustness(a) => Some(resolve_out_dir(a.out.as_deref(), None)),
    };
    let result = match cli.command {
        Command::Simgen(a) => simgen(a),
        Command::Train(a) => train(a),
        Command::Importance(a) => importance(a),
        Command::Rfa(a) => rfa(a),
        Command::Robustness(a) => robustness(a),
        Command::Pipeline(a) => pipeline_cmd(a),
    };
    match result {
        Ok(dir) => {
            // A stale error file from an earlier failed run would contradict
            // the exit status.
            let _ = fs::remove_file(dir.join(ERROR_FILE));
            Ok(())
        }
        Err((failure, dir)) => Err((failure, dir.or(out_dir))),
    }
}

type StageResult = Result<PathBuf, (Failure, Option<PathBuf>)>;

fn no_dir(f: Failure) -> (Failure, Option<PathBuf>) {
    (f, None)
}

fn simgen(a: SimgenArgs) -> StageResult {
    let mut cfg = match &a.config {
        None => GeneratorConfig::default(),
        Some(p) => {
            let text = read_text(p, "cli", "parse_config").map_err(no_dir)?;
            serde_json::from_str(&text).map_err(|e| no_dir(Failure::parse(p, &e)))?
        }
    };
    if let Some(rows) = a.rows {
        cfg.n_rows = rows;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(sd) = a.noise_sd {
        cfg.nuisance_noise_sd = sd;
    }
    let data = generate_dataset(&cfg)
        .stage("simgen", "generate_dataset")
        .map_err(|e| no_dir(e.into()))?;
    write_csv_file(&data, &a.out)
        .stage("dataset", "write_csv")
        .map_err(|e| no_dir(e.into()))?;
    let stem = a
        .out
        .file_stem()
        .map_or("dataset".into(), |s| s.to_string_lossy().into_owned());
    let dir = a.out.parent().map(Path::to_path_buf).unwrap_or_default();
    write_json(&dir.join(format!("{stem}.resolved_config.json")), &cfg).map_err(no_dir)?;
    Ok(dir)
}

fn train(a: TrainArgs) -> StageResult {
    let (cfg, out) = resolve(&a.common).map_err(no_dir)?;
    let run = || -> CliResult<()> {
        let cfg = cfg.resolve()?;
        let train = load_csv(&a.train)?;
        let model = fit_ensemble(&train, &cfg.ensemble_config()).stage("ensembles", "fit_ensemble")?;
        write_file(
            &out.join(pipeline::MODEL_FILE),
            model.to_json().stage("ensembles", "to_json")?.as_bytes(),
        )?;
        if let Some(test) = &a.test {
            let test = load_csv(test)?;
            let report = model.evaluate(&test).stage("ensembles", "evaluate")?;
            write_file(&out.join(pipeline::CLASS_REPORT_FILE), report.to_csv().as_bytes())?;
            println!("macro_f1 {:.6}", report.macro_f1);
        }
        write_json(
            &out.join(pipeline::RESOLVED_CONFIG_FILE),
            &json!({ "command": "train", "train": a.train, "test": a.test, "config": echo(&cfg) }),
        )
    };
    run().map_err(|f| (f, Some(out.clone())))?;
    Ok(out)
}

fn importance(a: ImportanceArgs) -> StageResult {
    let out = resolve_out_dir(a.out.as_deref(), None);
    let run = || -> CliResult<()> {
        let model = load_model(&a.model)?;
        let mode = a
            .mode
            .map_or_else(|| model.config.family.default_importance(), ImportanceMode::from);
        let ranking = feature_importance(&model, mode);
        write_json(&out.join(pipeline::RANKING_JSON_FILE), &ranking)?;
        write_file(&out.join(pipeline::RANKING_CSV_FILE), ranking.to_csv().as_bytes())?;
        write_json(
            &out.join(pipeline::RESOLVED_CONFIG_FILE),
            &json!({ "command": "importance", "model": a.model, "mode": mode }),
        )?;
        println!("{}", ranking.top(5).join(" "));
        Ok(())
    };
    run().map_err(|f| (f, Some(out.clone())))?;
    Ok(out)
}

fn rfa(a: RfaArgs) -> StageResult {
    let (mut cfg, out) = resolve(&a.common).map_err(no_dir)?;
    if let Some(t) = a.threshold {
        cfg.rfa.threshold = t;
    }
    if let Some(s) = a.snr {
        cfg.rfa.snr_db = s;
    }
    if a.max_sensors.is_some() {
        cfg.rfa.max_sensors = a.max_sensors;
    }
    let run = || -> CliResult<()> {
        let cfg = cfg.resolve()?;
        let train = load_csv(&a.train)?;
        let test = load_csv(&a.test)?;
        let text = read_text(&a.ranking, "selection", "run_rfa")?;
        let ranking: ImportanceRanking = serde_json::from_str(&text).map_err(|e| Failure::parse(&a.ranking, &e))?;
        let rfa_cfg = RfaConfig {
            threshold: cfg.rfa.threshold,
            ranking,
            ensemble_config: cfg.ensemble_config(),
            robustness_snr_db: cfg.rfa.snr_db,
            max_sensors: cfg.rfa.max_sensors,
            noise_seed: cfg.rfa_noise_seed(),
        };
        let outcome = run_rfa_with_model(&train, &test, &rfa_cfg).stage("selection", "run_rfa")?;
        let trace = &outcome.trace;
        write_file(
            &out.join(pipeline::RFA_JSON_FILE),
            trace.to_json().stage("selection", "run_rfa")?.as_bytes(),
        )?;
        write_file(&out.join(pipeline::RFA_CSV_FILE), trace.to_csv().as_bytes())?;
        write_file(&out.join(pipeline::RFA_SVG_FILE), pipeline::rfa_svg(trace).as_bytes())?;
        write_file(
            &out.join(pipeline::MODEL_FILE),
            outcome.model.to_json().stage("ensembles", "to_json")?.as_bytes(),
        )?;
        write_json(
            &out.join(pipeline::RESOLVED_CONFIG_FILE),
            &json!({
                "command": "rfa",
                "train": a.train,
                "test": a.test,
                "ranking": a.ranking,
                "config": echo(&cfg),
            }),
        )?;
        println!(
            "selected {} sensor(s): {} (threshold met: {})",
            trace.selected_set.len(),
            trace.selected_set.join(" "),
            trace.threshold_met
        );
        Ok(())
    };
    run().map_err(|f| (f, Some(out.clone())))?;
    Ok(out)
}

fn robustness(a: RobustnessArgs) -> StageResult {
    let mut cfg = read_config(a.config.as_deref()).map_err(no_dir)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(snr) = &a.snr {
        cfg.robustness.snr_list = snr.clone();
    }
    if a.fail_sensor {
        cfg.robustness.include_failure = true;
    } else if a.snr.is_some() {
        cfg.robustness.include_failure = false;
    }
    let out = resolve_out_dir(a.out.as_deref(), cfg.output_dir.as_deref());
    let run = || -> CliResult<()> {
        let cfg = cfg.resolve()?;
        let model = load_model(&a.model)?;
        let test = load_csv(&a.test)?
            .select_sensors(&model.symbols)
            .stage("dataset", "select_sensors")?;
        let sensor = match &a.sensor {
            Some(s) => s.clone(),
            None => model.symbols[0].clone(),
        };
        let report = run_scenarios(
            &model,
            &test,
            &sensor,
            &cfg.robustness.snr_list,
            cfg.robustness.include_failure,
            cfg.scenario_seed(),
        )
        .stage("robustness", "run_scenarios")?;
        write_file(
            &out.join(pipeline::ROBUSTNESS_JSON_FILE),
            report.to_json().stage("robustness", "run_scenarios")?.as_bytes(),
        )?;
        write_file(&out.join(pipeline::ROBUSTNESS_CSV_FILE), report.to_csv().as_bytes())?;
        write_json(
            &out.join(pipeline::RESOLVED_CONFIG_FILE),
            &json!({
                "command": "robustness",
                "model": a.model,
                "test": a.test,
                "sensor": sensor,
                "config": echo(&cfg),
            }),
        )?;
        print!("{}", report.to_csv());
        Ok(())
    };
    run().map_err(|f| (f, Some(out.clone())))?;
    Ok(out)
}

fn pipeline_cmd(a: PipelineArgs) -> StageResult {
    let (mut cfg, out) = resolve(&a.common).map_err(no_dir)?;
    if let Some(path) = &a.data {
        cfg.dataset = DatasetSource::Csv {
            path: path.clone(),
            schema_policy: SchemaPolicy::Infer,
        };
    }
    if let Some(rows) = a.rows {
        match &mut cfg.dataset {
            DatasetSource::Simgen(g) => g.n_rows = rows,
            DatasetSource::Csv { .. } => {
                return Err((
                    Failure {
                        field: Some("rows".into()),
                        ..Failure::new(
                            "cli",
                            "parse_config",
                            "invalid_value",
                            "--rows applies to generated data only",
                        )
                    },
                    Some(out),
                ))
            }
        }
    }
    if let Some(t) = a.threshold {
        cfg.rfa.threshold = t;
    }
    if let Some(s) = a.snr {
        cfg.rfa.snr_db = s;
    }
    if a.max_sensors.is_some() {
        cfg.rfa.max_sensors = a.max_sensors;
    }
    let run = || -> CliResult<()> {
        let outputs = run_pipeline(cfg)?;
        let mut echoed = outputs.clone();
        echoed.config = echo(&outputs.config);
        write_artifacts(&echoed, &out)?;
        let r = &outputs.robustness;
        println!(
            "all-sensor macro_f1 {:.4}; selected {} sensor(s): {}; threshold met: {}",
            outputs.full_report.macro_f1,
            outputs.rfa.selected_set.len(),
            outputs.rfa.selected_set.join(" "),
            outputs.rfa.threshold_met
        );
        print!("{}", r.to_csv());
        Ok(())
    };
    run().map_err(|f| (f, Some(out.clone())))?;
    Ok(out)
}

/// Writes the failure into `dir` (best effort) and to stderr.
pub fn report_failure(failure: &Failure, dir: Option<&Path>) {
    let text = failure.to_json();
    if let Some(dir) = dir {
        if let Err(e) = write_atomic(&dir.join(ERROR_FILE), text.as_bytes()) {
            eprintln!("could not write {}: {e}", dir.join(ERROR_FILE).display());
        }
    }
    eprint!("{text}");
}
