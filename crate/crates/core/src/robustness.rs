//! AWGN injection at a target SNR, sensor-failure simulation and the
//! robustness scenario sweep.
//!
//! `SNR_dB = 10·log10(P_signal / P_noise)`, with `P_signal` the mean square
//! of the raw (uncentered) column.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError};
use crate::ensemble::{EnsembleError, EnsembleModel};
use crate::rng::{derive_seed, seeded_rng};

#[derive(Debug, Error)]
pub enum RobustnessError {
    #[error("empty signal")]
    EmptyVector,
    #[error("signal contains a non-finite value")]
    NonFinite,
    #[error("signal power is zero; no finite SNR can be realised")]
    ZeroSignal,
    #[error("invalid SNR {0} dB")]
    InvalidSnr(f64),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// Mean of squares.
pub fn signal_power(values: &[f64]) -> Result<f64, RobustnessError> {
    if values.is_empty() {
        return Err(RobustnessError::EmptyVector);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(RobustnessError::NonFinite);
    }
    Ok(values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64)
}

/// Noise power giving `snr_db` against a signal of power `p_signal`.
pub fn noise_power_for_snr(p_signal: f64, snr_db: f64) -> Result<f64, RobustnessError> {
    if !snr_db.is_finite() {
        return Err(RobustnessError::InvalidSnr(snr_db));
    }
    if p_signal.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || !p_signal.is_finite() {
        return Err(RobustnessError::ZeroSignal);
    }
    Ok(p_signal / 10f64.powf(snr_db / 10.0))
}

/// `10·log10(p_signal / p_noise)`.
pub fn snr_db(p_signal: f64, p_noise: f64) -> f64 {
    10.0 * (p_signal / p_noise).log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub target_sensor: String,
    pub seed: u64,
}

/// A test set with exactly one column replaced.
#[derive(Debug, Clone)]
pub struct PerturbedTestSet<'a> {
    pub base: &'a Dataset,
    pub perturbed_column: usize,
    pub noisy_values: Vec<f64>,
    /// Empirical SNR of the applied perturbation; `None` for a failed sensor.
    pub measured_snr_db: Option<f64>,
}

impl PerturbedTestSet<'_> {
    /// The full perturbed dataset; every other column is copied unchanged.
    pub fn to_dataset(&self) -> Dataset {
        self.base
            .with_column(self.perturbed_column, self.noisy_values.clone())
            .expect("perturbed column keeps the base shape and is finite")
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        if col == self.perturbed_column {
            self.noisy_values[row]
        } else {
            self.base.column(col)[row]
        }
    }
}

/// Adds zero-mean Gaussian noise of power `P_signal / 10^(snr/10)` to the
/// target column.
pub fn inject_awgn<'a>(test: &'a Dataset, spec: &NoiseSpec) -> Result<PerturbedTestSet<'a>, RobustnessError> {
    let col = test.require_sensor(&spec.target_sensor)?;
    let clean = test.column(col);
    let p_signal = signal_power(clean)?;
    let p_noise = noise_power_for_snr(p_signal, spec.snr_db)?;
    let normal = Normal::new(0.0, p_noise.sqrt()).map_err(|_| RobustnessError::InvalidSnr(spec.snr_db))?;
    let mut rng = seeded_rng(spec.seed);
    let noise: Vec<f64> = (0..clean.len()).map(|_| normal.sample(&mut rng)).collect();
    let measured = snr_db(p_signal, signal_power(&noise)?);
    let noisy_values = clean.iter().zip(&noise).map(|(s, n)| s + n).collect();
    Ok(PerturbedTestSet {
        base: test,
        perturbed_column: col,
        noisy_values,
        measured_snr_db: Some(measured),
    })
}

/// Replaces the sensor's readings with a constant 0.0.
pub fn fail_sensor<'a>(test: &'a Dataset, sensor: &str) -> Result<PerturbedTestSet<'a>, RobustnessError> {
    let col = test.require_sensor(sensor)?;
    Ok(PerturbedTestSet {
        base: test,
        perturbed_column: col,
        noisy_values: vec![0.0; test.n_rows()],
        measured_snr_db: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scenario {
    Snr { value_db: f64 },
    SensorFailure,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scenario::Snr { value_db } => write!(f, "snr_{value_db}db"),
            Scenario::SensorFailure => f.write_str("sensor_failure"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub f1: f64,
    #[serde(default)]
    pub measured_snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub model_id: String,
    pub optimal_set: Vec<String>,
    pub target_sensor: String,
    pub seed: u64,
    pub baseline_f1: f64,
    pub scenario_results: Vec<ScenarioResult>,
}

impl RobustnessReport {
    pub fn to_json(&self) -> serde_json::Result<String> {
        crate::io::to_json_pretty(self)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("scenario,f1\nbaseline,{:?}\n", self.baseline_f1);
        for r in &self.scenario_results {
            out.push_str(&format!("{},{:?}\n", r.scenario, r.f1));
        }
        out
    }

    pub fn f1_at_snr(&self, db: f64) -> Option<f64> {
        self.scenario_results.iter().find_map(|r| match r.scenario {
            Scenario::Snr { value_db } if value_db == db => Some(r.f1),
            _ => None,
        })
    }

    pub fn failure_f1(&self) -> Option<f64> {
        self.scenario_results
            .iter()
            .find(|r| r.scenario == Scenario::SensorFailure)
            .map(|r| r.f1)
    }
}

/// Macro-F1 of the model on a perturbed test set.
pub fn evaluate_perturbed(model: &EnsembleModel, p: &PerturbedTestSet<'_>) -> Result<f64, RobustnessError> {
    Ok(model.evaluate(&p.to_dataset())?.macro_f1)
}

/// Baseline F1, then one F1 per SNR in `snr_list` (scenario `i` draws its
/// noise from `derive_seed(seed, i)`), then the failure scenario when
/// requested.
pub fn run_scenarios(
    model: &EnsembleModel,
    test: &Dataset,
    top_sensor: &str,
    snr_list: &[f64],
    include_failure: bool,
    seed: u64,
) -> Result<RobustnessReport, RobustnessError> {
    model.check_schema(test)?;
    test.require_sensor(top_sensor)?;
    let baseline_f1 = model.evaluate(test)?.macro_f1;
    let mut scenarios: Vec<Scenario> = snr_list.iter().map(|&value_db| Scenario::Snr { value_db }).collect();
    if include_failure {
        scenarios.push(Scenario::SensorFailure);
    }
    let scenario_results = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, &scenario)| {
            let perturbed = match scenario {
                Scenario::Snr { value_db } => inject_awgn(
                    test,
                    &NoiseSpec {
                        snr_db: value_db,
                        target_sensor: top_sensor.to_string(),
                        seed: derive_seed(seed, i as u64),
                    },
                )?,
                Scenario::SensorFailure => fail_sensor(test, top_sensor)?,
            };
            Ok(ScenarioResult {
                scenario,
                f1: evaluate_perturbed(model, &perturbed)?,
                measured_snr_db: perturbed.measured_snr_db,
            })
        })
        .collect::<Result<Vec<_>, RobustnessError>>()?;
    Ok(RobustnessReport {
        model_id: model.id(),
        optimal_set: model.symbols.clone(),
        target_sensor: top_sensor.to_string(),
        seed,
        baseline_f1,
        scenario_results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SensorMeta;

    fn column_dataset(values: Vec<f64>, other: Vec<f64>) -> Dataset {
        let n = values.len();
        Dataset::new(
            vec![SensorMeta::inferred("T_FI"), SensorMeta::inferred("T_FO")],
            vec![values, other],
            (0..n).map(|i| (i % 2) as u32).collect(),
            2,
        )
        .unwrap()
    }

    #[test]
    fn power_examples() {
        assert_eq!(signal_power(&[1.0; 4]).unwrap(), 1.0);
        assert_eq!(signal_power(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(signal_power(&[3.0, 4.0]).unwrap(), 12.5);
        assert!(matches!(signal_power(&[]), Err(RobustnessError::EmptyVector)));
    }

    #[test]
    fn noise_power_examples() {
        assert_eq!(noise_power_for_snr(1.0, 0.0).unwrap(), 1.0);
        assert!((noise_power_for_snr(1.0, 10.0).unwrap() - 0.1).abs() < 1e-15);
        let p3 = noise_power_for_snr(1.0, 3.0).unwrap();
        assert!((p3 - 0.501_187_233_627_272_3).abs() < 1e-12);
        assert!(matches!(
            noise_power_for_snr(0.0, 3.0),
            Err(RobustnessError::ZeroSignal)
        ));
    }

    #[test]
    fn injection_is_seeded_and_single_column() {
        let d = column_dataset((0..1000).map(|i| 20.0 + (i % 7) as f64).collect(), vec![1.5; 1000]);
        let spec = NoiseSpec {
            snr_db: 3.0,
            target_sensor: "T_FI".into(),
            seed: 9,
        };
        let a = inject_awgn(&d, &spec).unwrap();
        let b = inject_awgn(&d, &spec).unwrap();
        assert_eq!(a.noisy_values, b.noisy_values);
        let noisy = a.to_dataset();
        assert_eq!(noisy.column(1), d.column(1));
        assert_ne!(noisy.column(0), d.column(0));
        let zero = column_dataset(vec![0.0; 10], vec![1.0; 10]);
        assert!(matches!(inject_awgn(&zero, &spec), Err(RobustnessError::ZeroSignal)));
        let unknown = NoiseSpec {
            target_sensor: "T_C".into(),
            ..spec
        };
        assert!(matches!(inject_awgn(&d, &unknown), Err(RobustnessError::Dataset(_))));
    }

    #[test]
    fn failure_zeroes_the_column() {
        let d = column_dataset(vec![3.0, 4.0], vec![5.0, 6.0]);
        let f = fail_sensor(&d, "T_FO").unwrap().to_dataset();
        assert_eq!(f.column(1), &[0.0, 0.0]);
        assert_eq!(f.column(0), d.column(0));
        assert_eq!(signal_power(f.column(1)).unwrap(), 0.0);
    }

    #[test]
    fn csv_layout() {
        let r = RobustnessReport {
            model_id: "m".into(),
            optimal_set: vec!["T_FI".into()],
            target_sensor: "T_FI".into(),
            seed: 0,
            baseline_f1: 1.0,
            scenario_results: vec![
                ScenarioResult {
                    scenario: Scenario::Snr { value_db: 3.0 },
                    f1: 0.5,
                    measured_snr_db: Some(3.01),
                },
                ScenarioResult {
                    scenario: Scenario::SensorFailure,
                    f1: 0.25,
                    measured_snr_db: None,
                },
            ],
        };
        assert_eq!(
            r.to_csv(),
            "scenario,f1\nbaseline,1.0\nsnr_3db,0.5\nsensor_failure,0.25\n"
        );
        assert_eq!(r.f1_at_snr(3.0), Some(0.5));
        assert_eq!(r.failure_f1(), Some(0.25));
    }
}
