//! Recursive feature addition: sensors are added one at a time in a fixed
//! importance order until the clean macro-F1 reaches a threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError};
use crate::ensemble::{fit_ensemble, EnsembleConfig, EnsembleError, EnsembleModel, ImportanceRanking};
use crate::robustness::{evaluate_perturbed, inject_awgn, NoiseSpec, RobustnessError};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("ranking is empty")]
    EmptyRanking,
    #[error("ranking sensors {ranking:?} do not match the dataset sensors {dataset:?}")]
    RankingSchemaMismatch { ranking: Vec<String>, dataset: Vec<String> },
    #[error("train and test sensors differ")]
    SplitSchemaMismatch,
    #[error("threshold must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("max_sensors must be at least 1")]
    InvalidMaxSensors,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Robustness(#[from] RobustnessError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfaConfig {
    pub threshold: f64,
    pub ranking: ImportanceRanking,
    pub ensemble_config: EnsembleConfig,
    pub robustness_snr_db: f64,
    pub max_sensors: Option<usize>,
    /// Seed of the noise injected at every iteration.
    pub noise_seed: u64,
}

impl RfaConfig {
    pub fn new(ranking: ImportanceRanking, ensemble_config: EnsembleConfig) -> Self {
        RfaConfig {
            threshold: 0.99,
            ranking,
            ensemble_config,
            robustness_snr_db: 3.0,
            max_sensors: None,
            noise_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(SelectionError::InvalidThreshold(self.threshold));
        }
        if self.max_sensors == Some(0) {
            return Err(SelectionError::InvalidMaxSensors);
        }
        if self.ranking.order.is_empty() {
            return Err(SelectionError::EmptyRanking);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfaIteration {
    pub sensor_added: String,
    pub sensor_count: usize,
    pub clean_f1: f64,
    pub noisy_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfaTrace {
    pub threshold: f64,
    pub noise_target: String,
    pub robustness_snr_db: f64,
    pub iterations: Vec<RfaIteration>,
    pub selected_set: Vec<String>,
    pub threshold_met: bool,
}

impl RfaTrace {
    pub fn to_json(&self) -> serde_json::Result<String> {
        crate::io::to_json_pretty(self)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sensor_count,sensor_added,clean_f1,noisy_f1\n");
        for it in &self.iterations {
            out.push_str(&format!(
                "{},{},{:?},{:?}\n",
                it.sensor_count, it.sensor_added, it.clean_f1, it.noisy_f1
            ));
        }
        out
    }

    pub fn last(&self) -> Option<&RfaIteration> {
        self.iterations.last()
    }
}

/// Trace plus the model trained at the last iteration.
#[derive(Debug, Clone)]
pub struct RfaOutcome {
    pub trace: RfaTrace,
    pub model: EnsembleModel,
}

pub fn run_rfa(train: &Dataset, test: &Dataset, cfg: &RfaConfig) -> Result<RfaTrace, SelectionError> {
    Ok(run_rfa_with_model(train, test, cfg)?.trace)
}

/// Iteration `k` trains a fresh ensemble (same seed every time) on the top
/// `k` ranked sensors and scores it on the clean test rows and on the test
/// rows with noise in the rank-1 sensor.
pub fn run_rfa_with_model(train: &Dataset, test: &Dataset, cfg: &RfaConfig) -> Result<RfaOutcome, SelectionError> {
    cfg.validate()?;
    let symbols = train.symbols();
    if test.symbols() != symbols {
        return Err(SelectionError::SplitSchemaMismatch);
    }
    let mut ranked = cfg.ranking.ranked_symbols();
    let mut sorted_rank = ranked.clone();
    sorted_rank.sort();
    let mut sorted_schema = symbols.clone();
    sorted_schema.sort();
    if cfg.ranking.symbols.len() != cfg.ranking.order.len() || sorted_rank != sorted_schema {
        return Err(SelectionError::RankingSchemaMismatch {
            ranking: cfg.ranking.symbols.clone(),
            dataset: symbols,
        });
    }
    let cap = cfg.max_sensors.unwrap_or(ranked.len()).min(ranked.len());
    ranked.truncate(cap);
    let noise_target = ranked[0].clone();

    let mut iterations = Vec::new();
    let mut last = None;
    let mut threshold_met = false;
    for k in 1..=cap {
        let prefix = &ranked[..k];
        let train_k = train.select_sensors(prefix)?;
        let test_k = test.select_sensors(prefix)?;
        let model = fit_ensemble(&train_k, &cfg.ensemble_config)?;
        let clean_f1 = model.evaluate(&test_k)?.macro_f1;
        let noisy = inject_awgn(
            &test_k,
            &NoiseSpec {
                snr_db: cfg.robustness_snr_db,
                target_sensor: noise_target.clone(),
                seed: cfg.noise_seed,
            },
        )?;
        let noisy_f1 = evaluate_perturbed(&model, &noisy)?;
        iterations.push(RfaIteration {
            sensor_added: prefix[k - 1].clone(),
            sensor_count: k,
            clean_f1,
            noisy_f1,
        });
        last = Some(model);
        if clean_f1 >= cfg.threshold {
            threshold_met = true;
            break;
        }
    }
    let selected_set = ranked[..iterations.len()].to_vec();
    Ok(RfaOutcome {
        trace: RfaTrace {
            threshold: cfg.threshold,
            noise_target,
            robustness_snr_db: cfg.robustness_snr_db,
            iterations,
            selected_set,
            threshold_met,
        },
        model: last.expect("at least one iteration runs"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SensorMeta;
    use crate::trees::ImportanceMode;

    fn ranking(symbols: &[&str], scores: Vec<f64>) -> ImportanceRanking {
        ImportanceRanking::from_scores(
            ImportanceMode::Mdi,
            symbols.iter().map(|s| s.to_string()).collect(),
            scores,
        )
    }

    fn small(rows: usize) -> Dataset {
        let a: Vec<f64> = (0..rows).map(|i| 10.0 + (i % 3) as f64 * 5.0).collect();
        let b: Vec<f64> = (0..rows).map(|i| ((i * 7) % 11) as f64).collect();
        let labels = (0..rows).map(|i| (i % 3) as u32).collect();
        Dataset::new(
            vec![SensorMeta::inferred("b"), SensorMeta::inferred("a")],
            vec![b, a],
            labels,
            3,
        )
        .unwrap()
    }

    #[test]
    fn stops_after_separating_sensor() {
        let d = small(60);
        let cfg = RfaConfig::new(
            ranking(&["b", "a"], vec![0.1, 0.9]),
            EnsembleConfig::random_forest().with_trees(5),
        );
        let trace = run_rfa(&d, &d, &cfg).unwrap();
        assert_eq!(trace.selected_set, vec!["a".to_string()]);
        assert_eq!(trace.iterations.len(), 1);
        assert!(trace.threshold_met);
        assert_eq!(trace.noise_target, "a");
    }

    #[test]
    fn config_errors() {
        let d = small(30);
        let mut cfg = RfaConfig::new(ranking(&["b", "a"], vec![0.1, 0.9]), EnsembleConfig::random_forest());
        cfg.threshold = 1.5;
        assert!(matches!(
            run_rfa(&d, &d, &cfg),
            Err(SelectionError::InvalidThreshold(_))
        ));
        cfg.threshold = 0.0;
        assert!(matches!(
            run_rfa(&d, &d, &cfg),
            Err(SelectionError::InvalidThreshold(_))
        ));
        let cfg = RfaConfig::new(ranking(&["b", "c"], vec![0.1, 0.9]), EnsembleConfig::random_forest());
        assert!(matches!(
            run_rfa(&d, &d, &cfg),
            Err(SelectionError::RankingSchemaMismatch { .. })
        ));
        let cfg = RfaConfig::new(ranking(&[], vec![]), EnsembleConfig::random_forest());
        assert!(matches!(run_rfa(&d, &d, &cfg), Err(SelectionError::EmptyRanking)));
    }

    #[test]
    fn csv_layout() {
        let trace = RfaTrace {
            threshold: 0.99,
            noise_target: "a".into(),
            robustness_snr_db: 3.0,
            iterations: vec![RfaIteration {
                sensor_added: "a".into(),
                sensor_count: 1,
                clean_f1: 1.0,
                noisy_f1: 0.5,
            }],
            selected_set: vec!["a".into()],
            threshold_met: true,
        };
        assert_eq!(
            trace.to_csv(),
            "sensor_count,sensor_added,clean_f1,noisy_f1\n1,a,1.0,0.5\n"
        );
    }
}
