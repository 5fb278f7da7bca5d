//! Synthetic refrigeration-rig data: every row is a class-conditional
//! Gaussian sample over the full 40-sensor schema.
//!
//! A sensor reads `baseline + shift[class] + N(0, sd)`. Only informative
//! sensors carry a shift; the default shifts sit mostly on the condenser
//! side (T_FI, T_FO, T_C).

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::schema::{installed_sensors, lookup_installed, SensorKind, FAULT_OCCURRENCE};
use crate::dataset::{ClassId, Dataset, DatasetError};
use crate::rng::{derive_seed, seeded_rng};

#[derive(Debug, Error)]
pub enum SimgenError {
    #[error("class proportions must be non-negative and sum to 1, got {0:?}")]
    BadProportions(Vec<f64>),
    #[error("unknown sensor symbol {0}")]
    UnknownSymbol(String),
    #[error("sensor {symbol} has {got} shifts for {expected} classes")]
    ShiftLength {
        symbol: String,
        expected: usize,
        got: usize,
    },
    #[error("need at least one row per class ({classes}), got {rows}")]
    TooFewRows { rows: usize, classes: usize },
    #[error("at least one informative sensor is required")]
    NoInformativeSensors,
    #[error("nuisance_noise_sd must be finite and non-negative, got {0}")]
    BadNoise(f64),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformativeSensor {
    pub symbol: String,
    /// Mean shift per class id.
    pub shifts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_rows: usize,
    pub class_proportions: Vec<f64>,
    pub informative_sensors: Vec<InformativeSensor>,
    pub nuisance_noise_sd: f64,
    pub seed: u64,
}

fn informative(symbol: &str, shifts: [f64; 7]) -> InformativeSensor {
    InformativeSensor {
        symbol: symbol.to_string(),
        shifts: shifts.to_vec(),
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_rows: 20_000,
            class_proportions: FAULT_OCCURRENCE.to_vec(),
            informative_sensors: vec![
                informative("T_FI", [0.0, 5.0, 0.0, 0.0, 5.0, 5.0, 0.0]),
                informative("T_FO", [0.0, 0.0, 5.0, 0.0, 5.0, 5.0, 5.0]),
                informative("T_C", [0.0, 0.0, 0.0, 5.0, 0.0, 5.0, 5.0]),
                informative("T_sup2", [0.0, 4.0, 4.0, 4.0, 0.0, 0.0, 0.0]),
                informative("T_sup1", [0.0, 0.0, 0.0, 0.0, 4.0, 0.0, 4.0]),
                informative("W_6", [0.0, 0.0, 0.0, 0.0, 0.0, 3.0, 0.0]),
                informative("T_ret2", [0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
                informative("P_suc3", [0.0, 0.0, -2.0, 0.0, 0.0, 0.0, 0.0]),
            ],
            nuisance_noise_sd: 1.0,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SimgenError> {
        let k = self.class_proportions.len();
        let sum: f64 = self.class_proportions.iter().sum();
        if k < 2 || self.class_proportions.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(SimgenError::BadProportions(self.class_proportions.clone()));
        }
        if self.n_rows < k {
            return Err(SimgenError::TooFewRows {
                rows: self.n_rows,
                classes: k,
            });
        }
        if self.informative_sensors.is_empty() {
            return Err(SimgenError::NoInformativeSensors);
        }
        for s in &self.informative_sensors {
            if lookup_installed(&s.symbol).is_none() {
                return Err(SimgenError::UnknownSymbol(s.symbol.clone()));
            }
            if s.shifts.len() != k {
                return Err(SimgenError::ShiftLength {
                    symbol: s.symbol.clone(),
                    expected: k,
                    got: s.shifts.len(),
                });
            }
        }
        if !(self.nuisance_noise_sd.is_finite() && self.nuisance_noise_sd >= 0.0) {
            return Err(SimgenError::BadNoise(self.nuisance_noise_sd));
        }
        Ok(())
    }
}

/// Plausible operating level of a healthy sensor.
fn baseline(symbol: &str, kind: SensorKind) -> f64 {
    match kind {
        SensorKind::Power if symbol == "W_6" => 800.0,
        SensorKind::Power => 3500.0,
        SensorKind::MassFlow => 2.0,
        SensorKind::Pressure if symbol.starts_with("P_dis") => 9.0,
        SensorKind::Pressure => 3.0,
        SensorKind::Temperature => match symbol {
            "T_FI" => 22.0,
            "T_FO" => 32.0,
            "T_C" => 28.0,
            "T_sup1" => 2.0,
            "T_ret1" => 6.0,
            "T_sup2" => -22.0,
            "T_ret2" => -18.0,
            s if s.starts_with("T_dis") => 75.0,
            _ => 5.0,
        },
    }
}

/// Class counts by largest remainder, lowest id first on equal remainders.
fn class_quota(n: usize, proportions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = proportions.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..exact.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let short = n - counts.iter().sum::<usize>();
    for &c in order.iter().take(short) {
        counts[c] += 1;
    }
    counts
}

/// Generates the full installed schema. Labels are a seeded shuffle of the
/// class quota; row `i` draws its readings from `derive_seed(seed, i)`, so
/// the output does not depend on the thread count.
pub fn generate_dataset(cfg: &GeneratorConfig) -> Result<Dataset, SimgenError> {
    cfg.validate()?;
    let schema = installed_sensors();
    let k = cfg.class_proportions.len();
    let n = cfg.n_rows;

    let mut labels: Vec<ClassId> = class_quota(n, &cfg.class_proportions)
        .iter()
        .enumerate()
        .flat_map(|(c, &count)| std::iter::repeat_n(c as ClassId, count))
        .collect();
    labels.shuffle(&mut seeded_rng(derive_seed(cfg.seed, u64::MAX)));

    let zero = vec![0.0; k];
    let means: Vec<(f64, &[f64])> = schema
        .iter()
        .map(|m| {
            let shifts = cfg
                .informative_sensors
                .iter()
                .find(|s| s.symbol == m.symbol)
                .map_or(zero.as_slice(), |s| s.shifts.as_slice());
            (baseline(&m.symbol, m.kind), shifts)
        })
        .collect();
    let normal = Normal::new(0.0, cfg.nuisance_noise_sd).expect("validated sd");

    let rows: Vec<Vec<f64>> = labels
        .par_iter()
        .enumerate()
        .map(|(i, &class)| {
            let mut rng = seeded_rng(derive_seed(cfg.seed, i as u64));
            means
                .iter()
                .map(|(base, shifts)| base + shifts[class as usize] + normal.sample(&mut rng))
                .collect()
        })
        .collect();
    let columns = (0..schema.len()).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    Ok(Dataset::new(schema, columns, labels, k)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quota_rounds_to_total() {
        assert_eq!(class_quota(10, &[0.5, 0.25, 0.25]), vec![5, 3, 2]);
        assert_eq!(class_quota(7000, &FAULT_OCCURRENCE).iter().sum::<usize>(), 7000);
    }

    #[test]
    fn config_errors() {
        let mut cfg = GeneratorConfig {
            class_proportions: vec![0.5, 0.4],
            ..GeneratorConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(SimgenError::BadProportions(_))));
        cfg = GeneratorConfig::default();
        cfg.informative_sensors[0].symbol = "T_X".into();
        assert!(matches!(cfg.validate(), Err(SimgenError::UnknownSymbol(_))));
        cfg = GeneratorConfig::default();
        cfg.informative_sensors[0].shifts.pop();
        assert!(matches!(cfg.validate(), Err(SimgenError::ShiftLength { .. })));
        cfg = GeneratorConfig {
            n_rows: 3,
            ..GeneratorConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(SimgenError::TooFewRows { .. })));
    }

    #[test]
    fn empty_json_is_default() {
        let cfg: GeneratorConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, GeneratorConfig::default());
        assert!(serde_json::from_str::<GeneratorConfig>(r#"{"rows": 5}"#).is_err());
    }

    #[test]
    fn full_schema_is_emitted() {
        let d = generate_dataset(&GeneratorConfig {
            n_rows: 70,
            ..GeneratorConfig::default()
        })
        .unwrap();
        assert_eq!(d.n_sensors(), 40);
        assert_eq!(d.n_rows(), 70);
        assert_eq!(d.n_classes(), 7);
    }
}
