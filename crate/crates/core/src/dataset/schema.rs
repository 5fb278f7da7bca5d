//! Installed-sensor schema and fault taxonomy of the laboratory CO₂ rig.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Power,
    MassFlow,
    Pressure,
    Temperature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "W")]
    Watt,
    #[serde(rename = "kg/min")]
    KgPerMin,
    #[serde(rename = "MPa")]
    MegaPascal,
    #[serde(rename = "°C")]
    Celsius,
}

impl SensorKind {
    /// The only unit a sensor of this kind may carry.
    pub fn unit(self) -> Unit {
        match self {
            SensorKind::Power => Unit::Watt,
            SensorKind::MassFlow => Unit::KgPerMin,
            SensorKind::Pressure => Unit::MegaPascal,
            SensorKind::Temperature => Unit::Celsius,
        }
    }
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Watt => "W",
            Unit::KgPerMin => "kg/min",
            Unit::MegaPascal => "MPa",
            Unit::Celsius => "°C",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorMeta {
    pub symbol: String,
    pub description: String,
    pub unit: Unit,
    pub kind: SensorKind,
}

impl SensorMeta {
    pub fn new(symbol: impl Into<String>, description: impl Into<String>, kind: SensorKind) -> Self {
        SensorMeta {
            symbol: symbol.into(),
            description: description.into(),
            unit: kind.unit(),
            kind,
        }
    }

    /// Metadata for a column whose symbol is not part of the installed
    /// schema. Unknown sensors default to temperatures.
    pub fn inferred(symbol: impl Into<String>) -> Self {
        SensorMeta::new(symbol, "", SensorKind::Temperature)
    }
}

const INSTALLED: &[(&str, &str, SensorKind)] = &[
    ("W_1", "MT 1st compressor power", SensorKind::Power),
    ("W_2", "MT 2nd compressor power", SensorKind::Power),
    ("W_3", "MT 3rd compressor power", SensorKind::Power),
    ("W_4", "LT 1st compressor power", SensorKind::Power),
    ("W_5", "LT 2nd compressor power", SensorKind::Power),
    ("W_6", "Condenser fan power", SensorKind::Power),
    ("M_1", "Flash tank bypass mass flow rate", SensorKind::MassFlow),
    ("M_2", "LT evaporator mass flow rate", SensorKind::MassFlow),
    ("M_3", "MT evaporator mass flow rate", SensorKind::MassFlow),
    ("P_dis1", "MT compressor rack outlet pressure", SensorKind::Pressure),
    ("P_suc1", "MT compressor rack inlet pressure", SensorKind::Pressure),
    ("P_dis2", "LT compressor rack outlet pressure", SensorKind::Pressure),
    ("P_suc2", "LT compressor rack inlet pressure", SensorKind::Pressure),
    ("P_dis3", "Flash tank vapor outlet pressure", SensorKind::Pressure),
    ("P_suc3", "LT display case suction pressure", SensorKind::Pressure),
    ("P_suc4", "MT display case suction pressure", SensorKind::Pressure),
    (
        "T_dis1",
        "MT 1st compressor discharge temperature",
        SensorKind::Temperature,
    ),
    (
        "T_suc1",
        "MT 1st compressor suction temperature",
        SensorKind::Temperature,
    ),
    (
        "T_dis2",
        "MT 2nd compressor discharge temperature",
        SensorKind::Temperature,
    ),
    (
        "T_suc2",
        "MT 2nd compressor suction temperature",
        SensorKind::Temperature,
    ),
    (
        "T_dis3",
        "MT 3rd compressor discharge temperature",
        SensorKind::Temperature,
    ),
    (
        "T_suc3",
        "MT 3rd compressor suction temperature",
        SensorKind::Temperature,
    ),
    (
        "T_dis4",
        "LT 1st compressor discharge temperature",
        SensorKind::Temperature,
    ),
    (
        "T_suc4",
        "LT 1st compressor suction temperature",
        SensorKind::Temperature,
    ),
    (
        "T_dis5",
        "LT 2nd compressor discharge temperature",
        SensorKind::Temperature,
    ),
    (
        "T_suc5",
        "LT 2nd compressor suction temperature",
        SensorKind::Temperature,
    ),
    (
        "T_dis6",
        "MT compressor rack outlet temperature",
        SensorKind::Temperature,
    ),
    (
        "T_suc6",
        "MT compressor rack inlet temperature",
        SensorKind::Temperature,
    ),
    (
        "T_dis7",
        "LT compressor rack outlet temperature",
        SensorKind::Temperature,
    ),
    (
        "T_suc7",
        "LT compressor rack inlet temperature",
        SensorKind::Temperature,
    ),
    ("T_suc8", "Flash tank vapor outlet temperature", SensorKind::Temperature),
    ("T_suc9", "LT display case suction temperature", SensorKind::Temperature),
    (
        "T_suc10",
        "MT display case suction temperature",
        SensorKind::Temperature,
    ),
    ("T_C", "Condenser outlet temperature", SensorKind::Temperature),
    ("T_FI", "Condenser inlet air temperature", SensorKind::Temperature),
    ("T_FO", "Condenser outlet air temperature", SensorKind::Temperature),
    (
        "T_sup1",
        "MT evaporator supply air temperature",
        SensorKind::Temperature,
    ),
    (
        "T_ret1",
        "MT evaporator return air temperature",
        SensorKind::Temperature,
    ),
    (
        "T_sup2",
        "LT evaporator supply air temperature",
        SensorKind::Temperature,
    ),
    (
        "T_ret2",
        "LT evaporator return air temperature",
        SensorKind::Temperature,
    ),
];

/// The 40 sensors installed on the rig, in catalogue order.
pub fn installed_sensors() -> Vec<SensorMeta> {
    INSTALLED
        .iter()
        .map(|&(symbol, description, kind)| SensorMeta::new(symbol, description, kind))
        .collect()
}

pub fn lookup_installed(symbol: &str) -> Option<SensorMeta> {
    INSTALLED
        .iter()
        .find(|(s, _, _)| *s == symbol)
        .map(|&(symbol, description, kind)| SensorMeta::new(symbol, description, kind))
}

/// Condenser-side sensors.
pub const CONDENSER_SENSORS: [&str; 3] = ["T_FI", "T_FO", "T_C"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultClass {
    pub id: u32,
    pub name: String,
}

const FAULTS: &[&str] = &[
    "Non-faulty condition",
    "Open LT display case door",
    "Ice accumulation on LT evaporator coil",
    "LT evaporator expansion valve failure",
    "MT evaporator fan motor failure",
    "Condenser air path blockage",
    "MT evaporator air path blockage",
];

/// Class occurrence shares in the recorded (pre-undersampling) data, by id.
pub const FAULT_OCCURRENCE: [f64; 7] = [0.456, 0.091, 0.089, 0.091, 0.091, 0.091, 0.091];

/// Id 0 is the non-faulty condition; ids 1..=6 are the six tested faults.
pub fn fault_taxonomy() -> Vec<FaultClass> {
    FAULTS
        .iter()
        .enumerate()
        .map(|(id, name)| FaultClass {
            id: id as u32,
            name: (*name).to_string(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn installed_schema_has_forty_unique_sensors() {
        let sensors = installed_sensors();
        assert_eq!(sensors.len(), 40);
        let unique: HashSet<_> = sensors.iter().map(|s| s.symbol.as_str()).collect();
        assert_eq!(unique.len(), 40);
        let count = |k| sensors.iter().filter(|s| s.kind == k).count();
        assert_eq!(count(SensorKind::Temperature), 24);
        assert_eq!(count(SensorKind::Pressure), 7);
        assert_eq!(count(SensorKind::MassFlow), 3);
        assert_eq!(count(SensorKind::Power), 6);
    }

    #[test]
    fn units_follow_kinds() {
        for s in installed_sensors() {
            assert_eq!(s.unit, s.kind.unit(), "{}", s.symbol);
        }
        assert_eq!(lookup_installed("T_FI").unwrap().unit.symbol(), "°C");
        assert!(lookup_installed("T_XX").is_none());
    }

    #[test]
    fn taxonomy_is_dense_with_normal_at_zero() {
        let classes = fault_taxonomy();
        assert_eq!(classes.len(), 7);
        assert_eq!(classes[0].name, "Non-faulty condition");
        for (i, c) in classes.iter().enumerate() {
            assert_eq!(c.id as usize, i);
        }
        let total: f64 = FAULT_OCCURRENCE.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}
