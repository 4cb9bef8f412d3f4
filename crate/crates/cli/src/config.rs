//! Per-command configuration records, file loading and flag overrides.
//!
//! A command's configuration starts from its defaults, is overlaid with the
//! optional config file (JSON, or TOML when the extension is `.toml`) and
//! finally with command-line flags. Unknown keys are rejected.

use std::path::Path;

use bethe_core::cavity::{EtaProtocol, McBudget, RayConfig};
use bethe_core::disorder::DisorderSpec;
use bethe_core::graphs::{EnergyWindow, ResonanceConfig};
use bethe_core::numeric::inclusive_grid;
use bethe_core::phase::PhaseConfig;
use bethe_core::stats::{RrgScanConfig, TreeStatsConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

/// Either an explicit list or an inclusive `start:stop:step` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range { start, stop, step } => inclusive_grid(*start, *stop, *step),
        }
    }

    /// Parses `a:b:step`.
    pub fn parse_range(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected start:stop:step, got {s:?}"));
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"));
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || stop < start {
            return Err(format!("range {s:?} needs step > 0 and stop >= start"));
        }
        Ok(Grid::Range { start, stop, step })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovConfig {
    pub k: u32,
    pub disorder: DisorderSpec,
    pub lambda: f64,
    pub energies: Grid,
    pub protocol: EtaProtocol,
    pub mc: McBudget,
    pub seed: u64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            k: 2,
            disorder: DisorderSpec::cauchy(),
            lambda: 0.0,
            energies: Grid::Range { start: -4.0, stop: 4.0, step: 0.1 },
            protocol: EtaProtocol::default(),
            mc: McBudget::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreeEnergyConfig {
    pub k: u32,
    pub disorder: DisorderSpec,
    pub lambda: f64,
    pub energy: f64,
    pub s_values: Vec<f64>,
    /// Also extrapolate to `s = 1`.
    pub phi_at_one: bool,
    pub protocol: EtaProtocol,
    pub ray: RayConfig,
    pub mc: McBudget,
    pub seed: u64,
}

impl Default for FreeEnergyConfig {
    fn default() -> Self {
        Self {
            k: 2,
            disorder: DisorderSpec::cauchy(),
            lambda: 1.0,
            energy: 0.0,
            s_values: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            phi_at_one: true,
            protocol: EtaProtocol::default(),
            ray: RayConfig::default(),
            mc: McBudget::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DosConfig {
    pub k: u32,
    pub disorder: DisorderSpec,
    pub lambda: f64,
    pub energies: Grid,
    pub protocol: EtaProtocol,
    pub mc: McBudget,
    /// Also integrate the density of states up to each energy.
    pub ids: bool,
    pub ids_points: usize,
    pub seed: u64,
}

impl Default for DosConfig {
    fn default() -> Self {
        Self {
            k: 2,
            disorder: DisorderSpec::cauchy(),
            lambda: 0.0,
            energies: Grid::Range { start: -3.0, stop: 3.0, step: 0.1 },
            protocol: EtaProtocol::default(),
            mc: McBudget::default(),
            ids: false,
            ids_points: 41,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseScanConfig {
    pub phase: PhaseConfig,
    pub lambdas: Grid,
    pub energies: Grid,
    pub seed: u64,
    /// Keep per-point results under `<out>/cache` and reuse them.
    pub cache: bool,
}

impl Default for PhaseScanConfig {
    fn default() -> Self {
        Self {
            phase: PhaseConfig::default(),
            lambdas: Grid::Range { start: 0.1, stop: 2.0, step: 0.1 },
            energies: Grid::Range { start: -4.0, stop: 4.0, step: 0.25 },
            seed: 0,
            cache: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsMode {
    Tree,
    Rrg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralStatsConfig {
    pub mode: StatsMode,
    pub tree: TreeStatsConfig,
    pub rrg: RrgScanConfig,
    /// Write one spacing histogram per report row.
    pub histograms: bool,
}

impl Default for SpectralStatsConfig {
    fn default() -> Self {
        Self { mode: StatsMode::Rrg, tree: TreeStatsConfig::default(), rrg: RrgScanConfig::default(), histograms: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiniteTransportConfig {
    pub depth: u32,
    pub n_realizations: usize,
    pub window: EnergyWindow,
    pub radii: Vec<u32>,
    pub times: Grid,
}

impl Default for FiniteTransportConfig {
    fn default() -> Self {
        Self {
            depth: 7,
            n_realizations: 20,
            window: EnergyWindow { lo: -1.0, hi: 1.0 },
            radii: (1..=6).collect(),
            times: Grid::Range { start: 0.0, stop: 200.0, step: 0.5 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub k: u32,
    pub disorder: DisorderSpec,
    pub lambda: f64,
    pub energy: f64,
    pub eta: f64,
    pub distances: Vec<u32>,
    pub ray: RayConfig,
    pub mc: McBudget,
    /// Exact-diagonalization part on balls; skipped when absent.
    pub finite: Option<FiniteTransportConfig>,
    pub seed: u64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            k: 2,
            disorder: DisorderSpec::cauchy(),
            lambda: 0.3,
            energy: 0.0,
            eta: 0.01,
            distances: (0..=16).collect(),
            ray: RayConfig::default(),
            mc: McBudget::default(),
            finite: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdsConfig {
    pub k: u32,
    pub disorder: DisorderSpec,
    pub lambda: Option<f64>,
}

impl Default for ThresholdsConfig {
    fn default() -> Self {
        Self { k: 2, disorder: DisorderSpec::cauchy(), lambda: None }
    }
}

pub type ResonanceCmdConfig = ResonanceConfig;

/// Reads a config file into a JSON value.
pub fn load_file(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "toml") {
        let v: toml::Value = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::to_value(v).map_err(|e| CliError::Usage(e.to_string()))
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Sets `value` at the `/`-separated `path`, creating objects on the way.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('/').filter(|p| !p.is_empty()).collect();
    for (i, p) in parts.iter().enumerate() {
        if !cur.is_object() {
            *cur = Value::Object(Map::new());
        }
        let obj = cur.as_object_mut().expect("just made an object");
        if i + 1 == parts.len() {
            obj.insert((*p).to_string(), value);
            return Ok(());
        }
        cur = obj.entry((*p).to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Err(CliError::Usage(format!("empty override path {path:?}")))
}

/// Defaults, then the file, then overrides; returns the typed record.
pub fn resolve<T: Default + Serialize + DeserializeOwned>(file: Option<Value>, overrides: Vec<(String, Value)>) -> Result<T, CliError> {
    let mut v = serde_json::to_value(T::default()).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(f) = file {
        merge(&mut v, f);
    }
    for (path, x) in overrides {
        set_path(&mut v, &path, x)?;
    }
    serde_json::from_value(v).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
}

/// Recursive object merge; non-objects in `patch` replace the target.
fn merge(target: &mut Value, patch: Value) {
    match (target, patch) {
        (Value::Object(t), Value::Object(p)) => {
            for (k, v) in p {
                match t.get_mut(&k) {
                    // Tagged enums (anything with a "kind") are replaced wholesale so
                    // that fields of the default variant do not leak into another.
                    Some(existing) if existing.is_object() && v.is_object() && v.get("kind").is_none() => merge(existing, v),
                    _ => {
                        t.insert(k, v);
                    }
                }
            }
        }
        (t, p) => *t = p,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_parsing() {
        let g = Grid::parse_range("-4:4:0.1").unwrap();
        assert_eq!(g.points().len(), 81);
        assert!(Grid::parse_range("1:0:0.1").is_err());
        assert!(Grid::parse_range("0:1").is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let file = serde_json::json!({"lambda": 0.5, "mc": {"n_pool": 5000}});
        let cfg: LyapunovConfig = resolve(Some(file), vec![("lambda".into(), serde_json::json!(0.7))]).unwrap();
        assert_eq!(cfg.lambda, 0.7);
        assert_eq!(cfg.mc.n_pool, 5000);
        assert_eq!(cfg.mc.burn_in, McBudget::default().burn_in);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let file = serde_json::json!({"lamda": 0.5});
        assert!(resolve::<LyapunovConfig>(Some(file), vec![]).is_err());
        let nested = serde_json::json!({"mc": {"pool": 5}});
        assert!(resolve::<LyapunovConfig>(Some(nested), vec![]).is_err());
    }

    #[test]
    fn tagged_values_replace_defaults() {
        let file = serde_json::json!({"disorder": {"kind": "uniform"}});
        let cfg: LyapunovConfig = resolve(Some(file), vec![]).unwrap();
        assert_eq!(cfg.disorder, DisorderSpec::uniform());
    }
}
