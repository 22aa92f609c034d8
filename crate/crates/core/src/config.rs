//! Experiment files.
//!
//! An experiment is a TOML document with the sections `[system]`,
//! `[solver]` (and `[solver.penalty]`), `[benchmark]` and `[experiment]`.
//! Every section is optional and falls back to its defaults; unknown keys
//! are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::benchmarks::{BenchmarkConfig, Scheme};
use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    PMaxDbm,
    DAvg,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSettings {
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub num_realizations: usize,
    /// Realization `r` uses channel seed `base_seed + r`.
    pub base_seed: u64,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            sweep_variable: SweepVariable::PMaxDbm,
            sweep_values: vec![0.0, 5.0, 10.0],
            schemes: Scheme::ALL.to_vec(),
            num_realizations: 20,
            base_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub system: SystemConfig,
    pub solver: SolverConfig,
    pub benchmark: BenchmarkConfig,
    pub experiment: ExperimentSettings,
}

impl Default for ExperimentSpec {
    /// Desk-scale power sweep.
    fn default() -> Self {
        ExperimentSpec {
            system: SystemConfig::desk(),
            solver: SolverConfig::default(),
            benchmark: BenchmarkConfig::default(),
            experiment: ExperimentSettings::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.solver.validate()?;
        self.benchmark.validate()?;
        let e = &self.experiment;
        if e.num_realizations == 0 {
            return Err(Error::Config("num_realizations must be at least 1".into()));
        }
        if e.schemes.is_empty() {
            return Err(Error::Config("at least one scheme is required".into()));
        }
        if e.sweep_variable != SweepVariable::None && e.sweep_values.is_empty() {
            return Err(Error::Config("sweep_values must be nonempty when sweeping".into()));
        }
        for &v in &self.sweep_points() {
            self.system_at(v)?.validate()?;
        }
        Ok(())
    }

    /// Values iterated over; a single `NaN` placeholder when not sweeping.
    pub fn sweep_points(&self) -> Vec<f64> {
        match self.experiment.sweep_variable {
            SweepVariable::None => vec![f64::NAN],
            _ => self.experiment.sweep_values.clone(),
        }
    }

    /// System configuration with the sweep variable set to `value`.
    pub fn system_at(&self, value: f64) -> Result<SystemConfig> {
        let mut sys = self.system.clone();
        match self.experiment.sweep_variable {
            SweepVariable::PMaxDbm => sys.p_max_dbm = crate::model::PowerLimit::Uniform(value),
            SweepVariable::DAvg => sys.d_avg = value,
            SweepVariable::None => {}
        }
        Ok(sys)
    }
}

pub fn parse_experiment(text: &str) -> Result<ExperimentSpec> {
    let cfg_err = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
    let mut doc: toml::Table = toml::from_str(text).map_err(|e| cfg_err(&e))?;
    // a partial [system] section fills its gaps from the desk scenario, not
    // from the field-wise defaults
    if let Some(toml::Value::Table(user)) = doc.get("system") {
        let toml::Value::Table(mut base) = toml::Value::try_from(SystemConfig::desk()).map_err(|e| cfg_err(&e))? else {
            unreachable!("a struct serializes to a table")
        };
        base.extend(user.clone());
        doc.insert("system".into(), toml::Value::Table(base));
    }
    let spec: ExperimentSpec = doc.try_into().map_err(|e| cfg_err(&e))?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_experiment(path: impl AsRef<Path>) -> Result<ExperimentSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_experiment(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(parse_experiment("").unwrap(), ExperimentSpec::default());
    }

    #[test]
    fn sections_override_fields() {
        let spec = parse_experiment(
            r#"
            [system]
            num_users = 6
            d_avg = 2.0
            [solver]
            max_inner = 7
            [solver.penalty]
            alpha = 2.5
            [experiment]
            sweep_variable = "d_avg"
            sweep_values = [2, 3]
            schemes = ["PBSCA", "RS"]
            num_realizations = 3
            "#,
        )
        .unwrap();
        assert_eq!(spec.system.num_users, 6);
        assert_eq!(spec.system.cell_radius_m, SystemConfig::desk().cell_radius_m);
        assert_eq!(spec.solver.max_inner, 7);
        assert_eq!(spec.solver.penalty.alpha, 2.5);
        assert_eq!(spec.experiment.sweep_variable, SweepVariable::DAvg);
        assert_eq!(spec.experiment.schemes, vec![Scheme::Pbsca, Scheme::Rs]);
        assert_eq!(spec.system_at(3.0).unwrap().d_avg, 3.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(parse_experiment("[system]\nbogus = 1\n"), Err(Error::Config(_))));
        assert!(matches!(parse_experiment("[nope]\n"), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(parse_experiment("[experiment]\nnum_realizations = 0\n").is_err());
        assert!(parse_experiment("[experiment]\nsweep_values = []\n").is_err());
        assert!(parse_experiment("[experiment]\nsweep_variable = \"d_avg\"\nsweep_values = [9]\n").is_err());
    }
}
