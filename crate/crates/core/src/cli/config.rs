use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::landscape::FitnessLandscape;
use crate::mutation::MutationParams;
use crate::simulate::{SimulationConfig, StartState};

use super::CliError;

/// Seed used when neither the command line nor the config file sets one.
pub const DEFAULT_SEED: u64 = 20_011_003;

/// TOML run file. Keys mirror [`SimulationConfig`]; the mutation rate is
/// given either as `q` or as the intensity `a = ell q`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub ell: usize,
    #[serde(default = "default_kappa")]
    pub kappa: usize,
    pub q: Option<f64>,
    pub a: Option<f64>,
    pub m: u64,
    pub fitness: FitnessLandscape<f64>,
    pub seed: Option<u64>,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default)]
    pub burn_in: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    pub start: Option<String>,
}

fn default_kappa() -> usize {
    2
}

fn default_horizon() -> u64 {
    1000
}

fn default_replicas() -> usize {
    1
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, CliError> {
        toml::from_str(s).map_err(|e| CliError::Config(format!("invalid run config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn params(&self) -> Result<MutationParams<f64>, CliError> {
        mutation_params(self.ell, self.kappa, self.q, self.a)
    }

    /// Simulation config; `seed` from the command line wins over the file.
    pub fn simulation(&self, seed: Option<u64>) -> Result<SimulationConfig, CliError> {
        let start = match &self.start {
            Some(s) => s.parse::<StartState>().map_err(CliError::Config)?,
            None => StartState::Master,
        };
        let config = SimulationConfig {
            params: self.params()?,
            m: self.m,
            land: self.fitness.clone(),
            seed: seed.or(self.seed).unwrap_or(DEFAULT_SEED),
            horizon: self.horizon,
            burn_in: self.burn_in,
            replicas: self.replicas,
            start,
        };
        config
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }
}

pub fn mutation_params(
    ell: usize,
    kappa: usize,
    q: Option<f64>,
    a: Option<f64>,
) -> Result<MutationParams<f64>, CliError> {
    let params = match (q, a) {
        (Some(q), None) => MutationParams::new(ell, kappa, q),
        (None, Some(a)) => MutationParams::from_intensity(ell, kappa, a),
        (Some(_), Some(_)) => return Err(CliError::Config("give either q or a, not both".into())),
        (None, None) => return Err(CliError::Config("missing mutation rate: set q or a".into())),
    };
    params.map_err(|e| CliError::Config(e.to_string()))
}

/// `start:stop:step` sweep. `start` is always included and `stop` is
/// included when the step lands on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Range {
    /// Points are `start + i step`, never accumulated.
    pub fn values(&self) -> Vec<f64> {
        let slack = self.step * 1e-9;
        let n = ((self.stop - self.start + slack) / self.step).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, step] = parts.as_slice() else {
            return Err(format!("range {s:?} is not start:stop:step"));
        };
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number {x:?} in range {s:?}"))
        };
        let r = Range {
            start: num(start)?,
            stop: num(stop)?,
            step: num(step)?,
        };
        if !r.start.is_finite() || !r.stop.is_finite() || !(r.step > 0.0) || !r.step.is_finite() {
            return Err(format!(
                "range {s:?} needs finite bounds and a positive step"
            ));
        }
        if r.stop < r.start {
            return Err(format!("range {s:?} is empty"));
        }
        Ok(r)
    }
}
