use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::OptimConfig;
use crate::parallel::Execution;
use crate::state::SolverKind;
use crate::weight::WeightSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    PointValueLsq,
    PointValueMinres,
    WeightConvergence,
    TotalVariation,
    #[serde(rename = "l1_residual_1d")]
    L1Residual1d,
    #[serde(rename = "l1_residual_2d")]
    L1Residual2d,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 6] = [
        ExperimentName::PointValueLsq,
        ExperimentName::PointValueMinres,
        ExperimentName::WeightConvergence,
        ExperimentName::TotalVariation,
        ExperimentName::L1Residual1d,
        ExperimentName::L1Residual2d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::PointValueLsq => "point_value_lsq",
            ExperimentName::PointValueMinres => "point_value_minres",
            ExperimentName::WeightConvergence => "weight_convergence",
            ExperimentName::TotalVariation => "total_variation",
            ExperimentName::L1Residual1d => "l1_residual_1d",
            ExperimentName::L1Residual2d => "l1_residual_2d",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentName::PointValueLsq => "point-value control of weighted least squares, u' + σu = σ, M and α sweeps",
            ExperimentName::PointValueMinres => "point-value control of weighted dd-minres (P0 trial, P1 test on 2N)",
            ExperimentName::WeightConvergence => "u' = π sin(πx), weighted L² residual cost, n sweep from interpolation",
            ExperimentName::TotalVariation => "total variation of u_h on the boundary-layer problem, α sweep",
            ExperimentName::L1Residual1d => "smoothed L¹ residual, over-constrained u' + u = 1, α sweep",
            ExperimentName::L1Residual2d => "smoothed L¹ residual, over-constrained ∂₁u + u = 1 on the unit square",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentName::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Reaction coefficient of the boundary-layer problem.
    pub sigma: f64,
    /// Elements per direction.
    pub n_elements: usize,
    pub solver: SolverKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub alpha: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_neurons: usize,
}

/// Sweep values; an empty list skips that sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(rename = "M")]
    pub m: Vec<f64>,
    pub alpha: Vec<f64>,
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Random controls checked per instance.
    pub samples: usize,
    /// Net pairs for the convexity probe; 0 skips it.
    pub probe_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentName,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub execution: Execution,
    pub problem: ProblemConfig,
    pub weight: WeightSpec,
    pub cost: CostConfig,
    pub network: NetworkConfig,
    pub optimizer: OptimConfig,
    pub sweep: SweepConfig,
    pub verify: VerifyConfig,
}

impl ExperimentConfig {
    /// Registered defaults of `name`.
    pub fn defaults(name: ExperimentName) -> Self {
        let mut c = ExperimentConfig {
            experiment: name,
            seed: 0,
            output_dir: PathBuf::from("out").join(name.as_str()),
            execution: Execution::Parallel,
            problem: ProblemConfig { sigma: 160.0, n_elements: 16, solver: SolverKind::WeightedLsq },
            weight: WeightSpec::LogisticOffset { m: 100.0 },
            cost: CostConfig { alpha: 0.0, epsilon: crate::cost::DEFAULT_L1_SMOOTHING },
            network: NetworkConfig { n_neurons: 8 },
            optimizer: OptimConfig { max_iters: 5000, trace_every: 10, ..OptimConfig::default() },
            sweep: SweepConfig { m: vec![1.0, 10.0, 100.0], alpha: vec![0.0, 1e-6, 1e-4, 1e-2], n: Vec::new() },
            verify: VerifyConfig { samples: 20, probe_pairs: 0 },
        };
        match name {
            ExperimentName::PointValueLsq => {}
            ExperimentName::PointValueMinres => c.problem.solver = SolverKind::DdMinres,
            ExperimentName::WeightConvergence => {
                c.problem.sigma = 0.0;
                c.weight = WeightSpec::BoundedLogistic;
                c.optimizer.max_iters = 1000;
                c.sweep = SweepConfig { m: Vec::new(), alpha: Vec::new(), n: vec![4, 8, 16, 32, 64] };
            }
            ExperimentName::TotalVariation => c.sweep.m.clear(),
            ExperimentName::L1Residual1d => {
                c.problem.sigma = 1.0;
                c.problem.n_elements = 8;
                c.weight = WeightSpec::LogisticOffset { m: 1000.0 };
                c.sweep = SweepConfig { m: Vec::new(), alpha: vec![0.0, 1e-4, 1e-2, 1.0], n: Vec::new() };
            }
            ExperimentName::L1Residual2d => {
                c.problem.sigma = 1.0;
                c.problem.n_elements = 8;
                c.weight = WeightSpec::LogisticOffset { m: 1000.0 };
                c.optimizer.max_iters = 2000;
                c.sweep = SweepConfig { m: Vec::new(), alpha: Vec::new(), n: Vec::new() };
            }
        }
        c
    }

    /// Parses TOML. Keys override the registered defaults of the experiment,
    /// which is named either in the file or by `name`.
    pub fn from_toml(text: &str, name: Option<ExperimentName>) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let in_file = match table.get("experiment") {
            Some(toml::Value::String(s)) => Some(s.parse::<ExperimentName>()?),
            Some(_) => return Err(Error::Config("'experiment' must be a string".into())),
            None => None,
        };
        let name = match (name, in_file) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config(format!("config names experiment '{b}' but '{a}' was requested")))
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => return Err(Error::Config("no experiment named".into())),
        };
        let base = toml::Table::try_from(Self::defaults(name)).map_err(|e| Error::Config(e.to_string()))?;
        let merged = merge(base, table);
        let cfg: ExperimentConfig = toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, name: Option<ExperimentName>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, name)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.problem.n_elements == 0 {
            return bad("problem.n_elements must be positive".into());
        }
        if !self.problem.sigma.is_finite() {
            return bad("problem.sigma must be finite".into());
        }
        if self.network.n_neurons == 0 {
            return bad("network.n_neurons must be positive".into());
        }
        if self.sweep.m.iter().any(|m| !(*m > 0.0)) {
            return bad("sweep.M values must be positive".into());
        }
        if self.sweep.alpha.iter().any(|a| !(*a >= 0.0)) {
            return bad("sweep.alpha values must be nonnegative".into());
        }
        if self.experiment == ExperimentName::WeightConvergence {
            if self.sweep.n.is_empty() || self.sweep.n.iter().any(|n| *n < 2) {
                return bad("sweep.n needs values of at least 2".into());
            }
        }
        self.weight.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.optimizer.validate().map_err(|e| Error::Config(e.to_string()))?;
        crate::cost::CostSpec::new(crate::cost::CostKind::TotalVariation, self.cost.alpha)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.cost.epsilon > 0.0) {
            return bad("cost.epsilon must be positive".into());
        }
        Ok(())
    }
}

fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if k != "weight" => {
                base.insert(k, toml::Value::Table(merge(b, o)));
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}
