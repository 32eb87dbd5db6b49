//! Run configuration: a single JSON document describing rank, domain, grid,
//! vortex placement, coupling(s), solver knobs, and output destinations.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::minimize::InitMode;
use crate::torus::{TorusGrid, VortexConfig, VortexPoint};
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    /// Rank of the gauge data; the field vector has this many components.
    pub n: usize,
    pub domain: Domain,
    pub grid: GridSpec,
    /// One list of vortex points per component, outer length `n`.
    pub vortices: Vec<Vec<VortexSpec>>,
    pub lambda: LambdaSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Domain {
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub n1: usize,
    pub n2: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VortexSpec {
    pub x: f64,
    pub y: f64,
    pub multiplicity: u32,
}

/// Coupling specification: one value, an explicit list, or multiples of the
/// configuration's necessary lower bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Scalar(f64),
    List(Vec<f64>),
    Multiples { multiples_of_lambda0: Vec<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// "limit" or "scalar-cs".
    #[serde(default = "default_init_mode")]
    pub init_mode: String,
    #[serde(default)]
    pub dealias: bool,
    /// Stiffness for the scalar-cs relaxation; defaults to 2 lambda.
    #[serde(default)]
    pub mu: Option<f64>,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    500
}

fn default_init_mode() -> String {
    "limit".to_string()
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            init_mode: default_init_mode(),
            dealias: false,
            mu: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: String,
    /// Any of "csv", "bin".
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_dir() -> String {
    "out".to_string()
}

fn default_formats() -> Vec<String> {
    vec!["csv".to_string()]
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Core(cshv_core::Error::RankOutOfRange { n: self.n }));
        }
        if self.vortices.len() != self.n {
            return Err(Error::Config(format!(
                "vortices must list one component per rank: got {} lists for n = {}",
                self.vortices.len(),
                self.n
            )));
        }
        self.to_grid()?;
        self.to_vortices()?;
        match &self.lambda {
            LambdaSpec::Scalar(v) => check_lambda_value(*v)?,
            LambdaSpec::List(vs) | LambdaSpec::Multiples {
                multiples_of_lambda0: vs,
            } => {
                if vs.is_empty() {
                    return Err(Error::Config("lambda list must be non-empty".to_string()));
                }
                for &v in vs {
                    check_lambda_value(v)?;
                }
            }
        }
        if !(self.solver.tol > 0.0) {
            return Err(Error::Config(format!(
                "solver.tol must be positive, got {}",
                self.solver.tol
            )));
        }
        if self.solver.max_iter == 0 {
            return Err(Error::Config("solver.max_iter must be >= 1".to_string()));
        }
        self.init_mode()?;
        for f in &self.output.formats {
            if f != "csv" && f != "bin" {
                return Err(Error::Config(format!(
                    "unknown output format {f:?}; use \"csv\" or \"bin\""
                )));
            }
        }
        if self.output.formats.is_empty() {
            return Err(Error::Config("output.formats must be non-empty".to_string()));
        }
        Ok(())
    }

    pub fn to_grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid.n1, self.grid.n2, self.domain.l1, self.domain.l2)
    }

    pub fn to_vortices(&self) -> Result<VortexConfig> {
        let pts: Vec<Vec<VortexPoint>> = self
            .vortices
            .iter()
            .map(|comp| {
                comp.iter()
                    .map(|v| VortexPoint {
                        x: v.x,
                        y: v.y,
                        multiplicity: v.multiplicity,
                    })
                    .collect()
            })
            .collect();
        VortexConfig::new(pts, self.domain.l1, self.domain.l2)
    }

    pub fn init_mode(&self) -> Result<InitMode> {
        match self.solver.init_mode.as_str() {
            "limit" => Ok(InitMode::Limit),
            "scalar-cs" => Ok(InitMode::ScalarCs { mu: self.solver.mu }),
            other => Err(Error::Config(format!(
                "unknown init_mode {other:?}; use \"limit\" or \"scalar-cs\""
            ))),
        }
    }

    /// Concrete coupling list given the configuration's lower bound.
    pub fn resolve_lambdas(&self, lambda0: f64) -> Vec<f64> {
        match &self.lambda {
            LambdaSpec::Scalar(v) => vec![*v],
            LambdaSpec::List(vs) => vs.clone(),
            LambdaSpec::Multiples {
                multiples_of_lambda0,
            } => multiples_of_lambda0.iter().map(|m| m * lambda0).collect(),
        }
    }

    /// Copy with the coupling replaced by the resolved explicit list; this is
    /// what gets echoed next to the outputs.
    pub fn resolved(&self, lambdas: &[f64]) -> RunConfig {
        let mut out = self.clone();
        out.lambda = if lambdas.len() == 1 {
            LambdaSpec::Scalar(lambdas[0])
        } else {
            LambdaSpec::List(lambdas.to_vec())
        };
        out
    }
}

fn check_lambda_value(v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Config(format!("lambda entries must be positive, got {v}")));
    }
    Ok(())
}
