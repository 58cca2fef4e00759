//! JSON-compatible configuration schema for systems and controls.
//!
//! A system config carries the keys `n`, `m`, `T`, `x0`, `dynamics`
//! (expression strings or `{"linear": {"A", "B", "g"}}`), `constraint`
//! (`{"box": …}`, `{"ball": …}`, `{"finite": …}` or `"all"`) and optionally
//! `control` (`{"pc": …}`, `{"grid": …}` or `{"analytic": …}`).

use crate::expr;
use crate::system::{
    ConstraintSet, ControlSignal, ControlSystem, Dynamics, Hold, Partition, SystemError,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Debug, Error)]
pub enum ConfigError {
    #[error("json: {0}")]
    Json(String),
    #[error("expression `{source_text}`: {err}")]
    Expr {
        source_text: String,
        err: expr::ParseError,
    },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct SystemConfig {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub dynamics: DynamicsConfig,
    pub constraint: ConstraintConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlConfig>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum DynamicsConfig {
    Expressions(Vec<String>),
    Linear { linear: LinearBlock },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct LinearBlock {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(default)]
    pub g: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum ConstraintConfig {
    Keyword(String),
    Box { r#box: BoxBlock },
    Ball { ball: BallBlock },
    Finite { finite: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct BoxBlock {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct BallBlock {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum ControlConfig {
    Pc { pc: PcBlock },
    Grid { grid: GridBlock },
    Analytic { analytic: Vec<String> },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct PcBlock {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct GridBlock {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    #[serde(default)]
    pub hold: Option<String>,
}

fn to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ConfigError> {
    if rows.is_empty() {
        return Err(ConfigError::Invalid(format!("{what}: empty matrix")));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(ConfigError::Invalid(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl SystemConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))
    }

    /// Builds the runtime system (and the embedded control, when present).
    pub fn build(&self) -> Result<(ControlSystem, Option<ControlSignal>), ConfigError> {
        let dynamics = match &self.dynamics {
            DynamicsConfig::Expressions(sources) => {
                let mut exprs = Vec::with_capacity(sources.len());
                for src in sources {
                    exprs.push(expr::parse(src, self.n, self.m).map_err(|err| {
                        ConfigError::Expr {
                            source_text: src.clone(),
                            err,
                        }
                    })?);
                }
                Dynamics::Expressions(exprs)
            }
            DynamicsConfig::Linear { linear } => {
                let a = to_matrix(&linear.a, "A")?;
                let b = to_matrix(&linear.b, "B")?;
                let drift = match &linear.g {
                    Some(g) => DVector::from_vec(g.clone()),
                    None => DVector::zeros(self.n),
                };
                if a.nrows() != self.n || a.ncols() != self.n {
                    return Err(ConfigError::Invalid("A must be n x n".into()));
                }
                if b.nrows() != self.n || b.ncols() != self.m {
                    return Err(ConfigError::Invalid("B must be n x m".into()));
                }
                if drift.len() != self.n {
                    return Err(ConfigError::Invalid("g must have length n".into()));
                }
                Dynamics::LinearAutonomous { a, b, drift }
            }
        };
        let constraint = match &self.constraint {
            ConstraintConfig::Keyword(k) if k == "all" => ConstraintSet::AllSpace,
            ConstraintConfig::Keyword(k) => {
                return Err(ConfigError::Invalid(format!("unknown constraint `{k}`")))
            }
            ConstraintConfig::Box { r#box } => ConstraintSet::Box {
                lo: DVector::from_vec(r#box.lo.clone()),
                hi: DVector::from_vec(r#box.hi.clone()),
            },
            ConstraintConfig::Ball { ball } => ConstraintSet::Ball {
                center: DVector::from_vec(ball.center.clone()),
                radius: ball.radius,
            },
            ConstraintConfig::Finite { finite } => ConstraintSet::FiniteSet {
                points: finite
                    .iter()
                    .map(|p| DVector::from_vec(p.clone()))
                    .collect(),
            },
        };
        let sys = ControlSystem::new(
            self.n,
            self.m,
            self.horizon,
            DVector::from_vec(self.x0.clone()),
            dynamics,
            constraint,
        )?;
        let control = match &self.control {
            Some(c) => Some(build_control(c, self.m)?),
            None => None,
        };
        Ok((sys, control))
    }
}

/// Builds a control signal from its config block.
pub fn build_control(cfg: &ControlConfig, m: usize) -> Result<ControlSignal, ConfigError> {
    match cfg {
        ControlConfig::Pc { pc } => {
            let partition = Partition::new(pc.times.clone())?;
            let values = pc
                .values
                .iter()
                .map(|v| DVector::from_vec(v.clone()))
                .collect();
            Ok(ControlSignal::piecewise_constant(partition, values)?)
        }
        ControlConfig::Grid { grid } => {
            let hold = match grid.hold.as_deref() {
                None | Some("zoh") | Some("zero-order") => Hold::ZeroOrder,
                Some("linear") => Hold::Linear,
                Some(other) => return Err(ConfigError::Invalid(format!("unknown hold `{other}`"))),
            };
            if grid.times.len() != grid.values.len() || grid.times.len() < 2 {
                return Err(ConfigError::Invalid(
                    "grid control needs matching times/values with at least 2 nodes".into(),
                ));
            }
            Ok(ControlSignal::GridSampled {
                times: grid.times.clone(),
                values: grid
                    .values
                    .iter()
                    .map(|v| DVector::from_vec(v.clone()))
                    .collect(),
                hold,
            })
        }
        ControlConfig::Analytic { analytic } => {
            if analytic.len() != m {
                return Err(ConfigError::Invalid(
                    "analytic control needs one expression per control coordinate".into(),
                ));
            }
            let mut exprs = Vec::with_capacity(analytic.len());
            for src in analytic {
                exprs.push(expr::parse(src, 0, 0).map_err(|err| ConfigError::Expr {
                    source_text: src.clone(),
                    err,
                })?);
            }
            Ok(ControlSignal::Analytic { exprs })
        }
    }
}

/// Parses a standalone control file: either a bare control object or a
/// document with a `control` key.
pub fn control_from_json(text: &str, m: usize) -> Result<ControlSignal, ConfigError> {
    #[derive(Deserialize)]
    struct Wrapper {
        control: ControlConfig,
    }
    if let Ok(w) = serde_json::from_str::<Wrapper>(text) {
        return build_control(&w.control, m);
    }
    let cfg: ControlConfig =
        serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
    build_control(&cfg, m)
}
