use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lq_space::{ExponentPair, Grid, MomentumDensity, MomentumProfile, MomentumRule, TargetDensity};
use crate::phase_flow::{FlowKind, HamiltonianEnergy, PhaseFlow};
use crate::sampler::{AcceptRule, InitialDistribution};
use crate::transfer_op::{Discretization, OperatorOptions, Weights};

pub const TARGET_NAMES: [&str; 4] = ["gaussian-1d", "gaussian-2d", "double-well", "gaussian-mixture"];

/// Experiment description as written in TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    pub target: TargetSpec,
    #[serde(default = "default_momentum")]
    pub momentum: MomentumProfile,
    pub flow: FlowSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub operator: OperatorSpec,
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub sampler: Option<SamplerSpec>,
}

fn default_momentum() -> MomentumProfile {
    MomentumProfile::StandardGaussian
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub name: String,
    /// Half-width of the truncation box; the target's default when absent.
    #[serde(default)]
    pub extent: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowName {
    ExactRotation,
    Leapfrog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub kind: FlowName,
    pub time: f64,
    #[serde(default)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    #[serde(default)]
    pub momentum_rule: MomentumRule,
    #[serde(default)]
    pub discretization: Option<Discretization>,
    #[serde(default)]
    pub weights: Weights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    pub exponents: Vec<f64>,
    pub iterations: usize,
    pub initial: InitialDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub particles: usize,
    pub steps: usize,
    #[serde(default)]
    pub accept: Option<AcceptRule>,
}

/// Objects built from a validated config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub flow: PhaseFlow,
    pub grid: Grid,
    pub options: OperatorOptions,
    pub exponents: Vec<ExponentPair>,
    pub warnings: Vec<String>,
}

/// 1-based line of byte `offset` in `src`.
fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line where `key` is assigned, optionally inside `[section]`.
fn key_line(src: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            continue;
        }
        let in_section = match section {
            Some(s) => current.as_deref() == Some(s),
            None => current.is_none(),
        };
        if in_section {
            if let Some(rest) = t.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

impl ExperimentConfig {
    /// Parses and validates; errors carry the offending line when it can be found.
    pub fn from_toml(src: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(src).map_err(|e| Error::Config {
            line: e.span().map(|s| line_of(src, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.resolve().map_err(|e| match e {
            Error::Config { line: None, message } => {
                let line = cfg.locate(src, &message);
                Error::Config { line, message }
            }
            other => Error::Config {
                line: None,
                message: other.to_string(),
            },
        })?;
        Ok(cfg)
    }

    // Validation messages start with `section.key`; map that back to a line.
    fn locate(&self, src: &str, message: &str) -> Option<usize> {
        let path = message.split(':').next()?.trim();
        let (section, key) = match path.split_once('.') {
            Some((s, k)) => (Some(s), k),
            None => (None, path),
        };
        key_line(src, section, key).or_else(|| {
            section.and_then(|s| {
                src.lines()
                    .position(|l| l.trim() == format!("[{s}]"))
                    .map(|i| i + 1)
            })
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn target_density(&self) -> Result<TargetDensity> {
        let base = match self.target.name.as_str() {
            "gaussian-1d" => TargetDensity::standard_gaussian(1)?,
            "gaussian-2d" => TargetDensity::standard_gaussian(2)?,
            "double-well" => TargetDensity::double_well(),
            "gaussian-mixture" => TargetDensity::gaussian_mixture(),
            other => {
                return Err(Error::config(format!(
                    "target.name: unknown target {other:?}; expected one of {}",
                    TARGET_NAMES.join(", ")
                )))
            }
        };
        match self.target.extent {
            Some(l) if !(l.is_finite() && l > 0.0) => Err(Error::config(format!(
                "target.extent: must be positive, got {l}"
            ))),
            Some(l) => base.with_extent(l),
            None => Ok(base),
        }
    }

    /// Validates everything and builds the flow, grid and operator options.
    pub fn resolve(&self) -> Result<Resolved> {
        let mut warnings = Vec::new();
        let target = self.target_density()?;
        let dim = target.dim();
        let momentum = MomentumDensity::new(self.momentum, dim)
            .map_err(|e| Error::config(format!("momentum.name: {e}")))?;
        let energy = HamiltonianEnergy::new(target.clone(), momentum)?;
        let t = self.flow.time;
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::config(format!("flow.time: must be positive, got {t}")));
        }
        let kind = match (self.flow.kind, self.flow.steps) {
            (FlowName::ExactRotation, Some(_)) => {
                return Err(Error::config("flow.steps: only meaningful for leapfrog"))
            }
            (FlowName::ExactRotation, None) => {
                if !(target.is_standard_gaussian() && momentum.is_standard_gaussian()) {
                    return Err(Error::config(
                        "flow.kind: exact-rotation needs a standard Gaussian target and momentum",
                    ));
                }
                FlowKind::ExactGaussianRotation
            }
            (FlowName::Leapfrog, Some(0)) | (FlowName::Leapfrog, None) => {
                return Err(Error::config("flow.steps: leapfrog needs at least one step"))
            }
            (FlowName::Leapfrog, Some(steps)) => FlowKind::Leapfrog { steps },
        };
        let flow = PhaseFlow::new(kind, t, energy)?;
        if flow.is_resonant() {
            warnings.push(format!(
                "integration time {t} is a multiple of pi: the rotation does not cover Q, \
                 so contraction-strictness checks are not applicable"
            ));
        }
        if self.grid.points < Grid::MIN_POINTS {
            return Err(Error::config(format!(
                "grid.points: need at least {}, got {}",
                Grid::MIN_POINTS,
                self.grid.points
            )));
        }
        let grid = Grid::new(dim, target.extent(), self.grid.points)?;
        if grid.len() > crate::transfer_op::DENSE_NODE_LIMIT {
            warnings.push(format!(
                "{} grid nodes: dense matrix dumps are unavailable above {}",
                grid.len(),
                crate::transfer_op::DENSE_NODE_LIMIT
            ));
        }
        if let MomentumRule::GaussHermite { points } = self.operator.momentum_rule {
            if !momentum.is_standard_gaussian() {
                return Err(Error::config(
                    "operator.momentum_rule: gauss-hermite needs the standard Gaussian momentum",
                ));
            }
            if points == 0 {
                return Err(Error::config("operator.momentum_rule: needs at least one point"));
            }
        }
        if self.diagnostics.exponents.is_empty() {
            return Err(Error::config("diagnostics.exponents: list at least one exponent"));
        }
        let exponents = self
            .diagnostics
            .exponents
            .iter()
            .map(|&q| {
                ExponentPair::new(q).map_err(|_| {
                    Error::config(format!(
                        "diagnostics.exponents: q={q} is invalid; conjugate exponents need q > 1"
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(s) = &self.sampler {
            if s.particles == 0 {
                return Err(Error::config("sampler.particles: need at least one particle"));
            }
            if matches!(kind, FlowKind::Leapfrog { .. }) && s.accept == Some(AcceptRule::None) {
                return Err(Error::config(
                    "sampler.accept: leapfrog chains need metropolis-hastings",
                ));
            }
        }
        Ok(Resolved {
            flow,
            grid,
            options: OperatorOptions {
                momentum_rule: self.operator.momentum_rule,
                discretization: self.operator.discretization,
                weights: self.operator.weights,
                ..OperatorOptions::default()
            },
            exponents,
            warnings,
        })
    }

    /// Resonant times for the rotation, as a convenience for presets and tests.
    pub fn is_resonant_time(t: f64) -> bool {
        (t / PI - (t / PI).round()).abs() < 1e-9
    }
}
