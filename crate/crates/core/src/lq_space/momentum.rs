use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_PI_2, LN_2, PI, SQRT_2};

use super::Grid;
use crate::error::{Error, Result};
use crate::quadrature;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Tolerance on the quadrature mass of `g` before renormalization.
pub const MASS_TOLERANCE: f64 = 1e-8;

/// One-dimensional momentum profile; the d-dimensional density is the product over coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum MomentumProfile {
    /// Standard normal.
    StandardGaussian,
    /// `1 / (2 cosh(pi p / 2))`: even, exponential tails.
    HyperbolicSecant,
    /// `2 phi(p) Phi(shape * p)`: not even for `shape != 0`.
    SkewNormal { shape: f64 },
}

/// Normalized momentum density `g` on `P = R^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumDensity {
    profile: MomentumProfile,
    dim: usize,
}

impl MomentumDensity {
    pub fn new(profile: MomentumProfile, dim: usize) -> Result<Self> {
        if dim == 0 || dim > super::MAX_DIM {
            return Err(Error::Usage(format!("unsupported dimension {dim}")));
        }
        if let MomentumProfile::SkewNormal { shape } = profile {
            if !shape.is_finite() {
                return Err(Error::Usage("skew-normal shape must be finite".into()));
            }
        }
        Ok(MomentumDensity { profile, dim })
    }

    pub fn standard_gaussian(dim: usize) -> Result<Self> {
        Self::new(MomentumProfile::StandardGaussian, dim)
    }

    pub fn profile(&self) -> MomentumProfile {
        self.profile
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &'static str {
        match self.profile {
            MomentumProfile::StandardGaussian => "gaussian",
            MomentumProfile::HyperbolicSecant => "hyperbolic-secant",
            MomentumProfile::SkewNormal { .. } => "skew-normal",
        }
    }

    pub fn is_standard_gaussian(&self) -> bool {
        self.profile == MomentumProfile::StandardGaussian
    }

    /// `g(p) = g(-p)`; enables the momentum-flip symmetry of the transfer operator.
    pub fn is_even(&self) -> bool {
        match self.profile {
            MomentumProfile::SkewNormal { shape } => shape == 0.0,
            _ => true,
        }
    }

    /// Half-width of a momentum box holding all but a negligible fraction of the mass.
    pub fn default_extent(&self) -> f64 {
        match self.profile {
            MomentumProfile::HyperbolicSecant => 16.0,
            _ => 8.0,
        }
    }

    fn log_pdf_1d(&self, x: f64) -> f64 {
        match self.profile {
            MomentumProfile::StandardGaussian => -0.5 * x * x - LN_SQRT_2PI,
            MomentumProfile::HyperbolicSecant => {
                let a = (FRAC_PI_2 * x).abs();
                // log cosh a = a + log(1 + e^{-2a}) - log 2
                -LN_2 - (a + (-2.0 * a).exp().ln_1p() - LN_2)
            }
            MomentumProfile::SkewNormal { shape } => {
                LN_2 - 0.5 * x * x - LN_SQRT_2PI + log_normal_cdf(shape * x)
            }
        }
    }

    fn grad_1d(&self, x: f64) -> f64 {
        match self.profile {
            MomentumProfile::StandardGaussian => x,
            MomentumProfile::HyperbolicSecant => FRAC_PI_2 * (FRAC_PI_2 * x).tanh(),
            MomentumProfile::SkewNormal { shape } => x - shape * inverse_mills(shape * x),
        }
    }

    pub fn log_eval(&self, p: &[f64]) -> f64 {
        p[..self.dim].iter().map(|&x| self.log_pdf_1d(x)).sum()
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        self.log_eval(p).exp()
    }

    /// Gradient of the kinetic energy `-log g` at `p`, written to `out[..dim]`.
    pub fn kinetic_grad(&self, p: &[f64], out: &mut [f64]) {
        for a in 0..self.dim {
            out[a] = self.grad_1d(p[a]);
        }
    }

    /// Draws one momentum vector into `out[..dim]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for o in out.iter_mut().take(self.dim) {
            *o = match self.profile {
                MomentumProfile::StandardGaussian => rng.sample(StandardNormal),
                MomentumProfile::HyperbolicSecant => {
                    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                    (2.0 / PI) * (FRAC_PI_2 * u).tan().ln()
                }
                MomentumProfile::SkewNormal { shape } => {
                    let delta = shape / (1.0 + shape * shape).sqrt();
                    let u0: f64 = rng.sample(StandardNormal);
                    let u1: f64 = rng.sample(StandardNormal);
                    delta * u0.abs() + (1.0 - delta * delta).sqrt() * u1
                }
            };
        }
    }

    /// Probability-weighted momentum nodes for the given rule on position grid `grid`.
    pub fn quadrature(&self, rule: MomentumRule, grid: &Grid) -> Result<MomentumQuadrature> {
        if grid.dim() != self.dim {
            return Err(Error::Usage(format!(
                "momentum dimension {} does not match grid dimension {}",
                self.dim,
                grid.dim()
            )));
        }
        let (nodes_1d, weights_1d) = match rule {
            MomentumRule::GaussHermite { points } => {
                if !self.is_standard_gaussian() {
                    return Err(Error::Usage(
                        "Gauss-Hermite momenta require the standard Gaussian momentum density".into(),
                    ));
                }
                let r = quadrature::gauss_hermite_probabilists(points)?;
                (r.nodes, r.weights)
            }
            MomentumRule::Trapezoid { extent, points } => self.trapezoid_1d(extent, points)?,
            MomentumRule::Matched => {
                let h = grid.spacing();
                let target = self.default_extent().max(2.0 * grid.extent());
                let half = (target / h).ceil() as usize;
                self.trapezoid_1d(half as f64 * h, 2 * half + 1)?
            }
        };
        let mass_1d: f64 = weights_1d.iter().sum();
        let m = nodes_1d.len();
        let count = m.pow(self.dim as u32);
        let mut nodes = Vec::with_capacity(count * self.dim);
        let mut prob = Vec::with_capacity(count);
        for j in 0..count {
            let (a, b) = (j % m, j / m);
            nodes.push(nodes_1d[a]);
            if self.dim == 2 {
                nodes.push(nodes_1d[b]);
                prob.push(weights_1d[a] * weights_1d[b]);
            } else {
                prob.push(weights_1d[a]);
            }
        }
        let total: f64 = prob.iter().sum();
        prob.iter_mut().for_each(|w| *w /= total);
        Ok(MomentumQuadrature {
            dim: self.dim,
            nodes,
            prob,
            raw_mass: mass_1d.powi(self.dim as i32),
            rule,
        })
    }

    // Symmetric trapezoid nodes, weights already multiplied by g.
    fn trapezoid_1d(&self, extent: f64, points: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if points < 3 || !(extent.is_finite() && extent > 0.0) {
            return Err(Error::Usage(format!(
                "momentum trapezoid needs >= 3 points on a positive extent, got {points} on {extent}"
            )));
        }
        let n1 = points - 1;
        let half = extent / n1 as f64;
        let h = 2.0 * half;
        let nodes: Vec<f64> = (0..points)
            .map(|j| {
                let lower = |i: usize| ((2 * i) as f64 - n1 as f64) * half;
                if 2 * j > n1 {
                    -lower(n1 - j)
                } else {
                    lower(j)
                }
            })
            .collect();
        let weights = nodes
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let w = if j == 0 || j == n1 { 0.5 * h } else { h };
                w * self.log_pdf_1d(x).exp()
            })
            .collect();
        Ok((nodes, weights))
    }
}

fn log_normal_cdf(x: f64) -> f64 {
    let c = 0.5 * erfc(-x / SQRT_2);
    if c > 0.0 {
        c.ln()
    } else {
        // Asymptotic tail: Phi(x) ~ phi(x) / |x|.
        -0.5 * x * x - LN_SQRT_2PI - (-x).ln()
    }
}

// phi(x) / Phi(x)
fn inverse_mills(x: f64) -> f64 {
    let c = 0.5 * erfc(-x / SQRT_2);
    let phi = (-0.5 * x * x - LN_SQRT_2PI).exp();
    if c > 1e-300 {
        phi / c
    } else {
        -x
    }
}

/// How the momentum integral in the transfer operator is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MomentumRule {
    #[default]
    /// Trapezoid with the position grid spacing, on `max(default extent, 2 * grid extent)`.
    Matched,
    Trapezoid { extent: f64, points: usize },
    /// Standard Gaussian momenta only.
    GaussHermite { points: usize },
}


/// Momentum nodes with probability weights summing to one.
#[derive(Debug, Clone)]
pub struct MomentumQuadrature {
    dim: usize,
    nodes: Vec<f64>,
    prob: Vec<f64>,
    raw_mass: f64,
    rule: MomentumRule,
}

impl MomentumQuadrature {
    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn node(&self, j: usize) -> &[f64] {
        &self.nodes[j * self.dim..(j + 1) * self.dim]
    }

    pub fn prob(&self, j: usize) -> f64 {
        self.prob[j]
    }

    pub fn probs(&self) -> &[f64] {
        &self.prob
    }

    /// Quadrature value of `∫ g` before renormalization.
    pub fn raw_mass(&self) -> f64 {
        self.raw_mass
    }

    pub fn rule(&self) -> MomentumRule {
        self.rule
    }

    pub fn mass_error(&self) -> f64 {
        (self.raw_mass - 1.0).abs()
    }
}
