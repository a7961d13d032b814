//! Hamiltonian motion on phase space `Q x P`.
//!
//! Two flows are provided: the closed-form rotation generated by standard
//! Gaussian `f` and `g`, and the leapfrog (Störmer–Verlet) integrator for any
//! smooth target and momentum density. Both are exactly volume preserving and
//! time reversible; only the rotation conserves the energy exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lq_space::{MomentumDensity, TargetDensity, MAX_DIM};

/// A point `(q, p)` of phase space with `dim <= 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    q: [f64; MAX_DIM],
    p: [f64; MAX_DIM],
    dim: usize,
}

impl PhasePoint {
    pub fn new(q: &[f64], p: &[f64]) -> Result<Self> {
        if q.len() != p.len() || q.is_empty() || q.len() > MAX_DIM {
            return Err(Error::Usage(format!(
                "phase point needs equal q/p dimension in 1..={MAX_DIM}, got {} and {}",
                q.len(),
                p.len()
            )));
        }
        if q.iter().chain(p).any(|x| !x.is_finite()) {
            return Err(Error::Usage("phase point coordinates must be finite".into()));
        }
        let mut pt = PhasePoint {
            q: [0.0; MAX_DIM],
            p: [0.0; MAX_DIM],
            dim: q.len(),
        };
        pt.q[..q.len()].copy_from_slice(q);
        pt.p[..p.len()].copy_from_slice(p);
        Ok(pt)
    }

    pub(crate) fn from_raw(q: [f64; MAX_DIM], p: [f64; MAX_DIM], dim: usize) -> Self {
        PhasePoint { q, p, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn q(&self) -> &[f64] {
        &self.q[..self.dim]
    }

    pub fn p(&self) -> &[f64] {
        &self.p[..self.dim]
    }

    fn is_finite(&self) -> bool {
        self.q().iter().chain(self.p()).all(|x| x.is_finite())
    }

    fn checked(self) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::FlowDivergence {
                q: self.q().to_vec(),
                p: self.p().to_vec(),
            })
        }
    }

    /// Largest coordinate difference to `other`.
    pub fn distance(&self, other: &PhasePoint) -> f64 {
        self.q()
            .iter()
            .zip(other.q())
            .chain(self.p().iter().zip(other.p()))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// The momentum-flip involution `(q, p) -> (q, -p)`.
pub fn momentum_flip(x: &PhasePoint) -> PhasePoint {
    let mut y = *x;
    for v in y.p.iter_mut() {
        *v = -*v;
    }
    y
}

/// Energy `-log f(q) - log g(p)`.
#[derive(Debug, Clone)]
pub struct HamiltonianEnergy {
    target: TargetDensity,
    momentum: MomentumDensity,
}

impl HamiltonianEnergy {
    pub fn new(target: TargetDensity, momentum: MomentumDensity) -> Result<Self> {
        if target.dim() != momentum.dim() {
            return Err(Error::Usage(format!(
                "target dimension {} differs from momentum dimension {}",
                target.dim(),
                momentum.dim()
            )));
        }
        Ok(HamiltonianEnergy { target, momentum })
    }

    pub fn target(&self) -> &TargetDensity {
        &self.target
    }

    pub fn momentum(&self) -> &MomentumDensity {
        &self.momentum
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn energy(&self, x: &PhasePoint) -> f64 {
        -self.target.log_eval(x.q()) - self.momentum.log_eval(x.p())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FlowKind {
    /// Exact flow for standard Gaussian `f` and `g`: a rotation of each `(q_i, p_i)` plane.
    ExactGaussianRotation,
    /// Leapfrog with `steps` equal steps of size `time / steps`.
    Leapfrog { steps: usize },
}

/// Invertible Hamiltonian motion `H` over integration time `time`.
#[derive(Debug, Clone)]
pub struct PhaseFlow {
    kind: FlowKind,
    time: f64,
    energy: HamiltonianEnergy,
    cos_t: f64,
    sin_t: f64,
}

impl PhaseFlow {
    pub fn new(kind: FlowKind, time: f64, energy: HamiltonianEnergy) -> Result<Self> {
        if !(time.is_finite() && time > 0.0) {
            return Err(Error::Usage(format!("integration time must be positive, got {time}")));
        }
        match kind {
            FlowKind::ExactGaussianRotation => {
                if !energy.target.is_standard_gaussian() || !energy.momentum.is_standard_gaussian() {
                    return Err(Error::Usage(
                        "the exact rotation flow needs standard Gaussian target and momentum".into(),
                    ));
                }
            }
            FlowKind::Leapfrog { steps } => {
                if steps == 0 {
                    return Err(Error::Usage("leapfrog needs at least one step".into()));
                }
            }
        }
        Ok(PhaseFlow {
            kind,
            time,
            cos_t: time.cos(),
            sin_t: time.sin(),
            energy,
        })
    }

    pub fn exact_rotation(time: f64, dim: usize) -> Result<Self> {
        let energy = HamiltonianEnergy::new(
            TargetDensity::standard_gaussian(dim)?,
            MomentumDensity::standard_gaussian(dim)?,
        )?;
        Self::new(FlowKind::ExactGaussianRotation, time, energy)
    }

    pub fn leapfrog(time: f64, steps: usize, energy: HamiltonianEnergy) -> Result<Self> {
        Self::new(FlowKind::Leapfrog { steps }, time, energy)
    }

    pub fn kind(&self) -> FlowKind {
        self.kind
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn energy(&self) -> &HamiltonianEnergy {
        &self.energy
    }

    pub fn dim(&self) -> usize {
        self.energy.dim()
    }

    /// Leapfrog step size, if any.
    pub fn step_size(&self) -> Option<f64> {
        match self.kind {
            FlowKind::Leapfrog { steps } => Some(self.time / steps as f64),
            FlowKind::ExactGaussianRotation => None,
        }
    }

    /// Whether `(f g) ∘ H = f g` holds exactly (up to rounding).
    pub fn conserves_energy(&self) -> bool {
        matches!(self.kind, FlowKind::ExactGaussianRotation)
    }

    /// `σ ∘ H⁻¹ ∘ σ = H`, which holds for both flows when the kinetic gradient is odd.
    pub fn is_reversible(&self) -> bool {
        self.energy.momentum.is_even()
    }

    /// For the Gaussian rotation: whether `time` is a multiple of π, where one step cannot cover `Q`.
    pub fn is_resonant(&self) -> bool {
        matches!(self.kind, FlowKind::ExactGaussianRotation) && self.sin_t.abs() < 1e-9
    }

    pub fn apply(&self, x: &PhasePoint) -> Result<PhasePoint> {
        self.run(x, 1.0)
    }

    pub fn apply_inverse(&self, x: &PhasePoint) -> Result<PhasePoint> {
        self.run(x, -1.0)
    }

    fn run(&self, x: &PhasePoint, direction: f64) -> Result<PhasePoint> {
        if x.dim != self.dim() {
            return Err(Error::Usage(format!(
                "phase point dimension {} differs from flow dimension {}",
                x.dim,
                self.dim()
            )));
        }
        let y = match self.kind {
            FlowKind::ExactGaussianRotation => {
                let (c, s) = (self.cos_t, direction * self.sin_t);
                let mut y = *x;
                for a in 0..x.dim {
                    let (q, p) = (x.q[a], x.p[a]);
                    y.q[a] = q * c + p * s;
                    y.p[a] = -q * s + p * c;
                }
                y
            }
            FlowKind::Leapfrog { steps } => {
                let eps = direction * self.time / steps as f64;
                let mut y = *x;
                for _ in 0..steps {
                    self.leapfrog_step(&mut y, eps);
                }
                y
            }
        };
        y.checked()
    }

    // Kick-drift-kick; with `-eps` it is the exact algebraic inverse.
    fn leapfrog_step(&self, y: &mut PhasePoint, eps: f64) {
        let d = y.dim;
        let mut grad = [0.0; MAX_DIM];
        self.energy.target.potential_grad(&y.q[..d], &mut grad);
        for a in 0..d {
            y.p[a] -= 0.5 * eps * grad[a];
        }
        self.energy.momentum.kinetic_grad(&y.p[..d], &mut grad);
        for a in 0..d {
            y.q[a] += eps * grad[a];
        }
        self.energy.target.potential_grad(&y.q[..d], &mut grad);
        for a in 0..d {
            y.p[a] -= 0.5 * eps * grad[a];
        }
    }

    /// `E(x) - E(H(x))`; zero for energy-conserving flows.
    pub fn energy_change(&self, x: &PhasePoint, hx: &PhasePoint) -> f64 {
        self.energy.energy(x) - self.energy.energy(hx)
    }

    /// Maximum and mean of `|E∘H - E|` over `samples`.
    pub fn check_energy_invariance(&self, samples: &[PhasePoint]) -> Result<EnergyReport> {
        let mut max_abs: f64 = 0.0;
        let mut sum = 0.0;
        for x in samples {
            let hx = self.apply(x)?;
            let d = self.energy_change(x, &hx).abs();
            max_abs = max_abs.max(d);
            sum += d;
        }
        Ok(EnergyReport {
            max_abs,
            mean_abs: if samples.is_empty() { 0.0 } else { sum / samples.len() as f64 },
            samples: samples.len(),
            step_size: self.step_size(),
        })
    }

    /// Central-difference Jacobian determinant of `H` at `x`.
    pub fn jacobian_determinant(&self, x: &PhasePoint, step: f64) -> Result<f64> {
        let d = x.dim;
        let n = 2 * d;
        let mut jac = nalgebra::DMatrix::<f64>::zeros(n, n);
        for col in 0..n {
            let mut up = *x;
            let mut down = *x;
            if col < d {
                up.q[col] += step;
                down.q[col] -= step;
            } else {
                up.p[col - d] += step;
                down.p[col - d] -= step;
            }
            let (fu, fd) = (self.apply(&up)?, self.apply(&down)?);
            for row in 0..n {
                let (u, v) = if row < d {
                    (fu.q[row], fd.q[row])
                } else {
                    (fu.p[row - d], fd.p[row - d])
                };
                jac[(row, col)] = (u - v) / (2.0 * step);
            }
        }
        Ok(jac.determinant())
    }
}

/// Energy drift of a flow over a sample of phase points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub max_abs: f64,
    pub mean_abs: f64,
    pub samples: usize,
    pub step_size: Option<f64>,
}
