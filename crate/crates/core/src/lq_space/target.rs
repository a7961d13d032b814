use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Central-difference step for targets without an analytic gradient.
pub const FD_STEP: f64 = 1e-5;

type LogDensityFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Unnormalized target density `f` on a truncated box `[-extent, extent]^dim`.
#[derive(Clone)]
pub struct TargetDensity {
    kind: TargetKind,
    extent: f64,
}

#[derive(Clone)]
pub enum TargetKind {
    /// `exp(-|q|^2 / 2)`.
    StandardGaussian { dim: usize },
    /// `exp(-(q^2 - 1)^2)`.
    DoubleWell,
    /// Two-component asymmetric mixture `0.3 N(-1.5, 0.6^2) + 0.7 N(1, 0.9^2)` without the `1/sqrt(2 pi)`.
    GaussianMixture,
    /// User-supplied log-density; gradient by central differences.
    Custom {
        name: String,
        dim: usize,
        log_density: Arc<LogDensityFn>,
    },
}

const MIX: [(f64, f64, f64); 2] = [(0.3, -1.5, 0.6), (0.7, 1.0, 0.9)];

impl fmt::Debug for TargetDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetDensity")
            .field("name", &self.name())
            .field("dim", &self.dim())
            .field("extent", &self.extent)
            .finish()
    }
}

impl TargetDensity {
    pub fn standard_gaussian(dim: usize) -> Result<Self> {
        if dim == 0 || dim > super::MAX_DIM {
            return Err(Error::Usage(format!("unsupported dimension {dim}")));
        }
        Ok(TargetDensity {
            kind: TargetKind::StandardGaussian { dim },
            extent: 8.0,
        })
    }

    pub fn double_well() -> Self {
        TargetDensity {
            kind: TargetKind::DoubleWell,
            extent: 3.0,
        }
    }

    pub fn gaussian_mixture() -> Self {
        TargetDensity {
            kind: TargetKind::GaussianMixture,
            extent: 8.0,
        }
    }

    pub fn custom(
        name: impl Into<String>,
        dim: usize,
        extent: f64,
        log_density: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 || dim > super::MAX_DIM {
            return Err(Error::Usage(format!("unsupported dimension {dim}")));
        }
        TargetDensity {
            kind: TargetKind::Custom {
                name: name.into(),
                dim,
                log_density: Arc::new(log_density),
            },
            extent: 1.0,
        }
        .with_extent(extent)
    }

    /// Same density on a different truncation box.
    pub fn with_extent(mut self, extent: f64) -> Result<Self> {
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::Usage(format!("truncation extent must be positive, got {extent}")));
        }
        self.extent = extent;
        Ok(self)
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            TargetKind::StandardGaussian { dim: 1 } => "gaussian-1d",
            TargetKind::StandardGaussian { .. } => "gaussian-2d",
            TargetKind::DoubleWell => "double-well",
            TargetKind::GaussianMixture => "gaussian-mixture",
            TargetKind::Custom { name, .. } => name,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            TargetKind::StandardGaussian { dim } | TargetKind::Custom { dim, .. } => *dim,
            TargetKind::DoubleWell | TargetKind::GaussianMixture => 1,
        }
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn is_standard_gaussian(&self) -> bool {
        matches!(self.kind, TargetKind::StandardGaussian { .. })
    }

    pub fn log_eval(&self, q: &[f64]) -> f64 {
        match &self.kind {
            TargetKind::StandardGaussian { dim } => {
                -0.5 * q[..*dim].iter().map(|x| x * x).sum::<f64>()
            }
            TargetKind::DoubleWell => {
                let u = q[0] * q[0] - 1.0;
                -u * u
            }
            TargetKind::GaussianMixture => {
                let terms = MIX.map(|(w, m, s)| {
                    let z = (q[0] - m) / s;
                    (w / s).ln() - 0.5 * z * z
                });
                let hi = terms[0].max(terms[1]);
                hi + terms.iter().map(|t| (t - hi).exp()).sum::<f64>().ln()
            }
            TargetKind::Custom { log_density, .. } => log_density(q),
        }
    }

    pub fn eval(&self, q: &[f64]) -> f64 {
        self.log_eval(q).exp()
    }

    /// Gradient of the potential `-log f` at `q`, written to `out[..dim]`.
    pub fn potential_grad(&self, q: &[f64], out: &mut [f64]) {
        match &self.kind {
            TargetKind::StandardGaussian { dim } => out[..*dim].copy_from_slice(&q[..*dim]),
            TargetKind::DoubleWell => out[0] = 4.0 * q[0] * (q[0] * q[0] - 1.0),
            TargetKind::GaussianMixture => {
                let terms = MIX.map(|(w, m, s)| {
                    let z = (q[0] - m) / s;
                    ((w / s).ln() - 0.5 * z * z, z / s)
                });
                let hi = terms[0].0.max(terms[1].0);
                let (mut num, mut den) = (0.0, 0.0);
                for (lt, dz) in terms {
                    let e = (lt - hi).exp();
                    num += e * dz;
                    den += e;
                }
                out[0] = num / den;
            }
            TargetKind::Custom { dim, log_density, .. } => {
                let mut x = [0.0; super::MAX_DIM];
                x[..*dim].copy_from_slice(&q[..*dim]);
                for a in 0..*dim {
                    let x0 = x[a];
                    x[a] = x0 + FD_STEP;
                    let up = log_density(&x[..*dim]);
                    x[a] = x0 - FD_STEP;
                    let down = log_density(&x[..*dim]);
                    x[a] = x0;
                    out[a] = -(up - down) / (2.0 * FD_STEP);
                }
            }
        }
    }

    /// Upper bound on `f` over the truncation box, for rejection sampling.
    pub fn sup_bound(&self) -> f64 {
        match &self.kind {
            TargetKind::StandardGaussian { .. } | TargetKind::DoubleWell => 1.0,
            _ => {
                let d = self.dim();
                let n: usize = if d == 1 { 20_001 } else { 401 };
                let h = 2.0 * self.extent / (n - 1) as f64;
                let mut best = f64::MIN;
                for k in 0..n.pow(d as u32) {
                    let x = [-self.extent + (k % n) as f64 * h, -self.extent + (k / n) as f64 * h];
                    best = best.max(self.log_eval(&x[..d]));
                }
                // Grid scan misses the true peak by O(h^2); pad generously.
                best.exp() * 1.05
            }
        }
    }
}
