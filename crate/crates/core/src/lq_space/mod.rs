//! Discretized weighted `L^q` space over the truncated position box.
//!
//! The norm is `||h||_q^q = ∫ |h/f|^q f`, the duality pairing `<a, b> = ∫ a b / f`,
//! and the conjugacy map `h* = h (|h|/f)^(q-2)` sends `L^q` to `L^p`. All integrals
//! use the tensor trapezoid rule of the grid.

mod density;
mod grid;
mod momentum;
mod target;

pub use density::GridDensity;
pub use grid::{Grid, Stencil, MAX_DIM};
pub use momentum::{MomentumDensity, MomentumProfile, MomentumQuadrature, MomentumRule, MASS_TOLERANCE};
pub use target::{TargetDensity, TargetKind, FD_STEP};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nodes where `f` falls below this value are excluded from likelihood quotients.
pub const F_FLOOR: f64 = 1e-300;

/// Conjugate exponents `(q, p)` with `q + p = q p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentPair {
    q: f64,
    p: f64,
}

impl ExponentPair {
    pub fn new(q: f64) -> Result<Self> {
        if !(q.is_finite() && q > 1.0) {
            return Err(Error::Exponent(q));
        }
        let p = if q == 2.0 { 2.0 } else { q / (q - 1.0) };
        Ok(ExponentPair { q, p })
    }

    /// Validates an explicit pair.
    pub fn from_pair(q: f64, p: f64) -> Result<Self> {
        let e = Self::new(q)?;
        if !(p.is_finite() && p > 1.0) || (q + p - q * p).abs() > 1e-12 * (q * p) {
            return Err(Error::Usage(format!("({q}, {p}) are not conjugate exponents")));
        }
        Ok(ExponentPair { q: e.q, p })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// The pair seen from the dual side, `(p, q)`.
    pub fn dual(&self) -> Self {
        ExponentPair { q: self.p, p: self.q }
    }
}

/// A grid together with the target `f` sampled on it: the carrier of every `L^q` computation.
#[derive(Debug, Clone)]
pub struct LqSpace {
    grid: Grid,
    target: TargetDensity,
    f: Vec<f64>,
    weights: Vec<f64>,
    support: Vec<bool>,
}

impl LqSpace {
    pub fn new(grid: Grid, target: TargetDensity) -> Result<Self> {
        if grid.dim() != target.dim() {
            return Err(Error::Usage(format!(
                "grid dimension {} does not match target dimension {}",
                grid.dim(),
                target.dim()
            )));
        }
        let f: Vec<f64> = (0..grid.len())
            .map(|k| target.eval(&grid.node(k)[..grid.dim()]))
            .collect();
        if f.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain(format!(
                "target {} is negative or not finite on the grid",
                target.name()
            )));
        }
        let support: Vec<bool> = f.iter().map(|&v| v >= F_FLOOR).collect();
        if !support.iter().any(|&s| s) {
            return Err(Error::Domain("target vanishes on the whole grid".into()));
        }
        let weights = grid.weights();
        Ok(LqSpace {
            grid,
            target,
            f,
            weights,
            support,
        })
    }

    /// Space on the target's recommended truncation box.
    pub fn for_target(target: TargetDensity, points: usize) -> Result<Self> {
        let grid = Grid::new(target.dim(), target.extent(), points)?;
        Self::new(grid, target)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn target(&self) -> &TargetDensity {
        &self.target
    }

    /// `f` at the nodes.
    pub fn f_values(&self) -> &[f64] {
        &self.f
    }

    /// Trapezoid weights at the nodes.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn in_support(&self, k: usize) -> bool {
        self.support[k]
    }

    pub fn target_density(&self) -> GridDensity {
        GridDensity::new(self.grid, self.f.clone()).expect("f validated at construction")
    }

    pub fn density_from_fn(&self, h: impl Fn(&[f64]) -> f64) -> Result<GridDensity> {
        GridDensity::from_fn(self.grid, h)
    }

    fn check(&self, h: &GridDensity) -> Result<()> {
        if *h.grid() != self.grid {
            return Err(Error::Usage("density grid differs from the space grid".into()));
        }
        Ok(())
    }

    /// Quadrature of `∫ h`.
    pub fn integral(&self, h: &GridDensity) -> Result<f64> {
        self.check(h)?;
        Ok(h.values().iter().zip(&self.weights).map(|(v, w)| v * w).sum())
    }

    /// Likelihood ratio `h/f` at the nodes; zero outside the support of `f`.
    pub fn ratio(&self, h: &GridDensity) -> Result<Vec<f64>> {
        self.check(h)?;
        self.ratio_of(h.values())
    }

    pub(crate) fn ratio_of(&self, values: &[f64]) -> Result<Vec<f64>> {
        values
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                if self.support[k] {
                    Ok(v / self.f[k])
                } else if v == 0.0 {
                    Ok(0.0)
                } else {
                    Err(Error::Domain(format!(
                        "density is {v} at node {k} where f is below the floor"
                    )))
                }
            })
            .collect()
    }

    /// Density with likelihood ratio `r`.
    pub(crate) fn from_ratio(&self, template: &GridDensity, r: &[f64]) -> GridDensity {
        template.with_values(r.iter().zip(&self.f).map(|(r, f)| r * f).collect())
    }

    /// `||h||_q^q`.
    pub fn norm_pow(&self, h: &GridDensity, e: ExponentPair) -> Result<f64> {
        let r = self.ratio(h)?;
        let q = e.q();
        Ok(r
            .iter()
            .zip(&self.f)
            .zip(&self.weights)
            .map(|((r, f), w)| w * f * r.abs().powf(q))
            .sum())
    }

    /// `||h||_q = (∫ |h/f|^q f)^(1/q)`.
    pub fn norm(&self, h: &GridDensity, e: ExponentPair) -> Result<f64> {
        Ok(self.norm_pow(h, e)?.powf(1.0 / e.q()))
    }

    /// `<a, b> = ∫ a b / f`.
    pub fn pairing(&self, a: &GridDensity, b: &GridDensity) -> Result<f64> {
        self.check(a)?;
        a.same_grid(b)?;
        let ra = self.ratio(a)?;
        Ok(ra
            .iter()
            .zip(b.values())
            .zip(&self.weights)
            .map(|((r, b), w)| w * r * b)
            .sum())
    }

    /// `h* = h (|h|/f)^(q-2)`, an element of `L^p`.
    pub fn conjugate(&self, h: &GridDensity, e: ExponentPair) -> Result<GridDensity> {
        let r = self.ratio(h)?;
        let q = e.q();
        let v = h
            .values()
            .iter()
            .zip(&r)
            .map(|(&h, r)| if h == 0.0 { 0.0 } else { h * r.abs().powf(q - 2.0) })
            .collect();
        Ok(h.with_values(v))
    }

    /// Indicator of `lo <= x_0 <= hi`, taking the value 1/2 on nodes that sit exactly on an
    /// end point (the trapezoid rule then integrates it exactly when the ends are nodes).
    pub fn interval_indicator(&self, lo: f64, hi: f64) -> GridDensity {
        let g = self.grid;
        let v = (0..g.len())
            .map(|k| {
                let x = g.node(k)[0];
                if x == lo || x == hi {
                    0.5
                } else if x > lo && x < hi {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        GridDensity::new(g, v).expect("indicator values are nonnegative")
    }

    /// `α(h) = ∫h / ∫f`, the coefficient of the fixed ray through `h`.
    pub fn alpha(&self, h: &GridDensity) -> Result<f64> {
        Ok(self.integral(h)? / self.f_mass())
    }

    /// `∫ f` by the grid rule.
    pub fn f_mass(&self) -> f64 {
        self.f.iter().zip(&self.weights).map(|(f, w)| f * w).sum()
    }

    /// Projection onto the zero-mass subspace: `h - α(h) f`.
    pub fn zero_mass_part(&self, h: &GridDensity) -> Result<GridDensity> {
        let a = self.alpha(h)?;
        let v = h
            .values()
            .iter()
            .zip(&self.f)
            .map(|(h, f)| h - a * f)
            .collect();
        GridDensity::signed(self.grid, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian_space(points: usize) -> LqSpace {
        LqSpace::for_target(TargetDensity::standard_gaussian(1).unwrap(), points).unwrap()
    }

    #[test]
    fn exponent_pair_validation() {
        assert!(matches!(ExponentPair::new(1.0), Err(Error::Exponent(_))));
        assert!(ExponentPair::new(0.5).is_err());
        assert!(ExponentPair::new(f64::INFINITY).is_err());
        let e = ExponentPair::new(3.0).unwrap();
        assert!((e.p() - 1.5).abs() < 1e-15);
        assert!((e.q() + e.p() - e.q() * e.p()).abs() < 1e-12);
        assert_eq!(ExponentPair::new(2.0).unwrap().p(), 2.0);
        assert!(ExponentPair::from_pair(3.0, 2.0).is_err());
        assert!(ExponentPair::from_pair(4.0, 4.0 / 3.0).is_ok());
    }

    #[test]
    fn norm_of_target_is_its_mass() {
        let s = gaussian_space(512);
        let f = s.target_density();
        for q in [1.5, 2.0, 3.0] {
            let e = ExponentPair::new(q).unwrap();
            let n = s.norm_pow(&f, e).unwrap();
            assert!((n - (2.0 * PI).sqrt()).abs() < 1e-6, "q={q}: {n}");
        }
    }

    #[test]
    fn norm_zero_and_homogeneity() {
        let s = gaussian_space(128);
        let zero = GridDensity::zeros(*s.grid());
        let e = ExponentPair::new(2.0).unwrap();
        assert_eq!(s.norm(&zero, e).unwrap(), 0.0);
        let f = s.target_density();
        for q in [1.5, 2.0, 3.0] {
            let e = ExponentPair::new(q).unwrap();
            let n1 = s.norm(&f, e).unwrap();
            let n2 = s.norm(&f.scaled(2.0), e).unwrap();
            assert!((n2 - 2.0 * n1).abs() < 1e-12 * n1);
        }
    }

    #[test]
    fn pairing_with_target_is_mass() {
        let s = gaussian_space(200);
        let h = s.density_from_fn(|x| (1.0 + x[0].sin()) * (-0.3 * x[0] * x[0]).exp()).unwrap();
        let f = s.target_density();
        let lhs = s.pairing(&h, &f).unwrap();
        assert!((lhs - s.integral(&h).unwrap()).abs() < 1e-10);
        assert!((s.pairing(&f, &f).unwrap() - s.f_mass()).abs() < 1e-12);
    }

    #[test]
    fn conjugate_fixed_points() {
        let s = gaussian_space(100);
        let h = s.density_from_fn(|x| (-(x[0] - 1.0).powi(2)).exp()).unwrap();
        let e2 = ExponentPair::new(2.0).unwrap();
        assert_eq!(s.conjugate(&h, e2).unwrap(), h);
        let f = s.target_density();
        for q in [1.5, 3.0, 4.0] {
            let e = ExponentPair::new(q).unwrap();
            assert!(s.conjugate(&f, e).unwrap().max_abs_diff(&f) < 1e-15);
        }
    }

    #[test]
    fn alpha_closed_forms() {
        let s = gaussian_space(1025);
        let f = s.target_density();
        assert!((s.alpha(&f).unwrap() - 1.0).abs() < 1e-14);
        assert!((s.alpha(&f.scaled(3.0)).unwrap() - 3.0).abs() < 1e-13);
        // Indicator of [-1, 1]; nodes at +-1 exist for N = 1025 so the trapezoid sum is exact.
        let h = s.interval_indicator(-1.0, 1.0);
        let a = s.alpha(&h).unwrap();
        assert!((a - 2.0 / (2.0 * PI).sqrt()).abs() < 1e-4, "{a}");
    }

    #[test]
    fn support_violation_is_a_domain_error() {
        let t = TargetDensity::custom("compact", 1, 2.0, |q| {
            if q[0] > 1.0 {
                f64::NEG_INFINITY
            } else {
                0.0
            }
        })
        .unwrap();
        let s = LqSpace::for_target(t, 32).unwrap();
        let h = GridDensity::new(*s.grid(), vec![1.0; 32]).unwrap();
        let e = ExponentPair::new(2.0).unwrap();
        assert!(matches!(s.norm(&h, e), Err(Error::Domain(_))));
        let ok = s.target_density();
        assert!(s.norm(&ok, e).is_ok());
    }

    #[test]
    fn grid_mismatch_is_a_usage_error() {
        let s = gaussian_space(64);
        let other = GridDensity::zeros(Grid::new(1, 8.0, 65).unwrap());
        assert!(matches!(
            s.pairing(&s.target_density(), &other),
            Err(Error::Usage(_))
        ));
    }
}
