//! One-dimensional quadrature rules used for position grids and momentum integrals.

use crate::error::{Error, Result};

/// Nodes and weights of a one-dimensional rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Composite trapezoid rule on `points` equispaced nodes spanning `[lo, hi]`.
pub fn trapezoid(lo: f64, hi: f64, points: usize) -> Result<Rule1d> {
    if points < 2 || !(hi > lo) {
        return Err(Error::Usage(format!(
            "trapezoid rule needs at least 2 points on a non-empty interval, got {points} on [{lo}, {hi}]"
        )));
    }
    let h = (hi - lo) / (points - 1) as f64;
    let nodes = (0..points)
        .map(|i| if i + 1 == points { hi } else { lo + i as f64 * h })
        .collect();
    let mut weights = vec![h; points];
    weights[0] = 0.5 * h;
    weights[points - 1] = 0.5 * h;
    Ok(Rule1d { nodes, weights })
}

/// Gauss–Hermite rule for the weight `exp(-x^2)` on the real line.
///
/// Roots are found by Newton iteration on the orthonormal Hermite recurrence,
/// which stays well scaled for a few hundred nodes.
pub fn gauss_hermite(n: usize) -> Result<Rule1d> {
    if n == 0 {
        return Err(Error::Usage("Gauss-Hermite rule needs at least one node".into()));
    }
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    const EPS: f64 = 1e-15;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        let mut converged = false;
        for _ in 0..200 {
            let (p1, p2) = hermite_orthonormal(n, z, PIM4);
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= EPS * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numerical(format!(
                "Gauss-Hermite root {i} of {n} did not converge"
            )));
        }
        // Recompute the derivative at the converged root.
        let (_, p2) = hermite_orthonormal(n, z, PIM4);
        pp = if p2 != 0.0 { (2.0 * nf).sqrt() * p2 } else { pp };
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    // Ascending order.
    x.reverse();
    w.reverse();
    Ok(Rule1d { nodes: x, weights: w })
}

fn hermite_orthonormal(n: usize, z: f64, p0: f64) -> (f64, f64) {
    let mut p1 = p0;
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, p2)
}

/// Gauss–Hermite rule rescaled to integrate against the standard normal density:
/// `sum_j w_j u(x_j) ~ E[u(X)]`, `X ~ N(0, 1)`. Weights sum to one.
pub fn gauss_hermite_probabilists(n: usize) -> Result<Rule1d> {
    let rule = gauss_hermite(n)?;
    let scale = std::f64::consts::PI.sqrt().recip();
    Ok(Rule1d {
        nodes: rule.nodes.iter().map(|x| x * std::f64::consts::SQRT_2).collect(),
        weights: rule.weights.iter().map(|w| w * scale).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn trapezoid_weights_sum_to_length() {
        let r = trapezoid(-8.0, 8.0, 512).unwrap();
        assert!((r.weights.iter().sum::<f64>() - 16.0).abs() < 1e-12);
        assert_eq!(r.nodes[511], 8.0);
    }

    #[test]
    fn trapezoid_rejects_degenerate() {
        assert!(trapezoid(0.0, 1.0, 1).is_err());
        assert!(trapezoid(1.0, 1.0, 4).is_err());
    }

    #[test]
    fn gauss_hermite_small_rule_matches_closed_form() {
        // n = 2: nodes +-1/sqrt(2), weights sqrt(pi)/2.
        let r = gauss_hermite(2).unwrap();
        assert!((r.nodes[1] - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((r.weights[0] - PI.sqrt() / 2.0).abs() < 1e-14);
        // n = 3: nodes 0, +-sqrt(3/2); weights 2 sqrt(pi)/3, sqrt(pi)/6.
        let r = gauss_hermite(3).unwrap();
        assert!(r.nodes[1].abs() < 1e-15);
        assert!((r.nodes[2] - 1.5f64.sqrt()).abs() < 1e-14);
        assert!((r.weights[1] - 2.0 * PI.sqrt() / 3.0).abs() < 1e-14);
        assert!((r.weights[0] - PI.sqrt() / 6.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_hermite_129_integrates_gaussian_moments() {
        let r = gauss_hermite_probabilists(129).unwrap();
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        let m0 = r.integrate(|_| 1.0);
        let m2 = r.integrate(|x| x * x);
        let m4 = r.integrate(|x| x.powi(4));
        let m6 = r.integrate(|x| x.powi(6));
        assert!((m0 - 1.0).abs() < 1e-13, "{m0}");
        assert!((m2 - 1.0).abs() < 1e-12, "{m2}");
        assert!((m4 - 3.0).abs() < 1e-11, "{m4}");
        assert!((m6 - 15.0).abs() < 1e-10, "{m6}");
        // E[cos X] = exp(-1/2)
        let c = r.integrate(f64::cos);
        assert!((c - (-0.5f64).exp()).abs() < 1e-13);
    }
}
