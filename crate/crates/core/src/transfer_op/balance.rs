//! Diagonal scaling of a nonnegative coupling to prescribed row and column sums.

use serde::Serialize;

use super::sparse::SparseRows;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalanceReport {
    pub sweeps: usize,
    /// Largest relative row-sum error after the final sweep (columns are exact).
    pub residual: f64,
    /// Largest `|log|` of the scaling factors; how far the raw coupling was from balanced.
    pub max_log_scale: f64,
}

/// Finds `a`, `b` with `diag(a) C diag(b)` having row and column sums `mass`.
///
/// Entries of `mass` equal to zero mark excluded nodes; their rows and columns are dropped.
pub fn sinkhorn(
    coupling: &SparseRows,
    mass: &[f64],
    tolerance: f64,
    max_sweeps: usize,
) -> Result<(SparseRows, BalanceReport)> {
    let n = coupling.n();
    let transposed = coupling.transpose();
    let mut a = vec![1.0; n];
    let mut b = vec![1.0; n];
    let active: Vec<bool> = mass.iter().map(|&m| m > 0.0).collect();
    for (i, row_sum) in coupling.row_sums().iter().enumerate() {
        if active[i] && *row_sum <= 0.0 {
            return Err(Error::Numerical(format!("coupling row {i} is empty")));
        }
    }
    for (k, col_sum) in transposed.row_sums().iter().enumerate() {
        if active[k] && *col_sum <= 0.0 {
            return Err(Error::Numerical(format!("coupling column {k} is empty")));
        }
    }
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let cb = coupling.matvec(&b);
        for i in 0..n {
            a[i] = if active[i] { mass[i] / cb[i] } else { 0.0 };
        }
        let ca = transposed.matvec(&a);
        for k in 0..n {
            b[k] = if active[k] { mass[k] / ca[k] } else { 0.0 };
        }
        if sweeps % 4 == 0 || sweeps == 1 {
            let rows = coupling.matvec(&b);
            residual = (0..n)
                .filter(|&i| active[i])
                .map(|i| (a[i] * rows[i] / mass[i] - 1.0).abs())
                .fold(0.0, f64::max);
            if residual <= tolerance {
                break;
            }
        }
    }
    if !(residual <= tolerance) {
        return Err(Error::Numerical(format!(
            "coupling balance stalled at residual {residual:.3e} after {sweeps} sweeps"
        )));
    }
    let max_log_scale = (0..n)
        .filter(|&i| active[i])
        .map(|i| (a[i] * b[i]).ln().abs())
        .fold(0.0, f64::max);
    Ok((
        coupling.scale(&a, &b),
        BalanceReport {
            sweeps,
            residual,
            max_log_scale,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balances_small_positive_matrix() {
        let c = SparseRows::from_rows(
            3,
            vec![
                vec![(0, 1.0), (1, 2.0), (2, 0.5)],
                vec![(0, 0.3), (1, 1.0), (2, 1.0)],
                vec![(0, 2.0), (1, 0.1), (2, 1.0)],
            ],
        );
        let mass = [0.2, 0.5, 0.3];
        let (p, rep) = sinkhorn(&c, &mass, 1e-14, 10_000).unwrap();
        for (r, m) in p.row_sums().iter().zip(mass) {
            assert!((r - m).abs() < 1e-14);
        }
        for (r, m) in p.transpose().row_sums().iter().zip(mass) {
            assert!((r - m).abs() < 1e-14);
        }
        assert!(rep.residual <= 1e-14);
    }

    #[test]
    fn empty_column_is_reported() {
        let c = SparseRows::from_rows(2, vec![vec![(0, 1.0)], vec![(0, 1.0)]]);
        assert!(matches!(
            sinkhorn(&c, &[0.5, 0.5], 1e-12, 100),
            Err(Error::Numerical(_))
        ));
    }
}
