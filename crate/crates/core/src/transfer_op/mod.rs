//! The transfer operator `T h(q) = ∫ (h g)∘H(q, p) dp` on grid densities.
//!
//! The operator is stored through its action on likelihood ratios: for `r = h/f`,
//! `(T h)/f = A r`, where row `i` of `A` averages `r` over the flow images
//! `Q(q_i, p_j)` with momentum probabilities `π_j` and node weights (see [`Weights`]).

mod balance;
mod matrix;
mod sparse;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use balance::BalanceReport;
pub use matrix::{OperatorMatrix, PowerResult};
pub use sparse::SparseRows;

use crate::error::{Error, Result};
use crate::lq_space::{
    ExponentPair, Grid, GridDensity, LqSpace, MomentumQuadrature, MomentumRule, MAX_DIM,
};
use crate::phase_flow::{PhaseFlow, PhasePoint};

/// Largest grid for dense matrix assembly.
pub const DENSE_NODE_LIMIT: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Uses `H`.
    Forward,
    /// Uses `H⁻¹`.
    Adjoint,
}

/// How the momentum average is turned into a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    /// Quadrature of the literal formula: energy ratios along the flow are kept, so a
    /// flow that does not conserve energy leaves a fixed-point defect.
    Interpolated,
    /// The interpolation coupling `f_i w_i A_ik` and the transposed adjoint coupling are
    /// averaged and rescaled until both marginals equal `f w`. This makes `T f = f`,
    /// `∫ T h = ∫ h` and `<T h, k> = <h, T† k>` hold to rounding on the grid.
    Balanced,
}

/// Node weights given to a flow image `Q(q_i, p_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weights {
    /// Multilinear interpolation. Images that land on nodes give exact permutations, so
    /// resonant rotations stay isometries. Under `Balanced`, the transposed adjoint
    /// deposits mass through hat functions, which aliases against the lattice of images
    /// and can leave errors near `1e-2` on unlucky grids.
    #[default]
    Linear,
    /// Cubic B-splines: smooth deposition without that aliasing, at the price of an
    /// `O(h²)` smoothing that also acts on resonant flows.
    CubicSpline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorOptions {
    pub momentum_rule: MomentumRule,
    pub weights: Weights,
    /// `None` picks `Balanced` for energy-conserving flows and `Interpolated` otherwise.
    pub discretization: Option<Discretization>,
    pub balance_tolerance: f64,
    pub max_balance_sweeps: usize,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        OperatorOptions {
            momentum_rule: MomentumRule::Matched,
            weights: Weights::Linear,
            discretization: None,
            balance_tolerance: 1e-13,
            max_balance_sweeps: 200_000,
        }
    }
}

/// Occupancy of the flow images `{Q(q_i, p_j)}_j` among the grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageReport {
    /// Smallest fraction of cells reached from a single node.
    pub min_occupancy: f64,
    pub mean_occupancy: f64,
    pub cells: usize,
    /// Node attaining `min_occupancy`.
    pub worst_node: usize,
}

impl CoverageReport {
    pub fn is_full(&self) -> bool {
        self.min_occupancy >= 1.0
    }
}

/// Construction facts attached to run reports.
#[derive(Debug, Clone, Serialize)]
pub struct OperatorSummary {
    pub discretization: Discretization,
    pub weights: Weights,
    pub momentum_rule: MomentumRule,
    pub momentum_nodes: usize,
    pub momentum_mass_error: f64,
    pub nonzeros: usize,
    pub balance: Option<BalanceReport>,
    /// `‖T f − f‖₂ / ‖f‖₂` for the forward operator.
    pub fixed_point_residual: f64,
    /// Largest `|Σ_j π_j ω_ij − 1|`, the energy-weight defect of the literal formula.
    pub energy_weight_defect: f64,
    /// `‖T f − f‖₂ / ‖f‖₂` for the literal formula with energy weights, whatever the discretization.
    pub literal_fixed_point_defect: f64,
}

#[derive(Debug, Clone)]
pub struct TransferOperator {
    flow: PhaseFlow,
    space: LqSpace,
    momenta: MomentumQuadrature,
    discretization: Discretization,
    weights: Weights,
    forward: SparseRows,
    adjoint: SparseRows,
    balance: Option<BalanceReport>,
    energy_weight_defect: f64,
    literal_fixed_point_defect: f64,
}

impl TransferOperator {
    pub fn new(flow: PhaseFlow, grid: Grid, options: OperatorOptions) -> Result<Self> {
        let target = flow.energy().target().clone();
        if grid.dim() != flow.dim() {
            return Err(Error::Usage(format!(
                "grid dimension {} differs from flow dimension {}",
                grid.dim(),
                flow.dim()
            )));
        }
        let space = LqSpace::new(grid, target)?;
        let momenta = flow.energy().momentum().quadrature(options.momentum_rule, &grid)?;
        let discretization = options.discretization.unwrap_or(if flow.conserves_energy() {
            Discretization::Balanced
        } else {
            Discretization::Interpolated
        });
        let weighted = discretization == Discretization::Interpolated && !flow.conserves_energy();
        let spline = options.weights == Weights::CubicSpline;
        let (fwd, fwd_mass) = build_kernel(&flow, &space, &momenta, Direction::Forward, weighted, spline)?;
        let (adj, _) = build_kernel(&flow, &space, &momenta, Direction::Adjoint, weighted, spline)?;
        let energy_weight_defect = (0..grid.len())
            .filter(|&i| space.in_support(i))
            .map(|i| (fwd_mass[i] - 1.0).abs())
            .fold(0.0, f64::max);
        // With energy weights and a clamped ratio, (T f)_i = f_i Σ_j π_j ω_ij.
        let (num, den) = (0..grid.len())
            .filter(|&i| space.in_support(i))
            .map(|i| {
                let fw = space.f_values()[i] * space.weights()[i];
                (fw * (fwd_mass[i] - 1.0).powi(2), fw)
            })
            .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let literal_fixed_point_defect = (num / den).sqrt();
        let (forward, adjoint, balance) = match discretization {
            Discretization::Interpolated => (fwd, adj, None),
            Discretization::Balanced => {
                let mu: Vec<f64> = (0..grid.len())
                    .map(|k| {
                        if space.in_support(k) {
                            space.f_values()[k] * space.weights()[k]
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let unit = vec![1.0; grid.len()];
                let coupling = fwd
                    .scale(&mu, &unit)
                    .combine(0.5, &adj.scale(&mu, &unit).transpose(), 0.5);
                let (p, report) = balance::sinkhorn(
                    &coupling,
                    &mu,
                    options.balance_tolerance,
                    options.max_balance_sweeps,
                )?;
                let inv: Vec<f64> = mu.iter().map(|&m| if m > 0.0 { 1.0 / m } else { 0.0 }).collect();
                let forward = p.scale(&inv, &unit);
                let adjoint = p.transpose().scale(&inv, &unit);
                (forward, adjoint, Some(report))
            }
        };
        Ok(TransferOperator {
            flow,
            space,
            momenta,
            discretization,
            weights: options.weights,
            forward,
            adjoint,
            balance,
            energy_weight_defect,
            literal_fixed_point_defect,
        })
    }

    pub fn flow(&self) -> &PhaseFlow {
        &self.flow
    }

    pub fn space(&self) -> &LqSpace {
        &self.space
    }

    pub fn grid(&self) -> &Grid {
        self.space.grid()
    }

    pub fn momenta(&self) -> &MomentumQuadrature {
        &self.momenta
    }

    pub fn discretization(&self) -> Discretization {
        self.discretization
    }

    pub fn weights(&self) -> Weights {
        self.weights
    }

    /// Ratio kernel `A` of one direction.
    pub fn kernel(&self, direction: Direction) -> &SparseRows {
        match direction {
            Direction::Forward => &self.forward,
            Direction::Adjoint => &self.adjoint,
        }
    }

    /// `T† = T` holds when the momentum density is even (time reversibility).
    pub fn is_self_adjoint(&self) -> bool {
        self.flow.is_reversible()
    }

    pub fn balance_report(&self) -> Option<BalanceReport> {
        self.balance
    }

    pub fn apply(&self, direction: Direction, h: &GridDensity) -> Result<GridDensity> {
        let r = self.space.ratio(h)?;
        let out = self.kernel(direction).matvec(&r);
        Ok(self.space.from_ratio(h, &out))
    }

    pub fn apply_t(&self, h: &GridDensity) -> Result<GridDensity> {
        self.apply(Direction::Forward, h)
    }

    pub fn apply_t_adjoint(&self, h: &GridDensity) -> Result<GridDensity> {
        self.apply(Direction::Adjoint, h)
    }

    /// `S = T† ∘ T`, self-adjoint for any momentum density.
    pub fn apply_s(&self, h: &GridDensity) -> Result<GridDensity> {
        self.apply_t_adjoint(&self.apply_t(h)?)
    }

    /// `n` applications of `T`.
    pub fn apply_power(&self, h: &GridDensity, n: usize) -> Result<GridDensity> {
        let mut x = h.clone();
        for _ in 0..n {
            x = self.apply_t(&x)?;
        }
        Ok(x)
    }

    /// `‖T f − f‖₂ / ‖f‖₂` in the `f`-weighted norm.
    pub fn fixed_point_residual(&self, direction: Direction) -> Result<f64> {
        let f = self.space.target_density();
        let tf = self.apply(direction, &f)?;
        let e = ExponentPair::new(2.0)?;
        Ok(self.space.norm(&tf.combine(1.0, &f, -1.0)?, e)? / self.space.norm(&f, e)?)
    }

    /// `|∫ T h − ∫ h| / ∫ h`.
    pub fn mass_defect(&self, h: &GridDensity) -> Result<f64> {
        let before = self.space.integral(h)?;
        let after = self.space.integral(&self.apply_t(h)?)?;
        Ok((after - before).abs() / before.abs())
    }

    /// Largest `|Σ_j π_j ω_ij − 1|`, where `ω_ij = exp(E(x) − E(H x))`.
    pub fn energy_weight_defect(&self) -> f64 {
        self.energy_weight_defect
    }

    /// `‖T f − f‖₂ / ‖f‖₂` of the literal energy-weighted formula, an `O(ε²)` quantity for leapfrog.
    pub fn literal_fixed_point_defect(&self) -> f64 {
        self.literal_fixed_point_defect
    }

    pub fn summary(&self) -> Result<OperatorSummary> {
        Ok(OperatorSummary {
            discretization: self.discretization,
            weights: self.weights,
            momentum_rule: self.momenta.rule(),
            momentum_nodes: self.momenta.len(),
            momentum_mass_error: self.momenta.mass_error(),
            nonzeros: self.forward.nnz(),
            balance: self.balance,
            fixed_point_residual: self.fixed_point_residual(Direction::Forward)?,
            energy_weight_defect: self.energy_weight_defect,
            literal_fixed_point_defect: self.literal_fixed_point_defect,
        })
    }

    /// One-step coverage: for each node, the share of grid cells hit by its flow images.
    pub fn coverage(&self) -> Result<CoverageReport> {
        let grid = *self.grid();
        let cells = grid.cell_count();
        let d = grid.dim();
        let occupancy: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let mut hit = vec![false; cells];
                let q = grid.node(i);
                for j in 0..self.momenta.len() {
                    let y = self.flow.apply(&phase_point(q, self.momenta.node(j), d))?;
                    if let Some(c) = grid.cell_index(y.q()) {
                        hit[c] = true;
                    }
                }
                Ok(hit.iter().filter(|&&b| b).count() as f64 / cells as f64)
            })
            .collect::<Result<_>>()?;
        let (worst_node, min_occupancy) = occupancy
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |a, (i, v)| if v < a.1 { (i, v) } else { a });
        Ok(CoverageReport {
            min_occupancy,
            mean_occupancy: occupancy.iter().sum::<f64>() / occupancy.len() as f64,
            cells,
            worst_node,
        })
    }

    /// Share of nodes where `Tᵏ` of the hat density at `node` is non-negligible, for `k = 1..=steps`.
    pub fn eventual_coverage(&self, node: usize, steps: usize) -> Result<Vec<f64>> {
        let grid = *self.grid();
        if node >= grid.len() {
            return Err(Error::Usage(format!("node {node} outside a grid of {}", grid.len())));
        }
        let mut hat = vec![0.0; grid.len()];
        hat[node] = 1.0;
        let mut x = GridDensity::new(grid, hat)?;
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            x = self.apply_t(&x)?;
            let r = self.space.ratio(&x)?;
            let peak = r.iter().copied().fold(0.0, f64::max);
            let reached = r.iter().filter(|&&v| v > 1e-12 * peak).count();
            out.push(reached as f64 / grid.len() as f64);
        }
        Ok(out)
    }

    /// Dense nodal matrix `M` with `T h = M h`: `M_ik = f_i A_ik / f_k`.
    pub fn assemble_matrix(&self, direction: Direction) -> Result<OperatorMatrix> {
        let grid = *self.grid();
        let n = grid.len();
        if n > DENSE_NODE_LIMIT {
            return Err(Error::SizeGuard {
                nodes: n,
                limit: DENSE_NODE_LIMIT,
            });
        }
        let f = self.space.f_values();
        let kernel = self.kernel(direction);
        let mut data = vec![0.0; n * n];
        data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (k, a) in kernel.row(i) {
                if self.space.in_support(k) {
                    row[k] += f[i] * a / f[k];
                }
            }
        });
        OperatorMatrix::from_dense(grid, data)
    }
}

fn phase_point(q: [f64; MAX_DIM], p: &[f64], dim: usize) -> PhasePoint {
    let mut pp = [0.0; MAX_DIM];
    pp[..dim].copy_from_slice(p);
    PhasePoint::from_raw(q, pp, dim)
}

/// Ratio kernel rows and, per row, the energy-weighted momentum mass `Σ_j π_j ω_ij`.
///
/// With `energy_weighted` the kernel carries the weights `ω_ij` of the literal formula.
fn build_kernel(
    flow: &PhaseFlow,
    space: &LqSpace,
    momenta: &MomentumQuadrature,
    direction: Direction,
    energy_weighted: bool,
    spline: bool,
) -> Result<(SparseRows, Vec<f64>)> {
    let grid = *space.grid();
    let n = grid.len();
    let d = grid.dim();
    let rows: Vec<(Vec<(u32, f64)>, f64)> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], Vec::<usize>::new()),
            |(scratch, touched), i| {
                if !space.in_support(i) {
                    return Ok((Vec::new(), 0.0));
                }
                let q = grid.node(i);
                let mut mass = 0.0;
                for j in 0..momenta.len() {
                    let x = phase_point(q, momenta.node(j), d);
                    let y = match direction {
                        Direction::Forward => flow.apply(&x)?,
                        Direction::Adjoint => flow.apply_inverse(&x)?,
                    };
                    let mut w = momenta.prob(j);
                    if !flow.conserves_energy() {
                        let omega = flow.energy_change(&x, &y).exp();
                        mass += w * omega;
                        if energy_weighted {
                            w *= omega;
                        }
                    } else {
                        mass += w;
                    }
                    let st = if spline {
                        grid.spline_stencil(y.q())
                    } else {
                        grid.stencil(y.q())
                    };
                    for (k, s) in st.iter() {
                        if s == 0.0 || !space.in_support(k) {
                            continue;
                        }
                        if scratch[k] == 0.0 {
                            touched.push(k);
                        }
                        scratch[k] += w * s;
                    }
                }
                touched.sort_unstable();
                let row = touched
                    .drain(..)
                    .map(|k| {
                        let v = std::mem::take(&mut scratch[k]);
                        (k as u32, v)
                    })
                    .filter(|&(_, v)| v != 0.0)
                    .collect();
                Ok((row, mass))
            },
        )
        .collect::<Result<_>>()?;
    let (rows, mass): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok((SparseRows::from_rows(n, rows), mass))
}
