//! Particle HMC used to cross-check density evolution under the transfer operator.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::lq_space::{Grid, GridDensity, TargetDensity, MAX_DIM};
use crate::phase_flow::{FlowKind, PhaseFlow, PhasePoint};

/// Start distribution of the particles, also available as a grid density for the operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialDistribution {
    /// Uniform on the cube `[lo, hi]^d`.
    Uniform { lo: f64, hi: f64 },
    /// Independent normal coordinates.
    Gaussian { mean: f64, sd: f64 },
    /// The normalized target, by rejection from the truncation box.
    Target,
}

impl InitialDistribution {
    fn validate(&self) -> Result<()> {
        match *self {
            InitialDistribution::Uniform { lo, hi } if !(lo < hi && lo.is_finite() && hi.is_finite()) => {
                Err(Error::Usage(format!("uniform start needs lo < hi, got [{lo}, {hi}]")))
            }
            InitialDistribution::Gaussian { sd, mean } if !(sd > 0.0 && mean.is_finite()) => {
                Err(Error::Usage(format!("gaussian start needs sd > 0, got {sd}")))
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, target: &TargetDensity, out: &mut [f64]) {
        match *self {
            InitialDistribution::Uniform { lo, hi } => {
                for x in out.iter_mut() {
                    *x = rng.gen_range(lo..hi);
                }
            }
            InitialDistribution::Gaussian { mean, sd } => {
                for x in out.iter_mut() {
                    *x = mean + sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
                }
            }
            InitialDistribution::Target => {
                let l = target.extent();
                let bound = target.sup_bound();
                loop {
                    for x in out.iter_mut() {
                        *x = rng.gen_range(-l..l);
                    }
                    if rng.gen::<f64>() * bound <= target.eval(out) {
                        break;
                    }
                }
            }
        }
    }

    /// Unnormalized density on `grid`; indicator ends that fall on nodes get the value 1/2.
    pub fn density_on(&self, grid: Grid, target: &TargetDensity) -> Result<GridDensity> {
        self.validate()?;
        let step = |x: f64, lo: f64, hi: f64| {
            if x == lo || x == hi {
                0.5
            } else if x > lo && x < hi {
                1.0
            } else {
                0.0
            }
        };
        GridDensity::from_fn(grid, |x| match *self {
            InitialDistribution::Uniform { lo, hi } => x.iter().map(|&v| step(v, lo, hi)).product(),
            InitialDistribution::Gaussian { mean, sd } => x
                .iter()
                .map(|&v| (-0.5 * ((v - mean) / sd).powi(2)).exp())
                .product(),
            InitialDistribution::Target => target.eval(x),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcceptRule {
    /// Every proposal is kept; only valid for energy-conserving flows.
    None,
    MetropolisHastings,
}

#[derive(Debug, Clone)]
pub struct ChainConfig {
    flow: PhaseFlow,
    accept: AcceptRule,
    initial: InitialDistribution,
}

impl ChainConfig {
    pub fn new(flow: PhaseFlow, accept: AcceptRule, initial: InitialDistribution) -> Result<Self> {
        if matches!(flow.kind(), FlowKind::Leapfrog { .. }) && accept == AcceptRule::None {
            return Err(Error::Usage(
                "leapfrog chains need the Metropolis-Hastings correction".into(),
            ));
        }
        initial.validate()?;
        Ok(ChainConfig {
            flow,
            accept,
            initial,
        })
    }

    pub fn flow(&self) -> &PhaseFlow {
        &self.flow
    }

    pub fn accept(&self) -> AcceptRule {
        self.accept
    }

    pub fn initial(&self) -> InitialDistribution {
        self.initial
    }
}

/// Particle positions after some number of steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    positions: Vec<f64>,
    generation: u64,
    seed: u64,
    stats: StepStats,
}

/// Counters of the most recent step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub proposed: usize,
    /// Sum of Metropolis-Hastings acceptance probabilities.
    pub acceptance_probability_sum: f64,
    /// Particles whose flow diverged and were redrawn from the start distribution.
    pub resampled: usize,
}

impl StepStats {
    pub fn mean_acceptance(&self) -> f64 {
        if self.proposed == 0 {
            return f64::NAN;
        }
        self.acceptance_probability_sum / self.proposed as f64
    }
}

// One ChaCha stream per (seed, generation, particle, purpose).
fn stream(seed: u64, generation: u64, index: usize, purpose: u8) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&generation.to_le_bytes());
    key[16..24].copy_from_slice(&(index as u64).to_le_bytes());
    key[24] = purpose;
    ChaCha8Rng::from_seed(key)
}

impl ParticleEnsemble {
    /// Draws `count` particles from `initial`.
    pub fn from_initial(
        initial: InitialDistribution,
        target: &TargetDensity,
        count: usize,
        seed: u64,
    ) -> Result<Self> {
        if count == 0 {
            return Err(Error::Usage("an ensemble needs at least one particle".into()));
        }
        initial.validate()?;
        let dim = target.dim();
        let mut positions = vec![0.0; count * dim];
        positions
            .par_chunks_mut(dim)
            .enumerate()
            .for_each(|(i, x)| initial.sample(&mut stream(seed, 0, i, 0), target, x));
        Ok(ParticleEnsemble {
            dim,
            positions,
            generation: 0,
            seed,
            stats: StepStats::default(),
        })
    }

    pub fn from_positions(dim: usize, positions: Vec<f64>, seed: u64) -> Result<Self> {
        if positions.is_empty() || dim == 0 || positions.len() % dim != 0 {
            return Err(Error::Usage("positions must be a nonempty multiple of the dimension".into()));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("particle positions must be finite".into()));
        }
        Ok(ParticleEnsemble {
            dim,
            positions,
            generation: 0,
            seed,
            stats: StepStats::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn last_step(&self) -> StepStats {
        self.stats
    }

    /// One particle per row: `index,x0[,x1]`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let cols: Vec<String> = (0..self.dim).map(|a| format!("x{a}")).collect();
        writeln!(out, "index,{}", cols.join(","))?;
        for i in 0..self.len() {
            let v: Vec<String> = self.position(i).iter().map(|x| format!("{x:.17e}")).collect();
            writeln!(out, "{i},{}", v.join(","))?;
        }
        Ok(())
    }
}

struct Outcome {
    q: [f64; MAX_DIM],
    probability: f64,
    accepted: bool,
    diverged: bool,
}

/// Lifts each particle with a fresh momentum, moves it by the flow, optionally applies the
/// Metropolis-Hastings test, and keeps the position.
pub fn hmc_step(cfg: &ChainConfig, ens: &ParticleEnsemble) -> Result<ParticleEnsemble> {
    let d = ens.dim;
    if d != cfg.flow.dim() {
        return Err(Error::Usage(format!(
            "ensemble dimension {d} differs from flow dimension {}",
            cfg.flow.dim()
        )));
    }
    let generation = ens.generation + 1;
    let momentum = cfg.flow.energy().momentum();
    let target = cfg.flow.energy().target();
    let outcomes: Vec<Outcome> = ens
        .positions
        .par_chunks(d)
        .enumerate()
        .map(|(i, x)| {
            let mut rng = stream(ens.seed, generation, i, 1);
            let mut q = [0.0; MAX_DIM];
            let mut p = [0.0; MAX_DIM];
            q[..d].copy_from_slice(x);
            momentum.sample(&mut rng, &mut p[..d]);
            let start = PhasePoint::from_raw(q, p, d);
            match cfg.flow.apply(&start) {
                Ok(end) => {
                    let probability = match cfg.accept {
                        AcceptRule::None => 1.0,
                        AcceptRule::MetropolisHastings => {
                            cfg.flow.energy_change(&start, &end).exp().min(1.0)
                        }
                    };
                    let accepted = probability >= 1.0 || rng.gen::<f64>() < probability;
                    if accepted {
                        q[..d].copy_from_slice(end.q());
                    }
                    Ok(Outcome {
                        q,
                        probability,
                        accepted,
                        diverged: false,
                    })
                }
                Err(Error::FlowDivergence { .. }) => {
                    let mut q = [0.0; MAX_DIM];
                    cfg.initial
                        .sample(&mut stream(ens.seed, generation, i, 2), target, &mut q[..d]);
                    Ok(Outcome {
                        q,
                        probability: 0.0,
                        accepted: false,
                        diverged: true,
                    })
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut positions = Vec::with_capacity(ens.positions.len());
    let mut stats = StepStats::default();
    for o in &outcomes {
        positions.extend_from_slice(&o.q[..d]);
        stats.proposed += 1;
        stats.acceptance_probability_sum += o.probability;
        stats.accepted += usize::from(o.accepted);
        stats.resampled += usize::from(o.diverged);
    }
    Ok(ParticleEnsemble {
        dim: d,
        positions,
        generation,
        seed: ens.seed,
        stats,
    })
}

/// Runs `steps` chain steps and returns every generation, the start included.
pub fn run_chain(cfg: &ChainConfig, start: ParticleEnsemble, steps: usize) -> Result<Vec<ParticleEnsemble>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(start);
    for _ in 0..steps {
        let next = hmc_step(cfg, out.last().expect("nonempty"))?;
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramStats {
    pub inside: usize,
    pub outliers: usize,
}

/// Dual-cell histogram normalized so that its grid quadrature is 1.
///
/// Node `k` collects the particles nearest to it; its dual cell has the volume of the
/// trapezoid weight `w_k`, so the value is `count_k / (M_inside w_k)`.
pub fn histogram_density(ens: &ParticleEnsemble, grid: Grid) -> Result<(GridDensity, HistogramStats)> {
    if ens.dim != grid.dim() {
        return Err(Error::Usage("ensemble and grid dimensions differ".into()));
    }
    let mut counts = vec![0usize; grid.len()];
    let mut outliers = 0;
    for i in 0..ens.len() {
        match grid.dual_cell_index(ens.position(i)) {
            Some(k) => counts[k] += 1,
            None => outliers += 1,
        }
    }
    let inside = ens.len() - outliers;
    if inside == 0 {
        return Err(Error::Domain("no particle inside the grid box".into()));
    }
    let w = grid.weights();
    let values = counts
        .iter()
        .zip(&w)
        .map(|(&c, &w)| c as f64 / (inside as f64 * w))
        .collect();
    Ok((GridDensity::new(grid, values)?, HistogramStats { inside, outliers }))
}

/// Grid quadrature of `|a − b|`.
pub fn l1_distance(a: &GridDensity, b: &GridDensity) -> Result<f64> {
    a.same_grid(b)?;
    let w = a.grid().weights();
    Ok(a.values()
        .iter()
        .zip(b.values())
        .zip(&w)
        .map(|((x, y), w)| w * (x - y).abs())
        .sum())
}

/// Expected `L¹` distance between a dual-cell histogram of `m` draws and the density
/// `reference` (normalized internally): `Σ_k sqrt(2 P_k (1 − P_k) / (π m))` with cell
/// probabilities `P_k = w_k p_k`, the mean absolute deviation of binomial counts.
pub fn multinomial_l1_error(reference: &GridDensity, m: usize) -> f64 {
    let w = reference.grid().weights();
    let cells: Vec<f64> = reference.values().iter().zip(&w).map(|(p, w)| p * w).collect();
    let total: f64 = cells.iter().sum();
    cells
        .iter()
        .map(|c| {
            let p = c / total;
            (2.0 * p * (1.0 - p) / (std::f64::consts::PI * m as f64)).sqrt()
        })
        .sum()
}

/// Kolmogorov-Smirnov statistic of a one-dimensional sample against `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / m).max((i + 1) as f64 / m - c)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the KS statistic.
pub fn ks_critical_1pct(m: usize) -> f64 {
    1.628 / (m as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson test of bin counts against bin probabilities (renormalized to sum 1).
pub fn chi_square(counts: &[usize], probabilities: &[f64]) -> Result<ChiSquareResult> {
    if counts.len() != probabilities.len() || counts.len() < 2 {
        return Err(Error::Usage("chi-square needs matching count and probability bins".into()));
    }
    let m: usize = counts.iter().sum();
    let total: f64 = probabilities.iter().sum();
    let statistic = counts
        .iter()
        .zip(probabilities)
        .map(|(&c, &p)| {
            let e = m as f64 * p / total;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dof = counts.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value: 1.0 - dist.cdf(statistic),
    })
}

/// Counts of one-dimensional positions in `bins` equal bins on `[lo, hi]`; the rest are dropped.
pub fn bin_counts(ens: &ParticleEnsemble, lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = (hi - lo) / bins as f64;
    for i in 0..ens.len() {
        let x = ens.position(i)[0];
        if x >= lo && x < hi {
            counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    counts
}
