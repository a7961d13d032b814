use std::f64::consts::FRAC_PI_2;

use hmc_lq::sampler::{
    bin_counts, chi_square, histogram_density, hmc_step, ks_critical_1pct, ks_statistic, l1_distance,
    multinomial_l1_error, run_chain, AcceptRule, ChainConfig, InitialDistribution, ParticleEnsemble,
};
use hmc_lq::{
    Grid, GridDensity, HamiltonianEnergy, MomentumDensity, OperatorOptions, PhaseFlow, TargetDensity,
    TransferOperator,
};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

fn gaussian() -> TargetDensity {
    TargetDensity::standard_gaussian(1).unwrap()
}

fn rotation_chain(t: f64, accept: AcceptRule, initial: InitialDistribution) -> ChainConfig {
    ChainConfig::new(PhaseFlow::exact_rotation(t, 1).unwrap(), accept, initial).unwrap()
}

fn double_well_chain() -> ChainConfig {
    let energy =
        HamiltonianEnergy::new(TargetDensity::double_well(), MomentumDensity::standard_gaussian(1).unwrap()).unwrap();
    ChainConfig::new(
        PhaseFlow::leapfrog(1.0, 20, energy).unwrap(),
        AcceptRule::MetropolisHastings,
        InitialDistribution::Target,
    )
    .unwrap()
}

const START: InitialDistribution = InitialDistribution::Uniform { lo: -1.0, hi: 2.0 };

/// CDF of `c U + s Z` with `U` uniform on `[a, b]`, `Z` standard normal, `c > 0`.
fn uniform_plus_gaussian_cdf(x: f64, a: f64, b: f64, c: f64, s: f64) -> f64 {
    let n = std_normal();
    // G' = Φ, so the average of Φ((x - c u)/s) over u has a closed form.
    let g = |z: f64| z * n.cdf(z) + n.pdf(z);
    s / ((b - a) * c) * (g((x - c * a) / s) - g((x - c * b) / s))
}

#[test]
fn quarter_turn_sends_any_start_to_the_target() {
    let cfg = rotation_chain(FRAC_PI_2, AcceptRule::None, START);
    let m = 100_000;
    let start = ParticleEnsemble::from_initial(START, &gaussian(), m, 11).unwrap();
    let next = hmc_step(&cfg, &start).unwrap();
    let n = std_normal();
    let ks = ks_statistic(next.positions(), |x| n.cdf(x));
    assert!(ks < ks_critical_1pct(m), "{ks}");
    // The start itself is far from the target.
    assert!(ks_statistic(start.positions(), |x| n.cdf(x)) > 0.1);
}

#[test]
fn exact_flow_is_always_accepted() {
    let cfg = rotation_chain(1.0, AcceptRule::MetropolisHastings, START);
    let start = ParticleEnsemble::from_initial(START, &gaussian(), 20_000, 3).unwrap();
    let next = hmc_step(&cfg, &start).unwrap();
    let stats = next.last_step();
    assert_eq!(stats.accepted, stats.proposed);
    assert!((stats.mean_acceptance() - 1.0).abs() < 1e-12);
    assert_eq!(stats.resampled, 0);
}

#[test]
fn exact_flow_keeps_the_target_stationary() {
    let target = InitialDistribution::Target;
    let cfg = rotation_chain(1.0, AcceptRule::None, target);
    let m = 100_000;
    let chain = run_chain(&cfg, ParticleEnsemble::from_initial(target, &gaussian(), m, 21).unwrap(), 3).unwrap();
    let n = std_normal();
    let (lo, hi, bins) = (-4.0, 4.0, 40);
    let width = (hi - lo) / bins as f64;
    let probs: Vec<f64> = (0..bins)
        .map(|k| n.cdf(lo + (k + 1) as f64 * width) - n.cdf(lo + k as f64 * width))
        .collect();
    let res = chi_square(&bin_counts(chain.last().unwrap(), lo, hi, bins), &probs).unwrap();
    assert!(res.p_value > 0.01, "{res:?}");
}

#[test]
fn leapfrog_chain_samples_the_double_well() {
    let cfg = double_well_chain();
    let m = 100_000;
    let start = ParticleEnsemble::from_initial(InitialDistribution::Target, &TargetDensity::double_well(), m, 7).unwrap();
    let chain = run_chain(&cfg, start, 3).unwrap();
    let last = chain.last().unwrap();
    let acc = last.last_step().mean_acceptance();
    assert!(acc > 0.95 && acc < 1.0, "{acc}");

    // Bin probabilities of exp(-(x^2 - 1)^2) by composite Simpson inside each bin.
    let f = |x: f64| (-(x * x - 1.0).powi(2)).exp();
    let (lo, hi, bins) = (-2.5, 2.5, 50);
    let width = (hi - lo) / bins as f64;
    let probs: Vec<f64> = (0..bins)
        .map(|k| {
            let a = lo + k as f64 * width;
            let sub = 200;
            let dx = width / sub as f64;
            (0..=sub)
                .map(|j| {
                    let c = if j == 0 || j == sub { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
                    c * f(a + j as f64 * dx)
                })
                .sum::<f64>()
                * dx
                / 3.0
        })
        .collect();
    let res = chi_square(&bin_counts(last, lo, hi, bins), &probs).unwrap();
    assert!(res.p_value > 0.01, "{res:?}");
}

#[test]
fn sampler_and_operator_agree_after_five_steps() {
    let (t, steps, m) = (1.0, 5, 1_000_000);
    let grid = Grid::new(1, 8.0, 129).unwrap();
    let cfg = rotation_chain(t, AcceptRule::None, START);
    let chain = run_chain(&cfg, ParticleEnsemble::from_initial(START, &gaussian(), m, 2024).unwrap(), steps).unwrap();
    let (hist, stats) = histogram_density(chain.last().unwrap(), grid).unwrap();
    assert_eq!(stats.outliers, 0);

    // Exact law: cos(t)^n U + sqrt(1 - cos(t)^2n) Z, averaged over each dual cell.
    let c = t.cos().powi(steps as i32);
    let s = (1.0 - c * c).sqrt();
    let cdf = |x: f64| uniform_plus_gaussian_cdf(x, -1.0, 2.0, c, s);
    let h = grid.spacing();
    let w = grid.weights();
    let exact_cells = GridDensity::new(
        grid,
        (0..grid.len())
            .map(|k| {
                let x = grid.node(k)[0];
                let lo = (x - h / 2.0).max(-8.0);
                let hi = (x + h / 2.0).min(8.0);
                (cdf(hi) - cdf(lo)) / w[k]
            })
            .collect(),
    )
    .unwrap();
    let noise = multinomial_l1_error(&exact_cells, m);
    let sampling = l1_distance(&hist, &exact_cells).unwrap();
    assert!(sampling <= 3.0 * noise, "{sampling} vs {noise}");

    let op = TransferOperator::new(PhaseFlow::exact_rotation(t, 1).unwrap(), grid, OperatorOptions::default()).unwrap();
    let h0 = START.density_on(grid, op.space().target()).unwrap();
    let evolved = op.apply_power(&h0, steps).unwrap();
    let mass = op.space().integral(&evolved).unwrap();
    let evolved = evolved.scaled(1.0 / mass);
    let cross = l1_distance(&hist, &evolved).unwrap();
    eprintln!("L1 sampler-exact {sampling:.3e} (noise {noise:.3e}), sampler-operator {cross:.3e}");
    assert!(cross <= 0.01, "{cross}");
}

#[test]
fn chains_are_reproducible_across_thread_counts() {
    let cfg = double_well_chain();
    let run = |threads: usize, seed: u64| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let start =
                    ParticleEnsemble::from_initial(InitialDistribution::Target, &TargetDensity::double_well(), 5000, seed)
                        .unwrap();
                run_chain(&cfg, start, 4).unwrap().pop().unwrap()
            })
    };
    let a = run(1, 99);
    let b = run(4, 99);
    assert_eq!(a.positions(), b.positions());
    assert_eq!(a.last_step(), b.last_step());
    assert_ne!(run(2, 100).positions(), a.positions());
}

#[test]
fn ensemble_csv_lists_every_particle() {
    let ens = ParticleEnsemble::from_positions(2, vec![0.5, -1.0, 2.0, 0.25], 1).unwrap();
    let mut buf = Vec::new();
    ens.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,x0,x1");
    assert_eq!(lines.len(), 3);
    let row: Vec<f64> = lines[2].split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(row, vec![2.0, 0.25]);
}

#[test]
fn leapfrog_without_correction_is_rejected() {
    let energy =
        HamiltonianEnergy::new(TargetDensity::double_well(), MomentumDensity::standard_gaussian(1).unwrap()).unwrap();
    let flow = PhaseFlow::leapfrog(1.0, 20, energy).unwrap();
    assert!(ChainConfig::new(flow, AcceptRule::None, START).is_err());
}
