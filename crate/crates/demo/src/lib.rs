//! Browser demo: density evolution under the transfer operator, the spectral gap as a
//! function of integration time, and particles against the operator prediction.
//!
//! Each export returns a JSON string; the `*_json` functions are the same computations
//! without the JavaScript boundary.

use hmc_lq::diagnostics::estimate_spectral_gap;
use hmc_lq::sampler::{
    histogram_density, hmc_step, l1_distance, multinomial_l1_error, AcceptRule, ChainConfig,
    InitialDistribution, ParticleEnsemble,
};
use hmc_lq::{
    ExponentPair, Grid, HamiltonianEnergy, MomentumDensity, OperatorOptions, PhaseFlow,
    TargetDensity, TransferOperator,
};
use serde_json::json;
use wasm_bindgen::prelude::*;

const MAX_POINTS: usize = 1025;
const MAX_PARTICLES: usize = 200_000;

fn flow_for(target: &str, time: f64) -> Result<PhaseFlow, String> {
    let err = |e: hmc_lq::Error| e.to_string();
    match target {
        "gaussian" => PhaseFlow::exact_rotation(time, 1).map_err(err),
        "double-well" => {
            let energy = HamiltonianEnergy::new(
                TargetDensity::double_well(),
                MomentumDensity::standard_gaussian(1).map_err(err)?,
            )
            .map_err(err)?;
            let steps = ((time / 0.05).ceil() as usize).max(1);
            PhaseFlow::leapfrog(time, steps, energy).map_err(err)
        }
        other => Err(format!("unknown target {other:?}; expected gaussian or double-well")),
    }
}

fn operator(target: &str, time: f64, points: usize) -> Result<TransferOperator, String> {
    if !(Grid::MIN_POINTS..=MAX_POINTS).contains(&points) {
        return Err(format!("points must lie in {}..={MAX_POINTS}", Grid::MIN_POINTS));
    }
    let flow = flow_for(target, time)?;
    let grid = Grid::new(1, flow.energy().target().extent(), points).map_err(|e| e.to_string())?;
    let options = OperatorOptions {
        discretization: Some(hmc_lq::Discretization::Balanced),
        ..OperatorOptions::default()
    };
    TransferOperator::new(flow, grid, options).map_err(|e| e.to_string())
}

/// Iterates `T` on the uniform density on `[lo, hi]` and records every frame.
pub fn evolve_density_json(
    target: &str,
    time: f64,
    points: usize,
    lo: f64,
    hi: f64,
    steps: usize,
) -> Result<String, String> {
    let err = |e: hmc_lq::Error| e.to_string();
    let op = operator(target, time, points)?;
    let space = op.space();
    let initial = InitialDistribution::Uniform { lo, hi };
    let mut h = initial.density_on(*op.grid(), space.target()).map_err(err)?;
    let mass = space.integral(&h).map_err(err)?;
    if mass <= 0.0 {
        return Err("the start interval misses the grid".into());
    }
    h = h.scaled(1.0 / mass);
    let f = space.target_density();
    let f = f.scaled(1.0 / space.integral(&f).map_err(err)?);
    let e2 = ExponentPair::new(2.0).map_err(err)?;
    let scale = space.norm(&f, e2).map_err(err)?;
    let mut frames = vec![h.values().to_vec()];
    let mut errors = vec![space.norm(&h.combine(1.0, &f, -1.0).map_err(err)?, e2).map_err(err)? / scale];
    for _ in 0..steps {
        h = op.apply_t(&h).map_err(err)?;
        errors.push(space.norm(&h.combine(1.0, &f, -1.0).map_err(err)?, e2).map_err(err)? / scale);
        frames.push(h.values().to_vec());
    }
    Ok(json!({
        "x": op.grid().axis_nodes(),
        "target": f.values(),
        "frames": frames,
        "errors": errors,
    })
    .to_string())
}

/// `rho = |T|` on the zero-mass subspace for `samples` times in `[t_min, t_max]`.
pub fn spectral_gap_curve_json(
    target: &str,
    t_min: f64,
    t_max: f64,
    samples: usize,
    points: usize,
) -> Result<String, String> {
    if !(t_min > 0.0 && t_max > t_min) || samples < 2 {
        return Err("need 0 < t_min < t_max and at least two samples".into());
    }
    let e2 = ExponentPair::new(2.0).map_err(|e| e.to_string())?;
    let mut times = Vec::with_capacity(samples);
    let mut rho = Vec::with_capacity(samples);
    for s in 0..samples {
        let t = t_min + (t_max - t_min) * s as f64 / (samples - 1) as f64;
        let op = operator(target, t, points)?;
        let r = estimate_spectral_gap(&op, e2).map_err(|e| e.to_string())?;
        times.push(t);
        rho.push(r.rho);
    }
    // For the Gaussian rotation the zero-mass norm is |cos t|.
    let reference: Option<Vec<f64>> =
        (target == "gaussian").then(|| times.iter().map(|t: &f64| t.cos().abs()).collect());
    Ok(json!({ "t": times, "rho": rho, "reference": reference }).to_string())
}

/// Runs `particles` HMC chains from the uniform start and compares histograms with `T^n h0`.
pub fn sample_particles_json(
    target: &str,
    time: f64,
    particles: usize,
    steps: usize,
    seed: u64,
    lo: f64,
    hi: f64,
) -> Result<String, String> {
    let err = |e: hmc_lq::Error| e.to_string();
    if particles == 0 || particles > MAX_PARTICLES {
        return Err(format!("particles must lie in 1..={MAX_PARTICLES}"));
    }
    let op = operator(target, time, 257)?;
    let space = op.space();
    let initial = InitialDistribution::Uniform { lo, hi };
    let accept = if op.flow().conserves_energy() {
        AcceptRule::None
    } else {
        AcceptRule::MetropolisHastings
    };
    let chain = ChainConfig::new(op.flow().clone(), accept, initial).map_err(err)?;
    let mut ens = ParticleEnsemble::from_initial(initial, space.target(), particles, seed).map_err(err)?;
    let mut reference = initial.density_on(*op.grid(), space.target()).map_err(err)?;
    let mut out = Vec::with_capacity(steps);
    for n in 1..=steps {
        ens = hmc_step(&chain, &ens).map_err(err)?;
        reference = op.apply_t(&reference).map_err(err)?;
        let normalized = reference.scaled(1.0 / space.integral(&reference).map_err(err)?);
        let (hist, stats) = histogram_density(&ens, *op.grid()).map_err(err)?;
        let l1 = l1_distance(&hist, &normalized).map_err(err)?;
        out.push(json!({
            "n": n,
            "histogram": hist.values(),
            "operator": normalized.values(),
            "l1": l1,
            "mc_error": multinomial_l1_error(&normalized, stats.inside),
            "acceptance": ens.last_step().mean_acceptance(),
        }));
    }
    Ok(json!({ "x": op.grid().axis_nodes(), "steps": out }).to_string())
}

#[wasm_bindgen]
pub fn evolve_density(
    target: &str,
    time: f64,
    points: usize,
    lo: f64,
    hi: f64,
    steps: usize,
) -> Result<String, JsError> {
    evolve_density_json(target, time, points, lo, hi, steps).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn spectral_gap_curve(
    target: &str,
    t_min: f64,
    t_max: f64,
    samples: usize,
    points: usize,
) -> Result<String, JsError> {
    spectral_gap_curve_json(target, t_min, t_max, samples, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn sample_particles(
    target: &str,
    time: f64,
    particles: usize,
    steps: usize,
    seed: u64,
    lo: f64,
    hi: f64,
) -> Result<String, JsError> {
    sample_particles_json(target, time, particles, steps, seed, lo, hi).map_err(|e| JsError::new(&e))
}
