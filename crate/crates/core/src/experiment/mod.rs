//! Config-driven experiment runs: operator construction, traces, checks, spectral
//! estimates, the optional sampler cross-check, and a manifest.

mod config;
mod presets;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{
    DiagnosticsSpec, ExperimentConfig, FlowName, FlowSpec, GridSpec, OperatorSpec, Resolved,
    SamplerSpec, TargetSpec, TARGET_NAMES,
};
pub use presets::{preset, Preset, PRESETS};

use crate::diagnostics::{
    estimate_spectral_gap, iterate_and_trace, run_checks, write_checks_csv, CheckPlan, CheckStatus,
    LemmaCheck, SpectralReport, TestFamily,
};
use crate::error::{Error, Result};
use crate::lq_space::{ExponentPair, GridDensity};
use crate::sampler::{
    histogram_density, hmc_step, l1_distance, multinomial_l1_error, AcceptRule, ChainConfig,
    ParticleEnsemble,
};
use crate::transfer_op::{OperatorSummary, TransferOperator};

pub const TRACE_FILE: &str = "trace.csv";
pub const CHECKS_FILE: &str = "lemma_checks.csv";
pub const SPECTRAL_FILE: &str = "spectral.json";
pub const SAMPLER_FILE: &str = "sampler.csv";
pub const FINAL_DENSITY_FILE: &str = "final_density.txt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FAILURE_FILE: &str = "failure.txt";

/// One row of the sampler cross-check.
#[derive(Debug, Clone, Serialize)]
pub struct SamplerRow {
    pub n: usize,
    pub l1_distance: f64,
    pub mc_error: f64,
    pub ratio: f64,
    pub mean_acceptance: f64,
    pub resampled: usize,
    pub outliers: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckCounts {
    pub pass: usize,
    pub fail: usize,
    pub not_applicable: usize,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a ExperimentConfig,
    iteration: &'static str,
    operator: &'a OperatorSummary,
    warnings: &'a [String],
    checks: &'a CheckCounts,
    failed_checks: Vec<&'a str>,
    files: Vec<&'static str>,
}

/// Everything a run produced, also written to the output directory.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub warnings: Vec<String>,
    pub checks: Vec<LemmaCheck>,
    pub counts: CheckCounts,
    pub spectral: Vec<SpectralReport>,
    pub sampler: Vec<SamplerRow>,
    pub operator: OperatorSummary,
}

impl RunReport {
    pub fn failed(&self) -> Vec<&LemmaCheck> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail).collect()
    }
}

/// Runs the experiment and writes its artifacts to `output_dir`.
///
/// On a numerical failure the error message and the config echo go to `failure.txt`.
pub fn run_experiment(cfg: &ExperimentConfig, output_dir: &Path) -> Result<RunReport> {
    fs::create_dir_all(output_dir)?;
    run_inner(cfg, output_dir).inspect_err(|e| {
        let dump = format!("error: {e}\n\n# config\n{}", cfg.to_toml());
        let _ = fs::write(output_dir.join(FAILURE_FILE), dump);
    })
}

fn run_inner(cfg: &ExperimentConfig, dir: &Path) -> Result<RunReport> {
    let resolved = cfg.resolve()?;
    let mut warnings = resolved.warnings.clone();
    let target = resolved.flow.energy().target().clone();
    let op = TransferOperator::new(resolved.flow.clone(), resolved.grid, resolved.options)?;
    let space = op.space();
    let h0 = cfg.diagnostics.initial.density_on(resolved.grid, &target)?;
    if space.integral(&h0)? <= 0.0 {
        return Err(Error::config(
            "diagnostics.initial: the start density has no mass on the grid",
        ));
    }
    let family = TestFamily::canonical(space);
    let trace = iterate_and_trace(&op, &h0, cfg.diagnostics.iterations, &resolved.exponents, &family)?;
    let exact = op.flow().conserves_energy();
    let plan = CheckPlan {
        exponents: resolved.exponents.clone(),
        iterations: cfg.diagnostics.iterations,
        seed: cfg.seed,
        fixed_point_tolerance: 1e-8,
    };
    let mut checks = run_checks(&op, &h0, &trace, &plan)?;
    let summary = op.summary()?;
    if !exact {
        let d = summary.literal_fixed_point_defect;
        warnings.push(format!(
            "leapfrog flow: the literal energy-weighted operator misses T f = f by {d:.3e} (relative L2)"
        ));
        checks.push(LemmaCheck {
            key: "literal-fixed-point-defect".into(),
            status: CheckStatus::NotApplicable,
            residual: d,
            tolerance: f64::NAN,
            note: "reported only: energy defect of the leapfrog flow, O(step^2)".into(),
        });
    }

    let mut spectral = vec![estimate_spectral_gap(&op, ExponentPair::new(2.0)?)?];
    for &e in &resolved.exponents {
        if e.q() != 2.0 {
            spectral.push(estimate_spectral_gap(&op, e)?);
        }
    }
    for s in &spectral {
        if !s.converged {
            warnings.push(format!(
                "spectral estimate for q={} stopped at residual {:.3e}",
                s.q, s.residual
            ));
        }
    }

    let sampler = match &cfg.sampler {
        Some(spec) => {
            let rows = sampler_rows(cfg, spec, &op, &h0)?;
            let worst = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
            checks.push(if exact {
                LemmaCheck {
                    key: "operator-sampler-agreement".into(),
                    status: if worst <= 3.0 {
                        CheckStatus::Pass
                    } else {
                        CheckStatus::Fail
                    },
                    residual: worst,
                    tolerance: 3.0,
                    note: "largest L1(histogram, normalized T^n h0) / multinomial error estimate".into(),
                }
            } else {
                LemmaCheck {
                    key: "operator-sampler-agreement".into(),
                    status: CheckStatus::NotApplicable,
                    residual: worst,
                    tolerance: 3.0,
                    note: "Metropolis-corrected particles follow a kernel that differs from leapfrog T"
                        .into(),
                }
            });
            rows
        }
        None => Vec::new(),
    };

    let counts = CheckCounts {
        pass: checks.iter().filter(|c| c.status == CheckStatus::Pass).count(),
        fail: checks.iter().filter(|c| c.status == CheckStatus::Fail).count(),
        not_applicable: checks
            .iter()
            .filter(|c| c.status == CheckStatus::NotApplicable)
            .count(),
    };
    for c in checks.iter().filter(|c| c.status == CheckStatus::Fail) {
        warnings.push(format!("check {} failed: {:.3e} against {:.1e}", c.key, c.residual, c.tolerance));
    }

    trace.write_csv(BufWriter::new(fs::File::create(dir.join(TRACE_FILE))?))?;
    write_checks_csv(&checks, BufWriter::new(fs::File::create(dir.join(CHECKS_FILE))?))?;
    fs::write(dir.join(SPECTRAL_FILE), serde_json::to_string_pretty(&spectral).map_err(json_err)?)?;
    trace
        .final_density
        .write_text(BufWriter::new(fs::File::create(dir.join(FINAL_DENSITY_FILE))?))?;
    let mut files = vec![TRACE_FILE, CHECKS_FILE, SPECTRAL_FILE, FINAL_DENSITY_FILE];
    if cfg.sampler.is_some() {
        let mut text = String::from("n,l1_distance,mc_error,ratio,mean_acceptance,resampled,outliers\n");
        for r in &sampler {
            text.push_str(&format!(
                "{},{:.9e},{:.9e},{:.6},{:.9},{},{}\n",
                r.n, r.l1_distance, r.mc_error, r.ratio, r.mean_acceptance, r.resampled, r.outliers
            ));
        }
        fs::write(dir.join(SAMPLER_FILE), text)?;
        files.push(SAMPLER_FILE);
    }
    files.push(MANIFEST_FILE);
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config: cfg,
        iteration: trace.iteration.name(),
        operator: &summary,
        warnings: &warnings,
        checks: &counts,
        failed_checks: checks
            .iter()
            .filter(|c| c.status == CheckStatus::Fail)
            .map(|c| c.key.as_str())
            .collect(),
        files,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest).map_err(json_err)?)?;
    Ok(RunReport {
        output_dir: dir.to_path_buf(),
        warnings,
        checks,
        counts,
        spectral,
        sampler,
        operator: summary,
    })
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Format(e.to_string())
}

fn sampler_rows(
    cfg: &ExperimentConfig,
    spec: &SamplerSpec,
    op: &TransferOperator,
    h0: &GridDensity,
) -> Result<Vec<SamplerRow>> {
    let accept = spec.accept.unwrap_or(if op.flow().conserves_energy() {
        AcceptRule::None
    } else {
        AcceptRule::MetropolisHastings
    });
    let chain = ChainConfig::new(op.flow().clone(), accept, cfg.diagnostics.initial)?;
    let target = op.flow().energy().target();
    let mut ens = ParticleEnsemble::from_initial(cfg.diagnostics.initial, target, spec.particles, cfg.seed)?;
    let mut reference = h0.clone();
    let mut rows = Vec::with_capacity(spec.steps);
    for n in 1..=spec.steps {
        ens = hmc_step(&chain, &ens)?;
        reference = op.apply_t(&reference)?;
        let (hist, stats) = histogram_density(&ens, *op.grid())?;
        let normalized = reference.scaled(1.0 / op.space().integral(&reference)?);
        let l1 = l1_distance(&hist, &normalized)?;
        let mc = multinomial_l1_error(&normalized, stats.inside);
        let step = ens.last_step();
        rows.push(SamplerRow {
            n,
            l1_distance: l1,
            mc_error: mc,
            ratio: l1 / mc,
            mean_acceptance: step.mean_acceptance(),
            resampled: step.resampled,
            outliers: stats.outliers,
        });
    }
    Ok(rows)
}
