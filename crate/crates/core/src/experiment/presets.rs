//! Built-in experiments, stored as TOML so they go through the same validation as files.

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub toml: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "gaussian-quarter-turn",
        summary: "exact rotation by pi/2: every density reaches alpha f in one step",
        toml: r#"name = "gaussian-quarter-turn"
seed = 1

[target]
name = "gaussian-1d"

[flow]
kind = "exact-rotation"
time = 1.5707963267948966

[grid]
points = 512

[diagnostics]
exponents = [1.5, 2.0, 3.0, 4.0]
iterations = 20
initial = { kind = "uniform", lo = -1.0, hi = 1.0 }

[sampler]
particles = 100000
steps = 3
"#,
    },
    Preset {
        name: "gaussian-resonant",
        summary: "rotation by pi: a reflection, no coverage and no convergence",
        toml: r#"name = "gaussian-resonant"
seed = 2

[target]
name = "gaussian-1d"

[flow]
kind = "exact-rotation"
time = 3.141592653589793

[grid]
points = 512

[diagnostics]
exponents = [1.5, 2.0, 3.0, 4.0]
iterations = 20
initial = { kind = "uniform", lo = -1.0, hi = 1.0 }
"#,
    },
    Preset {
        name: "gaussian-mixing",
        summary: "rotation by 1: geometric convergence at rate cos(1) on the zero-mass subspace",
        toml: r#"name = "gaussian-mixing"
seed = 3

[target]
name = "gaussian-1d"

[flow]
kind = "exact-rotation"
time = 1.0

[grid]
points = 512

[diagnostics]
exponents = [1.5, 2.0, 3.0, 4.0]
iterations = 200
initial = { kind = "uniform", lo = -1.0, hi = 2.0 }

[sampler]
particles = 100000
steps = 10
"#,
    },
    Preset {
        name: "double-well-leapfrog",
        summary: "leapfrog with step 0.05 on exp(-(q^2-1)^2); reports the literal fixed-point defect",
        toml: r#"name = "double-well-leapfrog"
seed = 4

[target]
name = "double-well"

[flow]
kind = "leapfrog"
time = 1.0
steps = 20

[grid]
points = 256

[operator]
discretization = "balanced"

[diagnostics]
exponents = [1.5, 2.0, 3.0]
iterations = 200
initial = { kind = "uniform", lo = -1.5, hi = 0.0 }

[sampler]
particles = 100000
steps = 10
accept = "metropolis-hastings"
"#,
    },
    Preset {
        name: "skewed-momentum-leapfrog",
        summary: "odd skew-normal momentum: T is not self-adjoint, iterations use S = T' T",
        toml: r#"name = "skewed-momentum-leapfrog"
seed = 5

[target]
name = "gaussian-1d"
extent = 6.0

[momentum]
name = "skew-normal"
shape = 3.0

[flow]
kind = "leapfrog"
time = 1.2
steps = 24

[grid]
points = 256

[operator]
discretization = "balanced"

[diagnostics]
exponents = [1.5, 2.0, 3.0]
iterations = 150
initial = { kind = "uniform", lo = -1.0, hi = 2.0 }
"#,
    },
    Preset {
        name: "sech-momentum",
        summary: "hyperbolic-secant momentum: bounded velocity, so one flow step cannot cover the box",
        toml: r#"name = "sech-momentum"
seed = 6

[target]
name = "gaussian-1d"
extent = 6.0

[momentum]
name = "hyperbolic-secant"

[flow]
kind = "leapfrog"
time = 1.0
steps = 20

[grid]
points = 256

[operator]
discretization = "balanced"

[diagnostics]
exponents = [1.5, 2.0, 3.0]
iterations = 150
initial = { kind = "gaussian", mean = 1.0, sd = 0.5 }
"#,
    },
    Preset {
        name: "gaussian-2d",
        summary: "exact rotation by 1 on the two-dimensional standard Gaussian",
        toml: r#"name = "gaussian-2d"
seed = 7

[target]
name = "gaussian-2d"
extent = 6.0

[flow]
kind = "exact-rotation"
time = 1.0

[grid]
points = 32

[diagnostics]
exponents = [1.5, 2.0, 3.0]
iterations = 80
initial = { kind = "uniform", lo = -1.0, hi = 2.0 }
"#,
    },
    Preset {
        name: "mixture-leapfrog",
        summary: "asymmetric two-component Gaussian mixture under leapfrog",
        toml: r#"name = "mixture-leapfrog"
seed = 8

[target]
name = "gaussian-mixture"

[flow]
kind = "leapfrog"
time = 1.5
steps = 30

[grid]
points = 256

[operator]
discretization = "balanced"

[diagnostics]
exponents = [1.5, 2.0, 3.0]
iterations = 200
initial = { kind = "uniform", lo = -3.0, hi = -1.0 }

[sampler]
particles = 50000
steps = 10
accept = "metropolis-hastings"
"#,
    },
];

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let p = PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        Error::Usage(format!("unknown preset {name:?}; available: {}", names.join(", ")))
    })?;
    ExperimentConfig::from_toml(p.toml)
}
