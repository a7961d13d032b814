use hmc_lq_demo::{evolve_density_json, sample_particles_json, spectral_gap_curve_json};
use serde_json::Value;

#[test]
fn quarter_turn_lands_on_the_target() {
    let v: Value = serde_json::from_str(
        &evolve_density_json("gaussian", std::f64::consts::FRAC_PI_2, 129, -1.0, 2.0, 2).unwrap(),
    )
    .unwrap();
    let errors = v["errors"].as_array().unwrap();
    assert_eq!(errors.len(), 3);
    assert!(errors[1].as_f64().unwrap() < 1e-6);
    assert_eq!(v["frames"][0].as_array().unwrap().len(), 129);
}

#[test]
fn gap_curve_follows_cosine_for_the_gaussian() {
    let v: Value =
        serde_json::from_str(&spectral_gap_curve_json("gaussian", 0.5, 1.25, 4, 257).unwrap()).unwrap();
    let rho = v["rho"].as_array().unwrap();
    let reference = v["reference"].as_array().unwrap();
    for (a, b) in rho.iter().zip(reference) {
        assert!((a.as_f64().unwrap() - b.as_f64().unwrap()).abs() < 1e-3);
    }
    let dw: Value =
        serde_json::from_str(&spectral_gap_curve_json("double-well", 0.5, 1.0, 2, 129).unwrap()).unwrap();
    assert!(dw["reference"].is_null());
}

#[test]
fn particles_track_the_operator() {
    let v: Value = serde_json::from_str(
        &sample_particles_json("gaussian", 1.0, 20_000, 2, 7, -1.0, 2.0).unwrap(),
    )
    .unwrap();
    for step in v["steps"].as_array().unwrap() {
        let ratio = step["l1"].as_f64().unwrap() / step["mc_error"].as_f64().unwrap();
        assert!(ratio < 3.0, "{ratio}");
    }
}

#[test]
fn bad_inputs_are_rejected() {
    assert!(evolve_density_json("banana", 1.0, 129, -1.0, 1.0, 1).is_err());
    assert!(evolve_density_json("gaussian", 1.0, 3, -1.0, 1.0, 1).is_err());
    assert!(spectral_gap_curve_json("gaussian", 1.0, 0.5, 4, 129).is_err());
    assert!(sample_particles_json("gaussian", 1.0, 0, 1, 1, -1.0, 1.0).is_err());
}
