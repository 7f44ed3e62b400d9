//! simulate -> invert-response -> tomography through the library entry points.

use serde_json::Value;

use pptomo::config::bundled_dimer;
use pptomo::deconv::DeconvConfig;
use pptomo::io::read_response;
use pptomo::regularize::{SelectorConfig, SelectorMethod};
use pptomo::run::{self, ModelInput, TomographyConfig, TomographyInputs};

fn report(path: &std::path::Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulated_truth_reconstructs_and_inversion_runs() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let model = ModelInput::load(None, bundled_dimer).unwrap();
    let mut spec = run::default_experiment(&model);
    spec.ensemble.n_samples = 6;
    run::simulate(&model, &spec, &sim).unwrap();

    // exact response with the projector averaged over the same members
    let cfg = TomographyConfig {
        disorder_samples: 6,
        seed: spec.ensemble.seed,
        ..TomographyConfig::default()
    };
    let tomo = dir.path().join("tomo");
    let inputs = TomographyInputs {
        response: &sim.join("response_true.csv"),
        long_response: Some(&sim.join("response_long.csv")),
        truth: Some(&sim.join("bloch_true.csv")),
    };
    run::tomography(&model, &inputs, &cfg, &tomo).unwrap();
    let r = report(&tomo.join("tomography_report.json"));
    let worst = r["worst_fidelity"].as_f64().unwrap();
    assert!(worst > 0.999, "{worst}");
    assert!(r["warnings"].as_array().unwrap().is_empty());

    // a fixed weight keeps the inversion quick
    let mut deconv = DeconvConfig::default();
    for stage in [&mut deconv.stage1, &mut deconv.stage2] {
        stage.selector = SelectorConfig {
            method: SelectorMethod::Fixed,
            fixed_lambda: 0.5,
            ..SelectorConfig::default()
        };
    }
    let inv = dir.path().join("inv");
    run::invert_response(&sim, None, &deconv, None, &inv).unwrap();
    let est = read_response(&inv.join("response_est.csv")).unwrap();
    let truth = read_response(&sim.join("response_true.csv")).unwrap();
    assert_eq!(est.freqs, truth.freqs);
    assert_eq!(est.delays, truth.delays);
    let rmse = report(&inv.join("inversion_report.json"))["rmse_vs_truth"].as_f64().unwrap();
    let scale = truth.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    assert!(rmse.is_finite() && rmse < scale, "{rmse} vs {scale}");

    // the estimate feeds tomography without errors; fidelity is bounded
    let tomo2 = dir.path().join("tomo_est");
    let inputs = TomographyInputs {
        response: &inv.join("response_est.csv"),
        long_response: Some(&sim.join("response_long.csv")),
        truth: Some(&sim.join("bloch_true.csv")),
    };
    run::tomography(&model, &inputs, &cfg, &tomo2).unwrap();
    let f = report(&tomo2.join("tomography_report.json"))["mean_fidelity"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f));
}
