//! Two-stage deconvolution of noisy simulated signals, against the double-naive
//! baseline.
//!
//! cargo run --release --example deconvolve_response -- [relative noise]

use pptomo::deconv::{deconvolve, rmse, DeconvConfig, StageMethod};
use pptomo::forward::{simulate_experiment, ExperimentSpec};
use pptomo::model::SiteModel;

fn main() -> pptomo::Result<()> {
    let noise: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1e-2);
    let mut spec = ExperimentSpec::reference();
    spec.ensemble.n_samples = 100;
    spec.noise_relative = noise;
    let sim = simulate_experiment(&SiteModel::reference_dimer(), &spec)?;
    let truth = &sim.truth.response;

    let mut baseline = None;
    for (s1, s2) in [
        (StageMethod::Naive, StageMethod::Naive),
        (StageMethod::Tikhonov, StageMethod::Naive),
        (StageMethod::Naive, StageMethod::Tikhonov),
        (StageMethod::Tikhonov, StageMethod::Tikhonov),
    ] {
        let cfg = DeconvConfig::with_methods(s1, s2);
        let d = deconvolve(&sim.signals, &spec.probe, &spec.probe, &cfg)?;
        let e = rmse(&d.response.restrict(&spec.grid.delays)?, truth)?;
        let base = *baseline.get_or_insert(e);
        let lambdas: Vec<f64> = d.stage2_selections.iter().map(|s| s.lambda).collect();
        let median = if lambdas.is_empty() {
            f64::NAN
        } else {
            let mut l = lambdas.clone();
            l.sort_by(f64::total_cmp);
            l[l.len() / 2]
        };
        println!(
            "{:>8} / {:<8}  rmse {:.4e}  improvement {:6.2}  median stage-2 lambda {:.2e}",
            s1.label(),
            s2.label(),
            e,
            base / e,
            median
        );
    }
    Ok(())
}
