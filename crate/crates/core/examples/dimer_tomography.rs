//! Excited-state tomography of the disordered dimer from its exact response.
//!
//! cargo run --release --example dimer_tomography -- [ensemble size]

use pptomo::model::{EnsembleSpec, SiteModel};
use pptomo::tomography::{exact_tomography, TomographySetup};

fn main() -> pptomo::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let model = SiteModel::reference_dimer();
    let t = exact_tomography(&model, &EnsembleSpec::new(n, 3), &TomographySetup::reference())?;

    println!("sample frequencies {:.1?} cm^-1", t.plan.sample_freqs);
    println!(
        "condition number: {:.1} (4 parameters), {:.3} (r0 fixed)",
        t.plan.condition_full, t.plan.condition_fixed_population
    );
    println!("r0 from the 10 ps normalization: {:.5e}", t.result.normalization.r0);

    let fid = t.result.fidelity.clone().unwrap_or_default();
    println!("\n  delay fs    r1/r0     r2/r0     r3/r0   fidelity");
    for k in (0..t.result.delays.len()).step_by(15) {
        let v = t.result.normalized[k];
        println!("{:9.1} {:+.5} {:+.5} {:+.5} {:.6}", t.result.delays[k], v[0], v[1], v[2], fid[k]);
    }
    println!(
        "\nworst fidelity {:.5}, mean {:.5}, unphysical delays {}",
        t.result.worst_fidelity().unwrap_or(f64::NAN),
        t.result.mean_fidelity().unwrap_or(f64::NAN),
        t.result.unphysical_delays.len()
    );
    Ok(())
}
