//! Forward simulation of heterodyne pump-probe signals for the reference dimer.
//!
//! cargo run --release --example simulate_dimer -- [ensemble size]

use pptomo::forward::{simulate_experiment, ExperimentSpec};
use pptomo::model::SiteModel;

fn main() -> pptomo::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let mut spec = ExperimentSpec::reference();
    spec.ensemble.n_samples = n;
    spec.noise_relative = 1e-2;

    let sim = simulate_experiment(&SiteModel::reference_dimer(), &spec)?;
    for w in &sim.warnings {
        eprintln!("warning: {w}");
    }
    let g = &spec.grid;
    println!(
        "{} probe frequencies x {} delays, {} members, noise sigma {:.3e}",
        g.probe_freqs.len(),
        g.delays.len(),
        n,
        sim.noise_sigma
    );

    // Absorptive signal at a few delays, at the most negative (bleach) frequency.
    let abs = &sim.clean.absorptive;
    for j in [0, 20, 60, 139] {
        let col = abs.column(j);
        let (i, v) = col.iter().enumerate().fold((0, 0.0), |b, (i, v)| if *v < b.1 { (i, *v) } else { b });
        println!("T = {:7.1} fs   min S_abs {:+.4e} at {:.0} cm^-1", g.delays[j], v, g.probe_freqs[i]);
    }

    if let Some(b) = &sim.truth.mean_bloch {
        let pad = spec.truth_padding();
        println!("\nmean Bloch vector (r0, r1, r2, r3):");
        for j in [0, 20, 60, 139] {
            let r = b[pad + j];
            println!("  T = {:7.1} fs   {:+.4e} {:+.4e} {:+.4e} {:+.4e}", g.delays[j], r[0], r[1], r[2], r[3]);
        }
    }
    Ok(())
}
