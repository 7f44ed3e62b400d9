//! Tomography fidelity as static disorder grows.
//!
//! cargo run --release --example disorder_sweep -- [ensemble size]

use pptomo::model::SiteModel;
use pptomo::tomography::{disorder_sweep, TomographySetup};

fn main() -> pptomo::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let widths = [0.0, 20.0, 40.0, 60.0, 80.0, 100.0, 120.0];
    let sweep = disorder_sweep(&SiteModel::reference_dimer(), &widths, n, 11, &TomographySetup::reference())?;
    println!("disorder  worst F    mean F     cond(r0 fixed)");
    for p in sweep {
        println!(
            "{:6.0}    {:.6}  {:.6}  {:.3}",
            p.disorder, p.worst_fidelity, p.mean_fidelity, p.condition_fixed_population
        );
    }
    Ok(())
}
