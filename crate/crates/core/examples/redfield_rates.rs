//! Exciton energies, relaxation rates and dephasing of the reference dimer.

use pptomo::bath::{redfield_rates, BathSpec};
use pptomo::model::{diagonalize, SiteModel};
use pptomo::units::{thermal_energy_cm1, TWO_PI_C};

fn main() -> pptomo::Result<()> {
    let model = SiteModel::reference_dimer();
    let basis = diagonalize(&model);
    println!("exciton energies (cm^-1): {:?}", basis.one_exciton_energies);
    println!("mixing angle: {:.5} rad", basis.mixing_angle.unwrap_or(f64::NAN));

    for t in [77.0, 273.0, 300.0] {
        let bath = BathSpec::reference().with_temperature(t);
        let r = redfield_rates(&basis, &bath)?;
        let (up, down) = (r.pop_rates[(0, 1)], r.pop_rates[(1, 0)]);
        let gap = basis.one_exciton_energies[1] - basis.one_exciton_energies[0];
        // Detailed balance: uphill/downhill = exp(-gap/kT).
        let ratio = up / down;
        let boltz = (-gap / thermal_energy_cm1(t)).exp();
        println!(
            "{t:>5} K  k_down {:.3e} fs^-1  k_up/k_down {:.4} (Boltzmann {:.4})  linewidths {:.1}, {:.1} cm^-1",
            down,
            ratio,
            boltz,
            r.coherence_gamma_01[0].re / TWO_PI_C,
            r.coherence_gamma_01[1].re / TWO_PI_C,
        );
    }
    Ok(())
}
