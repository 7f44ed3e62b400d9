//! The pump's second-order density matrix split into its two time orderings.
//! With one pump the orderings sum to the pump-probe state; with two detuned
//! pulses a single ordering is not Hermitian.

use num_complex::Complex64;
use pptomo::bath::{redfield_rates, BathSpec};
use pptomo::forward::{photon_echo_second_order, pump_second_order};
use pptomo::model::{diagonalize, SiteModel, Vec3};
use pptomo::pulse::Pulse;

fn main() -> pptomo::Result<()> {
    let model = SiteModel::reference_dimer().with_disorder(0.0);
    let basis = diagonalize(&model);
    let rates = redfield_rates(&basis, &BathSpec::reference())?;
    let pump = Pulse::gaussian(40.0, 12_800.0, 1.0)?;
    let pol = Vec3::x();
    let times = [100.0, 300.0, 1000.0];

    let echo = photon_echo_second_order(&basis, &rates, (&pump, &pol), (&pump, &pol), 12_800.0, &times, 1.0)?;
    let full = pump_second_order(&basis, &rates, &pump, &pol, 12_800.0, &times, 1.0)?;
    for ((t, e), f) in times.iter().zip(&echo).zip(&full) {
        let summed = (e + e.adjoint()) * Complex64::new(2.0, 0.0);
        let mismatch = (summed - &f.excited).norm() / f.excited.norm();
        println!("t = {t:6.0} fs  relative mismatch of 2(rho + rho^+) against the pump state {mismatch:.1e}");
    }

    let red = Pulse::gaussian(30.0, 12_700.0, 1.0)?;
    let blue = Pulse::gaussian(30.0, 12_900.0, 1.0)?;
    let e = photon_echo_second_order(&basis, &rates, (&red, &pol), (&blue, &pol), 12_800.0, &[200.0], 1.0)?;
    println!("detuned pair: |rho - rho^+| / |rho| = {:.3}", (&e[0] - e[0].adjoint()).norm() / e[0].norm());
    Ok(())
}
