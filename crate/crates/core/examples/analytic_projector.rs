//! The numerically assembled dimer probe operator against the closed-form
//! isotropic projector.

use pptomo::bath::{redfield_rates, BathSpec};
use pptomo::model::{diagonalize, SiteModel};
use pptomo::pulse::linspace;
use pptomo::response::{dimer_projector_isotropic, isotropic_operator, DimerFrame, DimerLineShapes};

fn main() -> pptomo::Result<()> {
    let model = SiteModel::reference_dimer().with_disorder(0.0);
    let basis = diagonalize(&model);
    let rates = redfield_rates(&basis, &BathSpec::reference())?;
    let grid = linspace(12_500.0, 13_100.0, 121);

    let numeric = DimerFrame::new(&basis)?.bloch_operator(&isotropic_operator(&basis, &rates, &grid)?)?;
    let shapes = DimerLineShapes::new(&basis, &rates, &grid)?;
    let d = model.dipoles();
    let analytic = dimer_projector_isotropic(
        basis.mixing_angle.expect("dimer"),
        d[1].norm() / d[0].norm(),
        d[0].angle(&d[1]),
        d[0].norm_squared(),
        &shapes,
        &grid,
    );
    let scale = analytic.rows.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let diff = (&numeric.rows - &analytic.rows).iter().fold(0.0f64, |m, z| m.max(z.norm()));
    println!("max |numeric - closed form| / max |closed form| = {:.2e}", diff / scale);

    println!("\n  freq      Im r0       Im r1       Im r2       Im r3");
    for i in (0..grid.len()).step_by(12) {
        let r = numeric.rows.row(i);
        println!("{:7.0} {:+.4e} {:+.4e} {:+.4e} {:+.4e}", grid[i], r[0].im, r[1].im, r[2].im, r[3].im);
    }
    Ok(())
}
