//! GCV, NCP and oracle weight selection on a synthetic Gaussian blur.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use pptomo::regularize::{
    select_lambda, tikhonov_solve, toeplitz, OracleTarget, Penalty, RegularizedProblem, SelectorConfig, SelectorMethod,
};

fn main() -> pptomo::Result<()> {
    let n = 128;
    let a = toeplitz(n, n, 0, |k| Complex64::new((-(k as f64 / 4.0).powi(2)).exp(), 0.0));
    let x = DVector::from_fn(n, |i, _| {
        let t = i as f64 / n as f64;
        Complex64::new((6.0 * t).sin() * (-2.0 * t).exp(), 0.3 * (3.0 * t).cos())
    });
    let clean = &a * &x;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 1e-2 * clean.camax()).expect("valid width");
    let b = clean.map(|v| v + Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng)));

    for penalty in [Penalty::Identity, Penalty::FirstDifference, Penalty::SecondDifference] {
        let p = RegularizedProblem::new(a.clone(), b.clone(), penalty, 0.0)?;
        for method in [SelectorMethod::Gcv, SelectorMethod::Ncp, SelectorMethod::ExactOracle] {
            let truth = OracleTarget::full(&x);
            let sel = select_lambda(&p, &SelectorConfig::with_method(method), Some(&truth))?;
            let sol = tikhonov_solve(&p.with_weight(sel.lambda))?;
            let err = (&sol.x - &x).norm() / x.norm();
            println!(
                "{:>3} {:>6}  lambda {:.3e}  relative error {:.4}{}",
                penalty.label(),
                method.label(),
                sel.lambda,
                err,
                if sel.converged { "" } else { "  (not converged)" }
            );
        }
    }
    Ok(())
}
