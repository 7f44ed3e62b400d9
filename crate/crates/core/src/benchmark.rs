//! Deconvolution benchmarks on simulated data: stage-method comparisons and
//! penalty/selector comparisons at a single probe frequency.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deconv::{rmse, Channels, DeconvConfig, Stage1Solver, Stage2Solver, StageConfig, StageMethod};
use crate::error::{Error, Result};
use crate::forward::{add_detection_noise, polarization, simulate_experiment, ExperimentSpec, ResponseSurface, Simulation};
use crate::model::{diagonalize, gaussian, substream, SiteModel};
use crate::regularize::{select_lambda_factored, OracleTarget, Penalty, SelectorConfig, SelectorMethod, TikhonovFactorization};

/// A simulated, noise-free dataset with its truth.
pub struct Problem {
    pub model: SiteModel,
    pub spec: ExperimentSpec,
    pub simulation: Simulation,
}

impl Problem {
    pub fn simulate(model: SiteModel, spec: ExperimentSpec) -> Result<Self> {
        let mut clean_spec = spec.clone();
        clean_spec.noise_relative = 0.0;
        let simulation = simulate_experiment(&model, &clean_spec)?;
        Ok(Self {
            model,
            spec,
            simulation,
        })
    }

    /// The reference dimer experiment with an `ensemble_size`-member ensemble.
    pub fn reference(ensemble_size: usize, seed: u64) -> Result<Self> {
        let mut spec = ExperimentSpec::reference();
        spec.ensemble.n_samples = ensemble_size;
        spec.ensemble.seed = seed;
        Self::simulate(SiteModel::reference_dimer(), spec)
    }

    pub fn truth(&self) -> &ResponseSurface {
        &self.simulation.truth.response
    }

    /// Probe-grid frequency closest to the upper one-exciton energy of the
    /// nominal model.
    pub fn upper_exciton_index(&self) -> usize {
        let e = diagonalize(&self.model).one_exciton_energies;
        let top = e[e.len() - 1];
        nearest(&self.spec.grid.probe_freqs, top)
    }
}

fn nearest(grid: &[f64], x: f64) -> usize {
    (0..grid.len())
        .min_by(|a, b| (grid[*a] - x).abs().total_cmp(&(grid[*b] - x).abs()))
        .unwrap_or(0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(v: &[f64]) -> Self {
        if v.is_empty() {
            return Self::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 {
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageComparisonRow {
    pub noise: f64,
    pub stage1: StageMethod,
    pub stage2: StageMethod,
    pub rmse: Stat,
    /// RMSE of the naive/naive estimate over this row's RMSE, per instance.
    pub improvement: Stat,
    pub instances: usize,
}

/// All four stage-method combinations at each noise level; noise-free
/// levels use a single instance.
pub fn stage_comparison(problem: &Problem, noise_levels: &[f64], instances: usize, seed: u64) -> Result<Vec<StageComparisonRow>> {
    let spec = &problem.spec;
    let cfg = DeconvConfig::default();
    let freqs = &spec.grid.probe_freqs;
    let delays = &spec.grid.delays;
    let step = spec
        .grid
        .delay_step()
        .ok_or_else(|| Error::validation("delays must be uniform"))?;
    let s1 = [
        Stage1Solver::new(freqs, &spec.probe, &StageConfig::naive(), cfg.lo_threshold)?,
        Stage1Solver::new(freqs, &spec.probe, &StageConfig::tikhonov(), cfg.lo_threshold)?,
    ];
    let padding = cfg.padding(&spec.probe, step);
    let s2 = [
        Stage2Solver::new(freqs, delays, &spec.probe, &StageConfig::naive(), padding)?,
        Stage2Solver::new(freqs, delays, &spec.probe, &StageConfig::tikhonov(), padding)?,
    ];
    let methods = [StageMethod::Naive, StageMethod::Tikhonov];
    let truth = problem.truth();
    let mut rows = Vec::new();
    for &noise in noise_levels {
        let count = if noise == 0.0 { 1 } else { instances.max(1) };
        let per: Vec<Result<[f64; 4]>> = (0..count)
            .into_par_iter()
            .map(|k| {
                let (signals, _) = add_detection_noise(&problem.simulation.clean, noise, seed, k as u64)?;
                let mut e = [0.0; 4];
                for (a, solver1) in s1.iter().enumerate() {
                    let p3 = solver1.solve(&signals, Channels::Both)?;
                    for (b, solver2) in s2.iter().enumerate() {
                        let (r, _) = solver2.solve(&p3, None, None)?;
                        e[2 * a + b] = rmse(&r.restrict(delays)?, truth)?;
                    }
                }
                Ok(e)
            })
            .collect();
        let per: Vec<[f64; 4]> = per.into_iter().collect::<Result<_>>()?;
        for a in 0..2 {
            for b in 0..2 {
                let k = 2 * a + b;
                let errs: Vec<f64> = per.iter().map(|e| e[k]).collect();
                let imps: Vec<f64> = per.iter().map(|e| e[0] / e[k]).collect();
                rows.push(StageComparisonRow {
                    noise,
                    stage1: methods[a],
                    stage2: methods[b],
                    rmse: Stat::of(&errs),
                    improvement: Stat::of(&imps),
                    instances: count,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorComparisonRow {
    pub noise: f64,
    pub penalty: Penalty,
    pub selector: SelectorMethod,
    pub lambda: Stat,
    /// Naive mean-squared error over the regularized one, per instance.
    pub improvement: Stat,
    pub instances: usize,
}

/// Penalty and selector comparison for the delay deconvolution at a single
/// probe frequency. The exact polarization is perturbed with the detection
/// noise of the full experiment at relative level `noise`, as seen after
/// dividing out the local oscillator, and deconvolved; errors are scored over
/// the data delays.
pub fn selector_comparison(
    problem: &Problem,
    freq_index: usize,
    noise_levels: &[f64],
    instances: usize,
    seed: u64,
) -> Result<Vec<SelectorComparisonRow>> {
    let spec = &problem.spec;
    let cfg = DeconvConfig::default();
    let delays = &spec.grid.delays;
    let step = spec
        .grid
        .delay_step()
        .ok_or_else(|| Error::validation("delays must be uniform"))?;
    let omega = *spec
        .grid
        .probe_freqs
        .get(freq_index)
        .ok_or_else(|| Error::validation("frequency index out of range"))?;
    let truth = problem.truth();
    let row_truth = ResponseSurface {
        freqs: vec![omega],
        delays: truth.delays.clone(),
        values: truth.values.rows(freq_index, 1).into_owned(),
    };
    let p_exact = polarization(&row_truth, &spec.probe, delays)?;
    let (below, above) = cfg.padding(&spec.probe, step);
    let recon = crate::pulse::extend_axis(delays, below, above)?;
    let x_full = row_truth.restrict(&recon)?;
    let x_true = DVector::from_iterator(recon.len(), x_full.values.row(0).iter().cloned());
    let a = crate::deconv::delay_operator(&spec.probe, omega, delays, &recon)?;
    let e_pr = spec.probe.spectrum(omega);
    // Detection noise is set by the strongest signal anywhere on the grid and
    // reaches P^(3) divided by the local-oscillator amplitude.
    let peak = problem.simulation.clean.max_amplitude() / spec.probe.spectrum(omega).norm();

    let configs: Vec<(Penalty, SelectorMethod)> = vec![
        (Penalty::Identity, SelectorMethod::ExactOracle),
        (Penalty::FirstDifference, SelectorMethod::ExactOracle),
        (Penalty::SecondDifference, SelectorMethod::ExactOracle),
        (Penalty::SecondDifference, SelectorMethod::Gcv),
        (Penalty::SecondDifference, SelectorMethod::Ncp),
    ];
    let facts: Vec<TikhonovFactorization> = [Penalty::Identity, Penalty::FirstDifference, Penalty::SecondDifference]
        .iter()
        .map(|p| TikhonovFactorization::new(&a, *p))
        .collect::<Result<_>>()?;
    let fact_of = |p: Penalty| match p {
        Penalty::Identity => &facts[0],
        Penalty::FirstDifference => &facts[1],
        Penalty::SecondDifference => &facts[2],
    };
    let window: Vec<usize> = (below..below + delays.len()).collect();
    let window_err = |x: &DVector<Complex64>| -> f64 { window.iter().map(|&j| (x[j] - x_true[j]).norm_sqr()).sum() };

    let mut rows = Vec::new();
    for &noise in noise_levels {
        let sigma = noise * peak;
        let per: Vec<Result<Vec<(f64, f64)>>> = (0..instances.max(1))
            .into_par_iter()
            .map(|k| {
                let mut rng = substream(seed, k as u64);
                let b = DVector::from_iterator(
                    delays.len(),
                    p_exact.row(0).iter().map(|p| {
                        let amp = sigma * gaussian(&mut rng);
                        let phi = rand::Rng::random::<f64>(&mut rng) * std::f64::consts::TAU;
                        p + Complex64::from_polar(amp, phi)
                    }),
                );
                let naive: f64 = (0..delays.len())
                    .map(|i| (b[i] / e_pr - x_true[below + i]).norm_sqr())
                    .sum();
                configs
                    .iter()
                    .map(|(pen, sel)| {
                        let fact = fact_of(*pen);
                        let s = select_lambda_factored(fact, &b, &SelectorConfig::with_method(*sel), Some(&OracleTarget::window(&x_true, below..below + delays.len())))?;
                        let x = fact.solve(&fact.project(&b)?, s.lambda);
                        Ok((s.lambda, naive / window_err(&x)))
                    })
                    .collect()
            })
            .collect();
        let per: Vec<Vec<(f64, f64)>> = per.into_iter().collect::<Result<_>>()?;
        for (c, (pen, sel)) in configs.iter().enumerate() {
            let lambdas: Vec<f64> = per.iter().map(|v| v[c].0).collect();
            let imps: Vec<f64> = per.iter().map(|v| v[c].1).collect();
            rows.push(SelectorComparisonRow {
                noise,
                penalty: *pen,
                selector: *sel,
                lambda: Stat::of(&lambdas),
                improvement: Stat::of(&imps),
                instances: per.len(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats() {
        let s = Stat::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(Stat::of(&[4.0]).std, 0.0);
    }
}
