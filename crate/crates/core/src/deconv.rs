//! Two-stage deconvolution: heterodyne signals → polarization → response.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{probe_kernel, ResponseSurface, SignalPair};
use crate::pulse::{extend_axis, uniform_step, Pulse};
use crate::regularize::{select_lambda_factored, OracleTarget, Penalty, SelectorConfig, Selection, TikhonovFactorization};

type CVec = DVector<Complex64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageMethod {
    Naive,
    Tikhonov,
}

impl StageMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Self::Naive),
            "tikhonov" => Ok(Self::Tikhonov),
            other => Err(Error::Config(format!("unknown stage method `{other}`"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::Tikhonov => "tikhonov",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Channels {
    #[default]
    Both,
    AbsorptiveOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub method: StageMethod,
    pub penalty: Penalty,
    pub selector: SelectorConfig,
}

impl StageConfig {
    pub fn tikhonov() -> Self {
        Self {
            method: StageMethod::Tikhonov,
            penalty: Penalty::SecondDifference,
            selector: SelectorConfig::default(),
        }
    }

    pub fn naive() -> Self {
        Self {
            method: StageMethod::Naive,
            ..Self::tikhonov()
        }
    }
}

fn default_lo_threshold() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeconvConfig {
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    /// Local-oscillator magnitude, relative to its peak, below which a
    /// frequency is masked.
    #[serde(default = "default_lo_threshold")]
    pub lo_threshold: f64,
    /// Reconstruction points added before the first delay; defaults to
    /// ceil(3·fwhm/ΔT).
    #[serde(default)]
    pub pad_below: Option<usize>,
    /// Reconstruction points added after the last delay; same default.
    #[serde(default)]
    pub pad_above: Option<usize>,
    #[serde(default)]
    pub channels: Channels,
}

impl Default for DeconvConfig {
    fn default() -> Self {
        Self {
            stage1: StageConfig::tikhonov(),
            stage2: StageConfig::tikhonov(),
            lo_threshold: 1e-3,
            pad_below: None,
            pad_above: None,
            channels: Channels::Both,
        }
    }
}

impl DeconvConfig {
    pub fn with_methods(stage1: StageMethod, stage2: StageMethod) -> Self {
        let mut c = Self::default();
        c.stage1.method = stage1;
        c.stage2.method = stage2;
        c
    }

    pub fn padding(&self, probe: &Pulse, step: f64) -> (usize, usize) {
        let auto = (3.0 * probe.fwhm / step - 1e-9).ceil().max(0.0) as usize;
        (self.pad_below.unwrap_or(auto), self.pad_above.unwrap_or(auto))
    }
}

/// Recovered P^(3)(ω, T) on the data grid.
#[derive(Clone, Debug)]
pub struct PolarizationEstimate {
    pub freqs: Vec<f64>,
    pub delays: Vec<f64>,
    pub values: DMatrix<Complex64>,
    /// False where the local oscillator is below threshold; values there are zero.
    pub supported: Vec<bool>,
    /// Per-delay selections (Tikhonov only).
    pub selections: Vec<Selection>,
    pub absorptive_only: bool,
}

/// Stage 1 operator, shared by every delay and noise realization.
pub struct Stage1Solver {
    freqs: Vec<f64>,
    lo_conj: Vec<Complex64>,
    supported: Vec<usize>,
    fact: Option<TikhonovFactorization>,
    config: StageConfig,
}

impl Stage1Solver {
    pub fn new(freqs: &[f64], lo: &Pulse, config: &StageConfig, threshold: f64) -> Result<Self> {
        lo.validate()?;
        let lo_conj: Vec<Complex64> = freqs.iter().map(|w| lo.spectrum(*w).conj()).collect();
        let peak = lo_conj
            .iter()
            .map(|z| z.norm())
            .fold(lo.spectrum(lo.center_freq).norm(), f64::max);
        let supported: Vec<usize> = (0..freqs.len())
            .filter(|&i| lo_conj[i].norm() > threshold * peak && peak > 0.0)
            .collect();
        if supported.is_empty() {
            return Err(Error::validation(
                "local oscillator is below the support threshold across the whole band",
            ));
        }
        let fact = match config.method {
            StageMethod::Naive => None,
            StageMethod::Tikhonov => {
                let k = supported.len();
                let a = DMatrix::from_fn(k, k, |i, j| if i == j { lo_conj[supported[i]] } else { Complex64::new(0.0, 0.0) });
                Some(TikhonovFactorization::new(&a, config.penalty)?)
            }
        };
        Ok(Self {
            freqs: freqs.to_vec(),
            lo_conj,
            supported,
            fact,
            config: config.clone(),
        })
    }

    pub fn solve(&self, signals: &SignalPair, channels: Channels) -> Result<PolarizationEstimate> {
        if signals.freqs.len() != self.freqs.len() {
            return Err(Error::validation("signal frequencies do not match the solver"));
        }
        let z = match channels {
            Channels::Both => signals.complex(),
            Channels::AbsorptiveOnly => signals.absorptive.map(|v| Complex64::new(0.0, v)),
        };
        let nt = signals.delays.len();
        let columns: Vec<Result<(Vec<Complex64>, Option<Selection>)>> = (0..nt)
            .into_par_iter()
            .map(|t| self.solve_column(&z, t))
            .collect();
        let mut values = DMatrix::zeros(self.freqs.len(), nt);
        let mut selections = Vec::new();
        for (t, col) in columns.into_iter().enumerate() {
            let (v, sel) = col?;
            for (i, x) in v.into_iter().enumerate() {
                values[(i, t)] = x;
            }
            selections.extend(sel);
        }
        let mut supported = vec![false; self.freqs.len()];
        for &i in &self.supported {
            supported[i] = true;
        }
        Ok(PolarizationEstimate {
            freqs: self.freqs.clone(),
            delays: signals.delays.clone(),
            values,
            supported,
            selections,
            absorptive_only: channels == Channels::AbsorptiveOnly,
        })
    }

    fn solve_column(&self, z: &DMatrix<Complex64>, t: usize) -> Result<(Vec<Complex64>, Option<Selection>)> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.freqs.len()];
        match &self.fact {
            None => {
                for &i in &self.supported {
                    out[i] = z[(i, t)] / self.lo_conj[i];
                }
                Ok((out, None))
            }
            Some(fact) => {
                let b = CVec::from_iterator(self.supported.len(), self.supported.iter().map(|&i| z[(i, t)]));
                let sel = select_lambda_factored(fact, &b, &self.config.selector, None)?;
                let x = fact.solve(&fact.project(&b)?, sel.lambda);
                for (k, &i) in self.supported.iter().enumerate() {
                    out[i] = x[k];
                }
                Ok((out, Some(sel)))
            }
        }
    }
}

pub fn invert_signal_to_polarization(signals: &SignalPair, lo: &Pulse, cfg: &DeconvConfig) -> Result<PolarizationEstimate> {
    Stage1Solver::new(&signals.freqs, lo, &cfg.stage1, cfg.lo_threshold)?.solve(signals, cfg.channels)
}

/// Convolution operator along the delay axis at fixed probe frequency:
/// rows are data delays, columns reconstruction delays.
pub fn delay_operator(probe: &Pulse, omega: f64, data_delays: &[f64], recon_delays: &[f64]) -> Result<DMatrix<Complex64>> {
    let h = uniform_step(recon_delays).ok_or_else(|| Error::validation("reconstruction delays must be uniformly spaced"))?;
    let (lo, hi) = probe.support();
    Ok(DMatrix::from_fn(data_delays.len(), recon_delays.len(), |i, j| {
        let s = recon_delays[j] - data_delays[i];
        if s < lo - 1e-9 || s > hi + 1e-9 {
            Complex64::new(0.0, 0.0)
        } else {
            probe_kernel(probe, omega, s) * h
        }
    }))
}

/// Stage 2 operators, one factorization per probe frequency.
pub struct Stage2Solver {
    freqs: Vec<f64>,
    data_delays: Vec<f64>,
    recon_delays: Vec<f64>,
    probe_spectrum: Vec<Complex64>,
    facts: Vec<TikhonovFactorization>,
    pad_below: usize,
    config: StageConfig,
}

impl Stage2Solver {
    pub fn new(freqs: &[f64], data_delays: &[f64], probe: &Pulse, config: &StageConfig, padding: (usize, usize)) -> Result<Self> {
        probe.validate()?;
        let probe_spectrum: Vec<Complex64> = freqs.iter().map(|w| probe.spectrum(*w)).collect();
        if probe.is_impulsive() || config.method == StageMethod::Naive {
            return Ok(Self {
                freqs: freqs.to_vec(),
                data_delays: data_delays.to_vec(),
                recon_delays: data_delays.to_vec(),
                probe_spectrum,
                facts: Vec::new(),
                pad_below: 0,
                config: config.clone(),
            });
        }
        let recon_delays = extend_axis(data_delays, padding.0, padding.1)?;
        let facts: Vec<Result<TikhonovFactorization>> = freqs
            .par_iter()
            .map(|&w| {
                let a = delay_operator(probe, w, data_delays, &recon_delays)?;
                TikhonovFactorization::new(&a, config.penalty)
            })
            .collect();
        Ok(Self {
            freqs: freqs.to_vec(),
            data_delays: data_delays.to_vec(),
            recon_delays,
            probe_spectrum,
            facts: facts.into_iter().collect::<Result<_>>()?,
            pad_below: padding.0,
            config: config.clone(),
        })
    }

    pub fn recon_delays(&self) -> &[f64] {
        &self.recon_delays
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    /// Solves every frequency row. With the exact oracle, `truth` supplies
    /// the response on the reconstruction grid.
    pub fn solve(
        &self,
        p3: &PolarizationEstimate,
        selector: Option<&SelectorConfig>,
        truth: Option<&ResponseSurface>,
    ) -> Result<(ResponseSurface, Vec<Selection>)> {
        if p3.freqs != self.freqs || p3.delays.len() != self.data_delays.len() {
            return Err(Error::validation("polarization grid does not match the solver"));
        }
        let selector = selector.unwrap_or(&self.config.selector);
        let truth = match truth {
            Some(t) => Some(t.restrict(&self.recon_delays)?),
            None => None,
        };
        let nd = self.recon_delays.len();
        let mut out = ResponseSurface::zeros(self.freqs.clone(), self.recon_delays.clone());
        if self.facts.is_empty() {
            for i in 0..self.freqs.len() {
                if !p3.supported[i] || self.probe_spectrum[i].norm() == 0.0 {
                    continue;
                }
                for j in 0..nd {
                    out.values[(i, j)] = p3.values[(i, j)] / self.probe_spectrum[i];
                }
            }
            return Ok((out, Vec::new()));
        }
        let rows: Vec<Result<Option<(CVec, Selection)>>> = (0..self.freqs.len())
            .into_par_iter()
            .map(|i| {
                if !p3.supported[i] {
                    return Ok(None);
                }
                let fact = &self.facts[i];
                let b = CVec::from_iterator(p3.delays.len(), p3.values.row(i).iter().cloned());
                let x_true = truth
                    .as_ref()
                    .map(|t| CVec::from_iterator(nd, t.values.row(i).iter().cloned()));
                let target = x_true.as_ref().map(|x| OracleTarget::window(x, self.pad_below..self.pad_below + p3.delays.len()));
                let sel = select_lambda_factored(fact, &b, selector, target.as_ref())?;
                Ok(Some((fact.solve(&fact.project(&b)?, sel.lambda), sel)))
            })
            .collect();
        let mut selections = Vec::new();
        for (i, r) in rows.into_iter().enumerate() {
            if let Some((x, sel)) = r? {
                for j in 0..nd {
                    out.values[(i, j)] = x[j];
                }
                selections.push(sel);
            }
        }
        Ok((out, selections))
    }
}

pub fn invert_polarization_to_response(p3: &PolarizationEstimate, probe: &Pulse, cfg: &DeconvConfig) -> Result<(ResponseSurface, Vec<Selection>)> {
    let step = uniform_step(&p3.delays).ok_or_else(|| Error::validation("delays must be uniformly spaced"))?;
    let solver = Stage2Solver::new(&p3.freqs, &p3.delays, probe, &cfg.stage2, cfg.padding(probe, step))?;
    solver.solve(p3, None, None)
}

/// Both stages with default solvers.
#[derive(Clone, Debug)]
pub struct Deconvolution {
    pub polarization: PolarizationEstimate,
    pub response: ResponseSurface,
    pub stage2_selections: Vec<Selection>,
}

pub fn deconvolve(signals: &SignalPair, lo: &Pulse, probe: &Pulse, cfg: &DeconvConfig) -> Result<Deconvolution> {
    let polarization = invert_signal_to_polarization(signals, lo, cfg)?;
    let (response, stage2_selections) = invert_polarization_to_response(&polarization, probe, cfg)?;
    Ok(Deconvolution {
        polarization,
        response,
        stage2_selections,
    })
}

/// (Σ|R̂ − R|²)^{1/2} over the estimate's grid; the truth may carry extra delays.
pub fn rmse(estimate: &ResponseSurface, truth: &ResponseSurface) -> Result<f64> {
    if estimate.freqs.len() != truth.freqs.len()
        || estimate.freqs.iter().zip(&truth.freqs).any(|(a, b)| (a - b).abs() > 1e-9)
    {
        return Err(Error::validation("estimate and truth use different frequency grids"));
    }
    let t = truth.restrict(&estimate.delays)?;
    Ok((&estimate.values - &t.values).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{add_detection_noise, polarization};
    use crate::pulse::linspace;
    use crate::regularize::SelectorMethod;
    use approx::assert_relative_eq;

    fn synthetic_truth(freqs: &[f64], delays: &[f64]) -> ResponseSurface {
        let values = DMatrix::from_fn(freqs.len(), delays.len(), |i, j| {
            let w = (freqs[i] - 12_800.0) / 60.0;
            let t = delays[j];
            let line = Complex64::new(1.0, w) / (1.0 + w * w);
            line * (0.6 + 0.4 * (-t / 300.0).exp() * (t * 0.03).cos())
        });
        ResponseSurface {
            freqs: freqs.to_vec(),
            delays: delays.to_vec(),
            values,
        }
    }

    fn synthetic_signals(noise: f64, stream: u64) -> (SignalPair, ResponseSurface, Pulse, Vec<f64>) {
        let probe = Pulse::gaussian(40.0, 12_800.0, 1.0).unwrap();
        let freqs = linspace(12_650.0, 12_950.0, 31);
        let data: Vec<f64> = (0..60).map(|k| 50.0 + 6.81 * k as f64).collect();
        let wide = extend_axis(&data, 24, 24).unwrap();
        let truth = synthetic_truth(&freqs, &wide);
        let p3 = polarization(&truth, &probe, &data).unwrap();
        let clean = SignalPair::from_polarization(&p3, &freqs, &data, &probe);
        let (noisy, _) = add_detection_noise(&clean, noise, 99, stream).unwrap();
        (noisy, truth, probe, data)
    }

    #[test]
    fn naive_stage1_divides_out_oscillator() {
        let (s, _, probe, _) = synthetic_signals(0.0, 0);
        let cfg = DeconvConfig::with_methods(StageMethod::Naive, StageMethod::Naive);
        let p = invert_signal_to_polarization(&s, &probe, &cfg).unwrap();
        let z = s.complex();
        for i in 0..s.freqs.len() {
            let e = probe.spectrum(s.freqs[i]);
            assert_relative_eq!((p.values[(i, 3)] * e.conj()).re, z[(i, 3)].re, max_relative = 1e-12);
        }
    }

    #[test]
    fn noise_free_stage1_methods_agree() {
        let (s, _, probe, _) = synthetic_signals(0.0, 0);
        let naive = invert_signal_to_polarization(&s, &probe, &DeconvConfig::with_methods(StageMethod::Naive, StageMethod::Naive)).unwrap();
        let tik = invert_signal_to_polarization(&s, &probe, &DeconvConfig::default()).unwrap();
        let scale = naive.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let diff = (&naive.values - &tik.values).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-6 * scale, "{diff}");
    }

    #[test]
    fn tikhonov_beats_naive_with_noise() {
        let (s, truth, probe, data) = synthetic_signals(1e-2, 1);
        let naive = deconvolve(&s, &probe, &probe, &DeconvConfig::with_methods(StageMethod::Naive, StageMethod::Naive)).unwrap();
        let tik = deconvolve(&s, &probe, &probe, &DeconvConfig::default()).unwrap();
        let e_naive = rmse(&naive.response, &truth).unwrap();
        let e_tik = rmse(&tik.response.restrict(&data).unwrap(), &truth).unwrap();
        assert!(e_naive / e_tik > 2.0, "{e_naive} {e_tik}");
    }

    #[test]
    fn noise_free_tikhonov_recovers_truth() {
        let (s, truth, probe, data) = synthetic_signals(0.0, 0);
        let naive = deconvolve(&s, &probe, &probe, &DeconvConfig::with_methods(StageMethod::Naive, StageMethod::Naive)).unwrap();
        let tik = deconvolve(&s, &probe, &probe, &DeconvConfig::default()).unwrap();
        let e_naive = rmse(&naive.response, &truth).unwrap();
        let e_tik = rmse(&tik.response.restrict(&data).unwrap(), &truth).unwrap();
        assert!(e_naive / e_tik > 100.0, "{e_naive} {e_tik}");
    }

    #[test]
    fn oracle_needs_truth_and_beats_gcv() {
        let (s, truth, probe, data) = synthetic_signals(1e-2, 2);
        let cfg = DeconvConfig::default();
        let p3 = invert_signal_to_polarization(&s, &probe, &cfg).unwrap();
        let solver = Stage2Solver::new(&p3.freqs, &data, &probe, &cfg.stage2, cfg.padding(&probe, 6.81)).unwrap();
        let oracle = SelectorConfig::with_method(SelectorMethod::ExactOracle);
        assert!(solver.solve(&p3, Some(&oracle), None).is_err());
        let (r_o, _) = solver.solve(&p3, Some(&oracle), Some(&truth)).unwrap();
        let (r_g, _) = solver.solve(&p3, None, None).unwrap();
        let e_o = rmse(&r_o.restrict(&data).unwrap(), &truth).unwrap();
        let e_g = rmse(&r_g.restrict(&data).unwrap(), &truth).unwrap();
        assert!(e_o <= e_g * 1.0001, "{e_o} {e_g}");
    }

    #[test]
    fn impulsive_probe_passes_through() {
        let probe = Pulse::impulsive(12_800.0, 2.0);
        let freqs = vec![12_700.0, 12_800.0];
        let delays: Vec<f64> = (0..10).map(|k| k as f64 * 5.0).collect();
        let truth = synthetic_truth(&freqs, &delays);
        let p3 = polarization(&truth, &probe, &delays).unwrap();
        let s = SignalPair::from_polarization(&p3, &freqs, &delays, &probe);
        let d = deconvolve(&s, &probe, &probe, &DeconvConfig::default()).unwrap();
        assert!(rmse(&d.response, &truth).unwrap() < 1e-6);
    }

    #[test]
    fn masked_band_and_errors() {
        let lo = Pulse::gaussian(5.0, 12_800.0, 1.0).unwrap();
        let freqs = vec![12_800.0, 20_000.0];
        assert!(Stage1Solver::new(&freqs, &lo, &StageConfig::tikhonov(), 1e-3).is_ok());
        let far = vec![30_000.0, 30_010.0];
        assert!(Stage1Solver::new(&far, &lo, &StageConfig::naive(), 1e-3).is_err());
    }

    #[test]
    fn absorptive_only_is_flagged() {
        let (s, _, probe, _) = synthetic_signals(0.0, 0);
        let mut cfg = DeconvConfig::with_methods(StageMethod::Naive, StageMethod::Naive);
        cfg.channels = Channels::AbsorptiveOnly;
        let p = invert_signal_to_polarization(&s, &probe, &cfg).unwrap();
        assert!(p.absorptive_only);
    }

    #[test]
    fn rmse_of_constant_offset() {
        let freqs = vec![1.0, 2.0, 3.0];
        let delays = vec![0.0, 1.0];
        let t = synthetic_truth(&freqs, &delays);
        let mut e = t.clone();
        assert_eq!(rmse(&e, &t).unwrap(), 0.0);
        e.values.iter_mut().for_each(|z| *z += Complex64::new(0.3, 0.4));
        assert_relative_eq!(rmse(&e, &t).unwrap(), 0.5 * 6f64.sqrt(), max_relative = 1e-12);
        let other = ResponseSurface::zeros(vec![1.0, 2.0], delays);
        assert!(rmse(&other, &t).is_err());
    }
}
