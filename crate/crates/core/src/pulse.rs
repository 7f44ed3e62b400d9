//! Laser pulses and experiment grids.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::TWO_PI_C;

const FWHM_TO_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Envelope {
    #[default]
    Gaussian,
    /// A delta function carrying the full pulse area.
    Impulsive,
    /// Carrier-free complex samples on an increasing time axis (fs),
    /// interpolated linearly and zero outside the samples.
    Tabulated { times_fs: Vec<f64>, re: Vec<f64>, im: Vec<f64> },
}

/// A pulse with carrier-free envelope ε(t), normalized so that its
/// spectrum at the carrier, ∫ε(t) dt, equals `amplitude`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse {
    /// Field-envelope FWHM (fs).
    pub fwhm: f64,
    /// Carrier frequency (cm⁻¹).
    pub center_freq: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub envelope: Envelope,
}

impl Pulse {
    pub fn gaussian(fwhm: f64, center_freq: f64, amplitude: f64) -> Result<Self> {
        let p = Self {
            fwhm,
            center_freq,
            amplitude,
            envelope: Envelope::Gaussian,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn impulsive(center_freq: f64, amplitude: f64) -> Self {
        Self {
            fwhm: f64::MIN_POSITIVE,
            center_freq,
            amplitude,
            envelope: Envelope::Impulsive,
        }
    }

    /// Tabulated envelope rescaled so that |∫ε dt| = `amplitude`.
    pub fn tabulated(times_fs: Vec<f64>, values: Vec<Complex64>, center_freq: f64, amplitude: f64) -> Result<Self> {
        if times_fs.len() < 2 || times_fs.len() != values.len() {
            return Err(Error::validation("tabulated envelope needs matching times and values (≥ 2)"));
        }
        if times_fs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation("tabulated envelope times must increase"));
        }
        let area = trapezoid_area(&times_fs, &values);
        if area.norm() == 0.0 {
            return Err(Error::validation("tabulated envelope has zero area"));
        }
        let scale = amplitude / area.norm();
        let values: Vec<Complex64> = values.iter().map(|v| v * scale).collect();
        let fwhm = tabulated_fwhm(&times_fs, &values);
        Ok(Self {
            fwhm,
            center_freq,
            amplitude,
            envelope: Envelope::Tabulated {
                times_fs,
                re: values.iter().map(|v| v.re).collect(),
                im: values.iter().map(|v| v.im).collect(),
            },
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm > 0.0 && self.fwhm.is_finite()) {
            return Err(Error::validation(format!("pulse fwhm must be positive, got {}", self.fwhm)));
        }
        if !self.center_freq.is_finite() || !self.amplitude.is_finite() {
            return Err(Error::validation("pulse parameters must be finite"));
        }
        if let Envelope::Tabulated { times_fs, re, im } = &self.envelope {
            if times_fs.len() != re.len() || re.len() != im.len() || times_fs.len() < 2 {
                return Err(Error::validation("tabulated envelope arrays differ in length"));
            }
        }
        Ok(())
    }

    pub fn is_impulsive(&self) -> bool {
        matches!(self.envelope, Envelope::Impulsive)
    }

    fn gaussian_peak(&self) -> f64 {
        let sigma = self.fwhm / FWHM_TO_SIGMA;
        self.amplitude / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    }

    /// Carrier-free envelope ε(t); zero for impulsive pulses.
    pub fn envelope(&self, t: f64) -> Complex64 {
        match &self.envelope {
            Envelope::Gaussian => {
                let sigma = self.fwhm / FWHM_TO_SIGMA;
                Complex64::new(self.gaussian_peak() * (-0.5 * (t / sigma).powi(2)).exp(), 0.0)
            }
            Envelope::Impulsive => Complex64::new(0.0, 0.0),
            Envelope::Tabulated { times_fs, re, im } => {
                if t < times_fs[0] || t > times_fs[times_fs.len() - 1] {
                    return Complex64::new(0.0, 0.0);
                }
                let j = times_fs.partition_point(|x| *x <= t).clamp(1, times_fs.len() - 1);
                let (t0, t1) = (times_fs[j - 1], times_fs[j]);
                let w = (t - t0) / (t1 - t0);
                Complex64::new(re[j - 1] * (1.0 - w) + re[j] * w, im[j - 1] * (1.0 - w) + im[j] * w)
            }
        }
    }

    /// Envelope in a frame rotating at `frame_freq`: ε(t)·e^{−i(ω_c − ω_frame)t}.
    pub fn field(&self, t: f64, frame_freq: f64) -> Complex64 {
        let phase = -(self.center_freq - frame_freq) * TWO_PI_C * t;
        self.envelope(t) * Complex64::from_polar(1.0, phase)
    }

    /// E(ω) = ∫ε(t) e^{i(ω−ω_c)t} dt with ω in cm⁻¹.
    pub fn spectrum(&self, omega: f64) -> Complex64 {
        let dw = (omega - self.center_freq) * TWO_PI_C;
        match &self.envelope {
            Envelope::Gaussian => {
                let sigma = self.fwhm / FWHM_TO_SIGMA;
                Complex64::new(self.amplitude * (-0.5 * (sigma * dw).powi(2)).exp(), 0.0)
            }
            Envelope::Impulsive => Complex64::new(self.amplitude, 0.0),
            Envelope::Tabulated { times_fs, .. } => {
                let vals: Vec<Complex64> = times_fs
                    .iter()
                    .map(|t| self.envelope(*t) * Complex64::from_polar(1.0, dw * t))
                    .collect();
                trapezoid_area(times_fs, &vals)
            }
        }
    }

    /// Time window outside which the envelope is treated as zero.
    pub fn support(&self) -> (f64, f64) {
        match &self.envelope {
            Envelope::Gaussian => (-4.0 * self.fwhm, 4.0 * self.fwhm),
            Envelope::Impulsive => (0.0, 0.0),
            Envelope::Tabulated { times_fs, .. } => (times_fs[0], times_fs[times_fs.len() - 1]),
        }
    }
}

fn trapezoid_area(t: &[f64], v: &[Complex64]) -> Complex64 {
    t.windows(2)
        .zip(v.windows(2))
        .map(|(tw, vw)| (vw[0] + vw[1]) * (0.5 * (tw[1] - tw[0])))
        .sum()
}

fn tabulated_fwhm(t: &[f64], v: &[Complex64]) -> f64 {
    let peak = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let above: Vec<f64> = t
        .iter()
        .zip(v)
        .filter(|(_, x)| x.norm() >= 0.5 * peak)
        .map(|(t, _)| *t)
        .collect();
    match (above.first(), above.last()) {
        (Some(a), Some(b)) if b > a => b - a,
        _ => t[1] - t[0],
    }
}

/// Probe frequencies (cm⁻¹) × delays (fs) in a rotating frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentGrid {
    pub probe_freqs: Vec<f64>,
    pub delays: Vec<f64>,
    pub rotating_frame_freq: f64,
}

impl ExperimentGrid {
    pub fn new(probe_freqs: Vec<f64>, delays: Vec<f64>, rotating_frame_freq: f64) -> Result<Self> {
        let g = Self {
            probe_freqs,
            delays,
            rotating_frame_freq,
        };
        g.validate()?;
        Ok(g)
    }

    /// 181 probe frequencies over 12500–13100 cm⁻¹ and 140 delays from 50 fs
    /// in steps of 6.81 fs, in a frame rotating at 12800 cm⁻¹.
    pub fn reference() -> Self {
        Self {
            probe_freqs: linspace(12_500.0, 13_100.0, 181),
            delays: (0..140).map(|k| 50.0 + 6.81 * k as f64).collect(),
            rotating_frame_freq: 12_800.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [("probe frequency", &self.probe_freqs), ("delay", &self.delays)] {
            if axis.is_empty() {
                return Err(Error::validation(format!("{name} axis is empty")));
            }
            if axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::validation(format!("{name} axis must be strictly increasing")));
            }
        }
        Ok(())
    }

    /// Uniform delay spacing, if the delays are evenly spaced to 1e-9 relative.
    pub fn delay_step(&self) -> Option<f64> {
        uniform_step(&self.delays)
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

pub fn uniform_step(axis: &[f64]) -> Option<f64> {
    if axis.len() < 2 {
        return None;
    }
    let h = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
    axis.windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1.0))
        .then_some(h)
}

/// `axis` extended by `below` and `above` points at its uniform spacing.
pub fn extend_axis(axis: &[f64], below: usize, above: usize) -> Result<Vec<f64>> {
    let h = uniform_step(axis).ok_or_else(|| Error::validation("axis is not uniformly spaced"))?;
    let first = axis[0] - below as f64 * h;
    Ok((0..axis.len() + below + above).map(|k| first + k as f64 * h).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_area_and_width() {
        let p = Pulse::gaussian(40.0, 12_800.0, 2.0).unwrap();
        let h = 0.05;
        let area: f64 = (-4000..=4000).map(|k| p.envelope(k as f64 * h).re * h).sum();
        assert_relative_eq!(area, 2.0, max_relative = 1e-10);
        let peak = p.envelope(0.0).re;
        assert_relative_eq!(p.envelope(20.0).re, 0.5 * peak, max_relative = 1e-12);
        assert_relative_eq!(p.spectrum(12_800.0).re, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn spectrum_matches_quadrature() {
        let p = Pulse::gaussian(40.0, 12_800.0, 1.0).unwrap();
        for w in [12_700.0, 12_850.0, 13_000.0] {
            let dw = (w - 12_800.0) * TWO_PI_C;
            let h = 0.1;
            let q: Complex64 = (-2000..=2000)
                .map(|k| {
                    let t = k as f64 * h;
                    p.envelope(t) * Complex64::from_polar(h, dw * t)
                })
                .sum();
            assert_relative_eq!(q.re, p.spectrum(w).re, max_relative = 1e-9);
            assert!(q.im.abs() < 1e-12);
        }
    }

    #[test]
    fn tabulated_matches_gaussian() {
        let g = Pulse::gaussian(40.0, 12_800.0, 1.0).unwrap();
        let t: Vec<f64> = (-1600..=1600).map(|k| k as f64 * 0.1).collect();
        let v: Vec<Complex64> = t.iter().map(|x| g.envelope(*x) * 3.0).collect();
        let p = Pulse::tabulated(t, v, 12_800.0, 1.0).unwrap();
        assert_relative_eq!(p.spectrum(12_900.0).re, g.spectrum(12_900.0).re, max_relative = 1e-6);
        assert!((p.fwhm - 40.0).abs() < 0.2);
        assert_relative_eq!(p.envelope(3.05).re, g.envelope(3.05).re, max_relative = 1e-4);
    }

    #[test]
    fn rotating_frame_phase() {
        let p = Pulse::gaussian(40.0, 12_900.0, 1.0).unwrap();
        let f = p.field(10.0, 12_800.0);
        assert_relative_eq!(f.arg(), -100.0 * TWO_PI_C * 10.0, epsilon = 1e-12);
        assert_relative_eq!(f.norm(), p.envelope(10.0).re, epsilon = 1e-15);
    }

    #[test]
    fn invalid_pulses_rejected() {
        assert!(Pulse::gaussian(0.0, 12_800.0, 1.0).is_err());
        assert!(Pulse::gaussian(-1.0, 12_800.0, 1.0).is_err());
        assert!(Pulse::tabulated(vec![0.0, 0.0], vec![Complex64::new(1.0, 0.0); 2], 1.0, 1.0).is_err());
    }

    #[test]
    fn reference_grid() {
        let g = ExperimentGrid::reference();
        assert_eq!(g.probe_freqs.len(), 181);
        assert_eq!(g.delays.len(), 140);
        assert_relative_eq!(g.probe_freqs[1] - g.probe_freqs[0], 3.3333333333, epsilon = 1e-8);
        assert_relative_eq!(g.delay_step().unwrap(), 6.81, epsilon = 1e-12);
        assert!((g.delays[139] - 996.59).abs() < 1e-9);
        let ext = extend_axis(&g.delays, 18, 18).unwrap();
        assert_eq!(ext.len(), 176);
        assert_relative_eq!(ext[18], 50.0, epsilon = 1e-12);
        assert!(ExperimentGrid::new(vec![1.0, 0.5], vec![1.0], 0.0).is_err());
    }
}
