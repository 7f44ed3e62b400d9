//! Ohmic bath, secular Redfield rates and the resulting exponential propagators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ExcitonBasis;
use crate::units::{thermal_energy_cm1, TWO_PI_C};

/// Independent identical Ohmic baths on every site.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    #[serde(rename = "reorg_cm1")]
    pub reorg_energy: f64,
    #[serde(rename = "cutoff_cm1")]
    pub cutoff: f64,
    #[serde(rename = "temperature_K")]
    pub temperature: f64,
}

impl BathSpec {
    pub fn new(reorg_energy: f64, cutoff: f64, temperature: f64) -> Result<Self> {
        let spec = Self {
            reorg_energy,
            cutoff,
            temperature,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// λ = 30 cm⁻¹, ω_c = 120 cm⁻¹ at 273 K.
    pub fn reference() -> Self {
        Self {
            reorg_energy: 30.0,
            cutoff: 120.0,
            temperature: 273.0,
        }
    }

    pub fn with_temperature(self, temperature: f64) -> Self {
        Self { temperature, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("reorganization energy", self.reorg_energy),
            ("cutoff", self.cutoff),
            ("temperature", self.temperature),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("bath {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn ohmic(&self, w: f64) -> f64 {
        self.reorg_energy / self.cutoff * w * (-w / self.cutoff).exp()
    }

    /// Thermal correlation spectrum C(ω) in cm⁻¹ for signed ω: J(ω)(1 + n(ω))
    /// for emission into the bath, J(|ω|) n(|ω|) for absorption.
    pub fn correlation(&self, w: f64) -> f64 {
        let kt = thermal_energy_cm1(self.temperature);
        if w == 0.0 {
            return self.reorg_energy * kt / self.cutoff;
        }
        let a = w.abs();
        let n = 1.0 / (a / kt).exp_m1();
        if w > 0.0 {
            self.ohmic(a) * (1.0 + n)
        } else {
            self.ohmic(a) * n
        }
    }

    /// Zero-frequency limit of the symmetrized spectrum, 2λk_BT/ω_c.
    pub fn zero_frequency_symmetric(&self) -> f64 {
        2.0 * self.reorg_energy * thermal_energy_cm1(self.temperature) / self.cutoff
    }
}

/// J(ω) = (λ/ω_c) ω e^{−ω/ω_c}, in cm⁻¹.
pub fn spectral_density(spec: &BathSpec, w: f64) -> Result<f64> {
    if !(w >= 0.0) {
        return Err(Error::validation(format!(
            "spectral density needs ω ≥ 0, got {w}; use BathSpec::correlation for signed frequencies"
        )));
    }
    Ok(spec.ohmic(w))
}

/// Dissipative secular Redfield rates, all in fs⁻¹.
#[derive(Clone, Debug)]
pub struct RedfieldRates {
    /// `pop_rates[(a, b)]` is k_{a→b} between one-exciton states.
    pub pop_rates: DMatrix<f64>,
    /// Decay of each ground/one-exciton coherence.
    pub coherence_gamma_01: Vec<Complex64>,
    /// Decay of each one/two-exciton coherence, indexed `(a, f)`.
    pub coherence_gamma_12: DMatrix<Complex64>,
    /// Decay of one-exciton coherences γ_ab; zero on the diagonal.
    pub coherence_gamma_11: DMatrix<f64>,
    /// One-exciton energies (cm⁻¹) the rates were built for.
    pub energies: Vec<f64>,
    pub temperature: f64,
}

impl RedfieldRates {
    pub fn n(&self) -> usize {
        self.energies.len()
    }

    /// Rate matrix with k_{a→b} off the diagonal and minus the total
    /// outflow on it; each row sums to zero.
    pub fn population_generator(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut w = self.pop_rates.clone();
        for a in 0..n {
            w[(a, a)] = -(0..n).filter(|&b| b != a).map(|b| self.pop_rates[(a, b)]).sum::<f64>();
        }
        w
    }

    pub fn population_propagator(&self) -> PopulationPropagator {
        PopulationPropagator::new(self)
    }

    /// Boltzmann populations over the one-exciton energies.
    pub fn equilibrium(&self) -> Vec<f64> {
        boltzmann(&self.energies, self.temperature)
    }
}

fn boltzmann(energies: &[f64], temperature: f64) -> Vec<f64> {
    let kt = thermal_energy_cm1(temperature);
    let e0 = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-(e - e0) / kt).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

fn site_occupations_one(basis: &ExcitonBasis, a: usize) -> Vec<f64> {
    (0..basis.n()).map(|m| basis.one_exciton_site_overlap(m, a, a)).collect()
}

fn site_occupations_two(basis: &ExcitonBasis, f: usize) -> Vec<f64> {
    (0..basis.n()).map(|m| basis.two_exciton_site_overlap(m, f, f)).collect()
}

fn pure_dephasing(spec: &BathSpec, x: &[f64], y: &[f64]) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    0.5 * std::f64::consts::PI * spec.zero_frequency_symmetric() * d2
}

/// Secular Redfield rates for independent site baths, dissipative part only.
pub fn redfield_rates(basis: &ExcitonBasis, spec: &BathSpec) -> Result<RedfieldRates> {
    spec.validate()?;
    let n = basis.n();
    let n2 = basis.n_two();
    let two_pi = 2.0 * std::f64::consts::PI;
    let e1 = &basis.one_exciton_energies;
    let e2 = &basis.two_exciton_energies;

    let mut k1 = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let overlap: f64 = (0..n)
                .map(|m| basis.one_exciton_site_overlap(m, a, b).powi(2))
                .sum();
            k1[(a, b)] = two_pi * overlap * spec.correlation(e1[a] - e1[b]) * TWO_PI_C;
        }
    }
    let mut k2 = DMatrix::zeros(n2, n2);
    for f in 0..n2 {
        for g in 0..n2 {
            if f == g {
                continue;
            }
            let overlap: f64 = (0..n)
                .map(|m| basis.two_exciton_site_overlap(m, f, g).powi(2))
                .sum();
            k2[(f, g)] = two_pi * overlap * spec.correlation(e2[f] - e2[g]) * TWO_PI_C;
        }
    }
    let out1: Vec<f64> = (0..n).map(|a| k1.row(a).sum()).collect();
    let out2: Vec<f64> = (0..n2).map(|f| k2.row(f).sum()).collect();

    let occ1: Vec<Vec<f64>> = (0..n).map(|a| site_occupations_one(basis, a)).collect();
    let occ2: Vec<Vec<f64>> = (0..n2).map(|f| site_occupations_two(basis, f)).collect();
    let ground = vec![0.0; n];

    let coherence_gamma_01 = (0..n)
        .map(|a| {
            let g = 0.5 * out1[a] + pure_dephasing(spec, &ground, &occ1[a]) * TWO_PI_C;
            Complex64::new(g, 0.0)
        })
        .collect();
    let coherence_gamma_12 = DMatrix::from_fn(n, n2, |a, f| {
        let g = 0.5 * (out1[a] + out2[f]) + pure_dephasing(spec, &occ1[a], &occ2[f]) * TWO_PI_C;
        Complex64::new(g, 0.0)
    });
    let coherence_gamma_11 = DMatrix::from_fn(n, n, |a, b| {
        if a == b {
            0.0
        } else {
            0.5 * (out1[a] + out1[b]) + pure_dephasing(spec, &occ1[a], &occ1[b]) * TWO_PI_C
        }
    });

    Ok(RedfieldRates {
        pop_rates: k1,
        coherence_gamma_01,
        coherence_gamma_12,
        coherence_gamma_11,
        energies: e1.clone(),
        temperature: spec.temperature,
    })
}

/// Exact exponential of the population master equation, via the
/// detailed-balance symmetrization of the generator.
#[derive(Clone, Debug)]
pub struct PopulationPropagator {
    sqrt_eq: Vec<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl PopulationPropagator {
    pub fn new(rates: &RedfieldRates) -> Self {
        let n = rates.n();
        let p = rates.equilibrium();
        let sqrt_eq: Vec<f64> = p.iter().map(|x| x.sqrt()).collect();
        let w = rates.population_generator();
        // dP_b/dt = Σ_a W_ab P_a; symmetrized S_ba = W_ab √(p_a/p_b)
        let mut s = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                s[(b, a)] = w[(a, b)] * sqrt_eq[a] / sqrt_eq[b];
            }
        }
        let s = (&s + s.transpose()) * 0.5;
        let eig = SymmetricEigen::new(s);
        Self {
            sqrt_eq,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        }
    }

    /// Transfer matrix T(t) with P(t) = T(t) P(0).
    pub fn matrix(&self, t: f64) -> DMatrix<f64> {
        let n = self.sqrt_eq.len();
        let v = &self.eigenvectors;
        let decay = DMatrix::from_diagonal(&self.eigenvalues.map(|l| (l * t).exp()));
        let core = v * decay * v.transpose();
        let mut m = DMatrix::from_fn(n, n, |b, a| core[(b, a)] * self.sqrt_eq[b] / self.sqrt_eq[a]);
        // the √(p_b/p_a) rescaling amplifies roundoff when equilibrium
        // populations span many decades; conservation is exact, so restore it
        // through the diagonal
        for a in 0..n {
            let off: f64 = (0..n).filter(|b| *b != a).map(|b| m[(b, a)]).sum();
            m[(a, a)] = 1.0 - off;
        }
        m
    }

    pub fn propagate(&self, populations: &[f64], t: f64) -> Vec<f64> {
        let p = DVector::from_column_slice(populations);
        (self.matrix(t) * p).iter().cloned().collect()
    }
}

/// The printed line-shape factor 1/(i(ω₀−ω) − γ), frequencies in cm⁻¹ and γ in fs⁻¹.
pub fn propagator_factor(gamma: Complex64, omega0: f64, omega: f64) -> Result<Complex64> {
    if !(gamma.re > 0.0) {
        return Err(Error::validation(format!(
            "coherence decay must have positive real part, got {gamma}"
        )));
    }
    Ok(1.0 / (Complex64::i() * (omega0 - omega) * TWO_PI_C - gamma))
}

/// ∫₀^∞ e^{iωt} e^{−iω₀t − γt} dt = 1/(γ + i(ω₀−ω)): the transform of a
/// coherence that oscillates at +ω₀. Equal to −conj of `propagator_factor`
/// for real γ.
#[inline]
pub fn causal_line_shape(gamma: Complex64, omega0: f64, omega: f64) -> Complex64 {
    1.0 / (gamma + Complex64::i() * (omega0 - omega) * TWO_PI_C)
}
