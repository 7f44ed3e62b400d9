//! Forward simulation: pump excitation, probe convolution and heterodyne detection.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{redfield_rates, BathSpec, PopulationPropagator, RedfieldRates};
use crate::error::{Error, Result};
use crate::model::{diagonalize, gaussian, substream, EnsembleSpec, ExcitonBasis, OrientationMode, SiteModel, Vec3};
use crate::pulse::{extend_axis, uniform_step, ExperimentGrid, Pulse};
use crate::response::{bloch_labels, build_operator, isotropic_operator, DimerFrame, LiouvilleBasis, Polarization, PumpProbeOperator};
use crate::units::TWO_PI_C;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Second-order pump-prepared state. `excited` is the one-exciton block and
/// `ground` the matching ground-state population change, so that
/// `tr(excited) + ground = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExcitedState {
    pub excited: DMatrix<Complex64>,
    pub ground: f64,
}

impl ExcitedState {
    pub fn zeros(n: usize) -> Self {
        Self {
            excited: DMatrix::zeros(n, n),
            ground: 0.0,
        }
    }

    pub fn trace_defect(&self) -> f64 {
        (self.excited.trace().re + self.ground).abs()
    }

    /// Smallest eigenvalue of the Hermitian part of the excited block.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.excited + self.excited.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Free evolution of the ground/one-exciton coherences and the one-exciton
/// block under the secular Redfield dynamics, in a frame rotating at `frame`.
struct FreeEvolution<'a> {
    rates: &'a RedfieldRates,
    populations: PopulationPropagator,
    detuning: Vec<f64>,
    energies: Vec<f64>,
}

impl<'a> FreeEvolution<'a> {
    fn new(basis: &ExcitonBasis, rates: &'a RedfieldRates, frame: f64) -> Self {
        Self {
            rates,
            populations: rates.population_propagator(),
            detuning: basis.one_exciton_energies.iter().map(|e| (e - frame) * TWO_PI_C).collect(),
            energies: basis.one_exciton_energies.clone(),
        }
    }

    fn max_detuning(&self) -> f64 {
        self.detuning.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// Propagates a ket-side coherence |x⟩⟨g| (`bra = false`) or the
    /// conjugate-evolving bra-side coherence |g⟩⟨a| amplitudes (`bra = true`).
    fn coherence(&self, x: &mut [Complex64], dt: f64, bra: bool) {
        for (a, v) in x.iter_mut().enumerate() {
            let g = self.rates.coherence_gamma_01[a];
            let rate = if bra {
                Complex64::new(-g.re, self.detuning[a] + g.im)
            } else {
                Complex64::new(-g.re, -self.detuning[a] - g.im)
            };
            *v *= (rate * dt).exp();
        }
    }

    fn block(&self, rho: &mut DMatrix<Complex64>, dt: f64, pops: &DMatrix<f64>) {
        let n = self.energies.len();
        let p: Vec<f64> = (0..n).map(|a| rho[(a, a)].re).collect();
        let pim: Vec<f64> = (0..n).map(|a| rho[(a, a)].im).collect();
        for b in 0..n {
            let mut re = 0.0;
            let mut im = 0.0;
            for a in 0..n {
                re += pops[(b, a)] * p[a];
                im += pops[(b, a)] * pim[a];
            }
            rho[(b, b)] = Complex64::new(re, im);
        }
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    let w = (self.energies[a] - self.energies[b]) * TWO_PI_C;
                    let g = self.rates.coherence_gamma_11[(a, b)];
                    rho[(a, b)] *= Complex64::new(-g * dt, -w * dt).exp();
                }
            }
        }
    }
}

/// Lattice of Strang steps: `start + k·step` for `k = 0..=steps`.
#[derive(Clone, Copy, Debug)]
struct March {
    start: f64,
    step: f64,
    steps: usize,
}

impl March {
    /// Covers the union of pulse supports. When the requested times inside
    /// the supports are uniformly spaced the lattice is aligned with them, so
    /// that samples on any evenly spaced grid come from the same march; times
    /// after the pulses are reached by exact free evolution and do not matter.
    fn plan(lo: f64, hi: f64, times: &[f64], max_step: f64) -> Self {
        let mut inside: Vec<f64> = times.iter().cloned().filter(|t| *t < hi).collect();
        inside.sort_by(f64::total_cmp);
        inside.dedup();
        let (step, anchor) = match uniform_step(&inside) {
            Some(d) if d > 0.0 => (d / (d / max_step - 1e-9).ceil().max(1.0), inside[0]),
            _ => {
                let k = ((hi - lo) / max_step).ceil().max(1.0);
                ((hi - lo) / k, lo)
            }
        };
        let back = ((anchor - lo) / step - 1e-9).ceil();
        let start = anchor - back * step;
        let steps = ((hi - start) / step - 1e-9).ceil().max(1.0) as usize;
        Self { start, step, steps }
    }
}

fn transition_projections(basis: &ExcitonBasis, pol: &Vec3) -> Vec<f64> {
    basis.dipoles_g_to_1.iter().map(|d| pol.dot(d)).collect()
}

fn check_nyquist(free: &FreeEvolution, pulses: &[&Pulse], frame: f64, step: f64) -> Result<()> {
    let pulse_detuning = pulses
        .iter()
        .map(|p| ((p.center_freq - frame) * TWO_PI_C).abs())
        .fold(0.0, f64::max);
    let fastest = free.max_detuning().max(pulse_detuning);
    if step * fastest >= std::f64::consts::PI {
        return Err(Error::Numerical(format!(
            "pump step {step:.3} fs under-resolves detunings up to {:.0} cm⁻¹ from the rotating frame",
            fastest / TWO_PI_C
        )));
    }
    Ok(())
}

fn sorted_order(times: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|a, b| times[*a].total_cmp(&times[*b]));
    order
}

struct PumpState {
    x: Vec<Complex64>,
    rho: DMatrix<Complex64>,
    ground: f64,
}

impl PumpState {
    fn kick(&mut self, m: &[f64], kappa: Complex64) {
        let n = m.len();
        let mut added = ZERO;
        for b in 0..n {
            for a in 0..n {
                let d = I * kappa * m[b] * self.x[a].conj() - I * kappa.conj() * self.x[b] * m[a]
                    + kappa.norm_sqr() * m[b] * m[a];
                self.rho[(b, a)] += d;
                if a == b {
                    added += d;
                }
            }
        }
        self.ground -= added.re;
        for a in 0..n {
            self.x[a] += I * kappa * m[a];
        }
    }

    fn free(&mut self, free: &FreeEvolution, dt: f64, pops: &DMatrix<f64>) {
        free.coherence(&mut self.x, dt, false);
        free.block(&mut self.rho, dt, pops);
    }

    fn snapshot(&self) -> ExcitedState {
        ExcitedState {
            excited: &self.rho * Complex64::new(2.0, 0.0),
            ground: 2.0 * self.ground,
        }
    }
}

/// ρ_PP^(2)(t) for a pump of polarization `pol`, at each of `times` (fs).
///
/// Each Strang step propagates half a step, applies the pump interaction over
/// the step as an instantaneous kick expanded to second order, and
/// propagates the other half. The kick is the second-order part of a unitary
/// and the free evolution is completely positive, so the excited block stays
/// positive semidefinite at any step size.
pub fn pump_second_order(
    basis: &ExcitonBasis,
    rates: &RedfieldRates,
    pump: &Pulse,
    pol: &Vec3,
    frame: f64,
    times: &[f64],
    max_step: f64,
) -> Result<Vec<ExcitedState>> {
    pump.validate()?;
    if !(max_step > 0.0) {
        return Err(Error::validation("pump step must be positive"));
    }
    let n = basis.n();
    let free = FreeEvolution::new(basis, rates, frame);
    let m = transition_projections(basis, pol);
    let fresh = || PumpState {
        x: vec![ZERO; n],
        rho: DMatrix::zeros(n, n),
        ground: 0.0,
    };
    let mut out = vec![ExcitedState::zeros(n); times.len()];
    let order = sorted_order(times);

    if pump.is_impulsive() {
        let mut st = fresh();
        st.kick(&m, Complex64::new(pump.amplitude, 0.0));
        for &i in &order {
            if times[i] >= 0.0 {
                let mut s = PumpState { x: st.x.clone(), rho: st.rho.clone(), ground: st.ground };
                let pops = free.populations.matrix(times[i]);
                s.free(&free, times[i], &pops);
                out[i] = s.snapshot();
            }
        }
        return Ok(out);
    }

    let (lo, hi) = pump.support();
    let march = March::plan(lo, hi, times, max_step);
    check_nyquist(&free, &[pump], frame, march.step)?;
    let h = march.step;
    let half = free.populations.matrix(0.5 * h);
    let field = |t: f64| pump.field(t, frame);

    let mut st = fresh();
    let mut k = 0usize;
    let mut t = march.start;
    for &i in &order {
        let target = times[i];
        if target <= march.start {
            continue;
        }
        while k < march.steps && t + h <= target + 1e-9 * h {
            st.free(&free, 0.5 * h, &half);
            st.kick(&m, field(t + 0.5 * h) * h);
            st.free(&free, 0.5 * h, &half);
            k += 1;
            t = march.start + k as f64 * h;
        }
        let rest = target - t;
        if rest.abs() <= 1e-9 * h {
            out[i] = st.snapshot();
            continue;
        }
        let mut s = PumpState { x: st.x.clone(), rho: st.rho.clone(), ground: st.ground };
        if k < march.steps {
            let q = free.populations.matrix(0.5 * rest);
            s.free(&free, 0.5 * rest, &q);
            s.kick(&m, field(t + 0.5 * rest) * rest);
            s.free(&free, 0.5 * rest, &q);
        } else {
            let q = free.populations.matrix(rest);
            s.free(&free, rest, &q);
        }
        out[i] = s.snapshot();
    }
    Ok(out)
}

/// Single phase-matched photon-echo term: E₁ acts first through the bra,
/// E₂ second through the ket. Not Hermitian in general; with E₁ = E₂ the sum
/// `2(ρ + ρ†)` equals [`pump_second_order`].
#[allow(clippy::too_many_arguments)]
pub fn photon_echo_second_order(
    basis: &ExcitonBasis,
    rates: &RedfieldRates,
    first: (&Pulse, &Vec3),
    second: (&Pulse, &Vec3),
    frame: f64,
    times: &[f64],
    max_step: f64,
) -> Result<Vec<DMatrix<Complex64>>> {
    let (p1, pol1) = first;
    let (p2, pol2) = second;
    p1.validate()?;
    p2.validate()?;
    if p1.is_impulsive() || p2.is_impulsive() {
        return Err(Error::validation("photon-echo ordering needs finite pulses"));
    }
    let n = basis.n();
    let free = FreeEvolution::new(basis, rates, frame);
    let m1 = transition_projections(basis, pol1);
    let m2 = transition_projections(basis, pol2);
    let (lo1, hi1) = p1.support();
    let (lo2, hi2) = p2.support();
    let march = March::plan(lo1.min(lo2), hi1.max(hi2), times, max_step);
    check_nyquist(&free, &[p1, p2], frame, march.step)?;
    let h = march.step;
    let half = free.populations.matrix(0.5 * h);

    let mut z = vec![ZERO; n];
    let mut rho: DMatrix<Complex64> = DMatrix::zeros(n, n);
    let step = |z: &mut Vec<Complex64>, rho: &mut DMatrix<Complex64>, t0: f64, dt: f64, pops: &DMatrix<f64>| {
        free.coherence(z, 0.5 * dt, true);
        free.block(rho, 0.5 * dt, pops);
        let tm = t0 + 0.5 * dt;
        let k1 = p1.field(tm, frame) * dt;
        let k2 = p2.field(tm, frame) * dt;
        for b in 0..n {
            for a in 0..n {
                rho[(b, a)] += I * k2 * m2[b] * z[a] + 0.5 * k2 * k1.conj() * m2[b] * m1[a];
            }
        }
        for a in 0..n {
            z[a] -= I * k1.conj() * m1[a];
        }
        free.coherence(z, 0.5 * dt, true);
        free.block(rho, 0.5 * dt, pops);
    };

    let mut out = vec![DMatrix::zeros(n, n); times.len()];
    let mut k = 0usize;
    let mut t = march.start;
    for &i in &sorted_order(times) {
        let target = times[i];
        if target <= march.start {
            continue;
        }
        while k < march.steps && t + h <= target + 1e-9 * h {
            step(&mut z, &mut rho, t, h, &half);
            k += 1;
            t = march.start + k as f64 * h;
        }
        let rest = target - t;
        if rest.abs() <= 1e-9 * h {
            out[i] = rho.clone();
            continue;
        }
        let (mut zz, mut rr) = (z.clone(), rho.clone());
        if k < march.steps {
            let q = free.populations.matrix(0.5 * rest);
            step(&mut zz, &mut rr, t, rest, &q);
        } else {
            let q = free.populations.matrix(rest);
            free.block(&mut rr, rest, &q);
        }
        out[i] = rr;
    }
    Ok(out)
}

/// R(ω, τ) on a frequency × delay grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseSurface {
    pub freqs: Vec<f64>,
    pub delays: Vec<f64>,
    /// `values[(i, j)]` at `freqs[i]`, `delays[j]`.
    pub values: DMatrix<Complex64>,
}

impl ResponseSurface {
    pub fn zeros(freqs: Vec<f64>, delays: Vec<f64>) -> Self {
        let values = DMatrix::zeros(freqs.len(), delays.len());
        Self { freqs, delays, values }
    }

    /// Columns whose delays match `delays` to 1e-6 fs.
    pub fn restrict(&self, delays: &[f64]) -> Result<Self> {
        let mut cols = Vec::with_capacity(delays.len());
        for d in delays {
            let j = self
                .delays
                .iter()
                .position(|x| (x - d).abs() < 1e-6)
                .ok_or_else(|| Error::validation(format!("delay {d} fs not on the response grid")))?;
            cols.push(j);
        }
        let values = DMatrix::from_fn(self.freqs.len(), cols.len(), |i, k| self.values[(i, cols[k])]);
        Ok(Self {
            freqs: self.freqs.clone(),
            delays: delays.to_vec(),
            values,
        })
    }
}

/// Per-member response contributions, averaged over the ensemble.
#[derive(Clone, Debug)]
pub struct EnsembleResponse {
    pub response: ResponseSurface,
    /// Mean Liouville coordinates of ρ_PP^(2) per delay, in each member's
    /// own exciton basis (ascending energy).
    pub mean_state: Vec<Vec<f64>>,
    /// Mean dimer Bloch vector per delay, for two-site models.
    pub mean_bloch: Option<Vec<[f64; 4]>>,
    /// Mean probe operator over (r₀, r₁, r₂, r₃) on the frequency grid, each
    /// member expressed in its own exciton frame; two-site models only.
    pub mean_bloch_operator: Option<PumpProbeOperator>,
}

/// Polarizations of the pump (field) and the probe/signal pair used in
/// fixed-frame simulations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPolarization {
    pub pump: [f64; 3],
    pub probe: [f64; 3],
}

impl Default for FixedPolarization {
    fn default() -> Self {
        Self {
            pump: [1.0, 0.0, 0.0],
            probe: [1.0, 0.0, 0.0],
        }
    }
}

fn vec3(v: [f64; 3]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

struct MemberResponse {
    values: DMatrix<Complex64>,
    coords: Vec<Vec<f64>>,
    bloch: Option<Vec<[f64; 4]>>,
    bloch_op: Option<DMatrix<Complex64>>,
}

#[allow(clippy::too_many_arguments)]
fn member_response(
    model: &SiteModel,
    bath: &BathSpec,
    pump: &Pulse,
    mode: OrientationMode,
    fixed: &FixedPolarization,
    freqs: &[f64],
    delays: &[f64],
    frame: f64,
    max_step: f64,
) -> Result<MemberResponse> {
    let basis = diagonalize(model);
    let rates = redfield_rates(&basis, bath)?;
    let n = basis.n();
    let lb = LiouvilleBasis::new(n);
    let (op, pump_pols) = match mode {
        OrientationMode::IsotropicXyzAverage => (
            isotropic_operator(&basis, &rates, freqs)?,
            vec![Vec3::x(), Vec3::y(), Vec3::z()],
        ),
        OrientationMode::FixedFrame => {
            let probe = vec3(fixed.probe).normalize();
            let pol = Polarization { probe, signal: probe };
            (build_operator(&basis, &rates, freqs, &pol)?, vec![vec3(fixed.pump).normalize()])
        }
    };
    let mut coords = vec![vec![0.0; lb.dim()]; delays.len()];
    for pol in &pump_pols {
        let states = pump_second_order(&basis, &rates, pump, pol, frame, delays, max_step)?;
        for (c, s) in coords.iter_mut().zip(&states) {
            for (ci, v) in c.iter_mut().zip(lb.coordinates(&s.excited)) {
                *ci += v / pump_pols.len() as f64;
            }
        }
    }
    let cmat = DMatrix::from_fn(lb.dim(), delays.len(), |k, j| Complex64::new(coords[j][k], 0.0));
    let values = &op.rows * cmat;
    let (bloch, bloch_op) = if n == 2 {
        let frame = DimerFrame::new(&basis)?;
        (
            Some(coords.iter().map(|c| frame.from_liouville(c).as_array()).collect()),
            Some(frame.bloch_operator(&op)?.rows),
        )
    } else {
        (None, None)
    };
    Ok(MemberResponse {
        values,
        coords,
        bloch,
        bloch_op,
    })
}

const CHUNK: usize = 16;

/// Ensemble- and orientation-averaged R_PP(ω, τ). Members are summed in
/// fixed-size chunks in index order, so the result does not depend on the
/// thread count.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_response(
    model: &SiteModel,
    bath: &BathSpec,
    pump: &Pulse,
    ensemble: &EnsembleSpec,
    fixed: &FixedPolarization,
    freqs: &[f64],
    delays: &[f64],
    frame: f64,
    max_step: f64,
) -> Result<EnsembleResponse> {
    ensemble.validate()?;
    let n_chunks = ensemble.n_samples.div_ceil(CHUNK);
    let partial: Vec<Result<MemberResponse>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc: Option<MemberResponse> = None;
            for idx in (c * CHUNK)..((c + 1) * CHUNK).min(ensemble.n_samples) {
                let member = ensemble.sample(model, idx);
                let r = member_response(
                    &member,
                    bath,
                    pump,
                    ensemble.orientation_mode,
                    fixed,
                    freqs,
                    delays,
                    frame,
                    max_step,
                )?;
                acc = Some(match acc {
                    None => r,
                    Some(a) => merge(a, r),
                });
            }
            acc.ok_or_else(|| Error::validation("empty ensemble chunk"))
        })
        .collect();
    let mut total: Option<MemberResponse> = None;
    for p in partial {
        let p = p?;
        total = Some(match total {
            None => p,
            Some(a) => merge(a, p),
        });
    }
    let total = total.ok_or_else(|| Error::validation("empty ensemble"))?;
    let scale = 1.0 / ensemble.n_samples as f64;
    Ok(EnsembleResponse {
        response: ResponseSurface {
            freqs: freqs.to_vec(),
            delays: delays.to_vec(),
            values: total.values * Complex64::new(scale, 0.0),
        },
        mean_state: total
            .coords
            .into_iter()
            .map(|c| c.into_iter().map(|v| v * scale).collect())
            .collect(),
        mean_bloch: total
            .bloch
            .map(|b| b.into_iter().map(|r| r.map(|v| v * scale)).collect()),
        mean_bloch_operator: total.bloch_op.map(|rows| PumpProbeOperator {
            grid: freqs.to_vec(),
            labels: bloch_labels(),
            rows: rows * Complex64::new(scale, 0.0),
        }),
    })
}

fn merge(mut a: MemberResponse, b: MemberResponse) -> MemberResponse {
    a.values += b.values;
    for (x, y) in a.coords.iter_mut().zip(b.coords) {
        for (u, v) in x.iter_mut().zip(y) {
            *u += v;
        }
    }
    if let (Some(x), Some(y)) = (a.bloch_op.as_mut(), b.bloch_op) {
        *x += y;
    }
    if let (Some(x), Some(y)) = (a.bloch.as_mut(), b.bloch) {
        for (u, v) in x.iter_mut().zip(y) {
            for k in 0..4 {
                u[k] += v[k];
            }
        }
    }
    a
}

/// Probe convolution kernel ε_pr(s)·e^{i(ω−ω_c)s}, with s = τ − T.
pub fn probe_kernel(probe: &Pulse, omega: f64, s: f64) -> Complex64 {
    probe.envelope(s) * Complex64::from_polar(1.0, (omega - probe.center_freq) * TWO_PI_C * s)
}

/// P^(3)(ω, T) for each of `delays`, by trapezoidal quadrature of the probe
/// convolution over the response's delay grid.
pub fn polarization(response: &ResponseSurface, probe: &Pulse, delays: &[f64]) -> Result<DMatrix<Complex64>> {
    probe.validate()?;
    let nf = response.freqs.len();
    let mut out = DMatrix::zeros(nf, delays.len());
    if probe.is_impulsive() {
        let r = response.restrict(delays)?;
        return Ok(r.values * Complex64::new(probe.amplitude, 0.0));
    }
    let h = uniform_step(&response.delays)
        .ok_or_else(|| Error::validation("response delays must be uniformly spaced"))?;
    let (lo, hi) = probe.support();
    let tau = &response.delays;
    for (col, &t) in delays.iter().enumerate() {
        if tau[0] > t + lo + 1e-6 || tau[tau.len() - 1] < t + hi - 1e-6 {
            return Err(Error::validation(format!(
                "response delays [{:.2}, {:.2}] fs do not cover the probe support around T = {t:.2} fs",
                tau[0],
                tau[tau.len() - 1]
            )));
        }
        let js: Vec<usize> = (0..tau.len())
            .filter(|&j| tau[j] - t >= lo - 1e-9 && tau[j] - t <= hi + 1e-9)
            .collect();
        for (q, &j) in js.iter().enumerate() {
            let w = if q == 0 || q + 1 == js.len() { 0.5 * h } else { h };
            let s = tau[j] - t;
            for i in 0..nf {
                out[(i, col)] += response.values[(i, j)] * probe_kernel(probe, response.freqs[i], s) * w;
            }
        }
    }
    Ok(out)
}

/// Phase-φ heterodyne signal S = Im[P·E*_LO(ω)·e^{iφ}].
pub fn heterodyne(p3: &DMatrix<Complex64>, freqs: &[f64], lo: &Pulse, phase: f64) -> DMatrix<f64> {
    let rot = Complex64::from_polar(1.0, phase);
    DMatrix::from_fn(p3.nrows(), p3.ncols(), |i, j| (p3[(i, j)] * lo.spectrum(freqs[i]).conj() * rot).im)
}

/// The phase-0 (absorptive) and phase-π/2 (dispersive) heterodyne surfaces.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalPair {
    pub freqs: Vec<f64>,
    pub delays: Vec<f64>,
    pub absorptive: DMatrix<f64>,
    pub dispersive: DMatrix<f64>,
}

impl SignalPair {
    pub fn from_polarization(p3: &DMatrix<Complex64>, freqs: &[f64], delays: &[f64], lo: &Pulse) -> Self {
        Self {
            freqs: freqs.to_vec(),
            delays: delays.to_vec(),
            absorptive: heterodyne(p3, freqs, lo, 0.0),
            dispersive: heterodyne(p3, freqs, lo, std::f64::consts::FRAC_PI_2),
        }
    }

    /// P·E*_LO recombined from the two channels.
    pub fn complex(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.absorptive.nrows(), self.absorptive.ncols(), |i, j| {
            Complex64::new(self.dispersive[(i, j)], self.absorptive[(i, j)])
        })
    }

    pub fn max_amplitude(&self) -> f64 {
        self.complex().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Adds i.i.d. complex noise a·e^{iφ} per grid point, with φ uniform and
/// a ~ N(0, σ), σ = `relative_sigma`·max|P·E*_LO|. Returns the noisy pair
/// and σ. `stream` selects an independent noise realization.
pub fn add_detection_noise(clean: &SignalPair, relative_sigma: f64, seed: u64, stream: u64) -> Result<(SignalPair, f64)> {
    if !(relative_sigma >= 0.0) {
        return Err(Error::validation("noise level must be non-negative"));
    }
    let sigma = relative_sigma * clean.max_amplitude();
    let mut out = clean.clone();
    if sigma == 0.0 {
        return Ok((out, 0.0));
    }
    let mut rng = substream(seed, stream);
    for j in 0..out.absorptive.ncols() {
        for i in 0..out.absorptive.nrows() {
            let z = complex_noise(&mut rng, sigma);
            out.dispersive[(i, j)] += z.re;
            out.absorptive[(i, j)] += z.im;
        }
    }
    Ok((out, sigma))
}

fn complex_noise<R: Rng>(rng: &mut R, sigma: f64) -> Complex64 {
    let a = sigma * gaussian(rng);
    let phi = rng.random::<f64>() * std::f64::consts::TAU;
    Complex64::from_polar(a, phi)
}

fn default_pump_step() -> f64 {
    1.0
}

/// Everything needed to simulate one pump-probe dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub pump: Pulse,
    pub probe: Pulse,
    pub grid: ExperimentGrid,
    pub bath: BathSpec,
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub noise_relative: f64,
    #[serde(default)]
    pub noise_seed: u64,
    #[serde(default = "default_pump_step")]
    pub pump_step_fs: f64,
    #[serde(default)]
    pub fixed_polarization: FixedPolarization,
    /// Extra delay (fs) at which the truth is also evaluated, for fixing the
    /// tomography normalization.
    #[serde(default)]
    pub normalization_delay: Option<f64>,
}

impl ExperimentSpec {
    /// 40 fs pump and probe at 12800 cm⁻¹ on the reference grid, 1000-member
    /// isotropic ensemble, noise-free.
    pub fn reference() -> Self {
        Self {
            pump: Pulse::gaussian(40.0, 12_800.0, 1.0).expect("valid pulse"),
            probe: Pulse::gaussian(40.0, 12_800.0, 1.0).expect("valid pulse"),
            grid: ExperimentGrid::reference(),
            bath: BathSpec::reference(),
            ensemble: EnsembleSpec::new(1000, 7),
            noise_relative: 0.0,
            noise_seed: 11,
            pump_step_fs: 1.0,
            fixed_polarization: FixedPolarization::default(),
            normalization_delay: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pump.validate()?;
        self.probe.validate()?;
        self.grid.validate()?;
        self.bath.validate()?;
        self.ensemble.validate()?;
        if self.grid.delay_step().is_none() {
            return Err(Error::validation("delays must be uniformly spaced"));
        }
        if !(self.noise_relative >= 0.0) || !(self.pump_step_fs > 0.0) {
            return Err(Error::validation("noise must be non-negative and the pump step positive"));
        }
        if let Some(d) = self.normalization_delay {
            if !(d > self.grid.delays[self.grid.delays.len() - 1]) {
                return Err(Error::validation("normalization delay must follow the last measured delay"));
            }
        }
        Ok(())
    }

    /// Points added on each side of the data delays so the truth covers
    /// the probe support at every measured delay.
    pub fn truth_padding(&self) -> usize {
        let h = self.grid.delay_step().unwrap_or(1.0);
        let (lo, hi) = self.probe.support();
        ((-lo).max(hi) / h - 1e-9).ceil().max(0.0) as usize
    }

    pub fn truth_delays(&self) -> Result<Vec<f64>> {
        let pad = self.truth_padding();
        extend_axis(&self.grid.delays, pad, pad)
    }

    /// Overlap warning when the earliest delay is under 1.5·(fwhm_pu + fwhm_pr).
    pub fn overlap_warning(&self) -> Option<String> {
        let limit = 1.5 * (self.pump.fwhm + self.probe.fwhm);
        let t0 = self.grid.delays[0];
        (t0 < limit).then(|| {
            format!("earliest delay {t0:.1} fs is below 1.5·(fwhm_pump + fwhm_probe) = {limit:.1} fs; pulses overlap")
        })
    }
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub clean: SignalPair,
    pub signals: SignalPair,
    pub noise_sigma: f64,
    /// Truth on the data frequencies and the padded delay grid.
    pub truth: EnsembleResponse,
    /// Truth at the normalization delay, when requested.
    pub long_delay: Option<EnsembleResponse>,
    pub warnings: Vec<String>,
}

pub fn simulate_experiment(model: &SiteModel, spec: &ExperimentSpec) -> Result<Simulation> {
    spec.validate()?;
    let delays = spec.truth_delays()?;
    let mut times = delays.clone();
    times.extend(spec.normalization_delay);
    let full = ensemble_response(
        model,
        &spec.bath,
        &spec.pump,
        &spec.ensemble,
        &spec.fixed_polarization,
        &spec.grid.probe_freqs,
        &times,
        spec.grid.rotating_frame_freq,
        spec.pump_step_fs,
    )?;
    let (truth, long_delay) = match spec.normalization_delay {
        None => (full, None),
        Some(_) => split_last(full)?,
    };
    let p3 = polarization(&truth.response, &spec.probe, &spec.grid.delays)?;
    let clean = SignalPair::from_polarization(&p3, &spec.grid.probe_freqs, &spec.grid.delays, &spec.probe);
    let (signals, noise_sigma) = add_detection_noise(&clean, spec.noise_relative, spec.noise_seed, 0)?;
    Ok(Simulation {
        clean,
        signals,
        noise_sigma,
        truth,
        long_delay,
        warnings: spec.overlap_warning().into_iter().collect(),
    })
}

/// Splits off the final delay of an ensemble response.
fn split_last(full: EnsembleResponse) -> Result<(EnsembleResponse, Option<EnsembleResponse>)> {
    let n = full.response.delays.len();
    let head = &full.response.delays[..n - 1];
    let tail = &full.response.delays[n - 1..];
    let part = |delays: &[f64], range: std::ops::Range<usize>| -> Result<EnsembleResponse> {
        Ok(EnsembleResponse {
            response: full.response.restrict(delays)?,
            mean_state: full.mean_state[range.clone()].to_vec(),
            mean_bloch: full.mean_bloch.as_ref().map(|b| b[range].to_vec()),
            mean_bloch_operator: full.mean_bloch_operator.clone(),
        })
    };
    Ok((part(head, 0..n - 1)?, Some(part(tail, n - 1..n)?)))
}
