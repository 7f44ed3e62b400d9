//! Dimer state tomography from the response at the two exciton frequencies.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{redfield_rates, BathSpec};
use crate::error::{Error, Result};
use crate::forward::{ensemble_response, FixedPolarization, ResponseSurface};
use crate::model::{diagonalize, EnsembleSpec, SiteModel};
use crate::pulse::Pulse;
use crate::response::{bloch_labels, isotropic_operator, BlochState, DimerFrame, PumpProbeOperator};

/// Rows of a column below this fraction of the largest entry count as zero.
const ZERO_COLUMN: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    /// Im R.
    Absorptive,
    /// Re R.
    Dispersive,
}

impl Channel {
    pub fn both() -> Vec<Self> {
        vec![Self::Absorptive, Self::Dispersive]
    }

    fn pick(&self, z: Complex64) -> f64 {
        match self {
            Self::Absorptive => z.im,
            Self::Dispersive => z.re,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Absorptive => "absorptive",
            Self::Dispersive => "dispersive",
        }
    }
}

/// Which Bloch components are solved for at each delay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SolveSet {
    /// r₁, r₂, r₃ with r₀ held at the normalization value.
    #[default]
    FixedPopulation,
    /// All four components.
    Full,
}

/// Real linear map from (r₀, r₁, r₂, r₃) to the measured channels at the
/// sampled frequencies.
#[derive(Clone, Debug)]
pub struct TomographyPlan {
    pub sample_freqs: Vec<f64>,
    pub channels: Vec<Channel>,
    pub solve: SolveSet,
    pub normalization_delay: f64,
    /// One row per (frequency, channel), frequency-major; columns r₀..r₃.
    pub matrix: DMatrix<f64>,
    pub condition_full: f64,
    pub condition_fixed_population: f64,
}

pub const DEFAULT_NORMALIZATION_DELAY: f64 = 10_000.0;

/// Upper- and lower-exciton frequencies (ω_α, ω_β) of a two-site model.
pub fn exciton_frequencies(model: &SiteModel) -> Result<[f64; 2]> {
    let basis = diagonalize(model);
    let frame = DimerFrame::new(&basis)?;
    let e = &basis.one_exciton_energies;
    Ok([e[frame.alpha], e[frame.beta]])
}

/// Isotropic Bloch projector averaged over a disorder ensemble, each member
/// in its own exciton frame. Same reduction order as the forward simulator.
pub fn ensemble_projector(model: &SiteModel, bath: &BathSpec, ensemble: &EnsembleSpec, grid: &[f64]) -> Result<PumpProbeOperator> {
    ensemble.validate()?;
    if model.n_sites() != 2 {
        return Err(Error::validation("tomography needs a two-site model"));
    }
    const CHUNK: usize = 16;
    let member = |idx: usize| -> Result<DMatrix<Complex64>> {
        let basis = diagonalize(&ensemble.sample(model, idx));
        let rates = redfield_rates(&basis, bath)?;
        Ok(DimerFrame::new(&basis)?.bloch_operator(&isotropic_operator(&basis, &rates, grid)?)?.rows)
    };
    let partial: Vec<Result<DMatrix<Complex64>>> = (0..ensemble.n_samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = DMatrix::zeros(grid.len(), 4);
            for idx in (c * CHUNK)..((c + 1) * CHUNK).min(ensemble.n_samples) {
                acc += member(idx)?;
            }
            Ok(acc)
        })
        .collect();
    let mut rows = DMatrix::zeros(grid.len(), 4);
    for p in partial {
        rows += p?;
    }
    Ok(PumpProbeOperator {
        grid: grid.to_vec(),
        labels: bloch_labels(),
        rows: rows * Complex64::new(1.0 / ensemble.n_samples as f64, 0.0),
    })
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

fn column_norm(m: &DMatrix<f64>, k: usize) -> f64 {
    m.column(k).norm()
}

/// Builds the plan from a Bloch-coordinate projector (labels r0..r3),
/// interpolated to `sample_freqs`.
pub fn build_plan(projector: &PumpProbeOperator, sample_freqs: &[f64], channels: &[Channel]) -> Result<TomographyPlan> {
    if projector.n_components() != 4 {
        return Err(Error::validation("tomography needs a dimer projector over (r0, r1, r2, r3)"));
    }
    if sample_freqs.is_empty() || channels.is_empty() {
        return Err(Error::validation("tomography needs at least one frequency and one channel"));
    }
    let n_rows = sample_freqs.len() * channels.len();
    let mut matrix = DMatrix::zeros(n_rows, 4);
    for (i, &w) in sample_freqs.iter().enumerate() {
        let row = projector.row_at(w)?;
        for (c, ch) in channels.iter().enumerate() {
            for k in 0..4 {
                matrix[(i * channels.len() + c, k)] = ch.pick(row[k]);
            }
        }
    }
    let scale = (0..4).map(|k| column_norm(&matrix, k)).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::Infeasible("projector vanishes at the sampled frequencies".into()));
    }
    let dead: Vec<&str> = (1..4)
        .filter(|&k| column_norm(&matrix, k) <= ZERO_COLUMN * scale)
        .map(|k| ["r0", "r1", "r2", "r3"][k])
        .collect();
    if dead.contains(&"r1") && dead.contains(&"r2") {
        return Err(Error::Infeasible(
            "coherence columns r1 and r2 vanish: the bright and dark transitions are degenerate, as in a homodimer".into(),
        ));
    }
    if !dead.is_empty() {
        return Err(Error::Infeasible(format!(
            "components {} do not contribute to the measured channels",
            dead.join(", ")
        )));
    }
    let reduced = matrix.columns(1, 3).into_owned();
    let condition_fixed_population = condition_number(&reduced);
    if n_rows < 3 || !condition_fixed_population.is_finite() || condition_fixed_population > 1e12 {
        return Err(Error::Infeasible(
            "r1, r2, r3 are linearly dependent in the measured channels".into(),
        ));
    }
    Ok(TomographyPlan {
        sample_freqs: sample_freqs.to_vec(),
        channels: channels.to_vec(),
        solve: SolveSet::FixedPopulation,
        normalization_delay: DEFAULT_NORMALIZATION_DELAY,
        condition_full: condition_number(&matrix),
        condition_fixed_population,
        matrix,
    })
}

impl TomographyPlan {
    pub fn with_solve(mut self, solve: SolveSet) -> Self {
        self.solve = solve;
        self
    }

    pub fn with_normalization_delay(mut self, delay: f64) -> Self {
        self.normalization_delay = delay;
        self
    }

    /// Measurement vector for a set of complex responses at `sample_freqs`.
    pub fn measurements(&self, values: &[Complex64]) -> Result<DVector<f64>> {
        if values.len() != self.sample_freqs.len() {
            return Err(Error::validation(format!(
                "expected {} response values, got {}",
                self.sample_freqs.len(),
                values.len()
            )));
        }
        let nc = self.channels.len();
        Ok(DVector::from_fn(values.len() * nc, |r, _| self.channels[r % nc].pick(values[r / nc])))
    }

    /// Noise-free measurements of a Bloch state.
    pub fn forward(&self, state: &BlochState) -> DVector<f64> {
        &self.matrix * DVector::from_row_slice(&state.as_array())
    }
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone()
        .svd(true, true)
        .solve(b, 1e-14)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub r0: f64,
    pub r3: f64,
    /// The response vanished: nothing was excited.
    pub no_excitation: bool,
}

/// Solves for (r₀, r₃) with r₁ = r₂ = 0, for a delay long enough that the
/// coherence has decayed.
pub fn fix_normalization(values: &[Complex64], plan: &TomographyPlan) -> Result<Normalization> {
    let b = plan.measurements(values)?;
    if b.iter().all(|v| *v == 0.0) {
        return Ok(Normalization {
            r0: 0.0,
            r3: 0.0,
            no_excitation: true,
        });
    }
    let a = DMatrix::from_columns(&[plan.matrix.column(0).into_owned(), plan.matrix.column(3).into_owned()]);
    if !condition_number(&a).is_finite() || condition_number(&a) > 1e12 {
        return Err(Error::Infeasible("population and inversion columns are degenerate".into()));
    }
    let x = least_squares(&a, &b)?;
    Ok(Normalization {
        r0: x[0],
        r3: x[1],
        no_excitation: x[0] == 0.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateEstimate {
    pub state: BlochState,
    /// r₁² + r₂² + r₃² exceeds r₀².
    pub unphysical: bool,
}

/// Inverts one delay. With `SolveSet::FixedPopulation` `r0` is used as given;
/// with `Full` it is ignored.
pub fn invert_state(values: &[Complex64], plan: &TomographyPlan, r0: f64) -> Result<StateEstimate> {
    let b = plan.measurements(values)?;
    let state = match plan.solve {
        SolveSet::Full => BlochState::from_slice(least_squares(&plan.matrix, &b)?.as_slice()),
        SolveSet::FixedPopulation => {
            let rhs = b - plan.matrix.column(0) * r0;
            let x = least_squares(&plan.matrix.columns(1, 3).into_owned(), &rhs)?;
            BlochState::new(r0, x[0], x[1], x[2])
        }
    };
    Ok(StateEstimate {
        unphysical: state.vector_norm() > state.r0.abs() * (1.0 + 1e-6),
        state,
    })
}

/// Uhlmann fidelity (tr√(√ρ σ √ρ))² of the two trace-normalized states.
/// Vectors longer than r₀ are treated as pure.
pub fn fidelity(a: &BlochState, b: &BlochState) -> f64 {
    if !(a.r0 > 0.0 && b.r0 > 0.0) {
        return 0.0;
    }
    let u = a.normalized();
    let v = b.normalized();
    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let purity = |x: [f64; 3]| (1.0 - (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).max(0.0);
    (0.5 * (1.0 + dot + (purity(u) * purity(v)).sqrt())).clamp(0.0, 1.0)
}

/// Response values at `freqs` for every delay, interpolated linearly along ω.
pub fn sample_response(surface: &ResponseSurface, freqs: &[f64]) -> Result<Vec<Vec<Complex64>>> {
    let g = &surface.freqs;
    let weights: Vec<(usize, usize, f64)> = freqs
        .iter()
        .map(|&w| {
            if g.is_empty() || w < g[0] - 1e-9 || w > g[g.len() - 1] + 1e-9 {
                return Err(Error::validation(format!("frequency {w} cm⁻¹ outside the response grid")));
            }
            if g.len() == 1 {
                return Ok((0, 0, 0.0));
            }
            let j = g.partition_point(|x| *x <= w).clamp(1, g.len() - 1);
            Ok((j - 1, j, ((w - g[j - 1]) / (g[j] - g[j - 1])).clamp(0.0, 1.0)))
        })
        .collect::<Result<_>>()?;
    Ok((0..surface.delays.len())
        .map(|d| {
            weights
                .iter()
                .map(|&(a, b, t)| surface.values[(a, d)] * (1.0 - t) + surface.values[(b, d)] * t)
                .collect()
        })
        .collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TomographyResult {
    pub delays: Vec<f64>,
    pub states: Vec<[f64; 4]>,
    /// (r₁, r₂, r₃)/r₀ per delay.
    pub normalized: Vec<[f64; 3]>,
    pub normalization: Normalization,
    pub fidelity: Option<Vec<f64>>,
    pub unphysical_delays: Vec<f64>,
    pub condition_full: f64,
    pub condition_fixed_population: f64,
}

impl TomographyResult {
    pub fn worst_fidelity(&self) -> Option<f64> {
        self.fidelity.as_ref().map(|f| f.iter().cloned().fold(1.0, f64::min))
    }

    pub fn mean_fidelity(&self) -> Option<f64> {
        self.fidelity
            .as_ref()
            .filter(|f| !f.is_empty())
            .map(|f| f.iter().sum::<f64>() / f.len() as f64)
    }
}

/// Reconstructs every delay of `response`. `long_delay` holds the response at
/// the plan's sample frequencies at the normalization delay; `truth` scores
/// fidelity per delay.
pub fn reconstruct(
    response: &ResponseSurface,
    plan: &TomographyPlan,
    long_delay: &[Complex64],
    truth: Option<&[[f64; 4]]>,
) -> Result<TomographyResult> {
    let normalization = fix_normalization(long_delay, plan)?;
    if normalization.no_excitation && plan.solve == SolveSet::FixedPopulation {
        return Err(Error::Infeasible("no excitation: the long-delay response vanishes".into()));
    }
    if let Some(t) = truth {
        if t.len() != response.delays.len() {
            return Err(Error::validation("truth has a different number of delays"));
        }
    }
    let samples = sample_response(response, &plan.sample_freqs)?;
    let estimates: Vec<StateEstimate> = samples
        .iter()
        .map(|v| invert_state(v, plan, normalization.r0))
        .collect::<Result<_>>()?;
    let fid = truth.map(|t| {
        estimates
            .iter()
            .zip(t)
            .map(|(e, x)| fidelity(&e.state, &BlochState::from_slice(x)))
            .collect()
    });
    Ok(TomographyResult {
        delays: response.delays.clone(),
        states: estimates.iter().map(|e| e.state.as_array()).collect(),
        normalized: estimates.iter().map(|e| e.state.normalized()).collect(),
        normalization,
        fidelity: fid,
        unphysical_delays: estimates
            .iter()
            .zip(&response.delays)
            .filter(|(e, _)| e.unphysical)
            .map(|(_, d)| *d)
            .collect(),
        condition_full: plan.condition_full,
        condition_fixed_population: plan.condition_fixed_population,
    })
}

/// Log-linear fit r₀(τ) ≈ a·e^{−kτ} over the positive entries; returns (a, k).
pub fn fit_population_decay(delays: &[f64], r0: &[f64]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = delays
        .iter()
        .zip(r0)
        .filter(|(_, r)| **r > 0.0)
        .map(|(t, r)| (*t, r.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::validation("decay fit needs at least two positive populations"));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if stt == 0.0 {
        return Err(Error::validation("decay fit needs distinct delays"));
    }
    let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum::<f64>() / stt;
    Ok(((my - slope * mt).exp(), -slope))
}

/// Exact ensemble response of a disordered dimer and the factorized
/// reconstruction built from it.
#[derive(Clone, Debug)]
pub struct ExactTomography {
    pub plan: TomographyPlan,
    pub result: TomographyResult,
}

/// Settings shared by the exact-response tomography runs.
#[derive(Clone, Debug)]
pub struct TomographySetup {
    pub bath: BathSpec,
    pub pump: Pulse,
    pub delays: Vec<f64>,
    pub frame: f64,
    pub pump_step_fs: f64,
    pub channels: Vec<Channel>,
    pub normalization_delay: f64,
}

impl TomographySetup {
    /// 40 fs pump at 12800 cm⁻¹, delays 50 fs – 1 ps every 6.81 fs.
    pub fn reference() -> Self {
        let grid = crate::pulse::ExperimentGrid::reference();
        Self {
            bath: BathSpec::reference(),
            pump: Pulse::gaussian(40.0, 12_800.0, 1.0).expect("reference pump is valid"),
            delays: grid.delays,
            frame: grid.rotating_frame_freq,
            pump_step_fs: 1.0,
            channels: Channel::both(),
            normalization_delay: DEFAULT_NORMALIZATION_DELAY,
        }
    }
}

/// Runs forward simulation and tomography on the exact (undeconvolved)
/// ensemble response, scoring against the ensemble-mean Bloch vector.
pub fn exact_tomography(model: &SiteModel, ensemble: &EnsembleSpec, setup: &TomographySetup) -> Result<ExactTomography> {
    let freqs = exciton_frequencies(model)?;
    let (lo, hi) = if freqs[0] < freqs[1] { (freqs[0], freqs[1]) } else { (freqs[1], freqs[0]) };
    let grid = vec![lo, hi];
    let mut times = setup.delays.clone();
    times.push(setup.normalization_delay);
    let ens = ensemble_response(
        model,
        &setup.bath,
        &setup.pump,
        ensemble,
        &FixedPolarization::default(),
        &grid,
        &times,
        setup.frame,
        setup.pump_step_fs,
    )?;
    let projector = ens
        .mean_bloch_operator
        .ok_or_else(|| Error::validation("tomography needs a two-site model"))?;
    let plan = build_plan(&projector, &freqs, &setup.channels)?.with_normalization_delay(setup.normalization_delay);
    let nd = setup.delays.len();
    let window = ens.response.restrict(&setup.delays)?;
    let long: Vec<Complex64> = sample_response(&ens.response.restrict(&[setup.normalization_delay])?, &freqs)?
        .pop()
        .unwrap_or_default();
    let truth = ens.mean_bloch.unwrap_or_default();
    let result = reconstruct(&window, &plan, &long, Some(&truth[..nd]))?;
    Ok(ExactTomography { plan, result })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub disorder: f64,
    pub worst_fidelity: f64,
    pub mean_fidelity: f64,
    pub r0: f64,
    pub condition_fixed_population: f64,
}

/// Worst and mean reconstruction fidelity over the delay window as a function
/// of the static-disorder width.
pub fn disorder_sweep(
    model: &SiteModel,
    widths: &[f64],
    n_samples: usize,
    seed: u64,
    setup: &TomographySetup,
) -> Result<Vec<SweepPoint>> {
    if widths.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::validation("disorder widths must be non-negative"));
    }
    widths
        .par_iter()
        .map(|&w| {
            let m = model.clone().with_disorder(w);
            let ensemble = EnsembleSpec::new(if w == 0.0 { 1 } else { n_samples }, seed);
            let t = exact_tomography(&m, &ensemble, setup)?;
            Ok(SweepPoint {
                disorder: w,
                worst_fidelity: t.result.worst_fidelity().unwrap_or(0.0),
                mean_fidelity: t.result.mean_fidelity().unwrap_or(0.0),
                r0: t.result.normalization.r0,
                condition_fixed_population: t.plan.condition_fixed_population,
            })
        })
        .collect()
}
