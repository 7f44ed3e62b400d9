//! Conditioning of state inversion: the global pump-probe map over a dense
//! probe grid, its singular values, and species-spectrum diagnostics.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{redfield_rates, BathSpec};
use crate::error::{Error, Result};
use crate::model::{diagonalize, perturb_hamiltonian, substream, EnsembleSpec, HamiltonianUncertainty, SiteModel};
use crate::response::{build_operator, isotropic_operator, BasisElement, LiouvilleBasis, Polarization, PumpProbeOperator};
use crate::units::TWO_PI_C;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleType {
    SingleComplex,
    DisorderEnsemble,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolarizationSet {
    /// Magic-angle (isotropic) average.
    Isotropic,
    /// Every probe/signal pair of lab axes on an oriented sample.
    AllNine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelSet {
    AbsorptiveOnly,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub label: String,
    pub temperature: f64,
    pub sample: SampleType,
    pub polarizations: PolarizationSet,
    pub channels: ChannelSet,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::validation(format!("scenario `{}`: temperature must be positive", self.label)));
        }
        Ok(())
    }

    /// Experimental constraints added one at a time, starting from an
    /// oriented single complex at 77 K measured in every polarization and
    /// both channels: ensemble, isotropic, absorptive only, room temperature.
    pub fn cumulative_sequence() -> Vec<Self> {
        let mut s = Self {
            label: "single complex, 77 K, 9 polarizations".into(),
            temperature: 77.0,
            sample: SampleType::SingleComplex,
            polarizations: PolarizationSet::AllNine,
            channels: ChannelSet::Both,
        };
        let mut out = vec![s.clone()];
        s.sample = SampleType::DisorderEnsemble;
        s.label = "+ disorder ensemble".into();
        out.push(s.clone());
        s.polarizations = PolarizationSet::Isotropic;
        s.label = "+ isotropic".into();
        out.push(s.clone());
        s.channels = ChannelSet::AbsorptiveOnly;
        s.label = "+ absorptive only".into();
        out.push(s.clone());
        s.temperature = 300.0;
        s.label = "+ 300 K".into();
        out.push(s);
        out
    }
}

/// Ensemble size and seed for disorder-averaged scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AveragingConfig {
    pub disorder_samples: usize,
    pub seed: u64,
}

impl Default for AveragingConfig {
    fn default() -> Self {
        Self {
            disorder_samples: 1000,
            seed: 17,
        }
    }
}

/// Probe grid spanning the exciton energies ± 5 homogeneous widths (plus
/// three disorder widths) at a quarter of the narrowest homogeneous width.
pub fn continuous_grid(model: &SiteModel, bath: &BathSpec) -> Result<Vec<f64>> {
    let basis = diagonalize(model);
    let rates = redfield_rates(&basis, bath)?;
    let widths: Vec<f64> = rates.coherence_gamma_01.iter().map(|g| g.re / TWO_PI_C).collect();
    let narrow = widths.iter().cloned().fold(f64::INFINITY, f64::min);
    let broad = widths.iter().cloned().fold(0.0, f64::max);
    if !(narrow > 0.0) {
        return Err(Error::Numerical("homogeneous linewidth is not positive".into()));
    }
    let disorder = model.disorder_sigma().iter().cloned().fold(0.0, f64::max);
    let e = &basis.one_exciton_energies;
    let lo = e[0] - 5.0 * broad - 3.0 * disorder;
    let hi = e[e.len() - 1] + 5.0 * broad + 3.0 * disorder;
    let step = narrow / 4.0;
    let n = ((hi - lo) / step).ceil() as usize + 1;
    Ok((0..n).map(|k| lo + k as f64 * step).collect())
}

fn block_polarizations(set: PolarizationSet) -> Vec<Option<Polarization>> {
    match set {
        PolarizationSet::Isotropic => vec![None],
        PolarizationSet::AllNine => Polarization::all_nine().into_iter().map(Some).collect(),
    }
}

fn single_operators(model: &SiteModel, bath: &BathSpec, pols: &[Option<Polarization>], grid: &[f64]) -> Result<Vec<PumpProbeOperator>> {
    let basis = diagonalize(model);
    let rates = redfield_rates(&basis, bath)?;
    pols.iter()
        .map(|p| match p {
            None => isotropic_operator(&basis, &rates, grid),
            Some(pol) => build_operator(&basis, &rates, grid, pol),
        })
        .collect()
}

const CHUNK: usize = 16;

/// Disorder-averaged operators, one per polarization block, each member in
/// its own exciton basis. Chunked reduction in index order.
fn ensemble_operators(
    model: &SiteModel,
    bath: &BathSpec,
    pols: &[Option<Polarization>],
    grid: &[f64],
    avg: &AveragingConfig,
) -> Result<Vec<PumpProbeOperator>> {
    let spec = EnsembleSpec::new(avg.disorder_samples, avg.seed);
    spec.validate()?;
    let chunks: Vec<Result<Vec<DMatrix<Complex64>>>> = (0..spec.n_samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc: Option<Vec<DMatrix<Complex64>>> = None;
            for idx in (c * CHUNK)..((c + 1) * CHUNK).min(spec.n_samples) {
                let ops = single_operators(&spec.sample(model, idx), bath, pols, grid)?;
                let rows: Vec<DMatrix<Complex64>> = ops.into_iter().map(|o| o.rows).collect();
                acc = Some(match acc {
                    None => rows,
                    Some(a) => a.into_iter().zip(rows).map(|(x, y)| x + y).collect(),
                });
            }
            acc.ok_or_else(|| Error::validation("empty ensemble chunk"))
        })
        .collect();
    let mut total: Option<Vec<DMatrix<Complex64>>> = None;
    for c in chunks {
        let c = c?;
        total = Some(match total {
            None => c,
            Some(a) => a.into_iter().zip(c).map(|(x, y)| x + y).collect(),
        });
    }
    let scale = Complex64::new(1.0 / spec.n_samples as f64, 0.0);
    let labels = LiouvilleBasis::new(model.n_sites()).labels();
    Ok(total
        .unwrap_or_default()
        .into_iter()
        .map(|rows| PumpProbeOperator {
            grid: grid.to_vec(),
            labels: labels.clone(),
            rows: rows * scale,
        })
        .collect())
}

/// Probe operators of every measurement block in a scenario, with block labels.
pub fn scenario_operators(
    model: &SiteModel,
    bath: &BathSpec,
    scenario: &Scenario,
    grid: &[f64],
    avg: &AveragingConfig,
) -> Result<Vec<(String, PumpProbeOperator)>> {
    scenario.validate()?;
    let bath = bath.with_temperature(scenario.temperature);
    let pols = block_polarizations(scenario.polarizations);
    let ops = match scenario.sample {
        SampleType::SingleComplex => single_operators(model, &bath, &pols, grid)?,
        SampleType::DisorderEnsemble => ensemble_operators(model, &bath, &pols, grid, avg)?,
    };
    Ok(pols
        .iter()
        .map(|p| p.as_ref().map_or_else(|| "iso".to_string(), |p| p.label()))
        .zip(ops)
        .collect())
}

/// Real map from n² state coordinates to stacked spectra.
#[derive(Clone, Debug)]
pub struct PumpProbeMap {
    pub label: String,
    pub labels: Vec<String>,
    pub matrix: DMatrix<f64>,
    pub blocks: usize,
}

impl PumpProbeMap {
    /// Stacks Im (and Re, for both channels) of every block's rows.
    pub fn from_operators(label: &str, ops: &[PumpProbeOperator], channels: ChannelSet) -> Result<Self> {
        let first = ops.first().ok_or_else(|| Error::validation("map needs at least one operator"))?;
        if ops.iter().any(|o| o.labels != first.labels) {
            return Err(Error::validation("operators use different state bases"));
        }
        let per = match channels {
            ChannelSet::AbsorptiveOnly => 1,
            ChannelSet::Both => 2,
        };
        let n_rows: usize = ops.iter().map(|o| o.grid.len() * per).sum();
        let mut matrix = DMatrix::zeros(n_rows, first.n_components());
        let mut r = 0;
        for op in ops {
            for ch in 0..per {
                for i in 0..op.grid.len() {
                    for k in 0..op.n_components() {
                        let z = op.rows[(i, k)];
                        matrix[(r, k)] = if ch == 0 { z.im } else { z.re };
                    }
                    r += 1;
                }
            }
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("map has non-finite entries".into()));
        }
        Ok(Self {
            label: label.to_string(),
            labels: first.labels.clone(),
            matrix,
            blocks: ops.len(),
        })
    }

    /// Map restricted to a subset of state components.
    pub fn restrict(&self, columns: &[usize]) -> Result<Self> {
        if columns.iter().any(|&c| c >= self.matrix.ncols()) {
            return Err(Error::validation("column index out of range"));
        }
        Ok(Self {
            label: self.label.clone(),
            labels: columns.iter().map(|&c| self.labels[c].clone()).collect(),
            matrix: self.matrix.select_columns(columns),
            blocks: self.blocks,
        })
    }
}

pub fn build_map(model: &SiteModel, bath: &BathSpec, scenario: &Scenario, grid: &[f64], avg: &AveragingConfig) -> Result<PumpProbeMap> {
    let ops: Vec<PumpProbeOperator> = scenario_operators(model, bath, scenario, grid, avg)?
        .into_iter()
        .map(|(_, o)| o)
        .collect();
    PumpProbeMap::from_operators(&scenario.label, &ops, scenario.channels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularSpectrum {
    /// Absolute singular values, descending.
    pub values: Vec<f64>,
    /// σ_i/σ₁.
    pub normalized: Vec<f64>,
    /// σ₁/σ_min; infinite when the map is rank deficient.
    pub condition: f64,
    pub rank_deficient: bool,
}

pub fn singular_spectrum(map: &PumpProbeMap) -> SingularSpectrum {
    let mut values: Vec<f64> = map.matrix.clone().svd(false, false).singular_values.iter().cloned().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let top = values.first().cloned().unwrap_or(0.0);
    let cols = map.matrix.ncols();
    let tol = top * f64::EPSILON * map.matrix.nrows().max(cols) as f64;
    let rank_deficient = top == 0.0 || values.len() < cols || values.iter().any(|s| *s <= tol);
    let normalized = values.iter().map(|s| if top > 0.0 { s / top } else { 0.0 }).collect();
    let condition = if rank_deficient {
        f64::INFINITY
    } else {
        top / values[values.len() - 1]
    };
    SingularSpectrum {
        values,
        normalized,
        condition,
        rank_deficient,
    }
}

/// Peak |absorptive| species amplitude per state element: populations on the
/// diagonal, real coherences above it, imaginary coherences below.
pub fn species_amplitude_matrix(op: &PumpProbeOperator) -> Result<DMatrix<f64>> {
    let d = op.n_components();
    let n = (d as f64).sqrt().round() as usize;
    if n * n != d {
        return Err(Error::validation("operator is not over an n² Liouville basis"));
    }
    let basis = LiouvilleBasis::new(n);
    let mut out = DMatrix::zeros(n, n);
    for (k, e) in basis.elements().iter().enumerate() {
        let peak = op.rows.column(k).iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
        match *e {
            BasisElement::Population(a) => out[(a, a)] = peak,
            BasisElement::RealCoherence(a, b) => out[(a.min(b), a.max(b))] = peak,
            BasisElement::ImagCoherence(a, b) => out[(a.max(b), a.min(b))] = peak,
        }
    }
    Ok(out)
}

/// Central 95% envelopes of one species spectrum over Hamiltonian draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeciesBand {
    pub label: String,
    pub nominal_absorptive: Vec<f64>,
    pub lower_absorptive: Vec<f64>,
    pub upper_absorptive: Vec<f64>,
    pub nominal_dispersive: Vec<f64>,
    pub lower_dispersive: Vec<f64>,
    pub upper_dispersive: Vec<f64>,
}

impl SpeciesBand {
    /// Grid points where the absorptive band contains zero.
    pub fn zero_overlap_fraction(&self) -> f64 {
        let n = self.lower_absorptive.len().max(1) as f64;
        self.lower_absorptive
            .iter()
            .zip(&self.upper_absorptive)
            .filter(|(l, u)| **l <= 0.0 && **u >= 0.0)
            .count() as f64
            / n
    }
}

/// Linear-interpolated percentile of sorted data, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let x = q * (sorted.len() - 1) as f64;
    let i = x.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (sorted[j] - sorted[i]) * (x - i as f64)
}

/// Isotropic species spectra under Hamiltonian uncertainty. Each draw
/// perturbs the nominal Hamiltonian, keeps the disorder width, and averages
/// over disorder.
pub fn uncertainty_bands(
    model: &SiteModel,
    bath: &BathSpec,
    uncertainty: &HamiltonianUncertainty,
    n_draws: usize,
    grid: &[f64],
    avg: &AveragingConfig,
    seed: u64,
) -> Result<Vec<SpeciesBand>> {
    if n_draws == 0 {
        return Err(Error::validation("uncertainty bands need at least one draw"));
    }
    if !(uncertainty.site_sigma >= 0.0 && uncertainty.coupling_relative_sigma >= 0.0) {
        return Err(Error::validation("uncertainty widths must be non-negative"));
    }
    let pols = [None];
    let nominal = ensemble_operators(model, bath, &pols, grid, avg)?.remove(0);
    let draws: Vec<Result<PumpProbeOperator>> = (0..n_draws)
        .into_par_iter()
        .map(|d| {
            let mut m = model.clone();
            perturb_hamiltonian(&mut m, uncertainty, &mut substream(seed, d as u64));
            Ok(ensemble_operators(&m, bath, &pols, grid, avg)?.remove(0))
        })
        .collect();
    let draws: Vec<PumpProbeOperator> = draws.into_iter().collect::<Result<_>>()?;
    let bands = (0..nominal.n_components())
        .map(|k| {
            let mut band = SpeciesBand {
                label: nominal.labels[k].clone(),
                nominal_absorptive: nominal.rows.column(k).iter().map(|z| z.im).collect(),
                nominal_dispersive: nominal.rows.column(k).iter().map(|z| z.re).collect(),
                lower_absorptive: Vec::with_capacity(grid.len()),
                upper_absorptive: Vec::with_capacity(grid.len()),
                lower_dispersive: Vec::with_capacity(grid.len()),
                upper_dispersive: Vec::with_capacity(grid.len()),
            };
            for i in 0..grid.len() {
                let mut im: Vec<f64> = draws.iter().map(|o| o.rows[(i, k)].im).collect();
                let mut re: Vec<f64> = draws.iter().map(|o| o.rows[(i, k)].re).collect();
                im.sort_by(f64::total_cmp);
                re.sort_by(f64::total_cmp);
                band.lower_absorptive.push(percentile(&im, 0.025));
                band.upper_absorptive.push(percentile(&im, 0.975));
                band.lower_dispersive.push(percentile(&re, 0.025));
                band.upper_dispersive.push(percentile(&re, 0.975));
            }
            band
        })
        .collect();
    Ok(bands)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vec3;
    use crate::response::{dimer_projector_isotropic, DimerFrame, DimerLineShapes};
    use crate::tomography::{build_plan, exciton_frequencies, Channel};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn map_of(matrix: DMatrix<f64>) -> PumpProbeMap {
        PumpProbeMap {
            label: "m".into(),
            labels: (0..matrix.ncols()).map(|k| k.to_string()).collect(),
            matrix,
            blocks: 1,
        }
    }

    fn single(temperature: f64, pol: PolarizationSet, ch: ChannelSet) -> Scenario {
        Scenario {
            label: "s".into(),
            temperature,
            sample: SampleType::SingleComplex,
            polarizations: pol,
            channels: ch,
        }
    }

    #[test]
    fn orthogonal_rows_are_perfectly_conditioned() {
        let s = singular_spectrum(&map_of(DMatrix::from_row_slice(3, 3, &[0., 2., 0., 0., 0., 2., 2., 0., 0.])));
        assert_relative_eq!(s.condition, 1.0, epsilon = 1e-12);
        assert!(s.normalized.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn duplicated_row_is_rank_deficient() {
        let s = singular_spectrum(&map_of(DMatrix::from_row_slice(2, 2, &[1., 2., 1., 2.])));
        assert!(s.rank_deficient);
        assert!(s.condition.is_infinite());
        // Fewer rows than unknowns.
        assert!(singular_spectrum(&map_of(DMatrix::from_row_slice(1, 2, &[1., 0.]))).rank_deficient);
    }

    #[test]
    fn dark_aggregate_gives_zero_map() {
        let m = SiteModel::new(
            vec![12_700.0, 12_800.0],
            DMatrix::from_row_slice(2, 2, &[0.0, 80.0, 80.0, 0.0]),
            vec![Vec3::zeros(), Vec3::zeros()],
            vec![0.0, 0.0],
        )
        .unwrap();
        let bath = BathSpec::reference();
        let grid = continuous_grid(&m, &bath).unwrap();
        let sc = single(77.0, PolarizationSet::Isotropic, ChannelSet::Both);
        let map = build_map(&m, &bath, &sc, &grid, &AveragingConfig::default()).unwrap();
        assert!(map.matrix.iter().all(|v| *v == 0.0));
        assert!(singular_spectrum(&map).rank_deficient);
    }

    #[test]
    fn continuous_grid_covers_the_band() {
        let m = SiteModel::reference_dimer();
        let bath = BathSpec::reference();
        let g = continuous_grid(&m, &bath).unwrap();
        let [a, b] = exciton_frequencies(&m).unwrap();
        assert!(g[0] < a.min(b) - 120.0 && g[g.len() - 1] > a.max(b) + 120.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn dimer_map_matches_tomography_plan() {
        let m = SiteModel::reference_dimer().with_disorder(0.0);
        let bath = BathSpec::reference();
        let freqs = exciton_frequencies(&m).unwrap();
        let mut grid = freqs.to_vec();
        grid.sort_by(f64::total_cmp);
        let sc = single(bath.temperature, PolarizationSet::Isotropic, ChannelSet::Both);
        let ops = scenario_operators(&m, &bath, &sc, &grid, &AveragingConfig::default()).unwrap();
        let bloch = DimerFrame::new(&diagonalize(&m)).unwrap().bloch_operator(&ops[0].1).unwrap();
        let map = PumpProbeMap::from_operators("dimer", std::slice::from_ref(&bloch), ChannelSet::Both).unwrap();
        let reduced = map.restrict(&[1, 2, 3]).unwrap();
        let plan = build_plan(&bloch, &freqs, &Channel::both()).unwrap();
        assert_relative_eq!(singular_spectrum(&reduced).condition, plan.condition_fixed_population, max_relative = 1e-6);
        assert_relative_eq!(singular_spectrum(&map).condition, plan.condition_full, max_relative = 1e-6);
    }

    #[test]
    fn isotropic_dimer_map_matches_closed_form() {
        let m = SiteModel::reference_dimer().with_disorder(0.0);
        let bath = BathSpec::reference();
        let grid = continuous_grid(&m, &bath).unwrap();
        let basis = diagonalize(&m);
        let rates = redfield_rates(&basis, &bath).unwrap();
        let sc = single(bath.temperature, PolarizationSet::Isotropic, ChannelSet::Both);
        let ops = scenario_operators(&m, &bath, &sc, &grid, &AveragingConfig::default()).unwrap();
        let numeric = DimerFrame::new(&basis).unwrap().bloch_operator(&ops[0].1).unwrap();
        let shapes = DimerLineShapes::new(&basis, &rates, &grid).unwrap();
        let d1_sq = m.dipoles()[0].norm_squared();
        let delta = m.dipoles()[1].norm() / m.dipoles()[0].norm();
        let phi = m.dipoles()[0].angle(&m.dipoles()[1]);
        let analytic = dimer_projector_isotropic(basis.mixing_angle.unwrap(), delta, phi, d1_sq, &shapes, &grid);
        let scale = analytic.rows.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        assert!((numeric.rows - analytic.rows).iter().all(|z| z.norm() < 1e-10 * scale));
    }

    #[test]
    fn species_amplitudes_land_on_their_element() {
        let basis = LiouvilleBasis::new(3);
        for (k, e) in basis.elements().iter().enumerate() {
            let mut op = PumpProbeOperator::zeros(vec![1.0, 2.0], basis.labels());
            op.rows[(1, k)] = Complex64::new(5.0, -2.0);
            let a = species_amplitude_matrix(&op).unwrap();
            let (i, j) = match *e {
                BasisElement::Population(x) => (x, x),
                BasisElement::RealCoherence(x, y) => (x.min(y), x.max(y)),
                BasisElement::ImagCoherence(x, y) => (x.max(y), x.min(y)),
            };
            assert_eq!(a[(i, j)], 2.0);
            assert_eq!(a.iter().filter(|v| **v != 0.0).count(), 1);
        }
    }

    #[test]
    fn zero_uncertainty_gives_zero_width_bands() {
        let m = SiteModel::reference_dimer();
        let bath = BathSpec::reference();
        let grid: Vec<f64> = (0..41).map(|i| 12_500.0 + 15.0 * i as f64).collect();
        let u = HamiltonianUncertainty {
            site_sigma: 0.0,
            coupling_relative_sigma: 0.0,
        };
        let avg = AveragingConfig {
            disorder_samples: 8,
            seed: 3,
        };
        let bands = uncertainty_bands(&m, &bath, &u, 4, &grid, &avg, 9).unwrap();
        assert_eq!(bands.len(), 4);
        for b in &bands {
            for i in 0..grid.len() {
                assert_relative_eq!(b.lower_absorptive[i], b.upper_absorptive[i], epsilon = 1e-15);
                assert_relative_eq!(b.lower_absorptive[i], b.nominal_absorptive[i], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn ensemble_average_is_deterministic() {
        let m = SiteModel::reference_dimer();
        let bath = BathSpec::reference();
        let grid: Vec<f64> = (0..21).map(|i| 12_500.0 + 30.0 * i as f64).collect();
        let mut sc = single(77.0, PolarizationSet::Isotropic, ChannelSet::Both);
        sc.sample = SampleType::DisorderEnsemble;
        let avg = AveragingConfig {
            disorder_samples: 40,
            seed: 5,
        };
        let a = build_map(&m, &bath, &sc, &grid, &avg).unwrap();
        let b = build_map(&m, &bath, &sc, &grid, &avg).unwrap();
        assert_eq!(a.matrix, b.matrix);
    }

    #[test]
    fn cumulative_sequence_adds_one_constraint_at_a_time() {
        let seq = Scenario::cumulative_sequence();
        assert_eq!(seq.len(), 5);
        assert_eq!(seq[0].polarizations, PolarizationSet::AllNine);
        assert_eq!(seq[4].temperature, 300.0);
        assert_eq!(seq[4].channels, ChannelSet::AbsorptiveOnly);
    }

    proptest! {
        #[test]
        fn spectrum_invariant_under_row_permutation(
            vals in prop::collection::vec(-1.0f64..1.0, 24),
            swaps in prop::collection::vec((0usize..6, 0usize..6), 0..8),
        ) {
            let a = DMatrix::from_row_slice(6, 4, &vals);
            let mut b = a.clone();
            for (i, j) in swaps {
                b.swap_rows(i, j);
            }
            let sa = singular_spectrum(&map_of(a)).values;
            let sb = singular_spectrum(&map_of(b)).values;
            for (x, y) in sa.iter().zip(&sb) {
                prop_assert!((x - y).abs() <= 1e-12 * sa[0].max(1.0));
            }
        }

        #[test]
        fn adding_rows_never_shrinks_singular_values(
            vals in prop::collection::vec(-1.0f64..1.0, 20),
            extra in prop::collection::vec(-1.0f64..1.0, 8),
        ) {
            let a = DMatrix::from_row_slice(5, 4, &vals);
            let b = DMatrix::from_fn(7, 4, |i, j| if i < 5 { a[(i, j)] } else { extra[(i - 5) * 4 + j] });
            let sa = singular_spectrum(&map_of(a)).values;
            let sb = singular_spectrum(&map_of(b)).values;
            for (x, y) in sa.iter().zip(&sb) {
                prop_assert!(*y >= x - 1e-12);
            }
        }
    }
}
