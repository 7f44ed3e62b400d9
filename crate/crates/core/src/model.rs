//! Excitonic aggregates: site Hamiltonians, exciton bases and ensemble sampling.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// An `n`-pigment aggregate with one excited state per pigment.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteModel {
    energies: Vec<f64>,
    couplings: DMatrix<f64>,
    dipoles: Vec<Vec3>,
    disorder_sigma: Vec<f64>,
}

impl SiteModel {
    pub fn new(
        energies: Vec<f64>,
        couplings: DMatrix<f64>,
        dipoles: Vec<Vec3>,
        disorder_sigma: Vec<f64>,
    ) -> Result<Self> {
        let n = energies.len();
        if n == 0 {
            return Err(Error::validation("a site model needs at least one site"));
        }
        if couplings.nrows() != n || couplings.ncols() != n {
            return Err(Error::validation(format!(
                "coupling matrix is {}x{}, expected {n}x{n}",
                couplings.nrows(),
                couplings.ncols()
            )));
        }
        if dipoles.len() != n || disorder_sigma.len() != n {
            return Err(Error::validation(format!(
                "expected {n} dipoles and {n} disorder widths, got {} and {}",
                dipoles.len(),
                disorder_sigma.len()
            )));
        }
        let scale = couplings.amax().max(1.0);
        for i in 0..n {
            if couplings[(i, i)] != 0.0 {
                return Err(Error::validation("coupling matrix must have a zero diagonal"));
            }
            for j in 0..i {
                if (couplings[(i, j)] - couplings[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::validation(format!(
                        "couplings not symmetric at ({i}, {j}): {} vs {}",
                        couplings[(i, j)],
                        couplings[(j, i)]
                    )));
                }
            }
        }
        if energies.iter().chain(couplings.iter()).any(|v| !v.is_finite())
            || dipoles.iter().any(|d| d.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::validation("site model contains non-finite values"));
        }
        if disorder_sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::validation("disorder widths must be non-negative"));
        }
        Ok(Self {
            energies,
            couplings,
            dipoles,
            disorder_sigma,
        })
    }

    /// Two coupled pigments with `|d1| = 1`, `|d2| = delta` and relative dipole angle `phi`.
    pub fn dimer(e1: f64, e2: f64, coupling: f64, delta: f64, phi: f64, disorder: f64) -> Result<Self> {
        let couplings = DMatrix::from_row_slice(2, 2, &[0.0, coupling, coupling, 0.0]);
        let dipoles = vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(delta * phi.cos(), delta * phi.sin(), 0.0),
        ];
        Self::new(vec![e1, e2], couplings, dipoles, vec![disorder, disorder])
    }

    /// The heterodimer used throughout the benchmarks: E₁ = 12881, E₂ = 12719,
    /// J = 120 cm⁻¹, δ = 2, φ = 0.3 rad and 40 cm⁻¹ static disorder per site.
    pub fn reference_dimer() -> Self {
        Self::dimer(12_881.0, 12_719.0, 120.0, 2.0, 0.3, 40.0).expect("reference dimer is valid")
    }

    pub fn n_sites(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn couplings(&self) -> &DMatrix<f64> {
        &self.couplings
    }

    pub fn dipoles(&self) -> &[Vec3] {
        &self.dipoles
    }

    pub fn disorder_sigma(&self) -> &[f64] {
        &self.disorder_sigma
    }

    pub fn with_disorder(mut self, sigma: f64) -> Self {
        self.disorder_sigma = vec![sigma; self.n_sites()];
        self
    }

    pub fn with_dipoles(mut self, dipoles: Vec<Vec3>) -> Result<Self> {
        if dipoles.len() != self.n_sites() {
            return Err(Error::validation("dipole count does not match site count"));
        }
        self.dipoles = dipoles;
        Ok(self)
    }

    /// Single-excitation Hamiltonian `diag(E) + J` in the site basis.
    pub fn hamiltonian(&self) -> DMatrix<f64> {
        let mut h = self.couplings.clone();
        for (i, e) in self.energies.iter().enumerate() {
            h[(i, i)] = *e;
        }
        h
    }
}

/// Eigenstates of the one- and two-exciton manifolds with their transition dipoles.
#[derive(Clone, Debug)]
pub struct ExcitonBasis {
    /// Ascending one-exciton energies (cm⁻¹).
    pub one_exciton_energies: Vec<f64>,
    /// Site × exciton orthogonal matrix; column `a` is exciton `a`.
    pub rotation: DMatrix<f64>,
    /// Ascending two-exciton energies (cm⁻¹), length n(n−1)/2.
    pub two_exciton_energies: Vec<f64>,
    /// Pair-state × two-exciton orthogonal matrix.
    pub two_exciton_rotation: DMatrix<f64>,
    /// Site pairs `(m, n)` with `m < n`, in the row order of `two_exciton_rotation`.
    pub pair_states: Vec<(usize, usize)>,
    /// Ground → one-exciton transition dipoles.
    pub dipoles_g_to_1: Vec<Vec3>,
    /// One → two-exciton transition dipoles, indexed `[a][f]`.
    pub dipoles_1_to_2: Vec<Vec<Vec3>>,
    /// Mixing angle θ = ½ arctan(2J/Δ), Δ = E₁ − E₂, for dimers only. The
    /// exciton (cos θ, sin θ) is the upper state when Δ > 0.
    pub mixing_angle: Option<f64>,
}

impl ExcitonBasis {
    pub fn n(&self) -> usize {
        self.one_exciton_energies.len()
    }

    pub fn n_two(&self) -> usize {
        self.two_exciton_energies.len()
    }

    /// Matrix element ⟨x|n_m|y⟩ of site-`m` occupation between one-exciton states.
    pub fn one_exciton_site_overlap(&self, site: usize, a: usize, b: usize) -> f64 {
        self.rotation[(site, a)] * self.rotation[(site, b)]
    }

    /// Matrix element ⟨f|n_m|f'⟩ of site-`m` occupation between two-exciton states.
    pub fn two_exciton_site_overlap(&self, site: usize, f: usize, g: usize) -> f64 {
        self.pair_states
            .iter()
            .enumerate()
            .filter(|(_, (m, n))| *m == site || *n == site)
            .map(|(p, _)| self.two_exciton_rotation[(p, f)] * self.two_exciton_rotation[(p, g)])
            .sum()
    }
}

/// Symmetric eigendecomposition with ascending eigenvalues, ties broken by the
/// index of the dominant component, and the largest-magnitude component of
/// every eigenvector made positive.
fn sorted_eigen(h: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = h.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(h);
    let dominant = |col: usize| -> usize {
        let v = eig.eigenvectors.column(col);
        let mut best = 0;
        for i in 1..v.len() {
            if v[i].abs() > v[best].abs() + 1e-12 {
                best = i;
            }
        }
        best
    };
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (eig.eigenvalues[a], eig.eigenvalues[b]);
        if (ea - eb).abs() <= 1e-12 * scale {
            dominant(a).cmp(&dominant(b))
        } else {
            ea.partial_cmp(&eb).unwrap()
        }
    });
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (k, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let sign = if col[dominant(src)] < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(k, &(col * sign));
        values.push(eig.eigenvalues[src]);
    }
    (values, vectors)
}

/// Site pairs `(m, n)`, `m < n`, in lexicographic order.
pub fn pair_states(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|m| ((m + 1)..n).map(move |k| (m, k))).collect()
}

/// Two-excitation Hamiltonian over hard-core pair states.
pub fn two_exciton_hamiltonian(model: &SiteModel) -> DMatrix<f64> {
    let pairs = pair_states(model.n_sites());
    let e = model.energies();
    let j = model.couplings();
    let np = pairs.len();
    let mut h = DMatrix::zeros(np, np);
    for (p, &(m, n)) in pairs.iter().enumerate() {
        h[(p, p)] = e[m] + e[n];
        for (q, &(mp, np_)) in pairs.iter().enumerate() {
            if p == q {
                continue;
            }
            let v = if m == mp {
                j[(n, np_)]
            } else if n == np_ {
                j[(m, mp)]
            } else if m == np_ {
                j[(n, mp)]
            } else if n == mp {
                j[(m, np_)]
            } else {
                0.0
            };
            h[(p, q)] = v;
        }
    }
    h
}

/// Diagonalizes the one- and two-exciton blocks and rotates the transition dipoles.
pub fn diagonalize(model: &SiteModel) -> ExcitonBasis {
    let n = model.n_sites();
    let (one_e, u) = sorted_eigen(model.hamiltonian());
    let pairs = pair_states(n);
    let (two_e, w) = sorted_eigen(two_exciton_hamiltonian(model));
    let d = model.dipoles();

    let dipoles_g_to_1: Vec<Vec3> = (0..n)
        .map(|a| (0..n).fold(Vec3::zeros(), |acc, k| acc + d[k] * u[(k, a)]))
        .collect();

    let dipoles_1_to_2: Vec<Vec<Vec3>> = (0..n)
        .map(|a| {
            (0..pairs.len())
                .map(|f| {
                    pairs.iter().enumerate().fold(Vec3::zeros(), |acc, (p, &(m, k))| {
                        // ⟨mk|μ⁺|m⟩ = d_k and ⟨mk|μ⁺|k⟩ = d_m
                        acc + (d[k] * u[(m, a)] + d[m] * u[(k, a)]) * w[(p, f)]
                    })
                })
                .collect()
        })
        .collect();

    let mixing_angle = (n == 2).then(|| {
        let delta = model.energies()[0] - model.energies()[1];
        if delta == 0.0 {
            std::f64::consts::FRAC_PI_4 * model.couplings()[(0, 1)].signum()
        } else {
            0.5 * (2.0 * model.couplings()[(0, 1)] / delta).atan()
        }
    });

    ExcitonBasis {
        one_exciton_energies: one_e,
        rotation: u,
        two_exciton_energies: two_e,
        two_exciton_rotation: w,
        pair_states: pairs,
        dipoles_g_to_1,
        dipoles_1_to_2,
        mixing_angle,
    }
}

/// Rotates every transition dipole of `basis` into the lab frame.
pub fn lab_frame_dipoles(basis: &ExcitonBasis, orientation: &Matrix3<f64>) -> Result<ExcitonBasis> {
    let defect = (orientation.transpose() * orientation - Matrix3::identity()).amax();
    if defect > 1e-9 || (orientation.determinant() - 1.0).abs() > 1e-9 {
        return Err(Error::validation("orientation is not a proper rotation"));
    }
    let mut out = basis.clone();
    for d in out.dipoles_g_to_1.iter_mut() {
        *d = orientation * *d;
    }
    for row in out.dipoles_1_to_2.iter_mut() {
        for d in row.iter_mut() {
            *d = orientation * *d;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OrientationMode {
    FixedFrame,
    #[default]
    IsotropicXyzAverage,
}

/// Gaussian uncertainty in the nominal Hamiltonian, on top of static disorder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianUncertainty {
    pub site_sigma: f64,
    pub coupling_relative_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub orientation_mode: OrientationMode,
    #[serde(default)]
    pub uncertainty: Option<HamiltonianUncertainty>,
}

impl EnsembleSpec {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            seed,
            orientation_mode: OrientationMode::default(),
            uncertainty: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::validation("ensemble needs at least one sample"));
        }
        if let Some(u) = self.uncertainty {
            if !(u.site_sigma >= 0.0 && u.coupling_relative_sigma >= 0.0) {
                return Err(Error::validation("uncertainty widths must be non-negative"));
            }
        }
        Ok(())
    }

    /// The `index`-th ensemble member. Each member draws from its own ChaCha
    /// stream keyed by `(seed, index)`, so members can be generated in any order.
    pub fn sample(&self, model: &SiteModel, index: usize) -> SiteModel {
        let mut rng = substream(self.seed, index as u64);
        let mut out = model.clone();
        if let Some(u) = self.uncertainty {
            perturb_hamiltonian(&mut out, &u, &mut rng);
        }
        apply_disorder(&mut out, &mut rng);
        out
    }
}

/// Deterministic per-index random stream.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub(crate) fn gaussian<R: rand::Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Adds i.i.d. Gaussian offsets of the model's disorder widths to the site energies.
pub fn apply_disorder<R: rand::Rng>(model: &mut SiteModel, rng: &mut R) {
    for i in 0..model.n_sites() {
        let z = gaussian(rng);
        model.energies[i] += model.disorder_sigma[i] * z;
    }
}

/// Perturbs site energies by `site_sigma` and each coupling by
/// `coupling_relative_sigma · |J_mn|`, keeping the matrix symmetric.
pub fn perturb_hamiltonian<R: rand::Rng>(model: &mut SiteModel, u: &HamiltonianUncertainty, rng: &mut R) {
    let n = model.n_sites();
    for i in 0..n {
        model.energies[i] += u.site_sigma * gaussian(rng);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let jv = model.couplings[(i, j)];
            let v = jv + u.coupling_relative_sigma * jv.abs() * gaussian(rng);
            model.couplings[(i, j)] = v;
            model.couplings[(j, i)] = v;
        }
    }
}

/// Returns `spec.n_samples` perturbed copies of `model`.
pub fn sample_ensemble(model: &SiteModel, spec: &EnsembleSpec) -> Result<Vec<SiteModel>> {
    spec.validate()?;
    Ok((0..spec.n_samples).map(|i| spec.sample(model, i)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn random_model(n: usize, seed: u64) -> SiteModel {
        let mut rng = substream(seed, 0);
        let energies: Vec<f64> = (0..n).map(|_| 12_500.0 + 300.0 * gaussian(&mut rng)).collect();
        let mut j = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in (a + 1)..n {
                let v = 80.0 * gaussian(&mut rng);
                j[(a, b)] = v;
                j[(b, a)] = v;
            }
        }
        let dipoles = (0..n)
            .map(|_| Vec3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng)))
            .collect();
        SiteModel::new(energies, j, dipoles, vec![0.0; n]).unwrap()
    }

    #[test]
    fn reference_dimer_mixing_angle_and_energies() {
        let basis = diagonalize(&SiteModel::reference_dimer());
        let theta = basis.mixing_angle.unwrap();
        assert_relative_eq!(theta, 0.5 * (240.0f64 / 162.0).atan(), epsilon = 1e-14);
        assert!((theta - 0.48835).abs() < 5e-4);
        let half_split = 0.5 * (162.0f64.powi(2) + 4.0 * 120.0f64.powi(2)).sqrt();
        assert_relative_eq!(basis.one_exciton_energies[1], 12_800.0 + half_split, epsilon = 1e-9);
        assert_relative_eq!(basis.one_exciton_energies[0], 12_800.0 - half_split, epsilon = 1e-9);
        assert!((basis.one_exciton_energies[1] - 12_944.78).abs() < 0.01);
        assert!((basis.one_exciton_energies[0] - 12_655.22).abs() < 0.01);
        assert_eq!(basis.two_exciton_energies, vec![12_881.0 + 12_719.0]);
    }

    #[test]
    fn decoupled_sites_keep_site_dipoles() {
        let model = SiteModel::dimer(12_700.0, 12_900.0, 0.0, 1.5, 0.7, 0.0).unwrap();
        let basis = diagonalize(&model);
        assert_eq!(basis.mixing_angle, Some(0.0));
        assert_relative_eq!(basis.rotation, DMatrix::identity(2, 2), epsilon = 1e-14);
        assert_relative_eq!(basis.dipoles_g_to_1[0], model.dipoles()[0], epsilon = 1e-14);
        assert_relative_eq!(basis.dipoles_g_to_1[1], model.dipoles()[1], epsilon = 1e-14);
    }

    #[test]
    fn dimer_eigenvectors_match_closed_form() {
        for &(e1, e2, j) in &[(12_881.0, 12_719.0, 120.0), (12_600.0, 12_650.0, -35.0), (12_500.0, 12_900.0, 10.0)] {
            let model = SiteModel::dimer(e1, e2, j, 1.3, 0.4, 0.0).unwrap();
            let b = diagonalize(&model);
            let t = b.mixing_angle.unwrap();
            assert_relative_eq!((2.0 * t).tan(), 2.0 * j / (e1 - e2), max_relative = 1e-10);
            let (c, s) = (t.cos(), t.sin());
            let dot = |col: usize, v: [f64; 2]| b.rotation[(0, col)] * v[0] + b.rotation[(1, col)] * v[1];
            let ia = if dot(1, [c, s]).abs() > dot(0, [c, s]).abs() { 1 } else { 0 };
            let ib = 1 - ia;
            assert_relative_eq!(dot(ia, [c, s]).abs(), 1.0, epsilon = 1e-10);
            assert_relative_eq!(dot(ib, [-s, c]).abs(), 1.0, epsilon = 1e-10);
            // exciton dipoles against the four closed forms, up to the column sign
            let (d1, d2) = (model.dipoles()[0], model.dipoles()[1]);
            let sa = dot(ia, [c, s]).signum();
            let sb = dot(ib, [-s, c]).signum();
            assert_relative_eq!(b.dipoles_g_to_1[ia] * sa, d1 * c + d2 * s, epsilon = 1e-10);
            assert_relative_eq!(b.dipoles_g_to_1[ib] * sb, -d1 * s + d2 * c, epsilon = 1e-10);
            assert_relative_eq!(b.dipoles_1_to_2[ia][0] * sa, d1 * s + d2 * c, epsilon = 1e-10);
            assert_relative_eq!(b.dipoles_1_to_2[ib][0] * sb, d1 * c - d2 * s, epsilon = 1e-10);
        }
    }

    #[test]
    fn asymmetric_couplings_rejected() {
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 100.0, 90.0, 0.0]);
        let err = SiteModel::new(vec![1.0, 2.0], j, vec![Vec3::x(); 2], vec![0.0; 2]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn empty_model_rejected() {
        assert!(SiteModel::new(vec![], DMatrix::zeros(0, 0), vec![], vec![]).is_err());
    }

    #[test]
    fn zero_disorder_samples_are_identical() {
        let model = SiteModel::reference_dimer().with_disorder(0.0);
        let spec = EnsembleSpec::new(5, 7);
        for s in sample_ensemble(&model, &spec).unwrap() {
            assert_eq!(s, model);
        }
    }

    #[test]
    fn disorder_statistics() {
        let model = SiteModel::reference_dimer();
        let spec = EnsembleSpec::new(100_000, 2024);
        let samples = sample_ensemble(&model, &spec).unwrap();
        for site in 0..2 {
            let xs: Vec<f64> = samples.iter().map(|m| m.energies()[site]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            assert!((var.sqrt() - 40.0).abs() < 0.5, "std {}", var.sqrt());
            // mean-zero at rate σ/√N
            assert!((mean - model.energies()[site]).abs() < 4.0 * 40.0 / (xs.len() as f64).sqrt());
        }
    }

    #[test]
    fn coupling_uncertainty_statistics() {
        let model = crate::config::fmo_style_model().with_disorder(0.0);
        let mut spec = EnsembleSpec::new(40_000, 99);
        spec.uncertainty = Some(HamiltonianUncertainty {
            site_sigma: 20.0,
            coupling_relative_sigma: 0.1,
        });
        let samples = sample_ensemble(&model, &spec).unwrap();
        let j12 = model.couplings()[(0, 1)];
        let xs: Vec<f64> = samples.iter().map(|m| m.couplings()[(0, 1)]).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
        assert!((sd / (0.1 * j12.abs()) - 1.0).abs() < 0.02, "sd {sd}");
        assert!(samples.iter().all(|m| m.couplings()[(1, 0)] == m.couplings()[(0, 1)]));
    }

    #[test]
    fn sampling_is_order_independent() {
        let model = SiteModel::reference_dimer();
        let spec = EnsembleSpec::new(16, 3);
        let forward = sample_ensemble(&model, &spec).unwrap();
        let backward: Vec<_> = (0..16).rev().map(|i| spec.sample(&model, i)).collect();
        for (a, b) in forward.iter().zip(backward.iter().rev()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn lab_frame_rotation() {
        let basis = diagonalize(&SiteModel::reference_dimer());
        let same = lab_frame_dipoles(&basis, &Matrix3::identity()).unwrap();
        assert_eq!(same.dipoles_g_to_1, basis.dipoles_g_to_1);

        let rz = nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), std::f64::consts::PI);
        let rot = lab_frame_dipoles(&basis, rz.matrix()).unwrap();
        for (a, b) in basis.dipoles_g_to_1.iter().zip(&rot.dipoles_g_to_1) {
            assert_relative_eq!(b.x, -a.x, epsilon = 1e-12);
            assert_relative_eq!(b.y, -a.y, epsilon = 1e-12);
            assert_relative_eq!(b.norm(), a.norm(), epsilon = 1e-12);
        }

        let improper = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(lab_frame_dipoles(&basis, &improper).is_err());
    }

    #[test]
    fn rotated_site_dipoles_keep_relative_angle() {
        let model = SiteModel::reference_dimer();
        let r = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let d: Vec<Vec3> = model.dipoles().iter().map(|d| r * d).collect();
        let angle = (d[0].dot(&d[1]) / (d[0].norm() * d[1].norm())).acos();
        assert_relative_eq!(angle, 0.3, epsilon = 1e-12);
        assert_relative_eq!(d[1].norm() / d[0].norm(), 2.0, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn eigendecomposition_round_trip(n in 1usize..=8, seed in any::<u64>()) {
            let model = random_model(n, seed);
            let b = diagonalize(&model);
            let u = &b.rotation;
            let eye = u.transpose() * u;
            prop_assert!((eye - DMatrix::identity(n, n)).amax() < 1e-10);
            let h = model.hamiltonian();
            let recon = u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(b.one_exciton_energies.clone())) * u.transpose();
            prop_assert!((recon - &h).amax() <= 1e-10 * h.amax());
            prop_assert!(b.one_exciton_energies.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(b.n_two(), n * (n - 1) / 2);
        }

        #[test]
        fn dipole_strength_sum_rule(n in 1usize..=8, seed in any::<u64>()) {
            let model = random_model(n, seed);
            let b = diagonalize(&model);
            let site: f64 = model.dipoles().iter().map(|d| d.norm_squared()).sum();
            let exc: f64 = b.dipoles_g_to_1.iter().map(|d| d.norm_squared()).sum();
            prop_assert!((site - exc).abs() <= 1e-10 * site.max(1.0));
        }
    }
}
