//! The pump-probe response operator, species-associated spectra and the
//! closed-form dimer projectors.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::bath::{causal_line_shape, RedfieldRates};
use crate::error::{Error, Result};
use crate::model::{ExcitonBasis, Vec3};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// One element of the Hermitian operator basis over the one-exciton manifold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisElement {
    /// |a⟩⟨a|
    Population(usize),
    /// |a⟩⟨b| + |b⟩⟨a|
    RealCoherence(usize, usize),
    /// i|a⟩⟨b| − i|b⟩⟨a|
    ImagCoherence(usize, usize),
}

/// Populations first, then one (real, imaginary) coherence pair per `a < b`.
/// Coordinates of a Hermitian ρ are `ρ_aa`, `Re ρ_ab`, `Im ρ_ab`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiouvilleBasis {
    n: usize,
    elements: Vec<BasisElement>,
}

impl LiouvilleBasis {
    pub fn new(n: usize) -> Self {
        let mut elements: Vec<BasisElement> = (0..n).map(BasisElement::Population).collect();
        for a in 0..n {
            for b in (a + 1)..n {
                elements.push(BasisElement::RealCoherence(a, b));
                elements.push(BasisElement::ImagCoherence(a, b));
            }
        }
        Self { n, elements }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[BasisElement] {
        &self.elements
    }

    pub fn labels(&self) -> Vec<String> {
        self.elements
            .iter()
            .map(|e| match *e {
                BasisElement::Population(a) => format!("pop{}", a + 1),
                BasisElement::RealCoherence(a, b) => format!("re{}{}", a + 1, b + 1),
                BasisElement::ImagCoherence(a, b) => format!("im{}{}", a + 1, b + 1),
            })
            .collect()
    }

    pub fn element(&self, k: usize) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        match self.elements[k] {
            BasisElement::Population(a) => m[(a, a)] = Complex64::new(1.0, 0.0),
            BasisElement::RealCoherence(a, b) => {
                m[(a, b)] = Complex64::new(1.0, 0.0);
                m[(b, a)] = Complex64::new(1.0, 0.0);
            }
            BasisElement::ImagCoherence(a, b) => {
                m[(a, b)] = I;
                m[(b, a)] = -I;
            }
        }
        m
    }

    pub fn coordinates(&self, rho: &DMatrix<Complex64>) -> Vec<f64> {
        self.elements
            .iter()
            .map(|e| match *e {
                BasisElement::Population(a) => rho[(a, a)].re,
                BasisElement::RealCoherence(a, b) => 0.5 * (rho[(a, b)] + rho[(b, a)].conj()).re,
                BasisElement::ImagCoherence(a, b) => 0.5 * (rho[(a, b)] + rho[(b, a)].conj()).im,
            })
            .collect()
    }

    pub fn matrix(&self, coords: &[f64]) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (k, c) in coords.iter().enumerate() {
            m += self.element(k) * Complex64::new(*c, 0.0);
        }
        m
    }
}

/// Probe (raising) and signal (lowering) polarization unit vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Polarization {
    pub probe: Vec3,
    pub signal: Vec3,
}

impl Polarization {
    pub fn parallel(axis: Vec3) -> Self {
        Self {
            probe: axis,
            signal: axis,
        }
    }

    /// The three aligned configurations xx, yy, zz.
    pub fn aligned() -> [Self; 3] {
        [Vec3::x(), Vec3::y(), Vec3::z()].map(Self::parallel)
    }

    /// All nine probe/signal pairs over the lab axes.
    pub fn all_nine() -> Vec<Self> {
        let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
        axes.iter()
            .flat_map(|p| axes.iter().map(move |s| Self { probe: *p, signal: *s }))
            .collect()
    }

    pub fn label(&self) -> String {
        let name = |v: &Vec3| {
            if *v == Vec3::x() {
                "x".to_string()
            } else if *v == Vec3::y() {
                "y".to_string()
            } else if *v == Vec3::z() {
                "z".to_string()
            } else {
                format!("({:.3},{:.3},{:.3})", v.x, v.y, v.z)
            }
        };
        format!("{}{}", name(&self.probe), name(&self.signal))
    }
}

/// Rows of covectors over a probe-frequency grid: `rows[(i, k)]` is the
/// response at `grid[i]` of the `k`-th state component.
#[derive(Clone, Debug, PartialEq)]
pub struct PumpProbeOperator {
    pub grid: Vec<f64>,
    pub labels: Vec<String>,
    pub rows: DMatrix<Complex64>,
}

impl PumpProbeOperator {
    pub fn zeros(grid: Vec<f64>, labels: Vec<String>) -> Self {
        let rows = DMatrix::zeros(grid.len(), labels.len());
        Self { grid, labels, rows }
    }

    pub fn n_components(&self) -> usize {
        self.labels.len()
    }

    /// Response spectrum ⟨⟨𝒫(ω)|c⟩⟩ of the state with coordinates `c`.
    pub fn apply(&self, coords: &[f64]) -> Vec<Complex64> {
        assert_eq!(coords.len(), self.n_components(), "state dimension mismatch");
        (0..self.grid.len())
            .map(|i| {
                coords
                    .iter()
                    .enumerate()
                    .map(|(k, c)| self.rows[(i, k)] * *c)
                    .sum()
            })
            .collect()
    }

    /// Complex row at a single frequency, interpolated linearly between grid points.
    pub fn row_at(&self, omega: f64) -> Result<Vec<Complex64>> {
        let g = &self.grid;
        if g.is_empty() || omega < g[0] || omega > g[g.len() - 1] {
            return Err(Error::validation(format!("frequency {omega} outside operator grid")));
        }
        let j = g.partition_point(|x| *x <= omega).min(g.len() - 1).max(1);
        if g.len() == 1 {
            return Ok(self.rows.row(0).iter().cloned().collect());
        }
        let t = (omega - g[j - 1]) / (g[j] - g[j - 1]);
        Ok((0..self.n_components())
            .map(|k| self.rows[(j - 1, k)] * (1.0 - t) + self.rows[(j, k)] * t)
            .collect())
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.rows *= Complex64::new(factor, 0.0);
        self
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::validation("frequency grid is empty"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::validation("frequency grid must be strictly increasing"));
    }
    Ok(())
}

/// Builds ⟨⟨𝒫(ω)| over the [`LiouvilleBasis`] by summing the probe pathways:
/// ground-state bleach, stimulated emission back to the ground state, and
/// excited-state absorption into the two-exciton manifold.
pub fn build_operator(
    basis: &ExcitonBasis,
    rates: &RedfieldRates,
    grid: &[f64],
    pol: &Polarization,
) -> Result<PumpProbeOperator> {
    check_grid(grid)?;
    if rates.n() != basis.n() || rates.coherence_gamma_12.ncols() != basis.n_two() {
        return Err(Error::validation("rates do not belong to this exciton basis"));
    }
    let n = basis.n();
    let n2 = basis.n_two();
    let lb = LiouvilleBasis::new(n);
    let p_g: Vec<f64> = basis.dipoles_g_to_1.iter().map(|d| pol.probe.dot(d)).collect();
    let s_g: Vec<f64> = basis.dipoles_g_to_1.iter().map(|d| pol.signal.dot(d)).collect();
    let p_e: Vec<Vec<f64>> = basis
        .dipoles_1_to_2
        .iter()
        .map(|row| row.iter().map(|d| pol.probe.dot(d)).collect())
        .collect();
    let s_e: Vec<Vec<f64>> = basis
        .dipoles_1_to_2
        .iter()
        .map(|row| row.iter().map(|d| pol.signal.dot(d)).collect())
        .collect();
    let e1 = &basis.one_exciton_energies;
    let e2 = &basis.two_exciton_energies;

    let rows: Vec<Vec<Complex64>> = grid
        .par_iter()
        .map(|&w| {
            let g1: Vec<Complex64> = (0..n)
                .map(|a| causal_line_shape(rates.coherence_gamma_01[a], e1[a], w))
                .collect();
            let bleach: Complex64 = (0..n).map(|a| g1[a] * (p_g[a] * s_g[a])).sum();
            let mut m = vec![Complex64::new(0.0, 0.0); n * n];
            for b in 0..n {
                for f in 0..n2 {
                    let gp = causal_line_shape(rates.coherence_gamma_12[(b, f)], e2[f] - e1[b], w);
                    let sb = s_e[b][f];
                    if sb == 0.0 {
                        continue;
                    }
                    for a in 0..n {
                        m[a * n + b] += gp * (p_e[a][f] * sb);
                    }
                }
            }
            for a in 0..n {
                for b in 0..n {
                    m[a * n + b] -= g1[a] * (s_g[a] * p_g[b]);
                }
            }
            lb.elements()
                .iter()
                .map(|e| match *e {
                    BasisElement::Population(a) => I * (m[a * n + a] - bleach),
                    BasisElement::RealCoherence(a, b) => I * (m[a * n + b] + m[b * n + a]),
                    BasisElement::ImagCoherence(a, b) => I * I * (m[a * n + b] - m[b * n + a]),
                })
                .collect()
        })
        .collect();

    let mut out = PumpProbeOperator::zeros(grid.to_vec(), lb.labels());
    for (i, r) in rows.iter().enumerate() {
        for (k, v) in r.iter().enumerate() {
            out.rows[(i, k)] = *v;
        }
    }
    Ok(out)
}

/// Arithmetic mean of operators on a common grid.
pub fn average_operators(ops: &[PumpProbeOperator]) -> Result<PumpProbeOperator> {
    let first = ops
        .first()
        .ok_or_else(|| Error::validation("nothing to average"))?;
    let mut acc = first.rows.clone();
    for op in &ops[1..] {
        if op.grid != first.grid || op.labels != first.labels {
            return Err(Error::validation("operators are on mismatched grids or bases"));
        }
        acc += &op.rows;
    }
    acc /= Complex64::new(ops.len() as f64, 0.0);
    Ok(PumpProbeOperator {
        grid: first.grid.clone(),
        labels: first.labels.clone(),
        rows: acc,
    })
}

/// Mean of the xx, yy and zz configurations, which equals the isotropic
/// orientational average at the magic angle.
pub fn magic_angle_average(xx: &PumpProbeOperator, yy: &PumpProbeOperator, zz: &PumpProbeOperator) -> Result<PumpProbeOperator> {
    average_operators(&[xx.clone(), yy.clone(), zz.clone()])
}

/// Isotropically averaged operator of a single complex.
pub fn isotropic_operator(basis: &ExcitonBasis, rates: &RedfieldRates, grid: &[f64]) -> Result<PumpProbeOperator> {
    let [x, y, z] = Polarization::aligned();
    magic_angle_average(
        &build_operator(basis, rates, grid, &x)?,
        &build_operator(basis, rates, grid, &y)?,
        &build_operator(basis, rates, grid, &z)?,
    )
}

/// Unnormalized dimer excited state ½(r₀I + r₁σx + r₂σy + r₃σz) in the
/// {|α⟩, |β⟩} exciton basis, |α⟩ the upper exciton.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct BlochState {
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

impl BlochState {
    pub fn new(r0: f64, r1: f64, r2: f64, r3: f64) -> Self {
        Self { r0, r1, r2, r3 }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.r0, self.r1, self.r2, self.r3]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn vector_norm(&self) -> f64 {
        (self.r1 * self.r1 + self.r2 * self.r2 + self.r3 * self.r3).sqrt()
    }

    /// `(r₁, r₂, r₃) / r₀`.
    pub fn normalized(&self) -> [f64; 3] {
        [self.r1 / self.r0, self.r2 / self.r0, self.r3 / self.r0]
    }

    pub fn is_physical(&self, rel_tol: f64) -> bool {
        self.r0 > 0.0 && self.vector_norm() <= self.r0 * (1.0 + rel_tol)
    }

    /// 2×2 density matrix in the {α, β} basis.
    pub fn density_matrix(&self) -> Matrix2<Complex64> {
        let c = |x: f64, y: f64| Complex64::new(x, y);
        Matrix2::new(
            c(0.5 * (self.r0 + self.r3), 0.0),
            c(0.5 * self.r1, -0.5 * self.r2),
            c(0.5 * self.r1, 0.5 * self.r2),
            c(0.5 * (self.r0 - self.r3), 0.0),
        )
    }

    pub fn from_density_matrix(rho: &Matrix2<Complex64>) -> Self {
        let ab = 0.5 * (rho[(0, 1)] + rho[(1, 0)].conj());
        Self {
            r0: (rho[(0, 0)] + rho[(1, 1)]).re,
            r1: 2.0 * ab.re,
            r2: -2.0 * ab.im,
            r3: (rho[(0, 0)] - rho[(1, 1)]).re,
        }
    }
}

/// Maps between numeric dimer excitons (ascending energy, sign fixed by the
/// eigen-solver convention) and the closed-form vectors
/// |α⟩ = (cos θ, sin θ), |β⟩ = (−sin θ, cos θ).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DimerFrame {
    pub theta: f64,
    /// Numeric exciton index of |α⟩.
    pub alpha: usize,
    /// Numeric exciton index of |β⟩.
    pub beta: usize,
    sign_re: f64,
    sign_im: f64,
}

impl DimerFrame {
    pub fn new(basis: &ExcitonBasis) -> Result<Self> {
        let theta = basis
            .mixing_angle
            .ok_or_else(|| Error::validation("dimer frame needs a two-site basis"))?;
        let (c, s) = (theta.cos(), theta.sin());
        let u = &basis.rotation;
        let along_alpha = |col: usize| u[(0, col)] * c + u[(1, col)] * s;
        let alpha = if along_alpha(1).abs() >= along_alpha(0).abs() { 1 } else { 0 };
        let beta = 1 - alpha;
        let sign_alpha = along_alpha(alpha).signum();
        let sign_beta = (-u[(0, beta)] * s + u[(1, beta)] * c).signum();
        let sign_re = sign_alpha * sign_beta;
        // numeric ρ₀₁ is ρ_βα or ρ_αβ depending on which exciton is lower
        let sign_im = if alpha == 1 { sign_re } else { -sign_re };
        Ok(Self {
            theta,
            alpha,
            beta,
            sign_re,
            sign_im,
        })
    }

    /// Liouville coordinates (pop 0, pop 1, Re ρ₀₁, Im ρ₀₁) of a Bloch state.
    pub fn to_liouville(&self, r: &BlochState) -> [f64; 4] {
        let mut c = [0.0; 4];
        c[self.alpha] = 0.5 * (r.r0 + r.r3);
        c[self.beta] = 0.5 * (r.r0 - r.r3);
        c[2] = 0.5 * self.sign_re * r.r1;
        c[3] = 0.5 * self.sign_im * r.r2;
        c
    }

    pub fn from_liouville(&self, c: &[f64]) -> BlochState {
        BlochState::new(
            c[self.alpha] + c[self.beta],
            2.0 * self.sign_re * c[2],
            2.0 * self.sign_im * c[3],
            c[self.alpha] - c[self.beta],
        )
    }

    /// Numeric-basis 2×2 excited-state matrix of a Bloch state.
    pub fn exciton_matrix(&self, r: &BlochState) -> DMatrix<Complex64> {
        LiouvilleBasis::new(2).matrix(&self.to_liouville(r))
    }

    pub fn bloch_state(&self, rho: &DMatrix<Complex64>) -> BlochState {
        self.from_liouville(&LiouvilleBasis::new(2).coordinates(rho))
    }

    /// Re-expresses a two-exciton Liouville operator over (r₀, r₁, r₂, r₃).
    pub fn bloch_operator(&self, op: &PumpProbeOperator) -> Result<PumpProbeOperator> {
        if op.n_components() != 4 {
            return Err(Error::validation("Bloch operators need a dimer Liouville operator"));
        }
        let mut out = PumpProbeOperator::zeros(op.grid.clone(), bloch_labels());
        for i in 0..op.grid.len() {
            let r = op.rows.row(i);
            let (pa, pb) = (r[self.alpha], r[self.beta]);
            out.rows[(i, 0)] = 0.5 * (pa + pb);
            out.rows[(i, 1)] = 0.5 * self.sign_re * r[2];
            out.rows[(i, 2)] = 0.5 * self.sign_im * r[3];
            out.rows[(i, 3)] = 0.5 * (pa - pb);
        }
        Ok(out)
    }
}

pub fn bloch_labels() -> Vec<String> {
    ["r0", "r1", "r2", "r3"].iter().map(|s| s.to_string()).collect()
}

/// Line-shape factors of the dimer peaks on a grid: `g_*` for ground/one-exciton
/// coherences and `gp_*` for one/two-exciton coherences peaked at the same
/// frequency.
#[derive(Clone, Debug)]
pub struct DimerLineShapes {
    pub g_alpha: Vec<Complex64>,
    pub g_beta: Vec<Complex64>,
    pub gp_alpha: Vec<Complex64>,
    pub gp_beta: Vec<Complex64>,
}

impl DimerLineShapes {
    pub fn new(basis: &ExcitonBasis, rates: &RedfieldRates, grid: &[f64]) -> Result<Self> {
        if basis.n() != 2 {
            return Err(Error::validation("dimer line shapes need n = 2"));
        }
        let frame = DimerFrame::new(basis)?;
        let (alpha, beta) = (frame.alpha, frame.beta);
        let e = &basis.one_exciton_energies;
        let ef = basis.two_exciton_energies[0];
        let shape = |gamma: Complex64, w0: f64| -> Vec<Complex64> {
            grid.iter().map(|w| causal_line_shape(gamma, w0, *w)).collect()
        };
        Ok(Self {
            g_alpha: shape(rates.coherence_gamma_01[alpha], e[alpha]),
            g_beta: shape(rates.coherence_gamma_01[beta], e[beta]),
            // |f⟩⟨β| oscillates at ε_f − ε_β = ε_α
            gp_alpha: shape(rates.coherence_gamma_12[(beta, 0)], ef - e[beta]),
            gp_beta: shape(rates.coherence_gamma_12[(alpha, 0)], ef - e[alpha]),
        })
    }
}

/// Closed-form dimer covector over (r₀, r₁, r₂, r₃) for parallel probe and
/// signal polarization `axis`, scaled by i/2 to match [`build_operator`].
pub fn dimer_projector_analytic(
    basis: &ExcitonBasis,
    rates: &RedfieldRates,
    grid: &[f64],
    axis: &Vec3,
) -> Result<PumpProbeOperator> {
    check_grid(grid)?;
    let theta = basis
        .mixing_angle
        .ok_or_else(|| Error::validation("analytic projector needs a dimer"))?;
    let ls = DimerLineShapes::new(basis, rates, grid)?;
    // site dipoles recovered from the exciton dipoles, d = U μ
    let u = &basis.rotation;
    let mu = &basis.dipoles_g_to_1;
    let d1 = mu[0] * u[(0, 0)] + mu[1] * u[(0, 1)];
    let d2 = mu[0] * u[(1, 0)] + mu[1] * u[(1, 1)];
    let (m1, m2) = (axis.dot(&d1), axis.dot(&d2));
    let (c, s) = (theta.cos(), theta.sin());
    let mga = m1 * c + m2 * s;
    let mgb = -m1 * s + m2 * c;
    let maf = m1 * s + m2 * c;
    let mbf = m1 * c - m2 * s;

    let mut out = PumpProbeOperator::zeros(grid.to_vec(), bloch_labels());
    let half_i = 0.5 * I;
    for i in 0..grid.len() {
        let (fa, fb, fpa, fpb) = (ls.g_alpha[i], ls.g_beta[i], ls.gp_alpha[i], ls.gp_beta[i]);
        let row = [
            -3.0 * mga * mga * fa + mbf * mbf * fpa - 3.0 * mgb * mgb * fb + maf * maf * fpb,
            -mga * mgb * (fa + fb) + maf * mbf * (fpa + fpb),
            I * (mga * mgb * (fa - fb) - maf * mbf * (fpa - fpb)),
            -mga * mga * fa - mbf * mbf * fpa + mgb * mgb * fb + maf * maf * fpb,
        ];
        for (k, v) in row.iter().enumerate() {
            out.rows[(i, k)] = half_i * v;
        }
    }
    Ok(out)
}

/// Closed-form isotropic average of the dimer covector for |d₁|² = `d1_sq`,
/// dipole ratio `delta` and relative angle `phi`, on the same scale as
/// [`isotropic_operator`].
pub fn dimer_projector_isotropic(
    theta: f64,
    delta: f64,
    phi: f64,
    d1_sq: f64,
    shapes: &DimerLineShapes,
    grid: &[f64],
) -> PumpProbeOperator {
    let (c2, s2) = (theta.cos().powi(2), theta.sin().powi(2));
    let sin2t = (2.0 * theta).sin();
    let cos2t = (2.0 * theta).cos();
    let cphi = phi.cos();
    let a = c2 + delta * delta * s2;
    let b = s2 + delta * delta * c2;
    let h = 0.5 * (delta * delta - 1.0) * sin2t;
    let k = delta * cos2t * cphi;
    let x = delta * sin2t * cphi;
    let scale = 0.5 * I * (d1_sq / 3.0);

    let mut out = PumpProbeOperator::zeros(grid.to_vec(), bloch_labels());
    for i in 0..grid.len() {
        let (fa, fb, fpa, fpb) = (shapes.g_alpha[i], shapes.g_beta[i], shapes.gp_alpha[i], shapes.gp_beta[i]);
        let row = [
            a * (fpa - 3.0 * fa) + b * (fpb - 3.0 * fb) + x * (-fpa + fpb - 3.0 * fa + 3.0 * fb),
            -h * (fpa + fpb + fa + fb) + k * (fpa + fpb - fa - fb),
            I * (h * (fpa - fpb + fa - fb) + k * (-fpa + fpb + fa - fb)),
            -a * (fpa + fa) + b * (fpb + fb) + x * (fpa + fpb - fa - fb),
        ];
        for (j, v) in row.iter().enumerate() {
            out.rows[(i, j)] = scale * v;
        }
    }
    out
}

/// Absorptive and dispersive parts of one basis element's covector entry.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeciesSpectrum {
    pub label: String,
    /// Im R; negative-going for ground-state bleach.
    pub absorptive: Vec<f64>,
    /// Re R.
    pub dispersive: Vec<f64>,
}

impl SpeciesSpectrum {
    pub fn max_abs_absorptive(&self) -> f64 {
        self.absorptive.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn species_spectra(op: &PumpProbeOperator) -> Vec<SpeciesSpectrum> {
    (0..op.n_components())
        .map(|k| SpeciesSpectrum {
            label: op.labels[k].clone(),
            absorptive: op.rows.column(k).iter().map(|v| v.im).collect(),
            dispersive: op.rows.column(k).iter().map(|v| v.re).collect(),
        })
        .collect()
}
