//! General-form Tikhonov regularization and regularization-weight selection.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type CMat = DMatrix<Complex64>;
type CVec = DVector<Complex64>;

/// Smallest regularization weight any selector may return.
pub const LAMBDA_FLOOR: f64 = 5e-11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Penalty {
    #[serde(rename = "I")]
    Identity,
    #[serde(rename = "D1")]
    FirstDifference,
    #[default]
    #[serde(rename = "D2")]
    SecondDifference,
}

impl Penalty {
    /// I (n×n), D₁ ((n−1)×n, x_k − x_{k−1}) or D₂ ((n−2)×n, x_{k+1} − 2x_k + x_{k−1}).
    pub fn matrix(&self, n: usize) -> DMatrix<f64> {
        match self {
            Penalty::Identity => DMatrix::identity(n, n),
            Penalty::FirstDifference => {
                let rows = n.saturating_sub(1);
                DMatrix::from_fn(rows, n, |i, j| {
                    if j == i + 1 {
                        1.0
                    } else if j == i {
                        -1.0
                    } else {
                        0.0
                    }
                })
            }
            Penalty::SecondDifference => {
                let rows = n.saturating_sub(2);
                DMatrix::from_fn(rows, n, |i, j| {
                    if j == i + 1 {
                        -2.0
                    } else if j == i || j == i + 2 {
                        1.0
                    } else {
                        0.0
                    }
                })
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Penalty::Identity => "I",
            Penalty::FirstDifference => "D1",
            Penalty::SecondDifference => "D2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "I" | "i" | "identity" => Ok(Penalty::Identity),
            "D1" | "d1" => Ok(Penalty::FirstDifference),
            "D2" | "d2" => Ok(Penalty::SecondDifference),
            other => Err(Error::Config(format!("unknown penalty `{other}` (expected I, D1 or D2)"))),
        }
    }
}

/// b = A x + ε with penalty L and weight λ.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularizedProblem {
    pub operator: CMat,
    pub data: CVec,
    pub penalty: Penalty,
    pub reg_weight: f64,
}

impl RegularizedProblem {
    pub fn new(operator: CMat, data: CVec, penalty: Penalty, reg_weight: f64) -> Result<Self> {
        if operator.nrows() != data.len() {
            return Err(Error::validation(format!(
                "operator has {} rows but data has {} entries",
                operator.nrows(),
                data.len()
            )));
        }
        if operator.ncols() == 0 {
            return Err(Error::validation("operator has no columns"));
        }
        if !(reg_weight >= 0.0) {
            return Err(Error::validation("regularization weight must be non-negative"));
        }
        Ok(Self {
            operator,
            data,
            penalty,
            reg_weight,
        })
    }

    pub fn with_weight(&self, reg_weight: f64) -> Self {
        Self {
            reg_weight,
            ..self.clone()
        }
    }

    fn stacked(&self) -> CMat {
        let (m, n) = self.operator.shape();
        let l = self.penalty.matrix(n);
        let p = l.nrows();
        let mut s = CMat::zeros(m + p, n);
        s.rows_mut(0, m).copy_from(&self.operator);
        for i in 0..p {
            for j in 0..n {
                s[(m + i, j)] = Complex64::new(self.reg_weight * l[(i, j)], 0.0);
            }
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TikhonovSolution {
    pub x: CVec,
    /// Set when the stacked operator is numerically rank deficient and the
    /// minimum-norm least-squares solution was returned.
    pub rank_deficient: bool,
}

/// x̂ = [A; λL]⁺ [b; 0], through the SVD of the stacked operator.
pub fn tikhonov_solve(p: &RegularizedProblem) -> Result<TikhonovSolution> {
    let s = p.stacked();
    let (rows, n) = s.shape();
    let mut rhs = CVec::zeros(rows);
    rhs.rows_mut(0, p.data.len()).copy_from(&p.data);
    let svd = s.svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| Error::Numerical("SVD failed to return U".into()))?;
    let vt = svd.v_t.as_ref().ok_or_else(|| Error::Numerical("SVD failed to return V".into()))?;
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = smax * rows.max(n) as f64 * f64::EPSILON;
    let mut x = CVec::zeros(n);
    let mut rank = 0;
    for (k, &sv) in svd.singular_values.iter().enumerate() {
        if sv > tol {
            rank += 1;
            let coef = u.column(k).dotc(&rhs) / sv;
            x += vt.row(k).adjoint() * coef;
        }
    }
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Numerical("Tikhonov solution is not finite".into()));
    }
    Ok(TikhonovSolution {
        x,
        rank_deficient: rank < n,
    })
}

/// λ-independent factorization of an (A, L) pair. With [A; L] = [Q_A; Q_L]R
/// and Q_A = U C Wᴴ, every Tikhonov solution is
/// x̂(λ) = R⁻¹W · diag(c/(c² + λ²(1−c²))) · Uᴴb,
/// so each new λ or data vector costs one small matrix-vector product.
#[derive(Clone, Debug)]
pub struct TikhonovFactorization {
    m: usize,
    u: CMat,
    c: Vec<f64>,
    basis: CMat,
}

/// Data projected onto a factorization.
#[derive(Clone, Debug)]
pub struct Projection {
    pub beta: CVec,
    /// ‖b‖² − ‖Uᴴb‖², the part of the data no solution can fit.
    pub outside: f64,
}

impl TikhonovFactorization {
    pub fn new(operator: &CMat, penalty: Penalty) -> Result<Self> {
        let (m, n) = operator.shape();
        if n == 0 || m == 0 {
            return Err(Error::validation("empty operator"));
        }
        let l = penalty.matrix(n);
        let p = l.nrows();
        if m + p < n {
            return Err(Error::validation("stacked operator has fewer rows than unknowns"));
        }
        let mut s = CMat::zeros(m + p, n);
        s.rows_mut(0, m).copy_from(operator);
        for i in 0..p {
            for j in 0..n {
                s[(m + i, j)] = Complex64::new(l[(i, j)], 0.0);
            }
        }
        let qr = s.qr();
        let q = qr.q();
        let r = qr.r();
        let rmax = r.diagonal().iter().map(|v| v.norm()).fold(0.0, f64::max);
        if r.diagonal().iter().any(|v| v.norm() <= rmax * 1e-13) {
            return Err(Error::Numerical("operator and penalty share a null space".into()));
        }
        let qa = q.rows(0, m).into_owned();
        let svd = qa.svd(true, true);
        let u = svd.u.ok_or_else(|| Error::Numerical("SVD failed to return U".into()))?;
        let w = svd
            .v_t
            .ok_or_else(|| Error::Numerical("SVD failed to return V".into()))?
            .adjoint();
        let c: Vec<f64> = svd.singular_values.iter().map(|v| v.min(1.0)).collect();
        let basis = r
            .solve_upper_triangular(&w)
            .ok_or_else(|| Error::Numerical("triangular factor is singular".into()))?;
        Ok(Self { m, u, c, basis })
    }

    pub fn n_data(&self) -> usize {
        self.m
    }

    pub fn n_unknowns(&self) -> usize {
        self.basis.nrows()
    }

    /// Generalized singular values c/√(1−c²), largest first.
    pub fn generalized_singular_values(&self) -> Vec<f64> {
        self.c.iter().map(|c| c / (1.0 - c * c).max(0.0).sqrt()).collect()
    }

    pub fn project(&self, b: &CVec) -> Result<Projection> {
        if b.len() != self.m {
            return Err(Error::validation(format!("data has {} entries, operator {} rows", b.len(), self.m)));
        }
        let beta = self.u.adjoint() * b;
        let outside = if self.u.ncols() >= self.m {
            0.0
        } else {
            (b.norm_squared() - beta.norm_squared()).max(0.0)
        };
        Ok(Projection { beta, outside })
    }

    /// Fraction φ_k = c²/(c² + λ²(1−c²)) of each data component kept in the fit.
    pub fn filter_factors(&self, lambda: f64) -> Vec<f64> {
        let l2 = lambda * lambda;
        self.c
            .iter()
            .map(|&c| {
                let c2 = c * c;
                let d = c2 + l2 * (1.0 - c2);
                if d > 0.0 {
                    c2 / d
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn solve(&self, proj: &Projection, lambda: f64) -> CVec {
        let l2 = lambda * lambda;
        let coef = CVec::from_iterator(
            self.c.len(),
            self.c.iter().zip(proj.beta.iter()).map(|(&c, b)| {
                let c2 = c * c;
                let d = c2 + l2 * (1.0 - c2);
                if d > 0.0 {
                    b * (c / d)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }),
        );
        &self.basis * coef
    }

    /// 1 − φ_k, evaluated without cancellation.
    fn filter_complements(&self, lambda: f64) -> Vec<f64> {
        let l2 = lambda * lambda;
        self.c
            .iter()
            .map(|&c| {
                let c2 = c * c;
                let d = c2 + l2 * (1.0 - c2);
                if d > 0.0 {
                    l2 * (1.0 - c2) / d
                } else {
                    1.0
                }
            })
            .collect()
    }

    pub fn residual_norm_sq(&self, proj: &Projection, lambda: f64) -> f64 {
        self.filter_complements(lambda)
            .iter()
            .zip(proj.beta.iter())
            .map(|(f, b)| f * f * b.norm_sqr())
            .sum::<f64>()
            + proj.outside
    }

    /// A x̂(λ) − b.
    pub fn residual(&self, b: &CVec, proj: &Projection, lambda: f64) -> CVec {
        let f = self.filter_factors(lambda);
        let fitted = CVec::from_iterator(f.len(), f.iter().zip(proj.beta.iter()).map(|(f, b)| b * *f));
        &self.u * fitted - b
    }

    pub fn gcv(&self, proj: &Projection, lambda: f64) -> f64 {
        let trace = (self.m - self.c.len()) as f64 + self.filter_complements(lambda).iter().sum::<f64>();
        if trace <= 0.0 {
            return f64::INFINITY;
        }
        self.residual_norm_sq(proj, lambda) / (trace * trace)
    }

    pub fn ncp(&self, b: &CVec, proj: &Projection, lambda: f64) -> f64 {
        ncp_distance(&self.residual(b, proj, lambda))
    }
}

/// Distance of the cumulative periodogram of the real and imaginary parts of
/// `r` from the straight line of white noise, summed over both channels.
pub fn ncp_distance(r: &CVec) -> f64 {
    let m = r.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    let mut total = 0.0;
    for channel in 0..2 {
        let mut buf: Vec<Complex64> = r
            .iter()
            .map(|z| Complex64::new(if channel == 0 { z.re } else { z.im }, 0.0))
            .collect();
        fft.process(&mut buf);
        let q = m / 2;
        let power: Vec<f64> = buf[1..=q].iter().map(|z| z.norm_sqr()).collect();
        let sum: f64 = power.iter().sum();
        if !(sum > 0.0) {
            continue;
        }
        let mut acc = 0.0;
        let mut d2 = 0.0;
        for (k, p) in power.iter().enumerate() {
            acc += p;
            let white = (k + 1) as f64 / q as f64;
            d2 += (acc / sum - white).powi(2);
        }
        total += d2.sqrt();
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorMethod {
    Gcv,
    Ncp,
    Fixed,
    /// Minimizes the true error; needs the exact solution (benchmarks only).
    ExactOracle,
}

impl SelectorMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gcv" => Ok(Self::Gcv),
            "ncp" => Ok(Self::Ncp),
            "fixed" => Ok(Self::Fixed),
            "oracle" | "exact" | "exact-oracle" => Ok(Self::ExactOracle),
            other => Err(Error::Config(format!("unknown selector `{other}`"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Gcv => "gcv",
            Self::Ncp => "ncp",
            Self::Fixed => "fixed",
            Self::ExactOracle => "oracle",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorConfig {
    pub method: SelectorMethod,
    pub lambda_floor: f64,
    pub lambda_max: f64,
    pub initial: f64,
    /// Initial simplex width in log₁₀ λ.
    pub initial_step: f64,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Stop once the simplex spans less than this relative change in λ.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Weight used by `Fixed`.
    pub fixed_lambda: f64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            method: SelectorMethod::Gcv,
            lambda_floor: LAMBDA_FLOOR,
            lambda_max: 1e3,
            initial: 1.0,
            initial_step: 0.5,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            rel_tol: 1e-3,
            max_iter: 100,
            fixed_lambda: 1.0,
        }
    }
}

impl SelectorConfig {
    pub fn with_method(method: SelectorMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn fixed(lambda: f64) -> Self {
        Self {
            method: SelectorMethod::Fixed,
            fixed_lambda: lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_floor > 0.0
            && self.lambda_max > self.lambda_floor
            && self.initial > 0.0
            && self.initial_step > 0.0
            && self.reflection > 0.0
            && self.expansion > 1.0
            && self.contraction > 0.0
            && self.contraction < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.rel_tol > 0.0
            && self.max_iter > 0
            && self.fixed_lambda >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("selector settings out of range".into()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub lambda: f64,
    pub score: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Downhill simplex in one dimension over log₁₀ λ, with every candidate
/// clamped to [floor, max].
pub fn minimize_log_lambda(score: impl Fn(f64) -> f64, cfg: &SelectorConfig) -> Selection {
    let lo = cfg.lambda_floor.log10();
    let hi = cfg.lambda_max.log10();
    let clamp = |u: f64| u.clamp(lo, hi);
    let f = |u: f64| {
        let s = score(10f64.powf(u));
        if s.is_nan() {
            f64::INFINITY
        } else {
            s
        }
    };
    let u0 = clamp(cfg.initial.log10());
    let mut u1 = clamp(u0 + cfg.initial_step);
    if u1 == u0 {
        u1 = clamp(u0 - cfg.initial_step);
    }
    let mut a = (u0, f(u0));
    let mut b = (u1, f(u1));
    let tol = (1.0 + cfg.rel_tol).log10();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        if b.1 < a.1 {
            std::mem::swap(&mut a, &mut b);
        }
        if (a.0 - b.0).abs() < tol {
            converged = true;
            break;
        }
        iterations += 1;
        let ur = clamp(a.0 + cfg.reflection * (a.0 - b.0));
        let r = (ur, f(ur));
        if r.1 < a.1 {
            let ue = clamp(a.0 + cfg.expansion * (a.0 - b.0));
            let e = (ue, f(ue));
            b = if e.1 < r.1 { e } else { r };
        } else if r.1 < b.1 {
            b = r;
        } else {
            let uc = a.0 + cfg.contraction * (b.0 - a.0);
            let c = (uc, f(uc));
            b = if c.1 < b.1 {
                c
            } else {
                let us = a.0 + cfg.shrink * (b.0 - a.0);
                (us, f(us))
            };
        }
    }
    if b.1 < a.1 {
        std::mem::swap(&mut a, &mut b);
    }
    Selection {
        lambda: 10f64.powf(a.0).max(cfg.lambda_floor),
        score: a.1,
        iterations,
        converged,
    }
}

/// Known solution for the exact oracle; only components in `scored` count.
#[derive(Clone, Debug)]
pub struct OracleTarget<'a> {
    pub x: &'a CVec,
    pub scored: Range<usize>,
}

impl<'a> OracleTarget<'a> {
    pub fn full(x: &'a CVec) -> Self {
        Self { x, scored: 0..x.len() }
    }

    pub fn window(x: &'a CVec, scored: Range<usize>) -> Self {
        Self { x, scored }
    }

    fn error(&self, estimate: &CVec) -> f64 {
        self.scored.clone().map(|j| (estimate[j] - self.x[j]).norm_sqr()).sum()
    }
}

/// Picks λ for a factorized problem. `truth` is required by the exact oracle.
pub fn select_lambda_factored(
    fact: &TikhonovFactorization,
    b: &CVec,
    cfg: &SelectorConfig,
    truth: Option<&OracleTarget>,
) -> Result<Selection> {
    cfg.validate()?;
    let proj = fact.project(b)?;
    match cfg.method {
        SelectorMethod::Fixed => {
            let lambda = cfg.fixed_lambda.max(cfg.lambda_floor);
            Ok(Selection {
                lambda,
                score: fact.residual_norm_sq(&proj, lambda),
                iterations: 0,
                converged: true,
            })
        }
        SelectorMethod::Gcv => Ok(minimize_log_lambda(|l| fact.gcv(&proj, l), cfg)),
        SelectorMethod::Ncp => {
            if b.len() < 8 {
                return Err(Error::validation("NCP needs at least 8 residual samples"));
            }
            Ok(minimize_log_lambda(|l| fact.ncp(b, &proj, l), cfg))
        }
        SelectorMethod::ExactOracle => {
            let t = truth.ok_or_else(|| Error::validation("exact-oracle selection needs the true solution"))?;
            if t.x.len() != fact.n_unknowns() || t.scored.end > t.x.len() || t.scored.is_empty() {
                return Err(Error::validation("true solution does not match the unknowns"));
            }
            let score = |l: f64| t.error(&fact.solve(&proj, l));
            // The error curve can be multimodal; start the simplex from the best
            // point of a coarse scan.
            let (lo, hi) = (cfg.lambda_floor.log10(), cfg.lambda_max.log10());
            let start = (0..=40)
                .map(|k| lo + (hi - lo) * k as f64 / 40.0)
                .min_by(|a, b| score(10f64.powf(*a)).total_cmp(&score(10f64.powf(*b))))
                .unwrap_or(0.0);
            let local = SelectorConfig {
                initial: 10f64.powf(start),
                initial_step: (hi - lo) / 80.0,
                ..cfg.clone()
            };
            Ok(minimize_log_lambda(score, &local))
        }
    }
}

pub fn gcv_score(p: &RegularizedProblem, lambda: f64) -> Result<f64> {
    let fact = TikhonovFactorization::new(&p.operator, p.penalty)?;
    let proj = fact.project(&p.data)?;
    Ok(fact.gcv(&proj, lambda))
}

pub fn ncp_score(p: &RegularizedProblem, lambda: f64) -> Result<f64> {
    if p.data.len() < 8 {
        return Err(Error::validation("NCP needs at least 8 residual samples"));
    }
    let fact = TikhonovFactorization::new(&p.operator, p.penalty)?;
    let proj = fact.project(&p.data)?;
    Ok(fact.ncp(&p.data, &proj, lambda))
}

pub fn select_lambda(p: &RegularizedProblem, cfg: &SelectorConfig, truth: Option<&OracleTarget>) -> Result<Selection> {
    let fact = TikhonovFactorization::new(&p.operator, p.penalty)?;
    select_lambda_factored(&fact, &p.data, cfg, truth)
}

/// Banded Toeplitz matrix with `a[(i, j)] = kernel(j − i − offset)`.
pub fn toeplitz(rows: usize, cols: usize, offset: isize, kernel: impl Fn(isize) -> Complex64) -> CMat {
    CMat::from_fn(rows, cols, |i, j| kernel(j as isize - i as isize - offset))
}
