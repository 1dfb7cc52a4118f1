//! Circle-criterion certificates: loop transformations, strict positive
//! realness on scaled circles, rate bisection, and sector sampling.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::par::ExecPolicy;
use crate::synthesis::{RateBudget, SynthesisError};
use crate::transfer::{TransferError, TransferFunction, TransferMatrix};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CertError {
    #[error("loop transformation is singular")]
    SingularTransform,
    #[error("not strictly positive real even at gamma = 1")]
    Uncertifiable,
    #[error("invalid SPR configuration: {0}")]
    InvalidConfig(String),
    #[error("gamma = {0} outside (0, 1]")]
    InvalidGamma(f64),
    #[error("invalid sector [{k1}, {k2}]")]
    InvalidSector { k1: f64, k2: f64 },
    #[error("w grid must be nonempty with nonzero entries")]
    InvalidWGrid,
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
}

pub type Result<T> = std::result::Result<T, CertError>;

/// Grid density and Hermitian-part floor for sampled SPR checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SPRConfig {
    pub grid_points: usize,
    pub epsilon: f64,
}

impl Default for SPRConfig {
    fn default() -> Self {
        SPRConfig {
            grid_points: 4096,
            epsilon: 1e-9,
        }
    }
}

impl SPRConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 64 {
            return Err(CertError::InvalidConfig(format!(
                "grid_points = {} < 64",
                self.grid_points
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(CertError::InvalidConfig(format!(
                "epsilon = {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// `[k1, k2]` with `k2 = +inf` allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorBound {
    k1: f64,
    k2: f64,
}

impl SectorBound {
    pub fn new(k1: f64, k2: f64) -> Result<Self> {
        if !(k1 >= 0.0 && k1.is_finite() && k2 > k1) {
            return Err(CertError::InvalidSector { k1, k2 });
        }
        Ok(SectorBound { k1, k2 })
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }
}

fn singular_guard(
    t: std::result::Result<TransferFunction, TransferError>,
) -> Result<TransferFunction> {
    match t {
        Err(TransferError::ZeroDenominator) => Err(CertError::SingularTransform),
        Err(TransferError::SingularLoop) => Err(CertError::SingularTransform),
        other => Ok(other?.reduce()),
    }
}

/// `Ψ = (1 + ℓG)/(1 + μG)`. For `ℓ = ∞` the positively rescaled limit
/// `Ψ = G/(1 + μG)` is returned; positive realness is unaffected.
pub fn loop_transform(g: &TransferFunction, budget: &RateBudget) -> Result<TransferFunction> {
    let (n, d) = (g.num(), g.den());
    let lower = d + &n.scale(budget.mu());
    if lower.is_zero() {
        return Err(CertError::SingularTransform);
    }
    let upper = match budget.finite_ell() {
        Ok(ell) => d + &n.scale(ell),
        Err(_) => n.clone(),
    };
    singular_guard(TransferFunction::new(upper, lower))
}

/// `G = (Ψ − 1)/(ℓ − μΨ)`, or `Ψ/(1 − μΨ)` when `ℓ = ∞`.
pub fn inverse_loop_transform(
    psi: &TransferFunction,
    budget: &RateBudget,
) -> Result<TransferFunction> {
    let (a, b) = (psi.num(), psi.den());
    let mu = budget.mu();
    let (upper, lower) = match budget.finite_ell() {
        Ok(ell) => (a - b, &b.scale(ell) - &a.scale(mu)),
        Err(_) => (a.clone(), b - &a.scale(mu)),
    };
    if lower.is_zero() {
        return Err(CertError::SingularTransform);
    }
    singular_guard(TransferFunction::new(upper, lower))
}

fn split_constants(
    budget: &RateBudget,
) -> Result<(TransferMatrix, TransferMatrix, TransferMatrix)> {
    let ell = budget.finite_ell()?;
    Ok((
        TransferMatrix::diagonal(&[1.0, 0.0]),
        TransferMatrix::diagonal(&[ell, 1.0]),
        TransferMatrix::diagonal(&[budget.mu(), 0.0]),
    ))
}

fn singular_matrix(e: TransferError) -> CertError {
    match e {
        TransferError::Singular | TransferError::ZeroDenominator => CertError::SingularTransform,
        other => other.into(),
    }
}

/// `Ψ = (E + LG)(I + MG)⁻¹` with `E = diag(1,0)`, `L = diag(ℓ,1)`,
/// `M = diag(μ,0)`.
pub fn loop_transform_split(g: &TransferMatrix, budget: &RateBudget) -> Result<TransferMatrix> {
    let (e, l, m) = split_constants(budget)?;
    let upper = e.try_add(&l.try_mul(g)?)?;
    let lower = TransferMatrix::identity(2).try_add(&m.try_mul(g)?)?;
    let inv = lower.inverse().map_err(singular_matrix)?;
    Ok(upper.try_mul(&inv)?.map(TransferFunction::reduce))
}

/// `G = (L − ΨM)⁻¹(Ψ − E)`.
pub fn inverse_loop_transform_split(
    psi: &TransferMatrix,
    budget: &RateBudget,
) -> Result<TransferMatrix> {
    let (e, l, m) = split_constants(budget)?;
    let left = l.try_sub(&psi.try_mul(&m)?)?;
    let inv = left.inverse().map_err(singular_matrix)?;
    Ok(inv
        .try_mul(&psi.try_sub(&e)?)?
        .map(TransferFunction::reduce))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(CertError::InvalidGamma(gamma));
    }
    Ok(())
}

/// Minimum of `value(θ)` over the grid, refined once by doubling when it
/// lands within 10× of `threshold`. Returns whether the threshold holds.
fn grid_holds<F>(cfg: &SPRConfig, threshold: f64, value: F) -> bool
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    let sweep =
        |n: usize| ExecPolicy::default().min_range(n, |k| value(2.0 * PI * k as f64 / n as f64));
    let v = sweep(cfg.grid_points);
    if !(v >= threshold) {
        return false;
    }
    if v < 10.0 * threshold {
        return sweep(2 * cfg.grid_points) >= threshold;
    }
    true
}

fn max_pole_modulus<'a>(entries: impl Iterator<Item = &'a TransferFunction>) -> f64 {
    entries
        .flat_map(|e| e.reduce().poles())
        .fold(0.0, |m, p| m.max(p.norm()))
}

/// Pole margin shared with [`TransferFunction::is_rho_stable`].
const POLE_MARGIN: f64 = 1e-12;

fn scalar_spr(psi: &TransferFunction, pole_max: f64, gamma: f64, cfg: &SPRConfig) -> bool {
    if !(pole_max < gamma - POLE_MARGIN) {
        return false;
    }
    grid_holds(cfg, cfg.epsilon / 2.0, |th| {
        psi.eval_unchecked(Complex64::from_polar(gamma, th)).re
    })
}

/// `Ψ(γz)` strictly positive real on the sampled unit circle: poles inside
/// `|z| < γ` and `Re Ψ(γe^{iθ}) ≥ ε/2`.
pub fn spr_check(psi: &TransferFunction, gamma: f64, cfg: &SPRConfig) -> Result<bool> {
    check_gamma(gamma)?;
    cfg.validate()?;
    let psi = psi.reduce();
    Ok(scalar_spr(
        &psi,
        max_pole_modulus(std::iter::once(&psi)),
        gamma,
        cfg,
    ))
}

fn hermitian_min_eig(m: &DMatrix<Complex64>) -> f64 {
    let h = m + m.adjoint();
    if h.nrows() == 2 {
        let a = h[(0, 0)].re;
        let d = h[(1, 1)].re;
        let b = h[(0, 1)].norm();
        return 0.5 * (a + d) - (0.25 * (a - d) * (a - d) + b * b).sqrt();
    }
    h.symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(*v))
}

fn matrix_spr(psi: &TransferMatrix, pole_max: f64, gamma: f64, cfg: &SPRConfig) -> bool {
    if !(pole_max < gamma - POLE_MARGIN) {
        return false;
    }
    grid_holds(cfg, cfg.epsilon, |th| {
        let z = Complex64::from_polar(gamma, th);
        let m = DMatrix::from_fn(psi.rows(), psi.cols(), |i, j| {
            psi.get(i, j).eval_unchecked(z)
        });
        hermitian_min_eig(&m)
    })
}

/// Matrix version: poles inside `|z| < γ` and `λ_min(Ψ + Ψᴴ) ≥ ε` on the
/// sampled circle `|z| = γ`.
pub fn spr_check_matrix(psi: &TransferMatrix, gamma: f64, cfg: &SPRConfig) -> Result<bool> {
    check_gamma(gamma)?;
    cfg.validate()?;
    if psi.rows() != psi.cols() {
        return Err(TransferError::DimensionMismatch("SPR needs a square matrix".into()).into());
    }
    let psi = psi.map(TransferFunction::reduce);
    Ok(matrix_spr(
        &psi,
        max_pole_modulus(psi.entries().iter()),
        gamma,
        cfg,
    ))
}

const GAMMA_SAMPLES: usize = 32;
const BISECTION_TOL: f64 = 1e-4;

/// Samples of `(ρ, 1]`, logarithmically dense towards `ρ`.
fn gamma_samples(rho: f64) -> impl Iterator<Item = f64> {
    (0..GAMMA_SAMPLES).rev().map(move |k| {
        let s = -6.0 * (1.0 - k as f64 / (GAMMA_SAMPLES - 1) as f64);
        rho + (1.0 - rho) * 10f64.powf(s)
    })
}

/// Smallest `ρ` with `holds(γ)` for every sample in `(ρ, 1)`.
fn bisect_rate(holds: impl Fn(f64) -> bool) -> Result<f64> {
    if !holds(1.0) {
        return Err(CertError::Uncertifiable);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if gamma_samples(mid).all(&holds) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Circle-criterion rate of the Lur'e loop of `G` against every gradient
/// difference sector-bounded in `[μ, ℓ]`.
pub fn rate_certificate(g: &TransferFunction, budget: &RateBudget, cfg: &SPRConfig) -> Result<f64> {
    cfg.validate()?;
    let psi = loop_transform(g, budget)?;
    let pm = max_pole_modulus(std::iter::once(&psi));
    bisect_rate(|gamma| scalar_spr(&psi, pm, gamma, cfg))
}

/// `diag(w,1)·Ψ·diag(1/w,1)`
pub fn scale_psi(psi: &TransferMatrix, w: f64) -> TransferMatrix {
    let mut out = psi.clone();
    out.set(0, 1, psi.get(0, 1).scale(w));
    out.set(1, 0, psi.get(1, 0).scale(1.0 / w));
    out
}

/// Fifty logarithmically spaced scalings in `[1e-3, 1e3]`.
pub fn default_w_grid() -> Vec<f64> {
    (0..50)
        .map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 49.0))
        .collect()
}

fn check_w_grid(w_grid: &[f64]) -> Result<()> {
    if w_grid.is_empty() || w_grid.iter().any(|w| *w == 0.0 || !w.is_finite()) {
        return Err(CertError::InvalidWGrid);
    }
    Ok(())
}

/// First `w` in the grid for which the scaled 2×2 `Ψ(γz)` is SPR.
pub fn scaled_spr_search(
    psi: &TransferMatrix,
    gamma: f64,
    w_grid: &[f64],
    cfg: &SPRConfig,
) -> Result<Option<f64>> {
    check_gamma(gamma)?;
    check_w_grid(w_grid)?;
    cfg.validate()?;
    let psi = psi.map(TransferFunction::reduce);
    let pm = max_pole_modulus(psi.entries().iter());
    Ok(w_grid
        .iter()
        .copied()
        .find(|w| matrix_spr(&scale_psi(&psi, *w), pm, gamma, cfg)))
}

/// Rate certificate for a 2×2 splitting algorithm: smallest `ρ` such that
/// one grid scaling `w` makes `Ψ(γz)` SPR for every sampled `γ ∈ (ρ, 1)`.
pub fn rate_certificate_split(
    g: &TransferMatrix,
    budget: &RateBudget,
    w_grid: &[f64],
    cfg: &SPRConfig,
) -> Result<(f64, f64)> {
    check_w_grid(w_grid)?;
    cfg.validate()?;
    let psi = loop_transform_split(g, budget)?;
    let pm = max_pole_modulus(psi.entries().iter());
    let mut best: Option<(f64, f64)> = None;
    for &w in w_grid {
        let scaled = scale_psi(&psi, w);
        let holds = |gamma: f64| matrix_spr(&scaled, pm, gamma, cfg);
        // skip scalings that cannot beat the incumbent
        if let Some((r, _)) = best {
            if !gamma_samples(r - BISECTION_TOL).all(holds) {
                continue;
            }
        }
        if let Ok(r) = bisect_rate(holds) {
            if best.is_none_or(|b| r < b.0) {
                best = Some((r, w));
            }
        }
    }
    best.ok_or(CertError::Uncertifiable)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaratheodoryPick {
    pub lambda: Matrix4<f64>,
    pub min_eigenvalue: f64,
    pub feasible: bool,
}

/// Carathéodory–Pick matrix for the interpolation data `P(1) = P1`,
/// `P(∞) = Pinf` on the circle of radius `γ`; feasible iff positive
/// definite (relative floor 1e-10).
pub fn caratheodory_pick(
    p1: &Matrix2<f64>,
    pinf: &Matrix2<f64>,
    gamma: f64,
) -> Result<CaratheodoryPick> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(CertError::InvalidGamma(gamma));
    }
    let mut l = Matrix4::zeros();
    l.fixed_view_mut::<2, 2>(0, 0)
        .copy_from(&((p1 + p1.transpose()) / (1.0 - gamma * gamma)));
    l.fixed_view_mut::<2, 2>(0, 2)
        .copy_from(&(p1 + pinf.transpose()));
    l.fixed_view_mut::<2, 2>(2, 0)
        .copy_from(&(p1.transpose() + pinf));
    l.fixed_view_mut::<2, 2>(2, 2)
        .copy_from(&(pinf + pinf.transpose()));
    let eig = l.symmetric_eigenvalues();
    let min = eig.min();
    let max = eig.max();
    Ok(CaratheodoryPick {
        lambda: l,
        min_eigenvalue: min,
        feasible: min > crate::gain_margin::PICK_REL * max.abs().max(1.0),
    })
}

const SECTOR_RADII: [f64; 6] = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];

/// Sampled check of `⟨φ(x) − k₁x, φ(x) − k₂x⟩ ≤ 0` (or `⟨φ(x) − k₁x, x⟩ ≥ 0`
/// for `k₂ = ∞`) over `samples` Gaussian directions at each of several radii.
pub fn verify_sector<F>(phi: F, bound: SectorBound, samples: usize, dim: usize, seed: u64) -> bool
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in SECTOR_RADII {
        for _ in 0..samples {
            let g: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            let norm = g.norm();
            if norm == 0.0 {
                continue;
            }
            let x = g * (r / norm);
            let y = phi(&x);
            let lo = &y - &x * bound.k1;
            let ok = if bound.k2.is_finite() {
                let hi = &y - &x * bound.k2;
                lo.dot(&hi) <= 1e-9 * lo.norm() * hi.norm()
            } else {
                lo.dot(&x) >= -1e-9 * lo.norm() * x.norm()
            };
            if !ok {
                return false;
            }
        }
    }
    true
}
