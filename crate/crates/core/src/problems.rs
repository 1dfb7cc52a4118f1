//! Test problems: quadratics, the asymmetric piecewise quadratic, the 1-D
//! sinusoidal sector example and ℓ1 composites, with counted gradients and
//! proximal operators.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProblemError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("spectrum [{lo}, {hi}] is outside [mu, ell]")]
    Spectrum { lo: f64, hi: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("inner prox solver hit the cap of {0} iterations")]
    InnerNotConverged(u64),
    #[error("prox step must be positive, got {0}")]
    BadStep(f64),
}

pub type Result<T> = std::result::Result<T, ProblemError>;

pub const INNER_CAP: u64 = 1_000_000;

/// Gradient call tally. Cloning starts a fresh count.
#[derive(Debug, Default)]
pub struct Counter(AtomicU64);

impl Counter {
    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

impl Clone for Counter {
    fn clone(&self) -> Self {
        Counter::default()
    }
}

/// A differentiable objective with known minimizer and slope bounds.
pub trait Smooth {
    fn dim(&self) -> usize;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn x_star(&self) -> &DVector<f64>;
    /// Slope bounds `[μ, ℓ]` of the gradient.
    fn bounds(&self) -> (f64, f64);
    fn grad_count(&self) -> u64;
    fn reset_count(&self);
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// Orthogonal matrix from the QR factors of a Gaussian matrix, with columns
/// flipped so that `R` has a positive diagonal.
pub fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn check_bounds(mu: f64, ell: f64) -> Result<()> {
    if !(mu > 0.0 && ell >= mu && ell.is_finite()) {
        return Err(ProblemError::Invalid(format!(
            "need 0 < mu <= ell < inf, got [{mu}, {ell}]"
        )));
    }
    Ok(())
}

/// `f(x) = ½xᵀQx − qᵀx`.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    pub q_mat: DMatrix<f64>,
    pub q: DVector<f64>,
    pub mu: f64,
    pub ell: f64,
    x_star: DVector<f64>,
    count: Counter,
}

impl QuadraticProblem {
    pub fn new(q_mat: DMatrix<f64>, q: DVector<f64>, mu: f64, ell: f64) -> Result<Self> {
        check_bounds(mu, ell)?;
        let d = q.len();
        if q_mat.nrows() != d || q_mat.ncols() != d {
            return Err(ProblemError::Invalid("Q and q dimensions differ".into()));
        }
        let sym = (&q_mat + q_mat.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        let tol = 1e-9 * ell.max(1.0);
        if lo < mu - tol || hi > ell + tol {
            return Err(ProblemError::Spectrum { lo, hi });
        }
        let chol = Cholesky::new(sym.clone()).ok_or(ProblemError::NotPositiveDefinite)?;
        let x_star = chol.solve(&q);
        Ok(QuadraticProblem {
            q_mat: sym,
            q,
            mu,
            ell,
            x_star,
            count: Counter::default(),
        })
    }

    /// Closed-form prox of `αf`; the factorization of `I + αQ` is reused by
    /// every call on the returned operator.
    pub fn prox_operator(&self, alpha: f64) -> Result<QuadraticProx> {
        if !(alpha > 0.0) {
            return Err(ProblemError::BadStep(alpha));
        }
        let m = DMatrix::identity(self.dim(), self.dim()) + &self.q_mat * alpha;
        let chol = Cholesky::new(m).ok_or(ProblemError::NotPositiveDefinite)?;
        Ok(QuadraticProx {
            chol,
            shift: &self.q * alpha,
        })
    }
}

pub struct QuadraticProx {
    chol: Cholesky<f64, Dyn>,
    shift: DVector<f64>,
}

impl QuadraticProx {
    /// `(I + αQ)⁻¹(x + αq)`
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(&(x + &self.shift))
    }
}

impl Smooth for QuadraticProblem {
    fn dim(&self) -> usize {
        self.q.len()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.count.bump();
        &self.q_mat * x - &self.q
    }

    fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }

    fn bounds(&self) -> (f64, f64) {
        (self.mu, self.ell)
    }

    fn grad_count(&self) -> u64 {
        self.count.get()
    }

    fn reset_count(&self) {
        self.count.reset()
    }
}

/// Random quadratic with `μ` and `ℓ` in the spectrum, the other eigenvalues
/// log-uniform in between, a Haar-like basis and Gaussian `q`.
pub fn random_quadratic(d: usize, mu: f64, ell: f64, seed: u64) -> Result<QuadraticProblem> {
    if d < 2 {
        return Err(ProblemError::Invalid("dimension must be at least 2".into()));
    }
    check_bounds(mu, ell)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = random_orthogonal(d, &mut rng);
    let mut eig = vec![mu, ell];
    let (lmu, lell) = (mu.ln(), ell.ln());
    eig.extend((2..d).map(|_| (lmu + (lell - lmu) * rng.random::<f64>()).exp()));
    let q = gaussian_vec(&mut rng, d);
    let q_mat = &v * DMatrix::from_diagonal(&DVector::from_vec(eig)) * v.transpose();
    QuadraticProblem::new(q_mat, q, mu, ell)
}

/// `h(x) = Σ φ(aᵢᵀx − bᵢ)` with `φ(ν) = ℓν²/2` for `ν ≥ 0`, `μν²/2`
/// otherwise, and `A = [a₁ … a_d]` orthogonal.
#[derive(Debug, Clone)]
pub struct PiecewiseQuadraticProblem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub mu: f64,
    pub ell: f64,
    x_star: DVector<f64>,
    count: Counter,
}

impl PiecewiseQuadraticProblem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, mu: f64, ell: f64) -> Result<Self> {
        check_bounds(mu, ell)?;
        let d = b.len();
        if a.nrows() != d || a.ncols() != d {
            return Err(ProblemError::Invalid("A and b dimensions differ".into()));
        }
        let err = (a.transpose() * &a - DMatrix::identity(d, d)).amax();
        if err > 1e-10 {
            return Err(ProblemError::Invalid(format!(
                "A is not orthogonal (error {err:e})"
            )));
        }
        let x_star = &a * &b;
        Ok(PiecewiseQuadraticProblem {
            a,
            b,
            mu,
            ell,
            x_star,
            count: Counter::default(),
        })
    }

    pub fn random(d: usize, mu: f64, ell: f64, seed: u64) -> Result<Self> {
        if d < 1 {
            return Err(ProblemError::Invalid("dimension must be positive".into()));
        }
        check_bounds(mu, ell)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_orthogonal(d, &mut rng);
        let b = gaussian_vec(&mut rng, d);
        Self::new(a, b, mu, ell)
    }

    pub fn phi_prime(&self, nu: f64) -> f64 {
        if nu >= 0.0 {
            self.ell * nu
        } else {
            self.mu * nu
        }
    }

    /// Gradient without touching the counter.
    fn raw_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let r = self.a.tr_mul(x) - &self.b;
        &self.a * r.map(|v| self.phi_prime(v))
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let r = self.a.tr_mul(x) - &self.b;
        r.iter().map(|v| 0.5 * self.phi_prime(*v) * v).sum()
    }
}

impl Smooth for PiecewiseQuadraticProblem {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.count.bump();
        self.raw_gradient(x)
    }

    fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }

    fn bounds(&self) -> (f64, f64) {
        (self.mu, self.ell)
    }

    fn grad_count(&self) -> u64 {
        self.count.get()
    }

    fn reset_count(&self) {
        self.count.reset()
    }
}

/// `f′(x) = ax + b|x|cos(x|x|)` with minimizer 0; the gradient difference is
/// sector-bounded in `[a − |b|, a + |b|]` but not slope-restricted.
#[derive(Debug, Clone)]
pub struct Sector1DProblem {
    pub a: f64,
    pub b: f64,
    x_star: DVector<f64>,
    count: Counter,
}

impl Sector1DProblem {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a > b.abs()) {
            return Err(ProblemError::Invalid(format!(
                "need a > |b|, got a = {a}, b = {b}"
            )));
        }
        Ok(Sector1DProblem {
            a,
            b,
            x_star: DVector::zeros(1),
            count: Counter::default(),
        })
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.a * x + self.b * x.abs() * (x * x.abs()).cos()
    }

    /// `Δ_f(e) = −f′(x* − e) = ae − b|e|cos(e|e|)`
    pub fn delta(&self, e: f64) -> f64 {
        self.a * e - self.b * e.abs() * (e * e.abs()).cos()
    }

    pub fn sector(&self) -> (f64, f64) {
        (self.a - self.b.abs(), self.a + self.b.abs())
    }
}

impl Smooth for Sector1DProblem {
    fn dim(&self) -> usize {
        1
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.count.bump();
        x.map(|v| self.derivative(v))
    }

    fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }

    fn bounds(&self) -> (f64, f64) {
        self.sector()
    }

    fn grad_count(&self) -> u64 {
        self.count.get()
    }

    fn reset_count(&self) {
        self.count.reset()
    }
}

/// `f = h + λ‖·‖₁` with `h` the piecewise quadratic.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    pub h: PiecewiseQuadraticProblem,
    pub lambda: f64,
    x_star: DVector<f64>,
}

impl CompositeProblem {
    pub fn new(h: PiecewiseQuadraticProblem, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ProblemError::Invalid(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let x_star = composite_minimizer(&h, lambda)?;
        Ok(CompositeProblem { h, lambda, x_star })
    }

    pub fn random(d: usize, mu: f64, ell: f64, lambda: f64, seed: u64) -> Result<Self> {
        Self::new(PiecewiseQuadraticProblem::random(d, mu, ell, seed)?, lambda)
    }

    pub fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }

    pub fn residual_norm(&self, x: &DVector<f64>) -> f64 {
        residual_norm(&self.h.raw_gradient(x), x, self.lambda)
    }
}

/// `min_{ξ ∈ ∂(λ‖·‖₁)(x)} ‖∇h + ξ‖`
pub fn residual_norm(grad_h: &DVector<f64>, x: &DVector<f64>, lambda: f64) -> f64 {
    grad_h
        .iter()
        .zip(x.iter())
        .map(|(g, xi)| {
            let r = if *xi != 0.0 {
                g + lambda * xi.signum()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// Componentwise `max{xᵢ − t, 0} − max{−xᵢ − t, 0}`.
pub fn soft_threshold(x: &DVector<f64>, t: f64) -> DVector<f64> {
    x.map(|v| (v - t).max(0.0) - (-v - t).max(0.0))
}

/// Minimizer of `h + λ‖·‖₁`: accelerated proximal gradient with restarts,
/// then Newton on the active set (fixed support, signs and φ-branches)
/// until the pattern is stable.
fn composite_minimizer(h: &PiecewiseQuadraticProblem, lambda: f64) -> Result<DVector<f64>> {
    let d = h.dim();
    let step = 1.0 / h.ell;
    let mut x = DVector::zeros(d);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let scale = h.b.norm().max(1.0);
    for _ in 0..20_000 {
        let x_next = soft_threshold(&(&y - h.raw_gradient(&y) * step), lambda * step);
        // gradient-based restart keeps the momentum monotone
        if (&y - &x_next).dot(&(&x_next - &x)) > 0.0 {
            t = 1.0;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &x_next + (&x_next - &x) * ((t - 1.0) / t_next);
        let moved = (&x_next - &x).norm();
        x = x_next;
        t = t_next;
        if moved <= 1e-14 * scale {
            break;
        }
    }
    for _ in 0..20 {
        let r = h.a.tr_mul(&x) - &h.b;
        let slopes = r.map(|v| if v >= 0.0 { h.ell } else { h.mu });
        let support: Vec<usize> = (0..d).filter(|&i| x[i] != 0.0).collect();
        if support.is_empty() {
            break;
        }
        // ∇h = A D (Aᵀx − b) on the support
        let ad = DMatrix::from_fn(d, d, |i, j| h.a[(i, j)] * slopes[j]);
        let hess = &ad * h.a.transpose();
        let rhs_full = &ad * &h.b;
        let k = support.len();
        let hs = DMatrix::from_fn(k, k, |i, j| hess[(support[i], support[j])]);
        let rs = DVector::from_fn(k, |i, _| {
            rhs_full[support[i]] - lambda * x[support[i]].signum()
        });
        let Some(ch) = Cholesky::new(hs) else { break };
        let xs = ch.solve(&rs);
        let mut cand = DVector::zeros(d);
        for (i, &s) in support.iter().enumerate() {
            cand[s] = xs[i];
        }
        let same_signs = support.iter().all(|&s| cand[s].signum() == x[s].signum());
        let r2 = h.a.tr_mul(&cand) - &h.b;
        let same_branch = r2
            .iter()
            .zip(r.iter())
            .all(|(u, v)| (*u >= 0.0) == (*v >= 0.0));
        if !(same_signs && same_branch) {
            break;
        }
        let better = residual_norm(&h.raw_gradient(&cand), &cand, lambda)
            <= residual_norm(&h.raw_gradient(&x), &x, lambda);
        let changed = (&cand - &x).norm();
        if better {
            x = cand;
        }
        if !better || changed <= 1e-15 * scale {
            break;
        }
    }
    Ok(x)
}

/// Outcome of an inexact prox evaluation.
#[derive(Debug, Clone)]
pub struct InnerProx {
    pub point: DVector<f64>,
    pub iterations: u64,
}

/// `prox_{αf}(x)` by gradient descent on `αf(ξ) + ½‖ξ − x‖²` with step
/// `2/(μ_sub + ℓ_sub)`, `μ_sub = 1 + αμ`, `ℓ_sub = 1 + αℓ`, stopped when
/// `‖ξ[k] − ξ[k−1]‖ ≤ 0.01‖x‖` from `ξ[−1] = 0`, `ξ[0] = x`. At `α = 0`
/// this still takes (and counts) one inner step.
pub fn prox_inner(f: &dyn Smooth, alpha: f64, x: &DVector<f64>, cap: u64) -> Result<InnerProx> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(ProblemError::BadStep(alpha));
    }
    let (mu, ell) = f.bounds();
    let step = 2.0 / ((1.0 + alpha * mu) + (1.0 + alpha * ell));
    let tol = 0.01 * x.norm();
    let mut xi = x.clone();
    let mut moved = x.norm();
    let mut k = 0;
    while moved > tol {
        if k >= cap {
            return Err(ProblemError::InnerNotConverged(cap));
        }
        let g = f.gradient(&xi) * alpha + &xi - x;
        let next = &xi - g * step;
        moved = (&next - &xi).norm();
        xi = next;
        k += 1;
    }
    Ok(InnerProx {
        point: xi,
        iterations: k,
    })
}

/// Serializable recipe for reproducing a problem exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProblemSpec {
    Quadratic {
        d: usize,
        mu: f64,
        ell: f64,
        seed: u64,
    },
    PiecewiseQuadratic {
        d: usize,
        mu: f64,
        ell: f64,
        seed: u64,
    },
    Sector1d {
        a: f64,
        b: f64,
    },
    Composite {
        d: usize,
        mu: f64,
        ell: f64,
        lambda: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub enum Problem {
    Quadratic(QuadraticProblem),
    PiecewiseQuadratic(PiecewiseQuadraticProblem),
    Sector1d(Sector1DProblem),
    Composite(CompositeProblem),
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem> {
        Ok(match *self {
            ProblemSpec::Quadratic { d, mu, ell, seed } => {
                Problem::Quadratic(random_quadratic(d, mu, ell, seed)?)
            }
            ProblemSpec::PiecewiseQuadratic { d, mu, ell, seed } => {
                Problem::PiecewiseQuadratic(PiecewiseQuadraticProblem::random(d, mu, ell, seed)?)
            }
            ProblemSpec::Sector1d { a, b } => Problem::Sector1d(Sector1DProblem::new(a, b)?),
            ProblemSpec::Composite {
                d,
                mu,
                ell,
                lambda,
                seed,
            } => Problem::Composite(CompositeProblem::random(d, mu, ell, lambda, seed)?),
        })
    }
}

impl Problem {
    /// The smooth part (`h` for composites).
    pub fn smooth(&self) -> &dyn Smooth {
        match self {
            Problem::Quadratic(p) => p,
            Problem::PiecewiseQuadratic(p) => p,
            Problem::Sector1d(p) => p,
            Problem::Composite(c) => &c.h,
        }
    }

    pub fn x_star(&self) -> &DVector<f64> {
        match self {
            Problem::Composite(c) => c.x_star(),
            other => other.smooth().x_star(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_examples() {
        let x = DVector::from_vec(vec![2.0, -0.5, -3.0]);
        assert_eq!(
            soft_threshold(&x, 1.0),
            DVector::from_vec(vec![1.0, 0.0, -2.0])
        );
    }

    #[test]
    fn residual_examples() {
        let zero = DVector::zeros(1);
        assert_eq!(
            residual_norm(&DVector::from_vec(vec![0.5]), &zero, 1.0),
            0.0
        );
        assert_eq!(
            residual_norm(&DVector::from_vec(vec![3.0]), &zero, 1.0),
            2.0
        );
        let x = DVector::from_vec(vec![-1.0]);
        assert_eq!(residual_norm(&DVector::from_vec(vec![1.0]), &x, 1.0), 0.0);
    }

    #[test]
    fn quadratic_basics() {
        let p = random_quadratic(2, 1.0, 9.0, 3).unwrap();
        let mut eig: Vec<f64> = p
            .q_mat
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        eig.sort_by(f64::total_cmp);
        assert!((eig[0] - 1.0).abs() < 1e-12 && (eig[1] - 9.0).abs() < 1e-12);
        assert!(p.gradient(p.x_star()).norm() < 1e-8);
        assert_eq!(p.grad_count(), 1);
        let again = random_quadratic(2, 1.0, 9.0, 3).unwrap();
        assert_eq!(again.q_mat, p.q_mat);
        assert_eq!(again.q, p.q);
        assert!(random_quadratic(1, 1.0, 9.0, 3).is_err());
        assert!(
            QuadraticProblem::new(DMatrix::identity(2, 2) * 20.0, DVector::zeros(2), 1.0, 9.0)
                .is_err()
        );
    }

    #[test]
    fn quadratic_prox_stationarity() {
        let p = random_quadratic(6, 0.5, 20.0, 1).unwrap();
        let x = DVector::from_fn(6, |i, _| i as f64 - 2.0);
        for alpha in [0.01, 1.0, 30.0] {
            let px = p.prox_operator(alpha).unwrap().apply(&x);
            let res = p.gradient(&px) * alpha + (&px - &x);
            assert!(res.norm() < 1e-8);
        }
    }

    #[test]
    fn piecewise_minimizer() {
        let p = PiecewiseQuadraticProblem::random(8, 0.1, 10.0, 2).unwrap();
        assert!(p.gradient(p.x_star()).norm() < 1e-12);
        assert!(p.value(p.x_star()).abs() < 1e-20);
    }

    #[test]
    fn sector_delta_matches_derivative() {
        let s = Sector1DProblem::new(4.0, 3.0).unwrap();
        for e in [-2.0, -0.3, 0.0, 0.7, 1.9] {
            assert!((s.delta(e) + s.derivative(-e)).abs() < 1e-14);
        }
        assert!(Sector1DProblem::new(1.0, 2.0).is_err());
    }

    #[test]
    fn composite_optimality() {
        let c = CompositeProblem::random(40, 0.1, 100.0, 1.0, 9).unwrap();
        assert!(
            c.residual_norm(c.x_star()) < 1e-10,
            "{}",
            c.residual_norm(c.x_star())
        );
    }

    #[test]
    fn inner_prox_stops_and_counts() {
        let p = random_quadratic(5, 1.0, 4.0, 5).unwrap();
        let x = DVector::from_element(5, 1.0);
        let out = prox_inner(&p, 0.5, &x, INNER_CAP).unwrap();
        assert!(out.iterations >= 1);
        assert_eq!(p.grad_count(), out.iterations);
        assert_eq!(
            prox_inner(&p, 0.5, &x, 0).unwrap_err(),
            ProblemError::InnerNotConverged(0)
        );
    }

    #[test]
    fn spec_roundtrip() {
        let s = ProblemSpec::Composite {
            d: 10,
            mu: 0.1,
            ell: 100.0,
            lambda: 1.0,
            seed: 4,
        };
        let js = serde_json::to_string(&s).unwrap();
        assert!(js.contains(r#""type":"composite""#));
        assert_eq!(serde_json::from_str::<ProblemSpec>(&js).unwrap(), s);
        assert!(matches!(s.build().unwrap(), Problem::Composite(_)));
    }
}
