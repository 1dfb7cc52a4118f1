//! Closed-form algorithm synthesis from a `(μ, ℓ)` budget.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transfer::{Polynomial, StateSpace, TransferError, TransferFunction, TransferMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("invalid budget: need 0 < mu <= ell (got mu = {mu}, ell = {ell})")]
    InvalidBudget { mu: f64, ell: f64 },
    #[error("rate {0} is outside (0, 1)")]
    RateOutOfRange(f64),
    #[error(
        "rate {rho} is slower than {limit}; no feedthrough is needed, use the {fallback} design"
    )]
    RateTooSlow {
        rho: f64,
        limit: f64,
        fallback: &'static str,
    },
    #[error("negative feedthrough {0} is not admissible")]
    NegativeFeedthrough(f64),
    #[error("operation needs a finite smoothness constant")]
    UnboundedSmoothness,
    #[error("solver limit must satisfy kappa_m >= 1 (got {0})")]
    BadSolverLimit(f64),
    #[error(transparent)]
    Transfer(#[from] TransferError),
}

type Result<T> = std::result::Result<T, SynthesisError>;

/// Strong convexity `μ` and smoothness `ℓ`; `ell = None` is the unbounded
/// (μ-only) budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBudget", into = "RawBudget")]
pub struct RateBudget {
    mu: f64,
    ell: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawBudget {
    mu: f64,
    #[serde(default)]
    ell: Option<f64>,
}

impl TryFrom<RawBudget> for RateBudget {
    type Error = SynthesisError;
    fn try_from(r: RawBudget) -> Result<Self> {
        match r.ell {
            Some(ell) => RateBudget::new(r.mu, ell),
            None => RateBudget::mu_only(r.mu),
        }
    }
}

impl From<RateBudget> for RawBudget {
    fn from(b: RateBudget) -> Self {
        RawBudget {
            mu: b.mu,
            ell: b.ell,
        }
    }
}

impl RateBudget {
    pub fn new(mu: f64, ell: f64) -> Result<Self> {
        if !(mu > 0.0 && ell >= mu && ell.is_finite()) {
            return Err(SynthesisError::InvalidBudget { mu, ell });
        }
        Ok(RateBudget { mu, ell: Some(ell) })
    }

    pub fn mu_only(mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(SynthesisError::InvalidBudget {
                mu,
                ell: f64::INFINITY,
            });
        }
        Ok(RateBudget { mu, ell: None })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `ℓ`, or `+∞` for the unbounded budget.
    pub fn ell(&self) -> f64 {
        self.ell.unwrap_or(f64::INFINITY)
    }

    pub fn finite_ell(&self) -> Result<f64> {
        self.ell.ok_or(SynthesisError::UnboundedSmoothness)
    }

    pub fn is_bounded(&self) -> bool {
        self.ell.is_some()
    }

    pub fn kappa(&self) -> f64 {
        self.ell() / self.mu
    }
}

/// A nonnegative gain that may have been clamped from a negative value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gain {
    pub value: f64,
    pub clamped: bool,
}

impl Gain {
    /// Values within `tol` of zero are snapped to zero (round-off at the
    /// boundary rate); negative values are clamped and flagged.
    fn clamp(raw: f64, tol: f64) -> Self {
        if raw.abs() <= tol {
            return Gain {
                value: 0.0,
                clamped: false,
            };
        }
        if raw < 0.0 {
            Gain {
                value: 0.0,
                clamped: true,
            }
        } else {
            Gain {
                value: raw,
                clamped: false,
            }
        }
    }
}

/// Named closed-form update rules. `g` is the gradient of the objective (or
/// of its smooth part for splitting methods).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum IterationForm {
    /// `x⁺ = x − step·g(x)`
    GradientDescent { step: f64 },
    /// `x⁺ = x + momentum·(x − x⁻) − step·g(x)`
    HeavyBall { momentum: f64, step: f64 },
    /// `x⁺ = x + momentum·(x − x⁻) − gain·(I + regularizer·Q)⁻¹ g(x)` on
    /// quadratics with Hessian `Q`.
    ImplicitHeavyBall {
        momentum: f64,
        gain: f64,
        regularizer: f64,
    },
    /// `x⁺ = prox_{alpha f}(x − beta·g(x))`
    ImplicitGradient { alpha: f64, beta: f64 },
    /// `x⁺ = prox_{step·r}(x − step·∇h(x))` for `f = h + r`.
    ProximalGradient { step: f64 },
}

/// Objective class for which [`AlgorithmSpec::certified_rate`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertifiedFor {
    Quadratic,
    StronglyConvexSmooth,
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmTransfer {
    Scalar(TransferFunction),
    Matrix(TransferMatrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub name: String,
    pub transfer: AlgorithmTransfer,
    /// `δ` or `α` for scalar designs; `[η₁, η₂]` for splitting.
    pub feedthrough: Vec<f64>,
    pub realization: StateSpace,
    pub iteration: Option<IterationForm>,
    pub certified_rate: f64,
    pub certified_for: CertifiedFor,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl AlgorithmSpec {
    fn scalar(
        name: &str,
        g: TransferFunction,
        iteration: IterationForm,
        rate: f64,
        class: CertifiedFor,
    ) -> Result<Self> {
        let realization = StateSpace::from_tf(&g)?;
        let delta = g.feedthrough()?;
        Ok(AlgorithmSpec {
            name: name.to_string(),
            transfer: AlgorithmTransfer::Scalar(g),
            feedthrough: vec![delta],
            realization,
            iteration: Some(iteration),
            certified_rate: rate,
            certified_for: class,
            notes: Vec::new(),
        })
    }

    pub fn scalar_tf(&self) -> Option<&TransferFunction> {
        match &self.transfer {
            AlgorithmTransfer::Scalar(g) => Some(g),
            AlgorithmTransfer::Matrix(_) => None,
        }
    }
}

/// Relative size (in units of `1/μ`) below which a gain is round-off.
const SNAP_REL: f64 = 1e-12;

fn check_rate(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(SynthesisError::RateOutOfRange(rho));
    }
    Ok(())
}

/// `(√κ − 1)/(√κ + 1)`.
pub fn rho_min(budget: &RateBudget) -> f64 {
    if !budget.is_bounded() {
        return 1.0;
    }
    let s = budget.kappa().sqrt();
    (s - 1.0) / (s + 1.0)
}

/// `(κ − 1)/(κ + 1)`, the rate of gradient descent with step `2/(μ+ℓ)`.
pub fn rho_gd(budget: &RateBudget) -> f64 {
    if !budget.is_bounded() {
        return 1.0;
    }
    let k = budget.kappa();
    (k - 1.0) / (k + 1.0)
}

/// Gradient descent with step `2/(μ+ℓ)`.
pub fn gradient_descent(budget: &RateBudget) -> Result<AlgorithmSpec> {
    let ell = budget.finite_ell()?;
    let step = 2.0 / (budget.mu + ell);
    AlgorithmSpec::scalar(
        "gradient_descent",
        TransferFunction::accumulator().scale(step),
        IterationForm::GradientDescent { step },
        rho_gd(budget),
        CertifiedFor::StronglyConvexSmooth,
    )
}

pub fn heavy_ball(budget: &RateBudget) -> Result<AlgorithmSpec> {
    let ell = budget.finite_ell()?;
    let mu = budget.mu;
    if ell == mu {
        let step = 1.0 / ell;
        let mut spec = AlgorithmSpec::scalar(
            "gradient_descent",
            TransferFunction::accumulator().scale(step),
            IterationForm::GradientDescent { step },
            0.0,
            CertifiedFor::Quadratic,
        )?;
        spec.notes.push(
            "degenerate budget mu = ell: heavy ball reduces to gradient descent with step 1/ell"
                .into(),
        );
        return Ok(spec);
    }
    let rho = rho_min(budget);
    let momentum = rho * rho;
    let step = 4.0 / (ell.sqrt() + mu.sqrt()).powi(2);
    let den = &Polynomial::linear_root(1.0) * &Polynomial::linear_root(momentum);
    let g = TransferFunction::new(Polynomial::monomial(step, 1), den)?;
    AlgorithmSpec::scalar(
        "heavy_ball",
        g,
        IterationForm::HeavyBall { momentum, step },
        rho,
        CertifiedFor::Quadratic,
    )
}

/// Fastest rate on quadratics for an algorithm with feedthrough `δ`.
pub fn implicit_rate_bound(delta: f64, budget: &RateBudget) -> Result<f64> {
    if delta < 0.0 || delta.is_nan() {
        return Err(SynthesisError::NegativeFeedthrough(delta));
    }
    let ell = budget.finite_ell()?;
    if delta.is_infinite() {
        return Ok(0.0);
    }
    let a = (budget.kappa() + ell * delta).sqrt();
    let b = (1.0 + ell * delta).sqrt();
    Ok((a - b) / (a + b))
}

/// Minimum feedthrough `δ_ρ = ((1−ρ)²κ − (1+ρ)²)/(4ρℓ)`, clamped at zero.
pub fn delta_for_rate(rho: f64, budget: &RateBudget) -> Result<Gain> {
    check_rate(rho)?;
    let ell = budget.finite_ell()?;
    let k = budget.kappa();
    Ok(Gain::clamp(
        ((1.0 - rho).powi(2) * k - (1.0 + rho).powi(2)) / (4.0 * rho * ell),
        SNAP_REL / budget.mu,
    ))
}

pub fn implicit_heavy_ball(budget: &RateBudget, rho: f64) -> Result<AlgorithmSpec> {
    check_rate(rho)?;
    let ell = budget.finite_ell()?;
    let mu = budget.mu;
    let limit = rho_min(budget);
    if rho > limit {
        return Err(SynthesisError::RateTooSlow {
            rho,
            limit,
            fallback: "heavy_ball",
        });
    }
    let delta = delta_for_rate(rho, budget)?.value;
    let beta = (4.0 + 2.0 * delta * (ell + mu))
        / ((ell + mu * ell * delta).sqrt() + (mu + mu * ell * delta).sqrt()).powi(2);
    let r2 = rho * rho;
    let num = Polynomial::new(vec![delta * r2, beta, delta]);
    let den = &Polynomial::linear_root(1.0) * &Polynomial::linear_root(r2);
    let g = TransferFunction::new(num, den)?;
    AlgorithmSpec::scalar(
        "implicit_heavy_ball",
        g,
        IterationForm::ImplicitHeavyBall {
            momentum: r2,
            gain: delta + delta * r2 + beta,
            regularizer: delta,
        },
        rho,
        CertifiedFor::Quadratic,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IllConditionedPlan {
    pub delta_max: f64,
    pub rho_m: f64,
    /// `κ_m ≥ κ`: the regularized system can be solved directly.
    pub newton_regime: bool,
}

/// Largest regularization keeping `(1+δℓ)/(1+δμ) ≤ κ_m`, and the rate it buys.
pub fn ill_conditioned_plan(budget: &RateBudget, kappa_m: f64) -> Result<IllConditionedPlan> {
    budget.finite_ell()?;
    if !(kappa_m >= 1.0) {
        return Err(SynthesisError::BadSolverLimit(kappa_m));
    }
    let k = budget.kappa();
    if kappa_m >= k {
        return Ok(IllConditionedPlan {
            delta_max: f64::INFINITY,
            rho_m: 0.0,
            newton_regime: true,
        });
    }
    let delta_max = (kappa_m - 1.0) / (k - kappa_m) / budget.mu;
    let s = (k / kappa_m).sqrt();
    Ok(IllConditionedPlan {
        delta_max,
        rho_m: ((s - 1.0) / (s + 1.0)).max(0.0),
        newton_regime: false,
    })
}

/// Circle-criterion rate `(κ−1)/(κ+1+2ℓα)` for feedthrough `α`; the
/// unbounded budget gives the limit `1/(1+2μα)`.
pub fn rho_circle(alpha: f64, budget: &RateBudget) -> Result<f64> {
    if alpha < 0.0 || alpha.is_nan() {
        return Err(SynthesisError::NegativeFeedthrough(alpha));
    }
    match budget.ell {
        Some(ell) => {
            let k = budget.kappa();
            Ok((k - 1.0) / (k + 1.0 + 2.0 * ell * alpha))
        }
        None => Ok(1.0 / (1.0 + 2.0 * budget.mu * alpha)),
    }
}

/// `α_ρ = ((1−ρ)κ − (1+ρ))/(2ρℓ)`, clamped at zero; `(1−ρ)/(2ρμ)` when `ℓ = ∞`.
pub fn alpha_for_rate(rho: f64, budget: &RateBudget) -> Result<Gain> {
    check_rate(rho)?;
    let raw = match budget.ell {
        Some(ell) => ((1.0 - rho) * budget.kappa() - (1.0 + rho)) / (2.0 * rho * ell),
        None => (1.0 - rho) / (2.0 * rho * budget.mu),
    };
    Ok(Gain::clamp(raw, SNAP_REL / budget.mu))
}

/// Implicit gradient method `G = (αz + β)/(z − 1)` certified at rate `ρ` by
/// the circle criterion.
pub fn implicit_gd(budget: &RateBudget, rho: f64) -> Result<AlgorithmSpec> {
    check_rate(rho)?;
    let mu = budget.mu;
    let limit = rho_gd(budget);
    if rho > limit {
        return Err(SynthesisError::RateTooSlow {
            rho,
            limit,
            fallback: "gradient_descent",
        });
    }
    let alpha = alpha_for_rate(rho, budget)?.value;
    let beta = match budget.ell {
        Some(ell) => (2.0 + alpha * (ell + mu)) / (ell + mu + 2.0 * mu * ell * alpha),
        None => alpha * rho,
    };
    let g = TransferFunction::new(
        Polynomial::new(vec![beta, alpha]),
        Polynomial::linear_root(1.0),
    )?;
    AlgorithmSpec::scalar(
        "implicit_gradient",
        g,
        IterationForm::ImplicitGradient { alpha, beta },
        rho,
        CertifiedFor::StronglyConvexSmooth,
    )
}

/// Condition number `(1+αℓ)/(1+αμ)` of the regularized subproblem.
pub fn sub_condition(alpha: f64, budget: &RateBudget) -> Result<f64> {
    if alpha < 0.0 || alpha.is_nan() {
        return Err(SynthesisError::NegativeFeedthrough(alpha));
    }
    if alpha == 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 + alpha * budget.ell()) / (1.0 + alpha * budget.mu))
}

/// Parameters of the 2×2 splitting design certified at `ρ_GD`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingDesign {
    pub eta1: f64,
    pub eta2: f64,
    pub eta2_interval: (f64, f64),
    /// Scaling `w²`; infinite when `μ = ℓ`.
    pub w2: f64,
    pub psi: TransferMatrix,
}

/// `η₂ ∈ [1/ℓ, 1/μ]`.
pub fn splitting_feasible(budget: &RateBudget, eta2: f64) -> Result<bool> {
    let ell = budget.finite_ell()?;
    Ok(eta2 >= 1.0 / ell && eta2 <= 1.0 / budget.mu)
}

/// `Ψ(z) = 1/(z − ρ) [[z + ρ, 2ρz], [2/(ℓ+μ), 2z/(ℓ+μ)]]` at `ρ = ρ_GD`.
pub fn splitting_psi(budget: &RateBudget) -> Result<TransferMatrix> {
    let ell = budget.finite_ell()?;
    let r = rho_gd(budget);
    let c = 2.0 / (ell + budget.mu);
    let den = Polynomial::linear_root(r);
    let e = |num: Vec<f64>| TransferFunction::new(Polynomial::new(num), den.clone());
    Ok(TransferMatrix::from_rows(vec![
        vec![e(vec![r, 1.0])?, e(vec![0.0, 2.0 * r])?],
        vec![e(vec![c])?, e(vec![0.0, c])?],
    ])?)
}

pub fn splitting_synthesis(budget: &RateBudget) -> Result<(AlgorithmSpec, SplittingDesign)> {
    let ell = budget.finite_ell()?;
    let mu = budget.mu;
    let c = 2.0 / (mu + ell);
    let mut notes = Vec::new();
    let (eta2, w2) = if ell == mu {
        notes.push("degenerate budget mu = ell: w^2 is unbounded, eta2 set to 1/ell".into());
        (1.0 / ell, f64::INFINITY)
    } else {
        (c, (ell + mu) / (ell - mu).powi(2))
    };
    let acc = TransferFunction::accumulator().scale(c);
    let acc_z = TransferFunction::new(Polynomial::monomial(c, 1), Polynomial::linear_root(1.0))?;
    let g = TransferMatrix::from_rows(vec![vec![acc.clone(), acc_z.clone()], vec![acc, acc_z]])?;
    // minimal realization: one accumulator shared by both channels
    let realization = StateSpace {
        a: DMatrix::from_element(1, 1, 1.0),
        b: DMatrix::from_row_slice(1, 2, &[c, c]),
        c: DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
        d: DMatrix::from_row_slice(2, 2, &[0.0, c, 0.0, c]),
    };
    let spec = AlgorithmSpec {
        name: "proximal_gradient".into(),
        transfer: AlgorithmTransfer::Matrix(g),
        feedthrough: vec![c, eta2],
        realization,
        iteration: Some(IterationForm::ProximalGradient { step: c }),
        certified_rate: rho_gd(budget),
        certified_for: CertifiedFor::Composite,
        notes,
    };
    let design = SplittingDesign {
        eta1: c,
        eta2,
        eta2_interval: (1.0 / ell, 1.0 / mu),
        w2,
        psi: splitting_psi(budget)?,
    };
    Ok((spec, design))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn b(mu: f64, ell: f64) -> RateBudget {
        RateBudget::new(mu, ell).unwrap()
    }

    #[test]
    fn rho_min_examples() {
        assert_eq!(rho_min(&b(1.0, 1.0)), 0.0);
        assert!((rho_min(&b(1.0, 100.0)) - 9.0 / 11.0).abs() < 1e-15);
        assert!((rho_min(&b(0.01, 100.0)) - 99.0 / 101.0).abs() < 1e-15);
    }

    #[test]
    fn heavy_ball_examples() {
        let hb = heavy_ball(&b(1.0, 9.0)).unwrap();
        let Some(IterationForm::HeavyBall { momentum, step }) = hb.iteration else {
            panic!()
        };
        assert!((momentum - 0.25).abs() < 1e-15 && (step - 0.25).abs() < 1e-15);
        let want = TransferFunction::from_coeffs(&[0.0, 0.25], &[0.25, -1.25, 1.0]).unwrap();
        assert!(hb.scalar_tf().unwrap().approx_eq(&want, 1e-12));

        let hb = heavy_ball(&b(1.0, 100.0)).unwrap();
        let Some(IterationForm::HeavyBall { momentum, step }) = hb.iteration else {
            panic!()
        };
        assert!((momentum - 81.0 / 121.0).abs() < 1e-15);
        assert!((step - 4.0 / 121.0).abs() < 1e-15);

        let deg = heavy_ball(&b(2.0, 2.0)).unwrap();
        assert_eq!(deg.certified_rate, 0.0);
        assert_eq!(
            deg.iteration,
            Some(IterationForm::GradientDescent { step: 0.5 })
        );
    }

    #[test]
    fn implicit_examples() {
        let bud = b(1.0, 100.0);
        assert!((implicit_rate_bound(0.0, &bud).unwrap() - rho_min(&bud)).abs() < 1e-15);
        let d = delta_for_rate(0.5, &bud).unwrap();
        assert!((d.value - 0.11375).abs() < 1e-15 && !d.clamped);
        assert!((implicit_rate_bound(0.11375, &bud).unwrap() - 0.5).abs() < 1e-12);
        assert!(implicit_rate_bound(1e12, &bud).unwrap() < 1e-4);
        assert!(delta_for_rate(rho_min(&bud), &bud).unwrap().value.abs() < 1e-15);
        assert!(delta_for_rate(0.3, &bud).unwrap().value > d.value);
        assert!(delta_for_rate(0.95, &bud).unwrap().clamped);
        assert!(matches!(
            implicit_rate_bound(-1.0, &bud),
            Err(SynthesisError::NegativeFeedthrough(_))
        ));

        let ihb = implicit_heavy_ball(&bud, 0.5).unwrap();
        assert!((ihb.feedthrough[0] - 0.11375).abs() < 1e-14);
        let same = implicit_heavy_ball(&bud, rho_min(&bud)).unwrap();
        let hb = heavy_ball(&bud).unwrap();
        assert!(same
            .scalar_tf()
            .unwrap()
            .approx_eq(hb.scalar_tf().unwrap(), 1e-10));
        assert!(matches!(
            implicit_heavy_ball(&bud, 0.9),
            Err(SynthesisError::RateTooSlow { .. })
        ));
    }

    #[test]
    fn newton_limit() {
        let bud = b(1.0, 100.0);
        let Some(IterationForm::ImplicitHeavyBall {
            gain,
            regularizer,
            momentum,
        }) = implicit_heavy_ball(&bud, 1e-3).unwrap().iteration
        else {
            panic!()
        };
        let beta = gain - regularizer * (1.0 + momentum);
        assert!(beta / regularizer < 1e-2);
        assert!(1.0 / regularizer < 1e-2);
    }

    #[test]
    fn ill_conditioned_examples() {
        let bud = b(1.0, 100.0);
        let p = ill_conditioned_plan(&bud, 1.0).unwrap();
        assert_eq!(p.delta_max, 0.0);
        assert!((p.rho_m - rho_min(&bud)).abs() < 1e-15);
        let p = ill_conditioned_plan(&bud, 100.0).unwrap();
        assert_eq!(p.rho_m, 0.0);
        assert!(p.newton_regime);
        let p = ill_conditioned_plan(&b(0.01, 100.0), 100.0).unwrap();
        assert!((p.delta_max - 1.0).abs() < 1e-12);
        assert!((p.rho_m - 9.0 / 11.0).abs() < 1e-12);
        assert!(ill_conditioned_plan(&bud, 0.5).is_err());
    }

    #[test]
    fn circle_examples() {
        let bud = b(0.1, 100.0);
        assert!((rho_circle(0.0, &bud).unwrap() - rho_gd(&bud)).abs() < 1e-15);
        assert!(alpha_for_rate(rho_gd(&bud), &bud).unwrap().value.abs() < 1e-12);
        let a = alpha_for_rate(0.5, &bud).unwrap().value;
        assert!((a - 4.985).abs() < 1e-12);
        assert!((rho_circle(4.985, &bud).unwrap() - 0.5).abs() < 1e-12);

        let gd = implicit_gd(&bud, rho_gd(&bud)).unwrap();
        assert_eq!(gd.feedthrough[0], 0.0);
        let Some(IterationForm::ImplicitGradient { beta, .. }) = gd.iteration else {
            panic!()
        };
        assert!((beta - 2.0 / 100.1).abs() < 1e-15);
        assert!((implicit_gd(&bud, 0.5).unwrap().feedthrough[0] - 4.985).abs() < 1e-12);

        let free = RateBudget::mu_only(1.0).unwrap();
        let ig = implicit_gd(&free, 0.5).unwrap();
        assert_eq!(
            ig.iteration,
            Some(IterationForm::ImplicitGradient {
                alpha: 0.5,
                beta: 0.25
            })
        );
    }

    #[test]
    fn sub_condition_examples() {
        let bud = b(0.1, 100.0);
        assert_eq!(sub_condition(0.0, &bud).unwrap(), 1.0);
        assert!((sub_condition(1e12, &bud).unwrap() - 1000.0).abs() < 1e-6);
        assert!((sub_condition(4.985, &bud).unwrap() - 499.5 / 1.4985).abs() < 1e-9);
    }

    #[test]
    fn splitting_examples() {
        let bud = b(0.1, 100.0);
        let (spec, d) = splitting_synthesis(&bud).unwrap();
        assert!((d.eta1 - 2.0 / 100.1).abs() < 1e-15);
        assert!((d.w2 - 100.1 / 99.9f64.powi(2)).abs() < 1e-15);
        assert!(splitting_feasible(&bud, d.eta2).unwrap());
        assert!(!splitting_feasible(&bud, 0.5 / 100.0).unwrap());
        assert!(!splitting_feasible(&bud, 11.0).unwrap());
        let AlgorithmTransfer::Matrix(g) = &spec.transfer else {
            panic!()
        };
        let z = Complex64::new(0.3, 1.7);
        let diff = spec.realization.eval(z).unwrap() - g.eval(z).unwrap();
        assert!(diff.norm() < 1e-12);
    }

    #[test]
    fn budget_json() {
        let bud: RateBudget = serde_json::from_str(r#"{"mu": 1.0}"#).unwrap();
        assert!(!bud.is_bounded());
        let bud: RateBudget = serde_json::from_str(r#"{"mu": 1.0, "ell": 9.0}"#).unwrap();
        assert_eq!(bud.kappa(), 9.0);
        assert!(serde_json::from_str::<RateBudget>(r#"{"mu": 2.0, "ell": 1.0}"#).is_err());
    }
}
