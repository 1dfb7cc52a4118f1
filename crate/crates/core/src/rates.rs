//! Empirical and spectral convergence rates.

use serde::{Deserialize, Serialize};

use crate::par::ExecPolicy;
use crate::runtime::Trace;
use crate::synthesis::{RateBudget, SynthesisError};
use crate::transfer::TransferFunction;

/// Steps below this fraction of `‖e[0]‖` are round-off and excluded.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;
pub const MIN_USABLE: usize = 20;
pub const DEFAULT_GRID: usize = 129;
/// Ratio and root estimates further apart than this are flagged.
pub const DISAGREEMENT: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RateError {
    #[error("trace has {usable} usable steps, need at least {MIN_USABLE}")]
    TooShort { usable: usize },
    #[error("lambda grid needs at least 3 points, got {0}")]
    BadGrid(usize),
    #[error("curvature must be positive, got {0}")]
    BadCurvature(f64),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

pub type Result<T> = std::result::Result<T, RateError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMethod {
    Ratio,
    Root,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rho_hat: f64,
    pub window: (usize, usize),
    pub method: RateMethod,
    /// `(‖e[T]‖/‖e[0]‖)^{1/T}` at the last usable step `T`.
    pub root_estimate: f64,
    pub disagreement: bool,
}

/// Geometric-mean contraction over the last quartile of the steps above the
/// round-off floor, cross-checked against the root estimate.
pub fn empirical_rate(trace: &Trace) -> Result<RateEstimate> {
    let e = &trace.err_norms;
    let e0 = e.first().copied().unwrap_or(0.0);
    let usable = if e0 > 0.0 {
        e.iter()
            .take_while(|v| **v >= ROUNDOFF_FLOOR * e0 && **v > 0.0)
            .count()
    } else {
        0
    };
    if usable < MIN_USABLE {
        return Err(RateError::TooShort { usable });
    }
    let end = usable - 1;
    let start = end - (usable / 4).max(1);
    let rho_hat = (e[end] / e[start]).powf(1.0 / (end - start) as f64);
    let root = (e[end] / e0).powf(1.0 / end as f64);
    Ok(RateEstimate {
        rho_hat,
        window: (start, end),
        method: RateMethod::Ratio,
        root_estimate: root,
        disagreement: (rho_hat - root).abs() > DISAGREEMENT,
    })
}

/// Spectral radius of the closed loop with `∇f(x) = λx`.
pub fn spectral_rate(g: &TransferFunction, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(RateError::BadCurvature(lambda));
    }
    Ok(g.closed_loop_charpoly(lambda)
        .roots()
        .iter()
        .map(|r| r.norm())
        .fold(0.0, f64::max))
}

/// Log-spaced `λ`-grid on `[μ, ℓ]` with both endpoints exact.
pub fn lambda_grid(budget: &RateBudget, n: usize) -> Result<Vec<f64>> {
    if n < 3 {
        return Err(RateError::BadGrid(n));
    }
    let (mu, ell) = (budget.mu(), budget.finite_ell()?);
    let (a, b) = (mu.ln(), ell.ln());
    let mut grid: Vec<f64> = (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect();
    grid[0] = mu;
    grid[n - 1] = ell;
    Ok(grid)
}

const GOLDEN_TOL: f64 = 1e-8;

/// Worst spectral rate over `[μ, ℓ]`: grid maximum refined by golden-section
/// search between the maximizer's neighbours.
pub fn worst_case_rate(g: &TransferFunction, budget: &RateBudget, grid: usize) -> Result<f64> {
    worst_case_rate_with(g, budget, grid, ExecPolicy::default())
}

pub fn worst_case_rate_with(
    g: &TransferFunction,
    budget: &RateBudget,
    grid: usize,
    policy: ExecPolicy,
) -> Result<f64> {
    let lambdas = lambda_grid(budget, grid)?;
    let rates: Vec<f64> = policy.map(&lambdas, |l| spectral_rate(g, *l).unwrap_or(f64::NAN));
    let (imax, &best) = rates
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is nonempty");
    let f = |l: f64| spectral_rate(g, l).unwrap_or(f64::NAN);
    let (mut lo, mut hi) = (
        lambdas[imax.saturating_sub(1)],
        lambdas[(imax + 1).min(grid - 1)],
    );
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > GOLDEN_TOL * hi.max(1.0) {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    Ok(best.max(fc).max(fd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::StopReason;
    use crate::synthesis::{gradient_descent, heavy_ball, rho_gd};

    fn geometric(rho: f64, n: usize) -> Trace {
        Trace {
            err_norms: (0..n).map(|t| rho.powi(t as i32)).collect(),
            residuals: vec![],
            grad_evals: (0..n as u64).collect(),
            iterates: None,
            terminated_at: n - 1,
            stop_reason: StopReason::MaxIter,
        }
    }

    #[test]
    fn geometric_sequence() {
        let r = empirical_rate(&geometric(0.7, 60)).unwrap();
        assert!((r.rho_hat - 0.7).abs() < 1e-6);
        assert!(!r.disagreement);
        assert!(matches!(
            empirical_rate(&geometric(0.7, 10)),
            Err(RateError::TooShort { .. })
        ));
    }

    #[test]
    fn floor_excludes_roundoff_tail() {
        let mut tr = geometric(0.5, 60);
        tr.err_norms.extend(std::iter::repeat_n(1e-16, 30));
        let r = empirical_rate(&tr).unwrap();
        assert!(r.window.1 < 40);
        assert!((r.rho_hat - 0.5).abs() < 1e-9);
    }

    #[test]
    fn heavy_ball_double_roots() {
        let budget = RateBudget::new(1.0, 9.0).unwrap();
        let hb = heavy_ball(&budget).unwrap();
        let g = hb.scalar_tf().unwrap();
        for l in [1.0, 9.0] {
            assert!((spectral_rate(g, l).unwrap() - 0.5).abs() < 1e-6);
        }
        assert!((worst_case_rate(g, &budget, DEFAULT_GRID).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn gradient_descent_worst_case() {
        let budget = RateBudget::new(0.3, 40.0).unwrap();
        let gd = gradient_descent(&budget).unwrap();
        let g = gd.scalar_tf().unwrap();
        assert!((spectral_rate(g, 2.0).unwrap() - (1.0 - 2.0 * 2.0 / 40.3f64).abs()).abs() < 1e-12);
        assert!(
            (worst_case_rate(g, &budget, DEFAULT_GRID).unwrap() - rho_gd(&budget)).abs() < 1e-9
        );
        assert!(worst_case_rate(g, &budget, 2).is_err());
    }
}
