//! Runs synthesized and named algorithms on test problems and records
//! error traces.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::problems::{
    prox_inner, soft_threshold, CompositeProblem, ProblemError, QuadraticProblem, Smooth, INNER_CAP,
};
use crate::sim::{LoopSim, SimError};
use crate::synthesis::{
    implicit_gd, implicit_heavy_ball, AlgorithmSpec, IterationForm, RateBudget, SynthesisError,
};

/// Errors beyond this multiple of `‖e[0]‖` count as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e12;
/// Iterates are retained only up to this dimension.
pub const MAX_KEPT_DIM: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("iteration diverged at step {step}")]
    Divergence { step: usize, trace: Box<Trace> },
    #[error("factorization of the regularized system failed")]
    FactorizationFailure,
    #[error("algorithm `{0}` cannot be simulated directly on a single gradient oracle")]
    Unsupported(String),
    #[error("initial point has dimension {got}, expected {want}")]
    Dimension { got: usize, want: usize },
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

pub type Result<T> = std::result::Result<T, RunError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    MaxIter,
    Divergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopCriteria {
    /// Stop once `‖x[t] − x*‖ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub keep_iterates: bool,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria {
            tol: 1e-10,
            max_iter: 100_000,
            keep_iterates: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// `‖e[t]‖ = ‖x* − x[t]‖` for `t = 0..=terminated_at`.
    pub err_norms: Vec<f64>,
    /// Composite residual per step; empty when not applicable.
    pub residuals: Vec<f64>,
    /// Cumulative gradient evaluations spent to reach `x[t]`.
    pub grad_evals: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterates: Option<Vec<Vec<f64>>>,
    pub terminated_at: usize,
    pub stop_reason: StopReason,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.err_norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.err_norms.is_empty()
    }

    pub fn total_grad_evals(&self) -> u64 {
        self.grad_evals.last().copied().unwrap_or(0)
    }

    /// CSV with header `t,err_norm,residual_norm,grad_evals`, keeping every
    /// `every`-th row plus the last one.
    pub fn to_csv(&self, every: usize) -> String {
        let every = every.max(1);
        let mut out = format!("# subsample every {every} steps, final step always kept\n");
        out.push_str("t,err_norm,residual_norm,grad_evals\n");
        for t in 0..self.len() {
            if t % every != 0 && t + 1 != self.len() {
                continue;
            }
            let r = self
                .residuals
                .get(t)
                .map(|r| format!("{r:e}"))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{t},{:e},{r},{}",
                self.err_norms[t], self.grad_evals[t]
            );
        }
        out
    }
}

struct Recorder<'a> {
    x_star: &'a DVector<f64>,
    stop: StopCriteria,
    e0: f64,
    trace: Trace,
    keep: bool,
}

impl<'a> Recorder<'a> {
    fn new(x_star: &'a DVector<f64>, x0: &DVector<f64>, stop: StopCriteria) -> Result<Self> {
        if x0.len() != x_star.len() {
            return Err(RunError::Dimension {
                got: x0.len(),
                want: x_star.len(),
            });
        }
        let keep = stop.keep_iterates && x0.len() <= MAX_KEPT_DIM;
        Ok(Recorder {
            x_star,
            stop,
            e0: (x_star - x0).norm(),
            trace: Trace {
                err_norms: Vec::new(),
                residuals: Vec::new(),
                grad_evals: Vec::new(),
                iterates: keep.then(Vec::new),
                terminated_at: 0,
                stop_reason: StopReason::MaxIter,
            },
            keep,
        })
    }

    /// Records `x[t]`; returns `Some` when the run is over.
    fn record(
        &mut self,
        x: &DVector<f64>,
        residual: Option<f64>,
        evals: u64,
    ) -> Result<Option<Trace>> {
        let t = self.trace.err_norms.len();
        let e = (self.x_star - x).norm();
        self.trace.err_norms.push(e);
        self.trace.grad_evals.push(evals);
        if let Some(r) = residual {
            self.trace.residuals.push(r);
        }
        if self.keep {
            if let Some(it) = self.trace.iterates.as_mut() {
                it.push(x.iter().copied().collect());
            }
        }
        let reason = if e <= self.stop.tol {
            StopReason::Tolerance
        } else if !e.is_finite() || e > DIVERGENCE_FACTOR * self.e0 {
            StopReason::Divergence
        } else if t >= self.stop.max_iter {
            StopReason::MaxIter
        } else {
            return Ok(None);
        };
        let mut trace = std::mem::replace(&mut self.trace, empty_trace());
        trace.terminated_at = t;
        trace.stop_reason = reason;
        if reason == StopReason::Divergence {
            return Err(RunError::Divergence {
                step: t,
                trace: Box::new(trace),
            });
        }
        Ok(Some(trace))
    }
}

fn empty_trace() -> Trace {
    Trace {
        err_norms: Vec::new(),
        residuals: Vec::new(),
        grad_evals: Vec::new(),
        iterates: None,
        terminated_at: 0,
        stop_reason: StopReason::MaxIter,
    }
}

/// Simulates the realization of a scalar, strictly proper `spec` in feedback
/// with `u = −∇f(y)`, starting at rest with every past output equal to `x0`.
pub fn run_lti(
    spec: &AlgorithmSpec,
    problem: &dyn Smooth,
    x0: &DVector<f64>,
    stop: StopCriteria,
) -> Result<Trace> {
    let ss = &spec.realization;
    if ss.outputs() != 1 || ss.inputs() != 1 {
        return Err(RunError::Unsupported(spec.name.clone()));
    }
    let mut rec = Recorder::new(problem.x_star(), x0, stop)?;
    let mut sim = LoopSim::new(ss, x0)?;
    let start = problem.grad_count();
    loop {
        let x = sim.peek().ok_or(SimError::NotCausal)?;
        if let Some(trace) = rec.record(&x, None, problem.grad_count() - start)? {
            return Ok(trace);
        }
        sim.step(|y| problem.gradient(y));
    }
}

/// `x⁺ = x + ρ²(x − x⁻) − (δ + δρ² + β)(I + δQ)⁻¹(Qx − q)` with `x[−1] = x[0]`.
pub fn run_implicit_hb(
    budget: &RateBudget,
    rho: f64,
    problem: &QuadraticProblem,
    x0: &DVector<f64>,
    stop: StopCriteria,
) -> Result<Trace> {
    let spec = implicit_heavy_ball(budget, rho)?;
    let Some(IterationForm::ImplicitHeavyBall {
        momentum,
        gain,
        regularizer,
    }) = spec.iteration
    else {
        return Err(RunError::Unsupported(spec.name));
    };
    let d = problem.dim();
    let solver = Cholesky::new(DMatrix::identity(d, d) + &problem.q_mat * regularizer)
        .ok_or(RunError::FactorizationFailure)?;
    let mut rec = Recorder::new(problem.x_star(), x0, stop)?;
    let start = problem.grad_count();
    let (mut prev, mut x) = (x0.clone(), x0.clone());
    loop {
        if let Some(trace) = rec.record(&x, None, problem.grad_count() - start)? {
            return Ok(trace);
        }
        let dir = solver.solve(&problem.gradient(&x));
        let next = &x + (&x - &prev) * momentum - dir * gain;
        prev = std::mem::replace(&mut x, next);
    }
}

/// `x⁺ = prox_{αf}(x − β∇f(x))` with the prox computed by inner gradient
/// descent; every inner gradient is counted.
pub fn run_implicit_prox(
    budget: &RateBudget,
    rho: f64,
    problem: &dyn Smooth,
    x0: &DVector<f64>,
    stop: StopCriteria,
) -> Result<Trace> {
    let spec = implicit_gd(budget, rho)?;
    let Some(IterationForm::ImplicitGradient { alpha, beta }) = spec.iteration else {
        return Err(RunError::Unsupported(spec.name));
    };
    let mut rec = Recorder::new(problem.x_star(), x0, stop)?;
    let start = problem.grad_count();
    let mut x = x0.clone();
    loop {
        if let Some(trace) = rec.record(&x, None, problem.grad_count() - start)? {
            return Ok(trace);
        }
        let y = &x - problem.gradient(&x) * beta;
        x = prox_inner(problem, alpha, &y, INNER_CAP)?.point;
    }
}

/// Proximal gradient with step `2/(μ+ℓ)`; records the composite residual at
/// every iterate.
pub fn run_prox_grad(
    budget: &RateBudget,
    composite: &CompositeProblem,
    x0: &DVector<f64>,
    stop: StopCriteria,
) -> Result<Trace> {
    let step = 2.0 / (budget.mu() + budget.finite_ell()?);
    let h = &composite.h;
    let lambda = composite.lambda;
    let mut rec = Recorder::new(composite.x_star(), x0, stop)?;
    let start = h.grad_count();
    let mut x = x0.clone();
    loop {
        let g = h.gradient(&x);
        let r = crate::problems::residual_norm(&g, &x, lambda);
        if let Some(trace) = rec.record(&x, Some(r), h.grad_count() - start)? {
            return Ok(trace);
        }
        x = soft_threshold(&(&x - g * step), lambda * step);
    }
}
