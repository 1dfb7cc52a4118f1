//! Closed-loop simulation of a realization driven by `u = −∇f(y)`.
//!
//! Outputs are produced channel by channel within a step, so a strictly
//! lower-triangular feedthrough is allowed (lifted periodic algorithms).
//! Every coordinate of the decision vector runs through the same
//! realization, so states are stored as an `N × d` matrix.

use nalgebra::{DMatrix, DVector};

use crate::transfer::StateSpace;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("feedthrough is not strictly lower triangular; the loop is not causal")]
    NotCausal,
    #[error("realization has no constant-output equilibrium (missing accumulator)")]
    NoEquilibrium,
    #[error("initial point has dimension {got}, expected {want}")]
    Dimension { got: usize, want: usize },
}

/// State direction `ξ` with `Aξ = ξ` and `Cξ = 1`: the realization at rest
/// with every output equal to one and zero input.
pub(crate) fn equilibrium_direction(ss: &StateSpace) -> Result<DVector<f64>, SimError> {
    let n = ss.states();
    let p = ss.outputs();
    if n == 0 {
        return Err(SimError::NoEquilibrium);
    }
    let mut m = DMatrix::zeros(n + p, n);
    m.view_mut((0, 0), (n, n))
        .copy_from(&(&ss.a - DMatrix::identity(n, n)));
    m.view_mut((n, 0), (p, n)).copy_from(&ss.c);
    let mut rhs = DVector::zeros(n + p);
    rhs.rows_mut(n, p).fill(1.0);
    let svd = m.clone().svd(true, true);
    let xi = svd
        .solve(&rhs, 1e-12)
        .map_err(|_| SimError::NoEquilibrium)?;
    let res = (&m * &xi - &rhs).norm();
    if !(res <= 1e-9 * (1.0 + xi.norm())) {
        return Err(SimError::NoEquilibrium);
    }
    Ok(xi)
}

pub(crate) struct LoopSim<'a> {
    ss: &'a StateSpace,
    /// `N × d`
    state: DMatrix<f64>,
    dim: usize,
}

impl<'a> LoopSim<'a> {
    /// Starts at rest with all outputs equal to `x0` and zero past input.
    pub fn new(ss: &'a StateSpace, x0: &DVector<f64>) -> Result<Self, SimError> {
        let p = ss.outputs();
        for i in 0..p {
            for j in i..ss.inputs().min(p) {
                if ss.d[(i, j)] != 0.0 {
                    return Err(SimError::NotCausal);
                }
            }
        }
        let xi = equilibrium_direction(ss)?;
        Ok(LoopSim {
            ss,
            state: &xi * x0.transpose(),
            dim: x0.len(),
        })
    }

    /// Current first output when the realization has no feedthrough, so the
    /// next iterate can be inspected without spending a gradient.
    pub fn peek(&self) -> Option<DVector<f64>> {
        if self.ss.d.iter().any(|v| *v != 0.0) {
            return None;
        }
        Some((self.ss.c.row(0) * &self.state).transpose())
    }

    /// One step: returns the `p` outputs in channel order. `grad` is called
    /// once per output.
    pub fn step<F>(&mut self, mut grad: F) -> Vec<DVector<f64>>
    where
        F: FnMut(&DVector<f64>) -> DVector<f64>,
    {
        let p = self.ss.outputs();
        let m = self.ss.inputs();
        let base = &self.ss.c * &self.state; // p × d
        let mut outs: Vec<DVector<f64>> = Vec::with_capacity(p);
        let mut inputs = DMatrix::zeros(m, self.dim);
        for i in 0..p {
            let mut y: DVector<f64> = base.row(i).transpose();
            for j in 0..i.min(m) {
                let dij = self.ss.d[(i, j)];
                if dij != 0.0 {
                    y.axpy(dij, &inputs.row(j).transpose(), 1.0);
                }
            }
            if i < m {
                let u = -grad(&y);
                inputs.row_mut(i).copy_from(&u.transpose());
            }
            outs.push(y);
        }
        self.state = &self.ss.a * &self.state + &self.ss.b * &inputs;
        outs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::TransferFunction;

    #[test]
    fn gradient_descent_loop() {
        let alpha = 0.1;
        let g = TransferFunction::accumulator().scale(alpha);
        let ss = StateSpace::from_tf(&g).unwrap();
        let x0 = DVector::from_vec(vec![1.0, -2.0]);
        let mut sim = LoopSim::new(&ss, &x0).unwrap();
        let grad = |x: &DVector<f64>| x * 3.0;
        let mut x = x0.clone();
        for _ in 0..20 {
            let y = sim.step(grad);
            assert!((&y[0] - &x).norm() < 1e-14);
            x = &x - grad(&x) * alpha;
        }
    }

    #[test]
    fn rejects_missing_accumulator() {
        let g = TransferFunction::from_coeffs(&[1.0], &[-0.5, 1.0]).unwrap();
        let ss = StateSpace::from_tf(&g).unwrap();
        assert!(matches!(
            LoopSim::new(&ss, &DVector::zeros(1)),
            Err(SimError::NoEquilibrium)
        ));
    }
}
