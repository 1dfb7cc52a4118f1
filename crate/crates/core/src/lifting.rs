//! Lifting of scalar LTI and n-periodic algorithms to n×n time-invariant
//! systems in the slowed index τ, where `x_i[τ] = x[i − 1 + nτ]`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::gain_margin::{self, GainMarginError};
use crate::sim::{LoopSim, SimError};
use crate::transfer::{
    ComplexPoly, Polynomial, StateSpace, TransferError, TransferFunction, TransferMatrix,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LiftingError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("entry ({0}, {1}) of the lifted system is improper")]
    ImproperEntry(usize, usize),
    #[error("(z − 1)·G̃·1 still has a pole at 1 in row {0}")]
    HigherOrderPole(usize),
    #[error("period must be at least 1")]
    ZeroPeriod,
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    GainMargin(#[from] GainMarginError),
}

pub type Result<T> = std::result::Result<T, LiftingError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedSystem {
    pub period: usize,
    pub g_tilde: TransferMatrix,
}

/// Step sizes `α₁ … α_n` of periodic gradient descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGd")]
pub struct PeriodicGDSchedule {
    steps: Vec<f64>,
}

#[derive(Deserialize)]
struct RawGd {
    steps: Vec<f64>,
}

impl TryFrom<RawGd> for PeriodicGDSchedule {
    type Error = LiftingError;
    fn try_from(r: RawGd) -> Result<Self> {
        PeriodicGDSchedule::new(r.steps)
    }
}

impl PeriodicGDSchedule {
    pub fn new(steps: Vec<f64>) -> Result<Self> {
        if steps.is_empty() {
            return Err(LiftingError::InvalidSchedule("no steps".into()));
        }
        if steps.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(LiftingError::InvalidSchedule(
                "steps must be positive and finite".into(),
            ));
        }
        Ok(PeriodicGDSchedule { steps })
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn period(&self) -> usize {
        self.steps.len()
    }

    /// Step used to go from `x[t]` to `x[t+1]` in the grouping the lift
    /// encodes: `x₁[τ+1]` is produced from `x_n[τ]` with `α₁`, so step `t`
    /// uses `α_{(t+1) mod n + 1}`.
    pub fn step_at(&self, t: usize) -> f64 {
        self.steps[(t + 1) % self.steps.len()]
    }
}

/// Two-periodic momentum parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMomentum2")]
pub struct Momentum2Schedule {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub eta: [f64; 2],
}

#[derive(Deserialize)]
struct RawMomentum2 {
    alpha: [f64; 2],
    beta: [f64; 2],
    #[serde(default)]
    eta: [f64; 2],
}

impl TryFrom<RawMomentum2> for Momentum2Schedule {
    type Error = LiftingError;
    fn try_from(r: RawMomentum2) -> Result<Self> {
        Momentum2Schedule::new(r.alpha, r.beta, r.eta)
    }
}

impl Momentum2Schedule {
    pub fn new(alpha: [f64; 2], beta: [f64; 2], eta: [f64; 2]) -> Result<Self> {
        if alpha
            .iter()
            .chain(&beta)
            .chain(&eta)
            .any(|x| !x.is_finite())
        {
            return Err(LiftingError::InvalidSchedule("non-finite parameter".into()));
        }
        if (beta[0] * beta[1]).abs() >= 1.0 {
            return Err(LiftingError::InvalidSchedule(
                "|beta1 * beta2| must be < 1".into(),
            ));
        }
        Ok(Momentum2Schedule { alpha, beta, eta })
    }

    /// Parameter phase used for the step `x[t] → x[t+1]`, same grouping as
    /// [`PeriodicGDSchedule::step_at`].
    pub fn phase_at(t: usize) -> usize {
        (t + 1) % 2
    }
}

/// Polyphase components `P₁ … P_n` with
/// `G(z) = Σ_k z^{−(k−1)} P_k(zⁿ)`.
///
/// Multiplying numerator and denominator by `Π_{k≥1} D(ωᵏz)` makes the
/// denominator a polynomial in `zⁿ`; numerator terms are then sorted by
/// exponent class.
pub fn polyphase(g: &TransferFunction, n: usize) -> Result<Vec<TransferFunction>> {
    if n == 0 {
        return Err(LiftingError::ZeroPeriod);
    }
    if !g.is_proper() {
        return Err(TransferError::Improper.into());
    }
    if n == 1 {
        return Ok(vec![g.clone()]);
    }
    let den_c = ComplexPoly::from_real(g.den());
    let mut rest = ComplexPoly::one();
    for k in 1..n {
        let w = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64);
        rest = rest.mul(&den_c.scale_argument(w));
    }
    let full = den_c.mul(&rest).real_part();
    let num = ComplexPoly::from_real(g.num()).mul(&rest).real_part();

    let e_deg = full.degree() / n;
    let e = Polynomial::new((0..=e_deg).map(|q| full.coeff(q * n)).collect());
    let mut comps = vec![vec![0.0; e_deg + 1]; n];
    for (m, c) in num.coeffs().iter().enumerate() {
        let k = (n - m % n) % n;
        let q = (m + k) / n;
        if q > e_deg {
            return Err(TransferError::Improper.into());
        }
        comps[k][q] += c;
    }
    comps
        .into_iter()
        .map(|c| Ok(TransferFunction::new(Polynomial::new(c), e.clone())?.reduce()))
        .collect()
}

/// Block-circulant lift of a scalar LTI system: `P₁` on the diagonal,
/// `P_{i−j+1}` below it and `z⁻¹P_{n−(j−i)+1}` above.
pub fn lift_lti(g: &TransferFunction, n: usize) -> Result<LiftedSystem> {
    let p = polyphase(g, n)?;
    let delay = TransferFunction::delay();
    let g_tilde = TransferMatrix::from_fn(n, n, |i, j| {
        if i >= j {
            p[i - j].clone()
        } else {
            (&delay * &p[n - (j - i)]).reduce()
        }
    });
    Ok(LiftedSystem { period: n, g_tilde })
}

/// Lift of gradient descent with periodic steps: `(1/(z−1))·M` where row
/// `i` of `M` is `[α₂ … α_n, α₁]` with a factor `z` on the columns left of
/// the diagonal.
pub fn lift_periodic_gd(schedule: &PeriodicGDSchedule) -> LiftedSystem {
    let n = schedule.period();
    let a = schedule.steps();
    let g_tilde = TransferMatrix::from_fn(n, n, |i, j| {
        let (step, shifted) = if j == n - 1 {
            (a[0], false)
        } else {
            (a[j + 1], j < i)
        };
        let num = if shifted {
            Polynomial::monomial(step, 1)
        } else {
            Polynomial::constant(step)
        };
        TransferFunction::new(num, Polynomial::linear_root(1.0))
            .expect("degree one")
            .reduce()
    });
    LiftedSystem { period: n, g_tilde }
}

pub fn lift_momentum2(s: &Momentum2Schedule) -> Result<LiftedSystem> {
    let [a1, a2] = s.alpha;
    let [b1, b2] = s.beta;
    let [e1, e2] = s.eta;
    let den = &Polynomial::linear_root(1.0) * &Polynomial::linear_root(b1 * b2);
    let tf = |num: Vec<f64>| TransferFunction::new(Polynomial::new(num), den.clone());
    let left = TransferMatrix::from_rows(vec![
        vec![tf(vec![b2, 1.0])?, tf(vec![1.0 + b1])?],
        vec![tf(vec![0.0, 1.0 + b2])?, tf(vec![b1, 1.0])?],
    ])?;
    let right = TransferMatrix::from_rows(vec![
        vec![
            TransferFunction::constant(e1),
            TransferFunction::constant(a1),
        ],
        vec![
            TransferFunction::from_coeffs(&[0.0, a2], &[1.0])?,
            TransferFunction::constant(e2),
        ],
    ])?;
    let g_tilde = left.try_mul(&right)?.map(TransferFunction::reduce);
    Ok(LiftedSystem { period: 2, g_tilde })
}

fn feedthrough(sys: &LiftedSystem) -> Result<nalgebra::DMatrix<f64>> {
    let m = &sys.g_tilde;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if !m.get(i, j).is_proper() {
                return Err(LiftingError::ImproperEntry(i, j));
            }
        }
    }
    Ok(m.feedthrough()?)
}

/// True iff `G̃(∞)` is strictly lower triangular, i.e. each `x_i` depends
/// only on gradients at `x_1 … x_{i−1}` within the same block.
pub fn check_causal_structure(sys: &LiftedSystem) -> Result<bool> {
    let d = feedthrough(sys)?;
    Ok((0..d.nrows()).all(|i| (i..d.ncols()).all(|j| d[(i, j)].abs() < 1e-12)))
}

/// `h(1)` where `h(z) = (z − 1)·G̃(z)·1`.
pub fn accumulator_residue(sys: &LiftedSystem) -> Result<Vec<f64>> {
    let m = &sys.g_tilde;
    let diff = TransferFunction::from_coeffs(&[-1.0, 1.0], &[1.0])?;
    (0..m.rows())
        .map(|i| {
            let row = (0..m.cols()).fold(TransferFunction::zero(), |acc, j| &acc + m.get(i, j));
            let h = (&diff * &row).reduce();
            let dv = h.den().eval(1.0);
            if dv.abs() <= 1e-9 * h.den().norm1() {
                return Err(LiftingError::HigherOrderPole(i));
            }
            Ok(h.num().eval(1.0) / dv)
        })
        .collect()
}

/// The lifted loop sees exactly a simple accumulator along `1_n`: every
/// coordinate of the residue is nonzero.
pub fn check_accumulator_direction(sys: &LiftedSystem) -> Result<bool> {
    let r = accumulator_residue(sys)?;
    let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    Ok(r.iter().all(|v| v.abs() > 1e-12 * scale))
}

/// Feasibility of the gain-margin problem for period-`n` controllers:
/// `|p|^{−2n} > g^{2n}`. Equivalent to the time-invariant condition
/// `g < 1/|p|` for every `n`.
pub fn periodic_margin_condition(p: Complex64, k1: f64, k2: f64, n: usize) -> Result<bool> {
    if n == 0 {
        return Err(LiftingError::ZeroPeriod);
    }
    let r = p.norm();
    if !(r > 1.0) {
        return Err(GainMarginError::OutsideDisk(r).into());
    }
    let g = gain_margin::g_of(k1, k2)?;
    let e = 2 * n as i32;
    Ok(r.powi(-e) > g.powi(e))
}

/// Runs the lifted loop `u = −∇f(y)` for `blocks` outer steps from the
/// constant prehistory at `x0` and returns the regrouped trajectory
/// `x[0], x[1], …` of length `n·blocks`.
pub fn simulate_lifted<F>(
    sys: &LiftedSystem,
    x0: &DVector<f64>,
    blocks: usize,
    mut grad: F,
) -> Result<Vec<DVector<f64>>>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    if !check_causal_structure(sys)? {
        return Err(SimError::NotCausal.into());
    }
    let ss = StateSpace::from_matrix(&sys.g_tilde)?;
    let mut sim = LoopSim::new(&ss, x0)?;
    let mut out = Vec::with_capacity(sys.period * blocks);
    for _ in 0..blocks {
        out.extend(sim.step(&mut grad));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn tf(n: &[f64], d: &[f64]) -> TransferFunction {
        TransferFunction::from_coeffs(n, d).unwrap()
    }

    #[test]
    fn polyphase_examples() {
        let p = polyphase(&TransferFunction::delay(), 2).unwrap();
        assert!(p[0].is_zero());
        assert!(p[1].approx_eq(&TransferFunction::one(), 1e-12));

        let p = polyphase(&TransferFunction::accumulator(), 2).unwrap();
        assert!(p[0].approx_eq(&TransferFunction::accumulator(), 1e-12));
        assert!(p[1].approx_eq(&tf(&[0.0, 1.0], &[-1.0, 1.0]), 1e-12));

        let g = tf(&[0.3, 1.0], &[0.2, -0.9, 1.0]);
        let p = polyphase(&g, 1).unwrap();
        assert_eq!(p, vec![g]);
    }

    #[test]
    fn lti_lift_of_accumulator() {
        let l = lift_lti(&TransferFunction::accumulator(), 2).unwrap();
        let acc = TransferFunction::accumulator();
        let want = TransferMatrix::from_rows(vec![
            vec![acc.clone(), acc.clone()],
            vec![tf(&[0.0, 1.0], &[-1.0, 1.0]), acc],
        ])
        .unwrap();
        assert!(l.g_tilde.approx_eq(&want, 1e-12));
        let gd = lift_periodic_gd(&PeriodicGDSchedule::new(vec![0.4, 0.4]).unwrap());
        let lt = lift_lti(&TransferFunction::accumulator().scale(0.4), 2).unwrap();
        assert!(gd.g_tilde.approx_eq(&lt.g_tilde, 1e-12));
    }

    #[test]
    fn structure_checks() {
        let gd = lift_periodic_gd(&PeriodicGDSchedule::new(vec![0.1, 0.2, 0.3]).unwrap());
        assert!(check_causal_structure(&gd).unwrap());
        assert!(check_accumulator_direction(&gd).unwrap());
        for r in accumulator_residue(&gd).unwrap() {
            assert!((r - 0.6).abs() < 1e-12);
        }

        let eye = LiftedSystem {
            period: 2,
            g_tilde: TransferMatrix::identity(2),
        };
        assert!(!check_causal_structure(&eye).unwrap());
        assert!(!check_accumulator_direction(&eye).unwrap());

        let biproper = tf(&[0.5, 1.0], &[-0.5, 1.0]);
        assert!(!check_causal_structure(&lift_lti(&biproper, 3).unwrap()).unwrap());

        let improper = LiftedSystem {
            period: 1,
            g_tilde: TransferMatrix::from_rows(vec![vec![TransferFunction::z()]]).unwrap(),
        };
        assert_eq!(
            check_causal_structure(&improper),
            Err(LiftingError::ImproperEntry(0, 0))
        );

        let double = LiftedSystem {
            period: 1,
            g_tilde: TransferMatrix::from_rows(vec![vec![tf(&[1.0], &[1.0, -2.0, 1.0])]]).unwrap(),
        };
        assert_eq!(
            check_accumulator_direction(&double),
            Err(LiftingError::HigherOrderPole(0))
        );
    }

    #[test]
    fn momentum2_without_momentum_is_periodic_gd() {
        let m =
            lift_momentum2(&Momentum2Schedule::new([0.1, 0.3], [0.0, 0.0], [0.0, 0.0]).unwrap())
                .unwrap();
        let gd = lift_periodic_gd(&PeriodicGDSchedule::new(vec![0.1, 0.3]).unwrap());
        assert!(m.g_tilde.approx_eq(&gd.g_tilde, 1e-12));
        assert!(check_causal_structure(&m).unwrap());
    }

    #[test]
    fn periodic_gd_matches_direct_recursion() {
        let s = PeriodicGDSchedule::new(vec![0.1, 0.2, 0.3]).unwrap();
        let sys = lift_periodic_gd(&s);
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 4.0]));
        let grad = |x: &DVector<f64>| &q * x;
        let x0 = DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let lifted = simulate_lifted(&sys, &x0, 20, grad).unwrap();
        let mut x = x0.clone();
        for (t, y) in lifted.iter().enumerate() {
            assert!((y - &x).norm() < 1e-12, "t = {t}");
            x = &x - grad(&x) * s.step_at(t);
        }
    }

    #[test]
    fn periodic_condition_matches_time_invariant() {
        let p = Complex64::new(1.25, 0.0);
        let k1 = 0.1;
        let k2 = 8.0;
        let base = periodic_margin_condition(p, k1, k2, 1).unwrap();
        for n in [2, 3, 5] {
            assert_eq!(periodic_margin_condition(p, k1, k2, n).unwrap(), base);
        }
        assert!(base);
    }

    #[test]
    fn schedule_validation() {
        assert!(PeriodicGDSchedule::new(vec![]).is_err());
        assert!(PeriodicGDSchedule::new(vec![0.1, -0.2]).is_err());
        assert!(Momentum2Schedule::new([0.1; 2], [1.0, 1.0], [0.0; 2]).is_err());
        let s: PeriodicGDSchedule = serde_json::from_str(r#"{"steps":[0.1,0.2]}"#).unwrap();
        assert_eq!(s.period(), 2);
        assert!(serde_json::from_str::<PeriodicGDSchedule>(r#"{"steps":[0.0]}"#).is_err());
    }
}
