//! Gain-margin synthesis: conformal maps onto the disk, Pick feasibility,
//! Nevanlinna–Pick interpolation by Schur recursion, and controller recovery.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::ExecPolicy;
use crate::transfer::{ComplexPoly, Polynomial, TransferError, TransferFunction};

/// Pick matrix is declared positive definite when `λ_min > PICK_REL · λ_max`.
pub const PICK_REL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GainMarginError {
    #[error("gain interval must satisfy 0 < k1 < k2 (got k1 = {k1}, k2 = {k2})")]
    BadInterval { k1: f64, k2: f64 },
    #[error("value {re} + {im}i lies in the forbidden set of the conformal map")]
    ForbiddenValue { re: f64, im: f64 },
    #[error("argument with modulus {0} is outside the open unit disk")]
    OutsideDisk(f64),
    #[error("pole modulus {0} is not greater than one")]
    StablePole(f64),
    #[error("invalid interpolation node: {0}")]
    InvalidNode(String),
    #[error("duplicate interpolation node")]
    DuplicateNode,
    #[error("interpolation data is infeasible (Pick matrix not positive definite)")]
    Infeasible,
    #[error("interpolant has complex coefficients; nodes must be closed under conjugation")]
    NonReal,
    #[error("degenerate data: {0}")]
    Degenerate(&'static str),
    #[error("nominal closed loop is unstable")]
    NominalUnstable,
    #[error(transparent)]
    Transfer(#[from] TransferError),
}

type Result<T> = std::result::Result<T, GainMarginError>;

fn check_interval(k1: f64, k2: f64) -> Result<()> {
    if !(k1 > 0.0 && k2 > k1 && k1.is_finite() && k2.is_finite()) {
        return Err(GainMarginError::BadInterval { k1, k2 });
    }
    Ok(())
}

/// `(√(k2/k1) − 1)/(√(k2/k1) + 1)`, the image of 1 under the conformal map.
pub fn g_of(k1: f64, k2: f64) -> Result<f64> {
    check_interval(k1, k2)?;
    let r = (k2 / k1).sqrt();
    Ok((r - 1.0) / (r + 1.0))
}

fn in_forbidden_set(zeta: Complex64, k1: f64, k2: f64) -> bool {
    if zeta.im.abs() > 1e-15 * zeta.norm().max(1.0) {
        return false;
    }
    1.0 + (k1 - 1.0) * zeta.re <= 0.0 || 1.0 + (k2 - 1.0) * zeta.re <= 0.0
}

/// `Φ(ζ) = (√(1+(k2−1)ζ) − √(1+(k1−1)ζ)) / (√(1+(k2−1)ζ) + √(1+(k1−1)ζ))`,
/// principal branch.
pub fn phi_forward(zeta: Complex64, k1: f64, k2: f64) -> Result<Complex64> {
    check_interval(k1, k2)?;
    if in_forbidden_set(zeta, k1, k2) {
        return Err(GainMarginError::ForbiddenValue {
            re: zeta.re,
            im: zeta.im,
        });
    }
    let a = (1.0 + (k2 - 1.0) * zeta).sqrt();
    let b = (1.0 + (k1 - 1.0) * zeta).sqrt();
    Ok((a - b) / (a + b))
}

/// Inverse of [`phi_forward`] on the open unit disk; `u = 0` maps to `0`.
pub fn phi_inverse(u: Complex64, k1: f64, k2: f64) -> Result<Complex64> {
    check_interval(k1, k2)?;
    let m = u.norm();
    if m >= 1.0 || !m.is_finite() {
        return Err(GainMarginError::OutsideDisk(m));
    }
    if m == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let denom = (k2 - k1) / 4.0 * (u + u.inv()) - (k1 + k2) / 2.0 + 1.0;
    Ok(denom.inv())
}

/// `Φ⁻¹ ∘ T` as a rational function.
pub fn phi_inverse_tf(t: &TransferFunction, k1: f64, k2: f64) -> Result<TransferFunction> {
    check_interval(k1, k2)?;
    if t.is_zero() {
        return Ok(TransferFunction::zero());
    }
    let (n, d) = (t.num(), t.den());
    let nd = n * d;
    let num = nd.scale(4.0);
    let den = &(&(n * n) + &(d * d)).scale(k2 - k1) - &nd.scale(2.0 * (k1 + k2) - 4.0);
    if den.is_zero() {
        return Err(GainMarginError::Degenerate("Φ⁻¹∘T has a zero denominator"));
    }
    Ok(TransferFunction::new(num, den)?.reduce())
}

/// Nominal plant data for the gain-margin problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSpec {
    pub p: Complex64,
    pub k1: f64,
    pub k2: f64,
    #[serde(default = "default_true")]
    pub zero_at_infinity: bool,
}

fn default_true() -> bool {
    true
}

impl MarginSpec {
    pub fn new(p: Complex64, k1: f64, k2: f64, zero_at_infinity: bool) -> Result<Self> {
        let s = MarginSpec {
            p,
            k1,
            k2,
            zero_at_infinity,
        };
        s.validate()?;
        Ok(s)
    }

    /// Symmetric interval `[1/√r, √r]` for a margin ratio `r = k2/k1`.
    pub fn symmetric(p: Complex64, ratio: f64) -> Result<Self> {
        let s = ratio.sqrt();
        Self::new(p, 1.0 / s, s, true)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.norm() <= 1.0 {
            return Err(GainMarginError::StablePole(self.p.norm()));
        }
        if !(self.k1 > 0.0 && self.k1 < 1.0 && self.k2 > 1.0 && self.k2.is_finite()) {
            return Err(GainMarginError::BadInterval {
                k1: self.k1,
                k2: self.k2,
            });
        }
        Ok(())
    }

    /// Supremum of `k2/k1`; unbounded without the zero at infinity.
    pub fn optimal_margin(&self) -> Result<f64> {
        if !self.zero_at_infinity {
            return Ok(f64::INFINITY);
        }
        optimal_margin(self.p)
    }
}

pub fn margin_feasible(spec: &MarginSpec) -> Result<bool> {
    spec.validate()?;
    if !spec.zero_at_infinity {
        return Ok(true);
    }
    Ok(g_of(spec.k1, spec.k2)? < 1.0 / spec.p.norm())
}

/// `((|p|+1)/(|p|−1))²`.
pub fn optimal_margin(p: Complex64) -> Result<f64> {
    let m = p.norm();
    if m <= 1.0 {
        return Err(GainMarginError::StablePole(m));
    }
    let r = (m + 1.0) / (m - 1.0);
    Ok(r * r)
}

/// A point of the closed exterior of the unit disk, infinity included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodePoint {
    Finite(Complex64),
    Infinity,
}

impl NodePoint {
    /// Image under `z ↦ 1/z`.
    pub fn to_disk(self) -> Complex64 {
        match self {
            NodePoint::Finite(z) => z.inv(),
            NodePoint::Infinity => Complex64::new(0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationNode {
    pub node: NodePoint,
    pub value: Complex64,
}

impl InterpolationNode {
    pub fn finite(z: Complex64, value: Complex64) -> Self {
        InterpolationNode {
            node: NodePoint::Finite(z),
            value,
        }
    }

    pub fn infinity(value: Complex64) -> Self {
        InterpolationNode {
            node: NodePoint::Infinity,
            value,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let NodePoint::Finite(z) = self.node {
            if !(z.norm() > 1.0 + 1e-12) || !z.norm().is_finite() {
                return Err(GainMarginError::InvalidNode(format!(
                    "node modulus {} must exceed one",
                    z.norm()
                )));
            }
        }
        if !(self.value.norm() < 1.0) {
            return Err(GainMarginError::InvalidNode(format!(
                "value modulus {} must be below one",
                self.value.norm()
            )));
        }
        Ok(())
    }
}

fn disk_data(nodes: &[InterpolationNode]) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    if nodes.is_empty() {
        return Err(GainMarginError::InvalidNode("no nodes given".into()));
    }
    for n in nodes {
        n.validate()?;
    }
    let zeta: Vec<Complex64> = nodes.iter().map(|n| n.node.to_disk()).collect();
    for i in 0..zeta.len() {
        for j in 0..i {
            if (zeta[i] - zeta[j]).norm() <= 1e-12 {
                return Err(GainMarginError::DuplicateNode);
            }
        }
    }
    Ok((zeta, nodes.iter().map(|n| n.value).collect()))
}

/// Pick matrix `(1 − w_i w̄_j)/(1 − ζ_i ζ̄_j)` with `ζ = 1/z`, and whether it
/// is positive definite.
pub fn pick_feasible(nodes: &[InterpolationNode]) -> Result<(DMatrix<Complex64>, bool)> {
    let (zeta, w) = disk_data(nodes)?;
    let n = zeta.len();
    let one = Complex64::new(1.0, 0.0);
    let m = DMatrix::from_fn(n, n, |i, j| {
        (one - w[i] * w[j].conj()) / (one - zeta[i] * zeta[j].conj())
    });
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((m, hi > 0.0 && lo > PICK_REL * hi))
}

/// Central Nevanlinna–Pick interpolant: analytic on `|z| > 1` including
/// infinity, modulus below one there, and `f(node_i) = value_i`.
pub fn np_solve(nodes: &[InterpolationNode]) -> Result<TransferFunction> {
    let (_, ok) = pick_feasible(nodes)?;
    if !ok {
        return Err(GainMarginError::Infeasible);
    }
    let (zeta, w) = disk_data(nodes)?;
    let (num, den) = schur(&zeta, &w)?;
    // back to z: f(1/z), clearing the common power of z
    let len = num.0.len().max(den.0.len());
    let num_z = num.reversed(len);
    let den_z = den.reversed(len);
    let lead = den_z.coeff(len - 1);
    let num_z = num_z.scale(lead.inv());
    let den_z = den_z.scale(lead.inv());
    const IMAG_TOL: f64 = 1e-8;
    if num_z.max_imag_ratio() > IMAG_TOL || den_z.max_imag_ratio() > IMAG_TOL {
        return Err(GainMarginError::NonReal);
    }
    Ok(TransferFunction::new(num_z.real_part(), den_z.real_part())?.reduce())
}

/// Schur recursion in the disk variable; returns numerator and denominator.
fn schur(zeta: &[Complex64], w: &[Complex64]) -> Result<(ComplexPoly, ComplexPoly)> {
    let one = Complex64::new(1.0, 0.0);
    let (z0, w0) = (zeta[0], w[0]);
    if zeta.len() == 1 {
        return Ok((ComplexPoly::constant(w0), ComplexPoly::one()));
    }
    let b0 = |x: Complex64| (x - z0) / (one - z0.conj() * x);
    let mut w_next = Vec::with_capacity(w.len() - 1);
    for k in 1..zeta.len() {
        let v = (w[k] - w0) / ((one - w0.conj() * w[k]) * b0(zeta[k]));
        if !(v.norm() < 1.0) {
            return Err(GainMarginError::Infeasible);
        }
        w_next.push(v);
    }
    let (n1, d1) = schur(&zeta[1..], &w_next)?;
    let bn = ComplexPoly(vec![-z0, one]);
    let bd = ComplexPoly(vec![one, -z0.conj()]);
    let bd_d1 = bd.mul(&d1);
    let bn_n1 = bn.mul(&n1);
    let num = bd_d1.scale(w0).add(&bn_n1);
    let den = bd_d1.add(&bn_n1.scale(w0.conj()));
    let s = den
        .0
        .iter()
        .chain(&num.0)
        .fold(0.0f64, |m, c| m.max(c.norm()));
    let inv = Complex64::new(1.0 / s, 0.0);
    Ok((num.scale(inv), den.scale(inv)))
}

/// `C = T / (P0 (1 − T))`.
pub fn recover_controller(t: &TransferFunction, p0: &TransferFunction) -> Result<TransferFunction> {
    if p0.is_zero() {
        return Err(GainMarginError::Degenerate("nominal plant is zero"));
    }
    if t.is_zero() {
        return Ok(TransferFunction::zero());
    }
    let diff = t.den() - t.num();
    if diff.is_zero() || diff.max_abs_coeff() <= 1e-12 * t.den().max_abs_coeff() {
        return Err(GainMarginError::Degenerate("T ≡ 1"));
    }
    let num = t.num() * p0.den();
    let den = p0.num() * &diff;
    Ok(TransferFunction::new(num, den)?.reduce())
}

fn max_root_modulus(p: &Polynomial) -> f64 {
    p.roots().iter().map(|r| r.norm()).fold(0.0, f64::max)
}

/// Checks closed-loop stability of `k·P0` with `C` on a log grid of `k`
/// over `[k1, k2]`.
pub fn margin_verify(
    p0: &TransferFunction,
    c: &TransferFunction,
    k1: f64,
    k2: f64,
    grid: usize,
) -> Result<bool> {
    margin_verify_with(p0, c, k1, k2, grid, ExecPolicy::default())
}

pub fn margin_verify_with(
    p0: &TransferFunction,
    c: &TransferFunction,
    k1: f64,
    k2: f64,
    grid: usize,
    policy: ExecPolicy,
) -> Result<bool> {
    check_interval(k1, k2)?;
    const MARGIN: f64 = 1e-12;
    let open = p0.den() * c.den();
    let gain = p0.num() * c.num();
    let charpoly = |k: f64| &open + &gain.scale(k);
    if max_root_modulus(&charpoly(1.0)) >= 1.0 - MARGIN {
        return Err(GainMarginError::NominalUnstable);
    }
    let grid = grid.max(2);
    let ratio = (k2 / k1).ln();
    let worst = policy.map_range(grid, |i| {
        let k = k1 * (ratio * i as f64 / (grid - 1) as f64).exp();
        max_root_modulus(&charpoly(k))
    });
    Ok(worst.iter().all(|m| *m < 1.0 - MARGIN))
}

/// Optimal complementary sensitivity and controller for a single unstable
/// real pole with a zero at infinity: `T = Φ⁻¹(g·p/z)` and `C` from `P0`.
pub fn optimal_single_pole(
    p0: &TransferFunction,
    spec: &MarginSpec,
) -> Result<(TransferFunction, TransferFunction)> {
    spec.validate()?;
    if spec.p.im != 0.0 {
        return Err(GainMarginError::NonReal);
    }
    let g = g_of(spec.k1, spec.k2)?;
    let bold_t = np_solve(&[
        InterpolationNode::infinity(Complex64::new(0.0, 0.0)),
        InterpolationNode::finite(spec.p, Complex64::new(g, 0.0)),
    ])?;
    let t = phi_inverse_tf(&bold_t, spec.k1, spec.k2)?;
    let c = recover_controller(&t, p0)?;
    Ok((t, c))
}
