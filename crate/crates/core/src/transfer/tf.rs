use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::polynomial::Polynomial;
use super::TransferError;

/// Largest numerator/denominator degree accepted by the public constructor.
pub const MAX_DEGREE: usize = 32;

/// Relative residual below which a numerator root is treated as a common
/// root of the denominator.
pub const CANCELLATION_TOL: f64 = 1e-9;

/// Largest root separation still considered for cancellation; roots of
/// multiplicity up to three are resolved to about this accuracy.
const ROOT_MATCH_TOL: f64 = 1e-5;

/// Relative size of `|den(z)|` under which evaluation reports a pole.
const POLE_EVAL_TOL: f64 = 1e-13;

/// Real rational function `num(z) / den(z)` with a monic denominator.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransferFunction", into = "RawTransferFunction")]
pub struct TransferFunction {
    num: Polynomial,
    den: Polynomial,
}

#[derive(Serialize, Deserialize)]
struct RawTransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl TryFrom<RawTransferFunction> for TransferFunction {
    type Error = TransferError;
    fn try_from(raw: RawTransferFunction) -> Result<Self, Self::Error> {
        TransferFunction::new(Polynomial::new(raw.num), Polynomial::new(raw.den))
    }
}

impl From<TransferFunction> for RawTransferFunction {
    fn from(tf: TransferFunction) -> Self {
        RawTransferFunction {
            num: tf.num.into(),
            den: tf.den.into(),
        }
    }
}

impl fmt::Debug for TransferFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?}) / ({:?})", self.num.coeffs(), self.den.coeffs())
    }
}

impl TransferFunction {
    /// Builds `num/den`, normalizing the denominator to be monic.
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self, TransferError> {
        if den.is_zero() {
            return Err(TransferError::ZeroDenominator);
        }
        let deg = num.degree().max(den.degree());
        if deg > MAX_DEGREE {
            return Err(TransferError::DegreeLimit(deg));
        }
        Ok(Self::from_parts(num, den))
    }

    /// Convenience constructor from ascending coefficient slices.
    pub fn from_coeffs(num: &[f64], den: &[f64]) -> Result<Self, TransferError> {
        Self::new(Polynomial::new(num.to_vec()), Polynomial::new(den.to_vec()))
    }

    /// Internal constructor without the degree guard; `den` must be nonzero.
    pub(crate) fn from_parts(num: Polynomial, den: Polynomial) -> Self {
        debug_assert!(!den.is_zero());
        if num.is_zero() {
            return Self::zero();
        }
        let lead = den.leading();
        TransferFunction {
            num: num.scale(1.0 / lead),
            den: den.scale(1.0 / lead),
        }
    }

    pub fn zero() -> Self {
        TransferFunction {
            num: Polynomial::zero(),
            den: Polynomial::one(),
        }
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::from_parts(Polynomial::constant(c), Polynomial::one())
    }

    /// The shift `z`.
    pub fn z() -> Self {
        Self::from_parts(Polynomial::monomial(1.0, 1), Polynomial::one())
    }

    /// The unit delay `1/z`.
    pub fn delay() -> Self {
        Self::from_parts(Polynomial::one(), Polynomial::monomial(1.0, 1))
    }

    /// Discrete-time accumulator `1/(z − 1)`.
    pub fn accumulator() -> Self {
        Self::from_parts(Polynomial::one(), Polynomial::linear_root(1.0))
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_proper(&self) -> bool {
        self.num.degree() <= self.den.degree() || self.num.is_zero()
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.num.is_zero() || self.num.degree() < self.den.degree()
    }

    /// `G(∞)`.
    pub fn feedthrough(&self) -> Result<f64, TransferError> {
        if !self.is_proper() {
            return Err(TransferError::Improper);
        }
        if self.is_strictly_proper() {
            Ok(0.0)
        } else {
            Ok(self.num.leading() / self.den.leading())
        }
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64, TransferError> {
        let d = self.den.eval_complex(z);
        if d.norm() <= POLE_EVAL_TOL * self.den.magnitude_at(z) {
            return Err(TransferError::PoleEvaluation { re: z.re, im: z.im });
        }
        Ok(self.num.eval_complex(z) / d)
    }

    /// Evaluation without the pole check; returns inf/NaN at poles.
    pub fn eval_unchecked(&self, z: Complex64) -> Complex64 {
        self.num.eval_complex(z) / self.den.eval_complex(z)
    }

    pub fn eval_real(&self, x: f64) -> Result<f64, TransferError> {
        self.eval(Complex64::new(x, 0.0)).map(|c| c.re)
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.den.roots()
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        if self.num.is_zero() {
            Vec::new()
        } else {
            self.num.roots()
        }
    }

    /// `(poles, zeros)` of the reduced function, with multiplicity.
    pub fn poles_zeros(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        let r = self.reduce();
        (r.poles(), r.zeros())
    }

    /// True iff every pole lies strictly inside the disk of the given radius
    /// (with a small absolute margin).
    pub fn is_rho_stable(&self, radius: f64) -> bool {
        const MARGIN: f64 = 1e-12;
        self.poles().iter().all(|p| p.norm() < radius - MARGIN)
    }

    /// Denominator of the closed loop `1 + λG = 0`, i.e. `den + λ·num`, monic.
    pub fn closed_loop_charpoly(&self, lambda: f64) -> Polynomial {
        (&self.den + &self.num.scale(lambda)).monic()
    }

    /// `G(γ z)`.
    pub fn scale_argument(&self, gamma: f64) -> Self {
        Self::from_parts(
            self.num.scale_argument(gamma),
            self.den.scale_argument(gamma),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_parts(self.num.scale(s), self.den.clone())
    }

    /// Cancels numerator/denominator roots that coincide within
    /// [`CANCELLATION_TOL`]. Roots are first grouped into clusters, so a
    /// repeated root is cancelled at its centroid, which is far more
    /// accurate than any single member.
    pub fn reduce(&self) -> Self {
        if self.num.is_zero() {
            return Self::zero();
        }
        if self.num.degree() == 0 || self.den.degree() == 0 {
            return self.clone();
        }
        let zeros = clusters(&self.num.roots());
        let mut poles = clusters(&self.den.roots());
        let mut num = self.num.clone();
        let mut den = self.den.clone();
        for zc in zeros.iter().filter(|c| !is_lower_half(c.center)) {
            let z = zc.center;
            let cand = poles
                .iter_mut()
                .filter(|c| {
                    c.mult > 0 && !is_lower_half(c.center) && is_real(c.center) == is_real(z)
                })
                .min_by(|a, b| {
                    (a.center - z)
                        .norm()
                        .partial_cmp(&(b.center - z).norm())
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
            let Some(pc) = cand else { continue };
            let p = pc.center;
            // near repeated roots the residual alone is too permissive
            if (p - z).norm() > ROOT_MATCH_TOL * z.norm().max(1.0) {
                continue;
            }
            let r_den = self.den.eval_complex(z).norm() / self.den.magnitude_at(z);
            let r_num = self.num.eval_complex(p).norm() / self.num.magnitude_at(p);
            if r_den > CANCELLATION_TOL || r_num > CANCELLATION_TOL {
                continue;
            }
            let k = zc.mult.min(pc.mult);
            pc.mult -= k;
            let mid = (z + p) * 0.5;
            let factor = if is_real(z) {
                Polynomial::linear_root(mid.re)
            } else {
                Polynomial::new(vec![mid.norm_sqr(), -2.0 * mid.re, 1.0])
            };
            for _ in 0..k {
                num = num.div_rem(&factor).0;
                den = den.div_rem(&factor).0;
            }
        }
        Self::from_parts(num, den)
    }

    /// Coefficient-wise comparison after reduction.
    pub fn approx_eq(&self, other: &TransferFunction, tol: f64) -> bool {
        let a = self.reduce();
        let b = other.reduce();
        a.num.approx_eq(&b.num, tol) && a.den.approx_eq(&b.den, tol)
    }

    pub fn inverse(&self) -> Result<Self, TransferError> {
        if self.num.is_zero() {
            return Err(TransferError::Singular);
        }
        Ok(Self::from_parts(self.den.clone(), self.num.clone()).reduce())
    }

    pub fn div(&self, rhs: &TransferFunction) -> Result<Self, TransferError> {
        Ok(self * &rhs.inverse()?)
    }

    fn combine(&self, rhs: &TransferFunction, sign: f64) -> Self {
        if self.den == rhs.den {
            let num = clean_sum(&self.num, &rhs.num.scale(sign));
            return Self::from_parts(num, self.den.clone()).reduce();
        }
        let num = clean_sum(&(&self.num * &rhs.den), &(&rhs.num * &self.den).scale(sign));
        Self::from_parts(num, &self.den * &rhs.den).reduce()
    }
}

/// `a + b` with coefficients lost to cancellation set to zero.
fn clean_sum(a: &Polynomial, b: &Polynomial) -> Polynomial {
    const CANCEL_REL: f64 = 1e-14;
    let scale = a.max_abs_coeff().max(b.max_abs_coeff());
    let n = a.coeffs().len().max(b.coeffs().len());
    Polynomial::new(
        (0..n)
            .map(|k| {
                let s = a.coeff(k) + b.coeff(k);
                if s.abs() <= CANCEL_REL * scale {
                    0.0
                } else {
                    s
                }
            })
            .collect(),
    )
}

struct Cluster {
    center: Complex64,
    mult: usize,
}

/// Groups roots closer than [`ROOT_MATCH_TOL`]; a split repeated real root
/// becomes one real cluster.
fn clusters(roots: &[Complex64]) -> Vec<Cluster> {
    let mut taken = vec![false; roots.len()];
    let mut out = Vec::new();
    for i in 0..roots.len() {
        if taken[i] {
            continue;
        }
        let tol = ROOT_MATCH_TOL * roots[i].norm().max(1.0);
        let mut sum = Complex64::new(0.0, 0.0);
        let mut mult = 0;
        for j in i..roots.len() {
            if !taken[j] && (roots[j] - roots[i]).norm() <= tol {
                taken[j] = true;
                sum += roots[j];
                mult += 1;
            }
        }
        let mut center = sum / mult as f64;
        if is_real(center) {
            center.im = 0.0;
        }
        out.push(Cluster { center, mult });
    }
    out
}

fn is_real(z: Complex64) -> bool {
    z.im.abs() <= 1e-10 * z.norm().max(1.0)
}

fn is_lower_half(z: Complex64) -> bool {
    !is_real(z) && z.im < 0.0
}

impl Add for &TransferFunction {
    type Output = TransferFunction;
    fn add(self, rhs: &TransferFunction) -> TransferFunction {
        self.combine(rhs, 1.0)
    }
}

impl Sub for &TransferFunction {
    type Output = TransferFunction;
    fn sub(self, rhs: &TransferFunction) -> TransferFunction {
        self.combine(rhs, -1.0)
    }
}

impl Mul for &TransferFunction {
    type Output = TransferFunction;
    fn mul(self, rhs: &TransferFunction) -> TransferFunction {
        if self.is_zero() || rhs.is_zero() {
            return TransferFunction::zero();
        }
        TransferFunction::from_parts(&self.num * &rhs.num, &self.den * &rhs.den).reduce()
    }
}

impl Neg for &TransferFunction {
    type Output = TransferFunction;
    fn neg(self) -> TransferFunction {
        self.scale(-1.0)
    }
}

impl Add for TransferFunction {
    type Output = TransferFunction;
    fn add(self, rhs: TransferFunction) -> TransferFunction {
        &self + &rhs
    }
}

impl Sub for TransferFunction {
    type Output = TransferFunction;
    fn sub(self, rhs: TransferFunction) -> TransferFunction {
        &self - &rhs
    }
}

impl Mul for TransferFunction {
    type Output = TransferFunction;
    fn mul(self, rhs: TransferFunction) -> TransferFunction {
        &self * &rhs
    }
}

/// Complementary sensitivity and sensitivity of the unity negative-feedback
/// loop around `P·C`.
#[derive(Debug, Clone)]
pub struct LoopFunctions {
    pub t: TransferFunction,
    pub s: TransferFunction,
}

/// `T = PC/(1+PC)`, `S = 1/(1+PC)`.
pub fn feedback(
    plant: &TransferFunction,
    controller: &TransferFunction,
) -> Result<LoopFunctions, TransferError> {
    let ln = plant.num() * controller.num();
    let ld = plant.den() * controller.den();
    let char_poly = &ld + &ln;
    if char_poly.is_zero() {
        return Err(TransferError::SingularLoop);
    }
    Ok(LoopFunctions {
        t: TransferFunction::from_parts(ln, char_poly.clone()).reduce(),
        s: TransferFunction::from_parts(ld, char_poly).reduce(),
    })
}
