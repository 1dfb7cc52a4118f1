use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Coefficients smaller than this fraction of the largest one are treated as
/// round-off when trimming the leading end.
const TRIM_REL: f64 = 1e-14;

/// Real polynomial in `z`, coefficients in ascending degree.
///
/// The zero polynomial is stored as the single coefficient `0`; otherwise the
/// last coefficient is nonzero.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl From<Vec<f64>> for Polynomial {
    fn from(v: Vec<f64>) -> Self {
        Polynomial::new(v)
    }
}

impl From<Polynomial> for Vec<f64> {
    fn from(p: Polynomial) -> Self {
        p.coeffs
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Poly{:?}", self.coeffs)
    }
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        while coeffs.len() > 1 {
            let last = *coeffs.last().unwrap();
            if last == 0.0 || last.abs() <= TRIM_REL * scale {
                coeffs.pop();
            } else {
                break;
            }
        }
        if coeffs.is_empty() || (coeffs.len() == 1 && coeffs[0].abs() <= TRIM_REL * scale) {
            coeffs = vec![0.0];
        }
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: vec![0.0] }
    }

    pub fn one() -> Self {
        Polynomial::constant(1.0)
    }

    pub fn constant(c: f64) -> Self {
        Polynomial::new(vec![c])
    }

    /// `c · z^k`
    pub fn monomial(c: f64, k: usize) -> Self {
        let mut v = vec![0.0; k + 1];
        v[k] = c;
        Polynomial::new(v)
    }

    /// `z − r`
    pub fn linear_root(r: f64) -> Self {
        Polynomial::new(vec![-r, 1.0])
    }

    /// Monic polynomial with the given roots. Complex roots must come in
    /// conjugate pairs; the imaginary residue of the product is discarded.
    pub fn from_roots(roots: &[Complex64]) -> Self {
        let mut acc = ComplexPoly::one();
        for r in roots {
            acc = acc.mul(&ComplexPoly(vec![-r, Complex64::new(1.0, 0.0)]));
        }
        acc.real_part()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == 0.0
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    /// Coefficient of `z^k` (zero beyond the degree).
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// Sum of absolute coefficients.
    pub fn norm1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
    }

    /// `Σ |c_k| |z|^k`, the natural scale for judging `|p(z)|` small.
    pub fn magnitude_at(&self, z: Complex64) -> f64 {
        let r = z.norm();
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * r + c.abs())
    }

    pub fn scale(&self, s: f64) -> Self {
        Polynomial::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn monic(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        self.scale(1.0 / self.leading())
    }

    /// `p(γ z)`
    pub fn scale_argument(&self, gamma: f64) -> Self {
        let mut g = 1.0;
        let mut out = Vec::with_capacity(self.coeffs.len());
        for c in &self.coeffs {
            out.push(c * g);
            g *= gamma;
        }
        Polynomial::new(out)
    }

    /// `z^k p(z)`
    pub fn shift(&self, k: usize) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let mut v = vec![0.0; k];
        v.extend_from_slice(&self.coeffs);
        Polynomial::new(v)
    }

    /// `p(z^n)`
    pub fn expand_power(&self, n: usize) -> Self {
        let mut v = vec![0.0; self.degree() * n + 1];
        for (k, c) in self.coeffs.iter().enumerate() {
            v[k * n] = *c;
        }
        Polynomial::new(v)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Polynomial::zero();
        }
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * k as f64)
                .collect(),
        )
    }

    /// Euclidean division: `self = q · divisor + r` with `deg r < deg divisor`.
    pub fn div_rem(&self, divisor: &Polynomial) -> (Polynomial, Polynomial) {
        assert!(!divisor.is_zero(), "polynomial division by zero");
        let dd = divisor.degree();
        if self.degree() < dd || self.is_zero() {
            return (Polynomial::zero(), self.clone());
        }
        let mut rem = self.coeffs.clone();
        let lead = divisor.leading();
        let mut q = vec![0.0; self.degree() - dd + 1];
        for k in (0..q.len()).rev() {
            let c = rem[k + dd] / lead;
            q[k] = c;
            for (j, d) in divisor.coeffs.iter().enumerate() {
                rem[k + j] -= c * d;
            }
            rem[k + dd] = 0.0;
        }
        rem.truncate(dd.max(1));
        (Polynomial::new(q), Polynomial::new(rem))
    }

    /// All complex roots with multiplicity.
    pub fn roots(&self) -> Vec<Complex64> {
        super::roots::roots(self)
    }

    /// Coefficient-wise comparison with relative tolerance.
    pub fn approx_eq(&self, other: &Polynomial, tol: f64) -> bool {
        let n = self.coeffs.len().max(other.coeffs.len());
        let scale = self.max_abs_coeff().max(other.max_abs_coeff()).max(1.0);
        (0..n).all(|k| (self.coeff(k) - other.coeff(k)).abs() <= tol * scale)
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        if self.is_zero() || rhs.is_zero() {
            return Polynomial::zero();
        }
        let mut v = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                v[i + j] += a * b;
            }
        }
        Polynomial::new(v)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: Polynomial) -> Polynomial {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

/// Complex-coefficient polynomial used internally where intermediate
/// quantities leave the real line (interpolation recursion, polyphase
/// products with roots of unity).
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ComplexPoly(pub Vec<Complex64>);

impl ComplexPoly {
    pub fn one() -> Self {
        ComplexPoly(vec![Complex64::new(1.0, 0.0)])
    }

    pub fn constant(c: Complex64) -> Self {
        ComplexPoly(vec![c])
    }

    pub fn from_real(p: &Polynomial) -> Self {
        ComplexPoly(p.coeffs().iter().map(|c| Complex64::new(*c, 0.0)).collect())
    }

    pub fn coeff(&self, k: usize) -> Complex64 {
        self.0.get(k).copied().unwrap_or_default()
    }

    pub fn add(&self, rhs: &ComplexPoly) -> ComplexPoly {
        let n = self.0.len().max(rhs.0.len());
        ComplexPoly((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }

    pub fn scale(&self, s: Complex64) -> ComplexPoly {
        ComplexPoly(self.0.iter().map(|c| c * s).collect())
    }

    pub fn mul(&self, rhs: &ComplexPoly) -> ComplexPoly {
        if self.0.is_empty() || rhs.0.is_empty() {
            return ComplexPoly(vec![]);
        }
        let mut v = vec![Complex64::new(0.0, 0.0); self.0.len() + rhs.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in rhs.0.iter().enumerate() {
                v[i + j] += a * b;
            }
        }
        ComplexPoly(v)
    }

    /// `p(s·z)`
    pub fn scale_argument(&self, s: Complex64) -> ComplexPoly {
        let mut g = Complex64::new(1.0, 0.0);
        let mut out = Vec::with_capacity(self.0.len());
        for c in &self.0 {
            out.push(c * g);
            g *= s;
        }
        ComplexPoly(out)
    }

    /// Coefficients reversed after padding to length `len`: `z^{len−1} p(1/z)`.
    pub fn reversed(&self, len: usize) -> ComplexPoly {
        let mut v: Vec<Complex64> = (0..len).map(|k| self.coeff(k)).collect();
        v.reverse();
        ComplexPoly(v)
    }

    pub fn max_imag_ratio(&self) -> f64 {
        let scale = self.0.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        self.0.iter().fold(0.0f64, |m, c| m.max(c.im.abs())) / scale
    }

    pub fn real_part(&self) -> Polynomial {
        Polynomial::new(self.0.iter().map(|c| c.re).collect())
    }
}

/// Companion matrix (last-column convention) of a polynomial of degree ≥ 1.
pub(crate) fn companion(p: &Polynomial) -> DMatrix<f64> {
    let n = p.degree();
    let lead = p.leading();
    let mut m = DMatrix::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -p.coeff(i) / lead;
    }
    m
}
