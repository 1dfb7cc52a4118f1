use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{TransferError, TransferFunction};

/// Dense `rows × cols` grid of transfer functions, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "Vec<Vec<TransferFunction>>",
    into = "Vec<Vec<TransferFunction>>"
)]
pub struct TransferMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<TransferFunction>,
}

impl TryFrom<Vec<Vec<TransferFunction>>> for TransferMatrix {
    type Error = TransferError;
    fn try_from(grid: Vec<Vec<TransferFunction>>) -> Result<Self, Self::Error> {
        TransferMatrix::from_rows(grid)
    }
}

impl From<TransferMatrix> for Vec<Vec<TransferFunction>> {
    fn from(m: TransferMatrix) -> Self {
        m.entries.chunks(m.cols).map(|r| r.to_vec()).collect()
    }
}

impl TransferMatrix {
    pub fn from_rows(grid: Vec<Vec<TransferFunction>>) -> Result<Self, TransferError> {
        let rows = grid.len();
        let cols = grid.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 {
            return Err(TransferError::DimensionMismatch("empty matrix".into()));
        }
        if grid.iter().any(|r| r.len() != cols) {
            return Err(TransferError::DimensionMismatch("ragged rows".into()));
        }
        Ok(TransferMatrix {
            rows,
            cols,
            entries: grid.into_iter().flatten().collect(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> TransferFunction) -> Self {
        assert!(rows > 0 && cols > 0);
        let entries = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        TransferMatrix {
            rows,
            cols,
            entries,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| TransferFunction::zero())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| {
            if i == j {
                TransferFunction::one()
            } else {
                TransferFunction::zero()
            }
        })
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self::from_fn(d.len(), d.len(), |i, j| {
            if i == j {
                TransferFunction::constant(d[i])
            } else {
                TransferFunction::zero()
            }
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &TransferFunction {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, tf: TransferFunction) {
        self.entries[i * self.cols + j] = tf;
    }

    pub fn entries(&self) -> &[TransferFunction] {
        &self.entries
    }

    pub fn map(&self, f: impl Fn(&TransferFunction) -> TransferFunction) -> Self {
        TransferMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|e| e.scale(s))
    }

    /// `G(γ z)` entrywise.
    pub fn scale_argument(&self, gamma: f64) -> Self {
        self.map(|e| e.scale_argument(gamma))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn eval(&self, z: Complex64) -> Result<DMatrix<Complex64>, TransferError> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = self.get(i, j).eval(z)?;
            }
        }
        Ok(m)
    }

    /// Matrix of feedthrough values `G(∞)`.
    pub fn feedthrough(&self) -> Result<DMatrix<f64>, TransferError> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = self.get(i, j).feedthrough()?;
            }
        }
        Ok(m)
    }

    pub fn determinant(&self) -> Result<TransferFunction, TransferError> {
        if self.rows != self.cols {
            return Err(TransferError::DimensionMismatch(
                "determinant of non-square".into(),
            ));
        }
        Ok(det_rec(
            self,
            &(0..self.rows).collect::<Vec<_>>(),
            &(0..self.cols).collect::<Vec<_>>(),
        ))
    }

    /// Inverse by cofactors; intended for the small (≤ 4×4) matrices used here.
    pub fn inverse(&self) -> Result<Self, TransferError> {
        let det = self.determinant()?;
        let inv_det = det.inverse()?;
        let n = self.rows;
        if n == 1 {
            return Ok(Self::from_fn(1, 1, |_, _| inv_det.clone()));
        }
        let all: Vec<usize> = (0..n).collect();
        Ok(Self::from_fn(n, n, |i, j| {
            // adjugate: transpose of the cofactor matrix
            let r: Vec<usize> = all.iter().copied().filter(|&k| k != j).collect();
            let c: Vec<usize> = all.iter().copied().filter(|&k| k != i).collect();
            let minor = det_rec(self, &r, &c);
            let signed = if (i + j) % 2 == 0 {
                minor
            } else {
                minor.scale(-1.0)
            };
            &signed * &inv_det
        }))
    }

    pub fn approx_eq(&self, other: &TransferMatrix, tol: f64) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.approx_eq(b, tol))
    }

    pub fn try_add(&self, rhs: &TransferMatrix) -> Result<Self, TransferError> {
        self.check_same(rhs)?;
        Ok(Self::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j) + rhs.get(i, j)
        }))
    }

    pub fn try_sub(&self, rhs: &TransferMatrix) -> Result<Self, TransferError> {
        self.check_same(rhs)?;
        Ok(Self::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j) - rhs.get(i, j)
        }))
    }

    pub fn try_mul(&self, rhs: &TransferMatrix) -> Result<Self, TransferError> {
        if self.cols != rhs.rows {
            return Err(TransferError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Self::from_fn(self.rows, rhs.cols, |i, j| {
            (0..self.cols).fold(TransferFunction::zero(), |acc, k| {
                &acc + &(self.get(i, k) * rhs.get(k, j))
            })
        }))
    }

    fn check_same(&self, rhs: &TransferMatrix) -> Result<(), TransferError> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(TransferError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(())
    }
}

fn det_rec(m: &TransferMatrix, rows: &[usize], cols: &[usize]) -> TransferFunction {
    match rows.len() {
        0 => TransferFunction::one(),
        1 => m.get(rows[0], cols[0]).clone(),
        2 => {
            let a = m.get(rows[0], cols[0]) * m.get(rows[1], cols[1]);
            let b = m.get(rows[0], cols[1]) * m.get(rows[1], cols[0]);
            &a - &b
        }
        _ => {
            let sub_rows = &rows[1..];
            let mut acc = TransferFunction::zero();
            for (k, &c) in cols.iter().enumerate() {
                let e = m.get(rows[0], c);
                if e.is_zero() {
                    continue;
                }
                let sub_cols: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
                let term = e * &det_rec(m, sub_rows, &sub_cols);
                acc = if k % 2 == 0 {
                    &acc + &term
                } else {
                    &acc - &term
                };
            }
            acc
        }
    }
}

impl Add for &TransferMatrix {
    type Output = TransferMatrix;
    fn add(self, rhs: &TransferMatrix) -> TransferMatrix {
        self.try_add(rhs).expect("transfer matrix dimensions")
    }
}

impl Sub for &TransferMatrix {
    type Output = TransferMatrix;
    fn sub(self, rhs: &TransferMatrix) -> TransferMatrix {
        self.try_sub(rhs).expect("transfer matrix dimensions")
    }
}

impl Mul for &TransferMatrix {
    type Output = TransferMatrix;
    fn mul(self, rhs: &TransferMatrix) -> TransferMatrix {
        self.try_mul(rhs).expect("transfer matrix dimensions")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tf(num: &[f64], den: &[f64]) -> TransferFunction {
        TransferFunction::from_coeffs(num, den).unwrap()
    }

    #[test]
    fn inverse_roundtrip_2x2() {
        let m = TransferMatrix::from_rows(vec![
            vec![tf(&[1.0, 1.0], &[-0.5, 1.0]), tf(&[0.3], &[0.0, 1.0])],
            vec![tf(&[0.2], &[-1.0, 1.0]), TransferFunction::constant(2.0)],
        ])
        .unwrap();
        let inv = m.inverse().unwrap();
        let prod = &m * &inv;
        assert!(prod.approx_eq(&TransferMatrix::identity(2), 1e-9));
    }

    #[test]
    fn inverse_3x3_at_points() {
        let m = TransferMatrix::from_fn(3, 3, |i, j| {
            if i == j {
                tf(&[1.0, 1.0], &[-0.1 * (i as f64), 1.0])
            } else {
                TransferFunction::constant(0.1 * (i + 2 * j) as f64)
            }
        });
        let inv = m.inverse().unwrap();
        let z = Complex64::new(1.3, 0.4);
        let p = m.eval(z).unwrap() * inv.eval(z).unwrap();
        assert!((p - DMatrix::<Complex64>::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn json_nested_rows() {
        let m = TransferMatrix::diagonal(&[1.0, 2.0]);
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.starts_with("[[{"));
        let back: TransferMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<TransferMatrix>("[]").is_err());
    }
}
