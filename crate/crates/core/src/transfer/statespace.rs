use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Polynomial, TransferError, TransferFunction, TransferMatrix};

/// Discrete-time realization `ξ⁺ = Aξ + Bu`, `y = Cξ + Du`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    #[serde(with = "rows")]
    pub a: DMatrix<f64>,
    #[serde(with = "rows")]
    pub b: DMatrix<f64>,
    #[serde(with = "rows")]
    pub c: DMatrix<f64>,
    #[serde(with = "rows")]
    pub d: DMatrix<f64>,
}

/// Matrices as row-major nested arrays. Row counts cannot be recovered for
/// zero-column matrices, which only arise for zero-state realizations.
mod rows {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let v = Vec::<Vec<f64>>::deserialize(d)?;
        let cols = v.first().map_or(0, Vec::len);
        if v.iter().any(|r| r.len() != cols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(v.len(), cols, |i, j| v[i][j]))
    }
}

impl StateSpace {
    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Controllable canonical realization of a proper scalar transfer function.
    pub fn from_tf(tf: &TransferFunction) -> Result<Self, TransferError> {
        let d = tf.feedthrough()?;
        let den = tf.den();
        let n = den.degree();
        // strictly proper remainder num − d·den
        let rest = tf.num() - &den.scale(d);
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        if n > 0 {
            for j in 0..n {
                a[(n - 1, j)] = -den.coeff(j);
            }
        }
        let mut b = DMatrix::zeros(n, 1);
        if n > 0 {
            b[(n - 1, 0)] = 1.0;
        }
        let c = DMatrix::from_fn(1, n, |_, j| rest.coeff(j));
        Ok(StateSpace {
            a,
            b,
            c,
            d: DMatrix::from_element(1, 1, d),
        })
    }

    /// Block-diagonal realization built entry by entry. Not minimal in
    /// general, but exact.
    pub fn from_matrix(m: &TransferMatrix) -> Result<Self, TransferError> {
        let parts: Vec<(usize, usize, StateSpace)> = (0..m.rows())
            .flat_map(|i| (0..m.cols()).map(move |j| (i, j)))
            .map(|(i, j)| StateSpace::from_tf(m.get(i, j)).map(|s| (i, j, s)))
            .collect::<Result<_, _>>()?;
        let n: usize = parts.iter().map(|p| p.2.states()).sum();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, m.cols());
        let mut c = DMatrix::zeros(m.rows(), n);
        let mut d = DMatrix::zeros(m.rows(), m.cols());
        let mut off = 0;
        for (i, j, s) in &parts {
            let k = s.states();
            a.view_mut((off, off), (k, k)).copy_from(&s.a);
            b.view_mut((off, *j), (k, 1)).copy_from(&s.b);
            c.view_mut((*i, off), (1, k)).copy_from(&s.c);
            d[(*i, *j)] = s.d[(0, 0)];
            off += k;
        }
        Ok(StateSpace { a, b, c, d })
    }

    /// `C (zI − A)⁻¹ B + D`.
    pub fn eval(&self, z: Complex64) -> Result<DMatrix<Complex64>, TransferError> {
        let n = self.states();
        let cast = |m: &DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
        let d = cast(&self.d);
        if n == 0 {
            return Ok(d);
        }
        let zi_a = DMatrix::<Complex64>::identity(n, n) * z - cast(&self.a);
        let x = zi_a
            .lu()
            .solve(&cast(&self.b))
            .ok_or(TransferError::PoleEvaluation { re: z.re, im: z.im })?;
        Ok(cast(&self.c) * x + d)
    }

    /// Transfer function of a single-input single-output realization,
    /// `C adj(zI − A) B / det(zI − A) + D`, computed via Leverrier–Faddeev.
    pub fn to_tf(&self) -> Result<TransferFunction, TransferError> {
        if self.inputs() != 1 || self.outputs() != 1 {
            return Err(TransferError::DimensionMismatch("to_tf needs SISO".into()));
        }
        let n = self.states();
        let d = self.d[(0, 0)];
        if n == 0 {
            return Ok(TransferFunction::constant(d));
        }
        // (zI − A)⁻¹ = Σ_k M_k z^{n−1−k} / χ(z)
        let mut charc = vec![0.0; n + 1];
        charc[n] = 1.0;
        let mut mk = DMatrix::<f64>::identity(n, n);
        let mut num = vec![0.0; n];
        for k in 1..=n {
            num[n - k] = (&self.c * &mk * &self.b)[(0, 0)];
            let am = &self.a * &mk;
            let ck = -am.trace() / k as f64;
            charc[n - k] = ck;
            mk = am + DMatrix::identity(n, n) * ck;
        }
        let chi = Polynomial::new(charc);
        let num = &Polynomial::new(num) + &chi.scale(d);
        TransferFunction::new(num, chi).map(|t| t.reduce())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_realization_matches() {
        let g = TransferFunction::from_coeffs(&[0.1, 0.3, 0.5], &[0.25, -1.25, 1.0]).unwrap();
        let ss = StateSpace::from_tf(&g).unwrap();
        for z in [Complex64::new(1.7, 0.2), Complex64::new(-0.3, 2.0)] {
            let e = ss.eval(z).unwrap()[(0, 0)] - g.eval(z).unwrap();
            assert!(e.norm() < 1e-12);
        }
        assert!(ss.to_tf().unwrap().approx_eq(&g, 1e-10));
        let js = serde_json::to_string(&ss).unwrap();
        assert!(js.contains(r#""d":[[0.5]]"#), "{js}");
        let back: StateSpace = serde_json::from_str(&js).unwrap();
        assert_eq!(back, ss);
    }

    #[test]
    fn block_realization_of_matrix() {
        let m = TransferMatrix::from_rows(vec![
            vec![
                TransferFunction::accumulator(),
                TransferFunction::from_coeffs(&[0.0, 1.0], &[-1.0, 1.0]).unwrap(),
            ],
            vec![TransferFunction::constant(2.0), TransferFunction::delay()],
        ])
        .unwrap();
        let ss = StateSpace::from_matrix(&m).unwrap();
        let z = Complex64::new(0.4, 1.1);
        assert!((ss.eval(z).unwrap() - m.eval(z).unwrap()).norm() < 1e-12);
    }
}
