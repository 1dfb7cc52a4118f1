//! Polynomial roots via companion-matrix eigenvalues.

use nalgebra::linalg::balancing::balance_parlett_reinsch;
use nalgebra::Schur;
use num_complex::Complex64;

use super::polynomial::{companion, Polynomial};

pub(crate) fn roots(p: &Polynomial) -> Vec<Complex64> {
    if p.is_zero() {
        return Vec::new();
    }
    let c = p.coeffs();
    let zeros_at_origin = c.iter().take_while(|x| **x == 0.0).count();
    let mut out = vec![Complex64::new(0.0, 0.0); zeros_at_origin];
    let reduced = Polynomial::new(c[zeros_at_origin..].to_vec());
    match reduced.degree() {
        0 => {}
        1 => out.push(Complex64::new(-reduced.coeff(0) / reduced.coeff(1), 0.0)),
        2 => out.extend(quadratic(
            reduced.coeff(2),
            reduced.coeff(1),
            reduced.coeff(0),
        )),
        _ => {
            let mut m = companion(&reduced);
            balance_parlett_reinsch(&mut m);
            let eig = Schur::new(m).complex_eigenvalues();
            // Newton drags both members of a split repeated root to the same
            // side, which ruins their mean; leave clustered roots alone
            out.extend(eig.iter().enumerate().map(|(i, r)| {
                let tol = 1e-6 * r.norm().max(1.0);
                let clustered = eig
                    .iter()
                    .enumerate()
                    .any(|(j, s)| j != i && (s - r).norm() < tol);
                if clustered {
                    *r
                } else {
                    polish(&reduced, *r)
                }
            }));
        }
    }
    out
}

fn quadratic(a: f64, b: f64, c: f64) -> [Complex64; 2] {
    let disc = b * b - 4.0 * a * c;
    if disc >= 0.0 {
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q == 0.0 {
            // b = 0 and c = 0
            return [Complex64::new(0.0, 0.0); 2];
        }
        [Complex64::new(q / a, 0.0), Complex64::new(c / q, 0.0)]
    } else {
        let re = -b / (2.0 * a);
        let im = (-disc).sqrt() / (2.0 * a);
        [Complex64::new(re, im), Complex64::new(re, -im)]
    }
}

/// A few guarded Newton steps on the original polynomial.
fn polish(p: &Polynomial, mut r: Complex64) -> Complex64 {
    let dp = p.derivative();
    let mut res = p.eval_complex(r).norm();
    for _ in 0..4 {
        let d = dp.eval_complex(r);
        if d.norm() == 0.0 || res == 0.0 {
            break;
        }
        let cand = r - p.eval_complex(r) / d;
        let cres = p.eval_complex(cand).norm();
        if cres < res {
            r = cand;
            res = cres;
        } else {
            break;
        }
    }
    // keep real roots real
    if r.im.abs() <= 1e-14 * r.norm().max(1.0) {
        r.im = 0.0;
    }
    r
}
