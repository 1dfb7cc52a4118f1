use fomsynth::certificates::*;
use fomsynth::synthesis::*;
use fomsynth::transfer::{Polynomial, TransferFunction, TransferMatrix};
use nalgebra::{DVector, Matrix2};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg() -> SPRConfig {
    SPRConfig::default()
}

/// `κ(1−ρ)(z+ρ)/((1+ρ)(z−ρ))`
fn circle_psi(kappa: f64, rho: f64) -> TransferFunction {
    TransferFunction::new(
        Polynomial::new(vec![rho, 1.0]).scale(kappa * (1.0 - rho) / (1.0 + rho)),
        Polynomial::linear_root(rho),
    )
    .unwrap()
}

fn split_data(budget: &RateBudget) -> (TransferMatrix, f64) {
    let (mu, ell) = (budget.mu(), budget.ell());
    let w = (ell + mu).sqrt() / (ell - mu);
    (splitting_psi(budget).unwrap(), w)
}

fn random_point(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::from_polar(
        rng.random_range(1.1..3.0),
        rng.random_range(0.0..std::f64::consts::TAU),
    )
}

#[test]
fn inverse_of_unique_psi_is_implicit_gradient() {
    let budget = RateBudget::new(1.0, 10.0).unwrap();
    let rho = 0.5;
    let psi = circle_psi(budget.kappa(), rho);
    let g = inverse_loop_transform(&psi, &budget).unwrap();
    let want = implicit_gd(&budget, rho).unwrap();
    assert!(g.approx_eq(want.scalar_tf().unwrap(), 1e-10), "{g:?}");
    assert!(g.den().approx_eq(&Polynomial::linear_root(1.0), 1e-12));
}

#[test]
fn unique_psi_spr_boundary() {
    let budget = RateBudget::new(1.0, 10.0).unwrap();
    for alpha in [0.0, 0.05, 0.5] {
        let rho_c = rho_circle(alpha, &budget).unwrap();
        let psi = circle_psi(budget.kappa(), rho_c);
        assert!(spr_check(&psi, rho_c + 0.01, &cfg()).unwrap());
        assert!(!spr_check(&psi, rho_c - 0.01, &cfg()).unwrap());
    }
    let psi = TransferFunction::from_coeffs(&[0.3, 1.0], &[-0.3, 1.0]).unwrap();
    for gamma in [0.31, 0.5, 0.9, 1.0] {
        assert!(spr_check(&psi, gamma, &cfg()).unwrap());
    }
}

#[test]
fn certificates_of_named_algorithms() {
    let budget = RateBudget::new(1.0, 10.0).unwrap();
    let gd = gradient_descent(&budget).unwrap();
    let r = rate_certificate(gd.scalar_tf().unwrap(), &budget, &cfg()).unwrap();
    assert!((r - rho_gd(&budget)).abs() <= 1e-3, "{r}");

    let ig = implicit_gd(&budget, 0.5).unwrap();
    let r = rate_certificate(ig.scalar_tf().unwrap(), &budget, &cfg()).unwrap();
    assert!((r - 0.5).abs() <= 1e-3, "{r}");

    let hb = heavy_ball(&budget).unwrap();
    match rate_certificate(hb.scalar_tf().unwrap(), &budget, &cfg()) {
        Err(CertError::Uncertifiable) => {}
        Ok(r) => assert!(r > rho_min(&budget) + 0.1, "{r}"),
        Err(e) => panic!("{e}"),
    }

    let unbounded = RateBudget::mu_only(1.0).unwrap();
    let ig = implicit_gd(&unbounded, 0.4).unwrap();
    let r = rate_certificate(ig.scalar_tf().unwrap(), &unbounded, &cfg()).unwrap();
    assert!((r - 0.4).abs() <= 1e-3, "{r}");
}

#[test]
fn scaled_spr_for_splitting() {
    let budget = RateBudget::new(0.1, 100.0).unwrap();
    let (psi, w) = split_data(&budget);
    let rho = rho_gd(&budget);
    let found = scaled_spr_search(&psi, rho + 0.001, &[w], &cfg()).unwrap();
    assert_eq!(found, Some(w));
    assert_eq!(
        scaled_spr_search(&psi, rho - 0.001, &default_w_grid(), &cfg()).unwrap(),
        None
    );
    let found = scaled_spr_search(&TransferMatrix::identity(2), 0.7, &[0.3, 5.0], &cfg()).unwrap();
    assert_eq!(found, Some(0.3));
    assert!(scaled_spr_search(&psi, 0.5, &[], &cfg()).is_err());
}

#[test]
fn split_certificate_is_gradient_rate() {
    let budget = RateBudget::new(1.0, 10.0).unwrap();
    let (spec, design) = splitting_synthesis(&budget).unwrap();
    let AlgorithmTransfer::Matrix(g) = &spec.transfer else {
        panic!()
    };
    let mut grid = default_w_grid();
    grid.push(design.w2.sqrt());
    let (r, _) = rate_certificate_split(g, &budget, &grid, &cfg()).unwrap();
    assert!((r - rho_gd(&budget)).abs() <= 1e-3, "{r}");
}

#[test]
fn caratheodory_pick_boundary() {
    let budget = RateBudget::new(1.0, 10.0).unwrap();
    let (mu, ell) = (budget.mu(), budget.ell());
    let (_, w) = split_data(&budget);
    let eta = 2.0 / (mu + ell);
    let p1 = Matrix2::new(ell, (ell - mu) * w, 1.0 / w, 1.0) / mu;
    let pinf = Matrix2::new(1.0, (ell - mu) * eta * w, 0.0, eta);
    let rho = rho_gd(&budget);
    let at = caratheodory_pick(&p1, &pinf, rho).unwrap();
    let scale = at.lambda.symmetric_eigenvalues().max();
    assert!(
        at.min_eigenvalue.abs() <= 1e-9 * scale,
        "{}",
        at.min_eigenvalue
    );
    assert!(!at.feasible);
    assert!(caratheodory_pick(&p1, &pinf, rho + 0.01).unwrap().feasible);
    let below = caratheodory_pick(&p1, &pinf, rho - 0.01).unwrap();
    assert!(!below.feasible && below.min_eigenvalue < 0.0);
}

#[test]
fn sector_of_one_dimensional_example() {
    let (a, b) = (4.0, 3.0);
    let delta = move |x: &DVector<f64>| x.map(|e| a * e - b * e.abs() * (e * e.abs()).cos());
    assert!(verify_sector(
        delta,
        SectorBound::new(1.0, 7.0).unwrap(),
        200,
        1,
        5
    ));
    assert!(!verify_sector(
        delta,
        SectorBound::new(2.0, 7.0).unwrap(),
        200,
        1,
        5
    ));
    assert!(!verify_sector(
        delta,
        SectorBound::new(1.0, 6.0).unwrap(),
        200,
        1,
        5
    ));
}

#[test]
fn scalar_roundtrip_at_random_points() {
    let budget = RateBudget::new(0.5, 20.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for g in [
        heavy_ball(&budget).unwrap().scalar_tf().unwrap().clone(),
        implicit_heavy_ball(&budget, 0.3)
            .unwrap()
            .scalar_tf()
            .unwrap()
            .clone(),
        implicit_gd(&budget, 0.2)
            .unwrap()
            .scalar_tf()
            .unwrap()
            .clone(),
    ] {
        let back = inverse_loop_transform(&loop_transform(&g, &budget).unwrap(), &budget).unwrap();
        for _ in 0..64 {
            let z = random_point(&mut rng);
            let (a, b) = (back.eval(z).unwrap(), g.eval(z).unwrap());
            assert!((a - b).norm() <= 1e-8 * (1.0 + b.norm()));
        }
    }
}

#[test]
fn split_roundtrip_at_random_points() {
    let budget = RateBudget::new(0.1, 100.0).unwrap();
    let (spec, _) = splitting_synthesis(&budget).unwrap();
    let AlgorithmTransfer::Matrix(g) = &spec.transfer else {
        panic!()
    };
    let psi = loop_transform_split(g, &budget).unwrap();
    assert!(psi.approx_eq(&splitting_psi(&budget).unwrap(), 1e-9));
    let back = inverse_loop_transform_split(&psi, &budget).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..64 {
        let z = random_point(&mut rng);
        let d = (back.eval(z).unwrap() - g.eval(z).unwrap()).norm();
        assert!(d <= 1e-8 * (1.0 + g.eval(z).unwrap().norm()), "{d}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scalar_roundtrip(mu in 0.01f64..5.0, ratio in 1.5f64..1e3, a in 0.01f64..2.0, p in -0.9f64..0.9) {
        let budget = RateBudget::new(mu, mu * ratio).unwrap();
        let g = TransferFunction::from_coeffs(&[p * a, a], &[-p, -1.0 + p, 1.0]).unwrap();
        if let Ok(psi) = loop_transform(&g, &budget) {
            let back = inverse_loop_transform(&psi, &budget).unwrap();
            for k in 0..16 {
                let z = Complex64::from_polar(1.3 + 0.1 * k as f64, 0.4 * k as f64);
                let (x, y) = (back.eval(z).unwrap(), g.eval(z).unwrap());
                prop_assert!((x - y).norm() <= 1e-8 * (1.0 + y.norm()));
            }
        }
    }

    #[test]
    fn spr_monotone_in_gamma(mu in 0.1f64..2.0, ratio in 1.5f64..200.0, frac in 0.0f64..1.0) {
        let budget = RateBudget::new(mu, mu * ratio).unwrap();
        let rho = 0.05 + 0.9 * frac * rho_gd(&budget);
        let g = implicit_gd(&budget, rho.min(rho_gd(&budget))).unwrap();
        let psi = loop_transform(g.scalar_tf().unwrap(), &budget).unwrap();
        let c = SPRConfig { grid_points: 512, epsilon: 1e-9 };
        let gammas: Vec<f64> = (1..=20).map(|k| k as f64 / 20.0).collect();
        let verdicts: Vec<bool> = gammas.iter().map(|gm| spr_check(&psi, *gm, &c).unwrap()).collect();
        if let Some(first) = verdicts.iter().position(|v| *v) {
            prop_assert!(verdicts[first..].iter().all(|v| *v));
        }
    }
}
