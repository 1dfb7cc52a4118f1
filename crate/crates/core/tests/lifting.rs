use fomsynth::gain_margin::{g_of, margin_feasible, MarginSpec};
use fomsynth::lifting::*;
use fomsynth::synthesis::{heavy_ball, RateBudget};
use fomsynth::transfer::{TransferFunction, TransferMatrix};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
    v.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    v
}

fn reassemble(parts: &[TransferFunction], z: Complex64) -> Complex64 {
    let n = parts.len() as i32;
    parts
        .iter()
        .enumerate()
        .map(|(k, p)| z.powi(-(k as i32)) * p.eval(z.powi(n)).unwrap())
        .sum()
}

fn random_stable_tf(rng: &mut ChaCha8Rng, deg: usize, strictly: bool) -> TransferFunction {
    let poles: Vec<f64> = (0..deg).map(|_| rng.random_range(-0.9..0.9)).collect();
    let den = poles
        .iter()
        .fold(fomsynth::transfer::Polynomial::one(), |acc, p| {
            &acc * &fomsynth::transfer::Polynomial::linear_root(*p)
        });
    let nd = if strictly { deg - 1 } else { deg };
    let num: Vec<f64> = (0..=nd).map(|_| rng.random_range(-1.0..1.0)).collect();
    TransferFunction::new(fomsynth::transfer::Polynomial::new(num), den).unwrap()
}

#[test]
fn polyphase_reconstruction_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in 1..=5 {
        let g = random_stable_tf(&mut rng, 3, false);
        let parts = polyphase(&g, n).unwrap();
        for _ in 0..64 {
            let z = Complex64::from_polar(
                rng.random_range(1.1..3.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            );
            let e = reassemble(&parts, z) - g.eval(z).unwrap();
            assert!(
                e.norm() < 1e-10 * (1.0 + g.eval(z).unwrap().norm()),
                "n={n} err={e}"
            );
        }
    }
}

#[test]
fn lifted_poles_are_powers() {
    let g = TransferFunction::from_coeffs(&[0.2, 1.0], &[-0.12, -0.1, 1.0]).unwrap();
    for n in 2..=4 {
        let l = lift_lti(&g, n).unwrap();
        let poles: Vec<Complex64> = l.g_tilde.entries().iter().flat_map(|e| e.poles()).collect();
        for p in g.poles() {
            let pn = p.powi(n as i32);
            assert!(
                poles.iter().any(|q| (q - pn).norm() < 1e-8),
                "n={n} missing {pn}"
            );
        }
    }
}

#[test]
fn strictly_proper_lift_is_causal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 1..=4 {
        let g = random_stable_tf(&mut rng, 2, true);
        assert!(check_causal_structure(&lift_lti(&g, n).unwrap()).unwrap());
    }
}

#[test]
fn lti_lift_simulation_matches_scalar() {
    let budget = RateBudget::new(1.0, 10.0).unwrap();
    let hb = heavy_ball(&budget).unwrap();
    let g = hb.scalar_tf().unwrap().clone();
    let (alpha, beta) = match hb.iteration {
        Some(fomsynth::synthesis::IterationForm::HeavyBall { momentum, step }) => (step, momentum),
        _ => unreachable!(),
    };
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 10.0, 5.5]));
    let x0 = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
    for n in [2, 3] {
        let l = lift_lti(&g, n).unwrap();
        assert!(check_accumulator_direction(&l).unwrap());
        let lifted = simulate_lifted(&l, &x0, 50, |x| &q * x).unwrap();
        let (mut prev, mut x) = (x0.clone(), x0.clone());
        for (t, y) in lifted.iter().enumerate() {
            assert!((y - &x).norm() < 1e-10, "n={n} t={t}");
            let next = &x - (&q * &x) * alpha + (&x - &prev) * beta;
            prev = x;
            x = next;
        }
    }
}

#[test]
fn momentum2_matches_direct_recursion() {
    let s = Momentum2Schedule::new([0.15, 0.05], [0.3, 0.6], [0.02, -0.01]).unwrap();
    let l = lift_momentum2(&s).unwrap();
    assert!(check_causal_structure(&l).unwrap());
    assert!(check_accumulator_direction(&l).unwrap());
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 2.0, 4.0]));
    let x0 = DVector::from_vec(vec![1.0, 1.0, -1.0]);
    let lifted = simulate_lifted(&l, &x0, 40, |x| &q * x).unwrap();
    let mut prev = x0.clone();
    let mut prev_grad = DVector::zeros(3);
    let mut x = x0.clone();
    for (t, y) in lifted.iter().enumerate() {
        assert!((y - &x).norm() < 1e-10, "t={t}");
        let k = Momentum2Schedule::phase_at(t);
        let gx = &q * &x;
        let next = &x - &gx * s.alpha[k] - &prev_grad * s.eta[k] + (&x - &prev) * s.beta[k];
        prev = x;
        prev_grad = gx;
        x = next;
    }
}

#[test]
fn momentum2_heavy_ball_eigenvalues_square() {
    let budget = RateBudget::new(1.0, 9.0).unwrap();
    let hb = heavy_ball(&budget).unwrap();
    let g = hb.scalar_tf().unwrap().clone();
    let Some(fomsynth::synthesis::IterationForm::HeavyBall { momentum, step }) = hb.iteration
    else {
        unreachable!()
    };
    let s = Momentum2Schedule::new([step; 2], [momentum; 2], [0.0; 2]).unwrap();
    let l = lift_momentum2(&s).unwrap();
    assert!(l
        .g_tilde
        .approx_eq(&lift_lti(&g, 2).unwrap().g_tilde, 1e-10));
    for k in 0..12 {
        let lambda = 1.0 + 8.0 * k as f64 / 11.0 + 0.013;
        let scalar = g.closed_loop_charpoly(lambda).roots();
        let cl = TransferMatrix::identity(2)
            .try_add(&l.g_tilde.scale(lambda))
            .unwrap()
            .determinant()
            .unwrap()
            .reduce();
        let lifted = sorted(cl.num().roots());
        let squared = sorted(scalar.iter().map(|r| r * r).collect());
        assert_eq!(
            lifted.len(),
            squared.len(),
            "lambda={lambda} {lifted:?} {squared:?} {:?}",
            cl.poles()
        );
        for (a, b) in lifted.iter().zip(&squared) {
            assert!((a - b).norm() < 1e-6, "lambda={lambda}: {a} vs {b}");
        }
    }
}

#[test]
fn periodic_margin_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let p = Complex64::from_polar(
            rng.random_range(1.01..3.0),
            rng.random_range(0.0..std::f64::consts::TAU),
        );
        let k1 = rng.random_range(0.01..0.99);
        let k2 = rng.random_range(1.01..50.0);
        let base = periodic_margin_condition(p, k1, k2, 1).unwrap();
        let spec = MarginSpec::new(p, k1, k2, true).unwrap();
        assert_eq!(base, margin_feasible(&spec).unwrap());
        assert_eq!(base, g_of(k1, k2).unwrap() < 1.0 / p.norm());
        for n in 2..=6 {
            assert_eq!(periodic_margin_condition(p, k1, k2, n).unwrap(), base);
        }
    }
    let p = Complex64::new(1.25, 0.0);
    for n in [1, 2, 3, 5] {
        assert!(periodic_margin_condition(p, 0.1, 8.0, n).unwrap());
    }
}

proptest! {
    #[test]
    fn periodic_gd_lift_commutes_with_simulation(
        steps in prop::collection::vec(0.01f64..0.5, 1..5),
        diag in prop::collection::vec(0.1f64..2.0, 1..10),
    ) {
        let s = PeriodicGDSchedule::new(steps).unwrap();
        let l = lift_periodic_gd(&s);
        prop_assert!(check_causal_structure(&l).unwrap());
        let total: f64 = s.steps().iter().sum();
        for r in accumulator_residue(&l).unwrap() {
            prop_assert!((r - total).abs() < 1e-10);
        }
        let q = DMatrix::from_diagonal(&DVector::from_vec(diag.clone()));
        let x0 = DVector::from_fn(diag.len(), |i, _| 1.0 - 0.3 * i as f64);
        let lifted = simulate_lifted(&l, &x0, 15, |x| &q * x).unwrap();
        let mut x = x0.clone();
        for (t, y) in lifted.iter().enumerate() {
            prop_assert!((y - &x).norm() < 1e-10 * (1.0 + x.norm()));
            x = &x - (&q * &x) * s.step_at(t);
        }
    }

    #[test]
    fn polyphase_reconstructs(seed in any::<u64>(), n in 1usize..6, deg in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_stable_tf(&mut rng, deg, false);
        let parts = polyphase(&g, n).unwrap();
        prop_assert_eq!(parts.len(), n);
        for _ in 0..8 {
            let z = Complex64::from_polar(rng.random_range(1.2..2.5), rng.random_range(0.0..std::f64::consts::TAU));
            let want = g.eval(z).unwrap();
            prop_assert!((reassemble(&parts, z) - want).norm() < 1e-10 * (1.0 + want.norm()));
        }
    }

    #[test]
    fn periodic_condition_independent_of_period(
        r in 1.001f64..4.0, th in 0.0f64..std::f64::consts::TAU, k1 in 0.001f64..0.999, k2 in 1.001f64..1e3, n in 1usize..7,
    ) {
        let p = Complex64::from_polar(r, th);
        prop_assert_eq!(
            periodic_margin_condition(p, k1, k2, n).unwrap(),
            periodic_margin_condition(p, k1, k2, 1).unwrap()
        );
    }
}
