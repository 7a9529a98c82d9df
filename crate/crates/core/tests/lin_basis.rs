use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use qmldesk_core::lin_basis::*;
use qmldesk_core::pyramid::PyramidLayer;
use qmldesk_core::rng::seeded;
use qmldesk_core::Error;
use rand::Rng;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

fn random_unit<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

#[test]
fn zero_angle_is_identity() {
    let s = UnaryState::new(vec![0.6, 0.0, 0.8], 0.0).unwrap();
    let out = rbs_apply(&s, &RbsGate::new(0.0, 0, 2)).unwrap();
    assert_eq!(out, s);
}

#[test]
fn quarter_turn_swaps_excitation() {
    let out = rbs_apply(&UnaryState::basis(3, 2), &RbsGate::new(FRAC_PI_2, 0, 2)).unwrap();
    assert_abs_diff_eq!(out.amps[0], 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(out.amps[2], 0.0, epsilon = 1e-15);

    let out = rbs_apply(&UnaryState::basis(3, 0), &RbsGate::new(FRAC_PI_2, 0, 2)).unwrap();
    assert_abs_diff_eq!(out.amps[2], -1.0, epsilon = 1e-15);
}

#[test]
fn rbs_post_condition_and_unchanged_discard() {
    let s = UnaryState::new(vec![0.3, 0.4, 0.5], 0.5).unwrap();
    let t = 0.7f64;
    let out = rbs_apply(&s, &RbsGate::new(t, 0, 1)).unwrap();
    assert_abs_diff_eq!(out.amps[0], t.cos() * 0.3 + t.sin() * 0.4, epsilon = 1e-15);
    assert_abs_diff_eq!(out.amps[1], -t.sin() * 0.3 + t.cos() * 0.4, epsilon = 1e-15);
    assert_eq!(out.amps[2], 0.5);
    assert_eq!(out.discarded, 0.5);
}

#[test]
fn rbs_rejects_bad_wires() {
    let s = UnaryState::basis(2, 0);
    assert!(matches!(rbs_apply(&s, &RbsGate::new(0.1, 0, 2)), Err(Error::IndexOutOfRange { index: 2, len: 2 })));
    assert!(rbs_apply(&s, &RbsGate::new(0.1, 1, 1)).is_err());
}

#[test]
fn two_wire_dense_matrix_matches_gate() {
    let t = 0.4321f64;
    let u = dense_simulate(&[RbsGate::new(t, 0, 1)], 2).unwrap();
    let (s, c) = t.sin_cos();
    // basis order |00>, wire0, wire1, |11>
    let expected = nalgebra::DMatrix::from_row_slice(4, 4, &[
        1.0, 0.0, 0.0, 0.0,
        0.0, c, s, 0.0,
        0.0, -s, c, 0.0,
        0.0, 0.0, 0.0, 1.0,
    ]);
    assert!((u - expected).abs().max() < 1e-15);
    let r = unary_restriction(&dense_simulate(&[RbsGate::new(t, 0, 1)], 2).unwrap(), 2);
    assert_abs_diff_eq!(r[(0, 0)], c, epsilon = 1e-15);
    assert_abs_diff_eq!(r[(0, 1)], s, epsilon = 1e-15);
    assert_abs_diff_eq!(r[(1, 0)], -s, epsilon = 1e-15);
}

#[test]
fn empty_circuit_is_identity() {
    let u = dense_simulate(&[], 3).unwrap();
    assert_eq!(u, nalgebra::DMatrix::identity(8, 8));
}

#[test]
fn dense_limit_enforced() {
    assert!(dense_simulate(&[], MAX_DENSE_WIRES + 1).is_err());
}

#[test]
fn pyramid_equals_dense_restriction() {
    let mut rng = seeded(3);
    for n in 2..=6 {
        let layer = PyramidLayer::random(n, n, &mut rng).unwrap();
        let u = dense_simulate(&layer.gates(), n).unwrap();
        let diff = (unary_restriction(&u, n) - layer.matrix_of()).abs().max();
        assert!(diff < 1e-12, "n={n} diff={diff}");
    }
}

#[test]
fn loader_angle_examples() {
    let p = loader_angles(&[1.0, 0.0, 0.0]).unwrap();
    assert_eq!(p.angles, vec![0.0, 0.0]);

    let p = loader_angles(&[0.6, 0.8]).unwrap();
    assert_abs_diff_eq!(p.angles[0].cos(), 0.6, epsilon = 1e-15);
    assert_abs_diff_eq!(p.angles[0].sin(), 0.8, epsilon = 1e-15);

    let x = [0.5f64.sqrt(), 0.5, 0.5];
    let p = loader_angles(&x).unwrap();
    assert_abs_diff_eq!(p.angles[0], FRAC_PI_4, epsilon = 1e-15);
    assert_abs_diff_eq!(p.angles[1], FRAC_PI_4, epsilon = 1e-15);
    for (a, b) in p.load().amps.iter().zip(&x) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
}

#[test]
fn loader_tail_after_exhausted_mass_is_zero() {
    let p = loader_angles(&[0.0, 1.0, 0.0, 0.0]).unwrap();
    assert_abs_diff_eq!(p.angles[0], FRAC_PI_2, epsilon = 1e-15);
    assert_eq!(p.angles[1], 0.0);
    assert_eq!(p.angles[2], 0.0);
}

#[test]
fn loader_rejects_non_unit() {
    assert!(matches!(loader_angles(&[0.6, 0.9]), Err(Error::NonUnit(_))));
}

#[test]
fn load_examples() {
    for layout in [LoaderLayout::Diagonal, LoaderLayout::Parallel] {
        let s = load_vector(&[0.6, 0.8], layout).unwrap();
        assert_abs_diff_eq!(s.amps[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amps[1], 0.8, epsilon = 1e-15);
        for k in 0..5 {
            let mut e = vec![0.0; 5];
            e[k] = 1.0;
            let s = load_vector(&e, layout).unwrap();
            for (a, b) in s.amps.iter().zip(&e) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-15);
            }
        }
    }
}

#[test]
fn diagonal_and_parallel_agree() {
    let mut rng = seeded(11);
    let x = random_unit(16, &mut rng);
    let a = load_vector(&x, LoaderLayout::Diagonal).unwrap();
    let b = load_vector(&x, LoaderLayout::Parallel).unwrap();
    for (p, q) in a.amps.iter().zip(&b.amps) {
        assert_abs_diff_eq!(p, q, epsilon = 1e-12);
    }
    assert_eq!(loader_plan(&x, LoaderLayout::Parallel).unwrap().depth(), 4);
}

#[test]
fn loader_round_trip_many() {
    let mut rng = seeded(12);
    for _ in 0..1000 {
        let d = rng.random_range(2..=64);
        let x = random_unit(d, &mut rng);
        for layout in [LoaderLayout::Diagonal, LoaderLayout::Parallel] {
            let s = load_vector(&x, layout).unwrap();
            let err = s.amps.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "{layout:?} d={d} err={err}");
        }
    }
}

#[test]
fn unload_returns_to_ground() {
    let mut rng = seeded(13);
    let x = random_unit(9, &mut rng);
    let plan = loader_angles(&x).unwrap();
    let back = plan.unload(&plan.load()).unwrap();
    assert_abs_diff_eq!(back.amps[0], 1.0, epsilon = 1e-12);
}

#[test]
fn mitigated_measurement_frequencies() {
    let mut rng = seeded(21);
    let s = UnaryState::new(vec![0.6, 0.8, 0.0], 0.0).unwrap();
    let m = measure_mitigated(&s, 1_000_000, &mut rng).unwrap();
    let band = 3.0 * (0.36f64 * 0.64 / 1e6).sqrt();
    assert!((m.frequencies()[0] - 0.36).abs() < band);
    assert_eq!(m.counts[2], 0);

    let noisy = s.with_discarded(0.1).unwrap();
    let m = measure_mitigated(&noisy, 1_000_000, &mut rng).unwrap();
    let kept = m.retained() as f64 / 1e6;
    assert!((kept - 0.9).abs() < 3.0 * (0.09f64 / 1e6).sqrt());
    assert!((m.frequencies()[0] - 0.36).abs() < 3.0 * (0.36f64 * 0.64 / 9e5).sqrt());
}

#[test]
fn unary_inner_product_examples() {
    let mut rng = seeded(22);
    let v = [0.6, 0.8];
    for shots in [1, 10, 1000] {
        assert_eq!(unary_inner_product(&v, &v, shots, true, &mut rng).unwrap(), 1.0);
    }
    assert_eq!(unary_inner_product(&[1.0, 0.0], &[0.0, 1.0], 1000, false, &mut rng).unwrap(), 0.0);
    let est = unary_inner_product(&v, &[0.8, 0.6], 1_000_000, true, &mut rng).unwrap();
    assert!((est - 0.96).abs() < 0.005, "{est}");
    let est = unary_inner_product(&v, &[0.8, 0.6], 1_000_000, false, &mut rng).unwrap();
    assert!((est - 0.96).abs() < 0.005, "{est}");
    let est = unary_inner_product(&v, &[-0.8, -0.6], 1_000_000, true, &mut rng).unwrap();
    assert!((est + 0.96).abs() < 0.005, "{est}");
    assert!(matches!(unary_inner_product(&[0.0, 0.0], &v, 10, true, &mut rng), Err(Error::ZeroNorm)));
}

#[test]
fn unary_inner_product_standard_error() {
    let mut rng = seeded(23);
    let v = random_unit(6, &mut rng);
    let w = random_unit(6, &mut rng);
    let truth: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
    let shots = 10_000;
    let ests: Vec<f64> = (0..100).map(|_| unary_inner_product(&v, &w, shots, true, &mut rng).unwrap()).collect();
    let rmse = (ests.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / 100.0).sqrt();
    assert!(rmse <= 1.0 / (shots as f64).sqrt(), "rmse={rmse}");
}

#[test]
fn dense_preserves_unary_sector() {
    let mut rng = seeded(24);
    let n = 7;
    let gates: Vec<RbsGate> = (0..40)
        .map(|_| {
            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            RbsGate::new(rng.random_range(-3.0..3.0), i, j)
        })
        .collect();
    let x = random_unit(n, &mut rng);
    let s = UnaryState::new(x, 0.0).unwrap();
    let dense = dense_apply(&DenseState::from_unary(&s).unwrap(), &gates).unwrap();
    assert!(dense.leakage() < 1e-12);
    let sparse = apply_circuit(&s, &gates).unwrap();
    for (a, b) in dense.unary_part().iter().zip(&sparse.amps) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
    let nrm: f64 = dense.amps.iter().map(|a| a * a).sum();
    assert_abs_diff_eq!(nrm, 1.0, epsilon = 1e-9);
}

proptest! {
    #[test]
    fn norm_is_preserved(
        amps in prop::collection::vec(-1.0f64..1.0, 2..12),
        discard in 0.0f64..0.5,
        thetas in prop::collection::vec((-6.3f64..6.3, 0usize..64, 0usize..64), 0..30),
    ) {
        let n = amps.len();
        let nrm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assume!(nrm > 1e-3);
        let scale = (1.0 - discard).sqrt() / nrm;
        let s = UnaryState::new(amps.iter().map(|a| a * scale).collect(), discard).unwrap();
        let gates: Vec<RbsGate> = thetas
            .iter()
            .filter(|(_, i, j)| i % n != j % n)
            .map(|&(t, i, j)| RbsGate::new(t, i % n, j % n))
            .collect();
        let out = apply_circuit(&s, &gates).unwrap();
        prop_assert!((out.total_mass() - 1.0).abs() < 1e-9);
        prop_assert_eq!(out.discarded, discard);
    }

    #[test]
    fn loader_round_trip(raw in prop::collection::vec(-1.0f64..1.0, 2..64)) {
        let nrm = raw.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assume!(nrm > 1e-3);
        let x: Vec<f64> = raw.iter().map(|a| a / nrm).collect();
        for layout in [LoaderLayout::Diagonal, LoaderLayout::Parallel] {
            let s = load_vector(&x, layout).unwrap();
            for (a, b) in s.amps.iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
