use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use qmldesk_core::lin_basis::{dense_simulate, unary_restriction};
use qmldesk_core::pyramid::*;
use qmldesk_core::rng::seeded;
use qmldesk_core::sampling::normal;
use rand::Rng;

fn random_unit<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn orth_err(w: &DMatrix<f64>) -> f64 {
    max_abs(&(w * w.transpose() - DMatrix::identity(w.nrows(), w.nrows())))
}

fn random_so(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| normal(rng));
    let mut q = g.qr().q();
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

#[test]
fn angle_counts() {
    assert_eq!(angle_count(8, 8).unwrap(), 28);
    assert_eq!(angle_count(8, 4).unwrap(), 22);
    assert_eq!(angle_count(2, 2).unwrap(), 1);
    assert!(angle_count(4, 5).is_err());
    assert!(angle_count(4, 0).is_err());
    for n in 2..12 {
        for d in 1..=n {
            let layer = PyramidLayer::zeros(n, d).unwrap();
            assert_eq!(layer.angles.len(), angle_count(n, d).unwrap());
            assert_eq!(layer.slots().len(), layer.angles.len());
        }
    }
}

#[test]
fn square_timesteps() {
    for n in 2..12 {
        assert_eq!(PyramidLayer::square(n).unwrap().timesteps(), 2 * n - 3);
    }
}

#[test]
fn schedule_is_a_partition_into_disjoint_pairs() {
    for (n, d) in [(8, 8), (8, 4), (5, 2), (9, 1)] {
        let layer = PyramidLayer::zeros(n, d).unwrap();
        let mut seen = vec![false; layer.angles.len()];
        for (t, step) in layer.schedule().iter().enumerate() {
            let mut wires = vec![];
            for &g in step {
                assert!(!seen[g]);
                seen[g] = true;
                assert_eq!(layer.slots()[g].timestep, t);
                wires.push(layer.slots()[g].wire);
                wires.push(layer.slots()[g].wire + 1);
            }
            let before = wires.len();
            wires.sort();
            wires.dedup();
            assert_eq!(wires.len(), before);
        }
        assert!(seen.into_iter().all(|s| s));
    }
}

#[test]
fn zero_angles_are_identity() {
    let layer = PyramidLayer::square(6).unwrap();
    let x = [0.1, -0.2, 0.3, 0.4, 0.5, -0.6];
    assert_eq!(layer.apply(&x).unwrap(), x.to_vec());
    assert_eq!(layer.matrix_of(), DMatrix::identity(6, 6));
}

#[test]
fn two_wire_layer() {
    let t = 0.83f64;
    let layer = PyramidLayer::with_angles(2, 2, vec![t]).unwrap();
    let x = [0.6, -0.8];
    let y = layer.apply(&x).unwrap();
    assert_abs_diff_eq!(y[0], t.cos() * x[0] + t.sin() * x[1], epsilon = 1e-15);
    assert_abs_diff_eq!(y[1], -t.sin() * x[0] + t.cos() * x[1], epsilon = 1e-15);
    assert!(layer.apply(&[1.0]).is_err());
    assert!(PyramidLayer::with_angles(3, 3, vec![0.0; 2]).is_err());
}

#[test]
fn forward_matches_matrix() {
    let mut rng = seeded(1);
    for (n, d) in [(8, 8), (8, 3), (5, 5), (16, 7)] {
        let layer = PyramidLayer::random(n, d, &mut rng).unwrap();
        let w = layer.matrix_of();
        for _ in 0..10 {
            let x = random_unit(n, &mut rng);
            let (y, trace) = layer.forward(&x).unwrap();
            let wx = &w * DMatrix::from_column_slice(n, 1, &x);
            for i in 0..d {
                assert_abs_diff_eq!(y[i], wx[(i, 0)], epsilon = 1e-12);
            }
            for z in &trace.layers {
                let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert_abs_diff_eq!(nz, 1.0, epsilon = 1e-10);
            }
        }
    }
}

#[test]
fn path_sum_entry() {
    let mut rng = seeded(2);
    for _ in 0..100 {
        let layer = PyramidLayer::random(8, 8, &mut rng).unwrap();
        let a = &layer.angles;
        let c = |g: usize| a[g - 1].cos();
        let s = |g: usize| a[g - 1].sin();
        let expect = -c(16) * c(22) * s(23) * c(24) - s(16) * c(17) * c(23) * c(24) + s(16) * s(17) * c(18) * s(24);
        // wires are numbered from the other end here, so W56 is entry (2, 1)
        assert_abs_diff_eq!(layer.matrix_of()[(2, 1)], expect, epsilon = 1e-12);
    }
}

#[test]
fn matrix_equals_dense_restriction_up_to_eight_wires() {
    let mut rng = seeded(3);
    for n in 7..=8 {
        let layer = PyramidLayer::random(n, n, &mut rng).unwrap();
        let u = dense_simulate(&layer.gates(), n).unwrap();
        assert!(max_abs(&(unary_restriction(&u, n) - layer.matrix_of())) < 1e-12);
    }
}

#[test]
fn many_random_layers_stay_orthogonal() {
    let mut rng = seeded(4);
    let mut worst = 0.0f64;
    for i in 0..10_000 {
        let n = 2 + i % 31;
        let w = PyramidLayer::random(n, n, &mut rng).unwrap().matrix_of();
        worst = worst.max(max_abs(&(w.transpose() * &w - DMatrix::identity(n, n))));
    }
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn rectangular_rows_are_orthonormal() {
    let mut rng = seeded(5);
    let w = PyramidLayer::random(10, 4, &mut rng).unwrap().matrix_of();
    assert_eq!(w.shape(), (4, 10));
    assert!(orth_err(&w) < 1e-12);
}

#[test]
fn angles_round_trip() {
    let mut rng = seeded(6);
    assert!(angles_from_orthogonal(&DMatrix::identity(5, 5)).unwrap().iter().all(|a| a.abs() < 1e-15));
    let t = 1.1f64;
    let rot = DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
    assert_abs_diff_eq!(angles_from_orthogonal(&rot).unwrap()[0], t, epsilon = 1e-12);
    for n in 2..=16 {
        let layer = PyramidLayer::random(n, n, &mut rng).unwrap();
        let w = layer.matrix_of();
        let back = PyramidLayer::with_angles(n, n, angles_from_orthogonal(&w).unwrap()).unwrap();
        assert!((back.matrix_of() - &w).norm() < 1e-8);
        let q = random_so(n, &mut rng);
        let back = PyramidLayer::with_angles(n, n, angles_from_orthogonal(&q).unwrap()).unwrap();
        assert!((back.matrix_of() - &q).norm() < 1e-8);
    }
}

#[test]
fn reflection_and_non_orthogonal_rejected() {
    let mut refl = DMatrix::identity(3, 3);
    refl[(2, 2)] = -1.0;
    assert!(angles_from_orthogonal(&refl).is_err());
    assert!(angles_from_orthogonal(&DMatrix::from_element(3, 3, 0.5)).is_err());
    assert!(angles_from_orthogonal(&DMatrix::zeros(2, 3)).is_err());
}

#[test]
fn backward_examples() {
    let layer = PyramidLayer::random(6, 6, &mut seeded(7)).unwrap();
    let (_, trace) = layer.forward(&random_unit(6, &mut seeded(8))).unwrap();
    let (g, d0) = layer.backward(&trace, &[0.0; 6]).unwrap();
    assert!(g.iter().all(|v| *v == 0.0) && d0.iter().all(|v| *v == 0.0));

    let t = 0.4f64;
    let x = [0.3, 0.7];
    let layer = PyramidLayer::with_angles(2, 2, vec![t]).unwrap();
    let (_, trace) = layer.forward(&x).unwrap();
    let (g, _) = layer.backward(&trace, &[1.0, 0.0]).unwrap();
    assert_abs_diff_eq!(g[0], -t.sin() * x[0] + t.cos() * x[1], epsilon = 1e-15);
    assert!(layer.backward(&trace, &[1.0]).is_err());
    let other = PyramidLayer::zeros(3, 3).unwrap();
    assert!(other.backward(&trace, &[1.0, 0.0, 0.0]).is_err());
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = seeded(9);
    let h = 1e-6;
    for (n, d) in [(2, 2), (4, 4), (7, 3), (10, 10), (16, 16), (16, 5)] {
        let layer = PyramidLayer::random(n, d, &mut rng).unwrap();
        let x = random_unit(n, &mut rng);
        let c: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        let cost = |l: &PyramidLayer| l.apply(&x).unwrap().iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
        let (_, trace) = layer.forward(&x).unwrap();
        let (grads, d0) = layer.backward(&trace, &c).unwrap();
        for (g, analytic) in grads.iter().enumerate() {
            let mut up = layer.clone();
            up.angles[g] += h;
            let mut dn = layer.clone();
            dn.angles[g] -= h;
            let fd = (cost(&up) - cost(&dn)) / (2.0 * h);
            assert!((fd - analytic).abs() <= 1e-5 * analytic.abs().max(1e-2), "n={n} d={d} g={g}: {fd} vs {analytic}");
        }
        // δ⁰ = Wᵀ c
        let wt_c = layer.matrix_of().transpose() * DMatrix::from_column_slice(d, 1, &c);
        for i in 0..n {
            assert_abs_diff_eq!(d0[i], wt_c[(i, 0)], epsilon = 1e-12);
        }
    }
}

#[test]
fn network_gradients_match_finite_differences() {
    let mut rng = seeded(10);
    for nl in [Nonlinearity::Sigmoid, Nonlinearity::None] {
        let mut net = OrthoNet::new(&[6, 4, 3], nl).unwrap();
        net.randomize(1.0, &mut rng);
        let x = random_unit(6, &mut rng);
        let (_, grads) = net.loss_and_grad(&x, 1).unwrap();
        let h = 1e-6;
        for (li, layer_grads) in grads.iter().enumerate() {
            for (g, &an) in layer_grads.iter().enumerate() {
                let mut up = net.clone();
                up.layers[li].angles[g] += h;
                let mut dn = net.clone();
                dn.layers[li].angles[g] -= h;
                let fd = (up.loss_and_grad(&x, 1).unwrap().0 - dn.loss_and_grad(&x, 1).unwrap().0) / (2.0 * h);
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-2), "{nl:?} layer {li} angle {g}: {fd} vs {an}");
            }
        }
    }
}

#[test]
fn path_locality() {
    let mut rng = seeded(11);
    for (n, d) in [(8, 8), (8, 2), (6, 3), (5, 1)] {
        let layer = PyramidLayer::random(n, d, &mut rng).unwrap();
        let w = layer.matrix_of();
        for j in 0..n {
            let mut reach = vec![false; n];
            reach[j] = true;
            for step in layer.schedule() {
                for &g in step {
                    let a = layer.slots()[g].wire;
                    if reach[a] || reach[a + 1] {
                        reach[a] = true;
                        reach[a + 1] = true;
                    }
                }
            }
            for i in 0..d {
                if !reach[i] {
                    assert_eq!(w[(i, j)], 0.0);
                }
            }
        }
    }
}

fn separable_2d(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = seeded(seed);
    let mut xs = vec![];
    let mut ys = vec![];
    for i in 0..n {
        let label = i % 2;
        let deg: f64 = if label == 0 { rng.random_range(-60.0..20.0) } else { rng.random_range(70.0..150.0) };
        let t = deg.to_radians();
        xs.push(vec![t.cos(), t.sin()]);
        ys.push(label);
    }
    (xs, ys)
}

#[test]
fn zero_learning_rate_keeps_angles() {
    let (xs, ys) = separable_2d(50, 12);
    let mut net = OrthoNet::new(&[2, 2], Nonlinearity::Sigmoid).unwrap();
    net.randomize(1.0, &mut seeded(13));
    let before = net.clone();
    net.train(&xs, &ys, 3, 0.0, 8, &mut seeded(14)).unwrap();
    assert_eq!(net, before);
}

#[test]
fn trains_on_separable_data() {
    let (xs, ys) = separable_2d(200, 15);
    let mut net = OrthoNet::new(&[2, 2], Nonlinearity::Sigmoid).unwrap();
    net.randomize(std::f64::consts::PI, &mut seeded(16));
    let curve = net.train(&xs, &ys, 50, 0.5, 10, &mut seeded(17)).unwrap();
    assert!(*curve.accuracy.last().unwrap() >= 0.95, "{:?}", curve.accuracy.last());
    assert!(curve.max_orthogonality_error < 1e-10);
}

#[test]
fn thousand_updates_keep_orthogonality() {
    let mut rng = seeded(18);
    let xs: Vec<Vec<f64>> = (0..100).map(|_| random_unit(8, &mut rng)).collect();
    let ys: Vec<usize> = (0..100).map(|i| i % 3).collect();
    let mut net = OrthoNet::new(&[8, 5, 3], Nonlinearity::Sigmoid).unwrap();
    net.randomize(1.0, &mut rng);
    net.train(&xs, &ys, 10, 0.3, 1, &mut rng).unwrap();
    for l in &net.layers {
        let w = l.matrix_of();
        assert!((&w * w.transpose() - DMatrix::identity(w.nrows(), w.nrows())).norm() < 1e-10);
    }
}

#[test]
fn quantum_forward_identity_net() {
    let net = OrthoNet::new(&[4, 4], Nonlinearity::None).unwrap();
    let x = [1.0, 0.0, 0.0, 0.0];
    for seed in 0..20 {
        let y = net.quantum_forward(&x, 1_000_000, &mut seeded(seed)).unwrap();
        assert_eq!(argmax(&y), 0);
        for (a, b) in y.iter().zip(&x) {
            assert_abs_diff_eq!(a / net.logit_scale, b, epsilon = 5e-3);
        }
    }
}

#[test]
fn quantum_forward_converges_to_classical() {
    let mut net = OrthoNet::new(&[6, 4, 3], Nonlinearity::Sigmoid).unwrap();
    net.randomize(1.0, &mut seeded(20));
    let x = random_unit(6, &mut seeded(21));
    let exact = net.forward(&x).unwrap();
    let q = net.quantum_forward(&x, 100_000_000, &mut seeded(22)).unwrap();
    for (a, b) in exact.iter().zip(&q) {
        assert_abs_diff_eq!(a, b, epsilon = 5e-3);
    }
}

#[test]
fn shot_based_decisions_agree_with_classical() {
    let mut rng = seeded(23);
    let centers = [random_unit(4, &mut rng), random_unit(4, &mut rng)];
    let sample = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let mut xs = vec![];
        let mut ys = vec![];
        for i in 0..n {
            let c = &centers[i % 2];
            let v: Vec<f64> = c.iter().map(|m| m + 0.3 * normal(rng)).collect();
            let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            xs.push(v.iter().map(|a| a / nv).collect::<Vec<f64>>());
            ys.push(i % 2);
        }
        (xs, ys)
    };
    let (train_x, train_y) = sample(300, &mut rng);
    let (test_x, _) = sample(500, &mut rng);
    let mut net = OrthoNet::new(&[4, 2], Nonlinearity::Sigmoid).unwrap();
    net.randomize(1.0, &mut rng);
    net.train(&train_x, &train_y, 30, 0.5, 10, &mut rng).unwrap();
    let agree = test_x
        .iter()
        .filter(|x| {
            let q = argmax(&net.quantum_forward(x, 100_000, &mut rng).unwrap());
            q == net.predict(x).unwrap()
        })
        .count();
    assert!(agree as f64 / 500.0 >= 0.95, "{agree}/500");
}

#[test]
fn json_round_trip() {
    let mut net = OrthoNet::new(&[5, 3, 2], Nonlinearity::CapRelu(2.0)).unwrap();
    net.randomize(3.0, &mut seeded(24));
    let s = serde_json::to_string(&net).unwrap();
    let back: OrthoNet = serde_json::from_str(&s).unwrap();
    assert_eq!(back, net);
    assert_eq!(back.layers[0].schedule(), net.layers[0].schedule());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_preserves_norm(seed in 0u64..10_000, n in 2usize..20) {
        let mut rng = seeded(seed);
        let layer = PyramidLayer::random(n, n, &mut rng).unwrap();
        let x: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y = layer.apply(&x).unwrap();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((nx - ny).abs() < 1e-10);
    }

    #[test]
    fn angle_index_covers_storage(n in 2usize..14, d_frac in 0.0f64..1.0) {
        let d = 1 + ((n - 1) as f64 * d_frac) as usize;
        let layer = PyramidLayer::zeros(n, d).unwrap();
        let mut idx = vec![];
        for m in 1..n {
            for p in 0..m.min(d) {
                idx.push(layer.angle_index(m, p).unwrap());
            }
        }
        prop_assert_eq!(idx, (0..layer.angles.len()).collect::<Vec<_>>());
        prop_assert!(layer.angle_index(n, 0).is_none());
    }
}
