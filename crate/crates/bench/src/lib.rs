//! Shared fixtures for the criterion benches.

use qmldesk_core::dataset::{gaussian_blobs, Dataset};
use qmldesk_core::qconv::{Tensor3, Tensor4};
use qmldesk_core::rng::seeded;

pub fn blobs(n: usize, k: usize, d: usize) -> Dataset {
    let mut rng = seeded(7);
    gaussian_blobs(n, k, d, 2.5, 40.0, &mut rng)
        .and_then(|ds| ds.radial_normalized(4.0))
        .expect("valid blob parameters")
}

pub fn conv_pair(side: usize, d_in: usize, d_out: usize) -> (Tensor3, Tensor4) {
    let mut rng = seeded(11);
    (Tensor3::random(side, side, d_in, &mut rng), Tensor4::random(3, 3, d_in, d_out, 0.3, &mut rng))
}

pub fn unit_vector(d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|i| ((i * 37 % 11) as f64) - 5.0 + 0.5).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}
