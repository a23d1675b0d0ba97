//! Inputs shared by the benchmarks.

use dtnet_core::{DTNetArch, DTNetModel, PolyActivation};
use ndarray::Array2;
use rand::{Rng, SeedableRng};

pub fn uniform_points(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut r = rand::rngs::StdRng::seed_from_u64(seed);
    Array2::from_shape_fn((n, d), |_| r.gen::<f64>())
}

/// Labels from a fixed nonlinear rule over the first two coordinates.
pub fn ring_labels(x: &Array2<f64>) -> Vec<usize> {
    x.rows()
        .into_iter()
        .map(|p| {
            let r = (p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2);
            usize::from(r < 0.1)
        })
        .collect()
}

pub fn random_net(d: usize, widths: &[usize], act: &PolyActivation, seed: u64) -> DTNetModel {
    DTNetModel::glorot(DTNetArch::uniform(d, widths, act, 2).expect("valid arch"), seed)
}
