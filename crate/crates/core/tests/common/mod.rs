#![allow(dead_code)]

use std::collections::BTreeMap;

use mealwise::linalg::Matrix;
use mealwise::pdsn::{GammaMode, GammaNet, HeadParams, PdsnModel, SessionParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// A model with random weights and the given session sizes.
pub fn random_model(seed: u64, d_h: usize, d_z: usize, base: usize, sessions: &[usize], mode: GammaMode) -> PdsnModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let head = HeadParams::new(random_matrix(d_z, d_h, &mut rng), random_matrix(base, d_z, &mut rng)).unwrap();
    let gamma = GammaNet::new(random_matrix(sessions.len().max(1), d_h, &mut rng)).unwrap();
    let mut offset = base;
    let sess = sessions
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let s = SessionParams::new(
                k + 1,
                random_matrix(d_z, d_h, &mut rng),
                random_matrix(n, d_z, &mut rng),
                offset,
            )
            .unwrap();
            offset += n;
            s
        })
        .collect();
    PdsnModel::from_parts(head, gamma, sess, mode, 0.25, BTreeMap::new()).unwrap()
}

pub fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}
