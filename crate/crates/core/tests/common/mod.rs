//! Shared generators for the integration suites.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netid_core::linalg::spectral_radius;
use netid_core::lti::StateSpaceSystem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

pub fn random_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

/// Random stable system with `C = I`: generically minimal.
pub fn random_stable_system(n: usize, seed: u64, with_d: bool) -> StateSpaceSystem {
    let mut r = rng(seed);
    let mut a = random_matrix(&mut r, n, n);
    let radius = spectral_radius(&a);
    if radius > 0.0 {
        a *= 0.9 / radius;
    }
    let b = random_matrix(&mut r, n, n);
    let d = if with_d {
        random_matrix(&mut r, n, n)
    } else {
        DMatrix::zeros(n, n)
    };
    StateSpaceSystem::new(a, b, DMatrix::identity(n, n), d).unwrap()
}
