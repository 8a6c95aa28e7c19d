//! Shared fixtures for the criterion benchmarks.

use infcast_core::synthetic::{generate, Synthetic, SyntheticSpec};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Gaussian design with a sparse linear signal in the first five columns.
pub fn sparse_problem(rows: usize, cols: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let x = DMatrix::from_fn(rows, cols, |_, _| draw());
    let y = DVector::from_fn(rows, |i, _| {
        (0..cols.min(5)).map(|j| x[(i, j)] * (1.0 - 0.2 * j as f64)).sum::<f64>() + draw()
    });
    (x, y)
}

/// Default desk-scale synthetic panel.
pub fn desk_panel(seed: u64) -> Synthetic {
    generate(&SyntheticSpec {
        seed,
        ..SyntheticSpec::default()
    })
    .expect("default synthetic spec is valid")
}
