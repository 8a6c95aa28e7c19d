use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::{fit_weighted, RegressionTree, SortedColumns, TreeParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bootstrap {
    /// Circular block bootstrap; `None` uses blocks of `ceil(n^(1/3))` rows.
    CircularBlock { block_len: Option<usize> },
    /// Every tree sees the training rows once, in order.
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForestParams {
    pub trees: usize,
    pub min_leaf: usize,
    pub feature_fraction: f64,
    pub bootstrap: Bootstrap,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 500,
            min_leaf: 5,
            feature_fraction: 1.0 / 3.0,
            bootstrap: Bootstrap::CircularBlock { block_len: None },
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::InvalidSpec("forest needs at least one tree".into()));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "feature fraction {} outside (0, 1]",
                self.feature_fraction
            )));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidSpec("minimum leaf size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    /// Bootstrap row indices of each tree.
    pub samples: Vec<Vec<usize>>,
    pub feature_fraction: f64,
    pub seed: u64,
    pub n_features: usize,
}

/// Row indices of a circular block bootstrap of length `n`.
pub fn circular_block_bootstrap<R: Rng + ?Sized>(n: usize, block_len: usize, rng: &mut R) -> Vec<usize> {
    let block_len = block_len.clamp(1, n.max(1));
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let start = rng.random_range(0..n);
        for k in 0..block_len {
            if out.len() == n {
                break;
            }
            out.push((start + k) % n);
        }
    }
    out
}

fn default_block_len(n: usize) -> usize {
    let mut b = (n as f64).cbrt().ceil() as usize;
    // guard against cbrt rounding just above an exact cube
    if b > 1 && (b - 1).pow(3) >= n {
        b -= 1;
    }
    b.max(1)
}

/// Tree `b` draws from stream `b` of a ChaCha8 generator keyed by the seed,
/// so the result does not depend on scheduling.
pub fn fit_forest(x: &DMatrix<f64>, y: &[f64], params: ForestParams) -> Result<ForestModel> {
    params.validate()?;
    let n = y.len();
    if x.nrows() != n {
        return Err(Error::WidthMismatch {
            expected: n,
            got: x.nrows(),
        });
    }
    if n == 0 {
        return Err(Error::Empty("forest training set"));
    }
    let tree_params = TreeParams {
        min_leaf: params.min_leaf,
        feature_fraction: params.feature_fraction,
    };
    let sorted = SortedColumns::new(x);
    let fitted: Vec<(RegressionTree, Vec<usize>)> = (0..params.trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(b as u64);
            let rows = match params.bootstrap {
                Bootstrap::Identity => (0..n).collect(),
                Bootstrap::CircularBlock { block_len } => {
                    circular_block_bootstrap(n, block_len.unwrap_or_else(|| default_block_len(n)), &mut rng)
                }
            };
            let mut counts = vec![0u32; n];
            rows.iter().for_each(|&i| counts[i] += 1);
            (fit_weighted(x, &sorted, y, &counts, tree_params, &mut rng), rows)
        })
        .collect();
    let (trees, samples) = fitted.into_iter().unzip();
    Ok(ForestModel {
        trees,
        samples,
        feature_fraction: params.feature_fraction,
        seed: params.seed,
        n_features: x.ncols(),
    })
}

pub fn predict_forest(model: &ForestModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.n_features {
        return Err(Error::WidthMismatch {
            expected: model.n_features,
            got: x.len(),
        });
    }
    let total: f64 = model.trees.iter().map(|t| t.predict(x)).sum();
    Ok(total / model.trees.len() as f64)
}
