//! Complete subset regression and random forests.

mod csr;
mod forest;
mod tree;

pub use csr::{fit_csr, CsrParams, SubsetEnsemble, SubsetMember};
pub use forest::{circular_block_bootstrap, fit_forest, predict_forest, Bootstrap, ForestModel, ForestParams};
pub use tree::{fit_tree, Node, RegressionTree, TreeParams};
