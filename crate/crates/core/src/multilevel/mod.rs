//! Multilevel detail spaces of the orthogonal complement of the nominal
//! eigenspace, and the feature map onto them.

mod basis;
mod features;
mod haar;
mod tree;

pub use basis::{build_multilevel_basis, BasisDocument, MultilevelBasis, DEFAULT_RANK_TOL};
pub use features::{anomaly_energy, feature_map, feature_matrix, FeatureMode, FeatureVector};
pub use tree::{build_block_tree, Block, BlockTree};
