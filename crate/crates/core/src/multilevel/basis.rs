//! Orthonormal multilevel basis of the complement of the truncated
//! eigenspace.
//!
//! Level `l` takes the Haar candidates of that level, deflates them against
//! the eigenvectors and every previously accepted detail vector, and keeps
//! an orthonormal basis of what survives. The result is a chain
//! `P_{l+1} = P_l ⊕ S_l` with `P_0 = span{phi_1..phi_M}` and `P_n = R^p`.
//!
//! Everything is computed in Haar coordinates, where the candidates of level
//! `l` are unit vectors and all coarser candidates are coordinate axes
//! already absorbed into `P_l`. In those coordinates `P_l` is
//! `span(e_<l) ⊕ col(V_l)`, where `V_l` is an orthonormal basis of the
//! eigenvectors restricted to the coordinates of levels `>= l`. Writing
//! `V_l = [T; C]` (rows of level `l`, rows below), the new space is
//!
//! ```text
//! S_l = (span(e_l) ⊕ col(V_{l+1})) ⊖ col(V_l),   V_{l+1} = range of C
//! ```
//!
//! The singular values of `C` are exactly the non-unit singular values of
//! the deflated candidate matrix, so the rank decision is the one an SVD of
//! the deflated candidates would make. In the reduced coordinates
//! `(e_l, V_{l+1})` the old space is the orthonormal column set
//! `G = [T; V_{l+1}ᵀ C]`, and `S_l` is spanned by the trailing columns of the
//! full Householder factor of `G`. Storage is `O(p M log p)` instead of the
//! `O(p^2)` an explicit basis needs.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::haar::HaarLayout;
use super::tree::BlockTree;
use crate::error::{Error, Result};
use crate::linalg::{dot, left_singular_vectors, Householder};
use crate::spectral::EigenModel;

/// Default relative rank tolerance for accepting deflated directions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
struct LevelFactor {
    /// `c_l`: Haar candidates at this level
    candidates: usize,
    /// `r_l`: rank of the eigenspace restricted to levels `>= l`
    incoming: usize,
    /// `V_{l+1}`, one column per retained direction, rows = coordinates of
    /// the deeper levels
    lower: DMatrix<f64>,
    reflectors: Householder,
}

impl LevelFactor {
    fn dim(&self) -> usize {
        self.candidates + self.lower.ncols() - self.incoming
    }
}

/// Orthonormal detail vectors `psi^l_k`, level by level, spanning the
/// complement of an eigenmodel's truncated eigenspace.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilevelBasis {
    tree: BlockTree,
    layout: HaarLayout,
    levels: Vec<LevelFactor>,
    eigen_order: usize,
    eigen_fingerprint: String,
    rank_tol: f64,
}

impl MultilevelBasis {
    pub fn tree(&self) -> &BlockTree {
        &self.tree
    }

    pub fn width(&self) -> usize {
        self.layout.width()
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// `M_l` for every level.
    pub fn level_dims(&self) -> Vec<usize> {
        self.levels.iter().map(LevelFactor::dim).collect()
    }

    /// `sum_l M_l`, which equals `p - M`.
    pub fn total_dim(&self) -> usize {
        self.levels.iter().map(LevelFactor::dim).sum()
    }

    /// Truncation order of the eigenmodel the basis was built from.
    pub fn eigen_order(&self) -> usize {
        self.eigen_order
    }

    pub fn eigen_fingerprint(&self) -> &str {
        &self.eigen_fingerprint
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    /// Detail coefficients `d^l_k = <x, psi^l_k>` of an already centered
    /// signal, for levels `0..levels`, level-major.
    pub(crate) fn coefficients(&self, centered: &[f64], levels: usize) -> Vec<f64> {
        let haar = self.layout.analyze(centered);
        let mut out = Vec::with_capacity(self.levels[..levels].iter().map(LevelFactor::dim).sum());
        for (l, f) in self.levels[..levels].iter().enumerate() {
            let range = self.layout.level_range(l);
            let below = &haar[range.end..];
            let mut g = Vec::with_capacity(f.candidates + f.lower.ncols());
            g.extend_from_slice(&haar[range]);
            g.extend(f.lower.column_iter().map(|col| dot(col.as_slice(), below)));
            f.reflectors.apply_transpose(&mut g);
            out.extend_from_slice(&g[f.incoming..]);
        }
        out
    }

    /// Explicit detail vectors of level `l`, each of length `p`.
    pub fn psi_level(&self, l: usize) -> Vec<Vec<f64>> {
        let f = &self.levels[l];
        let range = self.layout.level_range(l);
        let c = f.candidates;
        (f.incoming..f.incoming + f.dim())
            .into_par_iter()
            .map(|k| {
                let q = f.reflectors.q_column(k);
                let mut haar = vec![0.0; self.width()];
                haar[range.clone()].copy_from_slice(&q[..c]);
                let lifted = &f.lower * nalgebra::DVector::from_column_slice(&q[c..]);
                haar[range.end..].copy_from_slice(lifted.as_slice());
                self.layout.synthesize(&haar)
            })
            .collect()
    }

    /// Every detail vector, level-major.
    pub fn psi(&self) -> Vec<Vec<f64>> {
        (0..self.level_count()).flat_map(|l| self.psi_level(l)).collect()
    }

    /// Serializable description: tree, fingerprint, per-level dimensions and
    /// (optionally) the explicit detail vectors.
    pub fn to_document(&self, explicit_psi: bool) -> BasisDocument {
        BasisDocument {
            tree: self.tree.clone(),
            eigen_fingerprint: self.eigen_fingerprint.clone(),
            eigen_order: self.eigen_order,
            rank_tol: self.rank_tol,
            level_dims: self.level_dims(),
            psi: explicit_psi.then(|| (0..self.level_count()).map(|l| self.psi_level(l)).collect()),
        }
    }

    /// Rebuilds the basis described by `doc` from its eigenmodel and checks
    /// that it matches.
    pub fn from_document(doc: &BasisDocument, model: &EigenModel) -> Result<Self> {
        if doc.eigen_fingerprint != model.fingerprint() {
            return Err(Error::Incompatible("basis was built from a different eigenmodel".into()));
        }
        let basis = build_multilevel_basis(model, &doc.tree, doc.rank_tol)?;
        if basis.level_dims() != doc.level_dims {
            return Err(Error::Incompatible(format!(
                "rebuilt level dimensions {:?} differ from the stored {:?}",
                basis.level_dims(),
                doc.level_dims
            )));
        }
        if let Some(psi) = &doc.psi {
            let rebuilt: Vec<Vec<Vec<f64>>> = (0..basis.level_count()).map(|l| basis.psi_level(l)).collect();
            let max_dev = psi
                .iter()
                .flatten()
                .flatten()
                .zip(rebuilt.iter().flatten().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if psi.iter().map(Vec::len).ne(rebuilt.iter().map(Vec::len)) || max_dev > 1e-9 {
                return Err(Error::Incompatible("stored psi vectors do not match the rebuilt basis".into()));
            }
        }
        Ok(basis)
    }
}

/// On-disk form of a [`MultilevelBasis`].
///
/// The basis is a deterministic function of the eigenmodel, the tree and the
/// rank tolerance, so the document records those plus the resulting level
/// dimensions; the explicit vectors are optional because they take
/// `O(p^2)` space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDocument {
    pub tree: BlockTree,
    pub eigen_fingerprint: String,
    #[serde(rename = "M")]
    pub eigen_order: usize,
    pub rank_tol: f64,
    pub level_dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<Vec<Vec<f64>>>>,
}

/// Builds the multilevel complement basis of `model`'s truncated eigenspace.
///
/// `rank_tol` is relative to the unit norm of the Haar candidates: a
/// deflated direction is accepted when its singular value exceeds it.
pub fn build_multilevel_basis(model: &EigenModel, tree: &BlockTree, rank_tol: f64) -> Result<MultilevelBasis> {
    let p = model.dim();
    if tree.width() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: tree.width(),
        });
    }
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::InvalidParameter(format!("rank tolerance {rank_tol} outside (0, 1)")));
    }
    let layout = HaarLayout::new(tree);
    let m = model.order();

    // V_0: the leading eigenvectors in Haar coordinates (still orthonormal)
    let columns: Vec<Vec<f64>> = model.leading().par_iter().map(|phi| layout.analyze(phi)).collect();
    let mut current = DMatrix::from_fn(p, m, |i, j| columns[j][i]);

    let mut levels = Vec::with_capacity(layout.levels());
    for l in 0..layout.levels() {
        let range = layout.level_range(l);
        let c = range.len();
        let r = current.ncols();
        let below_rows = p - range.end;
        let top = current.rows(0, c).into_owned();
        let bottom = current.rows(c, below_rows).into_owned();

        let lower = if r == 0 || below_rows == 0 {
            DMatrix::zeros(below_rows, 0)
        } else {
            let cols: Vec<Vec<f64>> = bottom.column_iter().map(|c| c.iter().copied().collect()).collect();
            let (u, _) = left_singular_vectors(cols, rank_tol);
            DMatrix::from_fn(below_rows, u.len(), |i, j| u[j][i])
        };
        let k = lower.ncols();
        if c + k < r {
            return Err(Error::Numerical(format!(
                "level {l}: {r} eigen directions do not fit into {c} candidates plus {k} deeper directions"
            )));
        }
        // G = [T; V_{l+1}ᵀ C] in the reduced coordinates (e_l, V_{l+1})
        let projected = lower.transpose() * &bottom;
        let mut g = DMatrix::zeros(c + k, r);
        g.rows_mut(0, c).copy_from(&top);
        g.rows_mut(c, k).copy_from(&projected);
        levels.push(LevelFactor {
            candidates: c,
            incoming: r,
            lower: lower.clone(),
            reflectors: Householder::factor(g),
        });
        current = lower;
    }

    let basis = MultilevelBasis {
        tree: tree.clone(),
        layout,
        levels,
        eigen_order: m,
        eigen_fingerprint: model.fingerprint(),
        rank_tol,
    };
    let mut running = m;
    for (l, d) in basis.level_dims().into_iter().enumerate() {
        running += d;
        let expected_so_far = basis.layout.level_range(l).end;
        // every P_{l+1} has dimension (#coarser coordinates) + rank(V_{l+1})
        let lower_rank = basis.levels[l].lower.ncols();
        if running != expected_so_far + lower_rank {
            return Err(Error::Completeness {
                level: l,
                expected: expected_so_far + lower_rank,
                found: running,
            });
        }
    }
    if running != p {
        return Err(Error::Completeness {
            level: basis.level_count() - 1,
            expected: p,
            found: running,
        });
    }
    Ok(basis)
}
