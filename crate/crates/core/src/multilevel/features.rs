use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::MultilevelBasis;
use crate::data::SignalMatrix;
use crate::error::{Error, Result};
use crate::spectral::EigenModel;

/// Which detail levels the feature map keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Coarsest level `S_0` only.
    S0Only,
    /// Every level `S_0, .., S_{n-1}`.
    AllLevels,
}

/// Projection coefficients `d^l_k` of one signal, level-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub coefficients: Vec<f64>,
    pub mode: FeatureMode,
}

fn check_pair(basis: &MultilevelBasis, model: &EigenModel) -> Result<()> {
    if basis.width() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.width(),
            found: model.dim(),
        });
    }
    if basis.eigen_fingerprint() != model.fingerprint() {
        return Err(Error::Incompatible("basis was not built from this eigenmodel".into()));
    }
    Ok(())
}

fn levels_for(basis: &MultilevelBasis, mode: FeatureMode) -> usize {
    match mode {
        FeatureMode::S0Only => 1,
        FeatureMode::AllLevels => basis.level_count(),
    }
}

/// `d^l_k = <u - mean, psi^l_k>` for the levels selected by `mode`.
pub fn feature_map(u: &[f64], basis: &MultilevelBasis, model: &EigenModel, mode: FeatureMode) -> Result<FeatureVector> {
    check_pair(basis, model)?;
    if u.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: u.len(),
        });
    }
    let centered: Vec<f64> = u.iter().zip(model.mean()).map(|(x, m)| x - m).collect();
    Ok(FeatureVector {
        coefficients: basis.coefficients(&centered, levels_for(basis, mode)),
        mode,
    })
}

/// Applies [`feature_map`] to every row, in parallel.
pub fn feature_matrix(
    signals: &SignalMatrix,
    basis: &MultilevelBasis,
    model: &EigenModel,
    mode: FeatureMode,
) -> Result<SignalMatrix> {
    check_pair(basis, model)?;
    if signals.feature_count() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: signals.feature_count(),
        });
    }
    let levels = levels_for(basis, mode);
    let width: usize = basis.level_dims()[..levels].iter().sum();
    let rows: Vec<Vec<f64>> = (0..signals.sample_count())
        .into_par_iter()
        .map(|i| {
            let centered: Vec<f64> = signals.row(i).iter().zip(model.mean()).map(|(x, m)| x - m).collect();
            basis.coefficients(&centered, levels)
        })
        .collect();
    if width == 0 {
        return Err(Error::Empty(format!("feature mode {mode:?} selects no coefficients")));
    }
    let n = rows.len();
    SignalMatrix::from_row_major(rows.into_iter().flatten().collect(), n, width)
}

/// `sum_{l,k} (d^l_k)^2`. Only defined for all-level features.
pub fn anomaly_energy(fv: &FeatureVector) -> Result<f64> {
    match fv.mode {
        FeatureMode::AllLevels => Ok(fv.coefficients.iter().map(|d| d * d).sum()),
        FeatureMode::S0Only => Err(Error::Incompatible(
            "anomaly energy needs all-level coefficients; S0-only energy is partial".into(),
        )),
    }
}
