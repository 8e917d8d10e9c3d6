//! Nominal-class eigenstructure via the method of snapshots.
//!
//! With `N` centered samples in `R^p` and `N << p`, the nonzero spectrum of
//! the `p x p` sample covariance equals the spectrum of the `N x N` snapshot
//! Gram matrix `G = X Xᵀ / (N - 1)`. An eigenvector `u` of `G` lifts to the
//! covariance eigenvector `Xᵀ u / |Xᵀ u|`, so the `p x p` matrix is never
//! formed.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::SignalMatrix;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};

/// Modes with eigenvalue below this fraction of the largest are dropped
/// before lifting.
pub const EIGEN_RELATIVE_FLOOR: f64 = 1e-12;

/// Energy fraction used to choose `M` when no explicit order is given.
pub const DEFAULT_ENERGY_FRACTION: f64 = 0.90;

/// Tolerance for orthonormality of eigenvectors supplied from outside.
const ORTHONORMAL_TOL: f64 = 1e-8;

/// How many modes to keep in the truncated expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    Order(usize),
    /// Smallest `M` whose leading eigenvalues carry at least this fraction
    /// of the total variance.
    EnergyFraction(f64),
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::EnergyFraction(DEFAULT_ENERGY_FRACTION)
    }
}

/// Mean, spectrum and orthonormal eigenvectors of the nominal class together
/// with the truncation order `M` and the tail energy `t_M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EigenModelRepr", into = "EigenModelRepr")]
pub struct EigenModel {
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
    order: usize,
    tail_energy: f64,
}

#[derive(Serialize, Deserialize)]
struct EigenModelRepr {
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
    #[serde(rename = "M")]
    order: usize,
    tail_energy: f64,
}

impl TryFrom<EigenModelRepr> for EigenModel {
    type Error = Error;

    fn try_from(r: EigenModelRepr) -> Result<Self> {
        let model = EigenModel::from_parts(r.mean, r.eigenvalues, r.eigenvectors, r.order)?;
        let scale = model.total_variance().max(f64::MIN_POSITIVE);
        if (model.tail_energy - r.tail_energy).abs() > 1e-9 * scale {
            return Err(Error::Incompatible(format!(
                "tail_energy {} disagrees with the spectrum ({})",
                r.tail_energy, model.tail_energy
            )));
        }
        Ok(model)
    }
}

impl From<EigenModel> for EigenModelRepr {
    fn from(m: EigenModel) -> Self {
        EigenModelRepr {
            mean: m.mean,
            eigenvalues: m.eigenvalues,
            eigenvectors: m.eigenvectors,
            order: m.order,
            tail_energy: m.tail_energy,
        }
    }
}

impl EigenModel {
    /// Assembles a model from known eigenpairs, validating ordering,
    /// dimensions and orthonormality.
    pub fn from_parts(
        mean: Vec<f64>,
        mut eigenvalues: Vec<f64>,
        eigenvectors: Vec<Vec<f64>>,
        order: usize,
    ) -> Result<Self> {
        let p = mean.len();
        if p == 0 {
            return Err(Error::Empty("model mean is empty".into()));
        }
        if eigenvalues.len() != eigenvectors.len() {
            return Err(Error::DimensionMismatch {
                expected: eigenvalues.len(),
                found: eigenvectors.len(),
            });
        }
        if order > eigenvalues.len() {
            return Err(Error::RankDeficient {
                requested: order,
                rank: eigenvalues.len(),
            });
        }
        let top = eigenvalues.first().copied().unwrap_or(0.0).abs();
        for (k, lam) in eigenvalues.iter_mut().enumerate() {
            if !lam.is_finite() || *lam < -1e-12 * top.max(1.0) {
                return Err(Error::InvalidParameter(format!("eigenvalue {k} is {lam}")));
            }
            *lam = lam.max(0.0);
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameter("eigenvalues must be non-increasing".into()));
        }
        for v in &eigenvectors {
            if v.len() != p {
                return Err(Error::DimensionMismatch { expected: p, found: v.len() });
            }
        }
        for i in 0..eigenvectors.len() {
            for j in 0..=i {
                let g = dot(&eigenvectors[i], &eigenvectors[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                if (g - target).abs() > ORTHONORMAL_TOL {
                    return Err(Error::InvalidParameter(format!(
                        "eigenvectors not orthonormal: <phi_{i}, phi_{j}> = {g}"
                    )));
                }
            }
        }
        let tail_energy = eigenvalues[order..].iter().sum();
        Ok(Self {
            mean,
            eigenvalues,
            eigenvectors,
            order,
            tail_energy,
        })
    }

    /// Signal dimension `p`.
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Truncation order `M`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of retained modes `r >= M`.
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// All retained eigenvectors.
    pub fn eigenvectors(&self) -> &[Vec<f64>] {
        &self.eigenvectors
    }

    /// The `M` eigenvectors spanning the truncated eigenspace.
    pub fn leading(&self) -> &[Vec<f64>] {
        &self.eigenvectors[..self.order]
    }

    /// `t_M`, the variance outside the truncated eigenspace.
    pub fn tail_energy(&self) -> f64 {
        self.tail_energy
    }

    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Same eigenpairs, different truncation order.
    pub fn with_order(&self, order: usize) -> Result<Self> {
        if order > self.rank() {
            return Err(Error::RankDeficient {
                requested: order,
                rank: self.rank(),
            });
        }
        let mut m = self.clone();
        m.order = order;
        m.tail_energy = m.eigenvalues[order..].iter().sum();
        Ok(m)
    }

    /// SHA-256 over the dimensions and the exact bit patterns of the mean,
    /// spectrum and leading eigenvectors.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim() as u64).to_le_bytes());
        h.update((self.order as u64).to_le_bytes());
        for v in self.mean.iter().chain(&self.eigenvalues[..self.order]) {
            h.update(v.to_le_bytes());
        }
        for vec in self.leading() {
            for v in vec {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn centered_rows(signals: &SignalMatrix, mean: &[f64]) -> Vec<Vec<f64>> {
    signals
        .rows()
        .map(|r| r.iter().zip(mean).map(|(x, m)| x - m).collect())
        .collect()
}

/// `X Xᵀ / (N - 1)` for the centered rows `X`.
fn snapshot_gram(centered: &[Vec<f64>]) -> DMatrix<f64> {
    let n = centered.len();
    let scale = 1.0 / (n as f64 - 1.0);
    let upper: Vec<(usize, usize, f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| (i..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, dot(&centered[i], &centered[j]) * scale))
        .collect();
    let mut g = DMatrix::zeros(n, n);
    for (i, j, v) in upper {
        g[(i, j)] = v;
        g[(j, i)] = v;
    }
    g
}

/// Eigenvalues in decreasing order, with everything below the relative
/// floor removed; returns the kept `(value, column)` pairs.
fn sorted_above_floor(values: &nalgebra::DVector<f64>) -> Vec<(f64, usize)> {
    let mut pairs: Vec<(f64, usize)> = values.iter().enumerate().map(|(k, &l)| (l.max(0.0), k)).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let top = pairs.first().map_or(0.0, |p| p.0);
    let floor = EIGEN_RELATIVE_FLOOR * top;
    pairs.into_iter().filter(|&(l, _)| top > 0.0 && l >= floor).collect()
}

/// Method of snapshots for `N <= p`: eigenpairs of the `N x N` Gram matrix,
/// lifted back to signal space.
fn snapshot_pairs(centered: &[Vec<f64>], p: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(snapshot_gram(centered));
    let kept = sorted_above_floor(&eig.eigenvalues);
    let vectors = kept
        .par_iter()
        .map(|&(_, k)| {
            let u = eig.eigenvectors.column(k);
            let mut phi = vec![0.0; p];
            for (ui, row) in u.iter().zip(centered) {
                axpy(*ui, row, &mut phi);
            }
            phi
        })
        .collect();
    (kept.iter().map(|&(l, _)| l).collect(), vectors)
}

/// Direct `p x p` sample covariance, cheaper when `N > p`.
fn covariance_pairs(centered: &[Vec<f64>], p: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let scale = 1.0 / (centered.len() as f64 - 1.0);
    let mut cov = DMatrix::zeros(p, p);
    for row in centered {
        for i in 0..p {
            if row[i] != 0.0 {
                for j in i..p {
                    cov[(i, j)] += row[i] * row[j];
                }
            }
        }
    }
    for i in 0..p {
        for j in i..p {
            cov[(i, j)] *= scale;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    let eig = SymmetricEigen::new(cov);
    let kept = sorted_above_floor(&eig.eigenvalues);
    let vectors = kept.iter().map(|&(_, k)| eig.eigenvectors.column(k).iter().copied().collect()).collect();
    (kept.iter().map(|&(l, _)| l).collect(), vectors)
}

/// Fits the truncated eigenmodel of the rows of `filter_set`.
pub fn fit_eigenmodel(filter_set: &SignalMatrix, truncation: Truncation) -> Result<EigenModel> {
    let n = filter_set.sample_count();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, found: n });
    }
    match truncation {
        Truncation::Order(m) if m > n - 1 => {
            return Err(Error::InvalidParameter(format!(
                "truncation order {m} exceeds N_T - 1 = {}",
                n - 1
            )))
        }
        Truncation::EnergyFraction(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(Error::InvalidParameter(format!("energy fraction {f} outside (0, 1]")))
        }
        _ => {}
    }

    let mean = filter_set.column_means();
    let centered = centered_rows(filter_set, &mean);
    let p = filter_set.feature_count();
    let (mut eigenvalues, mut vectors) = if n <= p {
        snapshot_pairs(&centered, p)
    } else {
        covariance_pairs(&centered, p)
    };

    // Lifting loses orthogonality for the smallest retained modes; two MGS
    // passes restore it to roundoff. A mode that collapses under deflation is
    // numerically absent, so it and everything after it are dropped.
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for mut v in vectors.drain(..) {
        let before = norm(&v);
        for _ in 0..2 {
            for q in &accepted {
                let c = dot(q, &v);
                axpy(-c, q, &mut v);
            }
        }
        let after = norm(&v);
        if before == 0.0 || after <= 1e-8 * before {
            break;
        }
        v.iter_mut().for_each(|x| *x /= after);
        accepted.push(v);
    }
    let vectors = accepted;
    eigenvalues.truncate(vectors.len());
    let rank = eigenvalues.len();

    let order = match truncation {
        Truncation::Order(m) => {
            if m > rank {
                return Err(Error::RankDeficient { requested: m, rank });
            }
            m
        }
        Truncation::EnergyFraction(f) => {
            let total: f64 = eigenvalues.iter().sum();
            if rank == 0 || total <= 0.0 {
                return Err(Error::RankDeficient { requested: 1, rank: 0 });
            }
            let target = f * total * (1.0 - 1e-12);
            let mut acc = 0.0;
            let mut m = rank;
            for (k, l) in eigenvalues.iter().enumerate() {
                acc += l;
                if acc >= target {
                    m = k + 1;
                    break;
                }
            }
            m
        }
    };
    EigenModel::from_parts(mean, eigenvalues, vectors, order)
}

/// Coordinates of a centered signal in the truncated eigenspace and the
/// remainder orthogonal to it.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenProjection {
    pub coefficients: Vec<f64>,
    pub residual: Vec<f64>,
}

pub fn project_onto_eigenspace(u: &[f64], model: &EigenModel) -> Result<EigenProjection> {
    if u.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: u.len(),
        });
    }
    let mut residual: Vec<f64> = u.iter().zip(model.mean()).map(|(x, m)| x - m).collect();
    let coefficients: Vec<f64> = model.leading().iter().map(|phi| dot(&residual, phi)).collect();
    for (c, phi) in coefficients.iter().zip(model.leading()) {
        axpy(-c, phi, &mut residual);
    }
    // second pass removes the roundoff left by the first
    for phi in model.leading() {
        let c = dot(&residual, phi);
        axpy(-c, phi, &mut residual);
    }
    Ok(EigenProjection { coefficients, residual })
}

/// Root-mean-square norm of the residuals of `samples` outside the truncated
/// eigenspace, with the `N - 1` divisor of the sample covariance so that on
/// the fitting set it equals `sqrt(t_M)`.
pub fn truncation_error(model: &EigenModel, samples: &SignalMatrix) -> Result<f64> {
    if samples.feature_count() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: samples.feature_count(),
        });
    }
    let n = samples.sample_count();
    if n == 0 {
        return Err(Error::Empty("no samples".into()));
    }
    let total: f64 = samples
        .rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|row| project_onto_eigenspace(row, model).map(|p| dot(&p.residual, &p.residual)))
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();
    let divisor = if n > 1 { n - 1 } else { 1 } as f64;
    Ok((total / divisor).sqrt())
}
