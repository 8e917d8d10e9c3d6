//! Small dense kernels shared by the numerical modules.

use nalgebra::DMatrix;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four accumulators: better rounding and lets LLVM vectorize
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for k in 0..4 {
            acc[k] += ca[k] * cb[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthonormalizes `vectors` in place with modified Gram-Schmidt, two passes.
/// Vectors whose norm after deflation falls below `drop_tol` times their
/// original norm are removed. Returns the number kept.
pub fn orthonormalize(vectors: &mut Vec<Vec<f64>>, drop_tol: f64) -> usize {
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for mut v in vectors.drain(..) {
        let original = norm(&v);
        if original == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in &kept {
                let c = dot(q, &v);
                axpy(-c, q, &mut v);
            }
        }
        let n = norm(&v);
        if n > drop_tol * original {
            v.iter_mut().for_each(|x| *x /= n);
            kept.push(v);
        }
    }
    *vectors = kept;
    vectors.len()
}

/// Left singular vectors and singular values of the matrix whose columns are
/// `columns`, by one-sided Jacobi rotations, sorted by decreasing singular
/// value. Only directions with singular value above `tol` are returned.
///
/// Jacobi is used instead of a bidiagonalization SVD because it resolves
/// exactly rank-deficient inputs to full relative accuracy.
pub fn left_singular_vectors(mut columns: Vec<Vec<f64>>, tol: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let r = columns.len();
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..r {
            for j in i + 1..r {
                let a = dot(&columns[i], &columns[i]);
                let b = dot(&columns[j], &columns[j]);
                let g = dot(&columns[i], &columns[j]);
                if g == 0.0 || g.abs() <= f64::EPSILON * (a * b).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = columns.split_at_mut(j);
                for (x, y) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
                    let (xi, yj) = (*x, *y);
                    *x = c * xi - s * yj;
                    *y = s * xi + c * yj;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = columns.into_iter().map(|c| (norm(&c), c)).collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs
        .into_iter()
        .filter(|(s, _)| *s > tol)
        .map(|(s, mut c)| {
            c.iter_mut().for_each(|x| *x /= s);
            (c, s)
        })
        .unzip()
}

/// Householder QR factor of a tall matrix, kept in reflector form so that
/// `Q` and `Q^T` can be applied without forming `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Householder {
    rows: usize,
    /// reflector `j` acts on entries `j..rows`; `v[0] == 1` implicitly stored
    vectors: Vec<Vec<f64>>,
    taus: Vec<f64>,
}

impl Householder {
    /// Factors the `rows x cols` column-major matrix `a` (`rows >= cols`).
    pub fn factor(mut a: DMatrix<f64>) -> Self {
        let (rows, cols) = a.shape();
        assert!(rows >= cols, "Householder QR needs rows >= cols");
        let mut vectors = Vec::with_capacity(cols);
        let mut taus = Vec::with_capacity(cols);
        for j in 0..cols {
            let x: Vec<f64> = a.view((j, j), (rows - j, 1)).iter().copied().collect();
            let alpha = x[0];
            let sigma: f64 = x[1..].iter().map(|v| v * v).sum();
            let mut v = x;
            let tau;
            if sigma == 0.0 {
                // already upper triangular in this column
                tau = 0.0;
                v[0] = 1.0;
            } else {
                let mu = (alpha * alpha + sigma).sqrt();
                let beta = if alpha <= 0.0 { alpha - mu } else { -sigma / (alpha + mu) };
                tau = 2.0 * beta * beta / (sigma + beta * beta);
                for vi in v[1..].iter_mut() {
                    *vi /= beta;
                }
                v[0] = 1.0;
            }
            if tau != 0.0 {
                for k in j..cols {
                    let mut col = a.view_mut((j, k), (rows - j, 1));
                    let s: f64 = col.iter().zip(&v).map(|(c, vi)| c * vi).sum();
                    for (c, vi) in col.iter_mut().zip(&v) {
                        *c -= tau * s * vi;
                    }
                }
            }
            vectors.push(v);
            taus.push(tau);
        }
        Self { rows, vectors, taus }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn reflector_count(&self) -> usize {
        self.vectors.len()
    }

    /// `x <- Q^T x`
    pub fn apply_transpose(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        for (j, (v, &tau)) in self.vectors.iter().zip(&self.taus).enumerate() {
            Self::reflect(&mut x[j..], v, tau);
        }
    }

    /// `x <- Q x`
    pub fn apply(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        for (j, (v, &tau)) in self.vectors.iter().zip(&self.taus).enumerate().rev() {
            Self::reflect(&mut x[j..], v, tau);
        }
    }

    fn reflect(x: &mut [f64], v: &[f64], tau: f64) {
        if tau == 0.0 {
            return;
        }
        let s = tau * dot(x, v);
        axpy(-s, v, x);
    }

    /// Column `k` of the full orthogonal factor `Q`.
    pub fn q_column(&self, k: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.rows];
        e[k] = 1.0;
        self.apply(&mut e);
        e
    }
}
