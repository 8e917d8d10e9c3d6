//! Exhaustive solver for tiny soft-margin SVM instances.
//!
//! The primal `J(w, b) = (1/n) Σ max(0, 1 - y_i (<w, x_i> + b)) + λ |w|²` is
//! minimized by enumerating every assignment of the samples to "violating"
//! (`S`), "on the margin" (`E`) and "satisfied". For each assignment the
//! stationarity conditions
//!
//! ```text
//! 2λ w = (1/n) Σ_S y_i x_i + Σ_E μ_i y_i x_i
//! 0    = (1/n) Σ_S y_i     + Σ_E μ_i y_i
//! y_i (<w, x_i> + b) = 1   for i in E
//! ```
//!
//! form a square linear system. Every solution gives a candidate `w`, whose
//! best `b` is found exactly among the hinge breakpoints. The optimum is one
//! of the candidates, so the smallest `J` over all of them is the minimum.

use nalgebra::{DMatrix, DVector};

pub fn objective(x: &[Vec<f64>], y: &[f64], lambda: f64, w: &[f64], b: f64) -> f64 {
    let n = x.len() as f64;
    let hinge: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let f: f64 = xi.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b;
            (1.0 - yi * f).max(0.0)
        })
        .sum();
    hinge / n + lambda * w.iter().map(|v| v * v).sum::<f64>()
}

/// Best bias for fixed `w`: the hinge sum is convex and piecewise linear in
/// `b`, so its minimum sits on a breakpoint `b = y_i - <w, x_i>`.
fn best_bias(x: &[Vec<f64>], y: &[f64], lambda: f64, w: &[f64]) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        let b = yi - xi.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let j = objective(x, y, lambda, w, b);
        if j < best.0 {
            best = (j, b);
        }
    }
    best
}

/// Minimum primal objective and a minimizer `(w, b)`.
pub fn primal_optimum(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (f64, Vec<f64>, f64) {
    let n = x.len();
    let d = x[0].len();
    let mut best = (f64::INFINITY, vec![0.0; d], 0.0);
    let mut assignment = vec![0u8; n];
    loop {
        let s: Vec<usize> = (0..n).filter(|&i| assignment[i] == 1).collect();
        let e: Vec<usize> = (0..n).filter(|&i| assignment[i] == 2).collect();
        if e.len() <= d + 1 {
            if let Some(w) = candidate(x, y, lambda, &s, &e) {
                let (j, b) = best_bias(x, y, lambda, &w);
                if j < best.0 {
                    best = (j, w, b);
                }
            }
        }
        // next base-3 assignment
        let mut k = 0;
        while k < n && assignment[k] == 2 {
            assignment[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
        assignment[k] += 1;
    }
    best
}

fn candidate(x: &[Vec<f64>], y: &[f64], lambda: f64, s: &[usize], e: &[usize]) -> Option<Vec<f64>> {
    let d = x[0].len();
    let n = x.len() as f64;
    let mut pull = vec![0.0; d];
    for &i in s {
        for k in 0..d {
            pull[k] += y[i] * x[i][k] / n;
        }
    }
    if e.is_empty() {
        return Some(pull.iter().map(|v| v / (2.0 * lambda)).collect());
    }
    // unknowns: w (d), b, μ_E
    let size = d + 1 + e.len();
    let mut a = DMatrix::zeros(size, size);
    let mut rhs = DVector::zeros(size);
    for k in 0..d {
        a[(k, k)] = 2.0 * lambda;
        for (c, &i) in e.iter().enumerate() {
            a[(k, d + 1 + c)] = -y[i] * x[i][k];
        }
        rhs[k] = pull[k];
    }
    for (c, &i) in e.iter().enumerate() {
        a[(d, d + 1 + c)] = -y[i];
    }
    rhs[d] = s.iter().map(|&i| y[i]).sum::<f64>() / n;
    for (c, &i) in e.iter().enumerate() {
        let row = d + 1 + c;
        for k in 0..d {
            a[(row, k)] = y[i] * x[i][k];
        }
        a[(row, d)] = y[i];
        rhs[row] = 1.0;
    }
    let sol = a.clone().lu().solve(&rhs)?;
    if (&a * &sol - &rhs).amax() > 1e-9 || sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(sol.rows(0, d).iter().copied().collect())
}
