//! Soft-margin linear SVM.
//!
//! Primal problem, with `n` samples, `y_j = ±1` and regularization `λ`:
//!
//! ```text
//! min_{w,b,τ}  (1/n) Σ_j τ_j + λ |w|²
//! s.t.         y_j (<w, x_j> + b) >= 1 - τ_j,  τ_j >= 0
//! ```
//!
//! This is the usual `C`-SVM scaled by `2λ` with `C = 1/(2λn)`. The solver
//! works on the dual, `min ½ αᵀQα - Σα` with `Q_ij = y_i y_j <x_i, x_j>`,
//! `0 <= α <= C` and `Σ α_i y_i = 0`, by sequential minimal optimization:
//! each step updates the maximal-violating pair (second-order working set
//! selection) analytically, which keeps the equality constraint that the
//! unregularized bias imposes.
//!
//! Coordinate steps crawl on badly conditioned Gram matrices, so the SMO
//! loop is interleaved with an active-set refinement that solves the KKT
//! system of the current free variables exactly. Cross-validation folds
//! start from the solution on all samples.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClassLabel, SignalMatrix};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot};

const TAU: f64 = 1e-12;

/// Features plus class tags (`A -> -1`, `B -> +1`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub features: SignalMatrix,
    pub targets: Vec<ClassLabel>,
}

impl TrainingSet {
    pub fn new(features: SignalMatrix, targets: Vec<ClassLabel>) -> Result<Self> {
        if targets.len() != features.sample_count() {
            return Err(Error::DimensionMismatch {
                expected: features.sample_count(),
                found: targets.len(),
            });
        }
        check_classes(&targets)?;
        Ok(Self { features, targets })
    }
}

fn check_classes(targets: &[ClassLabel]) -> Result<()> {
    let has_a = targets.contains(&ClassLabel::A);
    let has_b = targets.contains(&ClassLabel::B);
    if targets.len() < 2 || !has_a || !has_b {
        return Err(Error::SingleClass);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Regularization `λ`; `None` means `1/(2n)`, i.e. `C = 1`.
    pub lambda: Option<f64>,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            lambda: None,
            tol: 1e-6,
            max_iter: 10_000_000,
        }
    }
}

impl SvmParams {
    pub fn resolve_lambda(&self, n: usize) -> Result<f64> {
        let lambda = self.lambda.unwrap_or(1.0 / (2.0 * n as f64));
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        Ok(lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Primal objective `(1/n) Σ τ_j + λ |w|²` at the returned solution.
    pub objective: f64,
    /// Dual objective `½ αᵀQα - Σα` (minimization form) at the end.
    pub dual_objective: f64,
    pub iterations: usize,
    pub max_kkt_violation: f64,
    pub converged: bool,
    /// Dual objective after every sweep of `n` pair updates; non-increasing.
    pub objective_trace: Vec<f64>,
    /// Dual variables, in training order.
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub diagnostics: Diagnostics,
}

impl SvmModel {
    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: x.len(),
            });
        }
        Ok(dot(&self.weights, x) + self.bias)
    }

    /// Upper bound `1/(2λn)` on every dual variable.
    pub fn box_bound(&self) -> f64 {
        1.0 / (2.0 * self.lambda * self.diagnostics.alpha.len() as f64)
    }
}

/// Label and margin `<w, x> + b`. Positive margins are class `B`; zero goes to
/// the nominal class `A`.
pub fn predict(model: &SvmModel, x: &[f64]) -> Result<(ClassLabel, f64)> {
    let m = model.margin(x)?;
    Ok((label_of(m), m))
}

pub(crate) fn label_of(margin: f64) -> ClassLabel {
    if margin > 0.0 {
        ClassLabel::B
    } else {
        ClassLabel::A
    }
}

pub fn train_svm(data: &TrainingSet, params: &SvmParams) -> Result<SvmModel> {
    let n = data.targets.len();
    let lambda = params.resolve_lambda(n)?;
    let gram = Gram::linear(&data.features);
    let all: Vec<usize> = (0..n).collect();
    let y: Vec<f64> = data.targets.iter().map(|l| l.sign()).collect();
    let sol = solve_dual(&gram, &all, &y, lambda, params, None)?;
    let mut weights = vec![0.0; data.features.feature_count()];
    for (i, a) in sol.alpha.iter().enumerate() {
        if *a != 0.0 {
            axpy(a * y[i], data.features.row(i), &mut weights);
        }
    }
    Ok(SvmModel {
        weights,
        bias: sol.bias,
        lambda,
        diagnostics: sol.diagnostics,
    })
}

/// Dense linear-kernel Gram matrix of a sample set, shared across folds.
#[derive(Debug, Clone)]
pub(crate) struct Gram {
    n: usize,
    values: Vec<f64>,
}

impl Gram {
    pub fn linear(x: &SignalMatrix) -> Self {
        let n = x.sample_count();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| if j < i { 0.0 } else { dot(x.row(i), x.row(j)) }).collect())
            .collect();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                values[i * n + j] = rows[i][j];
                values[j * n + i] = rows[i][j];
            }
        }
        Self { n, values }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

pub(crate) struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub diagnostics: Diagnostics,
}

impl DualSolution {
    /// Decision value for sample `t` of the Gram matrix.
    pub fn margin(&self, gram: &Gram, idx: &[usize], y: &[f64], t: usize) -> f64 {
        let mut f = self.bias;
        for ((&i, &a), &yi) in idx.iter().zip(&self.alpha).zip(y) {
            if a != 0.0 {
                f += a * yi * gram.get(i, t);
            }
        }
        f
    }
}

/// SMO on the samples `idx` of `gram` with signs `y` (aligned with `idx`).
///
/// `warm` is an optional starting point (aligned with `idx`); it is clipped
/// to the box and its balance `Σ α y` is removed before the first step, so
/// any vector works, e.g. a neighbouring problem's solution.
pub(crate) fn solve_dual(
    gram: &Gram,
    idx: &[usize],
    y: &[f64],
    lambda: f64,
    params: &SvmParams,
    warm: Option<&[f64]>,
) -> Result<DualSolution> {
    let n = idx.len();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    if n < 2 || !y.iter().any(|&v| v > 0.0) || !y.iter().any(|&v| v < 0.0) {
        return Err(Error::SingleClass);
    }
    if !(params.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", params.tol)));
    }
    let c = 1.0 / (2.0 * lambda * n as f64);
    let k = |a: usize, b: usize| gram.get(idx[a], idx[b]);
    let diag: Vec<f64> = (0..n).map(|a| k(a, a)).collect();

    let mut alpha = match warm {
        Some(w) if w.len() == n => feasible_start(w, y, c),
        _ => vec![0.0; n],
    };
    let mut grad = full_gradient(&alpha, y, &k);
    let mut trace = vec![dual_objective(&alpha, &grad)];
    let mut iterations = 0;
    let mut next_newton = n;
    let mut violation;
    let up = |a: f64, yt: f64| if yt > 0.0 { a < c } else { a > 0.0 };
    let low = |a: f64, yt: f64| if yt > 0.0 { a > 0.0 } else { a < c };

    loop {
        // i: maximal -y G over I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        // j: second-order choice over I_low, and the minimum -y G for the gap
        let mut gmin = f64::INFINITY;
        let mut best = f64::INFINITY;
        let mut j = usize::MAX;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i != usize::MAX {
                let b = gmax - v;
                if b > 0.0 {
                    let a = (diag[i] + diag[t] - 2.0 * k(i, t)).max(TAU);
                    let score = -b * b / a;
                    if score < best {
                        best = score;
                        j = t;
                    }
                }
            }
        }
        violation = (gmax - gmin).max(0.0);
        if i == usize::MAX || j == usize::MAX || violation <= params.tol {
            break;
        }
        if iterations >= params.max_iter {
            break;
        }
        if iterations >= next_newton {
            let free = active_set_polish(&mut alpha, &mut grad, y, c, params.tol, &k, 2 * n + 10);
            // keep the dense solves at most as costly as the SMO steps between them
            next_newton = iterations + n.max(free * free * free / (3 * n));
            continue;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = (diag[i] + diag[j] - 2.0 * k(i, j)).max(TAU);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k(t, i) * di + y[j] * k(t, j) * dj);
        }
        if iterations % n == 0 {
            trace.push(dual_objective(&alpha, &grad));
        }
    }

    let bias = -rho(&alpha, &grad, y, c);
    let dual = dual_objective(&alpha, &grad);
    trace.push(dual);

    // primal objective from the gradient: Σ_j α_j y_j K_tj = y_t (G_t + 1)
    let w2: f64 = alpha.iter().zip(&grad).map(|(a, g)| a * (g + 1.0)).sum();
    let hinge: f64 = (0..n)
        .map(|t| {
            let f = y[t] * (grad[t] + 1.0) + bias;
            (1.0 - y[t] * f).max(0.0)
        })
        .sum();
    let objective = hinge / n as f64 + lambda * w2;

    Ok(DualSolution {
        bias,
        diagnostics: Diagnostics {
            objective,
            dual_objective: dual,
            iterations,
            max_kkt_violation: violation,
            converged: violation <= params.tol,
            objective_trace: trace,
            alpha: alpha.clone(),
        },
        alpha,
    })
}

/// Active-set refinement: minimizes exactly over the face of the box fixed
/// by the bounded variables, fixes the variable that blocks the step,
/// re-solves, and releases the bounded variable with the most negative
/// multiplier once a face minimizer is reached.
///
/// Coordinate steps crawl when the Gram matrix is badly conditioned; this
/// finishes such problems in a number of dense solves comparable to the
/// number of bound changes. The dual objective never increases. Gives up
/// (leaving the rest to SMO) on a singular face or after `max_changes`.
/// Returns the number of free variables of the last face.
fn active_set_polish(
    alpha: &mut [f64],
    grad: &mut [f64],
    y: &[f64],
    c: f64,
    tol: f64,
    k: &impl Fn(usize, usize) -> f64,
    max_changes: usize,
) -> usize {
    let n = alpha.len();
    let mut working: Vec<bool> = alpha.iter().map(|&a| a > 0.0 && a < c).collect();
    let mut last = 0;
    for _ in 0..max_changes {
        let free: Vec<usize> = (0..n).filter(|&t| working[t]).collect();
        let f = free.len();
        last = f;
        if f == 0 {
            return 0;
        }
        // [Q_FF y_F; y_F' 0] [d; mu] = [-G_F; 0]
        let mut a = DMatrix::zeros(f + 1, f + 1);
        let mut rhs = DVector::zeros(f + 1);
        for (r, &i) in free.iter().enumerate() {
            for (s, &j) in free.iter().enumerate() {
                a[(r, s)] = y[i] * y[j] * k(i, j);
            }
            a[(r, f)] = y[i];
            a[(f, r)] = y[i];
            rhs[r] = -grad[i];
        }
        let Some(step) = a.lu().solve(&rhs) else {
            return f;
        };
        if step.iter().any(|v| !v.is_finite()) {
            return f;
        }
        let mu = step[f];
        let mut scale = 1.0f64;
        let mut blocking = None;
        for (r, &i) in free.iter().enumerate() {
            let d = step[r];
            let room = if d < 0.0 { alpha[i] / -d } else if d > 0.0 { (c - alpha[i]) / d } else { f64::INFINITY };
            if room < scale {
                scale = room;
                blocking = Some((i, if d < 0.0 { 0.0 } else { c }));
            }
        }
        let before = dual_objective(alpha, grad);
        let old = alpha.to_vec();
        for (r, &i) in free.iter().enumerate() {
            alpha[i] = (alpha[i] + scale * step[r]).clamp(0.0, c);
        }
        if let Some((i, bound)) = blocking {
            alpha[i] = bound;
            working[i] = false;
        }
        rebalance(alpha, y, c, &free);
        let fresh = full_gradient(alpha, y, k);
        if dual_objective(alpha, &fresh) > before {
            alpha.copy_from_slice(&old);
            return f;
        }
        grad.copy_from_slice(&fresh);
        if blocking.is_some() {
            continue;
        }
        // at the face minimizer: the multiplier of a bound is y_t (G_t + mu y_t)
        // signed so that a negative value asks to leave the bound
        let mut worst = None;
        let mut most = tol;
        for t in 0..n {
            if working[t] {
                continue;
            }
            let r = grad[t] + mu * y[t];
            let pull = if alpha[t] <= 0.0 { -r } else { r };
            if pull > most {
                most = pull;
                worst = Some(t);
            }
        }
        match worst {
            Some(t) => working[t] = true,
            None => return f,
        }
    }
    last
}

/// Absorbs a rounding-size imbalance `Σ α y` in one free entry.
fn rebalance(alpha: &mut [f64], y: &[f64], c: f64, free: &[usize]) {
    let balance: f64 = alpha.iter().zip(y).map(|(a, s)| a * s).sum();
    if let Some(&t) = free.iter().find(|&&t| {
        let v = alpha[t] - y[t] * balance;
        v > 0.0 && v < c
    }) {
        alpha[t] -= y[t] * balance;
    }
}

/// `G = Q α - 1` from scratch.
fn full_gradient(alpha: &[f64], y: &[f64], k: &impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let n = alpha.len();
    let mut grad = vec![-1.0; n];
    for (s, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            for t in 0..n {
                grad[t] += y[t] * y[s] * k(t, s) * a;
            }
        }
    }
    grad
}

/// Clips `w` to `[0, c]` and lowers entries of the over-represented class
/// until `Σ α y = 0`.
fn feasible_start(w: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let mut alpha: Vec<f64> = w.iter().map(|a| a.clamp(0.0, c)).collect();
    let mut balance: f64 = alpha.iter().zip(y).map(|(a, s)| a * s).sum();
    for t in 0..alpha.len() {
        if balance == 0.0 {
            break;
        }
        if y[t] * balance > 0.0 {
            let cut = alpha[t].min(balance.abs());
            alpha[t] -= cut;
            balance -= y[t] * cut;
            if balance.abs() <= 1e-15 * c {
                balance = 0.0;
            }
        }
    }
    alpha
}

fn dual_objective(alpha: &[f64], grad: &[f64]) -> f64 {
    0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
}

/// Offset `rho` with decision function `Σ α y K - rho`: mean of `y G` over
/// free variables, or the midpoint of the feasible KKT interval if none.
fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
