//! Binary C-SVC dual solver: sequential minimal optimization with
//! second-order working-set selection, after Fan, Chen and Lin (2005).
//!
//! Minimizes `½ αᵀQα − eᵀα` subject to `0 ≤ α ≤ C` and `yᵀα = 0`, where
//! `Q_ij = y_i y_j K_ij`. The Gram matrix is supplied by the caller.

use crate::{Error, Result};

/// Floor for non-positive curvature along the selected direction.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoParams {
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    /// Iteration budget, in units of the training-set size.
    pub max_passes: usize,
}

impl Default for SmoParams {
    fn default() -> Self {
        SmoParams {
            c: 1.0,
            tol: 1e-3,
            max_passes: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    /// Decision function is `Σ y_i α_i K(x_i, x) − rho`.
    pub rho: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out before the tolerance was met.
    pub converged: bool,
}

/// Solves the dual for labels `y ∈ {+1, −1}` and a row-major `n × n` Gram
/// matrix.
pub fn solve_binary(gram: &[f64], y: &[f64], params: &SmoParams) -> Result<BinarySolution> {
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if gram.len() != n * n {
        return Err(Error::DimensionMismatch(format!(
            "gram matrix has {} entries, expected {}",
            gram.len(),
            n * n
        )));
    }
    if !(params.c > 0.0) || !params.c.is_finite() {
        return Err(Error::InvalidParameter(format!("C must be positive, got {}", params.c)));
    }
    if !(params.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", params.tol)));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidParameter("labels must be +1 or -1".into()));
    }

    let c = params.c;
    let k = |i: usize, j: usize| gram[i * n + j];
    let q = |i: usize, j: usize| y[i] * y[j] * k(i, j);

    let mut alpha = vec![0.0; n];
    // Gradient of the objective, Qα − e; starts at −e.
    let mut grad = vec![-1.0; n];
    let budget = params.max_passes.saturating_mul(n).max(1);
    let mut iterations = 0;
    let mut converged = false;

    let at_upper = |a: f64| a >= c;
    let at_lower = |a: f64| a <= 0.0;

    while iterations < budget {
        // First index: maximal violation in the "up" set.
        let mut gmax = f64::NEG_INFINITY;
        let mut first = None;
        for t in 0..n {
            let movable = if y[t] > 0.0 { !at_upper(alpha[t]) } else { !at_lower(alpha[t]) };
            if movable && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                first = Some(t);
            }
        }
        let Some(i) = first else {
            converged = true;
            break;
        };

        // Second index: largest objective decrease in the "low" set.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut second = None;
        let mut best_decrease = f64::INFINITY;
        for t in 0..n {
            let movable = if y[t] > 0.0 { !at_lower(alpha[t]) } else { !at_upper(alpha[t]) };
            if !movable {
                continue;
            }
            let yg = y[t] * grad[t];
            gmax2 = gmax2.max(yg);
            let grad_diff = gmax + yg;
            if grad_diff > 0.0 {
                let curvature = k(i, i) + k(t, t) - 2.0 * k(i, t);
                let curvature = if curvature > 0.0 { curvature } else { TAU };
                let decrease = -(grad_diff * grad_diff) / curvature;
                if decrease <= best_decrease {
                    best_decrease = decrease;
                    second = Some(t);
                }
            }
        }
        let Some(j) = second.filter(|_| gmax + gmax2 >= params.tol) else {
            converged = true;
            break;
        };

        iterations += 1;
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let curvature = (k(i, i) + k(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / curvature;
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
            let curvature = (k(i, i) + k(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / curvature;
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
            grad[t] += q(i, t) * di + q(j, t) * dj;
        }
    }

    Ok(BinarySolution {
        rho: compute_rho(&alpha, &grad, y, c),
        alpha,
        iterations,
        converged,
    })
}

/// Bias from the free support vectors, or the midpoint of the feasible
/// interval when none are free.
fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else {
        (upper + lower) / 2.0
    }
}
