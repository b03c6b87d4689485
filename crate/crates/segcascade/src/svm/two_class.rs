//! Two-class soft-margin linear classifier.
//!
//! The dual problem — minimize ½αᵀQα − Σα subject to Σα_iy_i = 0 and
//! 0 ≤ α_i ≤ C, with Q_ij = y_iy_j⟨x_i, x_j⟩ — is solved by pairwise
//! coordinate descent: each step picks the maximal violating pair (the
//! steepest feasible ascent coordinate against the steepest feasible descent
//! coordinate), solves the two-variable subproblem in closed form, clips to
//! the box, and updates the gradient incrementally. Selection is
//! deterministic, so identical inputs give identical models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StalledSolution};
use crate::svm::{dot, gram, Classification, Dataset, SolverConfig, Standardization, TAU};

/// Raw solver output in the space of the points it was handed.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoClassSolution {
    pub alphas: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Dual objective Σα − ½‖w‖².
    pub objective: f64,
    /// Pair updates spent.
    pub iterations: usize,
    pub support_indices: Vec<usize>,
    /// Final duality-gap surrogate m(α) − M(α).
    pub kkt_gap: f64,
}

/// Index sets for pair selection: `up` holds coordinates whose dual variable
/// can push the constraint sum upward, `low` downward.
fn select_pair(
    alphas: &[f64],
    labels: &[f64],
    grad: &[f64],
    c: f64,
) -> Option<(usize, usize, f64)> {
    let mut i_best: Option<(usize, f64)> = None;
    let mut j_best: Option<(usize, f64)> = None;
    for t in 0..alphas.len() {
        let score = -labels[t] * grad[t];
        let in_up = (labels[t] > 0.0 && alphas[t] < c) || (labels[t] < 0.0 && alphas[t] > 0.0);
        let in_low = (labels[t] > 0.0 && alphas[t] > 0.0) || (labels[t] < 0.0 && alphas[t] < c);
        if in_up && i_best.is_none_or(|(_, s)| score > s) {
            i_best = Some((t, score));
        }
        if in_low && j_best.is_none_or(|(_, s)| score < s) {
            j_best = Some((t, score));
        }
    }
    match (i_best, j_best) {
        (Some((i, m)), Some((j, mm))) => Some((i, j, m - mm)),
        _ => None,
    }
}

fn compute_weights(points: &[Vec<f64>], labels: &[f64], alphas: &[f64]) -> Vec<f64> {
    let d = points[0].len();
    let mut w = vec![0.0; d];
    for ((p, y), a) in points.iter().zip(labels).zip(alphas) {
        if *a > 0.0 {
            for (wk, xk) in w.iter_mut().zip(p) {
                *wk += a * y * xk;
            }
        }
    }
    w
}

/// Offset that puts free support vectors on their margins: the average of
/// y_i − ⟨w, x_i⟩ over free vectors, or the midpoint of the feasible interval
/// when every dual variable sits on a bound.
fn compute_bias(labels: &[f64], alphas: &[f64], grad: &[f64], c: f64) -> f64 {
    let mut n_free = 0usize;
    let mut sum_free = 0.0;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..alphas.len() {
        let yg = labels[t] * grad[t];
        if alphas[t] >= c {
            if labels[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alphas[t] <= 0.0 {
            if labels[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    -rho
}

/// Solves the dual in the space of `points` (no standardization). Both labels
/// must occur. On sweep-budget exhaustion with the gap still above `kkt_tol`,
/// the best iterate travels inside the convergence error.
pub fn solve_two_class(
    points: &[Vec<f64>],
    labels: &[f64],
    cfg: &SolverConfig,
) -> Result<TwoClassSolution> {
    cfg.validate()?;
    let n = points.len();
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{n} points but {} labels",
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|y| **y > 0.0).count();
    if pos == 0 || pos == n {
        return Err(Error::DegenerateData(
            "two-class training requires both labels present".into(),
        ));
    }

    let c = cfg.c;
    let k = gram(points);
    let q = |i: usize, j: usize| labels[i] * labels[j] * k[i][j];

    let mut alphas = vec![0.0; n];
    // Gradient of the dual objective being minimized: (Qα)_i − 1.
    let mut grad = vec![-1.0; n];
    let budget = cfg.max_passes.saturating_mul(n);
    let tol = cfg.solve_tol();

    let mut iterations = 0usize;
    while iterations < budget {
        let Some((i, j, gap)) = select_pair(&alphas, labels, &grad, c) else {
            break;
        };
        if gap <= tol {
            break;
        }
        iterations += 1;

        let old_i = alphas[i];
        let old_j = alphas[j];
        let mut quad = k[i][i] + k[j][j] - 2.0 * k[i][j];
        if quad <= 0.0 {
            quad = TAU;
        }
        if labels[i] != labels[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alphas[i] - alphas[j];
            alphas[i] += delta;
            alphas[j] += delta;
            if diff > 0.0 {
                if alphas[j] < 0.0 {
                    alphas[j] = 0.0;
                    alphas[i] = diff;
                }
            } else if alphas[i] < 0.0 {
                alphas[i] = 0.0;
                alphas[j] = -diff;
            }
            if diff > 0.0 {
                if alphas[i] > c {
                    alphas[i] = c;
                    alphas[j] = c - diff;
                }
            } else if alphas[j] > c {
                alphas[j] = c;
                alphas[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alphas[i] + alphas[j];
            alphas[i] -= delta;
            alphas[j] += delta;
            if sum > c {
                if alphas[i] > c {
                    alphas[i] = c;
                    alphas[j] = sum - c;
                }
            } else if alphas[j] < 0.0 {
                alphas[j] = 0.0;
                alphas[i] = sum;
            }
            if sum > c {
                if alphas[j] > c {
                    alphas[j] = c;
                    alphas[i] = sum - c;
                }
            } else if alphas[i] < 0.0 {
                alphas[i] = 0.0;
                alphas[j] = sum;
            }
        }

        let d_i = alphas[i] - old_i;
        let d_j = alphas[j] - old_j;
        if d_i == 0.0 && d_j == 0.0 {
            // The subproblem is pinned against the box; nothing can move.
            break;
        }
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * d_i + q(t, j) * d_j;
        }
    }

    let gap = match select_pair(&alphas, labels, &grad, c) {
        Some((_, _, g)) => g,
        None => 0.0,
    };

    let weights = compute_weights(points, labels, &alphas);
    let bias = compute_bias(labels, &alphas, &grad, c);
    let objective = alphas.iter().sum::<f64>() - 0.5 * dot(&weights, &weights);

    if gap > cfg.kkt_tol {
        return Err(Error::Convergence {
            sweeps: iterations.div_ceil(n),
            solution: Box::new(StalledSolution {
                alphas,
                offset: bias,
                objective,
                max_violation: gap,
            }),
        });
    }

    let support_indices = (0..n).filter(|&i| alphas[i] > 0.0).collect();
    Ok(TwoClassSolution {
        alphas,
        weights,
        bias,
        objective,
        iterations,
        support_indices,
        kkt_gap: gap,
    })
}

/// Trained hyperplane in standardized feature space, plus the transform that
/// takes raw features there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoClassModel {
    pub schema_id: String,
    pub standardization: Standardization,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub alphas: Vec<f64>,
    pub support_indices: Vec<usize>,
    pub config: SolverConfig,
}

impl TwoClassModel {
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::Shape(format!(
                "query has {} dimensions, model expects {}",
                x.len(),
                self.weights.len()
            )));
        }
        let z = self.standardization.apply(x);
        Ok(dot(&self.weights, &z) + self.bias)
    }

    pub fn classify(&self, x: &[f64]) -> Result<Classification> {
        Ok(if self.decision_value(x)? >= 0.0 {
            Classification::Positive
        } else {
            Classification::Negative
        })
    }

    /// Per-point optimality report of this model against its own training
    /// data (standardized internally).
    pub fn kkt_report(&self, data: &Dataset, tol: f64) -> Result<crate::svm::kkt::KktReport> {
        let labels = data.require_labels()?;
        let z = self.standardization.apply_all(data.points());
        Ok(crate::svm::kkt::verify_two_class(
            &z,
            labels,
            &self.alphas,
            &self.weights,
            self.bias,
            self.config.c,
            tol,
        ))
    }
}

/// Standardizes the data, solves the dual there, and packages the result with
/// the transform and the dataset's schema id.
pub fn train_two_class(data: &Dataset, cfg: &SolverConfig) -> Result<TwoClassModel> {
    let labels = data.require_labels()?;
    let standardization = Standardization::fit(data.points());
    let z = standardization.apply_all(data.points());
    let sol = solve_two_class(&z, labels, cfg)?;
    Ok(TwoClassModel {
        schema_id: data.schema_id().to_string(),
        standardization,
        weights: sol.weights,
        bias: sol.bias,
        alphas: sol.alphas,
        support_indices: sol.support_indices,
        config: cfg.clone(),
    })
}
