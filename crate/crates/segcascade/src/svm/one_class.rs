//! One-class minimum-enclosing-hypersphere novelty detector.
//!
//! The sphere of smallest radius covering the bulk of the training points is
//! found through its dual: maximize Σα_i⟨x_i,x_i⟩ − ‖Σα_ix_i‖² subject to
//! Σα_i = 1 and 0 ≤ α_i ≤ 1/(ν·n). The cap lets a ν-fraction of the points
//! fall outside; at the optimum at most ν·n points lie strictly outside the
//! sphere and at least (ν − 1/n)·n are support vectors. The solver is the
//! same pairwise ascent used for the two-class dual, restricted to the
//! simplex: each step shifts mass from the coordinate with the smallest
//! gradient to the one with the largest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StalledSolution};
use crate::svm::{gram, Classification, Dataset, SolverConfig, Standardization, TAU};

/// Raw solver output in the space of the points it was handed.
#[derive(Debug, Clone, PartialEq)]
pub struct OneClassSolution {
    pub alphas: Vec<f64>,
    pub center: Vec<f64>,
    pub radius_sq: f64,
    /// Dual objective Σα_iK_ii − αᵀKα.
    pub objective: f64,
    pub iterations: usize,
    pub support_indices: Vec<usize>,
    /// Final gradient spread over movable coordinates.
    pub kkt_gap: f64,
}

fn select_pair(alphas: &[f64], grad: &[f64], cap: f64) -> Option<(usize, usize, f64)> {
    let mut i_best: Option<(usize, f64)> = None;
    let mut j_best: Option<(usize, f64)> = None;
    for t in 0..alphas.len() {
        if alphas[t] < cap && i_best.is_none_or(|(_, s)| grad[t] > s) {
            i_best = Some((t, grad[t]));
        }
        if alphas[t] > 0.0 && j_best.is_none_or(|(_, s)| grad[t] < s) {
            j_best = Some((t, grad[t]));
        }
    }
    match (i_best, j_best) {
        (Some((i, gi)), Some((j, gj))) => Some((i, j, gi - gj)),
        _ => None,
    }
}

/// Radius² from the sphere geometry at the current duals: the mean squared
/// distance of unbounded support vectors from the center, or — when every
/// dual sits on a bound — the midpoint of the interval pinned down by the
/// inside (α = 0) and outside (α = cap) points.
fn radius_sq_from(k: &[Vec<f64>], f: &[f64], alphas: &[f64], cap: f64, center_sq: f64) -> f64 {
    let d2 = |s: usize| k[s][s] - 2.0 * f[s] + center_sq;
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    for (s, &a) in alphas.iter().enumerate() {
        if a > 0.0 && a < cap {
            free_sum += d2(s);
            free_count += 1;
        }
    }
    if free_count > 0 {
        return free_sum / free_count as f64;
    }
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    for (s, &a) in alphas.iter().enumerate() {
        if a <= 0.0 {
            lo = lo.max(d2(s));
        } else {
            hi = hi.min(d2(s));
        }
    }
    if hi.is_finite() {
        (lo + hi) / 2.0
    } else {
        lo
    }
}

/// Solves the hypersphere dual in the space of `points` (no standardization).
pub fn solve_one_class(points: &[Vec<f64>], cfg: &SolverConfig) -> Result<OneClassSolution> {
    cfg.validate()?;
    let n = points.len();
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    let cap = 1.0 / (cfg.nu * n as f64);
    let k = gram(points);

    // Feasible start: uniform mass. f_i = (Kα)_i is kept incrementally; the
    // ascent gradient is K_ii − 2 f_i.
    let mut alphas = vec![1.0 / n as f64; n];
    let mut f: Vec<f64> = (0..n)
        .map(|i| k[i].iter().sum::<f64>() / n as f64)
        .collect();
    let grad = |k: &[Vec<f64>], f: &[f64], t: usize| k[t][t] - 2.0 * f[t];

    let budget = cfg.max_passes.saturating_mul(n);
    let tol = cfg.solve_tol();
    let mut iterations = 0usize;

    while iterations < budget {
        let g: Vec<f64> = (0..n).map(|t| grad(&k, &f, t)).collect();
        let Some((i, j, gap)) = select_pair(&alphas, &g, cap) else {
            break;
        };
        if gap <= tol || i == j {
            break;
        }
        iterations += 1;

        let mut eta = k[i][i] + k[j][j] - 2.0 * k[i][j];
        if eta <= 0.0 {
            eta = TAU;
        }
        let room_i = cap - alphas[i];
        let room_j = alphas[j];
        let delta = ((g[i] - g[j]) / (2.0 * eta)).min(room_i).min(room_j);
        if delta <= 0.0 {
            break;
        }
        if delta == room_i {
            alphas[i] = cap;
            alphas[j] -= delta;
        } else if delta == room_j {
            alphas[j] = 0.0;
            alphas[i] += delta;
        } else {
            alphas[i] += delta;
            alphas[j] -= delta;
        }
        for t in 0..n {
            f[t] += delta * (k[t][i] - k[t][j]);
        }
    }

    let g: Vec<f64> = (0..n).map(|t| grad(&k, &f, t)).collect();
    let gap = match select_pair(&alphas, &g, cap) {
        Some((_, _, v)) => v.max(0.0),
        None => 0.0,
    };

    let d = points[0].len();
    let mut center = vec![0.0; d];
    for (p, &a) in points.iter().zip(&alphas) {
        if a > 0.0 {
            for (ck, xk) in center.iter_mut().zip(p) {
                *ck += a * xk;
            }
        }
    }
    let center_sq: f64 = alphas.iter().zip(&f).map(|(a, fi)| a * fi).sum();
    let radius_sq = radius_sq_from(&k, &f, &alphas, cap, center_sq).max(0.0);
    let objective = alphas
        .iter()
        .enumerate()
        .map(|(i, a)| a * k[i][i])
        .sum::<f64>()
        - center_sq;

    if gap > cfg.kkt_tol {
        return Err(Error::Convergence {
            sweeps: iterations.div_ceil(n),
            solution: Box::new(StalledSolution {
                alphas,
                offset: radius_sq,
                objective,
                max_violation: gap,
            }),
        });
    }

    let support_indices = (0..n).filter(|&i| alphas[i] > 0.0).collect();
    Ok(OneClassSolution {
        alphas,
        center,
        radius_sq,
        objective,
        iterations,
        support_indices,
        kkt_gap: gap,
    })
}

/// Trained hypersphere in standardized feature space, plus the transform
/// that takes raw features there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneClassModel {
    pub schema_id: String,
    pub standardization: Standardization,
    pub center: Vec<f64>,
    pub radius_sq: f64,
    pub alphas: Vec<f64>,
    pub support_indices: Vec<usize>,
    pub config: SolverConfig,
}

impl OneClassModel {
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.center.len() {
            return Err(Error::Shape(format!(
                "query has {} dimensions, model expects {}",
                x.len(),
                self.center.len()
            )));
        }
        let z = self.standardization.apply(x);
        let d2: f64 = z
            .iter()
            .zip(&self.center)
            .map(|(zi, ci)| (zi - ci) * (zi - ci))
            .sum();
        Ok(self.radius_sq - d2)
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
        let z = self.standardization.apply_all(data.points());
        Ok(crate::svm::kkt::verify_one_class(
            &z,
            &self.alphas,
            &self.center,
            self.radius_sq,
            self.config.nu,
            tol,
        ))
    }
}

/// Standardizes the (unlabeled) data, solves the hypersphere dual there, and
/// packages the result with the transform and the dataset's schema id.
pub fn train_one_class(data: &Dataset, cfg: &SolverConfig) -> Result<OneClassModel> {
    let standardization = Standardization::fit(data.points());
    let z = standardization.apply_all(data.points());
    let sol = solve_one_class(&z, cfg)?;
    Ok(OneClassModel {
        schema_id: data.schema_id().to_string(),
        standardization,
        center: sol.center,
        radius_sq: sol.radius_sq,
        alphas: sol.alphas,
        support_indices: sol.support_indices,
        config: cfg.clone(),
    })
}
