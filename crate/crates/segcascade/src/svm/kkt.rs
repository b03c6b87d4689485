//! Per-point optimality checks for trained classifiers.
//!
//! These verify a solution against the conditions that characterize the dual
//! optimum, point by point, at a caller-chosen tolerance — independent of how
//! the solver got there. Margin conditions for the hyperplane: a zero dual
//! means the point clears its margin, an interior dual pins it to the margin,
//! a capped dual allows slack. For the hypersphere: a zero dual means the
//! point is inside, an interior dual puts it on the boundary, a capped dual
//! leaves it on or outside.

use crate::svm::dot;

/// Outcome of a verification pass: every violated condition described, and
/// the size of the largest excess over tolerance-free satisfaction.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    pub violations: Vec<String>,
    pub max_violation: f64,
}

impl KktReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn check(&mut self, excess: f64, tol: f64, describe: impl FnOnce() -> String) {
        if excess > self.max_violation {
            self.max_violation = excess;
        }
        if excess > tol {
            self.violations.push(describe());
        }
    }
}

/// Checks a two-class solution `(alphas, weights, bias)` against `points` and
/// `labels` (in the space the solver ran in) at box bound `c`:
/// box feasibility, Σα_iy_i = 0, the per-point margin conditions, and
/// consistency of `weights` with the duals.
pub fn verify_two_class(
    points: &[Vec<f64>],
    labels: &[f64],
    alphas: &[f64],
    weights: &[f64],
    bias: f64,
    c: f64,
    tol: f64,
) -> KktReport {
    let mut report = KktReport {
        violations: Vec::new(),
        max_violation: 0.0,
    };

    let balance: f64 = alphas.iter().zip(labels).map(|(a, y)| a * y).sum();
    report.check(balance.abs(), tol, || {
        format!("label-weighted dual sum {balance:.3e} not zero")
    });

    let mut w_from_duals = vec![0.0; weights.len()];
    for ((p, y), a) in points.iter().zip(labels).zip(alphas) {
        for (wk, xk) in w_from_duals.iter_mut().zip(p) {
            *wk += a * y * xk;
        }
    }
    for (k, (w, wd)) in weights.iter().zip(&w_from_duals).enumerate() {
        let scale = w.abs().max(1.0);
        report.check((w - wd).abs() / scale, tol, || {
            format!("weight {k} is {w:.6e}, duals give {wd:.6e}")
        });
    }

    for (i, &a) in alphas.iter().enumerate() {
        report.check((-a).max(a - c), tol, || {
            format!("alpha[{i}] = {a:.6e} outside [0, {c}]")
        });
        let margin = labels[i] * (dot(weights, &points[i]) + bias);
        if a <= tol {
            report.check(1.0 - margin, tol, || {
                format!("alpha[{i}] = 0 but margin {margin:.6} < 1")
            });
        } else if a >= c - tol {
            report.check(margin - 1.0, tol, || {
                format!("alpha[{i}] at bound but margin {margin:.6} > 1")
            });
        } else {
            report.check((margin - 1.0).abs(), tol, || {
                format!("free alpha[{i}] but margin {margin:.6} off 1")
            });
        }
    }
    report
}

/// Checks a one-class solution `(alphas, center, radius_sq)` against `points`
/// (in the space the solver ran in) at mass fraction `nu`: simplex
/// feasibility with cap 1/(ν·n), the per-point distance conditions, and
/// consistency of `center` with the duals.
pub fn verify_one_class(
    points: &[Vec<f64>],
    alphas: &[f64],
    center: &[f64],
    radius_sq: f64,
    nu: f64,
    tol: f64,
) -> KktReport {
    let mut report = KktReport {
        violations: Vec::new(),
        max_violation: 0.0,
    };
    let n = points.len();
    let cap = 1.0 / (nu * n as f64);

    let mass: f64 = alphas.iter().sum();
    report.check((mass - 1.0).abs(), tol, || {
        format!("dual mass {mass:.6} not 1")
    });

    let mut c_from_duals = vec![0.0; center.len()];
    for (p, a) in points.iter().zip(alphas) {
        for (ck, xk) in c_from_duals.iter_mut().zip(p) {
            *ck += a * xk;
        }
    }
    for (k, (c0, cd)) in center.iter().zip(&c_from_duals).enumerate() {
        let scale = c0.abs().max(1.0);
        report.check((c0 - cd).abs() / scale, tol, || {
            format!("center {k} is {c0:.6e}, duals give {cd:.6e}")
        });
    }

    // Distances scale with the data, so the geometric conditions are checked
    // relative to the sphere size.
    let scale = radius_sq.max(1.0);
    for (i, &a) in alphas.iter().enumerate() {
        report.check((-a).max(a - cap), tol, || {
            format!("alpha[{i}] = {a:.6e} outside [0, {cap:.6e}]")
        });
        let d2: f64 = points[i]
            .iter()
            .zip(center)
            .map(|(x, c)| (x - c) * (x - c))
            .sum();
        if a <= tol * cap {
            report.check((d2 - radius_sq) / scale, tol, || {
                format!("alpha[{i}] = 0 but point is outside: d² {d2:.6} > r² {radius_sq:.6}")
            });
        } else if a >= cap * (1.0 - tol) {
            report.check((radius_sq - d2) / scale, tol, || {
                format!("alpha[{i}] at cap but point is inside: d² {d2:.6} < r² {radius_sq:.6}")
            });
        } else {
            report.check((d2 - radius_sq).abs() / scale, tol, || {
                format!("free alpha[{i}] but d² {d2:.6} off r² {radius_sq:.6}")
            });
        }
    }
    report
}
