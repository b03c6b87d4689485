//! Brute-force reference optimizer for the solver duals, test-side only.
//!
//! Both duals are box-constrained quadratic programs with one equality
//! constraint: maximize linᵀα − ½αᵀHα subject to aᵀα = b and 0 ≤ α ≤ cap.
//! At any optimum each coordinate is at its lower bound, at its upper bound,
//! or free — so enumerating all 3ⁿ assignments, solving the stationarity
//! system on each free set, and keeping the best feasible candidate finds the
//! global optimum with no iterative search to trust. Faces whose linear
//! systems are singular are handled by an SVD least-squares solve with a
//! residual check. Capped at n ≤ 10 (3¹⁰ ≈ 59k faces).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::svm::{gram, Dataset, SolverConfig};

const BOX_SLACK: f64 = 1e-9;

struct BoxQp {
    h: Vec<Vec<f64>>,
    lin: Vec<f64>,
    a: Vec<f64>,
    b: f64,
    cap: f64,
}

impl BoxQp {
    fn objective(&self, alphas: &[f64]) -> f64 {
        let n = alphas.len();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += alphas[i] * self.h[i][j] * alphas[j];
            }
        }
        let linear: f64 = self.lin.iter().zip(alphas).map(|(l, a)| l * a).sum();
        linear - 0.5 * quad
    }

    /// Stationary point of the face where `free` lists the unfixed
    /// coordinates and `fixed` holds the bound values elsewhere, or None if
    /// the face's system is inconsistent.
    fn face_candidate(&self, free: &[usize], fixed: &[f64]) -> Option<Vec<f64>> {
        let m = free.len();
        if m == 0 {
            let eq: f64 = self.a.iter().zip(fixed).map(|(a, x)| a * x).sum();
            if (eq - self.b).abs() <= 1e-7 * (1.0 + self.b.abs()) {
                return Some(fixed.to_vec());
            }
            return None;
        }

        // Stationarity over the free block with multiplier λ for aᵀα = b:
        //   [ H_FF  a_F ] [α_F]   [ lin_F − H_FB·α_B ]
        //   [ a_Fᵀ   0  ] [ λ ] = [ b − a_Bᵀ·α_B     ]
        let mut mat = DMatrix::<f64>::zeros(m + 1, m + 1);
        let mut rhs = DVector::<f64>::zeros(m + 1);
        for (r, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                mat[(r, c)] = self.h[i][j];
            }
            mat[(r, m)] = self.a[i];
            mat[(m, r)] = self.a[i];
            let mut lin = self.lin[i];
            for (j, &x) in fixed.iter().enumerate() {
                if x != 0.0 && !free.contains(&j) {
                    lin -= self.h[i][j] * x;
                }
            }
            rhs[r] = lin;
        }
        let mut b_eff = self.b;
        for (j, &x) in fixed.iter().enumerate() {
            if !free.contains(&j) {
                b_eff -= self.a[j] * x;
            }
        }
        rhs[m] = b_eff;

        let svd = mat.clone().svd(true, true);
        let sigma_max = svd.singular_values.max();
        let eps = if sigma_max > 0.0 {
            sigma_max * 1e-12
        } else {
            1e-12
        };
        let x = svd.solve(&rhs, eps).ok()?;
        if ((&mat * &x) - &rhs).norm() > 1e-8 * (1.0 + rhs.norm()) {
            return None;
        }

        let mut alphas = fixed.to_vec();
        for (r, &i) in free.iter().enumerate() {
            let v = x[r];
            if !(-BOX_SLACK..=self.cap + BOX_SLACK).contains(&v) {
                return None;
            }
            alphas[i] = v.clamp(0.0, self.cap);
        }
        let eq: f64 = self.a.iter().zip(&alphas).map(|(a, x)| a * x).sum();
        if (eq - self.b).abs() > 1e-7 * (1.0 + self.b.abs()) {
            return None;
        }
        Some(alphas)
    }

    fn solve(&self) -> Option<(Vec<f64>, f64)> {
        let n = self.lin.len();
        let mut best: Option<(Vec<f64>, f64)> = None;
        let faces = 3usize.pow(n as u32);
        let mut free = Vec::with_capacity(n);
        let mut fixed = vec![0.0; n];
        for code in 0..faces {
            free.clear();
            let mut c = code;
            for (i, f) in fixed.iter_mut().enumerate() {
                match c % 3 {
                    0 => *f = 0.0,
                    1 => *f = self.cap,
                    _ => {
                        *f = 0.0;
                        free.push(i);
                    }
                }
                c /= 3;
            }
            if let Some(alphas) = self.face_candidate(&free, &fixed) {
                let obj = self.objective(&alphas);
                if best.as_ref().is_none_or(|(_, b)| obj > *b) {
                    best = Some((alphas, obj));
                }
            }
        }
        best
    }
}

fn two_class_qp(points: &[Vec<f64>], labels: &[f64], c: f64) -> BoxQp {
    let n = points.len();
    let k = gram(points);
    let mut h = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            h[i][j] = labels[i] * labels[j] * k[i][j];
        }
    }
    BoxQp {
        h,
        lin: vec![1.0; n],
        a: labels.to_vec(),
        b: 0.0,
        cap: c,
    }
}

fn one_class_qp(points: &[Vec<f64>], nu: f64) -> BoxQp {
    let n = points.len();
    let k = gram(points);
    let lin: Vec<f64> = (0..n).map(|i| k[i][i]).collect();
    let h: Vec<Vec<f64>> = k
        .iter()
        .map(|row| row.iter().map(|v| 2.0 * v).collect())
        .collect();
    BoxQp {
        h,
        lin,
        a: vec![1.0; n],
        b: 1.0,
        cap: 1.0 / (nu * n as f64),
    }
}

/// Globally optimal dual objective for the problem `data` + `cfg` describe:
/// the two-class dual when labels are present, the hypersphere dual when
/// absent. Same objective conventions as the solvers, so the values compare
/// directly. Only for n ≤ 10.
pub fn brute_force_dual_oracle(data: &Dataset, cfg: &SolverConfig) -> Result<f64> {
    cfg.validate()?;
    let n = data.len();
    if n > 10 {
        return Err(Error::Size(format!(
            "exhaustive dual enumeration is limited to 10 points, got {n}"
        )));
    }
    let qp = match data.labels() {
        Some(labels) => two_class_qp(data.points(), labels, cfg.c),
        None => one_class_qp(data.points(), cfg.nu),
    };
    let (_, objective) = qp
        .solve()
        .ok_or_else(|| Error::Data("no feasible stationary point found".into()))?;
    Ok(objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::svm::{solve_one_class, solve_two_class};

    fn cfg(c: f64, nu: f64) -> SolverConfig {
        SolverConfig {
            c,
            nu,
            ..SolverConfig::default()
        }
    }

    /// The symmetric 1-D pair, derived by hand: with α₁ = α₂ = α the dual is
    /// 2α − 2α², maximal at α = ½ with value ½ (the cross term of the Gram
    /// matrix contributes, which is easy to drop when deriving casually).
    #[test]
    fn symmetric_pair_objective_is_half() {
        let ds = Dataset::labeled(vec![vec![-1.0], vec![1.0]], vec![-1.0, 1.0]).unwrap();
        let obj = brute_force_dual_oracle(&ds, &cfg(10.0, 0.1)).unwrap();
        assert!((obj - 0.5).abs() < 1e-9, "got {obj}");
        let sol = solve_two_class(ds.points(), ds.labels().unwrap(), &cfg(10.0, 0.1)).unwrap();
        assert!((sol.objective - obj).abs() < 1e-9);
    }

    #[test]
    fn single_point_sphere_objective_is_zero() {
        // The exact optimum is 0; the oracle's least-squares face solve works
        // at condition number ‖x‖⁴-ish, so allow it a few orders above eps.
        let ds = Dataset::unlabeled(vec![vec![3.0, 4.0]]).unwrap();
        let obj = brute_force_dual_oracle(&ds, &cfg(1.0, 0.5)).unwrap();
        assert!(obj.abs() < 1e-9, "got {obj}");
        let sol = solve_one_class(ds.points(), &cfg(1.0, 0.5)).unwrap();
        assert!((sol.objective - obj).abs() < 1e-9);
    }

    #[test]
    fn eleven_points_exceed_the_size_cap() {
        let ds = Dataset::unlabeled(vec![vec![0.0]; 11]).unwrap();
        assert!(matches!(
            brute_force_dual_oracle(&ds, &cfg(1.0, 0.5)),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn unit_square_sphere_objective() {
        let ds = Dataset::unlabeled(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let obj = brute_force_dual_oracle(&ds, &cfg(1.0, 0.01)).unwrap();
        assert!((obj - 0.5).abs() < 1e-9);
    }

    #[test]
    fn xor_objective_at_the_box() {
        // Zero-mean unit-variance XOR layout: every dual saturates at C = 1
        // and the objective is 4.
        let pts = vec![
            vec![-1.0, -1.0],
            vec![1.0, 1.0],
            vec![-1.0, 1.0],
            vec![1.0, -1.0],
        ];
        let labels = vec![1.0, 1.0, -1.0, -1.0];
        let ds = Dataset::labeled(pts.clone(), labels.clone()).unwrap();
        let obj = brute_force_dual_oracle(&ds, &cfg(1.0, 0.1)).unwrap();
        assert!((obj - 4.0).abs() < 1e-9);
        let sol = solve_two_class(&pts, &labels, &cfg(1.0, 0.1)).unwrap();
        let rel = (sol.objective - obj).abs() / obj.abs().max(1.0);
        assert!(rel < 1e-6);
    }

    /// No feasible point may beat the oracle: random feasible duals, built by
    /// random pair transfers that preserve the constraints, stay below it.
    #[test]
    fn oracle_upper_bounds_random_feasible_points() {
        let mut g = SplitMix64::new(4242);
        for _ in 0..10 {
            let n = 4 + g.next_index(4);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![g.normal(), g.normal()])
                .collect();
            let nu = 0.4;
            let ds = Dataset::unlabeled(pts.clone()).unwrap();
            let best = brute_force_dual_oracle(&ds, &cfg(1.0, nu)).unwrap();
            let qp = one_class_qp(&pts, nu);

            let mut alphas = vec![1.0 / n as f64; n];
            for _ in 0..60 {
                let i = g.next_index(n);
                let j = g.next_index(n);
                if i == j {
                    continue;
                }
                let room = (qp.cap - alphas[i]).min(alphas[j]);
                if room <= 0.0 {
                    continue;
                }
                let t = g.uniform(0.0, room);
                alphas[i] += t;
                alphas[j] -= t;
                let obj = qp.objective(&alphas);
                assert!(
                    obj <= best + 1e-9 * (1.0 + best.abs()),
                    "feasible point beats oracle: {obj} > {best}"
                );
            }
        }
    }

    #[test]
    fn oracle_matches_both_solvers_on_random_problems() {
        let mut g = SplitMix64::new(31337);
        for round in 0..25 {
            let n = 3 + g.next_index(6);
            let d = 1 + g.next_index(3);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| g.normal()).collect())
                .collect();

            // One-class.
            let nu = [0.15, 0.3, 0.6][g.next_index(3)];
            let ds = Dataset::unlabeled(pts.clone()).unwrap();
            let want = brute_force_dual_oracle(&ds, &cfg(1.0, nu)).unwrap();
            let got = solve_one_class(&pts, &cfg(1.0, nu)).unwrap().objective;
            let rel = (want - got).abs() / want.abs().max(1.0);
            assert!(rel < 1e-6, "one-class round {round}: {got} vs {want}");

            // Two-class, when the random labels produce both classes.
            let labels: Vec<f64> = (0..n)
                .map(|_| if g.next_f64() < 0.5 { 1.0 } else { -1.0 })
                .collect();
            let pos = labels.iter().filter(|y| **y > 0.0).count();
            if pos == 0 || pos == n {
                continue;
            }
            let c = [0.5, 2.0][g.next_index(2)];
            let ds = Dataset::labeled(pts.clone(), labels.clone()).unwrap();
            let want = brute_force_dual_oracle(&ds, &cfg(c, 0.1)).unwrap();
            let got = solve_two_class(&pts, &labels, &cfg(c, 0.1))
                .unwrap()
                .objective;
            let rel = (want - got).abs() / want.abs().max(1.0);
            assert!(rel < 1e-6, "two-class round {round}: {got} vs {want}");
        }
    }
}
