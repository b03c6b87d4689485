//! Support-vector classifiers: a two-class maximal-margin hyperplane and a
//! one-class minimum-enclosing-hypersphere, both trained by pairwise
//! coordinate ascent on the dual with a linear kernel.
//!
//! Layout: [`two_class`] and [`one_class`] hold the solvers and trained
//! models, [`oracle`] a brute-force dual optimizer for cross-checking them on
//! small problems, [`kkt`] the per-point optimality checks. This module owns
//! the shared vocabulary — datasets, solver configuration, standardization,
//! and the serialized [`Model`] envelope.
//!
//! Training standardizes features (per-dimension zero mean, unit variance,
//! statistics from the training set only) and solves in that space; models
//! store the transform and apply it to every query. The raw `solve_*`
//! functions skip standardization and operate on the numbers they are given,
//! which is what the solver-level tests and the oracle comparisons use.

pub mod kkt;
pub mod one_class;
pub mod oracle;
pub mod two_class;

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kkt::KktReport;
pub use one_class::{solve_one_class, train_one_class, OneClassModel, OneClassSolution};
pub use oracle::brute_force_dual_oracle;
pub use two_class::{solve_two_class, train_two_class, TwoClassModel, TwoClassSolution};

/// Guard for vanishing quadratic terms in pair updates.
pub(crate) const TAU: f64 = 1e-12;

/// The one kernel in use. Everything downstream goes through this seam, so a
/// different kernel would be a local change.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn gram(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let v = dot(&points[i], &points[j]);
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}

/// Training data: an n×d matrix of finite reals, optional ±1 labels (absent
/// for one-class problems), and the id of the feature schema the rows came
/// from (`adhoc` when they are just numbers).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    labels: Option<Vec<f64>>,
    schema_id: String,
}

impl Dataset {
    pub fn labeled(points: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if labels.len() != points.len() {
            return Err(Error::Shape(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|l| **l != 1.0 && **l != -1.0) {
            return Err(Error::Data(format!("label {bad} is not -1 or +1")));
        }
        let mut ds = Self::unlabeled(points)?;
        ds.labels = Some(labels);
        Ok(ds)
    }

    pub fn unlabeled(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        let d = points[0].len();
        if d == 0 {
            return Err(Error::Shape("points must have at least one dimension".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(Error::Shape(format!(
                    "point {i} has {} dimensions, expected {d}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("point {i} has a non-finite value")));
            }
        }
        Ok(Dataset {
            points,
            labels: None,
            schema_id: "adhoc".into(),
        })
    }

    pub fn with_schema(mut self, schema_id: impl Into<String>) -> Self {
        self.schema_id = schema_id.into();
        self
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[f64]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Data("dataset has no labels".into()))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn schema_id(&self) -> &str {
        &self.schema_id
    }
}

/// Solver knobs shared by both trainers. `c` bounds the two-class duals,
/// `nu` is the one-class outlier budget, `kkt_tol` the optimality tolerance
/// models are verified at, `max_passes` the sweep budget before the solver
/// gives up (one sweep = n pair updates). `rng_seed` seeds any randomized
/// selection heuristic; the default maximal-violating-pair rule is
/// deterministic, so today the seed only participates in config identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub c: f64,
    pub nu: f64,
    pub kkt_tol: f64,
    pub max_passes: usize,
    pub rng_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            c: 1.0,
            nu: 0.1,
            kkt_tol: 1e-3,
            max_passes: 10_000,
            rng_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("c must be positive, got {}", self.c)));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::Config(format!(
                "nu must be in (0, 1], got {}",
                self.nu
            )));
        }
        if !(self.kkt_tol > 0.0 && self.kkt_tol.is_finite()) {
            return Err(Error::Config(format!(
                "kkt_tol must be positive, got {}",
                self.kkt_tol
            )));
        }
        if self.max_passes == 0 {
            return Err(Error::Config("max_passes must be at least 1".into()));
        }
        Ok(())
    }

    /// Internal stopping tolerance: at least as tight as 1e-9 so that
    /// verification at `kkt_tol` and oracle comparison both clear easily.
    pub(crate) fn solve_tol(&self) -> f64 {
        self.kkt_tol.min(1e-9)
    }
}

/// Per-dimension affine transform fitted on training data: z = (x − mean)/std,
/// population standard deviation, constant dimensions mapped with std 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardization {
    pub fn fit(points: &[Vec<f64>]) -> Self {
        let n = points.len() as f64;
        let d = points.first().map_or(0, Vec::len);
        let mut means = vec![0.0; d];
        for p in points {
            for (m, v) in means.iter_mut().zip(p) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut stds = vec![0.0; d];
        for p in points {
            for ((s, v), m) in stds.iter_mut().zip(p).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut stds {
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Standardization { means, stds }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn apply_all(&self, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
        points.iter().map(|p| self.apply(p)).collect()
    }
}

/// Binary verdict of a classifier at a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Positive,
    Negative,
}

impl Classification {
    pub fn is_positive(self) -> bool {
        self == Classification::Positive
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classification::Positive => write!(f, "positive"),
            Classification::Negative => write!(f, "negative"),
        }
    }
}

/// A trained classifier ready for serialization: the tag names the geometry,
/// the body carries schema id, standardization, parameters, duals and config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type")]
pub enum Model {
    #[serde(rename = "two_class_linear")]
    TwoClass(TwoClassModel),
    #[serde(rename = "one_class_hypersphere")]
    OneClass(OneClassModel),
}

impl Model {
    pub fn schema_id(&self) -> &str {
        match self {
            Model::TwoClass(m) => &m.schema_id,
            Model::OneClass(m) => &m.schema_id,
        }
    }

    /// Signed score of `x` (raw feature space): hyperplane score for the
    /// two-class model, `radius_sq − ‖z−center‖²` for the one-class model;
    /// positive means the positive side / inside the sphere.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        match self {
            Model::TwoClass(m) => m.decision_value(x),
            Model::OneClass(m) => m.decision_value(x),
        }
    }

    pub fn classify(&self, x: &[f64]) -> Result<Classification> {
        classify_point(self, x, 0.0)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref())?;
        let model: Model = serde_json::from_str(&text)?;
        Ok(model)
    }
}

/// Thresholded verdict; a score exactly at the threshold is positive (a point
/// on the boundary of a closed region is in it).
pub fn classify_point(model: &Model, x: &[f64], threshold: f64) -> Result<Classification> {
    let dv = model.decision_value(x)?;
    Ok(if dv >= threshold {
        Classification::Positive
    } else {
        Classification::Negative
    })
}
