//! Hyperparameter search and node evaluation.
//!
//! Both solver knobs are tuned by exhaustive grid search under k-fold
//! cross-validation. The two-class search trains and scores on labeled
//! folds. The one-class search is asymmetric by construction: only inliers
//! ever reach a fitting call — folds partition the positives, and the
//! negatives (when there are any) are used purely to score each candidate ν
//! on held-out inliers plus all negatives.
//!
//! Node quality is reported through leave-one-out evaluation: every case is
//! classified by a model tuned and trained on all the others, and the
//! verdicts aggregate into a confusion matrix. Accuracy is trace over total.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::svm::{
    train_one_class, train_two_class, Dataset, SolverConfig,
};

/// Candidate values for the grid search; both axes strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub c_grid: Vec<f64>,
    pub nu_grid: Vec<f64>,
}

impl Default for GridSpec {
    /// C on a log₂ ladder 2⁻⁵ … 2¹⁵ (steps of 4×), ν over a conventional
    /// span of outlier budgets.
    fn default() -> Self {
        GridSpec {
            c_grid: (0..11).map(|k| 2f64.powi(-5 + 2 * k)).collect(),
            nu_grid: vec![0.01, 0.05, 0.1, 0.2, 0.3, 0.5],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() || self.nu_grid.is_empty() {
            return Err(Error::Config("grids must be non-empty".into()));
        }
        for w in self.c_grid.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config("c_grid must be strictly increasing".into()));
            }
        }
        for w in self.nu_grid.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config("nu_grid must be strictly increasing".into()));
            }
        }
        if self.c_grid[0] <= 0.0 || !self.c_grid.iter().all(|c| c.is_finite()) {
            return Err(Error::Config("c_grid values must be positive reals".into()));
        }
        if self.nu_grid[0] <= 0.0 || *self.nu_grid.last().unwrap() >= 1.0 {
            return Err(Error::Config("nu_grid values must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Cross-validation layout: fold count, shuffle seed, and whether folds are
/// stratified by class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVConfig {
    pub folds: usize,
    pub rng_seed: u64,
    pub stratified: bool,
}

impl Default for CVConfig {
    fn default() -> Self {
        CVConfig {
            folds: 5,
            rng_seed: 0,
            stratified: true,
        }
    }
}

/// Partitions `0..n` into validation folds. With `stratified` and labels,
/// each class is shuffled and dealt round-robin so folds keep the class mix;
/// stratification requires folds ≤ the smaller class count. Without labels
/// (or unstratified) the whole index range is shuffled and dealt.
pub fn cv_folds(n: usize, labels: Option<&[f64]>, cfg: &CVConfig) -> Result<Vec<Vec<usize>>> {
    if cfg.folds < 2 {
        return Err(Error::Config(format!(
            "cross-validation needs at least 2 folds, got {}",
            cfg.folds
        )));
    }
    if cfg.folds > n {
        return Err(Error::Fold(format!(
            "{} folds cannot partition {n} cases",
            cfg.folds
        )));
    }
    let mut g = SplitMix64::new(cfg.rng_seed);
    let mut folds = vec![Vec::new(); cfg.folds];
    match labels.filter(|_| cfg.stratified) {
        Some(labels) => {
            let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i] > 0.0).collect();
            let mut neg: Vec<usize> = (0..n).filter(|&i| labels[i] <= 0.0).collect();
            let smallest = pos.len().min(neg.len());
            if smallest > 0 && cfg.folds > smallest {
                return Err(Error::Fold(format!(
                    "stratified {}-fold split needs at least {} cases per class, smallest class has {smallest}",
                    cfg.folds, cfg.folds
                )));
            }
            g.shuffle(&mut pos);
            g.shuffle(&mut neg);
            for (k, i) in pos.into_iter().enumerate() {
                folds[k % cfg.folds].push(i);
            }
            for (k, i) in neg.into_iter().enumerate() {
                folds[k % cfg.folds].push(i);
            }
        }
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            g.shuffle(&mut idx);
            for (k, i) in idx.into_iter().enumerate() {
                folds[k % cfg.folds].push(i);
            }
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

fn subset(data: &Dataset, keep: &[usize]) -> Result<Dataset> {
    let pts: Vec<Vec<f64>> = keep.iter().map(|&i| data.points()[i].clone()).collect();
    let ds = match data.labels() {
        Some(l) => Dataset::labeled(pts, keep.iter().map(|&i| l[i]).collect())?,
        None => Dataset::unlabeled(pts)?,
    };
    Ok(ds.with_schema(data.schema_id()))
}

/// Winner of a two-class grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoClassSearch {
    pub best_c: f64,
    pub accuracy: f64,
}

/// Mean CV accuracy of one C cell: train on the fold complements, score the
/// folds. A training set that has lost one of the classes is a fold error.
fn two_class_cell(data: &Dataset, folds: &[Vec<usize>], cfg: &SolverConfig) -> Result<f64> {
    let labels = data.require_labels()?;
    let mut acc_sum = 0.0;
    for fold in folds {
        let train_idx: Vec<usize> = (0..data.len()).filter(|i| !fold.contains(i)).collect();
        let train_labels: Vec<f64> = train_idx.iter().map(|&i| labels[i]).collect();
        let pos = train_labels.iter().filter(|y| **y > 0.0).count();
        if pos == 0 || pos == train_labels.len() {
            return Err(Error::Fold(
                "a cross-validation training set contains a single class".into(),
            ));
        }
        let model = train_two_class(&subset(data, &train_idx)?, cfg)?;
        let mut correct = 0usize;
        for &i in fold {
            let predicted_positive = model.classify(&data.points()[i])?.is_positive();
            if predicted_positive == (labels[i] > 0.0) {
                correct += 1;
            }
        }
        acc_sum += correct as f64 / fold.len() as f64;
    }
    Ok(acc_sum / folds.len() as f64)
}

/// Exhaustive search over `grid.c_grid`, ranked by mean CV accuracy, ties
/// broken toward the smallest C (larger margin, simpler model).
pub fn grid_search_two_class(
    data: &Dataset,
    grid: &GridSpec,
    cv: &CVConfig,
    base: &SolverConfig,
) -> Result<TwoClassSearch> {
    grid.validate()?;
    let folds = cv_folds(data.len(), data.labels(), cv)?;
    let mut best: Option<TwoClassSearch> = None;
    for &c in &grid.c_grid {
        let cfg = SolverConfig { c, ..base.clone() };
        let accuracy = two_class_cell(data, &folds, &cfg)?;
        if best.as_ref().is_none_or(|b| accuracy > b.accuracy) {
            best = Some(TwoClassSearch { best_c: c, accuracy });
        }
    }
    Ok(best.expect("non-empty grid"))
}

/// Winner of a one-class grid search, with the degeneracies that matter for
/// interpreting it: `coverage_only` means there were no negatives to score
/// against, `chance_level` means the best accuracy failed to clear the
/// majority-class baseline by more than one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneClassSearch {
    pub best_nu: f64,
    pub accuracy: f64,
    pub coverage_only: bool,
    pub chance_level: bool,
}

/// Exhaustive search over `grid.nu_grid`. Fitting sees only inlier training
/// folds; each cell is scored on its held-out inliers plus every negative.
/// Ties break toward the smallest ν.
pub fn grid_search_one_class(
    positives: &Dataset,
    negatives: Option<&Dataset>,
    grid: &GridSpec,
    cv: &CVConfig,
    base: &SolverConfig,
) -> Result<OneClassSearch> {
    grid.validate()?;
    let folds = cv_folds(positives.len(), None, cv)?;
    let mut best: Option<(f64, f64)> = None;
    for &nu in &grid.nu_grid {
        let cfg = SolverConfig { nu, ..base.clone() };
        let mut acc_sum = 0.0;
        for fold in &folds {
            let train_idx: Vec<usize> =
                (0..positives.len()).filter(|i| !fold.contains(i)).collect();
            let model = train_one_class(&subset(positives, &train_idx)?, &cfg)?;
            let mut correct = 0usize;
            let mut total = 0usize;
            for &i in fold {
                total += 1;
                if model.classify(&positives.points()[i])?.is_positive() {
                    correct += 1;
                }
            }
            if let Some(neg) = negatives {
                for p in neg.points() {
                    total += 1;
                    if !model.classify(p)?.is_positive() {
                        correct += 1;
                    }
                }
            }
            acc_sum += correct as f64 / total as f64;
        }
        let accuracy = acc_sum / folds.len() as f64;
        if best.is_none_or(|(_, a)| accuracy > a) {
            best = Some((nu, accuracy));
        }
    }
    let (best_nu, accuracy) = best.expect("non-empty grid");

    let coverage_only = negatives.is_none();
    let chance_level = {
        let n_pos = positives.len() as f64;
        let n_neg = negatives.map_or(0, Dataset::len) as f64;
        let total = n_pos + n_neg;
        let baseline = n_pos.max(n_neg) / total;
        accuracy <= baseline + 1.0 / total
    };
    Ok(OneClassSearch {
        best_nu,
        accuracy,
        coverage_only,
        chance_level,
    })
}

/// Square table of verdict counts; rows are true labels, columns predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let k = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; k]; k],
        }
    }

    fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Data(format!("label '{label}' is not tracked by this matrix")))
    }

    pub fn record(&mut self, true_label: &str, predicted: &str) -> Result<()> {
        let r = self.index_of(true_label)?;
        let c = self.index_of(predicted)?;
        self.counts[r][c] += 1;
        Ok(())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Fraction of verdicts on the diagonal; an unpopulated matrix has no
    /// accuracy.
    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::EmptyMatrix);
        }
        Ok(self.trace() as f64 / total as f64)
    }

    /// Aligned plain-text rendering for terminal output.
    pub fn render_text(&self) -> String {
        let head = "true \\ predicted";
        let label_w = self
            .labels
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(head.len());
        let col_w: Vec<usize> = self
            .labels
            .iter()
            .enumerate()
            .map(|(c, l)| {
                self.counts
                    .iter()
                    .map(|row| row[c].to_string().len())
                    .max()
                    .unwrap_or(1)
                    .max(l.len())
            })
            .collect();
        let mut out = String::new();
        let _ = write!(out, "{head:<label_w$}");
        for (l, w) in self.labels.iter().zip(&col_w) {
            let _ = write!(out, "  {l:>w$}");
        }
        out.push('\n');
        for (r, row) in self.counts.iter().enumerate() {
            let _ = write!(out, "{:<label_w$}", self.labels[r]);
            for (v, w) in row.iter().zip(&col_w) {
                let _ = write!(out, "  {v:>w$}");
            }
            out.push('\n');
        }
        out
    }
}

/// One case's verdict inside an evaluation. `error` marks cases whose
/// retraining failed; they are scored as negative predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub true_label: String,
    pub predicted: String,
    pub decision_value: f64,
    pub error: bool,
}

/// Evaluation of one classifier (or the whole tree): confusion matrix,
/// accuracy, and the per-case verdicts behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub node_id: String,
    pub matrix: ConfusionMatrix,
    pub accuracy: f64,
    pub cases: Vec<CaseRecord>,
}

impl EvalReport {
    /// Aggregates case records into a matrix over `labels`.
    pub fn from_records(
        node_id: impl Into<String>,
        labels: Vec<String>,
        cases: Vec<CaseRecord>,
    ) -> Result<Self> {
        let mut matrix = ConfusionMatrix::new(labels);
        for c in &cases {
            matrix.record(&c.true_label, &c.predicted)?;
        }
        let accuracy = matrix.accuracy()?;
        Ok(EvalReport {
            node_id: node_id.into(),
            matrix,
            accuracy,
            cases,
        })
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path.as_ref())?)?)
    }
}

/// Accuracy as a percentage with two decimals, e.g. 59/60 → "98.33".
pub fn format_percent(fraction: f64) -> String {
    format!("{:.2}", fraction * 100.0)
}

/// Accuracy rounded to five decimal places — the resolution node accuracies
/// are reported and compared at.
pub fn round5(x: f64) -> f64 {
    (x * 1e5).round() / 1e5
}

/// Which classifier a cascade node trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    TwoClass,
    OneClass,
}

/// One case as leave-one-out sees it: id, features, and whether the case
/// is a positive example for the node under evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LooCase {
    pub case_id: String,
    pub features: Vec<f64>,
    pub positive: bool,
}

pub const POSITIVE_LABEL: &str = "positive";
pub const NEGATIVE_LABEL: &str = "negative";

fn loo_verdict(
    kind: NodeKind,
    rest: &[&LooCase],
    held_out: &LooCase,
    grid: &GridSpec,
    cv: &CVConfig,
    base: &SolverConfig,
    schema_id: &str,
) -> Result<(bool, f64)> {
    match kind {
        NodeKind::TwoClass => {
            let pts: Vec<Vec<f64>> = rest.iter().map(|c| c.features.clone()).collect();
            let labels: Vec<f64> = rest
                .iter()
                .map(|c| if c.positive { 1.0 } else { -1.0 })
                .collect();
            let ds = Dataset::labeled(pts, labels)?.with_schema(schema_id);
            // Inner tuning; when the reduced set cannot support CV, fall back
            // to the smallest candidate rather than refusing to evaluate.
            let best_c = match grid_search_two_class(&ds, grid, cv, base) {
                Ok(s) => s.best_c,
                Err(Error::Fold(_) | Error::Size(_)) => grid.c_grid[0],
                Err(e) => return Err(e),
            };
            let model = train_two_class(&ds, &SolverConfig { c: best_c, ..base.clone() })?;
            let dv = model.decision_value(&held_out.features)?;
            Ok((dv >= 0.0, dv))
        }
        NodeKind::OneClass => {
            let pos: Vec<Vec<f64>> = rest
                .iter()
                .filter(|c| c.positive)
                .map(|c| c.features.clone())
                .collect();
            let neg: Vec<Vec<f64>> = rest
                .iter()
                .filter(|c| !c.positive)
                .map(|c| c.features.clone())
                .collect();
            if pos.is_empty() {
                return Err(Error::DegenerateData(
                    "no positive cases left to fit the hypersphere".into(),
                ));
            }
            let pos_ds = Dataset::unlabeled(pos)?.with_schema(schema_id);
            let neg_ds = match neg.is_empty() {
                true => None,
                false => Some(Dataset::unlabeled(neg)?.with_schema(schema_id)),
            };
            let best_nu = match grid_search_one_class(&pos_ds, neg_ds.as_ref(), grid, cv, base) {
                Ok(s) => s.best_nu,
                Err(Error::Fold(_) | Error::Size(_)) => grid.nu_grid[0],
                Err(e) => return Err(e),
            };
            let model = train_one_class(&pos_ds, &SolverConfig { nu: best_nu, ..base.clone() })?;
            let dv = model.decision_value(&held_out.features)?;
            Ok((dv >= 0.0, dv))
        }
    }
}

/// Leave-one-out evaluation of one node: each case is classified by a model
/// tuned (inner grid search + CV) and trained on the other n−1 cases. A case
/// whose retraining fails is recorded as a negative prediction with the error
/// flag set rather than aborting the evaluation.
pub fn leave_one_out(
    node_id: &str,
    kind: NodeKind,
    cases: &[LooCase],
    grid: &GridSpec,
    cv: &CVConfig,
    base: &SolverConfig,
    schema_id: &str,
) -> Result<EvalReport> {
    if cases.len() < 2 {
        return Err(Error::Size(format!(
            "leave-one-out needs at least 2 cases, got {}",
            cases.len()
        )));
    }
    let mut records = Vec::with_capacity(cases.len());
    for (i, held_out) in cases.iter().enumerate() {
        let rest: Vec<&LooCase> = cases
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, c)| c)
            .collect();
        let (predicted_positive, decision_value, error) =
            match loo_verdict(kind, &rest, held_out, grid, cv, base, schema_id) {
                Ok((p, dv)) => (p, dv, false),
                Err(_) => (false, 0.0, true),
            };
        records.push(CaseRecord {
            case_id: held_out.case_id.clone(),
            true_label: if held_out.positive {
                POSITIVE_LABEL.into()
            } else {
                NEGATIVE_LABEL.into()
            },
            predicted: if predicted_positive {
                POSITIVE_LABEL.into()
            } else {
                NEGATIVE_LABEL.into()
            },
            decision_value,
            error,
        });
    }
    EvalReport::from_records(
        node_id,
        vec![POSITIVE_LABEL.into(), NEGATIVE_LABEL.into()],
        records,
    )
}
