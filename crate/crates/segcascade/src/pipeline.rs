//! End-to-end plumbing from a cohort on disk to trained nodes and reports.
//!
//! The stages talk through files: the cohort manifest names volumes and
//! simulated segmentations, feature extraction turns those into one row per
//! (case, atlas class), and everything downstream — node tuning, training,
//! leave-one-out evaluation, cascade assembly — consumes feature rows. Node
//! evaluation here is honest leave-one-out: hyperparameter search reruns
//! inside every fold, so no held-out case ever influences the model that
//! judges it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureRow, FeatureSchema, FeatureVector};
use crate::phantom::{read_manifest, seg_file_name, MorphClass, Role};
use crate::selection::{
    grid_search_one_class, grid_search_two_class, leave_one_out, CVConfig, CaseRecord, EvalReport,
    GridSpec, LooCase, NodeKind, OneClassSearch, TwoClassSearch,
};
use crate::svm::{train_one_class, train_two_class, Dataset, Model, SolverConfig};
use crate::tree::{
    build_tree, classify_case, CaseBundle, DecisionNode, Fallthrough, LogicalTree,
};
use crate::volume::load_volume;

/// What to train at one cascade position: which atlas class to inspect,
/// which classifier family, and which diagnosis a positive verdict names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub node_id: String,
    pub atlas_class: String,
    pub kind: NodeKind,
    pub diagnosis: String,
    pub threshold: f64,
}

/// Extracts the full feature table for a cohort: one row per evaluation
/// case and atlas class, in manifest-then-class order. Atlas exemplar
/// entries carry no simulated segmentations and are skipped. Missing files
/// are reported as configuration errors naming the path.
pub fn cohort_feature_rows(manifest: &Path, schema: &FeatureSchema) -> Result<Vec<FeatureRow>> {
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let mut out = Vec::new();
    for entry in read_manifest(manifest)? {
        if entry.role != Role::Case {
            continue;
        }
        let intensity_path = base.join(&entry.intensity_path);
        if !intensity_path.is_file() {
            return Err(Error::Config(format!(
                "missing intensity volume {}",
                intensity_path.display()
            )));
        }
        let img = load_volume(&intensity_path)?.into_scalar()?;
        for atlas in MorphClass::ALL {
            let seg_path = base.join(seg_file_name(&entry.case_id, atlas));
            if !seg_path.is_file() {
                return Err(Error::Config(format!(
                    "missing segmentation file {}",
                    seg_path.display()
                )));
            }
            let seg = load_volume(&seg_path)?.into_label()?;
            out.push(FeatureRow {
                case_id: entry.case_id.clone(),
                atlas_class: atlas.id().to_string(),
                true_class: entry.true_class.id().to_string(),
                features: extract_features(&img, &seg, schema)?,
            });
        }
    }
    Ok(out)
}

/// The rows one node sees: features extracted under its atlas class, with
/// cases of that class positive and everything else negative.
pub fn node_cases(rows: &[FeatureRow], atlas_class: &str) -> Vec<LooCase> {
    rows.iter()
        .filter(|r| r.atlas_class == atlas_class)
        .map(|r| LooCase {
            case_id: r.case_id.clone(),
            features: r.features.values().to_vec(),
            positive: r.true_class == atlas_class,
        })
        .collect()
}

/// Hyperparameter search result for either classifier family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TuneOutcome {
    #[serde(rename = "two_class")]
    TwoClass(TwoClassSearch),
    #[serde(rename = "one_class")]
    OneClass(OneClassSearch),
}

/// Tunes and trains one node on the full cohort. Two-class nodes train on
/// everything; one-class nodes fit positives only and use the negatives
/// purely to score candidate ν values.
pub fn train_node(
    rows: &[FeatureRow],
    spec: &NodeSpec,
    grid: &GridSpec,
    cv: &CVConfig,
    base: &SolverConfig,
) -> Result<(Model, TuneOutcome)> {
    let cases = node_cases(rows, &spec.atlas_class);
    if cases.is_empty() {
        return Err(Error::Config(format!(
            "no feature rows for atlas class '{}'",
            spec.atlas_class
        )));
    }
    let schema_id = rows
        .iter()
        .find(|r| r.atlas_class == spec.atlas_class)
        .map(|r| r.features.schema_id().to_string())
        .unwrap_or_default();
    match spec.kind {
        NodeKind::TwoClass => {
            let points: Vec<Vec<f64>> = cases.iter().map(|c| c.features.clone()).collect();
            let labels: Vec<f64> = cases
                .iter()
                .map(|c| if c.positive { 1.0 } else { -1.0 })
                .collect();
            let ds = Dataset::labeled(points, labels)?.with_schema(&schema_id);
            let search = grid_search_two_class(&ds, grid, cv, base)?;
            let model = train_two_class(&ds, &SolverConfig { c: search.best_c, ..base.clone() })?;
            Ok((Model::TwoClass(model), TuneOutcome::TwoClass(search)))
        }
        NodeKind::OneClass => {
            let pos: Vec<Vec<f64>> = cases
                .iter()
                .filter(|c| c.positive)
                .map(|c| c.features.clone())
                .collect();
            let neg: Vec<Vec<f64>> = cases
                .iter()
                .filter(|c| !c.positive)
                .map(|c| c.features.clone())
                .collect();
            if pos.is_empty() {
                return Err(Error::DegenerateData(format!(
                    "atlas class '{}' has no positive cases to fit",
                    spec.atlas_class
                )));
            }
            let pos_ds = Dataset::unlabeled(pos)?.with_schema(&schema_id);
            let neg_ds = match neg.is_empty() {
                true => None,
                false => Some(Dataset::unlabeled(neg)?.with_schema(&schema_id)),
            };
            let search = grid_search_one_class(&pos_ds, neg_ds.as_ref(), grid, cv, base)?;
            let model =
                train_one_class(&pos_ds, &SolverConfig { nu: search.best_nu, ..base.clone() })?;
            Ok((Model::OneClass(model), TuneOutcome::OneClass(search)))
        }
    }
}

/// Leave-one-out evaluation of a single node over the cohort.
pub fn loo_node_eval(
    rows: &[FeatureRow],
    spec: &NodeSpec,
    grid: &GridSpec,
    cv: &CVConfig,
    base: &SolverConfig,
) -> Result<EvalReport> {
    let cases = node_cases(rows, &spec.atlas_class);
    if cases.is_empty() {
        return Err(Error::Config(format!(
            "no feature rows for atlas class '{}'",
            spec.atlas_class
        )));
    }
    let schema_id = rows
        .iter()
        .find(|r| r.atlas_class == spec.atlas_class)
        .map(|r| r.features.schema_id())
        .unwrap_or_default()
        .to_string();
    leave_one_out(&spec.node_id, spec.kind, &cases, grid, cv, base, &schema_id)
}

/// Groups feature rows into per-case bundles for cascade classification.
/// The true class becomes the case's true diagnosis label.
pub fn case_bundles(rows: &[FeatureRow]) -> Result<Vec<CaseBundle>> {
    let mut bundles: Vec<CaseBundle> = Vec::new();
    for row in rows {
        let fv = FeatureVector::new(row.features.schema_id(), row.features.values().to_vec())?;
        match bundles.iter_mut().find(|b| b.case_id == row.case_id) {
            Some(b) => {
                if b.true_diagnosis.as_deref() != Some(row.true_class.as_str()) {
                    return Err(Error::Data(format!(
                        "case '{}' appears with conflicting true classes",
                        row.case_id
                    )));
                }
                if b.features_by_atlas.insert(row.atlas_class.clone(), fv).is_some() {
                    return Err(Error::Data(format!(
                        "case '{}' has duplicate rows for atlas class '{}'",
                        row.case_id, row.atlas_class
                    )));
                }
            }
            None => {
                let mut b = CaseBundle {
                    case_id: row.case_id.clone(),
                    features_by_atlas: Default::default(),
                    true_diagnosis: Some(row.true_class.clone()),
                };
                b.features_by_atlas.insert(row.atlas_class.clone(), fv);
                bundles.push(b);
            }
        }
    }
    Ok(bundles)
}

/// Tunes and trains every node on the full cohort and assembles the cascade.
pub fn build_cascade(
    rows: &[FeatureRow],
    specs: &[NodeSpec],
    fallthrough: Fallthrough,
    grid: &GridSpec,
    cv: &CVConfig,
    base: &SolverConfig,
) -> Result<LogicalTree> {
    let mut nodes = Vec::with_capacity(specs.len());
    for spec in specs {
        let (model, _) = train_node(rows, spec, grid, cv, base)?;
        nodes.push(DecisionNode {
            node_id: spec.node_id.clone(),
            atlas_class: spec.atlas_class.clone(),
            model,
            diagnosis: spec.diagnosis.clone(),
            threshold: spec.threshold,
        });
    }
    build_tree(nodes, fallthrough)
}

/// Leave-one-out evaluation of the whole cascade: for each case, every node
/// is re-tuned and re-trained on the other cases, the tree rebuilt, and the
/// held-out case classified. A case whose retraining fails anywhere is
/// recorded as the fallthrough outcome with its error flag set.
pub fn loo_tree_eval(
    rows: &[FeatureRow],
    specs: &[NodeSpec],
    fallthrough: Fallthrough,
    grid: &GridSpec,
    cv: &CVConfig,
    base: &SolverConfig,
) -> Result<EvalReport> {
    let bundles = case_bundles(rows)?;
    if bundles.len() < 2 {
        return Err(Error::Size(format!(
            "leave-one-out needs at least 2 cases, got {}",
            bundles.len()
        )));
    }
    let fallback_label = match &fallthrough {
        Fallthrough::Diagnosis(d) => d.clone(),
        Fallthrough::Uncertain => crate::tree::UNCERTAIN_LABEL.to_string(),
    };
    let mut records = Vec::with_capacity(bundles.len());
    for held in &bundles {
        let rest: Vec<FeatureRow> = rows
            .iter()
            .filter(|r| r.case_id != held.case_id)
            .cloned()
            .collect();
        let verdict = build_cascade(&rest, specs, fallthrough.clone(), grid, cv, base)
            .and_then(|tree| classify_case(&tree, held));
        let (predicted, decision_value, error) = match verdict {
            Ok(d) => (
                d.label,
                d.path.last().map_or(0.0, |s| s.decision_value),
                false,
            ),
            Err(_) => (fallback_label.clone(), 0.0, true),
        };
        records.push(CaseRecord {
            case_id: held.case_id.clone(),
            true_label: held.true_diagnosis.clone().unwrap_or_default(),
            predicted,
            decision_value,
            error,
        });
    }
    let mut labels: Vec<String> = specs.iter().map(|s| s.diagnosis.clone()).collect();
    labels.push(fallback_label);
    EvalReport::from_records("tree_loo", labels, records)
}
