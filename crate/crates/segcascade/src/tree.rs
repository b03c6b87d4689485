//! The diagnostic cascade: an ordered sequence of positive/negative
//! discriminators, each tied to one atlas class and one diagnosis.
//!
//! Classification walks the nodes top-down. The first node whose model calls
//! the case positive (at that node's own threshold) names the diagnosis; a
//! case that every node rejects falls through to either an implicit final
//! diagnosis or the explicit uncertain outcome, depending on how the tree was
//! built. Node order is configuration, not something learned — the
//! permutation study exists precisely to measure how much the ordering
//! matters on a given cohort.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::selection::{CaseRecord, EvalReport};
use crate::svm::{Classification, Model};

/// Outcome label for cases no node claims in a tree built with an error node.
pub const UNCERTAIN_LABEL: &str = "UNCERTAIN";

/// One discriminator in the cascade: the model answers "does this case have
/// `diagnosis`?" using features extracted under `atlas_class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionNode {
    pub node_id: String,
    pub atlas_class: String,
    pub model: Model,
    pub diagnosis: String,
    pub threshold: f64,
}

/// What happens when every node says negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Fallthrough {
    /// With N−1 nodes over N diagnoses, a full sweep of negatives implies the
    /// last diagnosis.
    Diagnosis(String),
    /// With one node per diagnosis, a full sweep of negatives is a
    /// diagnostic error.
    Uncertain,
}

impl Fallthrough {
    fn label(&self) -> &str {
        match self {
            Fallthrough::Diagnosis(d) => d,
            Fallthrough::Uncertain => UNCERTAIN_LABEL,
        }
    }
}

/// An immutable, validated cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicalTree {
    nodes: Vec<DecisionNode>,
    fallthrough: Fallthrough,
}

impl LogicalTree {
    pub fn nodes(&self) -> &[DecisionNode] {
        &self.nodes
    }

    pub fn fallthrough(&self) -> &Fallthrough {
        &self.fallthrough
    }

    /// All labels the tree can emit, in cascade order with the fallthrough
    /// outcome last.
    pub fn outcome_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.nodes.iter().map(|n| n.diagnosis.clone()).collect();
        labels.push(self.fallthrough.label().to_string());
        labels
    }
}

/// Validates and freezes a cascade: at least one node, unique node ids,
/// unique diagnoses (the fallthrough label included), finite thresholds, and
/// a single feature schema across every model.
pub fn build_tree(nodes: Vec<DecisionNode>, fallthrough: Fallthrough) -> Result<LogicalTree> {
    if nodes.is_empty() {
        return Err(Error::Tree("a cascade needs at least one node".into()));
    }
    let mut ids: Vec<&str> = nodes.iter().map(|n| n.node_id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Tree("node ids must be unique".into()));
    }
    let mut diagnoses: Vec<&str> = nodes.iter().map(|n| n.diagnosis.as_str()).collect();
    diagnoses.push(fallthrough.label());
    diagnoses.sort_unstable();
    if let Some(w) = diagnoses.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Tree(format!(
            "diagnosis '{}' appears more than once",
            w[0]
        )));
    }
    let schema = nodes[0].model.schema_id();
    if let Some(odd) = nodes.iter().find(|n| n.model.schema_id() != schema) {
        return Err(Error::Tree(format!(
            "node '{}' uses feature schema '{}', tree uses '{schema}'",
            odd.node_id,
            odd.model.schema_id()
        )));
    }
    if let Some(bad) = nodes.iter().find(|n| !n.threshold.is_finite()) {
        return Err(Error::Tree(format!(
            "node '{}' has a non-finite threshold",
            bad.node_id
        )));
    }
    Ok(LogicalTree { nodes, fallthrough })
}

/// One case as the cascade consumes it: a feature vector per atlas class
/// (each node inspects the segmentation made with its own atlas set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseBundle {
    pub case_id: String,
    pub features_by_atlas: BTreeMap<String, FeatureVector>,
    pub true_diagnosis: Option<String>,
}

/// One hop of a traversal: which node looked, what its model said.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub node_id: String,
    pub decision_value: f64,
    pub decision: Classification,
}

/// Where a case ended up, with the full traversal behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub label: String,
    pub path: Vec<PathStep>,
}

/// Classification output document for one case.
pub fn diagnosis_document(case_id: &str, diagnosis: &Diagnosis) -> serde_json::Value {
    serde_json::json!({
        "case_id": case_id,
        "label": diagnosis.label,
        "path": diagnosis.path,
    })
}

/// Walks the cascade top-down and stops at the first positive node. Ties at
/// a node's threshold count as positive. The returned path covers exactly the
/// nodes consulted, in order.
pub fn classify_case(tree: &LogicalTree, case: &CaseBundle) -> Result<Diagnosis> {
    let mut path = Vec::new();
    for node in tree.nodes() {
        let fv = case.features_by_atlas.get(&node.atlas_class).ok_or_else(|| {
            Error::Bundle(format!(
                "case '{}' has no features for atlas class '{}' (node '{}')",
                case.case_id, node.atlas_class, node.node_id
            ))
        })?;
        if fv.schema_id() != node.model.schema_id() {
            return Err(Error::Bundle(format!(
                "case '{}' carries schema '{}' under atlas class '{}', node '{}' expects '{}'",
                case.case_id,
                fv.schema_id(),
                node.atlas_class,
                node.node_id,
                node.model.schema_id()
            )));
        }
        let decision_value = node.model.decision_value(fv.values())?;
        let positive = decision_value >= node.threshold;
        path.push(PathStep {
            node_id: node.node_id.clone(),
            decision_value,
            decision: if positive {
                Classification::Positive
            } else {
                Classification::Negative
            },
        });
        if positive {
            return Ok(Diagnosis {
                label: node.diagnosis.clone(),
                path,
            });
        }
    }
    Ok(Diagnosis {
        label: tree.fallthrough().label().to_string(),
        path,
    })
}

/// Runs every labeled case through the cascade and aggregates a confusion
/// matrix over the tree's outcome labels. An uncertain verdict is never the
/// true label of a case, so it always lands off the diagonal and counts as
/// incorrect.
pub fn evaluate_tree(tree: &LogicalTree, cases: &[CaseBundle]) -> Result<EvalReport> {
    let mut records = Vec::with_capacity(cases.len());
    for case in cases {
        let truth = case.true_diagnosis.as_ref().ok_or_else(|| {
            Error::Data(format!("case '{}' carries no true diagnosis", case.case_id))
        })?;
        let verdict = classify_case(tree, case)?;
        let decision_value = verdict.path.last().map_or(0.0, |s| s.decision_value);
        records.push(CaseRecord {
            case_id: case.case_id.clone(),
            true_label: truth.clone(),
            predicted: verdict.label,
            decision_value,
            error: false,
        });
    }
    EvalReport::from_records("tree", tree.outcome_labels(), records)
}

/// One row of the ordering study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationRow {
    pub order: Vec<String>,
    pub accuracy: f64,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(n);
    let mut used = vec![false; n];
    fn rec(n: usize, used: &mut Vec<bool>, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == n {
            out.push(current.clone());
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                current.push(i);
                rec(n, used, current, out);
                current.pop();
                used[i] = false;
            }
        }
    }
    rec(n, &mut used, &mut current, &mut out);
    out
}

/// Evaluates every ordering of the same trained nodes on the same cases and
/// reports each ordering's accuracy, best first (ties sorted by ordering).
/// Factorial enumeration is capped at 6 nodes.
pub fn permutation_study(
    nodes: &[DecisionNode],
    cases: &[CaseBundle],
    fallthrough: &Fallthrough,
) -> Result<Vec<PermutationRow>> {
    if nodes.len() < 2 {
        return Err(Error::Config(
            "an ordering study needs at least 2 nodes".into(),
        ));
    }
    if nodes.len() > 6 {
        return Err(Error::Size(format!(
            "{}! orderings exceed the enumeration cap of 6 nodes",
            nodes.len()
        )));
    }
    let mut rows = Vec::new();
    for perm in permutations(nodes.len()) {
        let ordered: Vec<DecisionNode> = perm.iter().map(|&i| nodes[i].clone()).collect();
        let tree = build_tree(ordered, fallthrough.clone())?;
        let report = evaluate_tree(&tree, cases)?;
        rows.push(PermutationRow {
            order: tree.nodes().iter().map(|n| n.node_id.clone()).collect(),
            accuracy: report.accuracy,
        });
    }
    rows.sort_by(|a, b| {
        b.accuracy
            .total_cmp(&a.accuracy)
            .then_with(|| a.order.cmp(&b.order))
    });
    Ok(rows)
}

/// One node as the tree definition file stores it: the model lives in its
/// own file, referenced relative to the definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDefinition {
    pub node_id: String,
    pub atlas_class: String,
    pub model_path: String,
    pub diagnosis: String,
    pub threshold: f64,
}

/// On-disk cascade description: nodes, fallthrough shape, and the evaluation
/// order as a list of node ids. `fallthrough_diagnosis` is required exactly
/// when there is no error node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDefinition {
    pub nodes: Vec<NodeDefinition>,
    pub with_error_node: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallthrough_diagnosis: Option<String>,
    pub order: Vec<String>,
}

impl TreeDefinition {
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path.as_ref())?)?)
    }

    /// Loads the referenced models (paths resolved against `base_dir`, the
    /// directory holding the definition file) and builds the tree in the
    /// declared order.
    pub fn instantiate(&self, base_dir: &Path) -> Result<LogicalTree> {
        let fallthrough = match (self.with_error_node, &self.fallthrough_diagnosis) {
            (true, None) => Fallthrough::Uncertain,
            (false, Some(d)) => Fallthrough::Diagnosis(d.clone()),
            (true, Some(_)) => {
                return Err(Error::Tree(
                    "a tree with an error node cannot also name a fallthrough diagnosis".into(),
                ))
            }
            (false, None) => {
                return Err(Error::Tree(
                    "a tree without an error node must name its fallthrough diagnosis".into(),
                ))
            }
        };
        if self.order.len() != self.nodes.len() {
            return Err(Error::Tree(format!(
                "order lists {} ids for {} nodes",
                self.order.len(),
                self.nodes.len()
            )));
        }
        let mut nodes = Vec::with_capacity(self.order.len());
        for id in &self.order {
            let hits: Vec<&NodeDefinition> =
                self.nodes.iter().filter(|n| &n.node_id == id).collect();
            let def = match hits.as_slice() {
                [one] => *one,
                [] => {
                    return Err(Error::Tree(format!(
                        "order references unknown node '{id}'"
                    )))
                }
                _ => {
                    return Err(Error::Tree(format!(
                        "node id '{id}' is defined more than once"
                    )))
                }
            };
            nodes.push(DecisionNode {
                node_id: def.node_id.clone(),
                atlas_class: def.atlas_class.clone(),
                model: Model::load(base_dir.join(&def.model_path))?,
                diagnosis: def.diagnosis.clone(),
                threshold: def.threshold,
            });
        }
        // `order` ids are unique here (len matches and every id resolved
        // uniquely), so duplicates can only be ids the order never names.
        build_tree(nodes, fallthrough)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FEATURE_LEN;
    use crate::rng::SplitMix64;
    use crate::svm::{SolverConfig, Standardization, TwoClassModel};

    /// A linear model reading only feature slot 0: decision value == slot 0.
    fn slot_model(schema: &str) -> Model {
        let mut weights = vec![0.0; FEATURE_LEN];
        weights[0] = 1.0;
        Model::TwoClass(TwoClassModel {
            schema_id: schema.into(),
            standardization: Standardization {
                means: vec![0.0; FEATURE_LEN],
                stds: vec![1.0; FEATURE_LEN],
            },
            weights,
            bias: 0.0,
            alphas: Vec::new(),
            support_indices: Vec::new(),
            config: SolverConfig::default(),
        })
    }

    fn node(id: &str, atlas: &str, diagnosis: &str) -> DecisionNode {
        DecisionNode {
            node_id: id.into(),
            atlas_class: atlas.into(),
            model: slot_model("v1"),
            diagnosis: diagnosis.into(),
            threshold: 0.0,
        }
    }

    fn fv(slot0: f64) -> FeatureVector {
        let mut values = vec![0.0; FEATURE_LEN];
        values[0] = slot0;
        FeatureVector::new("v1", values).unwrap()
    }

    /// Bundle whose decision value under each listed atlas class is given
    /// directly.
    fn bundle(id: &str, signals: &[(&str, f64)], truth: Option<&str>) -> CaseBundle {
        CaseBundle {
            case_id: id.into(),
            features_by_atlas: signals.iter().map(|(a, v)| (a.to_string(), fv(*v))).collect(),
            true_diagnosis: truth.map(String::from),
        }
    }

    fn three_level_tree() -> LogicalTree {
        build_tree(
            vec![node("v1", "a1", "D1"), node("v2", "a2", "D2"), node("v3", "a3", "D3")],
            Fallthrough::Uncertain,
        )
        .unwrap()
    }

    #[test]
    fn first_positive_node_names_the_diagnosis() {
        let tree = three_level_tree();
        let case = bundle("c", &[("a1", 1.0), ("a2", 1.0), ("a3", 1.0)], None);
        let d = classify_case(&tree, &case).unwrap();
        assert_eq!(d.label, "D1");
        assert_eq!(d.path.len(), 1);
        assert_eq!(d.path[0].node_id, "v1");
        assert_eq!(d.path[0].decision, Classification::Positive);
        assert_eq!(d.path[0].decision_value, 1.0);
    }

    #[test]
    fn second_level_branch_takes_two_steps() {
        let tree = three_level_tree();
        let case = bundle("c", &[("a1", -1.0), ("a2", 1.0), ("a3", -1.0)], None);
        let d = classify_case(&tree, &case).unwrap();
        assert_eq!(d.label, "D2");
        assert_eq!(d.path.len(), 2);
        assert_eq!(d.path[0].decision, Classification::Negative);
        assert_eq!(d.path[1].decision, Classification::Positive);
    }

    #[test]
    fn all_negatives_fall_through_to_uncertain() {
        let tree = three_level_tree();
        let case = bundle("c", &[("a1", -1.0), ("a2", -1.0), ("a3", -2.0)], None);
        let d = classify_case(&tree, &case).unwrap();
        assert_eq!(d.label, UNCERTAIN_LABEL);
        assert_eq!(d.path.len(), 3);
    }

    #[test]
    fn single_node_tree_with_implicit_diagnosis_has_two_outcomes() {
        let tree = build_tree(
            vec![node("v1", "a1", "D1")],
            Fallthrough::Diagnosis("D2".into()),
        )
        .unwrap();
        assert_eq!(tree.outcome_labels(), ["D1", "D2"]);
        let pos = classify_case(&tree, &bundle("p", &[("a1", 0.5)], None)).unwrap();
        assert_eq!(pos.label, "D1");
        let neg = classify_case(&tree, &bundle("n", &[("a1", -0.5)], None)).unwrap();
        assert_eq!(neg.label, "D2");
        assert_eq!(neg.path.len(), 1);
    }

    #[test]
    fn threshold_ties_count_as_positive() {
        let mut n1 = node("v1", "a1", "D1");
        n1.threshold = 0.75;
        let tree = build_tree(vec![n1], Fallthrough::Uncertain).unwrap();
        let exact = classify_case(&tree, &bundle("t", &[("a1", 0.75)], None)).unwrap();
        assert_eq!(exact.label, "D1");
        let below = classify_case(&tree, &bundle("b", &[("a1", 0.74)], None)).unwrap();
        assert_eq!(below.label, UNCERTAIN_LABEL);
    }

    #[test]
    fn construction_rejects_inconsistent_node_sets() {
        // Duplicate diagnosis across nodes.
        let dup = build_tree(
            vec![node("v1", "a1", "D1"), node("v2", "a2", "D1")],
            Fallthrough::Uncertain,
        );
        assert!(matches!(dup, Err(Error::Tree(_))));
        // Fallthrough label colliding with a node diagnosis.
        let clash = build_tree(
            vec![node("v1", "a1", "D1")],
            Fallthrough::Diagnosis("D1".into()),
        );
        assert!(matches!(clash, Err(Error::Tree(_))));
        // Duplicate node id.
        let dup_id = build_tree(
            vec![node("v1", "a1", "D1"), node("v1", "a2", "D2")],
            Fallthrough::Uncertain,
        );
        assert!(matches!(dup_id, Err(Error::Tree(_))));
        // No nodes at all.
        assert!(matches!(
            build_tree(Vec::new(), Fallthrough::Uncertain),
            Err(Error::Tree(_))
        ));
        // Two different feature schemas in one tree.
        let mut odd = node("v2", "a2", "D2");
        odd.model = slot_model("v1-c6");
        let mixed = build_tree(vec![node("v1", "a1", "D1"), odd], Fallthrough::Uncertain);
        assert!(matches!(mixed, Err(Error::Tree(_))));
    }

    #[test]
    fn missing_atlas_features_is_a_bundle_error() {
        let tree = three_level_tree();
        let case = bundle("c", &[("a1", -1.0), ("a3", 1.0)], None);
        match classify_case(&tree, &case) {
            Err(Error::Bundle(msg)) => {
                assert!(msg.contains("a2") && msg.contains('c'), "{msg}");
            }
            other => panic!("expected bundle error, got {other:?}"),
        }
    }

    #[test]
    fn schema_mismatch_in_a_bundle_is_a_bundle_error() {
        let tree = three_level_tree();
        let mut case = bundle("c", &[("a1", 1.0)], None);
        let values = vec![0.0; FEATURE_LEN];
        case.features_by_atlas
            .insert("a1".into(), FeatureVector::new("v1-c6", values).unwrap());
        assert!(matches!(classify_case(&tree, &case), Err(Error::Bundle(_))));
    }

    /// Fixed per-node decisions determine the outcome: the label is the first
    /// positive node's diagnosis (or the fallthrough), the path is a strict
    /// prefix of the node order, and no node is consulted twice.
    #[test]
    fn outcome_is_a_pure_function_of_decisions_and_order() {
        let tree = three_level_tree();
        let mut g = SplitMix64::new(2024);
        for _ in 0..100 {
            let signals: Vec<f64> = (0..3).map(|_| if g.next_f64() < 0.5 { 1.0 } else { -1.0 }).collect();
            let case = bundle(
                "c",
                &[("a1", signals[0]), ("a2", signals[1]), ("a3", signals[2])],
                None,
            );
            let d = classify_case(&tree, &case).unwrap();
            let first_pos = signals.iter().position(|s| *s > 0.0);
            match first_pos {
                Some(i) => {
                    assert_eq!(d.label, format!("D{}", i + 1));
                    assert_eq!(d.path.len(), i + 1);
                }
                None => {
                    assert_eq!(d.label, UNCERTAIN_LABEL);
                    assert_eq!(d.path.len(), 3);
                }
            }
            // The path follows the node order without repeats.
            for (step, expected) in d.path.iter().zip(["v1", "v2", "v3"]) {
                assert_eq!(step.node_id, expected);
            }
        }
    }

    #[test]
    fn a_case_positive_at_two_nodes_depends_on_the_order() {
        let case = bundle("c", &[("a1", 1.0), ("a2", 1.0)], None);
        let forward = build_tree(
            vec![node("v1", "a1", "D1"), node("v2", "a2", "D2")],
            Fallthrough::Uncertain,
        )
        .unwrap();
        let reversed = build_tree(
            vec![node("v2", "a2", "D2"), node("v1", "a1", "D1")],
            Fallthrough::Uncertain,
        )
        .unwrap();
        assert_eq!(classify_case(&forward, &case).unwrap().label, "D1");
        assert_eq!(classify_case(&reversed, &case).unwrap().label, "D2");
    }

    #[test]
    fn evaluation_counts_uncertain_as_incorrect() {
        let tree = three_level_tree();
        let mut cases = Vec::new();
        // 56 cases the cascade gets right (mixed depths).
        for i in 0..28 {
            cases.push(bundle(
                &format!("r1_{i}"),
                &[("a1", 1.0), ("a2", -1.0), ("a3", -1.0)],
                Some("D1"),
            ));
            cases.push(bundle(
                &format!("r2_{i}"),
                &[("a1", -1.0), ("a2", 1.0), ("a3", -1.0)],
                Some("D2"),
            ));
        }
        // 2 cases claimed by the wrong node, 2 nobody claims.
        for i in 0..2 {
            cases.push(bundle(
                &format!("w_{i}"),
                &[("a1", 1.0), ("a2", -1.0), ("a3", -1.0)],
                Some("D3"),
            ));
            cases.push(bundle(
                &format!("u_{i}"),
                &[("a1", -1.0), ("a2", -1.0), ("a3", -1.0)],
                Some("D1"),
            ));
        }
        let report = evaluate_tree(&tree, &cases).unwrap();
        assert_eq!(report.matrix.total(), 60);
        assert_eq!(report.matrix.trace(), 56);
        assert_eq!(crate::selection::round5(report.accuracy), 0.93333);
        assert_eq!(
            report.matrix.labels(),
            ["D1", "D2", "D3", UNCERTAIN_LABEL]
        );
        // The uncertain verdicts sit in D1's row, off the diagonal.
        assert_eq!(report.matrix.counts()[0][3], 2);
    }

    #[test]
    fn evaluation_requires_labels_and_cases() {
        let tree = three_level_tree();
        assert!(matches!(
            evaluate_tree(&tree, &[]),
            Err(Error::EmptyMatrix)
        ));
        let unlabeled = bundle("c", &[("a1", 1.0), ("a2", 1.0), ("a3", 1.0)], None);
        assert!(matches!(
            evaluate_tree(&tree, &[unlabeled]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn perfect_nodes_make_every_ordering_perfect() {
        let nodes = vec![node("v1", "a1", "D1"), node("v2", "a2", "D2"), node("v3", "a3", "D3")];
        let cases = vec![
            bundle("c1", &[("a1", 1.0), ("a2", -1.0), ("a3", -1.0)], Some("D1")),
            bundle("c2", &[("a1", -1.0), ("a2", 1.0), ("a3", -1.0)], Some("D2")),
            bundle("c3", &[("a1", -1.0), ("a2", -1.0), ("a3", 1.0)], Some("D3")),
        ];
        let rows = permutation_study(&nodes, &cases, &Fallthrough::Uncertain).unwrap();
        assert_eq!(rows.len(), 6);
        let mut orders: Vec<&[String]> = rows.iter().map(|r| r.order.as_slice()).collect();
        orders.sort();
        orders.dedup();
        assert_eq!(orders.len(), 6, "orderings must be distinct");
        assert!(rows.iter().all(|r| r.accuracy == 1.0));
    }

    /// Cases of the third class that also trip the first node: any ordering
    /// consulting v3 before v1 is perfect, the rest lose exactly those cases.
    #[test]
    fn ordering_study_ranks_the_robust_head_first() {
        let nodes = vec![node("v1", "a1", "D1"), node("v2", "a2", "D2"), node("v3", "a3", "D3")];
        let mut cases = Vec::new();
        for i in 0..4 {
            cases.push(bundle(
                &format!("d3_{i}"),
                &[("a1", 1.0), ("a2", -1.0), ("a3", 1.0)],
                Some("D3"),
            ));
        }
        for i in 0..3 {
            cases.push(bundle(
                &format!("d1_{i}"),
                &[("a1", 1.0), ("a2", -1.0), ("a3", -1.0)],
                Some("D1"),
            ));
            cases.push(bundle(
                &format!("d2_{i}"),
                &[("a1", -1.0), ("a2", 1.0), ("a3", -1.0)],
                Some("D2"),
            ));
        }
        let rows = permutation_study(&nodes, &cases, &Fallthrough::Uncertain).unwrap();
        assert_eq!(rows.len(), 6);
        for r in &rows {
            let v3 = r.order.iter().position(|id| id == "v3").unwrap();
            let v1 = r.order.iter().position(|id| id == "v1").unwrap();
            if v3 < v1 {
                assert_eq!(r.accuracy, 1.0, "{r:?}");
            } else {
                assert_eq!(r.accuracy, 0.6, "{r:?}");
            }
        }
        assert_eq!(rows[0].accuracy, 1.0);
        assert!(rows.windows(2).all(|w| w[0].accuracy >= w[1].accuracy));
        // The head-v3, tail-v1 layout is among the maximal orderings.
        let target: Vec<String> = ["v3", "v2", "v1"].map(String::from).to_vec();
        let row = rows.iter().find(|r| r.order == target).unwrap();
        assert_eq!(row.accuracy, rows[0].accuracy);
    }

    #[test]
    fn ordering_study_guards_its_size() {
        let nodes: Vec<DecisionNode> = (0..7)
            .map(|i| node(&format!("v{i}"), &format!("a{i}"), &format!("D{i}")))
            .collect();
        assert!(matches!(
            permutation_study(&nodes, &[], &Fallthrough::Uncertain),
            Err(Error::Size(_))
        ));
        assert!(matches!(
            permutation_study(&nodes[..1], &[], &Fallthrough::Uncertain),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn definition_file_round_trips_and_orders_nodes() {
        let dir = tempfile::tempdir().unwrap();
        slot_model("v1").save(dir.path().join("m1.json")).unwrap();
        slot_model("v1").save(dir.path().join("m2.json")).unwrap();
        let def = TreeDefinition {
            nodes: vec![
                NodeDefinition {
                    node_id: "v1".into(),
                    atlas_class: "a1".into(),
                    model_path: "m1.json".into(),
                    diagnosis: "D1".into(),
                    threshold: 0.0,
                },
                NodeDefinition {
                    node_id: "v2".into(),
                    atlas_class: "a2".into(),
                    model_path: "m2.json".into(),
                    diagnosis: "D2".into(),
                    threshold: 0.25,
                },
            ],
            with_error_node: true,
            fallthrough_diagnosis: None,
            order: vec!["v2".into(), "v1".into()],
        };
        let path = dir.path().join("tree.json");
        def.save(&path).unwrap();
        let back = TreeDefinition::load(&path).unwrap();
        assert_eq!(def, back);

        let tree = back.instantiate(dir.path()).unwrap();
        assert_eq!(tree.nodes()[0].node_id, "v2");
        assert_eq!(tree.nodes()[1].node_id, "v1");
        assert_eq!(tree.nodes()[1].threshold, 0.0);
        let case = bundle("c", &[("a1", 1.0), ("a2", 1.0)], None);
        assert_eq!(classify_case(&tree, &case).unwrap().label, "D2");
    }

    #[test]
    fn definition_fallthrough_shape_must_be_consistent() {
        let dir = tempfile::tempdir().unwrap();
        slot_model("v1").save(dir.path().join("m1.json")).unwrap();
        let mut def = TreeDefinition {
            nodes: vec![NodeDefinition {
                node_id: "v1".into(),
                atlas_class: "a1".into(),
                model_path: "m1.json".into(),
                diagnosis: "D1".into(),
                threshold: 0.0,
            }],
            with_error_node: true,
            fallthrough_diagnosis: Some("D2".into()),
            order: vec!["v1".into()],
        };
        assert!(matches!(
            def.instantiate(dir.path()),
            Err(Error::Tree(_))
        ));
        def.with_error_node = false;
        def.fallthrough_diagnosis = None;
        assert!(matches!(
            def.instantiate(dir.path()),
            Err(Error::Tree(_))
        ));
        def.fallthrough_diagnosis = Some("D2".into());
        assert!(def.instantiate(dir.path()).is_ok());

        def.order = vec!["vX".into()];
        assert!(matches!(
            def.instantiate(dir.path()),
            Err(Error::Tree(_))
        ));
        def.order = vec!["v1".into(), "v1".into()];
        assert!(matches!(
            def.instantiate(dir.path()),
            Err(Error::Tree(_))
        ));
    }

    #[test]
    fn diagnosis_document_carries_the_path() {
        let tree = three_level_tree();
        let case = bundle("case_07", &[("a1", -1.0), ("a2", 1.0), ("a3", -1.0)], None);
        let d = classify_case(&tree, &case).unwrap();
        let doc = diagnosis_document(&case.case_id, &d);
        assert_eq!(doc["case_id"], "case_07");
        assert_eq!(doc["label"], "D2");
        assert_eq!(doc["path"].as_array().unwrap().len(), 2);
        assert_eq!(doc["path"][0]["decision"], "negative");
        assert_eq!(doc["path"][1]["decision"], "positive");
    }
}
