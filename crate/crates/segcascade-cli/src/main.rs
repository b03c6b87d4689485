//! Batch front end for the segmentation-quality cascade.
//!
//! Subcommands talk to each other exclusively through files: `phantom` puts a
//! synthetic cohort on disk, `extract` turns it into a feature table,
//! `train-node`/`eval-node` fit and score single cascade nodes, and `tree`
//! assembles and runs the full decision cascade. Every run writes its fully
//! resolved configuration to `run_config.json` in the output directory, all
//! randomness flows from the `--seed` flag, and identical inputs plus
//! identical flags produce byte-identical outputs.
//!
//! Exit codes: 0 success, 2 usage/configuration errors, 3 malformed or
//! inconsistent data, 4 solver non-convergence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use segcascade::error::{Error, Result};
use segcascade::features::{read_feature_table, write_feature_table, FeatureSchema};
use segcascade::phantom::{generate_cohort, PhantomConfig, Role, MANIFEST_FILE};
use segcascade::pipeline::{
    case_bundles, cohort_feature_rows, loo_node_eval, node_cases, train_node, NodeSpec,
    TuneOutcome,
};
use segcascade::selection::{
    format_percent, CVConfig, CaseRecord, EvalReport, GridSpec, NodeKind, NEGATIVE_LABEL,
    POSITIVE_LABEL,
};
use segcascade::svm::SolverConfig;
use segcascade::tree::{
    classify_case, diagnosis_document, evaluate_tree, permutation_study, NodeDefinition,
    TreeDefinition,
};

#[derive(Parser)]
#[command(
    name = "segcascade",
    version,
    about = "Segmentation-quality feature cascade: cohort simulation, node training, and tree evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phantom cohort with simulated segmentations
    Phantom(PhantomArgs),
    /// Extract the feature table from a cohort manifest
    Extract(ExtractArgs),
    /// Tune and train one cascade node, saving its model and sidecar
    TrainNode(NodeArgs),
    /// Score one node, in-sample or by leave-one-out
    EvalNode(EvalNodeArgs),
    /// Assemble and run the decision cascade
    #[command(subcommand)]
    Tree(TreeCommand),
}

#[derive(Subcommand)]
enum TreeCommand {
    /// Collect trained node sidecars into a cascade definition
    Build(TreeBuildArgs),
    /// Diagnose every case in a feature table
    Classify(TreeDataArgs),
    /// Score the cascade against the table's true classes
    Evaluate(TreeDataArgs),
    /// Rank every node ordering of the cascade by accuracy
    Permute(TreeDataArgs),
}

#[derive(Args)]
struct PhantomArgs {
    /// Evaluation cases per morphology class
    #[arg(long)]
    per_class: usize,
    /// Atlas exemplars per morphology class
    #[arg(long)]
    atlas_per_class: usize,
    /// Master seed; every volume and segmentation derives from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for volumes and the manifest
    #[arg(long)]
    out: PathBuf,
    /// Cube side length in voxels
    #[arg(long, default_value_t = 48)]
    dim: u32,
    /// Standard deviation of the Gaussian intensity noise
    #[arg(long, default_value_t = 10.0)]
    noise_std: f64,
    /// Tube radius in voxels
    #[arg(long, default_value_t = 4)]
    tube_radius: u32,
    /// Misalignment shift for wrong-class segmentations, in voxels
    #[arg(long, default_value_t = 6)]
    misalign_shift: u32,
}

#[derive(Args)]
struct ExtractArgs {
    /// Cohort manifest written by `phantom`
    #[arg(long)]
    manifest: PathBuf,
    /// Feature schema to extract
    #[arg(long, default_value = "v1")]
    schema: String,
    /// Output directory for features.csv
    #[arg(long)]
    out: PathBuf,
}

/// Which classifier family a node trains.
#[derive(Debug, Clone, Copy, ValueEnum)]
enum Classifier {
    /// Soft-margin linear classifier trained on positives and negatives
    TwoClass,
    /// Enclosing-hypersphere classifier trained on positives only
    OneClass,
}

impl From<Classifier> for NodeKind {
    fn from(c: Classifier) -> NodeKind {
        match c {
            Classifier::TwoClass => NodeKind::TwoClass,
            Classifier::OneClass => NodeKind::OneClass,
        }
    }
}

#[derive(Args)]
struct NodeArgs {
    /// Feature table produced by `extract`
    #[arg(long)]
    features: PathBuf,
    /// Schema id the table was extracted with
    #[arg(long, default_value = "v1")]
    schema: String,
    /// Atlas class whose segmentations this node inspects
    #[arg(long)]
    atlas_class: String,
    /// Classifier family
    #[arg(long)]
    classifier: Classifier,
    /// Node identifier, used in file names and reports
    #[arg(long)]
    node_id: String,
    /// Diagnosis a positive verdict assigns (default: the atlas class)
    #[arg(long)]
    diagnosis: Option<String>,
    /// Decision-value threshold for a positive verdict
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args)]
struct SearchArgs {
    /// Comma-separated C candidates (default: a log ladder 2^-5 .. 2^15)
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    /// Comma-separated nu candidates (default: 0.01,0.05,0.1,0.2,0.3,0.5)
    #[arg(long, value_delimiter = ',')]
    nu_grid: Option<Vec<f64>>,
    /// Cross-validation folds
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Seed for fold shuffling and every other random choice
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Deal folds without per-class stratification
    #[arg(long)]
    unstratified: bool,
    /// KKT tolerance the solvers must reach
    #[arg(long)]
    kkt_tol: Option<f64>,
    /// Solver sweep budget (passes over the data)
    #[arg(long)]
    max_passes: Option<usize>,
}

impl SearchArgs {
    fn grid(&self) -> GridSpec {
        let d = GridSpec::default();
        GridSpec {
            c_grid: self.c_grid.clone().unwrap_or(d.c_grid),
            nu_grid: self.nu_grid.clone().unwrap_or(d.nu_grid),
        }
    }

    fn cv(&self) -> CVConfig {
        CVConfig {
            folds: self.folds,
            rng_seed: self.seed,
            stratified: !self.unstratified,
        }
    }

    fn solver(&self) -> SolverConfig {
        let mut s = SolverConfig {
            rng_seed: self.seed,
            ..SolverConfig::default()
        };
        if let Some(t) = self.kkt_tol {
            s.kkt_tol = t;
        }
        if let Some(p) = self.max_passes {
            s.max_passes = p;
        }
        s
    }
}

#[derive(Args)]
struct EvalNodeArgs {
    #[command(flatten)]
    node: NodeArgs,
    /// Leave-one-out protocol: re-tune and re-train for every held-out case
    #[arg(long)]
    loo: bool,
}

#[derive(Args)]
struct TreeBuildArgs {
    /// Node sidecar JSONs from `train-node`, in cascade order (repeatable)
    #[arg(long = "node", required = true)]
    nodes: Vec<PathBuf>,
    /// End the cascade in an explicit UNCERTAIN outcome
    #[arg(long)]
    with_error_node: bool,
    /// Diagnosis assigned when no node fires (alternative to --with-error-node)
    #[arg(long, conflicts_with = "with_error_node")]
    fallthrough: Option<String>,
    /// Output directory for tree.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TreeDataArgs {
    /// Cascade definition written by `tree build`
    #[arg(long)]
    tree: PathBuf,
    /// Feature table produced by `extract`
    #[arg(long)]
    features: PathBuf,
    /// Schema id the table was extracted with
    #[arg(long, default_value = "v1")]
    schema: String,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Maps error classes onto the documented exit codes: configuration and
/// sizing mistakes are 2, malformed or inconsistent data is 3, solver
/// non-convergence is 4.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Fold(_)
        | Error::Size(_)
        | Error::Tree(_)
        | Error::Bundle(_)
        | Error::DegenerateData(_)
        | Error::InvalidVolume(_) => 2,
        Error::Format { .. }
        | Error::Truncated { .. }
        | Error::GridMismatch(_)
        | Error::Shape(_)
        | Error::Data(_)
        | Error::EmptyMatrix
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_) => 3,
        Error::Convergence { .. } => 4,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Extract(a) => cmd_extract(a),
        Command::TrainNode(a) => cmd_train_node(a),
        Command::EvalNode(a) => cmd_eval_node(a),
        Command::Tree(TreeCommand::Build(a)) => cmd_tree_build(a),
        Command::Tree(TreeCommand::Classify(a)) => cmd_tree_classify(a),
        Command::Tree(TreeCommand::Evaluate(a)) => cmd_tree_evaluate(a),
        Command::Tree(TreeCommand::Permute(a)) => cmd_tree_permute(a),
    }
}

fn write_pretty_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Echoes the fully resolved configuration of a run into its output
/// directory. Contains no timestamps, so reruns stay byte-identical.
fn write_run_config(dir: &Path, value: serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_pretty_json(&dir.join("run_config.json"), &value)
}

fn verdict_label(positive: bool) -> String {
    if positive { POSITIVE_LABEL } else { NEGATIVE_LABEL }.to_string()
}

fn cmd_phantom(a: PhantomArgs) -> Result<()> {
    let cfg = PhantomConfig {
        dims: [a.dim; 3],
        noise_std: a.noise_std,
        tube_radius: a.tube_radius,
        misalign_shift: a.misalign_shift,
        rng_seed: a.seed,
        ..PhantomConfig::default()
    };
    write_run_config(
        &a.out,
        json!({
            "subcommand": "phantom",
            "per_class": a.per_class,
            "atlas_per_class": a.atlas_per_class,
            "out": a.out.display().to_string(),
            "phantom": cfg,
        }),
    )?;
    let rows = generate_cohort(&cfg, a.per_class, a.atlas_per_class, &a.out)?;
    let cases = rows.iter().filter(|r| r.role == Role::Case).count();
    let atlases = rows.len() - cases;
    // Each row stores intensity + truth; evaluation cases add one simulated
    // segmentation per atlas class.
    let files = rows.len() * 2 + cases * 3;
    println!(
        "cohort: {cases} cases, {atlases} atlas exemplars, {files} volumes, {MANIFEST_FILE} in {}",
        a.out.display()
    );
    Ok(())
}

fn cmd_extract(a: ExtractArgs) -> Result<()> {
    let schema = FeatureSchema::by_id(&a.schema)?;
    if !a.manifest.is_file() {
        return Err(Error::Config(format!(
            "missing manifest {}",
            a.manifest.display()
        )));
    }
    write_run_config(
        &a.out,
        json!({
            "subcommand": "extract",
            "manifest": a.manifest.display().to_string(),
            "schema": schema.id(),
            "out": a.out.display().to_string(),
        }),
    )?;
    let rows = cohort_feature_rows(&a.manifest, &schema)?;
    let table = a.out.join("features.csv");
    write_feature_table(&table, &rows)?;
    println!("wrote {} feature rows to {}", rows.len(), table.display());
    Ok(())
}

impl NodeArgs {
    fn spec(&self) -> NodeSpec {
        NodeSpec {
            node_id: self.node_id.clone(),
            atlas_class: self.atlas_class.clone(),
            kind: self.classifier.into(),
            diagnosis: self
                .diagnosis
                .clone()
                .unwrap_or_else(|| self.atlas_class.clone()),
            threshold: self.threshold,
        }
    }

    fn load_rows(&self) -> Result<Vec<segcascade::features::FeatureRow>> {
        FeatureSchema::by_id(&self.schema)?;
        if !self.features.is_file() {
            return Err(Error::Config(format!(
                "missing feature table {}",
                self.features.display()
            )));
        }
        read_feature_table(&self.features, &self.schema)
    }

    fn echo(&self, subcommand: &str, spec: &NodeSpec, extra: serde_json::Value) -> Result<()> {
        let mut value = json!({
            "subcommand": subcommand,
            "features": self.features.display().to_string(),
            "schema": self.schema,
            "node": spec,
            "grid": self.search.grid(),
            "cv": self.search.cv(),
            "solver": self.search.solver(),
            "out": self.out.display().to_string(),
        });
        if let (Some(obj), Some(more)) = (value.as_object_mut(), extra.as_object()) {
            for (k, v) in more {
                obj.insert(k.clone(), v.clone());
            }
        }
        write_run_config(&self.out, value)
    }
}

fn describe_tuning(node_id: &str, folds: usize, tune: &TuneOutcome) {
    match tune {
        TuneOutcome::TwoClass(s) => {
            println!(
                "node {node_id}: C = {} by {folds}-fold cross-validation, tuning accuracy {}%",
                s.best_c,
                format_percent(s.accuracy)
            );
        }
        TuneOutcome::OneClass(s) => {
            println!(
                "node {node_id}: nu = {} by {folds}-fold nested cross-validation, tuning accuracy {}%",
                s.best_nu,
                format_percent(s.accuracy)
            );
            if s.coverage_only {
                println!("note: tuned on inlier coverage only (table has no negatives for this class)");
            }
            if s.chance_level {
                println!("warning: tuning accuracy does not beat the majority-class baseline");
            }
        }
    }
}

fn cmd_train_node(a: NodeArgs) -> Result<()> {
    let spec = a.spec();
    let rows = a.load_rows()?;
    a.echo("train-node", &spec, json!({}))?;
    let (model, tune) = train_node(&rows, &spec, &a.search.grid(), &a.search.cv(), &a.search.solver())?;

    let model_file = format!("{}_model.json", spec.node_id);
    model.save(a.out.join(&model_file))?;
    write_pretty_json(
        &a.out.join(format!("{}_tune.json", spec.node_id)),
        &serde_json::to_value(&tune)?,
    )?;
    // Sidecar consumed by `tree build`: everything the cascade needs to know
    // about this node, with the model referenced relative to it.
    let sidecar = NodeDefinition {
        node_id: spec.node_id.clone(),
        atlas_class: spec.atlas_class.clone(),
        model_path: model_file.clone(),
        diagnosis: spec.diagnosis.clone(),
        threshold: spec.threshold,
    };
    write_pretty_json(
        &a.out.join(format!("{}_node.json", spec.node_id)),
        &serde_json::to_value(&sidecar)?,
    )?;

    describe_tuning(&spec.node_id, a.search.folds, &tune);
    println!("model: {}", a.out.join(model_file).display());
    Ok(())
}

fn cmd_eval_node(a: EvalNodeArgs) -> Result<()> {
    let spec = a.node.spec();
    let rows = a.node.load_rows()?;
    a.node.echo("eval-node", &spec, json!({ "loo": a.loo }))?;

    let report = if a.loo {
        loo_node_eval(
            &rows,
            &spec,
            &a.node.search.grid(),
            &a.node.search.cv(),
            &a.node.search.solver(),
        )?
    } else {
        let (model, tune) = train_node(
            &rows,
            &spec,
            &a.node.search.grid(),
            &a.node.search.cv(),
            &a.node.search.solver(),
        )?;
        describe_tuning(&spec.node_id, a.node.search.folds, &tune);
        let mut records = Vec::new();
        for case in node_cases(&rows, &spec.atlas_class) {
            let dv = model.decision_value(&case.features)?;
            records.push(CaseRecord {
                case_id: case.case_id.clone(),
                true_label: verdict_label(case.positive),
                predicted: verdict_label(dv >= spec.threshold),
                decision_value: dv,
                error: false,
            });
        }
        EvalReport::from_records(
            &spec.node_id,
            vec![POSITIVE_LABEL.to_string(), NEGATIVE_LABEL.to_string()],
            records,
        )?
    };

    let file = a.node.out.join(format!(
        "{}_{}.json",
        spec.node_id,
        if a.loo { "loo" } else { "eval" }
    ));
    report.save(&file)?;
    print!("{}", report.matrix.render_text());
    println!("accuracy: {}%", format_percent(report.accuracy));
    println!("report: {}", file.display());
    Ok(())
}

/// Rewrites a model path found in a sidecar so it stays valid relative to
/// the tree definition's directory; falls back to the absolute path when the
/// model lives outside it.
fn model_path_for(out_dir: &Path, sidecar: &Path, model_path: &str) -> Result<String> {
    let side_dir = sidecar.parent().unwrap_or_else(|| Path::new("."));
    let model_abs = std::path::absolute(side_dir.join(model_path))?;
    let out_abs = std::path::absolute(out_dir)?;
    let resolved = match model_abs.strip_prefix(&out_abs) {
        Ok(rel) => rel.to_path_buf(),
        Err(_) => model_abs,
    };
    Ok(resolved.display().to_string())
}

fn cmd_tree_build(a: TreeBuildArgs) -> Result<()> {
    write_run_config(
        &a.out,
        json!({
            "subcommand": "tree build",
            "nodes": a.nodes.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "with_error_node": a.with_error_node,
            "fallthrough": a.fallthrough,
            "out": a.out.display().to_string(),
        }),
    )?;

    let mut defs = Vec::with_capacity(a.nodes.len());
    for sidecar in &a.nodes {
        if !sidecar.is_file() {
            return Err(Error::Config(format!(
                "missing node sidecar {}",
                sidecar.display()
            )));
        }
        let mut def: NodeDefinition = serde_json::from_str(&fs::read_to_string(sidecar)?)?;
        def.model_path = model_path_for(&a.out, sidecar, &def.model_path)?;
        defs.push(def);
    }
    let definition = TreeDefinition {
        order: defs.iter().map(|d| d.node_id.clone()).collect(),
        nodes: defs,
        with_error_node: a.with_error_node,
        fallthrough_diagnosis: a.fallthrough,
    };
    // Proves the definition is coherent and every model loads before the
    // file is advertised to downstream commands.
    let tree = definition.instantiate(&a.out)?;

    let file = a.out.join("tree.json");
    definition.save(&file)?;
    let order: Vec<&str> = tree.nodes().iter().map(|n| n.node_id.as_str()).collect();
    println!("cascade: {}", order.join(" -> "));
    println!("outcomes: {}", tree.outcome_labels().join(", "));
    println!("definition: {}", file.display());
    Ok(())
}

impl TreeDataArgs {
    fn load(
        &self,
        subcommand: &str,
    ) -> Result<(segcascade::tree::LogicalTree, Vec<segcascade::tree::CaseBundle>)> {
        FeatureSchema::by_id(&self.schema)?;
        if !self.tree.is_file() {
            return Err(Error::Config(format!(
                "missing tree definition {}",
                self.tree.display()
            )));
        }
        if !self.features.is_file() {
            return Err(Error::Config(format!(
                "missing feature table {}",
                self.features.display()
            )));
        }
        write_run_config(
            &self.out,
            json!({
                "subcommand": subcommand,
                "tree": self.tree.display().to_string(),
                "features": self.features.display().to_string(),
                "schema": self.schema,
                "out": self.out.display().to_string(),
            }),
        )?;
        let definition = TreeDefinition::load(&self.tree)?;
        let base = self.tree.parent().unwrap_or_else(|| Path::new("."));
        let tree = definition.instantiate(base)?;
        let rows = read_feature_table(&self.features, &self.schema)?;
        let bundles = case_bundles(&rows)?;
        Ok((tree, bundles))
    }
}

fn cmd_tree_classify(a: TreeDataArgs) -> Result<()> {
    let (tree, bundles) = a.load("tree classify")?;
    let mut docs = Vec::with_capacity(bundles.len());
    for bundle in &bundles {
        let diagnosis = classify_case(&tree, bundle)?;
        println!("{}: {}", bundle.case_id, diagnosis.label);
        docs.push(diagnosis_document(&bundle.case_id, &diagnosis));
    }
    let file = a.out.join("diagnoses.json");
    write_pretty_json(&file, &serde_json::Value::Array(docs))?;
    println!("diagnoses: {}", file.display());
    Ok(())
}

fn cmd_tree_evaluate(a: TreeDataArgs) -> Result<()> {
    let (tree, bundles) = a.load("tree evaluate")?;
    let report = evaluate_tree(&tree, &bundles)?;
    let file = a.out.join("tree_eval.json");
    report.save(&file)?;
    print!("{}", report.matrix.render_text());
    println!("accuracy: {}%", format_percent(report.accuracy));
    println!("report: {}", file.display());
    Ok(())
}

fn cmd_tree_permute(a: TreeDataArgs) -> Result<()> {
    let (tree, bundles) = a.load("tree permute")?;
    let rows = permutation_study(tree.nodes(), &bundles, tree.fallthrough())?;
    let file = a.out.join("permutations.json");
    write_pretty_json(&file, &serde_json::to_value(&rows)?)?;
    for row in &rows {
        println!("{}  {}%", row.order.join(" -> "), format_percent(row.accuracy));
    }
    println!("table: {}", file.display());
    Ok(())
}
