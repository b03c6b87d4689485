//! Segmentation-quality classification for congenital heart morphology.
//!
//! The pipeline in this crate grades how well an atlas-based segmentation of
//! the great vessels fits a scan, and turns those grades into a diagnosis:
//!
//! 1. [`volume`] — scalar/label volumes and the MVOL container format;
//! 2. [`features`] — intensity statistics and connected-component counts
//!    under a segmentation mask, assembled into a fixed 15-slot vector;
//! 3. [`svm`] — from-scratch linear SVM solvers: a two-class soft-margin SMO
//!    and a one-class smallest-enclosing-hypersphere, plus a brute-force QP
//!    oracle used to validate both;
//! 4. [`selection`] — grid search, cross-validation, leave-one-out
//!    evaluation and confusion matrices;
//! 5. [`tree`] — the ordered cascade of per-morphology nodes that maps
//!    per-atlas decisions to a final label;
//! 6. [`phantom`] — a synthetic tube-phantom cohort generator with simulated
//!    good/bad segmentations, used to exercise the whole pipeline end to end;
//! 7. [`pipeline`] — glue that runs cohort -> features -> node training ->
//!    cascade evaluation.

pub mod error;
pub mod features;
pub mod rng;
pub mod phantom;
pub mod pipeline;
pub mod selection;
pub mod svm;
pub mod tree;
pub mod volume;

pub use error::{Error, Result};
pub use features::{
    Connectivity, FeatureRow, FeatureSchema, FeatureVector, MaskedStats, Statistic,
};
pub use phantom::{MorphClass, PhantomConfig};
pub use selection::{CVConfig, ConfusionMatrix, EvalReport, GridSpec};
pub use svm::{
    Classification, Dataset, Model, OneClassModel, SolverConfig, Standardization, TwoClassModel,
};
pub use tree::{CaseBundle, DecisionNode, Diagnosis, Fallthrough, LogicalTree};
pub use volume::{LabelVolume, ScalarVolume, StructureId, Volume};
