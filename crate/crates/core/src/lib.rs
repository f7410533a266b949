//! DEMATEL causal analysis.
//!
//! Turns pairwise expert influence scores over a set of criteria into a
//! total-relation matrix, splits the criteria into cause and effect groups,
//! and exports the thresholded influence digraph and prominence/relation
//! scatter data.
//!
//! ```
//! use dematel::{engine, fixtures};
//!
//! let cs = fixtures::criteria();
//! let drm = fixtures::direct_relation();
//! let result = engine::run_pipeline(
//!     engine::PipelineInput::Drm(&drm),
//!     &cs,
//!     &engine::PipelineOptions::default(),
//! )
//! .unwrap();
//! assert_eq!(result.cause_codes(), ["C1", "C2", "C3", "C10"]);
//! ```
//!
//! With the `parallel` feature (on by default) Monte-Carlo trials in
//! [`sensitivity`] run on the rayon pool; results are identical either way.

pub mod engine;
pub mod fixtures;
pub mod io;
pub mod matrix;
pub mod model;
pub mod sensitivity;

pub use engine::{run_pipeline, EngineError, PipelineInput, PipelineOptions, StrengthBounds};
pub use io::IoError;
pub use matrix::{DenseMatrix, MatrixError};
pub use model::{
    AnalysisResult, CriteriaSet, Criterion, DirectRelationMatrix, Edge, ExpertResponse, Group,
    ModelError, NormalizationMode, NormalizedMatrix, ProminenceRecord, Strength,
    TotalRelationMatrix,
};
pub use sensitivity::{PerturbationSpec, SensitivityError, StabilityReport};
