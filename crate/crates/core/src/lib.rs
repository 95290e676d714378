//! Case-based reasoning for student modeling.
//!
//! - [`schema`]: typed, weighted case schemas, cases and queries
//! - [`similarity`]: local/global similarity and k-nearest-neighbor retrieval
//! - [`case_base`]: case bases and their CSV/JSON connectors
//! - [`store`]: named case bases in a data directory, with per-base writer locks
//! - [`cycle`]: the Retrieve / Reuse / Revise / Retain session state machine
//! - [`formative`]: final-grade outlook, feedback text and leave-one-out evaluation

pub mod bundled;
pub mod case_base;
pub mod cycle;
pub mod error;
pub mod formative;
pub mod schema;
pub mod similarity;
pub mod store;

pub use case_base::{CaseBase, Format, RetainOutcome};
pub use cycle::{start_session, Edits, Operation, Session, SessionState};
pub use error::{Error, ErrorClass, Result};
pub use formative::{
    generate_feedback, leave_one_out, predict_final_grade, FeedbackConfig, GradeDistribution, LooReport,
};
pub use schema::{
    define_schema, parse_grade, student_schema, validate_case, AttributeSpec, AttributeType, Case, CaseSchema, Group,
    Query, ValidationReport, Value,
};
pub use similarity::{global_similarity, local_similarity, retrieve_k, RetrievalResult, SimilarityScore, DEFAULT_K};
pub use store::CaseBaseStore;
