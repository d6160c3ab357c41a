//! Human-evaluation studies: blind item sampling, assignment, an
//! append-only rating ledger, agreement statistics and length-grouped
//! summaries, served over HTTP.

pub mod agreement;
pub mod error;
pub mod ledger;
pub mod server;
pub mod study;
pub mod summary;

pub use agreement::{agreement, mean_pairwise, ordinal_alpha, Agreement};
pub use error::{AnnevalError, Result};
pub use ledger::{ledger_path, replay, LedgerEvent, Store};
pub use server::{router, serve};
pub use study::{
    create_study, BlindItem, CandidateItem, EvalItem, GenerationRun, NextItem, RatingRecord, RatingSubmission, Study,
    StudyConfig,
};
pub use summary::{summarize_by_length, LengthSummary};
