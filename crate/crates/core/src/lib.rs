//! Toxic span detection toolkit.
//!
//! Documents are tokenized with character offsets into the original text,
//! cleaned, labeled per token by a small hashed-feature network trained
//! with cross-entropy or the self-adjusting dice loss, and turned back into
//! character offsets for span-level F1 scoring. Self-training over an
//! unlabeled pool and character-level ensembling sit on top.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod spans;
pub mod ssl;
pub mod textproc;

pub use corpus::Document;
pub use error::{Error, Result};
pub use pipeline::Pipeline;
pub use spans::SpanPrediction;
