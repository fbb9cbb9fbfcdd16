//! Identification protocols, retrieval and evidence heatmaps.

mod heatmap;
pub mod metrics;
mod protocol;
mod report;

pub use heatmap::{evidence_map, heatmap, Heatmap};
pub use metrics::{Distance, RetrievalResult, WriterModel};
pub use protocol::{evaluate_nn, evaluate_pages, evaluate_retrieval, evaluate_words, page_probs, predict_word_probs};
pub use report::{Breakdown, EvalReport};
