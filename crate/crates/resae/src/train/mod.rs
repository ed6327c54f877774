//! Training loop, loss, and filtered-ranking evaluation.

mod eval;
mod loss;
mod trainer;

pub use eval::{evaluate, evaluate_queries, filtered_rank, EvalReport, FilterIndex, SideReport};
pub use loss::compute_loss;
pub use trainer::{train, training_queries, TraceEvent, TrainConfig, TrainOutcome};
