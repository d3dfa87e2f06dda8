//! Online success predictor for LM-MA-ES.
//!
//! Each generation the strategy oversamples `lambda'` candidates, the
//! predictor scores them, and `lambda` are drawn without replacement with
//! softmax-of-score probabilities. Only those are evaluated. Every evaluated
//! candidate goes into a bounded [`ReplayMemory`]; the memory is relabelled
//! against its own p-percentile and the predictor trains one epoch on it.

mod assisted;
mod filter;
mod memory;
mod net;

pub use assisted::{
    assisted_generation_loop, AssistedSearch, FilterConfig, IterationRecord, Predictor,
};
pub use filter::{audit_accuracy, filter_candidates, Selection};
pub use memory::{nearest_rank_percentile, relabel, MemoryEntry, ReplayMemory};
pub use net::{Gradients, NetFloat, PredictorNet, BATCH_SIZE, HIDDEN_WIDTHS, LEARNING_RATE};
