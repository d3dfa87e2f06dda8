//! Network-assisted latent-space evolution for master-sample coverage attacks.
//!
//! The crate is split along the attack pipeline:
//!
//! * [`evostrat`]: ask/tell black-box minimizers (LM-MA-ES and random search), a
//!   budgeted run driver and versioned checkpoints.
//! * [`predictor`]: the online success predictor, its replay memory and the
//!   oversample/filter/evaluate loop that couples it to LM-MA-ES.
//! * [`coverage`]: match predicates, MSC, FAR/FRR calibration, greedy and
//!   per-cluster coverage search, k-means.
//! * [`synthworld`]: a seeded synthetic generator/descriptor stack and identity
//!   population to run the attacks against.

pub mod coverage;
pub mod error;
pub mod evostrat;
pub mod predictor;
pub mod seed;
pub mod synthworld;

pub use error::{Error, Result};
