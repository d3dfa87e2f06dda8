//! A synthetic stand-in for the generator and face-descriptor stack: a seeded
//! nonlinear encoder from latent to embedding space and a clustered identity
//! population with genuine and impostor pairs.
//!
//! Identity lives in a low-dimensional latent subspace; the remaining latent
//! directions are nuisance that the encoder only weakly reads. Identities are
//! drawn from a Gaussian mixture in the identity subspace, so the embedded
//! gallery is clustered and master samples can beat chance.

mod encoder;
mod world;

pub use encoder::{EncoderShape, SyntheticEncoder};
pub use world::{
    build_world, paired_world, IdentityPopulation, ModelView, PairIndex, PairedWorld, World,
    WorldConfig,
};
