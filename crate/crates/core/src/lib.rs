//! Goal-conditioned DDPG with averaged actor/critic ensembles (AACHER) and
//! hindsight experience replay, built on a small from-scratch numeric core.
//!
//! Module map:
//! * [`linalg`], [`mlp`], [`adam`], [`rng`]: numeric substrate.
//! * [`networks`]: `A{D}C{P}` ensembles, averaged outputs and updates.
//! * [`replay`]: transitions, hindsight relabeling, the ring buffer.
//! * [`envs`]: built-in sparse-reward environments.
//! * [`normalizer`], [`trainer`]: the training loop and evaluation.
//! * [`checkpoint`]: versioned binary persistence.
//! * [`par`]: rayon helpers with a sequential fallback.

pub mod adam;
pub mod checkpoint;
pub mod envs;
pub mod error;
pub mod linalg;
pub mod mlp;
pub mod networks;
pub mod normalizer;
pub mod par;
pub mod replay;
pub mod rng;
pub mod trainer;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use envs::{Env, EnvConfig, EnvKind};
pub use error::{Error, Result};
pub use networks::{parse_adcp, AdcpSpec, Ensemble};
pub use trainer::{
    train, train_with, EpochMetrics, TrainConfig, TrainError, TrainOutcome, Trainer,
};
