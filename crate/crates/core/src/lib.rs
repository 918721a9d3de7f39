//! Online recommendation for users who are only ever seen once.
//!
//! Users are described by a few categorical features. Every feature value
//! owns a short latent vector; those vectors are spread over a shared latent
//! space so that each feature has entries of its own and each pair of
//! features shares a block of entries. The element-wise product of a user's
//! spread-out vectors is the user's latent vector, which models single
//! features and pairwise feature interactions at once. Ad variants get one
//! free latent vector each and are ranked by inner product with the user.
//!
//! The model learns in a single pass with one gradient step per impression
//! ([`trainer::update`]). The crate also ships a rule-driven click log
//! generator ([`datagen`]), popularity and random baselines
//! ([`baselines`]), and a replay harness scoring mean reciprocal rank
//! ([`replay`]).

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod layout;
pub mod logfile;
pub mod model;
pub mod offset;
pub mod ranking;
pub mod replay;
pub mod schema;
pub mod snapshot;
pub mod trainer;

pub use error::{Error, Result};
pub use layout::IndexLayout;
pub use model::Model;
pub use offset::{ModelParams, OffSet};
pub use ranking::RankingAlgorithm;
pub use schema::{FeatureSchema, UserProfile};
pub use trainer::{Observation, RescaleMode, TrainerConfig, TrainerState};
