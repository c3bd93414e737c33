//! Neural machinery and the soft actor-critic agent, written out by hand in
//! `f64` so every gradient can be checked against finite differences.

pub mod adam;
pub mod dense;
pub mod replay;
pub mod sac;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dense::{Activation, DenseNet, NetGrads};
pub use replay::{Experience, ReplayBuffer};
pub use sac::{sample_action, update, NetworkBundle, SacConfig};
pub use train::{evaluate_policy, random_policy_run, rollout, train, EpisodeRecord, Policy, Rollout, TrainOutcome, TrajectoryPoint};
