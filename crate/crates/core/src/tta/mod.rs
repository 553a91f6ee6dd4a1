//! Test-time adaptation: the tri-net self-training method and baselines.

mod augment;
mod baselines;
mod episode;
mod hyper;
mod losses;
mod tribe;

pub use augment::{augment, AugmentSpec};
pub use baselines::{bn_stat_step, pl_step, stats_only_step, tent_step, test_step, BaselineStep};
pub use episode::{config_fingerprint, run_episode, Method};
pub use hyper::TribeHyperParams;
pub use losses::{anchored_loss, anchored_objective, gate_mask, self_training_loss, self_training_objective};
pub use tribe::{tribe_step, StepOutput, TriNet};
