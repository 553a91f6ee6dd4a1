//! Normalization layers: standard BN, moving-average (robust) BN, and
//! class-balanced BN with per-class running statistics.

mod dump;
mod state;
mod stats;

pub use dump::write_stats_csv;
pub use state::{
    init_norm_states, normalize, standardize, Affine, LabeledFeatureBatch, NormState, NormVariant,
    SharedVarianceTerm, NORM_EPS,
};
pub(crate) use state::apply_affine;
pub use stats::{
    balanced_aggregate, pooled_stats_from_classes, standard_batch_stats, ChannelStats, ClassWiseStats,
    VAR_FLOOR,
};
