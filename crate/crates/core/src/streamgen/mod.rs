//! Test stream protocol: long-tailed global pools, per-batch
//! Dirichlet–categorical label sampling, domain schedules, and synthetic
//! corrupted datasets.

mod config;
mod dirichlet;
pub mod io;
mod pool;
mod stream;
mod synth;

pub use config::{AlphaMode, ProtocolConfig, Variant};
pub use dirichlet::{make_alpha, sample_dirichlet, sample_dirichlet_ln, AlphaVector};
pub use pool::{
    build_global_pool, domain_schedule, long_tail_counts, permute_class_axis, sample_batch_labels,
    sample_batch_labels_ln, BatchDraw, ClassPermutation, GlobalPool, RemainingPool,
};
pub use stream::{batch_schedule, generate_stream, meta_path, read_order_file, write_order_file, DomainPlan, Stream, StreamBatch};
pub use synth::{default_domain_recipe, synth_dataset, Corruption, CorruptionKind, Domain, SynthConfig, SyntheticDataset};
