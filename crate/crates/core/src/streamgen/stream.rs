use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{ProtocolConfig, Variant};
use super::dirichlet::{make_alpha, sample_dirichlet_ln, AlphaVector};
use super::pool::{
    build_global_pool, domain_schedule, permute_class_axis, sample_batch_labels_ln, ClassPermutation, GlobalPool,
    RemainingPool,
};
use crate::error::{Error, Result};
use crate::rng;

/// One test mini-batch: ids index into the active domain's samples.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamBatch {
    pub t: usize,
    #[serde(rename = "domain")]
    pub domain_id: usize,
    #[serde(rename = "ids")]
    pub sample_ids: Vec<usize>,
    #[serde(rename = "labels")]
    pub true_labels: Vec<usize>,
}

/// Per-domain generation details, in visiting order.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainPlan {
    pub domain: usize,
    pub permutation: ClassPermutation,
    pub pool: GlobalPool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stream {
    pub batches: Vec<StreamBatch>,
    pub plan: Vec<DomainPlan>,
}

impl Stream {
    pub fn schedule(&self) -> Vec<usize> {
        self.plan.iter().map(|p| p.domain).collect()
    }
}

/// Domain visiting order implied by a batch sequence.
pub fn batch_schedule(batches: &[StreamBatch]) -> Vec<usize> {
    let mut order: Vec<usize> = batches.iter().map(|b| b.domain_id).collect();
    order.dedup();
    order
}

/// Generates the full ordered stream. `domain_labels[d]` holds the labels of
/// every sample available in domain `d`.
///
/// Domains are visited one after another; within a domain each batch draws a
/// fresh `q ~ Dir(α)` and samples labels categorically from it, without
/// replacement from the domain's long-tailed pool.
pub fn generate_stream(config: &ProtocolConfig, domain_labels: &[Vec<usize>]) -> Result<Stream> {
    config.validate()?;
    if domain_labels.len() != config.domains {
        return Err(Error::config(format!(
            "config declares {} domains, dataset has {}",
            config.domains,
            domain_labels.len()
        )));
    }
    let kc = config.classes;
    let imbalance = config.effective_imbalance();
    let schedule = match &config.domain_order {
        Some(order) => order.clone(),
        None => domain_schedule(config.domains, &mut rng::child(config.seed, "stream/schedule")),
    };
    let mut perm_rng = rng::child(config.seed, "stream/class-permutation");
    let mut pool_rng = rng::child(config.seed, "stream/pool");
    let mut draw_rng = rng::child(config.seed, "stream/draws");
    let canonical_alpha = make_alpha(kc, config.sigma, imbalance, config.alpha_mode)?;

    let mut batches = Vec::new();
    let mut plan = Vec::with_capacity(schedule.len());
    for (position, &domain) in schedule.iter().enumerate() {
        let permutation = if config.variant == Variant::GliV && position > 0 {
            permute_class_axis(kc, &mut perm_rng)
        } else {
            ClassPermutation::identity(kc)
        };
        let pool = build_global_pool(&domain_labels[domain], kc, imbalance, &permutation, &mut pool_rng)?;

        if config.variant == Variant::Iid {
            let mut all: Vec<(usize, usize)> = pool
                .per_class
                .iter()
                .enumerate()
                .flat_map(|(k, ids)| ids.iter().map(move |&id| (id, k)))
                .collect();
            all.shuffle(&mut draw_rng);
            for chunk in all.chunks(config.batch_size) {
                batches.push(StreamBatch {
                    t: batches.len(),
                    domain_id: domain,
                    sample_ids: chunk.iter().map(|p| p.0).collect(),
                    true_labels: chunk.iter().map(|p| p.1).collect(),
                });
            }
        } else {
            let alpha = AlphaVector::new(permutation.apply(canonical_alpha.as_slice()))?;
            let mut remaining = RemainingPool::new(&pool);
            loop {
                let ln_q = sample_dirichlet_ln(&alpha, &mut draw_rng);
                let Some(draw) = sample_batch_labels_ln(&ln_q, config.batch_size, &mut draw_rng, &mut remaining)
                else {
                    break;
                };
                batches.push(StreamBatch {
                    t: batches.len(),
                    domain_id: domain,
                    sample_ids: draw.ids,
                    true_labels: draw.labels,
                });
            }
        }
        plan.push(DomainPlan { domain, permutation, pool });
    }
    Ok(Stream { batches, plan })
}

/// Writes the JSON Lines order file.
pub fn write_order_file(path: &Path, batches: &[StreamBatch]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for b in batches {
        serde_json::to_writer(&mut w, b)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_order_file(path: &Path) -> Result<Vec<StreamBatch>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let batch: StreamBatch = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        out.push(batch);
    }
    Ok(out)
}

/// Path of the protocol sidecar written next to an order file.
pub fn meta_path(order_file: &Path) -> std::path::PathBuf {
    let mut s = order_file.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}
