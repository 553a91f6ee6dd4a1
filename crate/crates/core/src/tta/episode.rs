use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::baselines::{bn_stat_step, pl_step, stats_only_step, tent_step, test_step};
use super::hyper::TribeHyperParams;
use super::tribe::TriNet;
use crate::error::{Error, Result};
use crate::harness::{DomainMetrics, EpisodeResult};
use crate::nn::{checkpoint, Adam, LabeledSet, Network, SourceModel};
use crate::norm::{NormState, NormVariant};
use crate::rng;
use crate::streamgen::StreamBatch;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Test,
    #[serde(rename = "bn", alias = "bn-stat")]
    BnStat,
    Pl,
    Tent,
    RobustBn,
    BalancedBn,
    Tribe,
}

impl Method {
    pub const ALL: [Method; 7] =
        [Method::Test, Method::BnStat, Method::Pl, Method::Tent, Method::RobustBn, Method::BalancedBn, Method::Tribe];

    pub fn name(self) -> &'static str {
        match self {
            Method::Test => "test",
            Method::BnStat => "bn",
            Method::Pl => "pl",
            Method::Tent => "tent",
            Method::RobustBn => "robust-bn",
            Method::BalancedBn => "balanced-bn",
            Method::Tribe => "tribe",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s) || (*m == Method::BnStat && s.eq_ignore_ascii_case("bn-stat")))
            .ok_or_else(|| {
                let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::config(format!("unknown method {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Per-method adaptation state carried across the whole stream.
#[derive(Clone, Debug)]
enum Adapter {
    Frozen,
    Stats { net: Network, states: Vec<NormState> },
    Gradient { net: Network, states: Vec<NormState>, adam: Adam, entropy: bool },
    Tribe(Box<TriNet>),
}

impl Adapter {
    fn new(method: Method, source: &SourceModel, hp: &TribeHyperParams) -> Result<Self> {
        let standard = NormVariant::Standard { momentum: 0.0 };
        Ok(match method {
            Method::Test => Adapter::Frozen,
            Method::BnStat => Adapter::Stats { net: source.net.clone(), states: source.states(standard)? },
            Method::RobustBn => Adapter::Stats {
                net: source.net.clone(),
                states: source.states(NormVariant::Robust { momentum: hp.robust_momentum })?,
            },
            Method::BalancedBn => {
                Adapter::Stats { net: source.net.clone(), states: source.states(hp.balanced_variant())? }
            }
            Method::Pl | Method::Tent => Adapter::Gradient {
                net: source.net.clone(),
                states: source.states(standard)?,
                adam: Adam::new(hp.lr),
                entropy: method == Method::Tent,
            },
            Method::Tribe => Adapter::Tribe(Box::new(TriNet::new(source, hp)?)),
        })
    }

    fn step(
        &mut self,
        method: Method,
        source: &SourceModel,
        x: &crate::nn::Tensor,
        hp: &TribeHyperParams,
        rng: &mut rng::Rng,
    ) -> Result<Vec<usize>> {
        match self {
            Adapter::Frozen => test_step(source, x),
            Adapter::Stats { net, states } if method == Method::BnStat => bn_stat_step(net, states, x),
            Adapter::Stats { net, states } => stats_only_step(net, states, x),
            Adapter::Gradient { net, states, adam, entropy } => {
                let step = if *entropy { tent_step(net, states, adam, x)? } else { pl_step(net, states, adam, x)? };
                Ok(step.predictions)
            }
            Adapter::Tribe(tri) => Ok(tri.step(x, hp, rng)?.predictions),
        }
    }

    fn network<'a>(&'a self, source: &'a SourceModel) -> &'a Network {
        match self {
            Adapter::Frozen => &source.net,
            Adapter::Stats { net, .. } | Adapter::Gradient { net, .. } => net,
            Adapter::Tribe(tri) => tri.network(),
        }
    }
}

/// Runs one method over an ordered stream. Each batch is predicted before
/// the method adapts on it; state persists across domain boundaries.
///
/// `domains[d]` holds the samples that batch ids of domain `d` index into.
pub fn run_episode(
    method: Method,
    batches: &[StreamBatch],
    domains: &[&LabeledSet],
    source: &SourceModel,
    hp: &TribeHyperParams,
    seed: u64,
    keep_predictions: bool,
) -> Result<EpisodeResult> {
    hp.validate()?;
    for (d, set) in domains.iter().enumerate() {
        if set.dim() != source.net.in_dim() {
            return Err(Error::config(format!(
                "domain {d} has {} features, model expects {}",
                set.dim(),
                source.net.in_dim()
            )));
        }
        if let Some(&y) = set.labels.iter().find(|&&y| y >= source.classes()) {
            return Err(Error::config(format!("domain {d} has label {y}, model has {} classes", source.classes())));
        }
    }
    let mut adapter = Adapter::new(method, source, hp)?;
    let mut rng = rng::child(seed, method.name());
    let mut per_domain: Vec<(usize, Vec<usize>, Vec<usize>)> = Vec::new();
    let mut log = Vec::new();

    for batch in batches {
        let set = domains.get(batch.domain_id).ok_or_else(|| {
            Error::config(format!("batch {} refers to domain {}, only {} loaded", batch.t, batch.domain_id, domains.len()))
        })?;
        if let Some(&id) = batch.sample_ids.iter().find(|&&id| id >= set.len()) {
            return Err(Error::config(format!("batch {} refers to sample {id} beyond domain size {}", batch.t, set.len())));
        }
        let x = set.features.select_rows(&batch.sample_ids)?;
        let truth: Vec<usize> = batch.sample_ids.iter().map(|&i| set.labels[i]).collect();
        let predictions = adapter.step(method, source, &x, hp, &mut rng)?;

        match per_domain.last_mut() {
            Some((d, y, p)) if *d == batch.domain_id => {
                y.extend_from_slice(&truth);
                p.extend_from_slice(&predictions);
            }
            _ => per_domain.push((batch.domain_id, truth, predictions.clone())),
        }
        if keep_predictions {
            log.push(predictions);
        }
    }

    let classes = source.classes();
    let domains_out = per_domain
        .into_iter()
        .map(|(domain, truth, pred)| DomainMetrics::from_predictions(domain, &truth, &pred, classes))
        .collect::<Result<Vec<_>>>()?;

    let fingerprint = config_fingerprint(method, batches, source, hp, seed)?;
    let dense_digest = adapter.network(source).dense_digest();
    Ok(EpisodeResult::new(seed, domains_out, keep_predictions.then_some(log), fingerprint, dense_digest))
}

/// SHA-256 over everything that determines an episode's outcome.
pub fn config_fingerprint(
    method: Method,
    batches: &[StreamBatch],
    source: &SourceModel,
    hp: &TribeHyperParams,
    seed: u64,
) -> Result<String> {
    let mut h = Sha256::new();
    h.update(method.name().as_bytes());
    h.update(seed.to_le_bytes());
    h.update(serde_json::to_vec(hp)?);
    h.update(checkpoint::encode(source));
    for b in batches {
        h.update((b.domain_id as u64).to_le_bytes());
        h.update((b.sample_ids.len() as u64).to_le_bytes());
        for &id in &b.sample_ids {
            h.update((id as u64).to_le_bytes());
        }
    }
    Ok(format!("{:x}", h.finalize()))
}
