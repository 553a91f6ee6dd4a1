use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stream protocol family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Global + local imbalance, fixed class proportions across domains.
    #[serde(rename = "gli-f")]
    GliF,
    /// Global + local imbalance, class axis re-permuted at every domain change.
    #[serde(rename = "gli-v")]
    GliV,
    /// Local imbalance only (imbalance factor forced to 1).
    #[serde(rename = "ptta")]
    Ptta,
    /// Uniformly shuffled pools, no Dirichlet draws.
    #[serde(rename = "iid")]
    Iid,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::GliF => "gli-f",
            Variant::GliV => "gli-v",
            Variant::Ptta => "ptta",
            Variant::Iid => "iid",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gli-f" => Ok(Variant::GliF),
            "gli-v" => Ok(Variant::GliV),
            "ptta" => Ok(Variant::Ptta),
            "iid" => Ok(Variant::Iid),
            other => Err(Error::config(format!("unknown variant {other:?} (gli-f, gli-v, ptta, iid)"))),
        }
    }
}

/// Indexing of the class exponent in the Dirichlet prior.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaMode {
    /// `k/Kc` for `k = 1..=Kc`.
    OneBased,
    /// `k/(Kc−1)` for `k = 0..Kc`; head/tail ratio is exactly the imbalance factor.
    #[default]
    ExactIf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub classes: usize,
    pub domains: usize,
    /// Local-imbalance scale of the Dirichlet prior.
    pub sigma: f64,
    pub imbalance_factor: f64,
    pub batch_size: usize,
    pub variant: Variant,
    #[serde(default)]
    pub alpha_mode: AlphaMode,
    /// Explicit domain order; a seeded permutation when absent.
    #[serde(default)]
    pub domain_order: Option<Vec<usize>>,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn new(classes: usize, domains: usize) -> Self {
        ProtocolConfig {
            classes,
            domains,
            sigma: 0.1,
            imbalance_factor: 1.0,
            batch_size: 64,
            variant: Variant::GliF,
            alpha_mode: AlphaMode::default(),
            domain_order: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config(format!("classes must be ≥ 2, got {}", self.classes)));
        }
        if self.domains < 1 {
            return Err(Error::config("domains must be ≥ 1"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.imbalance_factor >= 1.0 && self.imbalance_factor.is_finite()) {
            return Err(Error::config(format!(
                "imbalance_factor must be ≥ 1, got {}",
                self.imbalance_factor
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be ≥ 1"));
        }
        if let Some(order) = &self.domain_order {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != (0..self.domains).collect::<Vec<_>>() {
                return Err(Error::config(format!(
                    "domain_order {order:?} is not a permutation of 0..{}",
                    self.domains
                )));
            }
        }
        Ok(())
    }

    /// Imbalance factor actually used by the generator.
    pub fn effective_imbalance(&self) -> f64 {
        match self.variant {
            Variant::Ptta => 1.0,
            _ => self.imbalance_factor,
        }
    }
}
