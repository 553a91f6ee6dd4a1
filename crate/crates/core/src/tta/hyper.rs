use serde::{Deserialize, Serialize};

use super::augment::AugmentSpec;
use crate::error::{Error, Result};
use crate::norm::{NormVariant, SharedVarianceTerm};

/// Tri-net and baseline adaptation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TribeHyperParams {
    /// Gate threshold as a fraction of `ln Kc`.
    pub h0: f64,
    pub lambda_anc: f64,
    pub gamma: f64,
    pub eta: f64,
    pub lr: f64,
    pub robust_momentum: f64,
    pub shared_variance: SharedVarianceTerm,
    pub augment: AugmentSpec,
}

impl TribeHyperParams {
    /// Defaults scaled to the number of classes.
    pub fn for_classes(classes: usize) -> Self {
        let (h0, gamma) = match classes {
            0..=30 => (0.05, 0.0),
            31..=300 => (0.2, 0.1),
            _ => (0.4, 0.5),
        };
        TribeHyperParams {
            h0,
            lambda_anc: 0.5,
            gamma,
            eta: 0.0005 * classes as f64,
            lr: 1e-3,
            robust_momentum: 0.05,
            shared_variance: SharedVarianceTerm::default(),
            augment: AugmentSpec::default(),
        }
    }

    pub fn balanced_variant(&self) -> NormVariant {
        NormVariant::Balanced { gamma: self.gamma, eta: self.eta, shared_variance: self.shared_variance }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, v: f64| Err(Error::config(format!("{name} = {v} out of range")));
        if !(self.h0 > 0.0 && self.h0 <= 1.0) {
            return bad("h0", self.h0);
        }
        if !(self.lambda_anc >= 0.0 && self.lambda_anc.is_finite()) {
            return bad("lambda_anc", self.lambda_anc);
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", self.lr);
        }
        if !(self.robust_momentum > 0.0 && self.robust_momentum <= 1.0) {
            return bad("robust_momentum", self.robust_momentum);
        }
        self.balanced_variant().validate()?;
        self.augment.validate()
    }
}
