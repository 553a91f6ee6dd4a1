use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng::Rng;

/// Feature-space strong augmentation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    /// Std of additive Gaussian noise.
    pub noise_std: f64,
    /// Per-feature scale drawn from `1 ± scale_jitter`.
    pub scale_jitter: f64,
    /// Probability of zeroing a feature.
    pub dropout: f64,
}

impl AugmentSpec {
    pub const NONE: AugmentSpec = AugmentSpec { noise_std: 0.0, scale_jitter: 0.0, dropout: 0.0 };

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0) || !(self.scale_jitter >= 0.0) || !(0.0..=1.0).contains(&self.dropout) {
            return Err(Error::config(format!("invalid augmentation {self:?}")));
        }
        Ok(())
    }
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec { noise_std: 0.2, scale_jitter: 0.1, dropout: 0.1 }
    }
}

/// Scales, adds noise, then drops features, independently per sample and
/// feature.
pub fn augment(x: &Tensor, spec: &AugmentSpec, rng: &mut Rng) -> Tensor {
    let mut out = x.clone();
    if *spec == AugmentSpec::NONE {
        return out;
    }
    for v in out.data_mut() {
        if spec.scale_jitter > 0.0 {
            *v *= 1.0 + rng.random_range(-spec.scale_jitter..=spec.scale_jitter);
        }
        if spec.noise_std > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            *v += spec.noise_std * z;
        }
        if spec.dropout > 0.0 && rng.random::<f64>() < spec.dropout {
            *v = 0.0;
        }
    }
    out
}
