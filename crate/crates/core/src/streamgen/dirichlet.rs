use rand::Rng as _;
use rand_distr::{Distribution, Gamma};

use super::config::AlphaMode;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Strictly positive Dirichlet concentration vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaVector(Vec<f64>);

impl AlphaVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() || alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::config("Dirichlet concentration must be positive and finite"));
        }
        Ok(AlphaVector(alpha))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `α_k = σ · (1/IF)^{e_k}` with `e_k` per [`AlphaMode`], canonical class order
/// (class 0 is the head class).
pub fn make_alpha(classes: usize, sigma: f64, imbalance: f64, mode: AlphaMode) -> Result<AlphaVector> {
    if classes < 2 {
        return Err(Error::config("alpha needs at least two classes"));
    }
    let base = 1.0 / imbalance;
    let alpha = (0..classes)
        .map(|i| {
            let exponent = match mode {
                AlphaMode::OneBased => (i + 1) as f64 / classes as f64,
                AlphaMode::ExactIf => i as f64 / (classes - 1) as f64,
            };
            sigma * base.powf(exponent)
        })
        .collect();
    AlphaVector::new(alpha)
}

/// `ln G` for `G ~ Gamma(shape, 1)`. Shapes below one use
/// `G = G' · U^{1/shape}` with `G' ~ Gamma(shape+1, 1)`, evaluated in log space
/// so tiny shapes never underflow to zero.
fn ln_gamma_draw(shape: f64, rng: &mut Rng) -> f64 {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("positive shape");
        loop {
            let x: f64 = g.sample(rng);
            if x > 0.0 {
                return x.ln();
            }
        }
    } else {
        let boosted = ln_gamma_draw(shape + 1.0, rng);
        let u = 1.0 - rng.random::<f64>(); // (0, 1]
        boosted + u.ln() / shape
    }
}

/// Log-probabilities of one Dirichlet draw, normalized by log-sum-exp.
pub fn sample_dirichlet_ln(alpha: &AlphaVector, rng: &mut Rng) -> Vec<f64> {
    let ln_g: Vec<f64> = alpha.as_slice().iter().map(|&a| ln_gamma_draw(a, rng)).collect();
    let m = ln_g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + ln_g.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    ln_g.into_iter().map(|v| v - lse).collect()
}

/// One probability vector `q ~ Dir(α)`.
pub fn sample_dirichlet(alpha: &AlphaVector, rng: &mut Rng) -> Vec<f64> {
    let ln_q = sample_dirichlet_ln(alpha, rng);
    let q: Vec<f64> = ln_q.iter().map(|v| v.exp()).collect();
    let s: f64 = q.iter().sum();
    q.into_iter().map(|v| v / s).collect()
}
