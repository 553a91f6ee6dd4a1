use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Percentage of wrong predictions.
pub fn instance_avg_error(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check(truth, pred)?;
    let wrong = truth.iter().zip(pred).filter(|(y, p)| y != p).count();
    Ok(100.0 * wrong as f64 / truth.len() as f64)
}

/// Mean of per-class error percentages over classes present in `truth`.
pub fn category_avg_error(truth: &[usize], pred: &[usize], classes: usize) -> Result<f64> {
    check(truth, pred)?;
    let mut seen = vec![0usize; classes];
    let mut wrong = vec![0usize; classes];
    for (&y, &p) in truth.iter().zip(pred) {
        if y >= classes {
            return Err(Error::config(format!("label {y} outside [0, {classes})")));
        }
        seen[y] += 1;
        wrong[y] += usize::from(y != p);
    }
    let rates: Vec<f64> =
        seen.iter().zip(&wrong).filter(|(n, _)| **n > 0).map(|(&n, &w)| w as f64 / n as f64).collect();
    Ok(100.0 * rates.iter().sum::<f64>() / rates.len() as f64)
}

fn check(truth: &[usize], pred: &[usize]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::config(format!("{} labels vs {} predictions", truth.len(), pred.len())));
    }
    if truth.is_empty() {
        return Err(Error::Empty("no predictions to score"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainMetrics {
    pub domain: usize,
    pub samples: usize,
    pub instance_error: f64,
    pub category_error: f64,
}

impl DomainMetrics {
    pub fn from_predictions(domain: usize, truth: &[usize], pred: &[usize], classes: usize) -> Result<Self> {
        Ok(DomainMetrics {
            domain,
            samples: truth.len(),
            instance_error: instance_avg_error(truth, pred)?,
            category_error: category_avg_error(truth, pred, classes)?,
        })
    }
}

/// Errors of one method over one stream, averaged over domains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub domains: Vec<DomainMetrics>,
    pub instance_error: f64,
    pub category_error: f64,
    /// Predictions of every batch, in stream order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<Vec<Vec<usize>>>,
    /// SHA-256 over the method, seed, hyper-parameters, source model and batch order.
    pub fingerprint: String,
    /// Digest of the dense weights after the last batch.
    pub dense_digest: String,
}

impl EpisodeResult {
    pub fn new(
        seed: u64,
        domains: Vec<DomainMetrics>,
        predictions: Option<Vec<Vec<usize>>>,
        fingerprint: String,
        dense_digest: String,
    ) -> Self {
        let n = domains.len().max(1) as f64;
        let instance_error = domains.iter().map(|d| d.instance_error).sum::<f64>() / n;
        let category_error = domains.iter().map(|d| d.category_error).sum::<f64>() / n;
        EpisodeResult { seed, domains, instance_error, category_error, predictions, fingerprint, dense_digest }
    }
}
