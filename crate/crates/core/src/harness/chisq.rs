use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub const SIGNIFICANCE: f64 = 0.01;
pub const MIN_TOTAL: u64 = 50;

/// Pearson goodness-of-fit outcome at the 1% level.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub passed: bool,
    /// Why the test failed outright, if it did.
    pub diagnostic: Option<String>,
}

/// Tests observed counts against expected proportions (summing to 1).
/// A nonzero count in a zero-probability cell fails with a diagnostic.
pub fn chi_square_uniformity(observed: &[u64], expected: &[f64]) -> Result<ChiSquareTest> {
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(Error::config("need at least two matching categories"));
    }
    if expected.iter().any(|p| !(*p >= 0.0)) || (expected.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config("expected proportions must be non-negative and sum to 1"));
    }
    let total: u64 = observed.iter().sum();
    if total < MIN_TOTAL {
        return Err(Error::config(format!("chi-square needs at least {MIN_TOTAL} observations, got {total}")));
    }
    let dof = observed.len() - 1;
    if let Some(k) = observed.iter().zip(expected).position(|(&o, &p)| p == 0.0 && o > 0) {
        return Ok(ChiSquareTest {
            statistic: f64::INFINITY,
            dof,
            p_value: 0.0,
            passed: false,
            diagnostic: Some(format!("category {k} has {} observations but zero expected probability", observed[k])),
        });
    }
    let statistic: f64 = observed
        .iter()
        .zip(expected)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&o, &p)| {
            let e = total as f64 * p;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::config(e.to_string()))?;
    let p_value = dist.sf(statistic);
    Ok(ChiSquareTest { statistic, dof, p_value, passed: p_value > SIGNIFICANCE, diagnostic: None })
}

/// Upper `SIGNIFICANCE` quantile of χ² with `dof` degrees of freedom.
pub fn critical_value(dof: usize) -> Result<f64> {
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::config(e.to_string()))?;
    Ok(dist.inverse_cdf(1.0 - SIGNIFICANCE))
}
