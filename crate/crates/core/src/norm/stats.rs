use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Lower bound applied to every maintained variance.
pub const VAR_FLOOR: f64 = 1e-10;

/// Per-channel first and second moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl ChannelStats {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::config("mean/var length mismatch"));
        }
        Ok(ChannelStats { mean, var })
    }

    /// Zero mean, unit variance.
    pub fn unit(channels: usize) -> Self {
        ChannelStats { mean: vec![0.0; channels], var: vec![1.0; channels] }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// Per-class, per-channel running moments: `mu[k][c]` and `var[k][c]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWiseStats {
    classes: usize,
    channels: usize,
    mu: Vec<f64>,
    var: Vec<f64>,
}

impl ClassWiseStats {
    pub fn new(classes: usize, channels: usize, mu: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if classes == 0 || channels == 0 {
            return Err(Error::config("class-wise stats need at least one class and channel"));
        }
        if mu.len() != classes * channels || var.len() != classes * channels {
            return Err(Error::config(format!(
                "class-wise stats need {classes}×{channels} entries"
            )));
        }
        if mu.iter().chain(&var).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("class-wise stats".into()));
        }
        let var = var.into_iter().map(|v| v.max(VAR_FLOOR)).collect();
        Ok(ClassWiseStats { classes, channels, mu, var })
    }

    /// Every class row set to `source`.
    pub fn replicated(classes: usize, source: &ChannelStats) -> Self {
        let c = source.channels();
        ClassWiseStats {
            classes,
            channels: c,
            mu: source.mean.repeat(classes),
            var: source.var.iter().map(|v| v.max(VAR_FLOOR)).collect::<Vec<_>>().repeat(classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn mu(&self, k: usize) -> &[f64] {
        &self.mu[k * self.channels..(k + 1) * self.channels]
    }

    pub fn var(&self, k: usize) -> &[f64] {
        &self.var[k * self.channels..(k + 1) * self.channels]
    }

    pub(crate) fn rows_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.mu, &mut self.var)
    }
}

/// Exact per-channel mean and biased variance over all `B·H·W` positions.
pub fn standard_batch_stats(f: &Tensor) -> Result<ChannelStats> {
    let (b, c, hw) = f.bchw()?;
    let n = (b * hw) as f64;
    let data = f.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for (ch, (m, v)) in mean.iter_mut().zip(var.iter_mut()).enumerate() {
        let positions = || (0..b).flat_map(move |bi| (0..hw).map(move |p| data[(bi * c + ch) * hw + p]));
        let mu = positions().sum::<f64>() / n;
        *m = mu;
        *v = positions().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    }
    Ok(ChannelStats { mean, var })
}

/// Count-weighted mixture moments of per-class statistics (class-agnostic
/// pooling, as a regular BN would see the stream).
pub fn pooled_stats_from_classes(counts: &[usize], stats: &ClassWiseStats) -> Result<ChannelStats> {
    if counts.len() != stats.classes() {
        return Err(Error::config(format!(
            "{} counts for {} classes",
            counts.len(),
            stats.classes()
        )));
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::Empty("class counts are all zero"));
    }
    let total = total as f64;
    let c = stats.channels();
    let mut mean = vec![0.0; c];
    for (k, &n) in counts.iter().enumerate() {
        for (m, mu) in mean.iter_mut().zip(stats.mu(k)) {
            *m += n as f64 * mu;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut var = vec![0.0; c];
    for (k, &n) in counts.iter().enumerate() {
        for ch in 0..c {
            let d = stats.mu(k)[ch] - mean[ch];
            var[ch] += n as f64 * (stats.var(k)[ch] + d * d);
        }
    }
    var.iter_mut().for_each(|v| *v /= total);
    Ok(ChannelStats { mean, var })
}

/// Class-balanced global moments: every class weighted `1/Kc`.
pub fn balanced_aggregate(stats: &ClassWiseStats) -> ChannelStats {
    let kc = stats.classes() as f64;
    let c = stats.channels();
    let mut mean = vec![0.0; c];
    for k in 0..stats.classes() {
        for (m, mu) in mean.iter_mut().zip(stats.mu(k)) {
            *m += mu;
        }
    }
    mean.iter_mut().for_each(|m| *m /= kc);
    let mut var = vec![0.0; c];
    for k in 0..stats.classes() {
        for ch in 0..c {
            let d = mean[ch] - stats.mu(k)[ch];
            var[ch] += stats.var(k)[ch] + d * d;
        }
    }
    var.iter_mut().for_each(|v| *v = (*v / kc).max(VAR_FLOOR));
    ChannelStats { mean, var }
}
