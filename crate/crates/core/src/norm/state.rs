use serde::{Deserialize, Serialize};

use super::stats::{balanced_aggregate, standard_batch_stats, ChannelStats, ClassWiseStats, VAR_FLOOR};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Default numerical guard inside the square root.
pub const NORM_EPS: f64 = 1e-5;

/// Which variance is subtracted inside the class-shared increment of the
/// γ-mixed variance update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SharedVarianceTerm {
    /// `σ²_{k'}`, the row summed over (symmetric with `μ_{k'}`).
    #[default]
    SummedRow,
    /// `σ²_k`, the row being updated.
    TargetRow,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NormVariant {
    /// Source running statistics; batch statistics when adapting.
    Standard { momentum: f64 },
    /// Class-agnostic moving average of test batch statistics.
    Robust { momentum: f64 },
    /// Class-wise running statistics mixed by `gamma`, aggregated with equal
    /// class weights.
    Balanced { gamma: f64, eta: f64, shared_variance: SharedVarianceTerm },
}

impl NormVariant {
    pub fn balanced(gamma: f64, eta: f64) -> Self {
        NormVariant::Balanced { gamma, eta, shared_variance: SharedVarianceTerm::default() }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NormVariant::Standard { momentum } | NormVariant::Robust { momentum } => {
                if !(0.0..=1.0).contains(&momentum) {
                    return Err(Error::config(format!("momentum {momentum} outside [0, 1]")));
                }
            }
            NormVariant::Balanced { gamma, eta, .. } => {
                if !(0.0..=1.0).contains(&gamma) {
                    return Err(Error::config(format!("gamma {gamma} outside [0, 1]")));
                }
                if !(eta > 0.0 && eta.is_finite()) {
                    return Err(Error::config(format!("eta {eta} must be positive")));
                }
            }
        }
        Ok(())
    }
}

/// Per-channel affine transform applied after standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl Affine {
    pub fn identity(channels: usize) -> Self {
        Affine { scale: vec![1.0; channels], shift: vec![0.0; channels] }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }
}

/// A feature map together with one pseudo-label per sample.
#[derive(Clone, Copy, Debug)]
pub struct LabeledFeatureBatch<'a> {
    pub features: &'a Tensor,
    pub labels: &'a [usize],
}

/// Normalization statistics for one normalization slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormState {
    variant: NormVariant,
    class_stats: Option<ClassWiseStats>,
    global: ChannelStats,
    eps: f64,
}

impl NormState {
    /// Initializes from source running statistics. Balanced states replicate
    /// the source moments into every class row.
    pub fn from_source(source: &ChannelStats, variant: NormVariant, classes: usize) -> Result<Self> {
        variant.validate()?;
        let global = ChannelStats {
            mean: source.mean.clone(),
            var: source.var.iter().map(|v| v.max(VAR_FLOOR)).collect(),
        };
        let class_stats = match variant {
            NormVariant::Balanced { .. } => {
                if classes < 1 {
                    return Err(Error::config("balanced normalization needs at least one class"));
                }
                Some(ClassWiseStats::replicated(classes, &global))
            }
            _ => None,
        };
        Ok(NormState { variant, class_stats, global, eps: NORM_EPS })
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn variant(&self) -> &NormVariant {
        &self.variant
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn channels(&self) -> usize {
        self.global.channels()
    }

    pub fn class_stats(&self) -> Option<&ClassWiseStats> {
        self.class_stats.as_ref()
    }

    /// Statistics used for normalization outside of batch-statistics mode.
    /// For Balanced states this is the aggregate of the class rows.
    pub fn active_stats(&self) -> &ChannelStats {
        &self.global
    }

    /// Replaces the running statistics (used by pretraining).
    pub fn set_running(&mut self, stats: ChannelStats) -> Result<()> {
        if stats.channels() != self.channels() {
            return Err(Error::config("running stats channel mismatch"));
        }
        self.global = stats;
        if let Some(cs) = &self.class_stats {
            self.class_stats = Some(ClassWiseStats::replicated(cs.classes(), &self.global));
        }
        Ok(())
    }

    /// Moving-average update toward the batch moments (Standard and Robust).
    pub fn robust_update(&mut self, f: &Tensor) -> Result<()> {
        let momentum = match self.variant {
            NormVariant::Standard { momentum } | NormVariant::Robust { momentum } => momentum,
            NormVariant::Balanced { .. } => {
                return Err(Error::config("robust_update on a balanced state"));
            }
        };
        let batch = self.batch_stats_checked(f)?;
        for ch in 0..self.channels() {
            self.global.mean[ch] += momentum * (batch.mean[ch] - self.global.mean[ch]);
            let v = self.global.var[ch] + momentum * (batch.var[ch] - self.global.var[ch]);
            self.global.var[ch] = v.max(VAR_FLOOR);
        }
        Ok(())
    }

    /// Class-wise iterative update with γ-mixing, followed by re-aggregation.
    pub fn balanced_update(&mut self, batch: LabeledFeatureBatch<'_>) -> Result<()> {
        let NormVariant::Balanced { gamma, eta, shared_variance } = self.variant else {
            return Err(Error::config("balanced_update on a non-balanced state"));
        };
        let (b, c, hw) = batch.features.bchw()?;
        if c != self.channels() {
            return Err(Error::config(format!(
                "feature map has {c} channels, state has {}",
                self.channels()
            )));
        }
        if batch.labels.len() != b {
            return Err(Error::config(format!("{} labels for batch of {b}", batch.labels.len())));
        }
        let stats = self.class_stats.as_mut().expect("balanced state carries class stats");
        let kc = stats.classes();
        if let Some(&bad) = batch.labels.iter().find(|&&y| y >= kc) {
            return Err(Error::config(format!("pseudo-label {bad} outside [0, {kc})")));
        }

        let data = batch.features.data();
        let inv_hw = 1.0 / hw as f64;
        // first[k][c] = Σ_b 1(ŷ_b=k) mean_hw(F − μ_k), second likewise for (F − μ_k)²
        let mut first = vec![0.0; kc * c];
        let mut second = vec![0.0; kc * c];
        let mut counts = vec![0usize; kc];
        {
            let (mu, _) = stats.rows_mut();
            for (bi, &k) in batch.labels.iter().enumerate() {
                counts[k] += 1;
                for ch in 0..c {
                    let m = mu[k * c + ch];
                    let base = (bi * c + ch) * hw;
                    let (mut s1, mut s2) = (0.0, 0.0);
                    for x in &data[base..base + hw] {
                        let d = x - m;
                        s1 += d;
                        s2 += d * d;
                    }
                    first[k * c + ch] += s1 * inv_hw;
                    second[k * c + ch] += s2 * inv_hw;
                }
            }
        }

        let (mu, var) = stats.rows_mut();
        let kcf = kc as f64;
        let delta: Vec<f64> = first.iter().map(|s| eta * s).collect();
        // Own-row variance increment: −δ_k² + η Σ_b 1(ŷ_b=k) mean_hw[(F − μ_k)² − σ²_k]
        let own_var: Vec<f64> = (0..kc * c)
            .map(|i| {
                let k = i / c;
                -delta[i] * delta[i] + eta * (second[i] - counts[k] as f64 * var[i])
            })
            .collect();

        for ch in 0..c {
            let shared_mean = (0..kc).map(|k| delta[k * c + ch]).sum::<f64>() / kcf;
            let shared_var_summed = (0..kc).map(|k| own_var[k * c + ch]).sum::<f64>() / kcf;
            // Literal form: every k' term subtracts the target row's σ²_k, and
            // Σ_k' n_k' = B.
            let shared_var_base = (0..kc)
                .map(|k| -delta[k * c + ch] * delta[k * c + ch] + eta * second[k * c + ch])
                .sum::<f64>()
                / kcf;
            for k in 0..kc {
                let i = k * c + ch;
                let shared_var = match shared_variance {
                    SharedVarianceTerm::SummedRow => shared_var_summed,
                    SharedVarianceTerm::TargetRow => shared_var_base - eta * b as f64 * var[i] / kcf,
                };
                mu[i] += (1.0 - gamma) * delta[i] + gamma * shared_mean;
                var[i] = (var[i] + (1.0 - gamma) * own_var[i] + gamma * shared_var).max(VAR_FLOOR);
            }
        }
        self.global = balanced_aggregate(stats);
        Ok(())
    }

    /// Statistics update for one adaptation step; `labels` is required by
    /// Balanced states and ignored otherwise.
    pub fn update(&mut self, f: &Tensor, labels: Option<&[usize]>) -> Result<()> {
        match self.variant {
            NormVariant::Balanced { .. } => {
                let labels = labels.ok_or_else(|| Error::config("balanced update needs pseudo-labels"))?;
                self.balanced_update(LabeledFeatureBatch { features: f, labels })
            }
            _ => self.robust_update(f),
        }
    }

    fn batch_stats_checked(&self, f: &Tensor) -> Result<ChannelStats> {
        let (_, c, _) = f.bchw()?;
        if c != self.channels() {
            return Err(Error::config(format!(
                "feature map has {c} channels, state has {}",
                self.channels()
            )));
        }
        standard_batch_stats(f)
    }
}

/// Builds one state per normalization slot from the source running stats.
pub fn init_norm_states(source: &[ChannelStats], variant: NormVariant, classes: usize) -> Result<Vec<NormState>> {
    source.iter().map(|s| NormState::from_source(s, variant, classes)).collect()
}

/// Standardizes `f` per channel with `stats`: returns `(x̂, 1/√(σ²+ε))`.
pub fn standardize(stats: &ChannelStats, eps: f64, f: &Tensor) -> Result<(Tensor, Vec<f64>)> {
    let (b, c, hw) = f.bchw()?;
    if c != stats.channels() {
        return Err(Error::config(format!(
            "feature map has {c} channels, stats have {}",
            stats.channels()
        )));
    }
    let inv_std: Vec<f64> = stats.var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut out = f.clone();
    let data = out.data_mut();
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * hw;
            for x in &mut data[base..base + hw] {
                *x = (*x - stats.mean[ch]) * inv_std[ch];
            }
        }
    }
    Ok((out, inv_std))
}

/// `scale · (F − μ)/√(σ² + ε) + shift`, per channel.
pub fn normalize(stats: &ChannelStats, affine: &Affine, eps: f64, f: &Tensor) -> Result<Tensor> {
    let (xhat, _) = standardize(stats, eps, f)?;
    apply_affine(affine, xhat)
}

pub(crate) fn apply_affine(affine: &Affine, mut xhat: Tensor) -> Result<Tensor> {
    let (b, c, hw) = xhat.bchw()?;
    if c != affine.channels() {
        return Err(Error::config("affine channel mismatch"));
    }
    let data = xhat.data_mut();
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * hw;
            for x in &mut data[base..base + hw] {
                *x = affine.scale[ch] * *x + affine.shift[ch];
            }
        }
    }
    Ok(xhat)
}
