use rand::seq::SliceRandom;

use super::forward::{backward, forward, forward_eval, Mode};
use super::loss::{mean_cross_entropy, softmax};
use super::network::{Network, Trainable};
use super::{Adam, Tensor};
use crate::error::{Error, Result};
use crate::norm::{init_norm_states, ChannelStats, NormState, NormVariant};
use crate::rng::{self, Rng};

/// Feature rows with one class label each.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub features: Tensor,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(features: Tensor, labels: Vec<usize>) -> Result<Self> {
        if features.shape().len() != 2 || features.rows() != labels.len() {
            return Err(Error::config(format!(
                "{} labels for features of shape {:?}",
                labels.len(),
                features.shape()
            )));
        }
        Ok(LabeledSet { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Result<LabeledSet> {
        Ok(LabeledSet {
            features: self.features.select_rows(idx)?,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        })
    }

    /// Seeded shuffle, then the last `fraction` of rows become the hold-out.
    pub fn split_holdout(&self, fraction: f64, rng: &mut Rng) -> Result<(LabeledSet, LabeledSet)> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        let n_hold = ((self.len() as f64) * fraction).round() as usize;
        if n_hold == 0 || n_hold >= self.len() {
            return Err(Error::config(format!("hold-out fraction {fraction} leaves an empty split")));
        }
        let (train, hold) = idx.split_at(self.len() - n_hold);
        Ok((self.subset(train)?, self.subset(hold)?))
    }
}

/// A pretrained network together with the running statistics of each
/// normalization slot.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceModel {
    pub net: Network,
    pub stats: Vec<ChannelStats>,
}

impl SourceModel {
    pub fn new(net: Network, stats: Vec<ChannelStats>) -> Result<Self> {
        let channels = net.norm_channels();
        if channels.len() != stats.len() || channels.iter().zip(&stats).any(|(c, s)| *c != s.channels()) {
            return Err(Error::config("source statistics do not match the network's normalization slots"));
        }
        Ok(SourceModel { net, stats })
    }

    pub fn classes(&self) -> usize {
        self.net.out_dim()
    }

    /// Fresh normalization states of the given variant.
    pub fn states(&self, variant: NormVariant) -> Result<Vec<NormState>> {
        init_norm_states(&self.stats, variant, self.classes())
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let states = self.states(NormVariant::Standard { momentum: 0.0 })?;
        Ok(forward_eval(&self.net, &states, x)?.logits.argmax_rows())
    }

    pub fn accuracy(&self, data: &LabeledSet) -> Result<f64> {
        let pred = self.predict(&data.features)?;
        let hits = pred.iter().zip(&data.labels).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / data.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig { epochs: 30, lr: 1e-2, batch_size: 64, seed: 0 }
    }
}

/// Supervised source training of every parameter with Adam.
///
/// Normalization statistics are treated as constants: at the start of every
/// epoch (and once at the end) each slot's statistics are set to the exact
/// population moments of its input over the whole training set.
pub fn pretrain(net: Network, data: &LabeledSet, cfg: &PretrainConfig) -> Result<SourceModel> {
    if data.is_empty() {
        return Err(Error::Empty("pretraining set"));
    }
    if data.dim() != net.in_dim() {
        return Err(Error::config(format!(
            "data has {} features, network expects {}",
            data.dim(),
            net.in_dim()
        )));
    }
    if let Some(&bad) = data.labels.iter().find(|&&y| y >= net.out_dim()) {
        return Err(Error::config(format!("label {bad} outside [0, {})", net.out_dim())));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let stats = net.norm_channels().into_iter().map(ChannelStats::unit).collect();
    let mut model = SourceModel::new(net, stats)?;
    if cfg.epochs == 0 {
        return Ok(model);
    }

    let mut rng = rng::child(cfg.seed, "pretrain/shuffle");
    let mut adam = Adam::new(cfg.lr);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        refresh_population_stats(&mut model, &data.features)?;
        let states = model.states(NormVariant::Standard { momentum: 0.0 })?;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.subset(chunk)?;
            let out = forward_eval(&model.net, &states, &batch.features)?;
            let probs = softmax(&out.logits);
            let (loss, dlogits) = mean_cross_entropy(&probs, &batch.labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            epoch_loss += loss * chunk.len() as f64;
            let grads = backward(&model.net, &out.trace, &dlogits, Trainable::All)?;
            adam.step_network(&mut model.net, &grads, Trainable::All)
                .map_err(|_| Error::Diverged { epoch, loss: f64::NAN })?;
        }
        log::debug!("pretrain epoch {epoch}: mean loss {:.5}", epoch_loss / data.len() as f64);
    }
    refresh_population_stats(&mut model, &data.features)?;
    Ok(model)
}

fn refresh_population_stats(model: &mut SourceModel, x: &Tensor) -> Result<()> {
    let mut states = model.states(NormVariant::Standard { momentum: 0.0 })?;
    let out = forward(&model.net, &mut states, x, Mode::BatchStats)?;
    model.stats = (0..model.stats.len()).map(|s| out.trace.norm_stats(s).clone()).collect();
    Ok(())
}
