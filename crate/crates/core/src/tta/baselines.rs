use crate::error::Result;
use crate::nn::{
    backward, forward, forward_eval, mean_cross_entropy, mean_entropy, softmax, Adam, Mode, Network, SourceModel,
    Tensor, Trainable,
};
use crate::norm::NormState;

/// Outcome of a gradient-based baseline step.
#[derive(Clone, Debug)]
pub struct BaselineStep {
    pub predictions: Vec<usize>,
    pub loss: f64,
    pub updated: bool,
}

/// Frozen source model.
pub fn test_step(model: &SourceModel, x: &Tensor) -> Result<Vec<usize>> {
    model.predict(x)
}

/// Current-batch statistics, no parameter updates.
pub fn bn_stat_step(net: &Network, states: &mut [NormState], x: &Tensor) -> Result<Vec<usize>> {
    Ok(forward(net, states, x, Mode::BatchStats)?.logits.argmax_rows())
}

/// Predicts with the current running statistics, then updates them (robust
/// or balanced). Balanced rows are keyed by those predictions.
pub fn stats_only_step(net: &Network, states: &mut [NormState], x: &Tensor) -> Result<Vec<usize>> {
    let predictions = forward_eval(net, states, x)?.logits.argmax_rows();
    forward(net, states, x, Mode::TrainStats(&predictions))?;
    Ok(predictions)
}

fn gradient_step(
    net: &mut Network,
    states: &mut [NormState],
    adam: &mut Adam,
    x: &Tensor,
    objective: impl Fn(&Tensor) -> Result<(f64, Tensor)>,
) -> Result<BaselineStep> {
    let out = forward(net, states, x, Mode::BatchStats)?;
    let probs = softmax(&out.logits);
    let predictions = probs.argmax_rows();
    let (loss, dlogits) = objective(&probs)?;
    let mut step = BaselineStep { predictions, loss, updated: false };
    if !loss.is_finite() {
        log::warn!("non-finite baseline loss {loss}; update skipped");
        return Ok(step);
    }
    let grads = backward(net, &out.trace, &dlogits, Trainable::NormAffinesOnly)?;
    match adam.step_network(net, &grads, Trainable::NormAffinesOnly) {
        Ok(()) => step.updated = true,
        Err(crate::Error::NonFinite(msg)) => log::warn!("{msg}"),
        Err(e) => return Err(e),
    }
    Ok(step)
}

/// Pseudo-labelling: cross-entropy against the model's own argmax.
pub fn pl_step(net: &mut Network, states: &mut [NormState], adam: &mut Adam, x: &Tensor) -> Result<BaselineStep> {
    gradient_step(net, states, adam, x, |p| mean_cross_entropy(p, &p.argmax_rows()))
}

/// Entropy minimization.
pub fn tent_step(net: &mut Network, states: &mut [NormState], adam: &mut Adam, x: &Tensor) -> Result<BaselineStep> {
    gradient_step(net, states, adam, x, |p| Ok(mean_entropy(p)))
}
