use super::network::{Layer, Network, Trainable};
use super::Tensor;
use crate::error::{Error, Result};
use crate::norm::{apply_affine, standard_batch_stats, standardize, Affine, ChannelStats, NormState};

/// How normalization slots pick their statistics.
#[derive(Clone, Copy, Debug)]
pub enum Mode<'a> {
    /// Use each state's active statistics; no state changes.
    Eval,
    /// Update each traversed state with the slot input (and these
    /// pseudo-labels), then normalize with the updated statistics.
    TrainStats(&'a [usize]),
    /// Normalize with the current batch moments; no state changes. Batches
    /// with a single position fall back to the running statistics.
    BatchStats,
}

#[derive(Clone, Debug)]
struct NormTrace {
    xhat: Tensor,
    inv_std: Vec<f64>,
    stats: ChannelStats,
}

/// Intermediate values recorded by [`forward`] for [`backward`].
#[derive(Clone, Debug)]
pub struct Trace {
    layer_inputs: Vec<Tensor>,
    norms: Vec<NormTrace>,
    layer_count: usize,
    in_dim: usize,
}

impl Trace {
    /// Statistics a normalization slot used in this pass.
    pub fn norm_stats(&self, slot: usize) -> &ChannelStats {
        &self.norms[slot].stats
    }

    pub fn batch(&self) -> usize {
        self.layer_inputs.first().map_or(0, Tensor::rows)
    }
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub logits: Tensor,
    pub trace: Trace,
}

fn check_input(net: &Network, states_len: usize, affines: Option<&[Affine]>, x: &Tensor) -> Result<()> {
    if x.shape().len() != 2 || x.cols() != net.in_dim() {
        return Err(Error::config(format!(
            "input shape {:?} does not match network input dimension {}",
            x.shape(),
            net.in_dim()
        )));
    }
    if states_len != net.norm_slots() {
        return Err(Error::config(format!(
            "{} normalization states for {} slots",
            states_len,
            net.norm_slots()
        )));
    }
    if let Some(a) = affines {
        if a.len() != net.norm_slots() {
            return Err(Error::config("affine override count mismatch"));
        }
    }
    if !x.all_finite() {
        return Err(Error::NonFinite("network input".into()));
    }
    Ok(())
}

fn run(
    net: &Network,
    affines: Option<&[Affine]>,
    x: &Tensor,
    eps: &[f64],
    mut stats_for: impl FnMut(usize, &Tensor) -> Result<ChannelStats>,
) -> Result<ForwardOutput> {
    let mut h = x.clone();
    let mut layer_inputs = Vec::with_capacity(net.layers().len());
    let mut norms = Vec::with_capacity(eps.len());
    let mut slot = 0;
    for layer in net.layers() {
        let next = match layer {
            Layer::Dense(d) => d.apply(&h),
            Layer::Relu => {
                let mut y = h.clone();
                y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                y
            }
            Layer::Norm(own) => {
                let affine = affines.map_or(own, |a| &a[slot]);
                let stats = stats_for(slot, &h)?;
                let (xhat, inv_std) = standardize(&stats, eps[slot], &h)?;
                let y = apply_affine(affine, xhat.clone())?;
                norms.push(NormTrace { xhat, inv_std, stats });
                slot += 1;
                y
            }
        };
        layer_inputs.push(std::mem::replace(&mut h, next));
    }
    Ok(ForwardOutput {
        logits: h,
        trace: Trace { layer_inputs, norms, layer_count: net.layers().len(), in_dim: net.in_dim() },
    })
}

/// Forward pass using the network's own affines.
pub fn forward(net: &Network, states: &mut [NormState], x: &Tensor, mode: Mode<'_>) -> Result<ForwardOutput> {
    forward_with(net, None, states, x, mode)
}

/// Forward pass; `affines` (one per slot) overrides the network's own.
pub fn forward_with(
    net: &Network,
    affines: Option<&[Affine]>,
    states: &mut [NormState],
    x: &Tensor,
    mode: Mode<'_>,
) -> Result<ForwardOutput> {
    check_input(net, states.len(), affines, x)?;
    let eps: Vec<f64> = states.iter().map(NormState::eps).collect();
    match mode {
        Mode::Eval => run(net, affines, x, &eps, |slot, _| Ok(states[slot].active_stats().clone())),
        Mode::BatchStats => run(net, affines, x, &eps, |slot, h| batch_or_running(&states[slot], h)),
        Mode::TrainStats(labels) => {
            if labels.len() != x.rows() {
                return Err(Error::config(format!(
                    "{} pseudo-labels for batch of {}",
                    labels.len(),
                    x.rows()
                )));
            }
            if let Some(&bad) = labels.iter().find(|&&y| y >= net.out_dim()) {
                return Err(Error::config(format!("pseudo-label {bad} outside [0, {})", net.out_dim())));
            }
            run(net, affines, x, &eps, |slot, h| {
                states[slot].update(h, Some(labels))?;
                Ok(states[slot].active_stats().clone())
            })
        }
    }
}

/// Eval-mode pass over borrowed states.
pub fn forward_eval(net: &Network, states: &[NormState], x: &Tensor) -> Result<ForwardOutput> {
    forward_eval_with(net, None, states, x)
}

pub fn forward_eval_with(
    net: &Network,
    affines: Option<&[Affine]>,
    states: &[NormState],
    x: &Tensor,
) -> Result<ForwardOutput> {
    check_input(net, states.len(), affines, x)?;
    let eps: Vec<f64> = states.iter().map(NormState::eps).collect();
    run(net, affines, x, &eps, |slot, _| Ok(states[slot].active_stats().clone()))
}

fn batch_or_running(state: &NormState, h: &Tensor) -> Result<ChannelStats> {
    let (b, _, hw) = h.bchw()?;
    if b * hw < 2 {
        log::warn!("batch statistics undefined for a single position; using running statistics");
        return Ok(state.active_stats().clone());
    }
    standard_batch_stats(h)
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerGrad {
    Dense { weights: Vec<f64>, bias: Vec<f64> },
    Norm { scale: Vec<f64>, shift: Vec<f64> },
    None,
}

/// Parameter gradients, one entry per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros(net: &Network, trainable: Trainable) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| match l {
                Layer::Dense(d) if trainable == Trainable::All => LayerGrad::Dense {
                    weights: vec![0.0; d.weights.len()],
                    bias: vec![0.0; d.bias.len()],
                },
                Layer::Norm(a) => LayerGrad::Norm { scale: vec![0.0; a.channels()], shift: vec![0.0; a.channels()] },
                _ => LayerGrad::None,
            })
            .collect();
        Gradients { layers }
    }

    /// Gradient slices in [`Network::params_mut`] order.
    pub fn flat(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for g in &self.layers {
            match g {
                LayerGrad::Dense { weights, bias } => {
                    out.push(weights);
                    out.push(bias);
                }
                LayerGrad::Norm { scale, shift } => {
                    out.push(scale);
                    out.push(shift);
                }
                LayerGrad::None => {}
            }
        }
        out
    }

    /// `(d scale, d shift)` of normalization slot `slot`.
    pub fn affine(&self, slot: usize) -> Option<(&[f64], &[f64])> {
        self.layers
            .iter()
            .filter_map(|g| match g {
                LayerGrad::Norm { scale, shift } => Some((scale.as_slice(), shift.as_slice())),
                _ => None,
            })
            .nth(slot)
    }

    pub fn has_dense(&self) -> bool {
        self.layers.iter().any(|g| matches!(g, LayerGrad::Dense { .. }))
    }

    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::config("gradient layout mismatch"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (LayerGrad::Dense { weights: w, bias: bb }, LayerGrad::Dense { weights: w2, bias: b2 }) => {
                    w.iter_mut().zip(w2).for_each(|(x, y)| *x += factor * y);
                    bb.iter_mut().zip(b2).for_each(|(x, y)| *x += factor * y);
                }
                (LayerGrad::Norm { scale: s, shift: t }, LayerGrad::Norm { scale: s2, shift: t2 }) => {
                    s.iter_mut().zip(s2).for_each(|(x, y)| *x += factor * y);
                    t.iter_mut().zip(t2).for_each(|(x, y)| *x += factor * y);
                }
                (LayerGrad::None, LayerGrad::None) => {}
                _ => return Err(Error::config("gradient layout mismatch")),
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.flat().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.flat().iter().flat_map(|s| s.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Backpropagates `dlogits` through a recorded pass. Normalization
/// statistics are constants; the network's own affines are used.
pub fn backward(net: &Network, trace: &Trace, dlogits: &Tensor, trainable: Trainable) -> Result<Gradients> {
    if trace.layer_count != net.layers().len() || trace.in_dim != net.in_dim() || trace.norms.len() != net.norm_slots() {
        return Err(Error::config("trace was not produced by this network"));
    }
    let b = trace.batch();
    if dlogits.rows() != b || dlogits.cols() != net.out_dim() {
        return Err(Error::config(format!(
            "dlogits shape {:?} does not match batch {b} × {}",
            dlogits.shape(),
            net.out_dim()
        )));
    }
    let mut grads = Gradients::zeros(net, trainable);
    let mut g = dlogits.clone();
    let mut slot = net.norm_slots();
    for (i, layer) in net.layers().iter().enumerate().rev() {
        let input = &trace.layer_inputs[i];
        g = match layer {
            Layer::Dense(d) => {
                let (n_in, n_out) = (d.in_dim(), d.out_dim());
                if let LayerGrad::Dense { weights, bias } = &mut grads.layers[i] {
                    for (gr, xr) in g.iter_rows().zip(input.iter_rows()) {
                        for j in 0..n_out {
                            bias[j] += gr[j];
                            let wrow = &mut weights[j * n_in..(j + 1) * n_in];
                            wrow.iter_mut().zip(xr).for_each(|(w, x)| *w += gr[j] * x);
                        }
                    }
                }
                let mut dx = vec![0.0; b * n_in];
                for (gr, dxr) in g.iter_rows().zip(dx.chunks_exact_mut(n_in)) {
                    for j in 0..n_out {
                        let wrow = &d.weights.data()[j * n_in..(j + 1) * n_in];
                        dxr.iter_mut().zip(wrow).for_each(|(o, w)| *o += gr[j] * w);
                    }
                }
                Tensor::matrix(b, n_in, dx)?
            }
            Layer::Relu => {
                let mut dx = g;
                dx.data_mut().iter_mut().zip(input.data()).for_each(|(d, x)| {
                    if *x <= 0.0 {
                        *d = 0.0;
                    }
                });
                dx
            }
            Layer::Norm(affine) => {
                slot -= 1;
                let nt = &trace.norms[slot];
                let c = affine.channels();
                if let LayerGrad::Norm { scale, shift } = &mut grads.layers[i] {
                    for (gr, xr) in g.iter_rows().zip(nt.xhat.iter_rows()) {
                        for ch in 0..c {
                            scale[ch] += gr[ch] * xr[ch];
                            shift[ch] += gr[ch];
                        }
                    }
                }
                let mut dx = g;
                for row in dx.data_mut().chunks_exact_mut(c) {
                    for ch in 0..c {
                        row[ch] *= affine.scale[ch] * nt.inv_std[ch];
                    }
                }
                dx
            }
        };
    }
    Ok(grads)
}
