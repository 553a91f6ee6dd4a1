use crate::nn::{row_entropy, softmax_backward, Tensor, PROB_FLOOR};

/// `mask_b = H(p_b) < h0 · ln Kc`.
pub fn gate_mask(p_teacher: &Tensor, h0: f64) -> Vec<bool> {
    let threshold = h0 * (p_teacher.cols() as f64).ln();
    p_teacher.iter_rows().map(|p| row_entropy(p) < threshold).collect()
}

/// Gated self-training loss: masked mean of `CE(onehot(argmax p_t), p_s)`.
/// Returns the loss and the gate; an empty gate gives 0.
pub fn self_training_loss(p_teacher: &Tensor, p_student: &Tensor, h0: f64) -> (f64, Vec<bool>) {
    let mask = gate_mask(p_teacher, h0);
    let pseudo = p_teacher.argmax_rows();
    (self_training_objective(&pseudo, &mask, p_student).0, mask)
}

/// Loss and student-logit gradient for fixed pseudo-labels and gate.
pub fn self_training_objective(pseudo: &[usize], mask: &[bool], p_student: &Tensor) -> (f64, Tensor) {
    let gated = mask.iter().filter(|&&m| m).count();
    let mut grad = Tensor::zeros(p_student.shape().to_vec());
    if gated == 0 {
        return (0.0, grad);
    }
    let m = gated as f64;
    let k = p_student.cols();
    let mut loss = 0.0;
    for (b, (p, g)) in p_student.iter_rows().zip(grad.data_mut().chunks_exact_mut(k)).enumerate() {
        if !mask[b] {
            continue;
        }
        loss -= p[pseudo[b]].max(PROB_FLOOR).ln();
        for (j, gj) in g.iter_mut().enumerate() {
            let target = if j == pseudo[b] { 1.0 } else { 0.0 };
            *gj = (p[j] - target) / m;
        }
    }
    (loss / m, grad)
}

/// Gated mean squared teacher/anchor posterior distance, divided by `Kc`.
pub fn anchored_loss(p_teacher: &Tensor, p_anchor: &Tensor, mask: &[bool]) -> f64 {
    anchored_objective(p_teacher, p_anchor, mask).0
}

/// Loss and teacher-logit gradient; the anchor is a constant.
pub fn anchored_objective(p_teacher: &Tensor, p_anchor: &Tensor, mask: &[bool]) -> (f64, Tensor) {
    let gated = mask.iter().filter(|&&m| m).count();
    let mut dprobs = Tensor::zeros(p_teacher.shape().to_vec());
    if gated == 0 {
        return (0.0, dprobs);
    }
    let k = p_teacher.cols();
    let denom = k as f64 * gated as f64;
    let mut loss = 0.0;
    for (b, ((pt, pa), d)) in
        p_teacher.iter_rows().zip(p_anchor.iter_rows()).zip(dprobs.data_mut().chunks_exact_mut(k)).enumerate()
    {
        if !mask[b] {
            continue;
        }
        for j in 0..k {
            let diff = pt[j] - pa[j];
            loss += diff * diff;
            d[j] = 2.0 * diff / denom;
        }
    }
    (loss / denom, softmax_backward(p_teacher, &dprobs))
}
