use super::augment::augment;
use super::hyper::TribeHyperParams;
use super::losses::{anchored_objective, gate_mask, self_training_objective};
use crate::error::Result;
use crate::nn::{backward, forward, forward_eval, forward_with, softmax, Adam, Mode, Network, SourceModel, Tensor, Trainable};
use crate::norm::{Affine, NormState};
use crate::rng::Rng;

/// Teacher, student and anchor sharing one network.
///
/// Teacher and student share every weight including the normalization
/// affines but keep separate balanced statistics. The anchor keeps frozen
/// source affines and its own balanced statistics.
#[derive(Clone, Debug)]
pub struct TriNet {
    net: Network,
    teacher: Vec<NormState>,
    student: Vec<NormState>,
    anchor: Vec<NormState>,
    anchor_affines: Vec<Affine>,
    adam: Adam,
}

/// What one adaptation step observed and did.
#[derive(Clone, Debug)]
pub struct StepOutput {
    /// Teacher predictions, computed before any update.
    pub predictions: Vec<usize>,
    pub teacher_probs: Tensor,
    pub mask: Vec<bool>,
    pub self_training: f64,
    pub anchored: f64,
    /// Whether the optimizer moved the affines.
    pub updated: bool,
}

impl TriNet {
    pub fn new(source: &SourceModel, hp: &TribeHyperParams) -> Result<Self> {
        hp.validate()?;
        let states = source.states(hp.balanced_variant())?;
        Ok(TriNet {
            net: source.net.clone(),
            teacher: states.clone(),
            student: states.clone(),
            anchor: states,
            anchor_affines: source.net.affines().cloned().collect(),
            adam: Adam::new(hp.lr),
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn teacher_states(&self) -> &[NormState] {
        &self.teacher
    }

    pub fn student_states(&self) -> &[NormState] {
        &self.student
    }

    pub fn anchor_states(&self) -> &[NormState] {
        &self.anchor
    }

    pub fn anchor_affines(&self) -> &[Affine] {
        &self.anchor_affines
    }

    /// Predict, refresh all three sets of statistics with the teacher's
    /// pseudo-labels, then take one optimizer step on the shared affines.
    pub fn step(&mut self, x: &Tensor, hp: &TribeHyperParams, rng: &mut Rng) -> Result<StepOutput> {
        let p_infer = softmax(&forward_eval(&self.net, &self.teacher, x)?.logits);
        let predictions = p_infer.argmax_rows();
        let mask = gate_mask(&p_infer, hp.h0);

        let teacher = forward(&self.net, &mut self.teacher, x, Mode::TrainStats(&predictions))?;
        let p_teacher = softmax(&teacher.logits);
        let anchor =
            forward_with(&self.net, Some(&self.anchor_affines), &mut self.anchor, x, Mode::TrainStats(&predictions))?;
        let p_anchor = softmax(&anchor.logits);
        let strong = augment(x, &hp.augment, rng);
        let student = forward(&self.net, &mut self.student, &strong, Mode::TrainStats(&predictions))?;
        let p_student = softmax(&student.logits);

        let (self_training, dstudent) = self_training_objective(&predictions, &mask, &p_student);
        let (anchored, dteacher) = anchored_objective(&p_teacher, &p_anchor, &mask);
        let mut out =
            StepOutput { predictions, teacher_probs: p_infer, mask, self_training, anchored, updated: false };

        let loss = self_training + hp.lambda_anc * anchored;
        if !loss.is_finite() {
            log::warn!("non-finite tri-net loss {loss}; update skipped");
            return Ok(out);
        }
        if !out.mask.contains(&true) {
            return Ok(out);
        }
        let mut grads = backward(&self.net, &student.trace, &dstudent, Trainable::NormAffinesOnly)?;
        if hp.lambda_anc != 0.0 {
            let anchor_grads = backward(&self.net, &teacher.trace, &dteacher, Trainable::NormAffinesOnly)?;
            grads.add_scaled(&anchor_grads, hp.lambda_anc)?;
        }
        match self.adam.step_network(&mut self.net, &grads, Trainable::NormAffinesOnly) {
            Ok(()) => out.updated = true,
            Err(crate::Error::NonFinite(msg)) => log::warn!("{msg}"),
            Err(e) => return Err(e),
        }
        Ok(out)
    }
}

/// Free-function form of [`TriNet::step`].
pub fn tribe_step(tri: &mut TriNet, x: &Tensor, hp: &TribeHyperParams, rng: &mut Rng) -> Result<StepOutput> {
    tri.step(x, hp, rng)
}
