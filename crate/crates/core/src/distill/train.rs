use alloc::vec::Vec;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{adamw_step, distill_loss, init_student, teacher_targets, DistillRecipe, MlmBatch, OptimizerState, TagBatch};
use crate::encoder::{self, Mode, ModelCheckpoint, ModelWeights};
use crate::error::{bail, Result};
use crate::evalkit;
use crate::numcore::{kernels, Eager, Tape, Tensor, Var};
use crate::rng::{self, streams, Rng};

/// Losses of one optimizer step, averaged over its micro-batches.
/// Fine-tuning reports its tag loss as `total` with the other columns zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    #[serde(rename = "loss_total")]
    pub total: f32,
    #[serde(rename = "loss_mlm")]
    pub mlm: f32,
    #[serde(rename = "loss_ce")]
    pub ce: f32,
    #[serde(rename = "loss_cse")]
    pub cse: f32,
    pub lr: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum RunStatus {
    Complete,
    /// The batch stream ran dry after `steps_done` full steps.
    Incomplete { steps_done: usize },
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub checkpoint: ModelCheckpoint,
    pub trajectory: Vec<StepLog>,
    pub status: RunStatus,
}

/// Shared optimisation loop. `loss` builds the objective for one
/// micro-batch and returns it with its `[total, mlm, ce, cse]` values.
fn train<B>(
    mut ckpt: ModelCheckpoint,
    batches: &mut dyn Iterator<Item = Result<B>>,
    recipe: &DistillRecipe,
    mut loss: impl FnMut(&mut Tape, &ModelWeights<Var>, &B) -> Result<(Var, [f32; 4])>,
) -> Result<TrainRun> {
    recipe.validate()?;
    ckpt.validate()?;
    let mut state = OptimizerState::for_weights(&ckpt.weights);
    let mut dropout = rng::stream(recipe.seed, streams::DROPOUT);
    let mut trajectory = Vec::with_capacity(recipe.steps);
    for step in 0..recipe.steps {
        let mut grads: Vec<Tensor> = ckpt.weights.named().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        let mut sums = [0.0f32; 4];
        for _ in 0..recipe.grad_accum {
            let Some(batch) = batches.next() else {
                return Ok(TrainRun {
                    checkpoint: ckpt,
                    trajectory,
                    status: RunStatus::Incomplete { steps_done: step },
                });
            };
            let batch = batch?;
            let mut tape = Tape::with_dropout(Rng::from_rng(&mut dropout));
            let vars = ckpt.weights.map(|_, t| tape.param(t.clone()));
            let (total, parts) = loss(&mut tape, &vars, &batch)?;
            if !parts[0].is_finite() {
                bail!(Numeric, "loss became non-finite at step {}", step + 1);
            }
            tape.backward(total)?;
            for (g, (_, v)) in grads.iter_mut().zip(vars.named()) {
                if let Some(gv) = tape.grad(*v) {
                    kernels::add_assign(g.data_mut(), gv.data());
                }
            }
            for (s, p) in sums.iter_mut().zip(parts) {
                *s += p;
            }
        }
        let k = recipe.grad_accum as f32;
        if recipe.grad_accum > 1 {
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|x| *x /= k);
            }
        }
        let lr = recipe.optimizer.lr_at(step, recipe.steps);
        adamw_step(&mut ckpt.weights.values_mut(), &grads, &mut state, &recipe.optimizer, lr)?;
        trajectory.push(StepLog {
            step: step + 1,
            total: sums[0] / k,
            mlm: sums[1] / k,
            ce: sums[2] / k,
            cse: sums[3] / k,
            lr,
        });
    }
    Ok(TrainRun {
        checkpoint: ckpt,
        trajectory,
        status: RunStatus::Complete,
    })
}

/// Masked-LM training of `ckpt` with loss `α·mlm`.
pub fn run_mlm_pretrain(
    ckpt: ModelCheckpoint,
    batches: impl Iterator<Item = Result<MlmBatch>>,
    recipe: &DistillRecipe,
) -> Result<TrainRun> {
    let config = ckpt.config.clone();
    let mut batches = batches;
    train(ckpt, &mut batches, recipe, |tape, w, b: &MlmBatch| {
        let out = encoder::forward(tape, &config, w, &b.tokens, Mode::Train)?;
        let logits = encoder::mlm_logits(tape, w, &out.final_hidden)?;
        let mlm = tape.mlm_cross_entropy(logits, &b.targets)?;
        let total = tape.weighted_sum(&[(recipe.alpha, mlm)])?;
        let (t, m) = (tape.value_of(total).item()?, tape.value_of(mlm).item()?);
        Ok((total, [t, m, 0.0, 0.0]))
    })
}

/// Initialises a half-depth student from `teacher` and trains it on the
/// full student objective. The teacher only ever runs eagerly.
pub fn run_distillation(
    teacher: &ModelCheckpoint,
    batches: impl Iterator<Item = Result<MlmBatch>>,
    recipe: &DistillRecipe,
) -> Result<TrainRun> {
    teacher.validate()?;
    let student = init_student(teacher)?;
    let config = student.config.clone();
    let mut batches = batches;
    train(student, &mut batches, recipe, |tape, w, b: &MlmBatch| {
        let targets = teacher_targets(teacher, &b.tokens)?;
        let out = encoder::forward(tape, &config, w, &b.tokens, Mode::Train)?;
        let logits = encoder::mlm_logits(tape, w, &out.final_hidden)?;
        let parts = distill_loss(tape, &out, logits, &targets, &b.tokens, &b.targets, recipe)?;
        Ok((parts.total, parts.values(tape)?))
    })
}

/// Token-classification training: mean cross entropy of the tag head over
/// supervised positions.
pub fn run_finetune_tokencls(
    ckpt: ModelCheckpoint,
    batches: impl Iterator<Item = Result<TagBatch>>,
    recipe: &DistillRecipe,
) -> Result<TrainRun> {
    let config = ckpt.config.clone();
    let mut batches = batches;
    train(ckpt, &mut batches, recipe, |tape, w, b: &TagBatch| {
        if let Some(&bad) = b.labels.iter().find(|&&l| l != super::IGNORE_LABEL && l as usize >= config.num_tags) {
            bail!(Input, "tag label {bad} outside the {}-tag head", config.num_tags);
        }
        let out = encoder::forward(tape, &config, w, &b.tokens, Mode::Train)?;
        let logits = encoder::token_classification_logits(tape, w, &out.final_hidden)?;
        let loss = tape.mlm_cross_entropy(logits, &b.targets())?;
        let v = tape.value_of(loss).item()?;
        Ok((loss, [v, 0.0, 0.0, 0.0]))
    })
}

/// Top-1 accuracy of `ckpt` at the masked positions of `batches`.
pub fn mlm_accuracy<'a>(ckpt: &ModelCheckpoint, batches: impl IntoIterator<Item = &'a MlmBatch>) -> Result<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for b in batches {
        let mut ops = Eager::new();
        let out = encoder::forward(&mut ops, &ckpt.config, &ckpt.weights, &b.tokens, Mode::Eval)?;
        let logits = encoder::mlm_logits(&mut ops, &ckpt.weights, &out.final_hidden)?;
        let (h, t) = evalkit::argmax_hits(&logits, &b.targets)?;
        hits += h;
        total += t;
    }
    if total == 0 {
        bail!(Input, "no masked positions to score");
    }
    Ok(hits as f64 / total as f64)
}
