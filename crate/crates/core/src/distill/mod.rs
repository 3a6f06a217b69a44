//! The training stages of the pipeline: masked-LM pretraining, student
//! construction and distillation, and token-classification fine-tuning.
//!
//! The student objective is `α·mlm + β·ce + γ·cse`: masked-token NLL,
//! soft-target cross entropy against the teacher at temperature `T`, and the
//! cosine distance between student and teacher hidden states. The teacher
//! runs eagerly outside the tape, so no gradient can reach it.

mod batch;
mod optim;
mod train;

pub use batch::{mlm_batches, tag_batches, MlmBatch, TagBatch, IGNORE_LABEL};
pub use optim::{adamw_step, AdamWConfig, OptimizerState};
pub use train::{
    mlm_accuracy, run_distillation, run_finetune_tokencls, run_mlm_pretrain, RunStatus, StepLog, TrainRun,
};

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::encoder::{self, EncoderOutput, Mode, ModelCheckpoint, ModelConfig, TokenBatch};
use crate::error::{bail, Result};
use crate::numcore::{func, Eager, Ops, Tape, Tensor, Var};

/// Loss weights, temperature and optimisation settings of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillRecipe {
    pub alpha: f32,
    pub beta: f32,
    pub gamma: f32,
    pub temperature: f32,
    pub optimizer: AdamWConfig,
    pub steps: usize,
    pub batch_size: usize,
    /// Micro-batches per optimizer step.
    pub grad_accum: usize,
    pub seed: u64,
    /// Soft-target loss over every real position instead of masked ones.
    pub ce_all_positions: bool,
    /// Also match student block `k` against teacher block `2k+1`.
    pub cse_layer_pairs: bool,
}

impl Default for DistillRecipe {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 5.0,
            gamma: 1.0,
            temperature: 2.0,
            optimizer: AdamWConfig::default(),
            steps: 200,
            batch_size: 16,
            grad_accum: 1,
            seed: 0,
            ce_all_positions: false,
            cse_layer_pairs: false,
        }
    }
}

impl DistillRecipe {
    /// Plain masked-LM training: `α = 1`, `β = γ = 0`.
    pub fn mlm_only() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            bail!(Parameter, "temperature must be positive, got {}", self.temperature);
        }
        let w = [self.alpha, self.beta, self.gamma];
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            bail!(Parameter, "loss weights must be finite and non-negative, got {w:?}");
        }
        if w.iter().all(|x| *x == 0.0) {
            bail!(Parameter, "at least one loss weight must be positive");
        }
        if self.batch_size == 0 || self.grad_accum == 0 {
            bail!(Parameter, "batch_size and grad_accum must be at least 1");
        }
        self.optimizer.validate()
    }
}

/// Halves the depth of `teacher`, keeping blocks `0, 2, 4, …` and every
/// non-block tensor unchanged.
pub fn init_student(teacher: &ModelCheckpoint) -> Result<ModelCheckpoint> {
    let depth = teacher.config.num_layers;
    if depth == 0 || depth % 2 != 0 {
        bail!(Parameter, "student init needs an even, non-zero teacher depth, got {depth}");
    }
    if teacher.weights.layers.len() != depth {
        bail!(Contract, "teacher has {} blocks but its config says {depth}", teacher.weights.layers.len());
    }
    let config = ModelConfig {
        num_layers: depth / 2,
        ..teacher.config.clone()
    };
    let mut weights = teacher.weights.clone();
    weights.layers = teacher.weights.layers.iter().step_by(2).cloned().collect();
    Ok(ModelCheckpoint {
        config,
        weights,
        vocab: teacher.vocab.clone(),
    })
}

/// Teacher activations for one batch, computed without a tape.
#[derive(Debug, Clone)]
pub struct TeacherTargets {
    /// `[rows × vocab]` MLM logits.
    pub logits: Tensor,
    pub final_hidden: Tensor,
    pub layers: Vec<Tensor>,
}

pub fn teacher_targets(teacher: &ModelCheckpoint, batch: &TokenBatch) -> Result<TeacherTargets> {
    let mut ops = Eager::new();
    let out = encoder::forward(&mut ops, &teacher.config, &teacher.weights, batch, Mode::Eval)?;
    let logits = encoder::mlm_logits(&mut ops, &teacher.weights, &out.final_hidden)?;
    Ok(TeacherTargets {
        logits,
        final_hidden: out.final_hidden,
        layers: out.layers,
    })
}

/// Taped scalar losses; `total` is the weighted sum of the other three.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    pub mlm: Var,
    pub ce: Var,
    pub cse: Var,
}

impl LossParts {
    /// `[total, mlm, ce, cse]` values.
    pub fn values(&self, tape: &Tape) -> Result<[f32; 4]> {
        Ok([
            tape.value_of(self.total).item()?,
            tape.value_of(self.mlm).item()?,
            tape.value_of(self.ce).item()?,
            tape.value_of(self.cse).item()?,
        ])
    }
}

/// Rows `rows` of a `[R × V]` matrix.
fn gather_rows(x: &Tensor, rows: &[usize]) -> Result<Tensor> {
    let (r, v) = x.dims2()?;
    let mut data = Vec::with_capacity(rows.len() * v);
    for &row in rows {
        if row >= r {
            bail!(Input, "row {row} outside {r} rows");
        }
        data.extend_from_slice(&x.data()[row * v..(row + 1) * v]);
    }
    Tensor::matrix(rows.len(), v, data)
}

/// Mean `1 − cos` over the real rows of `student` against the constant
/// `teacher` states.
fn cosine_over_real_rows(tape: &mut Tape, student: Var, teacher: &Tensor, batch: &TokenBatch) -> Result<Var> {
    if tape.value_of(student).shape() != teacher.shape() {
        bail!(
            Contract,
            "student states {:?} vs teacher states {:?}",
            tape.value_of(student).shape(),
            teacher.shape()
        );
    }
    if batch.lengths.is_none() {
        let t = tape.constant(teacher.clone());
        return tape.cosine_embedding_loss(student, t);
    }
    let h = teacher.last_dim();
    let total: usize = (0..batch.batch).map(|b| batch.len_of(b)).sum();
    let mut terms = Vec::with_capacity(batch.batch);
    for b in 0..batch.batch {
        let n = batch.len_of(b);
        let r0 = b * batch.seq_len;
        let s = tape.slice_block(&student, r0, n, 0, h)?;
        let t = tape.constant(func::slice_block(teacher, r0, n, 0, h)?);
        let c = tape.cosine_embedding_loss(s, t)?;
        terms.push((n as f32 / total as f32, c));
    }
    tape.weighted_sum(&terms)
}

/// Builds the student objective on `tape`.
///
/// `student` and `student_logits` must come from a forward pass over the
/// same `batch` the teacher saw; `mlm_targets` index flat `[B·L]` rows.
pub fn distill_loss(
    tape: &mut Tape,
    student: &EncoderOutput<Var>,
    student_logits: Var,
    teacher: &TeacherTargets,
    batch: &TokenBatch,
    mlm_targets: &[(usize, u32)],
    recipe: &DistillRecipe,
) -> Result<LossParts> {
    if tape.value_of(student_logits).shape() != teacher.logits.shape() {
        bail!(
            Contract,
            "student logits {:?} vs teacher logits {:?}",
            tape.value_of(student_logits).shape(),
            teacher.logits.shape()
        );
    }
    let mlm = tape.mlm_cross_entropy(student_logits, mlm_targets)?;

    let rows: Vec<usize> = if recipe.ce_all_positions {
        (0..batch.batch * batch.seq_len).filter(|&r| batch.is_real(r)).collect()
    } else {
        mlm_targets.iter().map(|t| t.0).collect()
    };
    let soft = func::softmax_t(&gather_rows(&teacher.logits, &rows)?, recipe.temperature)?;
    let ce = tape.cross_entropy_soft(student_logits, &rows, soft, recipe.temperature)?;

    let mut cse = cosine_over_real_rows(tape, student.final_hidden, &teacher.final_hidden, batch)?;
    if recipe.cse_layer_pairs && !student.layers.is_empty() {
        let mut terms = Vec::with_capacity(student.layers.len() + 1);
        let w = 1.0 / (student.layers.len() + 1) as f32;
        terms.push((w, cse));
        for (k, &s) in student.layers.iter().enumerate() {
            let Some(t) = teacher.layers.get(2 * k + 1) else {
                bail!(Contract, "no teacher block {} to pair with student block {k}", 2 * k + 1);
            };
            terms.push((w, cosine_over_real_rows(tape, s, t, batch)?));
        }
        cse = tape.weighted_sum(&terms)?;
    }

    let total = tape.weighted_sum(&[(recipe.alpha, mlm), (recipe.beta, ce), (recipe.gamma, cse)])?;
    Ok(LossParts { total, mlm, ce, cse })
}
