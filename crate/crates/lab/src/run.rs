//! Pipeline stages over files. Each function is one CLI subcommand minus
//! argument parsing; the first line written to `log` is the resolved
//! configuration.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use eadl_core::bench::{time_inference_with, BenchConfig, BenchResult};
use eadl_core::convert::{self, ConvertPlan, PositionExtension};
use eadl_core::corpus::{
    filter_corpus, synth_mlm, synth_ner, tokenize_pack, FilterPolicy, FilterReport, MaskedSequence, TaggedSentence,
    Vocab,
};
use eadl_core::distill::{self, mlm_batches, tag_batches, TrainRun};
use eadl_core::encoder::{ModelCheckpoint, TokenBatch};
use eadl_core::evalkit::{self, NerScores, StdMode};
use eadl_core::ner::Tag;
use eadl_core::Error as CoreError;
use serde::Serialize;
use serde_json::json;

use crate::checkpoint;
use crate::config::{canonical_json, DataSection, RunConfig, SynthSection};
use crate::error::{LabError, LabResult};
use crate::io;

/// Writes the resolved configuration as the first log line.
pub fn log_config<T: Serialize>(log: &mut dyn Write, command: &str, resolved: &T) {
    #[derive(Serialize)]
    struct Entry<'a, T> {
        command: &'a str,
        resolved: &'a T,
    }
    let line = canonical_json(&Entry { command, resolved });
    let _ = writeln!(log, "config {line}");
}

/// JSON value of `x` with `f32` fields kept in shortest form.
fn val<T: Serialize>(x: &T) -> serde_json::Value {
    serde_json::from_str(&serde_json::to_string(x).expect("serialises")).expect("round trip")
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Default trajectory location: the checkpoint path with a `.csv` extension.
pub fn trajectory_path(out: &Path) -> PathBuf {
    out.with_extension("csv")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    MlmToy,
    NerToy,
}

pub fn synth(kind: SynthKind, size: usize, seed: u64, cfg: &SynthSection, out: &Path, log: &mut dyn Write) -> LabResult<()> {
    log_config(
        log,
        "synth",
        &json!({ "kind": kind, "size": size, "seed": seed, "synth": cfg, "out": path_str(out) }),
    );
    if size == 0 {
        return Err(LabError::Usage("--size must be at least 1".into()));
    }
    match kind {
        SynthKind::MlmToy => io::write_corpus(out, &synth_mlm(size, seed, &cfg.mlm)?),
        SynthKind::NerToy => io::write_conll_file(out, &synth_ner(size, seed, &cfg.ner)?),
    }
}

fn corpus_texts(path: &Path) -> LabResult<Vec<String>> {
    Ok(io::read_corpus(path)?.into_iter().map(|r| r.text).collect())
}

/// Packs `texts` into masked training sequences.
pub fn pack(texts: &[String], vocab: &Vocab, data: &DataSection, max_positions: usize, seed: u64) -> LabResult<Vec<MaskedSequence>> {
    if data.seq_len > max_positions {
        return Err(CoreError::Length {
            len: data.seq_len,
            max: max_positions,
        }
        .into());
    }
    Ok(tokenize_pack(texts, vocab, data.seq_len, &data.mask, seed)?)
}

fn checkpoint_vocab(ckpt: &ModelCheckpoint) -> LabResult<Vocab> {
    match &ckpt.vocab {
        Some(t) => Ok(Vocab::from_tokens(t.clone())?),
        None => Err(CoreError::Contract("checkpoint carries no vocabulary".into()).into()),
    }
}

fn finish_run(run: TrainRun, out: &Path, trajectory: &Path, log: &mut dyn Write) -> LabResult<TrainRun> {
    checkpoint::save(&run.checkpoint, out)?;
    io::write_text(trajectory, &io::trajectory_csv(&run.trajectory)?)?;
    if let Some(last) = run.trajectory.last() {
        let _ = writeln!(log, "done steps={} loss_total={}", run.trajectory.len(), last.total);
    }
    Ok(run)
}

/// Builds a vocabulary from the corpus and trains a fresh encoder on MLM.
pub fn pretrain(cfg: &RunConfig, corpus: &Path, out: &Path, trajectory: Option<&Path>, log: &mut dyn Write) -> LabResult<TrainRun> {
    let traj = trajectory.map_or_else(|| trajectory_path(out), Path::to_path_buf);
    log_config(
        log,
        "pretrain",
        &json!({ "model": val(&cfg.model), "data": cfg.data, "pretrain": val(&cfg.pretrain),
                 "corpus": path_str(corpus), "out": path_str(out), "trajectory": path_str(&traj) }),
    );
    let texts = corpus_texts(corpus)?;
    let vocab = Vocab::build(&texts, cfg.data.max_words);
    let seqs = pack(&texts, &vocab, &cfg.data, cfg.model.max_positions, cfg.pretrain.seed)?;
    let _ = writeln!(log, "vocab={} sequences={}", vocab.len(), seqs.len());
    let mut init = ModelCheckpoint::init(cfg.model.to_config(vocab.len()), cfg.pretrain.seed)?;
    init.vocab = Some(vocab.tokens().to_vec());
    let recipe = cfg.pretrain.recipe();
    let batches = mlm_batches(&seqs, recipe.batch_size, recipe.seed, None)?;
    let run = distill::run_mlm_pretrain(init, batches, &recipe)?;
    finish_run(run, out, &traj, log)
}

pub fn convert(input: &Path, plan: &ConvertPlan, out: &Path, log: &mut dyn Write) -> LabResult<ModelCheckpoint> {
    log_config(log, "convert", &json!({ "in": path_str(input), "plan": plan, "out": path_str(out) }));
    let ckpt = checkpoint::load(input)?;
    if plan.new_max_positions < ckpt.config.max_positions {
        return Err(CoreError::Contract(format!(
            "--max-pos {} is below the current {}",
            plan.new_max_positions, ckpt.config.max_positions
        ))
        .into());
    }
    let converted = convert::convert(&ckpt, plan)?;
    checkpoint::save(&converted, out)?;
    Ok(converted)
}

pub fn extend(
    input: &Path,
    max_positions: usize,
    policy: PositionExtension,
    seed: u64,
    out: &Path,
    log: &mut dyn Write,
) -> LabResult<ModelCheckpoint> {
    log_config(
        log,
        "extend",
        &json!({ "in": path_str(input), "max_positions": max_positions, "position_extension": policy,
                 "seed": seed, "out": path_str(out) }),
    );
    let ckpt = checkpoint::load(input)?;
    if max_positions < ckpt.config.max_positions {
        return Err(CoreError::Contract(format!(
            "--max-pos {max_positions} is below the current {}",
            ckpt.config.max_positions
        ))
        .into());
    }
    let extended = convert::extend_only(&ckpt, max_positions, policy, seed)?;
    checkpoint::save(&extended, out)?;
    Ok(extended)
}

/// Distils a half-depth student from `teacher` on the corpus, tokenised with
/// the teacher's vocabulary.
pub fn distill(
    teacher_path: &Path,
    cfg: &RunConfig,
    corpus: &Path,
    out: &Path,
    trajectory: Option<&Path>,
    log: &mut dyn Write,
) -> LabResult<TrainRun> {
    let traj = trajectory.map_or_else(|| trajectory_path(out), Path::to_path_buf);
    log_config(
        log,
        "distill",
        &json!({ "teacher": path_str(teacher_path), "data": cfg.data, "distill": val(&cfg.distill),
                 "corpus": path_str(corpus), "out": path_str(out), "trajectory": path_str(&traj) }),
    );
    let teacher = checkpoint::load(teacher_path)?;
    let vocab = checkpoint_vocab(&teacher)?;
    let texts = corpus_texts(corpus)?;
    let seqs = pack(&texts, &vocab, &cfg.data, teacher.config.max_positions, cfg.distill.seed)?;
    let _ = writeln!(log, "sequences={}", seqs.len());
    let batches = mlm_batches(&seqs, cfg.distill.batch_size, cfg.distill.seed, None)?;
    let run = distill::run_distillation(&teacher, batches, &cfg.distill)?;
    finish_run(run, out, &traj, log)
}

/// Words of `sentences` in first-appearance order, without repeats.
fn words_in_order(sentences: &[TaggedSentence]) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for s in sentences {
        for w in &s.tokens {
            if seen.insert(w.as_str()) {
                out.push(w.clone());
            }
        }
    }
    out
}

/// Token-classification fine-tuning. Words of the training data missing
/// from the checkpoint vocabulary are added first.
pub fn finetune(
    input: &Path,
    cfg: &RunConfig,
    data: &Path,
    out: &Path,
    trajectory: Option<&Path>,
    log: &mut dyn Write,
) -> LabResult<TrainRun> {
    let traj = trajectory.map_or_else(|| trajectory_path(out), Path::to_path_buf);
    log_config(
        log,
        "finetune",
        &json!({ "in": path_str(input), "task": "ner", "finetune": val(&cfg.finetune),
                 "data": path_str(data), "out": path_str(out), "trajectory": path_str(&traj) }),
    );
    let ckpt = checkpoint::load(input)?;
    let sentences = io::read_conll(data)?.sentences;
    if sentences.is_empty() {
        return Err(LabError::Data(format!("{}: no sentences", data.display())));
    }
    let (ckpt, added) = convert::extend_vocab(&ckpt, &words_in_order(&sentences), cfg.finetune.seed)?;
    let vocab = checkpoint_vocab(&ckpt)?;
    let max_len = cfg.finetune.max_len.min(ckpt.config.max_positions);
    let _ = writeln!(log, "sentences={} vocab_added={added} max_len={max_len}", sentences.len());
    let recipe = cfg.finetune.recipe();
    let batches = tag_batches(&sentences, &vocab, max_len, recipe.batch_size, recipe.seed, None)?;
    let run = distill::run_finetune_tokencls(ckpt, batches, &recipe)?;
    finish_run(run, out, &traj, log)
}

/// Predicted tags of each sentence. Sentences longer than the model's
/// position table are a length error unless `truncate` cuts them (gold
/// tags are cut the same way).
pub fn predict_ner(
    ckpt: &ModelCheckpoint,
    sentences: &[TaggedSentence],
    truncate: Option<usize>,
) -> LabResult<(Vec<Vec<Tag>>, Vec<Vec<Tag>>)> {
    let vocab = checkpoint_vocab(ckpt)?;
    let max = ckpt.config.max_positions;
    let cut: Vec<TaggedSentence> = match truncate {
        Some(n) => sentences.iter().map(|s| s.truncated(n)).collect(),
        None => sentences.to_vec(),
    };
    if let Some(long) = cut.iter().find(|s| s.len() > max) {
        return Err(CoreError::Length { len: long.len(), max }.into());
    }
    let mut pred = Vec::with_capacity(cut.len());
    for chunk in cut.chunks(16) {
        let real: Vec<&TaggedSentence> = chunk.iter().filter(|s| !s.is_empty()).collect();
        let ids: Vec<Vec<u32>> = real.iter().map(|s| vocab.encode_words(&s.tokens)).collect();
        let mut tags_of = Vec::with_capacity(real.len());
        if !ids.is_empty() {
            let batch = TokenBatch::padded(&ids, eadl_core::corpus::PAD)?;
            let logits = ckpt.predict_tags(&batch)?;
            let t = ckpt.config.num_tags;
            for (b, s) in real.iter().enumerate() {
                let mut seq = Vec::with_capacity(s.len());
                for i in 0..s.len() {
                    let row = &logits.data()[(b * batch.seq_len + i) * t..(b * batch.seq_len + i + 1) * t];
                    let best = row
                        .iter()
                        .enumerate()
                        .fold(0, |best, (j, &v)| if v > row[best] { j } else { best });
                    seq.push(Tag::from_id(best as u32).unwrap_or(Tag::O));
                }
                tags_of.push(seq);
            }
        }
        let mut it = tags_of.into_iter();
        for s in chunk {
            pred.push(if s.is_empty() { Vec::new() } else { it.next().expect("one prediction per sentence") });
        }
    }
    let gold = cut.into_iter().map(|s| s.tags).collect();
    Ok((pred, gold))
}

pub fn eval_ner(input: &Path, data: &Path, truncate: Option<usize>, log: &mut dyn Write) -> LabResult<NerScores> {
    log_config(
        log,
        "eval",
        &json!({ "in": path_str(input), "task": "ner", "data": path_str(data), "truncate": truncate }),
    );
    let ckpt = checkpoint::load(input)?;
    let sentences = io::read_conll(data)?.sentences;
    let (pred, gold) = predict_ner(&ckpt, &sentences, truncate)?;
    Ok(evalkit::entity_f1(&pred, &gold)?)
}

/// Wall-clock seconds since the first call.
pub fn monotonic_clock() -> impl FnMut() -> f64 {
    let start = Instant::now();
    move || start.elapsed().as_secs_f64()
}

pub fn time_inference(ckpt: &ModelCheckpoint, cfg: &BenchConfig, model: &str) -> LabResult<Vec<BenchResult>> {
    let label = ckpt.config.attention_spec.to_string();
    let mut clock = monotonic_clock();
    Ok(time_inference_with(ckpt, cfg, model, &label, &mut clock)?)
}

/// Model name in reports: the checkpoint file stem.
pub fn model_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path_str(path), |s| s.to_string_lossy().into_owned())
}

pub fn bench(models: &[PathBuf], cfg: &BenchConfig, log: &mut dyn Write) -> LabResult<Vec<BenchResult>> {
    let names: Vec<String> = models.iter().map(|p| path_str(p)).collect();
    log_config(log, "bench", &json!({ "models": names, "bench": cfg }));
    cfg.validate()?;
    let mut out = Vec::new();
    for p in models {
        let ckpt = checkpoint::load(p)?;
        out.extend(time_inference(&ckpt, cfg, &model_name(p))?);
    }
    let report = eadl_core::bench::scaling_report(&out);
    for w in &report.warnings {
        let _ = writeln!(log, "warning: {w}");
    }
    for r in &report.rows {
        let _ = writeln!(log, "scaling {r:?}");
    }
    Ok(out)
}

pub fn filter(input: &Path, policy: &FilterPolicy, out: &Path, log: &mut dyn Write) -> LabResult<FilterReport> {
    log_config(log, "filter-corpus", &json!({ "in": path_str(input), "policy": policy, "out": path_str(out) }));
    policy.validate()?;
    let records = io::read_corpus(input)?;
    let (kept, report) = filter_corpus(records, policy);
    io::write_corpus(out, &kept)?;
    Ok(report)
}

/// Length statistics and tag distribution reports, separated by a blank
/// line.
pub fn stats(data: &Path, mode: StdMode, log: &mut dyn Write) -> LabResult<String> {
    log_config(
        log,
        "stats",
        &json!({ "data": path_str(data), "std": match mode { StdMode::Population => "population", StdMode::Sample => "sample" } }),
    );
    let sentences = io::read_conll(data)?.sentences;
    let lengths: Vec<usize> = sentences.iter().map(TaggedSentence::len).collect();
    let ls = evalkit::length_stats(&lengths, mode)?;
    let dist = evalkit::tag_distribution(&sentences);
    Ok(format!("{}\n{}", ls.report(), dist.report()))
}
