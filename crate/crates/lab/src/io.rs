//! Corpus, CoNLL and CSV files.

use std::fs;
use std::path::Path;

use eadl_core::bench::BenchResult;
use eadl_core::corpus::{parse_conll, write_conll, ConllData, CorpusRecord, FilterReport, TaggedSentence};
use eadl_core::distill::StepLog;
use eadl_core::evalkit::NerScores;

use crate::error::{LabError, LabResult};

/// Exact header of the benchmark CSV.
pub const BENCH_HEADER: [&str; 9] = [
    "model",
    "label",
    "seq_len",
    "batch",
    "mean_s",
    "std_s",
    "peak_bytes",
    "attended_pairs",
    "params",
];

pub const METRICS_HEADER: [&str; 5] = ["tag", "precision", "recall", "f1", "support"];

pub fn read_text(path: &Path) -> LabResult<String> {
    fs::read_to_string(path).map_err(|e| LabError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> LabResult<()> {
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

/// One JSON record per line; blank lines are skipped.
pub fn parse_jsonl(text: &str) -> LabResult<Vec<CorpusRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| {
            LabError::Core(eadl_core::Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn to_jsonl(records: &[CorpusRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serialises"));
        out.push('\n');
    }
    out
}

pub fn read_corpus(path: &Path) -> LabResult<Vec<CorpusRecord>> {
    parse_jsonl(&read_text(path)?)
}

pub fn write_corpus(path: &Path, records: &[CorpusRecord]) -> LabResult<()> {
    write_text(path, &to_jsonl(records))
}

pub fn read_conll(path: &Path) -> LabResult<ConllData> {
    Ok(parse_conll(&read_text(path)?)?)
}

pub fn write_conll_file(path: &Path, sentences: &[TaggedSentence]) -> LabResult<()> {
    write_text(path, &write_conll(sentences))
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory writer flushes");
    String::from_utf8(bytes).expect("csv output is UTF-8")
}

fn csv_err(e: csv::Error) -> LabError {
    LabError::Data(format!("csv: {e}"))
}

/// `step,loss_total,loss_mlm,loss_ce,loss_cse,lr`.
pub fn trajectory_csv(log: &[StepLog]) -> LabResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if log.is_empty() {
        w.write_record(["step", "loss_total", "loss_mlm", "loss_ce", "loss_cse", "lr"])
            .map_err(csv_err)?;
    }
    for row in log {
        w.serialize(row).map_err(csv_err)?;
    }
    Ok(finish(w))
}

pub fn bench_csv(results: &[BenchResult]) -> LabResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BENCH_HEADER).map_err(csv_err)?;
    for r in results {
        w.write_record([
            r.model.clone(),
            r.label.clone(),
            r.seq_len.to_string(),
            r.batch.to_string(),
            format!("{:.6}", r.mean_s),
            format!("{:.6}", r.std_s),
            r.peak_bytes.to_string(),
            r.attended_pairs.to_string(),
            r.params.to_string(),
        ])
        .map_err(csv_err)?;
    }
    Ok(finish(w))
}

pub fn metrics_csv(scores: &NerScores) -> LabResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER).map_err(csv_err)?;
    for (tag, prf) in scores.rows() {
        w.write_record([
            tag.to_string(),
            format!("{:.4}", prf.precision),
            format!("{:.4}", prf.recall),
            format!("{:.4}", prf.f1),
            prf.support.to_string(),
        ])
        .map_err(csv_err)?;
    }
    Ok(finish(w))
}

/// `reason,count` with `kept` first.
pub fn filter_report_csv(report: &FilterReport) -> LabResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["reason", "count"]).map_err(csv_err)?;
    for (reason, n) in report.rows() {
        w.write_record([reason.to_string(), n.to_string()]).map_err(csv_err)?;
    }
    Ok(finish(w))
}
