use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_eadl");

fn eadl(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = eadl(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn last_err_line(out: &Output) -> String {
    stderr(out).lines().last().unwrap_or("").to_string()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

/// Writes a small synthetic corpus and a pretrained teacher into `dir`.
fn teacher(dir: &Path, steps: &str) -> PathBuf {
    ok(dir, &["synth", "--kind", "mlm_toy", "--size", "120", "--seed", "3", "--out", "c.jsonl"]);
    ok(dir, &["pretrain", "--corpus", "c.jsonl", "--out", "t.ckpt", "--steps", steps]);
    dir.join("t.ckpt")
}

#[test]
fn default_pipeline_emits_an_f1_report() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["synth", "--kind", "mlm_toy", "--size", "200", "--seed", "1", "--out", "c.jsonl"]);
    ok(p, &["synth", "--kind", "ner_toy", "--size", "24", "--seed", "2", "--out", "n.conll"]);
    ok(p, &["pretrain", "--corpus", "c.jsonl", "--out", "t.ckpt"]);
    ok(p, &["convert", "--in", "t.ckpt", "--pattern", "window:w=8,d=1", "--max-pos", "256", "--out", "w.ckpt"]);
    ok(p, &["distill", "--teacher", "w.ckpt", "--corpus", "c.jsonl", "--out", "s.ckpt"]);
    ok(p, &["finetune", "--in", "s.ckpt", "--task", "ner", "--data", "n.conll", "--out", "f.ckpt"]);
    let out = ok(p, &["eval", "--in", "f.ckpt", "--task", "ner", "--data", "n.conll", "--truncate", "128"]);
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "tag,precision,recall,f1,support");
    assert_eq!(lines.len(), 6);
    assert!(lines[5].starts_with("micro,"));
    let f1: f64 = lines[5].split(',').nth(3).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&f1));

    for traj in ["t.csv", "s.csv", "f.csv"] {
        let text = String::from_utf8(read(p, traj)).unwrap();
        assert!(text.starts_with("step,loss_total,loss_mlm,loss_ce,loss_cse,lr\n"), "{traj}");
    }
    let s = String::from_utf8(read(p, "s.csv")).unwrap();
    assert_eq!(s.lines().count(), 201);
}

#[test]
fn convert_to_shorter_table_is_a_contract_error() {
    let d = tempfile::tempdir().unwrap();
    teacher(d.path(), "2");
    let out = eadl(d.path(), &["convert", "--in", "t.ckpt", "--pattern", "full", "--max-pos", "64", "--out", "x.ckpt"]);
    assert_eq!(code(&out), 3);
    assert!(last_err_line(&out).starts_with("ERR 3:"));
    assert!(!d.path().join("x.ckpt").exists());
    let out = eadl(d.path(), &["extend", "--in", "t.ckpt", "--max-pos", "64", "--out", "x.ckpt"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn bench_header_matches_byte_for_byte() {
    let d = tempfile::tempdir().unwrap();
    teacher(d.path(), "1");
    let out = ok(
        d.path(),
        &["bench", "--models", "t.ckpt", "--seq-lens", "16,32", "--batch", "2", "--reps", "3"],
    );
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("model,label,seq_len,batch,mean_s,std_s,peak_bytes,attended_pairs,params\n"));
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("t,full,16,2,"));
}

#[test]
fn bench_over_length_is_a_contract_error() {
    let d = tempfile::tempdir().unwrap();
    teacher(d.path(), "1");
    let out = eadl(d.path(), &["bench", "--models", "t.ckpt", "--seq-lens", "512", "--batch", "1"]);
    assert_eq!(code(&out), 3);
    assert!(last_err_line(&out).starts_with("ERR 3: length:"));
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        vec!["frobnicate"],
        vec!["synth", "--kind", "poems", "--size", "3", "--out", "x"],
        vec!["synth", "--kind", "mlm_toy", "--size", "0", "--out", "x"],
        vec!["convert", "--in", "a", "--pattern", "window:q=1", "--max-pos", "8", "--out", "b"],
    ] {
        let out = eadl(d.path(), &args);
        assert_eq!(code(&out), 1, "{args:?}: {}", stderr(&out));
        assert!(last_err_line(&out).starts_with("ERR 1:"), "{}", stderr(&out));
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("cfg.toml"), "[model]\nnum_layerz = 3\n").unwrap();
    ok(d.path(), &["synth", "--kind", "mlm_toy", "--size", "5", "--out", "c.jsonl"]);
    let out = eadl(d.path(), &["pretrain", "--config", "cfg.toml", "--corpus", "c.jsonl", "--out", "t.ckpt"]);
    assert_eq!(code(&out), 1);
    assert!(last_err_line(&out).contains("num_layerz"));
}

#[test]
fn data_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::write(p.join("bad.jsonl"), "{\"text\": \"ok\"}\nnot json\n").unwrap();
    let out = eadl(p, &["filter-corpus", "--in", "bad.jsonl", "--out", "o.jsonl"]);
    assert_eq!(code(&out), 2);
    assert!(last_err_line(&out).starts_with("ERR 2: parse: line 2"), "{}", stderr(&out));

    std::fs::write(p.join("bad.conll"), "EU B-ORG\nrejects\n").unwrap();
    let out = eadl(p, &["stats", "--data", "bad.conll"]);
    assert_eq!(code(&out), 2);

    let out = eadl(p, &["stats", "--data", "missing.conll"]);
    assert_eq!(code(&out), 2);

    std::fs::write(p.join("junk.ckpt"), b"EADL\x07\0\0\0").unwrap();
    let out = eadl(p, &["extend", "--in", "junk.ckpt", "--max-pos", "8", "--out", "o.ckpt"]);
    assert_eq!(code(&out), 2);
    assert!(last_err_line(&out).starts_with("ERR 2: format.version:"));
}

#[test]
fn eval_without_truncation_rejects_long_sentences() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    teacher(p, "1");
    ok(p, &["synth", "--kind", "ner_toy", "--size", "4", "--seed", "5", "--out", "n.conll"]);
    ok(p, &["finetune", "--in", "t.ckpt", "--task", "ner", "--data", "n.conll", "--out", "f.ckpt", "--steps", "1"]);
    let out = eadl(p, &["eval", "--in", "f.ckpt", "--task", "ner", "--data", "n.conll"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    ok(p, &["eval", "--in", "f.ckpt", "--task", "ner", "--data", "n.conll", "--truncate", "100"]);
}

#[test]
fn first_log_line_is_the_canonical_config() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let out = ok(p, &["synth", "--kind", "mlm_toy", "--size", "20", "--out", "c.jsonl"]);
    let out2 = ok(p, &["pretrain", "--corpus", "c.jsonl", "--out", "t.ckpt", "--steps", "3", "--lr", "0.002"]);
    for o in [out, out2] {
        let err = stderr(&o);
        let first = err.lines().next().unwrap();
        let json = first.strip_prefix("config ").expect("config prefix");
        let v: serde_json::Value = serde_json::from_str(json).unwrap();
        assert_eq!(serde_json::to_string(&v).unwrap(), json, "keys not in canonical order");
    }
    let err = stderr(&ok(p, &["pretrain", "--corpus", "c.jsonl", "--out", "t.ckpt", "--steps", "3", "--lr", "0.002"]));
    let v: serde_json::Value = serde_json::from_str(err.lines().next().unwrap().strip_prefix("config ").unwrap()).unwrap();
    assert_eq!(v["resolved"]["pretrain"]["steps"], 3);
    assert_eq!(v["resolved"]["pretrain"]["optimizer"]["lr"], 0.002);
}

#[test]
fn config_file_values_apply_and_flags_override() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::write(
        p.join("cfg.toml"),
        "[model]\nnum_layers = 2\nhidden_dim = 16\n\n[pretrain]\nsteps = 5\nseed = 4\n",
    )
    .unwrap();
    ok(p, &["synth", "--kind", "mlm_toy", "--size", "30", "--out", "c.jsonl"]);
    ok(p, &["pretrain", "--config", "cfg.toml", "--corpus", "c.jsonl", "--out", "t.ckpt", "--steps", "2"]);
    let ckpt = eadl::checkpoint::load(&p.join("t.ckpt")).unwrap();
    assert_eq!(ckpt.config.num_layers, 2);
    assert_eq!(ckpt.config.hidden_dim, 16);
    assert_eq!(String::from_utf8(read(p, "t.csv")).unwrap().lines().count(), 3);
}

#[test]
fn seeded_outputs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        ok(d, &["synth", "--kind", "ner_toy", "--size", "10", "--seed", "9", "--out", "n.conll"]);
        teacher(d, "6");
        ok(d, &["convert", "--in", "t.ckpt", "--pattern", "bigbird:b=4,r=1,g=1,seed=3", "--max-pos", "256",
                "--pos-init", "random", "--seed", "5", "--out", "b.ckpt"]);
        ok(d, &["distill", "--teacher", "b.ckpt", "--corpus", "c.jsonl", "--out", "s.ckpt", "--steps", "4"]);
        ok(d, &["filter-corpus", "--in", "c.jsonl", "--out", "k.jsonl", "--report", "r.csv"]);
    }
    for f in ["n.conll", "c.jsonl", "t.ckpt", "t.csv", "b.ckpt", "s.ckpt", "s.csv", "k.jsonl", "r.csv"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f} differs");
    }
}

#[test]
fn filter_and_stats_reports() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let lines = [
        r#"{"text":"a b","lang":"en","lang_prob":0.79,"ppl":40.0}"#,
        r#"{"text":"c d","lang":"en","lang_prob":0.80,"ppl":40.0}"#,
        r#"{"text":"e f","lang":"en","lang_prob":0.90,"ppl":13.51}"#,
        r#"{"text":"g h","lang":"en","lang_prob":0.90,"ppl":13.52,"flags":["noisy"]}"#,
        r#"{"text":"C  D","lang":"en","lang_prob":0.95,"ppl":20.0}"#,
        r#"{"text":"no metadata"}"#,
    ];
    std::fs::write(p.join("in.jsonl"), lines.join("\n")).unwrap();
    let out = ok(p, &["filter-corpus", "--in", "in.jsonl", "--out", "k.jsonl"]);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "reason,count\nkept,1\nmissing_metadata,1\nlanguage,1\nquality,1\nperplexity,1\ncategory,0\nduplicate,1\n"
    );
    let kept = String::from_utf8(read(p, "k.jsonl")).unwrap();
    assert_eq!(kept.lines().count(), 1);
    assert!(kept.contains("\"c d\""));

    std::fs::write(p.join("s.conll"), "EU B-ORG\nrejects O\nGerman B-MISC\n\nPeter B-PER\nBlackburn I-PER\n").unwrap();
    let out = ok(p, &["stats", "--data", "s.conll"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("statistic,value\nmean,2.5\nstd. dev.,0.5\nmin,2.0\n25%,2.2\n50%,2.5\n75%,2.8\nmax,3.0\n\ntag,count,p,p1\n"), "{text}");
    assert!(text.trim_end().ends_with("Total,5,1.0000,1.0000"));
}
