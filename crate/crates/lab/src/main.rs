use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use eadl_core::attention::AttentionSpec;
use eadl_core::convert::{ConvertPlan, PositionExtension};
use eadl_core::corpus::FilterPolicy;
use eadl_core::evalkit::StdMode;

use eadl::config::RunConfig;
use eadl::error::{LabError, LabResult};
use eadl::run::{self, SynthKind};
use eadl::io;

/// Efficient-attention distillation lab.
#[derive(Debug, Parser)]
#[command(name = "eadl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags that override values from the config file.
#[derive(Debug, clap::Args)]
struct Overrides {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Kind {
    MlmToy,
    NerToy,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PosInit {
    Cyclic,
    Random,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Task {
    Ner,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StdArg {
    Population,
    Sample,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Synth {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Masked-LM pretraining of a fresh encoder.
    Pretrain {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Switch a checkpoint to another attention pattern and length.
    Convert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        pattern: String,
        #[arg(long = "max-pos")]
        max_pos: usize,
        #[arg(long = "pos-init", value_enum, default_value = "cyclic")]
        pos_init: PosInit,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Do not make token 0 global for window and block patterns.
        #[arg(long)]
        no_global_first: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lengthen the position table, keeping the attention pattern.
    Extend {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "max-pos")]
        max_pos: usize,
        #[arg(long = "pos-init", value_enum, default_value = "cyclic")]
        pos_init: PosInit,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distil a half-depth student from a teacher.
    Distill {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Fine-tune a token-classification head.
    Finetune {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score a checkpoint; prints the metrics CSV.
    Eval {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        truncate: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time inference; prints the benchmark CSV.
    Bench {
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<PathBuf>,
        #[arg(long = "seq-lens", value_delimiter = ',')]
        seq_lens: Option<Vec<usize>>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Filter and de-duplicate a JSONL corpus; prints the reason counts.
    FilterCorpus {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML file with the filter policy keys; defaults if omitted.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Length statistics and tag distribution of a CoNLL file.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "population")]
        std: StdArg,
    },
}

fn pos_init(p: PosInit) -> PositionExtension {
    match p {
        PosInit::Cyclic => PositionExtension::CyclicCopy,
        PosInit::Random => PositionExtension::RandomInit,
    }
}

fn apply(sec: &mut eadl::config::TrainSection, o: &Overrides) {
    if let Some(v) = o.steps {
        sec.steps = v;
    }
    if let Some(v) = o.seed {
        sec.seed = v;
    }
    if let Some(v) = o.lr {
        sec.optimizer.lr = v;
    }
    if let Some(v) = o.batch {
        sec.batch_size = v;
    }
}

fn emit(out: Option<&PathBuf>, text: &str) -> LabResult<()> {
    match out {
        Some(p) => io::write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cmd: Command, log: &mut dyn Write) -> LabResult<()> {
    match cmd {
        Command::Synth { kind, size, seed, out, config } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let kind = match kind {
                Kind::MlmToy => SynthKind::MlmToy,
                Kind::NerToy => SynthKind::NerToy,
            };
            run::synth(kind, size, seed, &cfg.synth, &out, log)
        }
        Command::Pretrain { config, corpus, out, trajectory, overrides } => {
            let mut cfg = RunConfig::load_or_default(config.as_deref())?;
            apply(&mut cfg.pretrain, &overrides);
            run::pretrain(&cfg, &corpus, &out, trajectory.as_deref(), log).map(drop)
        }
        Command::Convert { input, pattern, max_pos, pos_init: p, seed, no_global_first, out } => {
            let spec: AttentionSpec = pattern.parse().map_err(|e| LabError::Usage(format!("--pattern: {e}")))?;
            let plan = ConvertPlan {
                position_extension: pos_init(p),
                seed,
                global_first_token: !no_global_first,
                ..ConvertPlan::new(spec, max_pos)
            };
            run::convert(&input, &plan, &out, log).map(drop)
        }
        Command::Extend { input, max_pos, pos_init: p, seed, out } => {
            run::extend(&input, max_pos, pos_init(p), seed, &out, log).map(drop)
        }
        Command::Distill { teacher, config, corpus, out, trajectory, overrides } => {
            let mut cfg = RunConfig::load_or_default(config.as_deref())?;
            let d = &mut cfg.distill;
            if let Some(v) = overrides.steps {
                d.steps = v;
            }
            if let Some(v) = overrides.seed {
                d.seed = v;
            }
            if let Some(v) = overrides.lr {
                d.optimizer.lr = v;
            }
            if let Some(v) = overrides.batch {
                d.batch_size = v;
            }
            run::distill(&teacher, &cfg, &corpus, &out, trajectory.as_deref(), log).map(drop)
        }
        Command::Finetune { input, task: Task::Ner, data, out, config, trajectory, overrides } => {
            let mut cfg = RunConfig::load_or_default(config.as_deref())?;
            apply(&mut cfg.finetune, &overrides);
            run::finetune(&input, &cfg, &data, &out, trajectory.as_deref(), log).map(drop)
        }
        Command::Eval { input, task: Task::Ner, data, truncate, out } => {
            let scores = run::eval_ner(&input, &data, truncate, log)?;
            let _ = writeln!(log, "micro f1={:.4}", scores.micro.f1);
            emit(out.as_ref(), &io::metrics_csv(&scores)?)
        }
        Command::Bench { models, seq_lens, batch, reps, warmup, seed, config, out } => {
            let mut cfg = RunConfig::load_or_default(config.as_deref())?.bench;
            if let Some(v) = seq_lens {
                cfg.seq_lens = v;
            }
            if let Some(v) = batch {
                cfg.batch_size = v;
            }
            if let Some(v) = reps {
                cfg.timed_reps = v;
            }
            if let Some(v) = warmup {
                cfg.warmup_reps = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            let results = run::bench(&models, &cfg, log)?;
            emit(out.as_ref(), &io::bench_csv(&results)?)
        }
        Command::FilterCorpus { input, out, policy, report } => {
            let policy: FilterPolicy = match policy {
                Some(p) => toml::from_str(&io::read_text(&p)?)
                    .map_err(|e| LabError::Usage(format!("{}: {}", p.display(), e.message())))?,
                None => FilterPolicy::default(),
            };
            let rep = run::filter(&input, &policy, &out, log)?;
            emit(report.as_ref(), &io::filter_report_csv(&rep)?)
        }
        Command::Stats { data, std } => {
            let mode = match std {
                StdArg::Population => StdMode::Population,
                StdArg::Sample => StdMode::Sample,
            };
            let text = run::stats(&data, mode, log)?;
            emit(None, &text)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", LabError::Usage(first.to_string()).report_line());
            return ExitCode::from(1);
        }
    };
    let mut log = std::io::stderr();
    match execute(cli.command, &mut log) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

