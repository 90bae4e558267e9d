//! Command-line front end. Each subcommand is a plain function so it can be
//! driven from tests without spawning a process.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::audit::{self, AuditMode};
use crate::autodiff::Fault;
use crate::checkpoint;
use crate::config::RunConfig;
use crate::data::{self, SynthConfig};
use crate::error::{Error, Result};
use crate::gradcheck;
use crate::rng;
use crate::sweep::{self, SweepParam};
use crate::text;
use crate::train::{self, Corpus};

#[derive(Debug, Parser)]
#[command(name = "srlf", version, about = "Rumor detection with a stance-selection policy")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic thread corpus with weak stance labels.
    Synth(SynthArgs),
    /// Train detector and policy; writes model.ckpt, history.jsonl and config.txt.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Finite-difference check of both models on a tiny configuration.
    Gradcheck(GradcheckArgs),
    /// Train once per value of gamma or lambda and print one TSV row each.
    Sweep(SweepArgs),
    /// Retain rates of the trained policy on intact versus corrupted labels.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; receives threads.jsonl and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 400)]
    pub threads: usize,
    #[arg(long, default_value_t = 8)]
    pub comments: usize,
    #[arg(long, default_value_t = 200)]
    pub vocab: usize,
    #[arg(long, default_value_t = 12)]
    pub tokens: usize,
    #[arg(long, default_value_t = 0.9)]
    pub signal: f64,
    #[arg(long, default_value_t = 0.4)]
    pub noise: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Flags shared by every command that trains.
#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// `key = value` config file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ablation: Option<String>,
    #[arg(long = "return-mode")]
    pub return_mode: Option<String>,
    /// Extra overrides, e.g. `--set epochs=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::parse(&fs::read_to_string(path)?)?,
            None => RunConfig::default(),
        };
        let mut pairs = Vec::new();
        for item in &self.set {
            match item.split_once('=') {
                Some((k, v)) => pairs.push((k.trim().to_string(), v.trim().to_string())),
                None => return Err(Error::Config(vec![format!("--set expects KEY=VALUE, got {item:?}")])),
            }
        }
        let mut flag = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        flag("data", self.data.as_ref().map(|p| p.display().to_string()));
        flag("out", self.out.as_ref().map(|p| p.display().to_string()));
        flag("seed", self.seed.map(|s| s.to_string()));
        flag("ablation", self.ablation.clone());
        flag("return_mode", self.return_mode.clone());
        base.with_overrides(&pairs)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Thread file; defaults to the one recorded in the checkpoint.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Draw decisions from the policy with this seed instead of taking the argmax.
    #[arg(long, value_name = "SEED")]
    pub sampled: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = gradcheck::DEFAULT_STEP)]
    pub h: f64,
    #[arg(long, default_value_t = gradcheck::DEFAULT_TOL)]
    pub tol: f64,
    /// Break a backward rule on purpose: relu or sigmoid.
    #[arg(long)]
    pub fault: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// gamma or lambda.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Train every value on its own thread.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Serialize)]
struct SynthManifest<'a> {
    threads: usize,
    comments_per_thread: usize,
    vocab_size: usize,
    tokens_per_text: usize,
    signal: f64,
    noise: f64,
    seed: u64,
    comment_count: usize,
    corrupted_count: usize,
    class_counts: [usize; 4],
    data: &'a str,
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = SynthConfig {
        threads: args.threads,
        comments_per_thread: args.comments,
        vocab_size: args.vocab,
        tokens_per_text: args.tokens,
        signal: args.signal,
        noise: args.noise,
        seed: args.seed,
    };
    let threads = data::generate(&cfg)?;
    fs::create_dir_all(&args.out)?;
    let data_path = args.out.join("threads.jsonl");
    data::write_threads(std::io::BufWriter::new(fs::File::create(&data_path)?), &threads)?;
    let mut class_counts = [0; 4];
    for t in &threads {
        class_counts[t.veracity.index()] += 1;
    }
    let comments = threads.iter().flat_map(|t| &t.comments);
    let manifest = SynthManifest {
        threads: cfg.threads,
        comments_per_thread: cfg.comments_per_thread,
        vocab_size: cfg.vocab_size,
        tokens_per_text: cfg.tokens_per_text,
        signal: cfg.signal,
        noise: cfg.noise,
        seed: cfg.seed,
        comment_count: comments.clone().count(),
        corrupted_count: comments.filter(|c| c.corrupted == Some(true)).count(),
        class_counts,
        data: "threads.jsonl",
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(args.out.join("manifest.json"), format!("{text}\n"))?;
    writeln!(out, "wrote {} threads to {}", threads.len(), data_path.display())?;
    Ok(())
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| Error::Config(vec![format!("{key} is required (flag --{key} or config key)")]))
}

fn load_corpus(cfg: &RunConfig, data_override: Option<&Path>) -> Result<Corpus> {
    let path = match data_override {
        Some(p) => p,
        None => required(&cfg.data, "data")?,
    };
    Corpus::prepare(data::load_threads(path)?, &cfg.train)
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.run.resolve()?;
    let out_dir = required(&cfg.out, "out")?.to_path_buf();
    let corpus = load_corpus(&cfg, None)?;
    let embedding = match &cfg.embeddings {
        Some(path) => {
            let reader = BufReader::new(fs::File::open(path)?);
            let mut r = rng::stream(cfg.train.seed, rng::EMBED);
            Some(text::load_pretrained(reader, &corpus.vocab, cfg.train.d_w, &mut r)?)
        }
        None => None,
    };
    let quiet = args.quiet;
    let outcome = train::train(&cfg.train, &corpus, embedding, &mut |row, _| {
        if !quiet {
            let _ = writeln!(
                out,
                "epoch {:>3} {:<5} loss {:.4} acc {:.4} macro_f1 {:.4}",
                row.epoch, row.split, row.loss, row.accuracy, row.macro_f1
            );
        }
    })?;
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("model.ckpt"), checkpoint::to_bytes(&cfg, &outcome.model)?)?;
    fs::write(out_dir.join("history.jsonl"), train::history_text(&outcome.history))?;
    fs::write(out_dir.join("config.txt"), cfg.to_text())?;
    writeln!(
        out,
        "best epoch {}: val accuracy {:.4}, test accuracy {:.4}, test macro F1 {:.4}",
        outcome.best_epoch,
        outcome.best_val.accuracy(),
        outcome.test.accuracy(),
        outcome.test.confusion.macro_f1()
    )?;
    Ok(())
}

fn split_indices<'a>(corpus: &'a Corpus, name: &str) -> Result<&'a [usize]> {
    match name {
        "train" => Ok(&corpus.split.train),
        "val" => Ok(&corpus.split.val),
        "test" => Ok(&corpus.split.test),
        other => Err(Error::validation("split", format!("unknown split {other:?} (train, val, test)"))),
    }
}

/// Restores a checkpoint and rebuilds the split it was trained on.
fn restore(args: &EvalArgs) -> Result<(RunConfig, train::Model, Corpus)> {
    let (cfg, model) = checkpoint::load(fs::File::open(&args.checkpoint)?)?;
    let corpus = load_corpus(&cfg, args.data.as_deref())?;
    if corpus.vocab != model.vocab {
        return Err(Error::validation("data", "thread file does not reproduce the checkpoint's vocabulary"));
    }
    Ok((cfg, model, corpus))
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let (cfg, model, corpus) = restore(args)?;
    let idx = split_indices(&corpus, &args.split)?;
    let eval = train::evaluate(&model, &cfg.train, &corpus.select(idx))?;
    writeln!(out, "{}", eval.row(0, &args.split).to_json())?;
    Ok(())
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

pub fn cmd_audit(args: &AuditArgs, out: &mut dyn Write) -> Result<()> {
    let (cfg, model, corpus) = restore(&args.eval)?;
    let idx = split_indices(&corpus, &args.eval.split)?;
    let mode = match args.sampled {
        Some(seed) => AuditMode::Sampled { seed },
        None => AuditMode::Greedy,
    };
    let r = audit::audit(&model, &cfg.train, &corpus.select(idx), mode)?;
    writeln!(
        out,
        "clean retained {}/{} ({}), corrupted retained {}/{} ({}), gap {}",
        r.clean_retained,
        r.clean_total,
        show(r.clean_rate()),
        r.corrupted_retained,
        r.corrupted_total,
        show(r.corrupted_rate()),
        show(r.gap())
    )?;
    writeln!(out, "mean P(retain): clean {}, corrupted {}", show(r.clean_mean_prob()), show(r.corrupted_mean_prob()))?;
    Ok(())
}

/// Returns whether every group passed.
pub fn cmd_gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> Result<bool> {
    let fault = match args.fault.as_deref() {
        None => None,
        Some("relu") => Some(Fault::ReluPassThrough),
        Some("sigmoid") => Some(Fault::SigmoidIdentity),
        Some(other) => return Err(Error::validation("fault", format!("unknown fault {other:?} (relu, sigmoid)"))),
    };
    let (env, agent) = gradcheck::check_models(args.seed, args.h, args.tol, fault)?;
    writeln!(out, "{env}")?;
    writeln!(out, "{agent}")?;
    Ok(env.passed() && agent.passed())
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let param: SweepParam = args.param.parse().map_err(|e: String| Error::validation("param", e))?;
    let cfg = args.run.resolve()?;
    let threads = data::load_threads(required(&cfg.data, "data")?)?;
    let rows = sweep::sweep(&cfg.train, threads, param, &args.values, args.parallel)?;
    let mut text = format!("{}\n", sweep::TSV_HEADER);
    for r in &rows {
        text.push_str(&r.to_tsv());
        text.push('\n');
    }
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("sweep_{param}.tsv")), &text)?;
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Audit(a) => cmd_audit(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Gradcheck(a) => match cmd_gradcheck(a, out) {
            Ok(true) => Ok(()),
            Ok(false) => return 2,
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
