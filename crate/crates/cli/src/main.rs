use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use morphxfer::corpus::{parse_tag, read_split_manifest, LanguageCode, TagFormat};
use morphxfer::encoding::{encode_all, SymbolVocab};
use morphxfer::evalx;
use morphxfer::experiment::{
    prepare_split, run_cipher, run_learning_curve, run_shot, run_transfer, ExpError, ExperimentKind, ExperimentSpec,
    SpecBuilder, SpecError,
};
use morphxfer::model::{tiny_grad_check, tiny_grad_check_steps, InitScheme, Model, ModelConfig};
use morphxfer::trainer::{self, Checkpoint, Selection, TrainConfig, TrainError};

#[derive(Parser)]
#[command(name = "morphxfer", version, about = "Cross-lingual paradigm completion experiments")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a train/dev/test split from an experiment spec and write it to `out_dir`.
    Prepare(SpecArgs),
    /// Train one model on a prepared split.
    Train(TrainArgs),
    /// Predict forms for `language<TAB>lemma<TAB>tag` lines.
    Decode(DecodeArgs),
    /// Score a checkpoint on a prepared split.
    Evaluate(EvaluateArgs),
    /// Run an experiment.
    #[command(subcommand)]
    Exp(ExpCommand),
    /// Finite-difference check of the model's gradients on a tiny network.
    Gradcheck(GradcheckArgs),
}

#[derive(Subcommand)]
enum ExpCommand {
    /// One model per source condition (kind transfer or monolingual).
    Transfer(SpecArgs),
    /// One-shot / zero-shot target training sets.
    Shot(SpecArgs),
    /// Original vs ciphered source language.
    Cipher(SpecArgs),
    /// Accuracy as a function of the target train size.
    Curve(SpecArgs),
}

#[derive(Args)]
struct SpecArgs {
    /// `key = value` spec file.
    spec: PathBuf,
    /// Overrides as `--key value` or `--key=value`; any spec key is accepted.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    Best,
    Final,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory holding split.tsv and split.meta.
    #[arg(long)]
    split: PathBuf,
    /// Output directory for checkpoints and train.log.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    hidden_size: usize,
    #[arg(long, default_value_t = 300)]
    embedding_size: usize,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 20)]
    batch_size: usize,
    #[arg(long, default_value_t = 10)]
    eval_every: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    #[arg(long, value_enum, default_value_t = SelectionArg::Best)]
    selection: SelectionArg,
    /// Added to the longest training form to bound decoding.
    #[arg(long, default_value_t = 5)]
    decode_slack: usize,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input TSV; `-` reads stdin.
    #[arg(long, default_value = "-")]
    input: PathBuf,
    /// Output TSV; `-` writes stdout.
    #[arg(long, default_value = "-")]
    output: PathBuf,
    #[arg(long, default_value_t = 1)]
    beam: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Subset {
    Dev,
    Test,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long, value_enum, default_value_t = Subset::Test)]
    subset: Subset,
    #[arg(long, default_value_t = 1)]
    beam: usize,
    /// Add one row per tag.
    #[arg(long)]
    per_tag: bool,
    /// Print TSV instead of an aligned table.
    #[arg(long)]
    tsv: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Also try steps 10x and 100x larger and keep each coordinate's best.
    #[arg(long)]
    adaptive: bool,
}

/// Failures reported with exit code 1.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Failures reported with exit code 3.
#[derive(Debug)]
struct NumericalError(String);

impl std::fmt::Display for NumericalError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<SpecError>() {
            return 1;
        }
        if cause.is::<NumericalError>() {
            return 3;
        }
        let train = cause
            .downcast_ref::<ExpError>()
            .and_then(|e| match e {
                ExpError::Train(t) => Some(t),
                _ => None,
            })
            .or_else(|| cause.downcast_ref::<TrainError>());
        if matches!(train, Some(TrainError::NonFinite { .. })) {
            return 3;
        }
        if matches!(cause.downcast_ref::<ExpError>(), Some(ExpError::Spec(_) | ExpError::WrongKind { .. })) {
            return 1;
        }
    }
    2
}

/// Reads the experiment spec file and applies `--key value` overrides.
fn load_spec(args: &SpecArgs, kind: Option<ExperimentKind>) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let mut builder = SpecBuilder::parse(&text)?;
    let mut it = args.overrides.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| UsageError(format!("expected --key, got {flag:?}")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| UsageError(format!("missing value for --{key}")))?;
                (key.to_string(), v.clone())
            }
        };
        builder.set(&key.replace('-', "_"), &value)?;
    }
    let probe = builder.clone();
    if let Some(kind) = kind {
        if probe.build().is_err_and(|e| e == SpecError::Missing("kind")) {
            builder.set("kind", kind.as_str())?;
        }
    }
    let spec = builder.build()?;
    if let Some(kind) = kind {
        let ok = spec.kind == kind || (kind == ExperimentKind::Transfer && spec.kind == ExperimentKind::Monolingual);
        if !ok {
            return Err(UsageError(format!(
                "spec has kind = {} but the subcommand runs {}",
                spec.kind.as_str(),
                kind.as_str()
            ))
            .into());
        }
    }
    Ok(spec)
}

fn write_output(path: &Path, text: &str) -> Result<()> {
    if path == Path::new("-") {
        std::io::stdout().write_all(text.as_bytes())?;
        Ok(())
    } else {
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

fn cmd_prepare(args: &SpecArgs) -> Result<()> {
    let spec = load_spec(args, None)?;
    let split = prepare_split(&spec)?;
    println!(
        "wrote {} train, {} dev, {} test samples to {}",
        split.train.len(),
        split.dev.len(),
        split.test.len(),
        spec.out_dir.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let (split, _) = read_split_manifest(&args.split)?;
    if args.dropout < 0.0 || args.dropout >= 1.0 {
        return Err(UsageError("--dropout must lie in [0, 1)".into()).into());
    }
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
        eval_every: args.eval_every.max(1),
        selection: match args.selection {
            SelectionArg::Best => Selection::BestDevAccuracy,
            SelectionArg::Final => Selection::Final,
        },
        dropout: args.dropout,
        checkpoint_dir: Some(args.out.clone()),
        log_path: Some(args.out.join("train.log")),
        ..TrainConfig::default()
    };
    let outcome = match &args.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            let train = encode_all(&split.train, &ckpt.vocab)?;
            let dev = encode_all(&split.dev, &ckpt.vocab)?;
            trainer::resume_from(ckpt, &train, &dev, &config)?
        }
        None => {
            let vocab = SymbolVocab::build(split.all_samples())?;
            let train = encode_all(&split.train, &vocab)?;
            let dev = encode_all(&split.dev, &vocab)?;
            let longest = split.train.iter().map(|s| s.form.chars().count()).max().unwrap_or(0);
            let model_config = ModelConfig {
                hidden_size: args.hidden_size,
                embedding_size: args.embedding_size,
                input_vocab_size: vocab.input_size(),
                output_vocab_size: vocab.output_size(),
                max_decode_length: longest + args.decode_slack,
            };
            let model = Model::new(model_config, InitScheme::default(), args.seed)?;
            trainer::train(model, &vocab, &train, &dev, &config)?
        }
    };
    let s = &outcome.selected;
    match &s.dev {
        Some(d) => println!(
            "selected epoch {}: dev acc {:.4}, dev ED {:.2}",
            s.epoch, d.accuracy, d.mean_edit_distance
        ),
        None => println!("selected epoch {}", s.epoch),
    }
    Ok(())
}

fn cmd_decode(args: &DecodeArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let reader: Box<dyn Read> = if args.input == Path::new("-") {
        Box::new(std::io::stdin())
    } else {
        Box::new(std::fs::File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?)
    };
    let max_len = ckpt.model.config().max_decode_length;
    let mut out = String::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |e: &dyn std::fmt::Display| anyhow!("line {}: {e}", i + 1);
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 {
            bail!("line {}: expected language<TAB>lemma<TAB>tag", i + 1);
        }
        let lang = LanguageCode::new(cols[0]).map_err(|e| at(&e))?;
        let tag = parse_tag(cols[2], TagFormat::default()).map_err(|e| at(&e))?;
        let ids = ckpt.vocab.encode_query(&lang, &tag, cols[1]).map_err(|e| at(&e))?;
        let result = if args.beam <= 1 {
            morphxfer::model::greedy_decode(&ckpt.model.arch, &ckpt.model.params, &ids, max_len, false)?
        } else {
            morphxfer::model::beam_decode(&ckpt.model.arch, &ckpt.model.params, &ids, args.beam, max_len, false)?
        };
        let form = ckpt.vocab.decode_output(&result.ids)?;
        out.push_str(&format!("{}\t{}\t{}\t{form}\n", cols[0], cols[1], cols[2]));
    }
    write_output(&args.output, &out)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let (split, _) = read_split_manifest(&args.split)?;
    let samples = match args.subset {
        Subset::Dev => &split.dev,
        Subset::Test => &split.test,
    };
    let encoded = encode_all(samples, &ckpt.vocab)?;
    let predictions = trainer::predict_with(&ckpt.model, &ckpt.vocab, &encoded, args.beam)?;
    let golds: Vec<&str> = samples.iter().map(|s| s.form.as_str()).collect();
    let mut report = evalx::evaluate(&predictions, &golds)?;
    if args.per_tag {
        let tags: Vec<String> = samples.iter().map(|s| s.tag.to_string()).collect();
        report = evalx::with_per_tag(report, &tags, &predictions, &golds)?;
    }
    print!("{}", if args.tsv { report.to_tsv() } else { report.to_table() });
    Ok(())
}

fn cmd_exp(cmd: &ExpCommand) -> Result<()> {
    match cmd {
        ExpCommand::Transfer(a) => {
            let spec = load_spec(a, Some(ExperimentKind::Transfer))?;
            run_transfer(&spec)?;
            print_summary(&spec)
        }
        ExpCommand::Shot(a) => {
            let spec = load_spec(a, Some(ExperimentKind::Shot))?;
            run_shot(&spec)?;
            print_summary(&spec)
        }
        ExpCommand::Cipher(a) => {
            let spec = load_spec(a, Some(ExperimentKind::Cipher))?;
            run_cipher(&spec)?;
            print_summary(&spec)
        }
        ExpCommand::Curve(a) => {
            let spec = load_spec(a, Some(ExperimentKind::LearningCurve))?;
            run_learning_curve(&spec)?;
            print_summary(&spec)
        }
    }
}

fn print_summary(spec: &ExperimentSpec) -> Result<()> {
    let path = spec.out_dir.join("summary.txt");
    print!("{}", std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?);
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    let report = if args.adaptive {
        tiny_grad_check_steps(args.seed, &[args.step, 10.0 * args.step, 100.0 * args.step])?
    } else {
        tiny_grad_check(args.seed, args.step)?
    };
    println!("{report}");
    if !report.passes(args.tolerance) {
        return Err(NumericalError(format!(
            "max relative error {:.3e} exceeds {:.1e}",
            report.max_rel_error(),
            args.tolerance
        ))
        .into());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Train(a) => cmd_train(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Exp(c) => cmd_exp(c),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    info!("morphxfer {}", env!("CARGO_PKG_VERSION"));
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
