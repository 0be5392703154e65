use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::spec::{DataSource, ExperimentKind, ExperimentSpec, SpecError};
use super::synthetic::synthetic_family;
use crate::corpus::{
    apply_cipher, cipher_domain, load_unimorph, make_cipher, make_shot_split_reserving, sample_transfer_dataset_with,
    write_split_manifest, CipherMap, CorpusError, DatasetSplit, LanguageCode, Sample, ShotClass, SplitManifestMeta,
    SplitOptions,
};
use crate::encoding::{encode_all, EncodingError, SymbolVocab};
use crate::evalx::{self, EvalError, EvalReport};
use crate::model::{InitScheme, Model, ModelConfig, ModelError};
use crate::trainer::{self, Selection, TrainError};

#[derive(Debug, Error)]
pub enum ExpError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("no data for language {0}")]
    MissingData(LanguageCode),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("wrong experiment kind: expected {expected}, got {got}")]
    WrongKind { expected: &'static str, got: &'static str },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExpError + '_ {
    move |source| ExpError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), ExpError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

fn hex_digest(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// One evaluated cell: a source condition paired with a target train size.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    /// `0`, a language code, codes joined by `+`, or any of these followed
    /// by ` ciph`.
    pub source: String,
    pub target: LanguageCode,
    pub n_t: usize,
    pub accuracy: f64,
    pub mean_edit_distance: f64,
    /// Relative to the run directory.
    pub checkpoint: PathBuf,
    pub wall_time: f64,
}

pub const RESULTS_HEADER: &str = "source\ttarget\tn_t\tacc\ted\tcheckpoint";

impl ResultRow {
    /// Wall time is left out so that reruns give identical bytes.
    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:.4}\t{:.2}\t{}",
            self.source,
            self.target,
            self.n_t,
            self.accuracy,
            self.mean_edit_distance,
            self.checkpoint.display()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotRow {
    pub row: ResultRow,
    /// Test report with the one-/zero-shot breakdown filled in.
    pub report: EvalReport,
}

/// Points that could not be run, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub source: String,
    pub n_t: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveOutcome {
    pub rows: Vec<ResultRow>,
    pub skipped: Vec<Skipped>,
}

struct Pools {
    samples: BTreeMap<LanguageCode, Vec<Sample>>,
    digests: BTreeMap<String, String>,
}

impl Pools {
    fn get(&self, lang: &LanguageCode) -> Result<&[Sample], ExpError> {
        self.samples
            .get(lang)
            .map(Vec::as_slice)
            .ok_or_else(|| ExpError::MissingData(lang.clone()))
    }
}

fn load_pools(spec: &ExperimentSpec) -> Result<Pools, ExpError> {
    let wanted: Vec<&LanguageCode> = spec.sources.iter().chain([&spec.target]).collect();
    let mut samples = BTreeMap::new();
    let mut digests = BTreeMap::new();
    match &spec.data {
        DataSource::Synthetic { lemmata, seed } => {
            let f = synthetic_family(*lemmata, *seed);
            for (code, pool) in [("aa", f.a), ("bb", f.b), ("uu", f.u)] {
                let lang = LanguageCode::new(code).expect("valid code");
                if wanted.contains(&&lang) {
                    digests.insert(code.to_string(), format!("synthetic:{lemmata}:{seed}"));
                    samples.insert(lang, pool);
                }
            }
        }
        DataSource::Files(files) => {
            for lang in &wanted {
                let path = files.get(*lang).ok_or_else(|| ExpError::MissingData((*lang).clone()))?;
                let bytes = std::fs::read(path).map_err(io_err(path))?;
                digests.insert(lang.to_string(), hex_digest(&bytes));
                samples.insert((*lang).clone(), load_unimorph(path, lang)?);
            }
        }
    }
    for lang in wanted {
        if !samples.contains_key(lang) {
            return Err(ExpError::MissingData(lang.clone()));
        }
    }
    Ok(Pools { samples, digests })
}

/// Source conditions in row order: label and source languages.
fn conditions(spec: &ExperimentSpec) -> Vec<(String, Vec<LanguageCode>)> {
    let mut out = Vec::new();
    if spec.sources.is_empty() || spec.baseline {
        out.push(("0".to_string(), Vec::new()));
    }
    if spec.combined_sources && !spec.sources.is_empty() {
        let label = spec.sources.iter().map(LanguageCode::as_str).collect::<Vec<_>>().join("+");
        out.push((label, spec.sources.clone()));
    } else {
        out.extend(spec.sources.iter().map(|s| (s.to_string(), vec![s.clone()])));
    }
    out
}

fn draw_split(
    spec: &ExperimentSpec,
    pools: &Pools,
    sources: &[LanguageCode],
    n_t: usize,
) -> Result<DatasetSplit, ExpError> {
    let source_pools = sources.iter().map(|l| pools.get(l)).collect::<Result<Vec<_>, _>>()?;
    let mut sizes = spec.sizes();
    sizes.n_t = n_t;
    if sources.is_empty() {
        sizes.n_s = 0;
    }
    let options = SplitOptions {
        exclude_overlapping_lemmata: spec.exclude_overlapping_lemmata,
    };
    Ok(sample_transfer_dataset_with(
        &source_pools,
        pools.get(&spec.target)?,
        sizes,
        spec.seeds().split,
        options,
    )?)
}

/// Hash of what training sees of the target language: the positions of
/// target samples in the training list, the shuffle seed, dev and test.
pub fn target_stream_digest(train: &[Sample], dev: &[Sample], test: &[Sample], target: &LanguageCode, shuffle_seed: u64) -> String {
    let mut s = format!("{}\t{shuffle_seed}\n", train.len());
    for (i, x) in train.iter().enumerate().filter(|(_, x)| &x.language == target) {
        writeln!(s, "train\t{i}\t{}\t{}\t{}", x.lemma, x.tag, x.form).unwrap();
    }
    for (name, part) in [("dev", dev), ("test", test)] {
        for x in part {
            writeln!(s, "{name}\t{}\t{}\t{}", x.lemma, x.tag, x.form).unwrap();
        }
    }
    hex_digest(s.as_bytes())
}

struct Cell<'a> {
    label: String,
    dir_name: String,
    n_t: usize,
    split: DatasetSplit,
    /// Overrides the split's test set (shot runs evaluate their own list).
    eval: Option<&'a [Sample]>,
}

struct CellOutcome {
    row: ResultRow,
    predictions: Vec<String>,
    manifest: String,
}

fn cell_dir_name(label: &str, n_t: usize) -> String {
    format!("{}_n{n_t}", label.replace(' ', "_"))
}

fn run_cell(spec: &ExperimentSpec, cell: Cell<'_>) -> Result<CellOutcome, ExpError> {
    let started = Instant::now();
    let rel = PathBuf::from("cells").join(&cell.dir_name);
    let dir = spec.out_dir.join(&rel);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let split = &cell.split;
    let test = cell.eval.unwrap_or(&split.test);
    info!("cell {}: {} train, {} dev, {} test", cell.dir_name, split.train.len(), split.dev.len(), test.len());
    write_split_manifest(&dir, split, &SplitManifestMeta::default())?;

    let vocab = SymbolVocab::build(split.all_samples().chain(test))?;
    let train = encode_all(&split.train, &vocab)?;
    let dev = encode_all(&split.dev, &vocab)?;
    let test_enc = encode_all(test, &vocab)?;
    let longest = split.train.iter().map(|s| s.form.chars().count()).max().unwrap_or(0);
    let config = ModelConfig {
        hidden_size: spec.hidden_size,
        embedding_size: spec.embedding_size,
        input_vocab_size: vocab.input_size(),
        output_vocab_size: vocab.output_size(),
        max_decode_length: longest + spec.decode_slack,
    };
    let seeds = spec.seeds();
    let model = Model::new(config, InitScheme::default(), seeds.init)?;
    let log_path = dir.join("train.log");
    if log_path.exists() {
        std::fs::remove_file(&log_path).map_err(io_err(&log_path))?;
    }
    let train_config = trainer::TrainConfig {
        checkpoint_dir: Some(dir.clone()),
        log_path: Some(log_path),
        ..spec.train_config()
    };
    let outcome = trainer::train(model, &vocab, &train, &dev, &train_config)?;
    let predictions = trainer::predict_with(&outcome.selected.model, &vocab, &test_enc, spec.beam_width)?;
    let golds: Vec<&str> = test.iter().map(|s| s.form.as_str()).collect();
    let report = evalx::evaluate(&predictions, &golds)?;

    let mut pred_tsv = String::from("lemma\ttag\tgold\tprediction\n");
    for (s, p) in test.iter().zip(&predictions) {
        writeln!(pred_tsv, "{}\t{}\t{}\t{p}", s.lemma, s.tag, s.form).unwrap();
    }
    write_file(&dir.join("predictions.tsv"), &pred_tsv)?;

    let ckpt_name = match spec.selection {
        Selection::BestDevAccuracy => "best.ckpt",
        Selection::Final => "final.ckpt",
    };
    let mut manifest = String::new();
    writeln!(manifest, "[cell {}]", cell.dir_name).unwrap();
    writeln!(manifest, "source = {}", cell.label).unwrap();
    writeln!(manifest, "n_t = {}", cell.n_t).unwrap();
    writeln!(manifest, "selected_epoch = {}", outcome.selected.epoch).unwrap();
    writeln!(manifest, "vocab_digest = {}", hex_digest(vocab.to_text().as_bytes())).unwrap();
    writeln!(manifest, "checkpoint_digest = {}", hex_digest(&outcome.selected.to_bytes())).unwrap();
    writeln!(
        manifest,
        "target_stream_digest = {}",
        target_stream_digest(&split.train, &split.dev, test, &spec.target, seeds.shuffle)
    )
    .unwrap();

    Ok(CellOutcome {
        row: ResultRow {
            source: cell.label,
            target: spec.target.clone(),
            n_t: cell.n_t,
            accuracy: report.accuracy,
            mean_edit_distance: report.mean_edit_distance,
            checkpoint: rel.join(ckpt_name),
            wall_time: started.elapsed().as_secs_f64(),
        },
        predictions,
        manifest,
    })
}

/// Paper-style table: one column per source, acc and ED rows per `n_t`.
pub fn summary_table(rows: &[ResultRow]) -> String {
    let mut sources: Vec<&str> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    for r in rows {
        if !sources.contains(&r.source.as_str()) {
            sources.push(&r.source);
        }
        if !sizes.contains(&r.n_t) {
            sizes.push(r.n_t);
        }
    }
    let width = sources.iter().map(|s| s.chars().count()).max().unwrap_or(0).max(6) + 2;
    let mut out = String::new();
    let target = rows.first().map(|r| r.target.to_string()).unwrap_or_default();
    write!(out, "{:<12}", format!("-> {target}")).unwrap();
    for s in &sources {
        write!(out, "{s:>width$}").unwrap();
    }
    out.push('\n');
    for n in sizes {
        for (metric, first) in [("acc", true), ("ED", false)] {
            let lead = if first { n.to_string() } else { String::new() };
            write!(out, "{lead:<8}{metric:<4}").unwrap();
            for s in &sources {
                match rows.iter().find(|r| r.n_t == n && r.source == *s) {
                    Some(r) if first => write!(out, "{:>width$.2}", r.accuracy).unwrap(),
                    Some(r) => write!(out, "{:>width$.2}", r.mean_edit_distance).unwrap(),
                    None => write!(out, "{:>width$}", "-").unwrap(),
                }
            }
            out.push('\n');
        }
    }
    out
}

fn results_tsv(rows: &[ResultRow]) -> String {
    let mut s = format!("{RESULTS_HEADER}\n");
    for r in rows {
        s.push_str(&r.tsv_line());
        s.push('\n');
    }
    s
}

fn timing_tsv(rows: &[ResultRow]) -> String {
    let mut s = String::from("source\tn_t\tseconds\n");
    for r in rows {
        writeln!(s, "{}\t{}\t{:.1}", r.source, r.n_t, r.wall_time).unwrap();
    }
    s
}

fn write_run_files(spec: &ExperimentSpec, pools: &Pools, rows: &[ResultRow], cells: &[String], extra: &str) -> Result<(), ExpError> {
    let out = &spec.out_dir;
    write_file(&out.join("results.tsv"), &results_tsv(rows))?;
    write_file(&out.join("timing.tsv"), &timing_tsv(rows))?;
    write_file(&out.join("summary.txt"), &format!("{}{extra}", summary_table(rows)))?;
    let seeds = spec.seeds();
    let mut m = String::from("[spec]\n");
    m.push_str(&spec.to_text());
    writeln!(m, "\n[seeds]").unwrap();
    writeln!(m, "split = {}\ninit = {}\nshuffle = {}\ncipher = {}", seeds.split, seeds.init, seeds.shuffle, seeds.cipher).unwrap();
    writeln!(m, "\n[data]").unwrap();
    for (lang, d) in &pools.digests {
        writeln!(m, "{lang} = {d}").unwrap();
    }
    for c in cells {
        m.push('\n');
        m.push_str(c);
    }
    write_file(&out.join("manifest.txt"), &m)
}

fn expect_kind(spec: &ExperimentSpec, allowed: &[ExperimentKind], expected: &'static str) -> Result<(), ExpError> {
    if allowed.contains(&spec.kind) {
        Ok(())
    } else {
        Err(ExpError::WrongKind {
            expected,
            got: spec.kind.as_str(),
        })
    }
}

/// One model per source condition on shared target train/dev/test data.
pub fn run_transfer(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, ExpError> {
    expect_kind(spec, &[ExperimentKind::Transfer, ExperimentKind::Monolingual], "transfer or monolingual")?;
    spec.validate()?;
    let pools = load_pools(spec)?;
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for (label, sources) in conditions(spec) {
        let split = draw_split(spec, &pools, &sources, spec.n_t)?;
        let out = run_cell(
            spec,
            Cell {
                dir_name: cell_dir_name(&label, spec.n_t),
                label,
                n_t: spec.n_t,
                split,
                eval: None,
            },
        )?;
        info!("{}", out.row.tsv_line());
        rows.push(out.row);
        cells.push(out.manifest);
    }
    write_run_files(spec, &pools, &rows, &cells, "")?;
    Ok(rows)
}

/// One run per (source condition, `n_t`) with shared dev/test; rows are
/// ordered by `n_t`. Points the target pool cannot supply are skipped.
pub fn run_learning_curve(spec: &ExperimentSpec) -> Result<CurveOutcome, ExpError> {
    expect_kind(spec, &[ExperimentKind::LearningCurve], "learning_curve")?;
    spec.validate()?;
    let pools = load_pools(spec)?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut cells = Vec::new();
    for n_t in spec.curve_points() {
        for (label, sources) in conditions(spec) {
            let split = match draw_split(spec, &pools, &sources, n_t) {
                Ok(s) => s,
                Err(ExpError::Corpus(e @ CorpusError::InsufficientPool { .. })) => {
                    warn!("skipping {label} at n_t = {n_t}: {e}");
                    skipped.push(Skipped {
                        source: label,
                        n_t,
                        reason: e.to_string(),
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let out = run_cell(
                spec,
                Cell {
                    dir_name: cell_dir_name(&label, n_t),
                    label,
                    n_t,
                    split,
                    eval: None,
                },
            )?;
            rows.push(out.row);
            cells.push(out.manifest);
        }
    }
    let mut csv = String::from("source,n_t,accuracy,edit_distance\n");
    for r in &rows {
        writeln!(csv, "{},{},{:.4},{:.4}", r.source, r.n_t, r.accuracy, r.mean_edit_distance).unwrap();
    }
    write_file(&spec.out_dir.join("curve.csv"), &csv)?;
    let mut extra = String::new();
    for s in &skipped {
        writeln!(extra, "skipped {} at n_t = {}: {}", s.source, s.n_t, s.reason).unwrap();
    }
    write_run_files(spec, &pools, &rows, &cells, &extra)?;
    Ok(CurveOutcome { rows, skipped })
}

/// Target train holds one sample for each tag in a random half of the tag
/// set; the shared test set is scored per shot class.
pub fn run_shot(spec: &ExperimentSpec) -> Result<Vec<ShotRow>, ExpError> {
    expect_kind(spec, &[ExperimentKind::Shot], "shot")?;
    spec.validate()?;
    let pools = load_pools(spec)?;
    let target_pool = pools.get(&spec.target)?;
    let mut out_rows = Vec::new();
    let mut cells = Vec::new();
    let mut shot_tsv = String::from("source\ttarget\tclass\tn\tacc\ted\n");
    for (label, sources) in conditions(spec) {
        let mut split = draw_split(spec, &pools, &sources, 0)?;
        let held: HashSet<(&str, &crate::corpus::MorphTag)> =
            split.dev.iter().chain(&split.test).map(|s| (s.lemma.as_str(), &s.tag)).collect();
        let free: Vec<Sample> = target_pool
            .iter()
            .filter(|s| !held.contains(&(s.lemma.as_str(), &s.tag)))
            .cloned()
            .collect();
        let shot = make_shot_split_reserving(&free, &split.test, spec.seeds().split)?;
        let classes: Vec<Option<ShotClass>> = shot.eval.iter().map(|s| Some(s.class)).collect();
        if shot.eval.len() != split.test.len() {
            return Err(ExpError::Invariant("shot evaluation set differs from the test set".into()));
        }
        let eval: Vec<Sample> = shot.eval.iter().map(|s| s.sample.clone()).collect();
        split.train.extend(shot.train.iter().cloned());
        split.meta.n_t = shot.train.len();
        let n_t = shot.train.len();
        let out = run_cell(
            spec,
            Cell {
                dir_name: cell_dir_name(&label, n_t),
                label: label.clone(),
                n_t,
                split,
                eval: Some(&eval),
            },
        )?;
        let golds: Vec<&str> = eval.iter().map(|s| s.form.as_str()).collect();
        let report = evalx::shot_report(&classes, &out.predictions, &golds)?;
        let shots = report.shots.as_ref().expect("shot report has a breakdown");
        for (name, c) in [("one-shot", &shots.one_shot), ("zero-shot", &shots.zero_shot)] {
            let f = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$}"));
            writeln!(shot_tsv, "{label}\t{}\t{name}\t{}\t{}\t{}", spec.target, c.n, f(c.accuracy, 4), f(c.mean_edit_distance, 2)).unwrap();
        }
        cells.push(out.manifest);
        out_rows.push(ShotRow { row: out.row, report });
    }
    write_file(&spec.out_dir.join("shot.tsv"), &shot_tsv)?;
    let rows: Vec<ResultRow> = out_rows.iter().map(|r| r.row.clone()).collect();
    write_run_files(spec, &pools, &rows, &cells, &shot_table(&out_rows))?;
    Ok(out_rows)
}

fn shot_table(rows: &[ShotRow]) -> String {
    let mut out = String::from("\n");
    write!(out, "{:<16}", "").unwrap();
    for r in rows {
        write!(out, "{:>8}", r.row.source).unwrap();
    }
    out.push('\n');
    for (name, one) in [("one-shot", true), ("zero-shot", false)] {
        for (metric, acc) in [("acc", true), ("ED", false)] {
            write!(out, "{:<12}{metric:<4}", if acc { name } else { "" }).unwrap();
            for r in rows {
                let shots = r.report.shots.as_ref().expect("breakdown");
                let c = if one { &shots.one_shot } else { &shots.zero_shot };
                let v = if acc { c.accuracy } else { c.mean_edit_distance };
                match v {
                    Some(x) => write!(out, "{x:>8.2}").unwrap(),
                    None => write!(out, "{:>8}", "-").unwrap(),
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Trains on the original and on the ciphered source with identical splits
/// and seeds; returns `[original, ciphered]` (after a "0" row if requested).
pub fn run_cipher(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, ExpError> {
    expect_kind(spec, &[ExperimentKind::Cipher], "cipher")?;
    spec.validate()?;
    let pools = load_pools(spec)?;
    let source = spec.sources[0].clone();
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    if spec.baseline {
        let split = draw_split(spec, &pools, &[], spec.n_t)?;
        let out = run_cell(
            spec,
            Cell {
                dir_name: cell_dir_name("0", spec.n_t),
                label: "0".into(),
                n_t: spec.n_t,
                split,
                eval: None,
            },
        )?;
        rows.push(out.row);
        cells.push(out.manifest);
    }

    let split = draw_split(spec, &pools, std::slice::from_ref(&source), spec.n_t)?;
    let (chars, subtags) = cipher_domain(split.train.iter().filter(|s| s.language == source));
    let cipher = if spec.identity_cipher {
        CipherMap::identity(&chars, &subtags)
    } else {
        make_cipher(&chars, &subtags, spec.seeds().cipher)?
    };
    let mut ciphered = split.clone();
    for s in ciphered.train.iter_mut().filter(|s| s.language == source) {
        *s = apply_cipher(s, &cipher)?;
    }

    let seeds = spec.seeds();
    let digest = |s: &DatasetSplit| target_stream_digest(&s.train, &s.dev, &s.test, &spec.target, seeds.shuffle);
    if digest(&split) != digest(&ciphered) {
        return Err(ExpError::Invariant("ciphering changed the target-language stream".into()));
    }
    let mut cipher_text = String::from("[cipher]\n");
    writeln!(cipher_text, "seed = {}", cipher.seed()).unwrap();
    for (a, b) in cipher.chars() {
        writeln!(cipher_text, "char {a} = {b}").unwrap();
    }
    for (a, b) in cipher.subtags() {
        writeln!(cipher_text, "subtag {a} = {b}").unwrap();
    }

    for (label, split) in [(source.to_string(), split), (format!("{source} ciph"), ciphered)] {
        let out = run_cell(
            spec,
            Cell {
                dir_name: cell_dir_name(&label, spec.n_t),
                label,
                n_t: spec.n_t,
                split,
                eval: None,
            },
        )?;
        rows.push(out.row);
        cells.push(out.manifest);
    }
    cells.push(cipher_text);
    write_run_files(spec, &pools, &rows, &cells, "")?;
    Ok(rows)
}

/// Draws the split for `spec` (all sources in one training set) and writes
/// `split.tsv` / `split.meta` into the output directory.
pub fn prepare_split(spec: &ExperimentSpec) -> Result<DatasetSplit, ExpError> {
    spec.validate()?;
    let pools = load_pools(spec)?;
    let split = draw_split(spec, &pools, &spec.sources, spec.n_t)?;
    let meta = SplitManifestMeta {
        source_digests: pools.digests.clone(),
        extra: BTreeMap::from([("kind".to_string(), spec.kind.as_str().to_string())]),
    };
    write_split_manifest(&spec.out_dir, &split, &meta)?;
    Ok(split)
}
