//! Mini-batch training with AdaDelta, periodic dev evaluation, model
//! selection and checkpoints.

mod checkpoint;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};

use std::io::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::encoding::{make_batches, EncodedSample, EncodingError, SymbolVocab};
use crate::evalx::{self, EvalError};
use crate::model::{beam_decode, eval_loss, greedy_decode, Dropout, Model, ModelError};
use crate::numerics::{AdaDelta, NumericsError, Tape, DEFAULT_EPS, DEFAULT_RHO};
use crate::seed;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("training set is empty")]
    EmptyTrain,
    #[error("dev set is empty; cannot compute metrics")]
    EmptyDev,
    #[error("checkpoint vocabulary does not match the data vocabulary")]
    VocabMismatch,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("unsupported checkpoint format version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    /// Keep the parameters after the last epoch.
    Final,
    /// Keep the evaluated epoch with the highest dev accuracy; ties go to
    /// lower dev edit distance, then to the earlier epoch.
    BestDevAccuracy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Evaluate on dev every this many epochs (0: only after the last one).
    pub eval_every: usize,
    pub selection: Selection,
    pub rho: f64,
    pub eps: f64,
    /// Dropout on embedded inputs; 0 disables it.
    pub dropout: f64,
    /// Where to write `best.ckpt` / `final.ckpt`, if anywhere.
    pub checkpoint_dir: Option<PathBuf>,
    /// Training log TSV, appended to.
    pub log_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 20,
            seed: 0,
            eval_every: 10,
            selection: Selection::BestDevAccuracy,
            rho: DEFAULT_RHO,
            eps: DEFAULT_EPS,
            dropout: 0.0,
            checkpoint_dir: None,
            log_path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DevMetrics {
    pub accuracy: f64,
    pub mean_edit_distance: f64,
    /// Mean per-sequence NLL.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-sequence NLL over the epoch's training batches.
    pub train_loss: f64,
    pub dev: Option<DevMetrics>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Checkpoint chosen by the selection policy.
    pub selected: Checkpoint,
    /// State after the last epoch, including optimizer state.
    pub last: Checkpoint,
    pub history: Vec<EpochLog>,
}

fn shuffle_seed(seed: u64, epoch: usize) -> u64 {
    seed::derive_seed(seed, &format!("shuffle:{epoch}"))
}

fn rng_digest(seed: u64, next_epoch: usize) -> String {
    format!("{:016x}", shuffle_seed(seed, next_epoch))
}

/// Mean per-sequence loss of `data` without dropout.
pub fn dataset_loss(model: &Model, data: &[EncodedSample], batch_size: usize) -> Result<f64, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDev);
    }
    let mut total = 0.0;
    for b in make_batches(data, batch_size.max(1), 0, false)? {
        let mut tape = Tape::new(&model.params);
        let l = eval_loss(&model.arch, &mut tape, &b)?;
        total += tape.value(l.per_sequence).iter().sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

/// Greedy predictions for every sample, as strings.
pub fn predict(model: &Model, vocab: &SymbolVocab, data: &[EncodedSample]) -> Result<Vec<String>, TrainError> {
    predict_with(model, vocab, data, 1)
}

/// Predictions with beam search; width 1 is greedy decoding.
pub fn predict_with(
    model: &Model,
    vocab: &SymbolVocab,
    data: &[EncodedSample],
    beam_width: usize,
) -> Result<Vec<String>, TrainError> {
    let max_len = model.config().max_decode_length;
    data.iter()
        .map(|e| {
            let r = if beam_width <= 1 {
                greedy_decode(&model.arch, &model.params, &e.input_ids, max_len, false)?
            } else {
                beam_decode(&model.arch, &model.params, &e.input_ids, beam_width, max_len, false)?
            };
            Ok(vocab.decode_output(&r.ids)?)
        })
        .collect()
}

/// Greedy-decodes `dev` and scores it.
pub fn evaluate_dev(
    model: &Model,
    vocab: &SymbolVocab,
    dev: &[EncodedSample],
    batch_size: usize,
) -> Result<DevMetrics, TrainError> {
    if dev.is_empty() {
        return Err(TrainError::EmptyDev);
    }
    let predictions = predict(model, vocab, dev)?;
    let golds = dev
        .iter()
        .map(|e| vocab.decode_output(&e.target_ids))
        .collect::<Result<Vec<_>, _>>()?;
    let report = evalx::evaluate(&predictions, &golds)?;
    Ok(DevMetrics {
        accuracy: report.accuracy,
        mean_edit_distance: report.mean_edit_distance,
        loss: dataset_loss(model, dev, batch_size)?,
    })
}

fn better(a: &DevMetrics, a_epoch: usize, b: &DevMetrics, b_epoch: usize) -> bool {
    if a.accuracy != b.accuracy {
        return a.accuracy > b.accuracy;
    }
    if a.mean_edit_distance != b.mean_edit_distance {
        return a.mean_edit_distance < b.mean_edit_distance;
    }
    a_epoch < b_epoch
}

struct Log {
    file: Option<(PathBuf, std::fs::File)>,
}

impl Log {
    fn open(path: Option<&PathBuf>) -> Result<Self, TrainError> {
        let Some(path) = path else {
            return Ok(Self { file: None });
        };
        let io = |source| TrainError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let fresh = !path.exists();
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        if fresh {
            writeln!(f, "epoch\ttrain_loss\tdev_acc\tdev_ed").map_err(io)?;
        }
        Ok(Self {
            file: Some((path.clone(), f)),
        })
    }

    fn write(&mut self, e: &EpochLog) -> Result<(), TrainError> {
        let Some((path, f)) = &mut self.file else {
            return Ok(());
        };
        let (acc, ed) = match &e.dev {
            Some(d) => (format!("{:.4}", d.accuracy), format!("{:.4}", d.mean_edit_distance)),
            None => ("-".into(), "-".into()),
        };
        writeln!(f, "{}\t{:.6}\t{acc}\t{ed}", e.epoch, e.train_loss).map_err(|source| TrainError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Trains `model` on `train`, evaluating on `dev` (may be empty when the
/// selection policy is [`Selection::Final`]).
pub fn train(
    model: Model,
    vocab: &SymbolVocab,
    train: &[EncodedSample],
    dev: &[EncodedSample],
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let optimizer = AdaDelta::new(&model.params, config.rho, config.eps);
    resume(model, optimizer, 0, vocab, train, dev, config)
}

/// Continues training from a saved checkpoint that carries optimizer state.
pub fn resume_from(
    checkpoint: Checkpoint,
    train_data: &[EncodedSample],
    dev: &[EncodedSample],
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let optimizer = checkpoint
        .optimizer
        .clone()
        .ok_or_else(|| TrainError::Corrupt("checkpoint has no optimizer state".into()))?;
    resume(checkpoint.model, optimizer, checkpoint.epoch, &checkpoint.vocab, train_data, dev, config)
}

fn resume(
    mut model: Model,
    mut optimizer: AdaDelta,
    start_epoch: usize,
    vocab: &SymbolVocab,
    train: &[EncodedSample],
    dev: &[EncodedSample],
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    if config.selection == Selection::BestDevAccuracy && dev.is_empty() {
        return Err(TrainError::EmptyDev);
    }
    let mut log = Log::open(config.log_path.as_ref())?;
    let snapshot = |model: &Model, optimizer: &AdaDelta, epoch: usize, dev: Option<DevMetrics>| {
        let mut model = model.clone();
        model.params.zero_grads();
        Checkpoint {
            model,
            vocab: vocab.clone(),
            epoch,
            seed: config.seed,
            dev,
            rng_digest: rng_digest(config.seed, epoch + 1),
            optimizer: Some(optimizer.clone()),
        }
    };

    let mut history = Vec::new();
    let mut best: Option<Checkpoint> = None;
    for epoch in start_epoch + 1..=config.epochs {
        let batches = make_batches(train, config.batch_size, shuffle_seed(config.seed, epoch), true)?;
        let mut dropout_rng = seed::stream(config.seed, &format!("dropout:{epoch}"));
        let mut epoch_loss = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let grads = {
                let mut tape = Tape::new(&model.params);
                let dropout = (config.dropout > 0.0).then(|| Dropout {
                    rate: config.dropout,
                    rng: &mut dropout_rng,
                });
                // With a non-empty softmax support, an all-masked error can
                // only come from NaN logits.
                let loss = match model.arch.batch_loss(&mut tape, batch, dropout) {
                    Err(NumericsError::AllMasked) => return Err(TrainError::NonFinite { epoch, batch: bi }),
                    other => other?,
                };
                let value = tape.scalar(loss.mean).expect("scalar loss");
                if !value.is_finite() {
                    return Err(TrainError::NonFinite { epoch, batch: bi });
                }
                epoch_loss += value * batch.size as f64;
                tape.backward(loss.mean)?
            };
            model.params.zero_grads();
            model.params.accumulate(&grads);
            optimizer.step(&mut model.params);
            if !model.params.all_finite() {
                return Err(TrainError::NonFinite { epoch, batch: bi });
            }
        }
        let due = epoch == config.epochs || (config.eval_every > 0 && epoch % config.eval_every == 0);
        let dev_metrics = if due && !dev.is_empty() {
            Some(evaluate_dev(&model, vocab, dev, config.batch_size)?)
        } else {
            None
        };
        let entry = EpochLog {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            dev: dev_metrics,
        };
        log::debug!("epoch {epoch}: loss {:.4} dev {:?}", entry.train_loss, entry.dev);
        log.write(&entry)?;
        history.push(entry);
        if let (Selection::BestDevAccuracy, Some(m)) = (config.selection, dev_metrics) {
            let improves = best.as_ref().map_or(true, |b| better(&m, epoch, b.dev.as_ref().unwrap(), b.epoch));
            if improves {
                best = Some(snapshot(&model, &optimizer, epoch, Some(m)));
            }
        }
    }

    let final_dev = history.last().and_then(|h| h.dev);
    let last = snapshot(&model, &optimizer, config.epochs.max(start_epoch), final_dev);
    let selected = match config.selection {
        Selection::Final => last.clone(),
        Selection::BestDevAccuracy => best.unwrap_or_else(|| last.clone()),
    };
    if let Some(dir) = &config.checkpoint_dir {
        selected.save(&dir.join("best.ckpt"))?;
        last.save(&dir.join("final.ckpt"))?;
    }
    Ok(TrainOutcome {
        selected,
        last,
        history,
    })
}

#[cfg(test)]
mod tests;
