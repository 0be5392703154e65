//! Checkpoint files.
//!
//! Layout: magic `MXFR`, `u32` format version, `u64`-length-prefixed
//! vocabulary text, `u64`-length-prefixed `key = value` config text, `u32`
//! tensor count followed by tensors, then the SHA-256 of every preceding
//! byte. All integers little-endian.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{DevMetrics, TrainError};
use crate::encoding::SymbolVocab;
use crate::model::{InitScheme, Model, ModelConfig};
use crate::numerics::io::{read_tensor, write_tensor, Reader};
use crate::numerics::{AdaDelta, Tensor};

pub const MAGIC: &[u8; 4] = b"MXFR";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab: SymbolVocab,
    pub epoch: usize,
    pub seed: u64,
    pub dev: Option<DevMetrics>,
    /// Hex digest identifying the shuffle stream of the next epoch.
    pub rng_digest: String,
    /// Optimizer state; present when training can resume from this file.
    pub optimizer: Option<AdaDelta>,
}

fn corrupt(msg: impl Into<String>) -> TrainError {
    TrainError::Corrupt(msg.into())
}

impl Checkpoint {
    /// Refuses to pair this checkpoint with a different vocabulary.
    pub fn check_vocab(&self, vocab: &SymbolVocab) -> Result<(), TrainError> {
        if &self.vocab != vocab {
            return Err(TrainError::VocabMismatch);
        }
        Ok(())
    }

    fn config_text(&self) -> String {
        let c = self.model.config();
        let mut s = String::new();
        writeln!(s, "hidden_size = {}", c.hidden_size).unwrap();
        writeln!(s, "embedding_size = {}", c.embedding_size).unwrap();
        writeln!(s, "input_vocab_size = {}", c.input_vocab_size).unwrap();
        writeln!(s, "output_vocab_size = {}", c.output_vocab_size).unwrap();
        writeln!(s, "max_decode_length = {}", c.max_decode_length).unwrap();
        writeln!(s, "epoch = {}", self.epoch).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s, "rng_digest = {}", self.rng_digest).unwrap();
        if let Some(d) = &self.dev {
            writeln!(s, "dev_accuracy = {:?}", d.accuracy).unwrap();
            writeln!(s, "dev_edit_distance = {:?}", d.mean_edit_distance).unwrap();
            writeln!(s, "dev_loss = {:?}", d.loss).unwrap();
        }
        if let Some(o) = &self.optimizer {
            writeln!(s, "rho = {:?}", o.rho()).unwrap();
            writeln!(s, "eps = {:?}", o.eps()).unwrap();
        }
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for section in [self.vocab.to_text(), self.config_text()] {
            out.extend_from_slice(&(section.len() as u64).to_le_bytes());
            out.extend_from_slice(section.as_bytes());
        }
        let params = &self.model.params;
        let mut tensors: Vec<(String, &Tensor)> = params.iter().map(|(n, t)| (n.to_string(), t)).collect();
        if let Some(o) = &self.optimizer {
            for (i, name) in params.names().iter().enumerate() {
                tensors.push((format!("opt.sq_grad.{name}"), o.sq_grad(i)));
                tensors.push((format!("opt.sq_delta.{name}"), o.sq_delta(i)));
            }
        }
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            write_tensor(&mut out, &name, t);
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(corrupt("file too short"));
        }
        if &bytes[..4] != MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let (body, sum) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != sum {
            return Err(corrupt("checksum mismatch (truncated or modified file)"));
        }
        let mut r = Reader::new(&body[4..]);
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(TrainError::Version(version));
        }
        let text = |r: &mut Reader| -> Result<String, TrainError> {
            let n = r.u64()? as usize;
            let raw = r.take(n)?;
            String::from_utf8(raw.to_vec()).map_err(|_| corrupt("section is not UTF-8"))
        };
        let vocab = SymbolVocab::from_text(&text(&mut r)?)?;
        let config = text(&mut r)?;
        let mut kv = BTreeMap::new();
        for line in config.lines() {
            let (k, v) = line.split_once(" = ").ok_or_else(|| corrupt(format!("bad config line {line:?}")))?;
            kv.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| corrupt(format!("missing config key {k}")));
        let int = |k: &str| -> Result<usize, TrainError> { get(k)?.parse().map_err(|_| corrupt(format!("bad {k}"))) };
        let float = |k: &str| -> Result<f64, TrainError> { get(k)?.parse().map_err(|_| corrupt(format!("bad {k}"))) };
        let model_config = ModelConfig {
            hidden_size: int("hidden_size")?,
            embedding_size: int("embedding_size")?,
            input_vocab_size: int("input_vocab_size")?,
            output_vocab_size: int("output_vocab_size")?,
            max_decode_length: int("max_decode_length")?,
        };
        if model_config.input_vocab_size != vocab.input_size() || model_config.output_vocab_size != vocab.output_size() {
            return Err(corrupt("model config disagrees with the embedded vocabulary"));
        }
        let dev = if kv.contains_key("dev_accuracy") {
            Some(DevMetrics {
                accuracy: float("dev_accuracy")?,
                mean_edit_distance: float("dev_edit_distance")?,
                loss: float("dev_loss")?,
            })
        } else {
            None
        };

        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let (name, t) = read_tensor(&mut r)?;
            tensors.insert(name, t);
        }
        if r.remaining() != 0 {
            return Err(corrupt("trailing bytes after tensor section"));
        }
        let mut model = Model::new(model_config, InitScheme::default(), 0)?;
        let names: Vec<String> = model.params.names().to_vec();
        for (i, name) in names.iter().enumerate() {
            let t = tensors.remove(name).ok_or_else(|| corrupt(format!("missing tensor {name}")))?;
            let id = model.params.id(name).expect("own name");
            debug_assert_eq!(id.index(), i);
            if t.shape() != model.params.value(id).shape() {
                return Err(corrupt(format!("tensor {name} has the wrong shape")));
            }
            *model.params.value_mut(id) = t;
        }
        let optimizer = if kv.contains_key("rho") {
            let mut g = Vec::new();
            let mut d = Vec::new();
            for name in &names {
                let take = |tensors: &mut BTreeMap<String, Tensor>, k: String| {
                    tensors.remove(&k).ok_or_else(|| corrupt(format!("missing tensor {k}")))
                };
                g.push(take(&mut tensors, format!("opt.sq_grad.{name}"))?);
                d.push(take(&mut tensors, format!("opt.sq_delta.{name}"))?);
            }
            Some(AdaDelta::from_state(&model.params, float("rho")?, float("eps")?, g, d)?)
        } else {
            None
        };
        if let Some(extra) = tensors.keys().next() {
            return Err(corrupt(format!("unexpected tensor {extra}")));
        }
        Ok(Self {
            model,
            vocab,
            epoch: int("epoch")?,
            seed: get("seed")?.parse().map_err(|_| corrupt("bad seed"))?,
            dev,
            rng_digest: get("rng_digest")?.clone(),
            optimizer,
        })
    }

    /// Writes via a temporary file and rename so readers never see a
    /// partial checkpoint.
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let io = |source| TrainError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let bytes = std::fs::read(path).map_err(|source| TrainError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
