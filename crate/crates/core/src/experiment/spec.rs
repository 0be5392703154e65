use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::{learning_curve_sizes, LanguageCode, SplitSizes};
use crate::seed::derive_seed;
use crate::trainer::{Selection, TrainConfig};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {value:?} ({reason})")]
    BadValue { key: String, value: String, reason: String },
    #[error("missing required key {0}")]
    Missing(&'static str),
    #[error("inconsistent spec: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Transfer,
    Shot,
    Cipher,
    LearningCurve,
    Monolingual,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Transfer => "transfer",
            Self::Shot => "shot",
            Self::Cipher => "cipher",
            Self::LearningCurve => "learning_curve",
            Self::Monolingual => "monolingual",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "transfer" => Self::Transfer,
            "shot" => Self::Shot,
            "cipher" => Self::Cipher,
            "learning_curve" | "curve" => Self::LearningCurve,
            "monolingual" => Self::Monolingual,
            _ => return Err("expected transfer, shot, cipher, learning_curve or monolingual".into()),
        })
    }
}

/// Seeds expanded from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub split: u64,
    pub init: u64,
    pub shuffle: u64,
    pub cipher: u64,
}

/// Where samples come from: UniMorph files per language, or the built-in
/// synthetic family (`aa`, `bb`, `uu`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    Files(BTreeMap<LanguageCode, PathBuf>),
    Synthetic { lemmata: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub sources: Vec<LanguageCode>,
    pub target: LanguageCode,
    pub n_s: usize,
    pub n_t: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub seed: u64,
    pub cipher_seed: Option<u64>,
    /// Forces the identity cipher (sanity check for cipher runs).
    pub identity_cipher: bool,
    /// Adds a "0" (target only) row to transfer and curve runs.
    pub baseline: bool,
    /// Puts all sources into one training set instead of one row each.
    pub combined_sources: bool,
    pub exclude_overlapping_lemmata: bool,
    pub data: DataSource,
    pub hidden_size: usize,
    pub embedding_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub eval_every: usize,
    pub dropout: f64,
    pub selection: Selection,
    pub beam_width: usize,
    /// Slack added to the longest training form to bound decoding.
    pub decode_slack: usize,
    pub curve_sizes: Vec<usize>,
    pub extra_points: Vec<usize>,
    pub out_dir: PathBuf,
}

pub const KEYS: &[&str] = &[
    "kind",
    "sources",
    "target",
    "n_s",
    "n_t",
    "dev_size",
    "test_size",
    "seed",
    "cipher_seed",
    "identity_cipher",
    "baseline",
    "combined_sources",
    "exclude_overlapping_lemmata",
    "synthetic_lemmata",
    "synthetic_seed",
    "hidden_size",
    "embedding_size",
    "epochs",
    "batch_size",
    "eval_every",
    "dropout",
    "selection",
    "beam_width",
    "decode_slack",
    "curve_sizes",
    "extra_points",
    "out_dir",
];

fn bad(key: &str, value: &str, reason: impl ToString) -> SpecError {
    SpecError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: reason.to_string(),
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, SpecError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, SpecError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Raw key/value pairs, later entries overriding earlier ones.
#[derive(Debug, Clone, Default)]
pub struct SpecBuilder {
    values: BTreeMap<String, String>,
}

impl SpecBuilder {
    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// skipped.
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let mut b = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| SpecError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            b.set(k.trim(), v.trim())?;
        }
        Ok(b)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<&mut Self, SpecError> {
        if !KEYS.contains(&key) && !key.starts_with("data.") {
            return Err(SpecError::UnknownKey(key.into()));
        }
        self.values.insert(key.into(), value.into());
        Ok(self)
    }

    pub fn build(&self) -> Result<ExperimentSpec, SpecError> {
        let get = |k: &str| self.values.get(k).map(String::as_str);
        let kind: ExperimentKind = match get("kind") {
            Some(v) => v.parse().map_err(|e| bad("kind", v, e))?,
            None => return Err(SpecError::Missing("kind")),
        };
        let lang = |k: &str, v: &str| LanguageCode::new(v).map_err(|e| bad(k, v, e));
        let sources = match get("sources") {
            Some(v) => list(v).map(|s| lang("sources", s)).collect::<Result<Vec<_>, _>>()?,
            None => Vec::new(),
        };
        let target = lang("target", get("target").ok_or(SpecError::Missing("target"))?)?;
        let defaults = SplitSizes::default();
        let train_defaults = TrainConfig::default();
        let num = |k: &str, d: usize| -> Result<usize, SpecError> { get(k).map_or(Ok(d), |v| parse_num(k, v)) };
        let flag = |k: &str| -> Result<bool, SpecError> { get(k).map_or(Ok(false), |v| parse_bool(k, v)) };
        let sizes = |k: &str, d: Vec<usize>| -> Result<Vec<usize>, SpecError> {
            match get(k) {
                Some(v) => list(v).map(|x| parse_num(k, x)).collect(),
                None => Ok(d),
            }
        };

        let data = match get("synthetic_lemmata") {
            Some(v) => {
                if self.values.keys().any(|k| k.starts_with("data.")) {
                    return Err(SpecError::Inconsistent("synthetic_lemmata and data.* are exclusive".into()));
                }
                DataSource::Synthetic {
                    lemmata: parse_num("synthetic_lemmata", v)?,
                    seed: get("synthetic_seed").map_or(Ok(0), |v| parse_num("synthetic_seed", v))?,
                }
            }
            None => {
                let mut files = BTreeMap::new();
                for (k, v) in &self.values {
                    if let Some(code) = k.strip_prefix("data.") {
                        files.insert(lang(k, code)?, PathBuf::from(v));
                    }
                }
                DataSource::Files(files)
            }
        };
        let selection = match get("selection") {
            None | Some("best") => Selection::BestDevAccuracy,
            Some("final") => Selection::Final,
            Some(v) => return Err(bad("selection", v, "expected best or final")),
        };
        let dropout: f64 = get("dropout").map_or(Ok(0.0), |v| parse_num("dropout", v))?;
        if !(0.0..1.0).contains(&dropout) {
            return Err(bad("dropout", &dropout.to_string(), "must lie in [0, 1)"));
        }

        let spec = ExperimentSpec {
            kind,
            sources,
            target,
            n_s: num("n_s", defaults.n_s)?,
            n_t: num("n_t", defaults.n_t)?,
            dev_size: num("dev_size", defaults.dev)?,
            test_size: num("test_size", defaults.test)?,
            seed: get("seed").map_or(Ok(0), |v| parse_num("seed", v))?,
            cipher_seed: get("cipher_seed").map(|v| parse_num("cipher_seed", v)).transpose()?,
            identity_cipher: flag("identity_cipher")?,
            baseline: flag("baseline")?,
            combined_sources: flag("combined_sources")?,
            exclude_overlapping_lemmata: flag("exclude_overlapping_lemmata")?,
            data,
            hidden_size: num("hidden_size", 100)?,
            embedding_size: num("embedding_size", 300)?,
            epochs: num("epochs", train_defaults.epochs)?,
            batch_size: num("batch_size", train_defaults.batch_size)?,
            eval_every: num("eval_every", train_defaults.eval_every)?,
            dropout,
            selection,
            beam_width: num("beam_width", 1)?,
            decode_slack: num("decode_slack", 5)?,
            curve_sizes: sizes("curve_sizes", learning_curve_sizes())?,
            extra_points: sizes("extra_points", Vec::new())?,
            out_dir: PathBuf::from(get("out_dir").unwrap_or("runs")),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        SpecBuilder::parse(text)?.build()
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let inconsistent = |m: &str| Err(SpecError::Inconsistent(m.into()));
        match self.kind {
            ExperimentKind::Monolingual if !self.sources.is_empty() => {
                return inconsistent("monolingual runs take no sources")
            }
            ExperimentKind::Monolingual => {}
            ExperimentKind::Cipher if self.sources.len() != 1 => {
                return inconsistent("cipher runs need exactly one source language")
            }
            _ if self.sources.is_empty() => return inconsistent("empty sources require kind = monolingual"),
            _ => {}
        }
        if self.cipher_seed.is_some() && self.kind != ExperimentKind::Cipher {
            return inconsistent("cipher_seed is only meaningful for cipher runs");
        }
        if self.sources.contains(&self.target) {
            return inconsistent("the target cannot also be a source");
        }
        if self.hidden_size == 0 || self.embedding_size == 0 || self.batch_size == 0 || self.beam_width == 0 {
            return inconsistent("sizes must be positive");
        }
        if self.eval_every == 0 {
            return inconsistent("eval_every must be positive");
        }
        Ok(())
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            split: derive_seed(self.seed, "split"),
            init: derive_seed(self.seed, "init"),
            shuffle: derive_seed(self.seed, "shuffle"),
            cipher: self.cipher_seed.unwrap_or_else(|| derive_seed(self.seed, "cipher")),
        }
    }

    pub fn sizes(&self) -> SplitSizes {
        SplitSizes {
            n_s: self.n_s,
            n_t: self.n_t,
            dev: self.dev_size,
            test: self.test_size,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seeds().shuffle,
            eval_every: self.eval_every,
            selection: self.selection,
            dropout: self.dropout,
            ..TrainConfig::default()
        }
    }

    /// Learning-curve points, ascending and without duplicates.
    pub fn curve_points(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.curve_sizes.iter().chain(&self.extra_points).copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Canonical `key = value` echo; parsing it gives back an equal spec.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("kind", self.kind.as_str().into());
        kv("sources", join(&self.sources));
        kv("target", self.target.to_string());
        kv("n_s", self.n_s.to_string());
        kv("n_t", self.n_t.to_string());
        kv("dev_size", self.dev_size.to_string());
        kv("test_size", self.test_size.to_string());
        kv("seed", self.seed.to_string());
        if let Some(c) = self.cipher_seed {
            kv("cipher_seed", c.to_string());
        }
        kv("identity_cipher", self.identity_cipher.to_string());
        kv("baseline", self.baseline.to_string());
        kv("combined_sources", self.combined_sources.to_string());
        kv("exclude_overlapping_lemmata", self.exclude_overlapping_lemmata.to_string());
        match &self.data {
            DataSource::Synthetic { lemmata, seed } => {
                kv("synthetic_lemmata", lemmata.to_string());
                kv("synthetic_seed", seed.to_string());
            }
            DataSource::Files(files) => {
                for (lang, path) in files {
                    kv(&format!("data.{lang}"), path.display().to_string());
                }
            }
        }
        kv("hidden_size", self.hidden_size.to_string());
        kv("embedding_size", self.embedding_size.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("eval_every", self.eval_every.to_string());
        kv("dropout", format!("{:?}", self.dropout));
        kv(
            "selection",
            match self.selection {
                Selection::BestDevAccuracy => "best".into(),
                Selection::Final => "final".into(),
            },
        );
        kv("beam_width", self.beam_width.to_string());
        kv("decode_slack", self.decode_slack.to_string());
        kv("curve_sizes", join(&self.curve_sizes));
        kv("extra_points", join(&self.extra_points));
        kv("out_dir", self.out_dir.display().to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "kind = transfer\nsources = pt\ntarget = es\nn_t = 50 # low resource\n\ndata.pt = pt.tsv\ndata.es = es.tsv\n";

    #[test]
    fn defaults_and_round_trip() {
        let s = ExperimentSpec::parse(BASIC).unwrap();
        assert_eq!(s.n_s, 12_000);
        assert_eq!(s.dev_size, 1600);
        assert_eq!(s.test_size, 10_000);
        assert_eq!((s.hidden_size, s.embedding_size), (100, 300));
        assert_eq!(s.curve_points(), vec![100, 400, 800, 1600, 3200, 6400, 12000]);
        assert_eq!(ExperimentSpec::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn overrides_win() {
        let mut b = SpecBuilder::parse(BASIC).unwrap();
        b.set("n_t", "200").unwrap();
        assert_eq!(b.build().unwrap().n_t, 200);
        assert_eq!(b.set("bogus", "1").unwrap_err(), SpecError::UnknownKey("bogus".into()));
    }

    #[test]
    fn invariants() {
        let mono = "kind = monolingual\ntarget = es\n";
        assert!(ExperimentSpec::parse(mono).unwrap().sources.is_empty());
        assert!(matches!(
            ExperimentSpec::parse("kind = transfer\ntarget = es\n"),
            Err(SpecError::Inconsistent(_))
        ));
        assert!(matches!(
            ExperimentSpec::parse("kind = monolingual\nsources = pt\ntarget = es\n"),
            Err(SpecError::Inconsistent(_))
        ));
        assert!(matches!(
            ExperimentSpec::parse("kind = cipher\nsources = pt,it\ntarget = es\n"),
            Err(SpecError::Inconsistent(_))
        ));
        assert!(matches!(ExperimentSpec::parse("kind = shot\nsources = pt\n"), Err(SpecError::Missing("target"))));
        assert!(matches!(ExperimentSpec::parse("kind transfer"), Err(SpecError::Syntax { line: 1, .. })));
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let s = ExperimentSpec::parse(BASIC).unwrap();
        let d = s.seeds();
        assert_eq!(d, s.seeds());
        let all = [d.split, d.init, d.shuffle, d.cipher];
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(all[i], all[j]);
            }
        }
    }
}
