//! Paradigm data: language codes, morphological tags, samples, UniMorph-style
//! TSV ingestion, and the dataset constructions used by the experiments.

mod cipher;
mod manifest;
mod split;

pub use cipher::{apply_cipher, cipher_domain, make_cipher, CipherMap};
pub use manifest::{read_split_manifest, write_split_manifest, SplitManifestMeta};
pub use split::{
    learning_curve_sizes, make_shot_split, make_shot_split_reserving, sample_transfer_dataset,
    sample_transfer_dataset_with, DatasetSplit, ShotClass, ShotSample, ShotSplit, SplitMeta, SplitOptions,
    SplitSizes,
};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid language code {0:?} (expected 2-4 lowercase ASCII letters)")]
    InvalidLanguage(String),
    #[error("malformed tag {tag:?}: {reason}")]
    MalformedTag { tag: String, reason: String },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("{path}:{line}: {message}")]
    Line {
        path: String,
        line: usize,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lemma {lemma:?} has two forms for tag {tag}: {first:?} and {second:?}")]
    Conflict {
        lemma: String,
        tag: String,
        first: String,
        second: String,
    },
    #[error("samples mix languages {0} and {1}")]
    MixedLanguages(LanguageCode, LanguageCode),
    #[error("not enough {pool} samples: need {required}, have {available}")]
    InsufficientPool {
        pool: String,
        required: usize,
        available: usize,
    },
    #[error("shot split needs at least 2 distinct tags, found {0}")]
    TooFewTags(usize),
    #[error("no unused lemma left for tag {tag} with seed {seed}; try a different seed")]
    ShotConstraint { tag: String, seed: u64 },
    #[error("cipher domain must be non-empty")]
    EmptyCipherDomain,
    #[error("cipher mapping is not a bijection: {0}")]
    NotABijection(String),
    #[error("symbol {0} is outside the cipher domain")]
    OutOfCipherDomain(String),
    #[error("manifest: {0}")]
    Manifest(String),
}

/// Short lowercase language identifier (`es`, `pt`, `sme`, ...).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LanguageCode(String);

impl LanguageCode {
    pub fn new(code: &str) -> Result<Self, CorpusError> {
        let ok = (2..=4).contains(&code.len()) && code.bytes().all(|b| b.is_ascii_lowercase());
        if ok {
            Ok(Self(code.to_string()))
        } else {
            Err(CorpusError::InvalidLanguage(code.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for LanguageCode {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

/// How subtags are delimited inside a raw tag string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagFormat {
    /// UniMorph style, e.g. `V;IND;PRS;1;SG` with `';'`.
    Delimited(char),
    /// Split before every uppercase letter and at letter/digit boundaries,
    /// e.g. `1SgPresInd`.
    CamelCase,
}

impl Default for TagFormat {
    fn default() -> Self {
        TagFormat::Delimited(';')
    }
}

/// Ordered, duplicate-free sequence of subtags.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MorphTag {
    subtags: Vec<String>,
}

impl MorphTag {
    pub fn new<S: Into<String>>(subtags: impl IntoIterator<Item = S>) -> Result<Self, CorpusError> {
        let subtags: Vec<String> = subtags.into_iter().map(Into::into).collect();
        let shown = subtags.join(";");
        if subtags.is_empty() {
            return Err(CorpusError::MalformedTag {
                tag: shown,
                reason: "no subtags".into(),
            });
        }
        for (i, s) in subtags.iter().enumerate() {
            if s.is_empty() {
                return Err(CorpusError::MalformedTag {
                    tag: shown,
                    reason: "empty subtag".into(),
                });
            }
            if s.chars().any(|c| c == ';' || c.is_whitespace()) {
                return Err(CorpusError::MalformedTag {
                    tag: shown,
                    reason: format!("subtag {s:?} contains a separator"),
                });
            }
            if subtags[..i].contains(s) {
                return Err(CorpusError::MalformedTag {
                    tag: shown,
                    reason: format!("duplicate subtag {s:?}"),
                });
            }
        }
        Ok(Self { subtags })
    }

    pub fn subtags(&self) -> &[String] {
        &self.subtags
    }

    pub fn len(&self) -> usize {
        self.subtags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtags.is_empty()
    }
}

impl fmt::Display for MorphTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.subtags.join(";"))
    }
}

pub fn parse_tag(raw: &str, format: TagFormat) -> Result<MorphTag, CorpusError> {
    if raw.is_empty() {
        return Err(CorpusError::MalformedTag {
            tag: String::new(),
            reason: "empty tag".into(),
        });
    }
    match format {
        TagFormat::Delimited(sep) => MorphTag::new(raw.split(sep)),
        TagFormat::CamelCase => {
            let mut parts: Vec<String> = Vec::new();
            let mut prev: Option<char> = None;
            for c in raw.chars() {
                let boundary = match prev {
                    None => true,
                    Some(p) => c.is_uppercase() || (c.is_ascii_digit() != p.is_ascii_digit()),
                };
                if boundary {
                    parts.push(String::new());
                }
                parts.last_mut().unwrap().push(c);
                prev = Some(c);
            }
            MorphTag::new(parts)
        }
    }
}

/// One `(language, lemma, tag, form)` record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sample {
    pub language: LanguageCode,
    pub lemma: String,
    pub tag: MorphTag,
    pub form: String,
}

fn check_field(what: &str, s: &str) -> Result<(), CorpusError> {
    if s.is_empty() {
        return Err(CorpusError::InvalidSample(format!("empty {what}")));
    }
    if s.contains(['\t', '\n', '\r']) {
        return Err(CorpusError::InvalidSample(format!("{what} {s:?} contains a tab or newline")));
    }
    Ok(())
}

impl Sample {
    pub fn new(language: LanguageCode, lemma: &str, tag: MorphTag, form: &str) -> Result<Self, CorpusError> {
        check_field("lemma", lemma)?;
        check_field("form", form)?;
        Ok(Self {
            language,
            lemma: lemma.to_string(),
            tag,
            form: form.to_string(),
        })
    }

    /// Identity of the paradigm cell this sample fills.
    pub fn key(&self) -> (String, MorphTag) {
        (self.lemma.clone(), self.tag.clone())
    }
}

/// All known forms of one lemma, keyed by tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Paradigm {
    pub language: LanguageCode,
    pub lemma: String,
    pub entries: BTreeMap<MorphTag, String>,
}

impl Paradigm {
    pub fn samples(&self) -> impl Iterator<Item = Sample> + '_ {
        self.entries.iter().map(|(tag, form)| Sample {
            language: self.language.clone(),
            lemma: self.lemma.clone(),
            tag: tag.clone(),
            form: form.clone(),
        })
    }
}

/// Parses UniMorph TSV text (`lemma<TAB>form<TAB>tag`). Blank lines and
/// `#` comments are skipped.
pub fn parse_unimorph(bytes: &[u8], language: &LanguageCode, origin: &str) -> Result<Vec<Sample>, CorpusError> {
    let line_err = |line: usize, message: String| CorpusError::Line {
        path: origin.to_string(),
        line,
        message,
    };
    let mut samples = Vec::new();
    let mut composed = 0usize;
    let mut decomposed = 0usize;
    for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let lineno = i + 1;
        let text = std::str::from_utf8(raw).map_err(|e| line_err(lineno, format!("invalid UTF-8: {e}")))?;
        let text = text.strip_suffix('\r').unwrap_or(text);
        if text.trim().is_empty() || text.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = text.split('\t').collect();
        if cols.len() != 3 {
            return Err(line_err(lineno, format!("expected 3 tab-separated columns, found {}", cols.len())));
        }
        let tag = parse_tag(cols[2], TagFormat::default()).map_err(|e| line_err(lineno, e.to_string()))?;
        let sample =
            Sample::new(language.clone(), cols[0], tag, cols[1]).map_err(|e| line_err(lineno, e.to_string()))?;
        for s in [&sample.lemma, &sample.form] {
            if !s.is_ascii() {
                if !unicode_normalization::is_nfc(s) {
                    decomposed += 1;
                } else if !unicode_normalization::is_nfd(s) {
                    composed += 1;
                }
            }
        }
        samples.push(sample);
    }
    if composed > 0 && decomposed > 0 {
        log::warn!(
            "{origin}: mixes precomposed ({composed}) and decomposed ({decomposed}) Unicode forms; \
             strings are compared verbatim"
        );
    }
    Ok(samples)
}

pub fn load_unimorph(path: &Path, language: &LanguageCode) -> Result<Vec<Sample>, CorpusError> {
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_unimorph(&bytes, language, &path.display().to_string())
}

/// Groups single-language samples into one paradigm per lemma, in order of
/// first appearance. Repeating an identical `(lemma, tag, form)` is allowed;
/// two different forms for one cell are not.
pub fn group_paradigms(samples: &[Sample]) -> Result<Vec<Paradigm>, CorpusError> {
    let mut order: Vec<String> = Vec::new();
    let mut by_lemma: BTreeMap<String, Paradigm> = BTreeMap::new();
    let Some(first) = samples.first() else {
        return Ok(Vec::new());
    };
    for s in samples {
        if s.language != first.language {
            return Err(CorpusError::MixedLanguages(first.language.clone(), s.language.clone()));
        }
        let p = by_lemma.entry(s.lemma.clone()).or_insert_with(|| {
            order.push(s.lemma.clone());
            Paradigm {
                language: s.language.clone(),
                lemma: s.lemma.clone(),
                entries: BTreeMap::new(),
            }
        });
        match p.entries.get(&s.tag) {
            Some(existing) if *existing != s.form => {
                return Err(CorpusError::Conflict {
                    lemma: s.lemma.clone(),
                    tag: s.tag.to_string(),
                    first: existing.clone(),
                    second: s.form.clone(),
                });
            }
            Some(_) => {}
            None => {
                p.entries.insert(s.tag.clone(), s.form.clone());
            }
        }
    }
    Ok(order.into_iter().map(|l| by_lemma.remove(&l).unwrap()).collect())
}
