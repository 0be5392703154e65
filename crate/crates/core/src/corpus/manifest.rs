//! Split manifests: `split.tsv` holds `split<TAB>language<TAB>lemma<TAB>form<TAB>tag`
//! rows, `split.meta` a sidecar of `key = value` lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{parse_tag, CorpusError, DatasetSplit, LanguageCode, Sample, SplitMeta, TagFormat};

pub const SPLIT_TSV: &str = "split.tsv";
pub const SPLIT_META: &str = "split.meta";

/// Extra sidecar facts that are not part of [`SplitMeta`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitManifestMeta {
    /// Language code to hex SHA-256 of the corpus file it came from.
    pub source_digests: BTreeMap<String, String>,
    pub extra: BTreeMap<String, String>,
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_split_manifest(dir: &Path, split: &DatasetSplit, meta: &SplitManifestMeta) -> Result<(), CorpusError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tsv = String::new();
    for (name, samples) in [("train", &split.train), ("dev", &split.dev), ("test", &split.test)] {
        for s in samples.iter() {
            writeln!(tsv, "{name}\t{}\t{}\t{}\t{}", s.language, s.lemma, s.form, s.tag).unwrap();
        }
    }
    let tsv_path = dir.join(SPLIT_TSV);
    std::fs::write(&tsv_path, tsv).map_err(|e| io_err(&tsv_path, e))?;

    let m = &split.meta;
    let mut side = String::new();
    writeln!(side, "seed = {}", m.seed).unwrap();
    writeln!(side, "n_s = {}", m.n_s).unwrap();
    writeln!(side, "n_t = {}", m.n_t).unwrap();
    writeln!(side, "dev_size = {}", split.dev.len()).unwrap();
    writeln!(side, "test_size = {}", split.test.len()).unwrap();
    let sources: Vec<&str> = m.source_languages.iter().map(LanguageCode::as_str).collect();
    writeln!(side, "source_languages = {}", sources.join(",")).unwrap();
    writeln!(side, "target_language = {}", m.target_language).unwrap();
    for (lang, digest) in &meta.source_digests {
        writeln!(side, "digest.{lang} = {digest}").unwrap();
    }
    for (k, v) in &meta.extra {
        writeln!(side, "{k} = {v}").unwrap();
    }
    let meta_path = dir.join(SPLIT_META);
    std::fs::write(&meta_path, side).map_err(|e| io_err(&meta_path, e))
}

pub fn read_split_manifest(dir: &Path) -> Result<(DatasetSplit, SplitManifestMeta), CorpusError> {
    let meta_path = dir.join(SPLIT_META);
    let side = std::fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let mut kv = BTreeMap::new();
    for line in side.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CorpusError::Manifest(format!("bad sidecar line {line:?}")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| kv.get(k).ok_or_else(|| CorpusError::Manifest(format!("missing key {k:?}")));
    let num = |k: &str| -> Result<u64, CorpusError> {
        get(k)?
            .parse()
            .map_err(|_| CorpusError::Manifest(format!("key {k:?} is not an integer")))
    };
    let source_languages = get("source_languages")?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(LanguageCode::new)
        .collect::<Result<Vec<_>, _>>()?;
    let split_meta = SplitMeta {
        source_languages,
        target_language: LanguageCode::new(get("target_language")?)?,
        n_s: num("n_s")? as usize,
        n_t: num("n_t")? as usize,
        seed: num("seed")?,
    };
    let mut extra_meta = SplitManifestMeta::default();
    for (k, v) in &kv {
        if let Some(lang) = k.strip_prefix("digest.") {
            extra_meta.source_digests.insert(lang.to_string(), v.clone());
        } else if ![
            "seed",
            "n_s",
            "n_t",
            "dev_size",
            "test_size",
            "source_languages",
            "target_language",
        ]
        .contains(&k.as_str())
        {
            extra_meta.extra.insert(k.clone(), v.clone());
        }
    }

    let tsv_path = dir.join(SPLIT_TSV);
    let tsv = std::fs::read_to_string(&tsv_path).map_err(|e| io_err(&tsv_path, e))?;
    let (mut train, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in tsv.lines().enumerate() {
        let err = |message: String| CorpusError::Line {
            path: tsv_path.display().to_string(),
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(err(format!("expected 5 columns, found {}", cols.len())));
        }
        let lang = LanguageCode::new(cols[1]).map_err(|e| err(e.to_string()))?;
        let tag = parse_tag(cols[4], TagFormat::default()).map_err(|e| err(e.to_string()))?;
        let sample = Sample::new(lang, cols[2], tag, cols[3]).map_err(|e| err(e.to_string()))?;
        match cols[0] {
            "train" => train.push(sample),
            "dev" => dev.push(sample),
            "test" => test.push(sample),
            other => return Err(err(format!("unknown split name {other:?}"))),
        }
    }
    Ok((
        DatasetSplit {
            train,
            dev,
            test,
            meta: split_meta,
        },
        extra_meta,
    ))
}
