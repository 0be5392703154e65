use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;

use super::{CorpusError, LanguageCode, MorphTag, Sample};
use crate::seed;

/// Target-side learning-curve points.
pub fn learning_curve_sizes() -> Vec<usize> {
    vec![100, 400, 800, 1600, 3200, 6400, 12000]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub n_s: usize,
    pub n_t: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            n_s: 12_000,
            n_t: 50,
            dev: 1600,
            test: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SplitOptions {
    /// Drop source samples whose lemma also occurs anywhere in the target
    /// train/dev/test sets before drawing the source sample.
    pub exclude_overlapping_lemmata: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMeta {
    pub source_languages: Vec<LanguageCode>,
    pub target_language: LanguageCode,
    pub n_s: usize,
    pub n_t: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    /// Source samples followed by target samples.
    pub train: Vec<Sample>,
    pub dev: Vec<Sample>,
    pub test: Vec<Sample>,
    pub meta: SplitMeta,
}

impl DatasetSplit {
    pub fn target_train(&self) -> impl Iterator<Item = &Sample> {
        self.train.iter().filter(move |s| s.language == self.meta.target_language)
    }

    pub fn all_samples(&self) -> impl Iterator<Item = &Sample> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }
}

fn single_language(samples: &[Sample]) -> Result<Option<LanguageCode>, CorpusError> {
    let Some(first) = samples.first() else {
        return Ok(None);
    };
    if let Some(other) = samples.iter().find(|s| s.language != first.language) {
        return Err(CorpusError::MixedLanguages(first.language.clone(), other.language.clone()));
    }
    Ok(Some(first.language.clone()))
}

/// First occurrence of every `(lemma, tag)` cell, in input order.
fn dedup_cells(samples: &[Sample]) -> Vec<&Sample> {
    let mut seen = HashSet::new();
    samples.iter().filter(|s| seen.insert((&s.lemma, &s.tag))).collect()
}

/// Draws target train/dev/test and `n_s` source samples.
///
/// Target dev and test depend only on the target pool and the seed, so every
/// source condition (and every `n_t`) for a given `(target, seed)` shares the
/// same evaluation data.
pub fn sample_transfer_dataset(
    source: &[Sample],
    target: &[Sample],
    sizes: SplitSizes,
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    sample_transfer_dataset_with(&[source], target, sizes, seed, SplitOptions::default())
}

/// Like [`sample_transfer_dataset`], drawing `n_s` samples from each of
/// several source pools.
pub fn sample_transfer_dataset_with(
    sources: &[&[Sample]],
    target: &[Sample],
    sizes: SplitSizes,
    seed: u64,
    options: SplitOptions,
) -> Result<DatasetSplit, CorpusError> {
    if sizes.dev == 0 || sizes.test == 0 {
        return Err(CorpusError::InsufficientPool {
            pool: "dev/test (sizes must be positive)".into(),
            required: 1,
            available: 0,
        });
    }
    let target_language = single_language(target)?.ok_or_else(|| CorpusError::InsufficientPool {
        pool: "target".into(),
        required: sizes.n_t + sizes.dev + sizes.test,
        available: 0,
    })?;
    let cells = dedup_cells(target);
    let needed = sizes.n_t + sizes.dev + sizes.test;
    if cells.len() < needed {
        return Err(CorpusError::InsufficientPool {
            pool: format!("target ({target_language})"),
            required: needed,
            available: cells.len(),
        });
    }
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.shuffle(&mut seed::stream(seed, "split:target"));
    let pick = |range: std::ops::Range<usize>| -> Vec<Sample> { order[range].iter().map(|&i| cells[i].clone()).collect() };
    let dev = pick(0..sizes.dev);
    let test = pick(sizes.dev..sizes.dev + sizes.test);
    let target_train = pick(sizes.dev + sizes.test..needed);

    let excluded_lemmata: HashSet<&str> = if options.exclude_overlapping_lemmata {
        dev.iter().chain(&test).chain(&target_train).map(|s| s.lemma.as_str()).collect()
    } else {
        HashSet::new()
    };

    let mut train = Vec::with_capacity(sizes.n_s * sources.len() + sizes.n_t);
    let mut source_languages = Vec::new();
    for pool in sources {
        if sizes.n_s == 0 {
            continue;
        }
        let lang = single_language(pool)?.ok_or_else(|| CorpusError::InsufficientPool {
            pool: "source".into(),
            required: sizes.n_s,
            available: 0,
        })?;
        if lang == target_language {
            return Err(CorpusError::MixedLanguages(lang, target_language));
        }
        let eligible: Vec<&Sample> = pool
            .iter()
            .filter(|s| !excluded_lemmata.contains(s.lemma.as_str()))
            .collect();
        if eligible.len() < sizes.n_s {
            return Err(CorpusError::InsufficientPool {
                pool: format!("source ({lang})"),
                required: sizes.n_s,
                available: eligible.len(),
            });
        }
        let mut rng = seed::stream(seed, &format!("split:source:{lang}"));
        let picked = rand::seq::index::sample(&mut rng, eligible.len(), sizes.n_s);
        train.extend(picked.iter().map(|i| eligible[i].clone()));
        source_languages.push(lang);
    }
    train.extend(target_train);

    Ok(DatasetSplit {
        train,
        dev,
        test,
        meta: SplitMeta {
            source_languages,
            target_language,
            n_s: sizes.n_s,
            n_t: sizes.n_t,
            seed,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShotClass {
    OneShot,
    ZeroShot,
}

impl ShotClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ShotClass::OneShot => "one-shot",
            ShotClass::ZeroShot => "zero-shot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotSample {
    pub sample: Sample,
    pub class: ShotClass,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotSplit {
    pub train: Vec<Sample>,
    pub seen_tags: BTreeSet<MorphTag>,
    pub unseen_tags: BTreeSet<MorphTag>,
    pub eval: Vec<ShotSample>,
}

impl ShotSplit {
    pub fn class_of(&self, tag: &MorphTag) -> Option<ShotClass> {
        if self.seen_tags.contains(tag) {
            Some(ShotClass::OneShot)
        } else if self.unseen_tags.contains(tag) {
            Some(ShotClass::ZeroShot)
        } else {
            None
        }
    }
}

/// One training sample for each tag in a random half of the target tags, all
/// from distinct lemmata. Every other target sample becomes evaluation data.
pub fn make_shot_split(target: &[Sample], seed: u64) -> Result<ShotSplit, CorpusError> {
    make_shot_split_reserving(target, &[], seed)
}

/// Shot split whose evaluation set is fixed in advance (e.g. a shared test
/// set). Reserved cells are never used for training. With an empty
/// `reserved`, evaluation is every pool sample not chosen for training.
pub fn make_shot_split_reserving(pool: &[Sample], reserved: &[Sample], seed: u64) -> Result<ShotSplit, CorpusError> {
    let all: Vec<Sample> = pool.iter().chain(reserved).cloned().collect();
    single_language(&all)?;
    let tags: BTreeSet<MorphTag> = all.iter().map(|s| s.tag.clone()).collect();
    if tags.len() < 2 {
        return Err(CorpusError::TooFewTags(tags.len()));
    }
    let mut rng = seed::stream(seed, "shot");
    let mut order: Vec<MorphTag> = tags.iter().cloned().collect();
    order.shuffle(&mut rng);
    let n_seen = order.len() / 2;
    let seen_order = &order[..n_seen];

    let reserved_keys: HashSet<(&str, &MorphTag)> = reserved.iter().map(|s| (s.lemma.as_str(), &s.tag)).collect();
    let mut by_tag: BTreeMap<&MorphTag, Vec<&Sample>> = BTreeMap::new();
    for s in dedup_cells(pool) {
        if !reserved_keys.contains(&(s.lemma.as_str(), &s.tag)) {
            by_tag.entry(&s.tag).or_default().push(s);
        }
    }

    let mut used_lemmata: HashSet<&str> = HashSet::new();
    let mut train = Vec::with_capacity(n_seen);
    for tag in seen_order {
        let candidates: Vec<&Sample> = by_tag
            .get(tag)
            .map(|v| v.iter().copied().filter(|s| !used_lemmata.contains(s.lemma.as_str())).collect())
            .unwrap_or_default();
        if candidates.is_empty() {
            return Err(CorpusError::ShotConstraint {
                tag: tag.to_string(),
                seed,
            });
        }
        let chosen = candidates[rng.gen_range(0..candidates.len())];
        used_lemmata.insert(chosen.lemma.as_str());
        train.push(chosen.clone());
    }

    let seen_tags: BTreeSet<MorphTag> = seen_order.iter().cloned().collect();
    let unseen_tags: BTreeSet<MorphTag> = order[n_seen..].iter().cloned().collect();
    let classify = |s: &Sample| ShotSample {
        sample: s.clone(),
        class: if seen_tags.contains(&s.tag) {
            ShotClass::OneShot
        } else {
            ShotClass::ZeroShot
        },
    };
    let eval = if reserved.is_empty() {
        let train_keys: HashSet<(&str, &MorphTag)> = train.iter().map(|s| (s.lemma.as_str(), &s.tag)).collect();
        dedup_cells(pool)
            .into_iter()
            .filter(|s| !train_keys.contains(&(s.lemma.as_str(), &s.tag)))
            .map(classify)
            .collect()
    } else {
        reserved.iter().map(classify).collect()
    };

    Ok(ShotSplit {
        train,
        seen_tags,
        unseen_tags,
        eval,
    })
}
