use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use super::{CorpusError, MorphTag, Sample};
use crate::seed;

/// Random bijection over a language's characters and subtags.
///
/// Characters map to characters and subtags to subtags; language codes are
/// never touched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherMap {
    chars: BTreeMap<char, char>,
    subtags: BTreeMap<String, String>,
    seed: u64,
}

fn check_bijection<K: Ord + Clone + std::fmt::Debug>(map: &BTreeMap<K, K>) -> Result<(), CorpusError> {
    let values: BTreeSet<&K> = map.values().collect();
    let keys: BTreeSet<&K> = map.keys().collect();
    if values != keys {
        return Err(CorpusError::NotABijection(format!(
            "image {values:?} differs from domain {keys:?}"
        )));
    }
    Ok(())
}

impl CipherMap {
    pub fn from_maps(
        chars: BTreeMap<char, char>,
        subtags: BTreeMap<String, String>,
        seed: u64,
    ) -> Result<Self, CorpusError> {
        check_bijection(&chars)?;
        check_bijection(&subtags)?;
        Ok(Self { chars, subtags, seed })
    }

    pub fn identity(chars: &BTreeSet<char>, subtags: &BTreeSet<String>) -> Self {
        Self {
            chars: chars.iter().map(|&c| (c, c)).collect(),
            subtags: subtags.iter().map(|s| (s.clone(), s.clone())).collect(),
            seed: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn chars(&self) -> &BTreeMap<char, char> {
        &self.chars
    }

    pub fn subtags(&self) -> &BTreeMap<String, String> {
        &self.subtags
    }

    pub fn map_char(&self, c: char) -> Option<char> {
        self.chars.get(&c).copied()
    }

    pub fn map_subtag(&self, s: &str) -> Option<&str> {
        self.subtags.get(s).map(String::as_str)
    }

    pub fn inverse(&self) -> Self {
        Self {
            chars: self.chars.iter().map(|(&k, &v)| (v, k)).collect(),
            subtags: self.subtags.iter().map(|(k, v)| (v.clone(), k.clone())).collect(),
            seed: self.seed,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.chars.iter().all(|(k, v)| k == v) && self.subtags.iter().all(|(k, v)| k == v)
    }

    fn map_str(&self, s: &str) -> Result<String, CorpusError> {
        s.chars()
            .map(|c| self.map_char(c).ok_or_else(|| CorpusError::OutOfCipherDomain(format!("character {c:?}"))))
            .collect()
    }
}

/// Characters (of lemmata and forms) and subtags occurring in `samples`.
pub fn cipher_domain<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> (BTreeSet<char>, BTreeSet<String>) {
    let mut chars = BTreeSet::new();
    let mut subtags = BTreeSet::new();
    for s in samples {
        chars.extend(s.lemma.chars());
        chars.extend(s.form.chars());
        subtags.extend(s.tag.subtags().iter().cloned());
    }
    (chars, subtags)
}

/// Uniformly random permutation of each domain, seeded.
pub fn make_cipher(chars: &BTreeSet<char>, subtags: &BTreeSet<String>, seed: u64) -> Result<CipherMap, CorpusError> {
    if chars.is_empty() || subtags.is_empty() {
        return Err(CorpusError::EmptyCipherDomain);
    }
    let mut rng = seed::stream(seed, "cipher");
    let domain: Vec<char> = chars.iter().copied().collect();
    let mut image = domain.clone();
    image.shuffle(&mut rng);
    let sub_domain: Vec<String> = subtags.iter().cloned().collect();
    let mut sub_image = sub_domain.clone();
    sub_image.shuffle(&mut rng);
    Ok(CipherMap {
        chars: domain.into_iter().zip(image).collect(),
        subtags: sub_domain.into_iter().zip(sub_image).collect(),
        seed,
    })
}

pub fn apply_cipher(sample: &Sample, cipher: &CipherMap) -> Result<Sample, CorpusError> {
    let subtags = sample
        .tag
        .subtags()
        .iter()
        .map(|s| {
            cipher
                .map_subtag(s)
                .map(str::to_string)
                .ok_or_else(|| CorpusError::OutOfCipherDomain(format!("subtag {s:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Sample {
        language: sample.language.clone(),
        lemma: cipher.map_str(&sample.lemma)?,
        tag: MorphTag::new(subtags)?,
        form: cipher.map_str(&sample.form)?,
    })
}
