//! Synthetic agglutinating languages for desk-scale experiments.
//!
//! `aa` and `bb` draw stems from the same syllable inventory and realize the
//! same ten morphemes as suffixes; eight of the ten suffix strings are
//! identical between them. `uu` uses a disjoint alphabet and realizes the
//! morphemes as prefixes.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{LanguageCode, MorphTag, Sample};
use crate::seed;

pub const TENSES: [&str; 5] = ["PRS", "PST", "FUT", "COND", "IPFV"];
pub const PERSONS: [&str; 3] = ["1", "2", "3"];
pub const NUMBERS: [&str; 2] = ["SG", "PL"];

/// Number of the ten morphemes whose suffix `aa` and `bb` share.
pub const SHARED_MORPHEMES: usize = 8;

const LATIN_C: &[char] = &['p', 't', 'k', 'b', 'd', 'g', 'm', 'n', 's', 'l', 'r', 'v'];
const LATIN_V: &[char] = &['a', 'e', 'i', 'o', 'u'];
const GREEK_C: &[char] = &['π', 'τ', 'κ', 'β', 'δ', 'γ', 'μ', 'ν', 'σ', 'λ', 'ρ', 'φ'];
const GREEK_V: &[char] = &['α', 'ε', 'ι', 'ο', 'ω'];

#[derive(Debug, Clone)]
pub struct SyntheticFamily {
    pub a: Vec<Sample>,
    pub b: Vec<Sample>,
    pub u: Vec<Sample>,
}

fn morphemes() -> Vec<&'static str> {
    TENSES.iter().chain(&PERSONS).chain(&NUMBERS).copied().collect()
}

pub fn tags() -> Vec<MorphTag> {
    let mut out = Vec::new();
    for t in TENSES {
        for p in PERSONS {
            for n in NUMBERS {
                out.push(MorphTag::new(["V", t, p, n]).expect("valid tag"));
            }
        }
    }
    out
}

fn syllable(rng: &mut ChaCha8Rng, c: &[char], v: &[char]) -> String {
    format!("{}{}", c.choose(rng).unwrap(), v.choose(rng).unwrap())
}

fn affix(rng: &mut ChaCha8Rng, c: &[char], v: &[char]) -> String {
    // VC or V: suffixes start with a vowel so stems stay recognizable.
    let mut s = v.choose(rng).unwrap().to_string();
    if rng.gen_bool(0.7) {
        s.push(*c.choose(rng).unwrap());
    }
    s
}

/// `n` distinct stems of two or three syllables.
fn stems(rng: &mut ChaCha8Rng, n: usize, c: &[char], v: &[char]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let k = if rng.gen_bool(0.5) { 2 } else { 3 };
        let s: String = (0..k).map(|_| syllable(rng, c, v)).collect();
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

/// Distinct affix strings, one per morpheme.
fn affix_table(rng: &mut ChaCha8Rng, n: usize, c: &[char], v: &[char], avoid: &BTreeSet<String>) -> Vec<String> {
    let mut used = avoid.clone();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let s = affix(rng, c, v);
        if used.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

fn paradigms(
    lang: &str,
    stems: &[String],
    citation: &str,
    table: &[String],
    prefixing: bool,
) -> Vec<Sample> {
    let lang = LanguageCode::new(lang).expect("valid code");
    let names = morphemes();
    let pos = |m: &str| names.iter().position(|x| *x == m).expect("known morpheme");
    let mut out = Vec::with_capacity(stems.len() * TENSES.len() * PERSONS.len() * NUMBERS.len());
    for stem in stems {
        let lemma = format!("{stem}{citation}");
        for tag in tags() {
            let parts: Vec<&str> = tag.subtags()[1..].iter().map(|m| table[pos(m)].as_str()).collect();
            let form = if prefixing {
                let mut p: String = parts.iter().rev().copied().collect();
                p.push_str(stem);
                p
            } else {
                format!("{stem}{}", parts.concat())
            };
            out.push(Sample::new(lang.clone(), &lemma, tag, &form).expect("valid sample"));
        }
    }
    out
}

/// Generates `aa`, `bb` and `uu` with `lemmata` paradigms each.
pub fn synthetic_family(lemmata: usize, seed_value: u64) -> SyntheticFamily {
    let mut rng = seed::stream(seed_value, "synthetic");
    let n = morphemes().len();
    let table_a = affix_table(&mut rng, n, LATIN_C, LATIN_V, &BTreeSet::new());
    let mut differing: Vec<usize> = (0..n).collect();
    differing.shuffle(&mut rng);
    differing.truncate(n - SHARED_MORPHEMES);
    let avoid: BTreeSet<String> = table_a.iter().cloned().collect();
    let fresh = affix_table(&mut rng, differing.len(), LATIN_C, LATIN_V, &avoid);
    let mut table_b = table_a.clone();
    for (i, s) in differing.iter().zip(fresh) {
        table_b[*i] = s;
    }
    let table_u = affix_table(&mut rng, n, GREEK_C, GREEK_V, &BTreeSet::new());

    // One stem list split in two keeps aa and bb lemmata disjoint.
    let shared = stems(&mut rng, 2 * lemmata, LATIN_C, LATIN_V);
    let (stems_a, stems_b) = shared.split_at(lemmata);
    let stems_u = stems(&mut rng, lemmata, GREEK_C, GREEK_V);
    SyntheticFamily {
        a: paradigms("aa", stems_a, "r", &table_a, false),
        b: paradigms("bb", stems_b, "r", &table_b, false),
        u: paradigms("uu", &stems_u, "ς", &table_u, true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_shape() {
        let f = synthetic_family(10, 1);
        assert_eq!(f.a.len(), 300);
        assert_eq!(f.b.len(), 300);
        assert_eq!(f.u.len(), 300);
        let chars = |v: &[Sample]| -> BTreeSet<char> { v.iter().flat_map(|s| s.lemma.chars().chain(s.form.chars())).collect() };
        assert!(chars(&f.u).is_disjoint(&chars(&f.b)));
        assert!(chars(&f.a).is_subset(&LATIN_C.iter().chain(LATIN_V).copied().chain(['r']).collect()));
        let lemmata = |v: &[Sample]| -> BTreeSet<String> { v.iter().map(|s| s.lemma.clone()).collect() };
        assert!(lemmata(&f.a).is_disjoint(&lemmata(&f.b)));
        assert_eq!(lemmata(&f.a).len(), 10);
    }

    #[test]
    fn suffix_sharing_rate() {
        // Forms of a stem differing in one morpheme reveal its suffix; count
        // tense/person/number slots where aa and bb agree on the full form
        // ending for the same tag.
        let f = synthetic_family(3, 7);
        let ending = |s: &Sample| s.form[s.lemma.len() - 1..].to_string();
        let a: Vec<String> = f.a.iter().take(30).map(ending).collect();
        let b: Vec<String> = f.b.iter().take(30).map(ending).collect();
        let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
        assert!(same > 0 && same < 30);
        assert_eq!(synthetic_family(3, 7).b, f.b);
    }
}
