//! Symbol vocabularies and id sequences.
//!
//! Input sequences are `[BOW, language, subtags..., lemma chars..., EOW]`,
//! targets are `[BOW, form chars..., EOW]`. Ids 0, 1, 2 are BOW, EOW and PAD
//! in both vocabularies.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::corpus::{LanguageCode, MorphTag, Sample};
use crate::seed;

pub const BOW: usize = 0;
pub const EOW: usize = 1;
pub const PAD: usize = 2;
pub const NUM_SPECIALS: usize = 3;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("unknown {0}")]
    UnknownSymbol(Symbol),
    #[error("cannot build a vocabulary from zero samples")]
    Empty,
    #[error("id {0} is out of range for this vocabulary")]
    BadId(usize),
    #[error("sequence is not framed as expected: {0}")]
    Framing(String),
    #[error("vocabulary line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("batch size must be at least 1")]
    ZeroBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Special {
    Bow,
    Eow,
    Pad,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Special(Special),
    Lang(String),
    Subtag(String),
    Char(char),
}

impl Symbol {
    fn role(&self) -> &'static str {
        match self {
            Symbol::Special(_) => "special",
            Symbol::Lang(_) => "lang",
            Symbol::Subtag(_) => "subtag",
            Symbol::Char(_) => "char",
        }
    }

    fn text(&self) -> String {
        match self {
            Symbol::Special(Special::Bow) => "<bow>".into(),
            Symbol::Special(Special::Eow) => "<eow>".into(),
            Symbol::Special(Special::Pad) => "<pad>".into(),
            Symbol::Lang(s) | Symbol::Subtag(s) => s.clone(),
            Symbol::Char(c) => c.to_string(),
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:?}", self.role(), self.text())
    }
}

const SPECIALS: [Symbol; 3] = [
    Symbol::Special(Special::Bow),
    Symbol::Special(Special::Eow),
    Symbol::Special(Special::Pad),
];

#[derive(Debug, Clone)]
struct Table {
    symbols: Vec<Symbol>,
    index: HashMap<Symbol, usize>,
}

impl Table {
    fn new(symbols: Vec<Symbol>) -> Self {
        let index = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self { symbols, index }
    }

    fn id(&self, s: &Symbol) -> Result<usize, EncodingError> {
        self.index.get(s).copied().ok_or_else(|| EncodingError::UnknownSymbol(s.clone()))
    }

    fn symbol(&self, id: usize) -> Result<&Symbol, EncodingError> {
        self.symbols.get(id).ok_or(EncodingError::BadId(id))
    }
}

impl PartialEq for Table {
    fn eq(&self, other: &Self) -> bool {
        self.symbols == other.symbols
    }
}

impl Eq for Table {}

/// Input and output symbol tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolVocab {
    input: Table,
    output: Table,
}

impl SymbolVocab {
    /// Builds both tables from every sample that will ever be encoded
    /// (train, dev and test). Ordering is by kind, then sorted, so the result
    /// does not depend on sample order.
    pub fn build<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Result<Self, EncodingError> {
        let mut langs = BTreeSet::new();
        let mut subtags = BTreeSet::new();
        let mut chars = BTreeSet::new();
        let mut any = false;
        for s in samples {
            any = true;
            langs.insert(s.language.as_str().to_string());
            subtags.extend(s.tag.subtags().iter().cloned());
            chars.extend(s.lemma.chars());
            chars.extend(s.form.chars());
        }
        if !any {
            return Err(EncodingError::Empty);
        }
        let mut input: Vec<Symbol> = SPECIALS.to_vec();
        input.extend(langs.into_iter().map(Symbol::Lang));
        input.extend(subtags.into_iter().map(Symbol::Subtag));
        input.extend(chars.iter().copied().map(Symbol::Char));
        let mut output: Vec<Symbol> = SPECIALS.to_vec();
        output.extend(chars.into_iter().map(Symbol::Char));
        Ok(Self {
            input: Table::new(input),
            output: Table::new(output),
        })
    }

    pub fn input_size(&self) -> usize {
        self.input.symbols.len()
    }

    pub fn output_size(&self) -> usize {
        self.output.symbols.len()
    }

    pub fn input_symbols(&self) -> &[Symbol] {
        &self.input.symbols
    }

    pub fn output_symbols(&self) -> &[Symbol] {
        &self.output.symbols
    }

    pub fn input_id(&self, s: &Symbol) -> Result<usize, EncodingError> {
        self.input.id(s)
    }

    pub fn output_id(&self, s: &Symbol) -> Result<usize, EncodingError> {
        self.output.id(s)
    }

    pub fn encode_input(&self, sample: &Sample) -> Result<Vec<usize>, EncodingError> {
        self.encode_query(&sample.language, &sample.tag, &sample.lemma)
    }

    /// Encodes a `(language, tag, lemma)` query that has no gold form.
    pub fn encode_query(&self, language: &LanguageCode, tag: &MorphTag, lemma: &str) -> Result<Vec<usize>, EncodingError> {
        let mut ids = Vec::with_capacity(3 + tag.len() + lemma.len());
        ids.push(BOW);
        ids.push(self.input.id(&Symbol::Lang(language.as_str().to_string()))?);
        for s in tag.subtags() {
            ids.push(self.input.id(&Symbol::Subtag(s.clone()))?);
        }
        for c in lemma.chars() {
            ids.push(self.input.id(&Symbol::Char(c))?);
        }
        ids.push(EOW);
        Ok(ids)
    }

    pub fn encode_target(&self, form: &str) -> Result<Vec<usize>, EncodingError> {
        let mut ids = Vec::with_capacity(form.len() + 2);
        ids.push(BOW);
        for c in form.chars() {
            ids.push(self.output.id(&Symbol::Char(c))?);
        }
        ids.push(EOW);
        Ok(ids)
    }

    /// Inverse of [`encode_input`](Self::encode_input): `(language, subtags, lemma)`.
    pub fn decode_input(&self, ids: &[usize]) -> Result<(String, Vec<String>, String), EncodingError> {
        let framing = |m: &str| EncodingError::Framing(m.to_string());
        if ids.len() < 3 || ids[0] != BOW || ids[ids.len() - 1] != EOW {
            return Err(framing("input must be BOW ... EOW"));
        }
        let Symbol::Lang(lang) = self.input.symbol(ids[1])? else {
            return Err(framing("second input symbol must be a language"));
        };
        let mut subtags = Vec::new();
        let mut lemma = String::new();
        for &id in &ids[2..ids.len() - 1] {
            match self.input.symbol(id)? {
                Symbol::Subtag(s) if lemma.is_empty() => subtags.push(s.clone()),
                Symbol::Char(c) => lemma.push(*c),
                other => return Err(framing(&format!("unexpected {other} inside input"))),
            }
        }
        Ok((lang.clone(), subtags, lemma))
    }

    /// Characters of an output id sequence. BOW is skipped at the start and
    /// decoding stops at the first EOW.
    pub fn decode_output(&self, ids: &[usize]) -> Result<String, EncodingError> {
        let mut out = String::new();
        for (i, &id) in ids.iter().enumerate() {
            match self.output.symbol(id)? {
                Symbol::Char(c) => out.push(*c),
                Symbol::Special(Special::Eow) => break,
                Symbol::Special(Special::Bow) if i == 0 => {}
                other => return Err(EncodingError::Framing(format!("unexpected {other} in output"))),
            }
        }
        Ok(out)
    }

    /// `role<TAB>symbol` lines: the input table, a `---` separator line, then
    /// the output table. Line order is id order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, table) in [&self.input, &self.output].into_iter().enumerate() {
            if i == 1 {
                out.push_str("---\n");
            }
            for s in &table.symbols {
                out.push_str(s.role());
                out.push('\t');
                out.push_str(&s.text());
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, EncodingError> {
        let mut tables: Vec<Vec<Symbol>> = vec![Vec::new()];
        for (i, line) in text.lines().enumerate() {
            let err = |message: String| EncodingError::Format { line: i + 1, message };
            if line == "---" {
                tables.push(Vec::new());
                continue;
            }
            let (role, text) = line.split_once('\t').ok_or_else(|| err("missing tab".into()))?;
            let sym = match role {
                "special" => match text {
                    "<bow>" => Symbol::Special(Special::Bow),
                    "<eow>" => Symbol::Special(Special::Eow),
                    "<pad>" => Symbol::Special(Special::Pad),
                    _ => return Err(err(format!("unknown special {text:?}"))),
                },
                "lang" => Symbol::Lang(text.to_string()),
                "subtag" => Symbol::Subtag(text.to_string()),
                "char" => {
                    let mut it = text.chars();
                    match (it.next(), it.next()) {
                        (Some(c), None) => Symbol::Char(c),
                        _ => return Err(err(format!("char entry {text:?} is not one character"))),
                    }
                }
                _ => return Err(err(format!("unknown role {role:?}"))),
            };
            tables.last_mut().unwrap().push(sym);
        }
        if tables.len() != 2 {
            return Err(EncodingError::Format {
                line: 0,
                message: format!("expected 2 tables, found {}", tables.len()),
            });
        }
        let output = tables.pop().unwrap();
        let input = tables.pop().unwrap();
        for t in [&input, &output] {
            if t.len() < NUM_SPECIALS || t[..NUM_SPECIALS] != SPECIALS {
                return Err(EncodingError::Format {
                    line: 0,
                    message: "tables must start with <bow>, <eow>, <pad>".into(),
                });
            }
            if t.iter().collect::<BTreeSet<_>>().len() != t.len() {
                return Err(EncodingError::Format {
                    line: 0,
                    message: "duplicate symbol".into(),
                });
            }
        }
        Ok(Self {
            input: Table::new(input),
            output: Table::new(output),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSample {
    pub input_ids: Vec<usize>,
    pub target_ids: Vec<usize>,
    pub language: LanguageCode,
}

impl EncodedSample {
    pub fn new(sample: &Sample, vocab: &SymbolVocab) -> Result<Self, EncodingError> {
        Ok(Self {
            input_ids: vocab.encode_input(sample)?,
            target_ids: vocab.encode_target(&sample.form)?,
            language: sample.language.clone(),
        })
    }
}

pub fn encode_all(samples: &[Sample], vocab: &SymbolVocab) -> Result<Vec<EncodedSample>, EncodingError> {
    samples.iter().map(|s| EncodedSample::new(s, vocab)).collect()
}

/// Right-padded id matrices, row-major. Masked cells hold PAD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub size: usize,
    pub input_len: usize,
    pub target_len: usize,
    pub input: Vec<usize>,
    pub input_mask: Vec<bool>,
    pub target: Vec<usize>,
    pub target_mask: Vec<bool>,
    /// Index of each row in the list the batch was built from.
    pub origin: Vec<usize>,
}

impl Batch {
    pub fn from_samples(samples: &[&EncodedSample]) -> Self {
        let size = samples.len();
        let input_len = samples.iter().map(|s| s.input_ids.len()).max().unwrap_or(0);
        let target_len = samples.iter().map(|s| s.target_ids.len()).max().unwrap_or(0);
        let mut b = Batch {
            size,
            input_len,
            target_len,
            input: vec![PAD; size * input_len],
            input_mask: vec![false; size * input_len],
            target: vec![PAD; size * target_len],
            target_mask: vec![false; size * target_len],
            origin: (0..size).collect(),
        };
        for (r, s) in samples.iter().enumerate() {
            for (t, &id) in s.input_ids.iter().enumerate() {
                b.input[r * input_len + t] = id;
                b.input_mask[r * input_len + t] = true;
            }
            for (t, &id) in s.target_ids.iter().enumerate() {
                b.target[r * target_len + t] = id;
                b.target_mask[r * target_len + t] = true;
            }
        }
        b
    }

    /// Unpadded input ids of row `r`.
    pub fn input_row(&self, r: usize) -> Vec<usize> {
        let start = r * self.input_len;
        (start..start + self.input_len)
            .filter(|&i| self.input_mask[i])
            .map(|i| self.input[i])
            .collect()
    }

    pub fn target_row(&self, r: usize) -> Vec<usize> {
        let start = r * self.target_len;
        (start..start + self.target_len)
            .filter(|&i| self.target_mask[i])
            .map(|i| self.target[i])
            .collect()
    }
}

/// Splits `encoded` into batches of `batch_size`; the last batch may be
/// short. With `shuffle`, the order is a permutation drawn from `seed`.
pub fn make_batches(
    encoded: &[EncodedSample],
    batch_size: usize,
    seed: u64,
    shuffle: bool,
) -> Result<Vec<Batch>, EncodingError> {
    if batch_size == 0 {
        return Err(EncodingError::ZeroBatch);
    }
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    if shuffle {
        order.shuffle(&mut seed::rng(seed));
    }
    Ok(order
        .chunks(batch_size)
        .map(|chunk| {
            let rows: Vec<&EncodedSample> = chunk.iter().map(|&i| &encoded[i]).collect();
            let mut b = Batch::from_samples(&rows);
            b.origin = chunk.to_vec();
            b
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_tag, TagFormat};
    use proptest::prelude::*;

    fn sample(l: &str, lemma: &str, tag: &str, form: &str) -> Sample {
        Sample::new(
            LanguageCode::new(l).unwrap(),
            lemma,
            parse_tag(tag, TagFormat::default()).unwrap(),
            form,
        )
        .unwrap()
    }

    fn names(v: &[Symbol]) -> Vec<String> {
        v.iter().map(Symbol::text).collect()
    }

    #[test]
    fn small_vocab_order() {
        let v = SymbolVocab::build(&[sample("es", "oa", "Sg", "ao")]).unwrap();
        assert_eq!(names(v.input_symbols()), ["<bow>", "<eow>", "<pad>", "es", "Sg", "a", "o"]);
        assert_eq!(names(v.output_symbols()), ["<bow>", "<eow>", "<pad>", "a", "o"]);
    }

    #[test]
    fn vocab_ignores_sample_order() {
        let a = vec![sample("es", "soñar", "V;1;SG", "sueño"), sample("pt", "ter", "V;3;PL", "têm")];
        let b: Vec<Sample> = a.iter().rev().cloned().collect();
        assert_eq!(SymbolVocab::build(&a).unwrap(), SymbolVocab::build(&b).unwrap());
        assert!(matches!(SymbolVocab::build(&[]), Err(EncodingError::Empty)));
    }

    #[test]
    fn spanish_input_and_target() {
        let s = Sample::new(
            LanguageCode::new("es").unwrap(),
            "soñar",
            parse_tag("1SgPresInd", TagFormat::CamelCase).unwrap(),
            "sueño",
        )
        .unwrap();
        let v = SymbolVocab::build([&s]).unwrap();
        let want: Vec<usize> = [
            Symbol::Special(Special::Bow),
            Symbol::Lang("es".into()),
            Symbol::Subtag("1".into()),
            Symbol::Subtag("Sg".into()),
            Symbol::Subtag("Pres".into()),
            Symbol::Subtag("Ind".into()),
            Symbol::Char('s'),
            Symbol::Char('o'),
            Symbol::Char('ñ'),
            Symbol::Char('a'),
            Symbol::Char('r'),
            Symbol::Special(Special::Eow),
        ]
        .iter()
        .map(|s| v.input_id(s).unwrap())
        .collect();
        assert_eq!(v.encode_input(&s).unwrap(), want);
        let target: Vec<usize> = "sueño".chars().map(|c| v.output_id(&Symbol::Char(c)).unwrap()).collect();
        assert_eq!(v.encode_target("sueño").unwrap(), [vec![BOW], target, vec![EOW]].concat());
        assert_eq!(v.encode_target("s").unwrap().len(), 3);
        assert!(matches!(v.encode_target("x"), Err(EncodingError::UnknownSymbol(Symbol::Char('x')))));
        let other = sample("es", "xar", "1;Sg;Pres;Ind", "sueño");
        assert!(v.encode_input(&other).is_err());
    }

    #[test]
    fn dev_only_character_is_covered() {
        let train = vec![sample("es", "ab", "V", "ba")];
        let dev = vec![sample("es", "aq", "V", "qa")];
        let v = SymbolVocab::build(train.iter().chain(&dev)).unwrap();
        assert!(encode_all(&dev, &v).is_ok());
    }

    #[test]
    fn batching_shapes() {
        let s = sample("es", "ab", "V", "ba");
        let v = SymbolVocab::build([&s]).unwrap();
        let e = EncodedSample::new(&s, &v).unwrap();
        let all = vec![e.clone(); 45];
        let sizes: Vec<usize> = make_batches(&all, 20, 1, true).unwrap().iter().map(|b| b.size).collect();
        assert_eq!(sizes, [20, 20, 5]);
        assert!(make_batches(&all, 0, 1, true).is_err());

        let short = EncodedSample {
            input_ids: vec![BOW, 3, 4, EOW],
            target_ids: vec![BOW, 3, EOW],
            language: e.language.clone(),
        };
        let long = EncodedSample {
            input_ids: vec![BOW, 3, 4, 5, 5, 5, EOW],
            ..short.clone()
        };
        let b = Batch::from_samples(&[&short, &long]);
        assert_eq!(b.input_len, 7);
        assert_eq!(b.input_mask[..7].iter().filter(|&&m| m).count(), 4);
        assert_eq!(b.input[4], PAD);
    }

    #[test]
    fn vocab_text_round_trip() {
        let v = SymbolVocab::build(&[sample("es", "a b", "V;SG", "ñ")]).unwrap();
        let text = v.to_text();
        assert!(text.starts_with("special\t<bow>\n"));
        assert_eq!(SymbolVocab::from_text(&text).unwrap(), v);
        assert!(SymbolVocab::from_text("char\tab\n---\n").is_err());
    }

    fn arb_sample() -> impl Strategy<Value = Sample> {
        (
            prop::sample::select(vec!["es", "pt", "ca"]),
            "[a-eñ]{1,7}",
            prop::collection::btree_set(prop::sample::select(vec!["V", "N", "SG", "PL", "1", "2"]), 1..4),
            "[a-eñ]{1,7}",
        )
            .prop_map(|(l, lemma, tags, form)| {
                let tag = MorphTag::new(tags.into_iter().map(str::to_string)).unwrap();
                Sample::new(LanguageCode::new(l).unwrap(), &lemma, tag, &form).unwrap()
            })
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(samples in prop::collection::vec(arb_sample(), 1..30), bs in 1usize..8, seed in any::<u64>()) {
            let vocab = SymbolVocab::build(&samples).unwrap();
            let encoded = encode_all(&samples, &vocab).unwrap();
            for (s, e) in samples.iter().zip(&encoded) {
                let (lang, subtags, lemma) = vocab.decode_input(&e.input_ids).unwrap();
                prop_assert_eq!(lang.as_str(), s.language.as_str());
                prop_assert_eq!(&subtags[..], s.tag.subtags());
                prop_assert_eq!(&lemma, &s.lemma);
                prop_assert_eq!(vocab.decode_output(&e.target_ids).unwrap(), s.form.clone());
                prop_assert!(!e.input_ids.contains(&PAD) && !e.target_ids.contains(&PAD));
            }
            let batches = make_batches(&encoded, bs, seed, true).unwrap();
            prop_assert_eq!(&batches, &make_batches(&encoded, bs, seed, true).unwrap());
            let mut seen = vec![false; encoded.len()];
            for b in &batches {
                for r in 0..b.size {
                    let e = &encoded[b.origin[r]];
                    seen[b.origin[r]] = true;
                    prop_assert_eq!(&b.input_row(r), &e.input_ids);
                    prop_assert_eq!(&b.target_row(r), &e.target_ids);
                }
                for (id, m) in b.input.iter().zip(&b.input_mask).chain(b.target.iter().zip(&b.target_mask)) {
                    prop_assert!(*m || *id == PAD);
                }
            }
            prop_assert!(seen.iter().all(|&x| x));
            let mut shuffled = samples.clone();
            shuffled.reverse();
            prop_assert_eq!(SymbolVocab::build(&shuffled).unwrap(), vocab);
        }
    }
}
