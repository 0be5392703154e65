//! Exact-match accuracy, Levenshtein distance and one-/zero-shot breakdowns.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::ShotClass;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("cannot evaluate zero predictions")]
    Empty,
    #[error("{predictions} predictions for {golds} gold forms")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("sample {0} has no shot class")]
    MissingClass(usize),
}

/// Unit-cost Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn check<P: AsRef<str>, G: AsRef<str>>(predictions: &[P], golds: &[G]) -> Result<(), EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Fraction of predictions equal to their gold form, compared verbatim.
pub fn accuracy<P: AsRef<str>, G: AsRef<str>>(predictions: &[P], golds: &[G]) -> Result<f64, EvalError> {
    check(predictions, golds)?;
    let hits = predictions.iter().zip(golds).filter(|(p, g)| p.as_ref() == g.as_ref()).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Count, accuracy and mean edit distance of one subset. Accuracy and
/// distance are `None` for an empty subset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassStats {
    pub n: usize,
    pub accuracy: Option<f64>,
    pub mean_edit_distance: Option<f64>,
}

impl ClassStats {
    fn from_sums(n: usize, hits: usize, ed: usize) -> Self {
        if n == 0 {
            return Self {
                n,
                accuracy: None,
                mean_edit_distance: None,
            };
        }
        Self {
            n,
            accuracy: Some(hits as f64 / n as f64),
            mean_edit_distance: Some(ed as f64 / n as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotBreakdown {
    pub one_shot: ClassStats,
    pub zero_shot: ClassStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    pub mean_edit_distance: f64,
    pub shots: Option<ShotBreakdown>,
    /// Tag string to stats, when requested.
    pub per_tag: Option<BTreeMap<String, ClassStats>>,
}

pub fn evaluate<P: AsRef<str>, G: AsRef<str>>(predictions: &[P], golds: &[G]) -> Result<EvalReport, EvalError> {
    check(predictions, golds)?;
    let mut hits = 0;
    let mut ed = 0;
    for (p, g) in predictions.iter().zip(golds) {
        hits += usize::from(p.as_ref() == g.as_ref());
        ed += edit_distance(p.as_ref(), g.as_ref());
    }
    let n = predictions.len();
    Ok(EvalReport {
        n,
        accuracy: hits as f64 / n as f64,
        mean_edit_distance: ed as f64 / n as f64,
        shots: None,
        per_tag: None,
    })
}

/// Adds a per-tag table to `report`; `tags[i]` is the tag of sample `i`.
pub fn with_per_tag<P: AsRef<str>, G: AsRef<str>>(
    mut report: EvalReport,
    tags: &[String],
    predictions: &[P],
    golds: &[G],
) -> Result<EvalReport, EvalError> {
    check(predictions, golds)?;
    if tags.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            predictions: tags.len(),
            golds: golds.len(),
        });
    }
    let mut sums: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for ((t, p), g) in tags.iter().zip(predictions).zip(golds) {
        let e = sums.entry(t.clone()).or_default();
        e.0 += 1;
        e.1 += usize::from(p.as_ref() == g.as_ref());
        e.2 += edit_distance(p.as_ref(), g.as_ref());
    }
    report.per_tag = Some(sums.into_iter().map(|(k, (n, h, e))| (k, ClassStats::from_sums(n, h, e))).collect());
    Ok(report)
}

/// Pooled metrics plus separate one-shot and zero-shot figures.
pub fn shot_report<P: AsRef<str>, G: AsRef<str>>(
    classes: &[Option<ShotClass>],
    predictions: &[P],
    golds: &[G],
) -> Result<EvalReport, EvalError> {
    check(predictions, golds)?;
    if classes.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            predictions: classes.len(),
            golds: golds.len(),
        });
    }
    let mut sums = [(0usize, 0usize, 0usize); 2];
    for (i, ((c, p), g)) in classes.iter().zip(predictions).zip(golds).enumerate() {
        let slot = match c.ok_or(EvalError::MissingClass(i))? {
            ShotClass::OneShot => 0,
            ShotClass::ZeroShot => 1,
        };
        sums[slot].0 += 1;
        sums[slot].1 += usize::from(p.as_ref() == g.as_ref());
        sums[slot].2 += edit_distance(p.as_ref(), g.as_ref());
    }
    let mut report = evaluate(predictions, golds)?;
    report.shots = Some(ShotBreakdown {
        one_shot: ClassStats::from_sums(sums[0].0, sums[0].1, sums[0].2),
        zero_shot: ClassStats::from_sums(sums[1].0, sums[1].1, sums[1].2),
    });
    Ok(report)
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.decimals$}"))
}

impl EvalReport {
    /// `subset<TAB>n<TAB>acc<TAB>ed` with accuracy to 4 and distance to 2
    /// decimals. Empty subsets print `-`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("subset\tn\tacc\ted\n");
        writeln!(out, "all\t{}\t{:.4}\t{:.2}", self.n, self.accuracy, self.mean_edit_distance).unwrap();
        if let Some(s) = &self.shots {
            for (name, c) in [("one-shot", &s.one_shot), ("zero-shot", &s.zero_shot)] {
                writeln!(out, "{name}\t{}\t{}\t{}", c.n, fmt_opt(c.accuracy, 4), fmt_opt(c.mean_edit_distance, 2)).unwrap();
            }
        }
        if let Some(tags) = &self.per_tag {
            for (tag, c) in tags {
                writeln!(out, "tag:{tag}\t{}\t{}\t{}", c.n, fmt_opt(c.accuracy, 4), fmt_opt(c.mean_edit_distance, 2)).unwrap();
            }
        }
        out
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut rows = vec![(
            "all".to_string(),
            self.n,
            format!("{:.4}", self.accuracy),
            format!("{:.2}", self.mean_edit_distance),
        )];
        if let Some(s) = &self.shots {
            for (name, c) in [("one-shot", &s.one_shot), ("zero-shot", &s.zero_shot)] {
                rows.push((name.into(), c.n, fmt_opt(c.accuracy, 4), fmt_opt(c.mean_edit_distance, 2)));
            }
        }
        if let Some(tags) = &self.per_tag {
            for (tag, c) in tags {
                rows.push((tag.clone(), c.n, fmt_opt(c.accuracy, 4), fmt_opt(c.mean_edit_distance, 2)));
            }
        }
        let w = rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(0).max(6);
        let mut out = format!("{:<w$}  {:>6}  {:>6}  {:>6}\n", "subset", "n", "acc", "ed");
        for (name, n, acc, ed) in rows {
            writeln!(out, "{name:<w$}  {n:>6}  {acc:>6}  {ed:>6}").unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(a: &[char], b: &[char]) -> usize {
        match (a, b) {
            ([], _) => b.len(),
            (_, []) => a.len(),
            ([x, ra @ ..], [y, rb @ ..]) => {
                let sub = naive(ra, rb) + usize::from(x != y);
                sub.min(naive(ra, b) + 1).min(naive(a, rb) + 1)
            }
        }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(edit_distance("brings", "brings"), 0);
        assert_eq!(edit_distance("", "abc"), 3);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert_eq!(edit_distance("sueño", "sueno"), 1);
    }

    #[test]
    fn dp_matches_recursion_on_short_strings() {
        // Every pair up to length 4 here; the acceptance suite goes to 8.
        let mut all = vec![String::new()];
        let mut frontier = vec![String::new()];
        for _ in 0..4 {
            frontier = frontier
                .iter()
                .flat_map(|s| ['a', 'b', 'c'].map(|c| format!("{s}{c}")))
                .collect();
            all.extend(frontier.iter().cloned());
        }
        for a in &all {
            let ac: Vec<char> = a.chars().collect();
            for b in &all {
                let bc: Vec<char> = b.chars().collect();
                assert_eq!(edit_distance(a, b), naive(&ac, &bc), "{a} {b}");
            }
        }
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(a in "[abcñ]{0,8}", b in "[abcñ]{0,8}", c in "[abcñ]{0,8}") {
            let d = edit_distance(&a, &b);
            prop_assert_eq!(d, edit_distance(&b, &a));
            prop_assert_eq!(d == 0, a == b);
            prop_assert!(edit_distance(&a, &c) <= d + edit_distance(&b, &c));
            let (la, lb) = (a.chars().count(), b.chars().count());
            prop_assert!(d <= la.max(lb));
            prop_assert!(d >= la.abs_diff(lb));
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&["a", "b", "c"], &["a", "b", "c"]).unwrap(), 1.0);
        let third = accuracy(&["a", "x", "y"], &["a", "b", "c"]).unwrap();
        assert_eq!(format!("{third:.4}"), "0.3333");
        assert_eq!(accuracy(&["sueño"], &["sueno"]).unwrap(), 0.0);
        assert_eq!(accuracy::<&str, &str>(&[], &[]), Err(EvalError::Empty));
        assert!(matches!(accuracy(&["a"], &["a", "b"]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn perfect_accuracy_iff_zero_distance() {
        let r = evaluate(&["ab", "c"], &["ab", "c"]).unwrap();
        assert_eq!((r.accuracy, r.mean_edit_distance), (1.0, 0.0));
        let r = evaluate(&["ab", "d"], &["ab", "c"]).unwrap();
        assert!(r.accuracy < 1.0 && r.mean_edit_distance > 0.0);
    }

    #[test]
    fn shot_breakdown() {
        use ShotClass::*;
        let classes = [Some(OneShot), Some(OneShot), Some(ZeroShot), Some(ZeroShot), Some(ZeroShot)];
        let golds = ["a", "b", "c", "d", "e"];
        let preds = ["a", "b", "x", "y", "z"];
        let r = shot_report(&classes, &preds, &golds).unwrap();
        let s = r.shots.clone().unwrap();
        assert_eq!(s.one_shot.accuracy, Some(1.0));
        assert_eq!(s.zero_shot.accuracy, Some(0.0));
        assert_eq!(s.one_shot.n + s.zero_shot.n, r.n);
        let weighted = (s.one_shot.n as f64 * 1.0 + s.zero_shot.n as f64 * 0.0) / r.n as f64;
        assert!((weighted - r.accuracy).abs() < 1e-15);

        let only_one = shot_report(&[Some(OneShot)], &["a"], &["a"]).unwrap();
        let z = only_one.shots.unwrap().zero_shot;
        assert_eq!((z.n, z.accuracy), (0, None));
        assert_eq!(shot_report(&[None], &["a"], &["a"]), Err(EvalError::MissingClass(0)));
    }

    #[test]
    fn report_formats() {
        let r = shot_report(&[Some(ShotClass::OneShot)], &["ab"], &["ac"]).unwrap();
        let tsv = r.to_tsv();
        assert!(tsv.contains("all\t1\t0.0000\t1.00\n"));
        assert!(tsv.contains("zero-shot\t0\t-\t-\n"));
        assert!(r.to_table().lines().count() == 4);
        let tagged = with_per_tag(r, &["V;SG".into()], &["ab"], &["ac"]).unwrap();
        assert!(tagged.to_tsv().contains("tag:V;SG\t1\t0.0000\t1.00"));
    }
}
