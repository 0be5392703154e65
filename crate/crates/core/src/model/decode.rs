use std::cmp::Ordering;

use super::{decode_step, encode, Arch, ModelError};
use crate::encoding::{BOW, EOW};
use crate::numerics::ParamStore;

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Output ids, without BOW and without the closing EOW.
    pub ids: Vec<usize>,
    pub log_prob: f64,
    /// Set when decoding stopped at the length limit instead of at EOW.
    pub truncated: bool,
    /// Attention weights of every step, if requested.
    pub attention: Option<Vec<Vec<f64>>>,
}

fn argmax_lowest(dist: &[f64], support: &[bool]) -> usize {
    let mut best = None::<usize>;
    for (i, &p) in dist.iter().enumerate() {
        if !support[i] {
            continue;
        }
        match best {
            Some(b) if dist[b] >= p => {}
            _ => best = Some(i),
        }
    }
    best.expect("support is non-empty")
}

/// Picks the most probable symbol at every step (lowest id on ties) for at
/// most `max_len` steps.
pub fn greedy_decode(
    arch: &Arch,
    params: &ParamStore,
    input_ids: &[usize],
    max_len: usize,
    keep_attention: bool,
) -> Result<DecodeResult, ModelError> {
    let enc = encode(arch, params, input_ids)?;
    let mut s = enc.s0.clone();
    let mut y = BOW;
    let mut out = DecodeResult {
        ids: Vec::new(),
        log_prob: 0.0,
        truncated: true,
        attention: keep_attention.then(Vec::new),
    };
    for _ in 0..max_len {
        let (s_new, dist, alpha) = decode_step(arch, params, y, &s, &enc);
        s = s_new;
        y = argmax_lowest(&dist, &arch.support);
        out.log_prob += dist[y].ln();
        if let Some(a) = out.attention.as_mut() {
            a.push(alpha);
        }
        if y == EOW {
            out.truncated = false;
            break;
        }
        out.ids.push(y);
    }
    Ok(out)
}

#[derive(Clone)]
struct Hyp {
    ids: Vec<usize>,
    state: Vec<f64>,
    log_prob: f64,
    attention: Vec<Vec<f64>>,
}

struct Candidate {
    parent: usize,
    symbol: usize,
    prob: f64,
    total: f64,
}

/// Higher total first; among equal totals, prefer the same parent's more
/// probable step, then earlier parents and lower ids. With width 1 this
/// reproduces greedy selection exactly.
fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.total
        .total_cmp(&a.total)
        .then_with(|| {
            if a.parent == b.parent {
                b.prob.total_cmp(&a.prob)
            } else {
                a.parent.cmp(&b.parent)
            }
        })
        .then_with(|| a.symbol.cmp(&b.symbol))
}

/// Beam search over output symbols ranked by summed log-probability.
/// Hypotheses that emit EOW leave the beam; the best finished hypothesis is
/// returned, or the best unfinished one when none finished within `max_len`.
pub fn beam_decode(
    arch: &Arch,
    params: &ParamStore,
    input_ids: &[usize],
    beam_width: usize,
    max_len: usize,
    keep_attention: bool,
) -> Result<DecodeResult, ModelError> {
    if beam_width == 0 {
        return Err(ModelError::Config("beam width must be at least 1".into()));
    }
    let enc = encode(arch, params, input_ids)?;
    let mut beam = vec![Hyp {
        ids: Vec::new(),
        state: enc.s0.clone(),
        log_prob: 0.0,
        attention: Vec::new(),
    }];
    let mut finished: Vec<Hyp> = Vec::new();
    for _ in 0..max_len {
        if beam.is_empty() {
            break;
        }
        let mut steps = Vec::with_capacity(beam.len());
        let mut cands = Vec::new();
        for (pi, hyp) in beam.iter().enumerate() {
            let y_prev = hyp.ids.last().copied().unwrap_or(BOW);
            let (s, dist, alpha) = decode_step(arch, params, y_prev, &hyp.state, &enc);
            for (y, &p) in dist.iter().enumerate() {
                if arch.support[y] {
                    cands.push(Candidate {
                        parent: pi,
                        symbol: y,
                        prob: p,
                        total: hyp.log_prob + p.ln(),
                    });
                }
            }
            steps.push((s, alpha));
        }
        cands.sort_by(rank);
        let mut next = Vec::with_capacity(beam_width);
        for c in cands.into_iter().take(beam_width) {
            let parent = &beam[c.parent];
            let (s, alpha) = &steps[c.parent];
            let mut h = Hyp {
                ids: parent.ids.clone(),
                state: s.clone(),
                log_prob: c.total,
                attention: if keep_attention { parent.attention.clone() } else { Vec::new() },
            };
            if keep_attention {
                h.attention.push(alpha.clone());
            }
            if c.symbol == EOW {
                finished.push(h);
            } else {
                h.ids.push(c.symbol);
                next.push(h);
            }
        }
        beam = next;
        // Log-probabilities only decrease, so nothing alive can overtake the
        // best finished hypothesis once it leads.
        let best_done = finished.iter().map(|h| h.log_prob).fold(f64::NEG_INFINITY, f64::max);
        if beam.iter().all(|h| h.log_prob < best_done) {
            break;
        }
    }
    let (pool, truncated) = if finished.is_empty() { (beam, true) } else { (finished, false) };
    // First maximum wins, so earlier-ranked hypotheses take ties.
    let best = pool
        .into_iter()
        .reduce(|best, h| if h.log_prob > best.log_prob { h } else { best })
        .expect("beam is non-empty");
    Ok(DecodeResult {
        ids: best.ids,
        log_prob: best.log_prob,
        truncated,
        attention: keep_attention.then_some(best.attention),
    })
}
