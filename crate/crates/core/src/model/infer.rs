//! Tape-free forward computation for decoding. Every operation accumulates in
//! the same order as its taped counterpart, so results agree bit for bit.

use super::{Arch, GruIds, ModelError};
use crate::numerics::{masked_softmax_into, sigmoid, vec_mat, ParamStore};

/// `h = (1 - z) * h_prev + z * tanh(x W_h + (r * h_prev) U_h + b_h)`.
pub fn gru_cell(params: &ParamStore, g: &GruIds, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
    let n = h_prev.len();
    let mut xw = vec![0.0; n];
    let mut hu = vec![0.0; n];
    let mut gate = |w, u, b, hin: &[f64], f: fn(f64) -> f64| -> Vec<f64> {
        vec_mat(x, params.value(w), &mut xw);
        vec_mat(hin, params.value(u), &mut hu);
        let bias = params.value(b).data();
        (0..n).map(|k| f((xw[k] + hu[k]) + bias[k])).collect()
    };
    let z = gate(g.w_z, g.u_z, g.b_z, h_prev, sigmoid);
    let r = gate(g.w_r, g.u_r, g.b_r, h_prev, sigmoid);
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let cand = gate(g.w_h, g.u_h, g.b_h, &rh, f64::tanh);
    (0..n).map(|k| (1.0 - z[k]) * h_prev[k] + z[k] * cand[k]).collect()
}

/// Encoder output for one unpadded input.
#[derive(Debug, Clone)]
pub struct EncoderStates {
    /// Row `i` is `[fwd_i; bwd_i]`, width `2 * hidden`.
    pub h: Vec<Vec<f64>>,
    /// `h[i] * U_a`, precomputed for attention.
    pub keys: Vec<Vec<f64>>,
    /// Initial decoder state.
    pub s0: Vec<f64>,
}

impl EncoderStates {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

pub fn encode(arch: &Arch, params: &ParamStore, input_ids: &[usize]) -> Result<EncoderStates, ModelError> {
    if input_ids.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let hsz = arch.config.hidden_size;
    let table = params.value(arch.ids.enc_embed);
    if let Some(&bad) = input_ids.iter().find(|&&i| i >= table.rows()) {
        return Err(crate::numerics::NumericsError::IndexOutOfRange {
            op: "encode",
            index: bad,
            len: table.rows(),
        }
        .into());
    }
    let xs: Vec<&[f64]> = input_ids.iter().map(|&i| table.row(i)).collect();
    let mut fwd = Vec::with_capacity(xs.len());
    let mut h = vec![0.0; hsz];
    for x in &xs {
        h = gru_cell(params, &arch.ids.enc_fwd, x, &h);
        fwd.push(h.clone());
    }
    let mut bwd = vec![Vec::new(); xs.len()];
    let mut h = vec![0.0; hsz];
    for t in (0..xs.len()).rev() {
        h = gru_cell(params, &arch.ids.enc_bwd, xs[t], &h);
        bwd[t] = h.clone();
    }
    let att_u = params.value(arch.ids.att_u);
    let mut rows = Vec::with_capacity(xs.len());
    let mut keys = Vec::with_capacity(xs.len());
    for (f, b) in fwd.into_iter().zip(&bwd) {
        let mut row = f;
        row.extend_from_slice(b);
        let mut k = vec![0.0; att_u.cols()];
        vec_mat(&row, att_u, &mut k);
        rows.push(row);
        keys.push(k);
    }
    let mut s0 = vec![0.0; hsz];
    vec_mat(&bwd[0], params.value(arch.ids.dec_init_w), &mut s0);
    let bias = params.value(arch.ids.dec_init_b).data();
    s0.iter_mut().zip(bias).for_each(|(s, b)| *s = (*s + b).tanh());
    Ok(EncoderStates { h: rows, keys, s0 })
}

/// Attention weights over encoder positions and the resulting context.
pub fn attend(arch: &Arch, params: &ParamStore, s_prev: &[f64], enc: &EncoderStates) -> (Vec<f64>, Vec<f64>) {
    let w = params.value(arch.ids.att_w);
    let v = params.value(arch.ids.att_v).data();
    let mut proj = vec![0.0; w.cols()];
    vec_mat(s_prev, w, &mut proj);
    let scores: Vec<f64> = enc
        .keys
        .iter()
        .map(|key| {
            let mut s = 0.0;
            for k in 0..proj.len() {
                s += v[k] * (proj[k] + key[k]).tanh();
            }
            s
        })
        .collect();
    let mut alpha = vec![0.0; scores.len()];
    masked_softmax_into(&scores, &vec![true; scores.len()], &mut alpha).expect("non-empty input");
    let d = enc.h[0].len();
    let mut ctx = vec![0.0; d];
    for (a, row) in alpha.iter().zip(&enc.h) {
        for (c, x) in ctx.iter_mut().zip(row) {
            *c += a * x;
        }
    }
    (alpha, ctx)
}

/// One decoder step: returns the new state, the output distribution (zero on
/// BOW and PAD) and the attention weights used.
pub fn decode_step(
    arch: &Arch,
    params: &ParamStore,
    y_prev: usize,
    s_prev: &[f64],
    enc: &EncoderStates,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let emb = params.value(arch.ids.dec_embed).row(y_prev);
    let (alpha, ctx) = attend(arch, params, s_prev, enc);
    let mut x = emb.to_vec();
    x.extend_from_slice(&ctx);
    let s = gru_cell(params, &arch.ids.dec_gru, &x, s_prev);
    let mut o = emb.to_vec();
    o.extend_from_slice(&s);
    o.extend_from_slice(&ctx);
    let w = params.value(arch.ids.out_w);
    let mut logits = vec![0.0; w.cols()];
    vec_mat(&o, w, &mut logits);
    let b = params.value(arch.ids.out_b).data();
    logits.iter_mut().zip(b).for_each(|(l, b)| *l += b);
    let mut dist = vec![0.0; logits.len()];
    masked_softmax_into(&logits, &arch.support, &mut dist).expect("support is non-empty");
    (s, dist, alpha)
}
