//! Character-level encoder-decoder with additive attention.
//!
//! Row-vector convention throughout: a layer maps `x` (1 x in) to `x W + b`
//! with `W` of shape in x out. The encoder is a bidirectional GRU over the
//! embedded input; the decoder is a GRU fed `[embed(y_prev); context]` whose
//! output layer reads `[embed(y_prev); s_t; context]`.

mod check;
mod decode;
mod infer;

pub use check::{random_sample, tiny_grad_check, tiny_grad_check_steps};
pub use decode::{beam_decode, greedy_decode, DecodeResult};
pub use infer::{attend, decode_step, encode, gru_cell, EncoderStates};

use rand::Rng;
use thiserror::Error;

use crate::encoding::{Batch, BOW, PAD};
use crate::numerics::{identity_init, NodeId, NumericsError, ParamId, ParamStore, Tape, Tensor};
use crate::seed;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("input id sequence is empty")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub embedding_size: usize,
    pub input_vocab_size: usize,
    pub output_vocab_size: usize,
    pub max_decode_length: usize,
}

impl ModelConfig {
    pub const DEFAULT_HIDDEN: usize = 100;
    pub const DEFAULT_EMBEDDING: usize = 300;

    pub fn new(input_vocab_size: usize, output_vocab_size: usize, max_decode_length: usize) -> Self {
        Self {
            hidden_size: Self::DEFAULT_HIDDEN,
            embedding_size: Self::DEFAULT_EMBEDDING,
            input_vocab_size,
            output_vocab_size,
            max_decode_length,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("hidden_size", self.hidden_size),
            ("embedding_size", self.embedding_size),
            ("max_decode_length", self.max_decode_length),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        // BOW, EOW, PAD plus at least one more symbol on each side.
        if self.input_vocab_size < 4 || self.output_vocab_size < 4 {
            return Err(ModelError::Config("vocabularies need at least one non-special symbol".into()));
        }
        Ok(())
    }

    /// Attention projection width; tied to the hidden size.
    pub fn attention_size(&self) -> usize {
        self.hidden_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// Truncated identity for every matrix except the six decoder GRU
    /// matrices, which are uniform in `(-range, range)`. Biases zero.
    Identity { decoder_gru_range: f64 },
    /// Every parameter, biases included, uniform in `(-range, range)`.
    Uniform { range: f64 },
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Identity {
            decoder_gru_range: 0.08,
        }
    }
}

/// Parameter handles of one GRU.
#[derive(Debug, Clone, Copy)]
pub struct GruIds {
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    pub b_h: ParamId,
}

impl GruIds {
    fn matrices(&self) -> [ParamId; 6] {
        [self.w_z, self.u_z, self.w_r, self.u_r, self.w_h, self.u_h]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParamIds {
    pub enc_embed: ParamId,
    pub enc_fwd: GruIds,
    pub enc_bwd: GruIds,
    pub dec_embed: ParamId,
    pub dec_init_w: ParamId,
    pub dec_init_b: ParamId,
    pub att_w: ParamId,
    pub att_u: ParamId,
    pub att_v: ParamId,
    pub dec_gru: GruIds,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

/// Shapes and parameter handles; cheap to clone and independent of the
/// parameter values.
#[derive(Debug, Clone)]
pub struct Arch {
    pub config: ModelConfig,
    pub ids: ParamIds,
    /// Output ids that the softmax ranges over (everything except BOW and PAD).
    pub support: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub arch: Arch,
    pub params: ParamStore,
}

/// Inverted dropout applied to embedded inputs during training.
pub struct Dropout<'a, R: Rng> {
    pub rate: f64,
    pub rng: &'a mut R,
}

impl<R: Rng> Dropout<'_, R> {
    fn mask(&mut self, n: usize) -> Vec<f64> {
        let keep = 1.0 - self.rate;
        (0..n)
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect()
    }
}

pub struct BatchLoss {
    /// `1 x 1`: mean over the batch of per-sequence summed NLL.
    pub mean: NodeId,
    /// `b x 1`: summed NLL of each sequence.
    pub per_sequence: NodeId,
}

fn add_gru(
    store: &mut ParamStore,
    prefix: &str,
    input: usize,
    hidden: usize,
) -> Result<GruIds, NumericsError> {
    let mut m = |name: &str, r: usize, c: usize| store.add(&format!("{prefix}.{name}"), Tensor::zeros(&[r, c]));
    Ok(GruIds {
        w_z: m("w_z", input, hidden)?,
        u_z: m("u_z", hidden, hidden)?,
        b_z: m("b_z", 1, hidden)?,
        w_r: m("w_r", input, hidden)?,
        u_r: m("u_r", hidden, hidden)?,
        b_r: m("b_r", 1, hidden)?,
        w_h: m("w_h", input, hidden)?,
        u_h: m("u_h", hidden, hidden)?,
        b_h: m("b_h", 1, hidden)?,
    })
}

fn is_bias(name: &str) -> bool {
    name.rsplit('.').next().is_some_and(|last| last.starts_with('b'))
}

impl Model {
    pub fn new(config: ModelConfig, init: InitScheme, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let h = config.hidden_size;
        let e = config.embedding_size;
        let a = config.attention_size();
        let mut p = ParamStore::new();
        let z = |r: usize, c: usize| Tensor::zeros(&[r, c]);
        let enc_embed = p.add("enc.embed", z(config.input_vocab_size, e))?;
        let enc_fwd = add_gru(&mut p, "enc.fwd", e, h)?;
        let enc_bwd = add_gru(&mut p, "enc.bwd", e, h)?;
        let dec_embed = p.add("dec.embed", z(config.output_vocab_size, e))?;
        let dec_init_w = p.add("dec.init.w", z(h, h))?;
        let dec_init_b = p.add("dec.init.b", z(1, h))?;
        let att_w = p.add("att.w", z(h, a))?;
        let att_u = p.add("att.u", z(2 * h, a))?;
        let att_v = p.add("att.v", z(a, 1))?;
        let dec_gru = add_gru(&mut p, "dec.gru", e + 2 * h, h)?;
        let out_w = p.add("out.w", z(e + 3 * h, config.output_vocab_size))?;
        let out_b = p.add("out.b", z(1, config.output_vocab_size))?;

        let ids = ParamIds {
            enc_embed,
            enc_fwd,
            enc_bwd,
            dec_embed,
            dec_init_w,
            dec_init_b,
            att_w,
            att_u,
            att_v,
            dec_gru,
            out_w,
            out_b,
        };
        let mut support = vec![true; config.output_vocab_size];
        support[BOW] = false;
        support[PAD] = false;
        let mut model = Model {
            arch: Arch { config, ids, support },
            params: p,
        };
        model.initialize(init, seed);
        Ok(model)
    }

    fn initialize(&mut self, init: InitScheme, seed: u64) {
        let mut rng = seed::stream(seed, "init");
        let exempt = self.arch.ids.dec_gru.matrices();
        for id in self.params.ids().collect::<Vec<_>>() {
            let name = self.params.name(id).to_string();
            let t = self.params.value_mut(id);
            let (r, c) = (t.rows(), t.cols());
            match init {
                InitScheme::Uniform { range } => {
                    t.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-range..range));
                }
                InitScheme::Identity { decoder_gru_range } => {
                    if exempt.contains(&id) {
                        t.data_mut()
                            .iter_mut()
                            .for_each(|x| *x = rng.gen_range(-decoder_gru_range..decoder_gru_range));
                    } else if is_bias(&name) {
                        t.fill(0.0);
                    } else {
                        *t = identity_init(r, c);
                    }
                }
            }
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.arch.config
    }
}

impl Arch {
    fn gru_tape(&self, tape: &mut Tape, g: &GruIds, x: NodeId, h: NodeId) -> Result<NodeId, NumericsError> {
        let gate = |tape: &mut Tape, w: ParamId, u: ParamId, b: ParamId, hin: NodeId| -> Result<NodeId, NumericsError> {
            let w = tape.param(w);
            let u = tape.param(u);
            let b = tape.param(b);
            let xw = tape.matmul(x, w)?;
            let hu = tape.matmul(hin, u)?;
            let s = tape.add(xw, hu)?;
            tape.add_row(s, b)
        };
        let z = gate(tape, g.w_z, g.u_z, g.b_z, h)?;
        let z = tape.sigmoid(z);
        let r = gate(tape, g.w_r, g.u_r, g.b_r, h)?;
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h)?;
        let cand = gate(tape, g.w_h, g.u_h, g.b_h, rh)?;
        let cand = tape.tanh(cand);
        let keep = tape.one_minus(z);
        let old = tape.mul(keep, h)?;
        let new = tape.mul(z, cand)?;
        tape.add(old, new)
    }

    fn column(ids: &[usize], width: usize, t: usize) -> Vec<usize> {
        ids.chunks(width).map(|row| row[t]).collect()
    }

    fn mask_column(mask: &[bool], width: usize, t: usize) -> Vec<f64> {
        mask.chunks(width).map(|row| if row[t] { 1.0 } else { 0.0 }).collect()
    }

    fn embed<R: Rng>(
        &self,
        tape: &mut Tape,
        table: ParamId,
        ids: &[usize],
        dropout: &mut Option<Dropout<'_, R>>,
    ) -> Result<NodeId, NumericsError> {
        let t = tape.param(table);
        let x = tape.gather(t, ids)?;
        match dropout {
            Some(d) if d.rate > 0.0 => {
                let n = ids.len() * self.config.embedding_size;
                let m = d.mask(n);
                tape.const_mul(x, m)
            }
            _ => Ok(x),
        }
    }

    /// Teacher-forced loss of a padded batch.
    pub fn batch_loss<R: Rng>(
        &self,
        tape: &mut Tape,
        batch: &Batch,
        mut dropout: Option<Dropout<'_, R>>,
    ) -> Result<BatchLoss, NumericsError> {
        let b = batch.size;
        let hsz = self.config.hidden_size;
        let li = batch.input_len;
        let lt = batch.target_len;
        if b == 0 || li == 0 || lt < 2 {
            return Err(NumericsError::Empty("batch"));
        }
        let ids = &self.ids;

        let mut xs = Vec::with_capacity(li);
        for t in 0..li {
            xs.push(self.embed(tape, ids.enc_embed, &Self::column(&batch.input, li, t), &mut dropout)?);
        }
        let masks: Vec<Vec<f64>> = (0..li).map(|t| Self::mask_column(&batch.input_mask, li, t)).collect();

        let mut fwd = Vec::with_capacity(li);
        let mut h = tape.zeros(b, hsz);
        for t in 0..li {
            let n = self.gru_tape(tape, &ids.enc_fwd, xs[t], h)?;
            h = tape.blend(n, h, &masks[t])?;
            fwd.push(h);
        }
        let mut bwd = vec![h; li];
        let mut h = tape.zeros(b, hsz);
        for t in (0..li).rev() {
            let n = self.gru_tape(tape, &ids.enc_bwd, xs[t], h)?;
            h = tape.blend(n, h, &masks[t])?;
            bwd[t] = h;
        }
        let rows = (0..li)
            .map(|t| tape.concat(&[fwd[t], bwd[t]]))
            .collect::<Result<Vec<_>, _>>()?;
        let states = tape.stack(&rows)?;
        let att_u = tape.param(ids.att_u);
        let keys = tape.matmul(states, att_u)?;

        let w_init = tape.param(ids.dec_init_w);
        let b_init = tape.param(ids.dec_init_b);
        let s0 = tape.matmul(bwd[0], w_init)?;
        let s0 = tape.add_row(s0, b_init)?;
        let mut s = tape.tanh(s0);

        let att_w = tape.param(ids.att_w);
        let att_v = tape.param(ids.att_v);
        let out_w = tape.param(ids.out_w);
        let out_b = tape.param(ids.out_b);
        let mut per_seq: Option<NodeId> = None;
        for t in 1..lt {
            let y_prev = self.embed(tape, ids.dec_embed, &Self::column(&batch.target, lt, t - 1), &mut dropout)?;
            let proj = tape.matmul(s, att_w)?;
            let scores = tape.additive_scores(proj, keys, att_v)?;
            let alpha = tape.masked_softmax(scores, &batch.input_mask)?;
            let ctx = tape.attend_sum(alpha, states)?;
            let x = tape.concat(&[y_prev, ctx])?;
            s = self.gru_tape(tape, &ids.dec_gru, x, s)?;
            let o = tape.concat(&[y_prev, s, ctx])?;
            let logits = tape.matmul(o, out_w)?;
            let logits = tape.add_row(logits, out_b)?;
            let targets = Self::column(&batch.target, lt, t);
            let weights = Self::mask_column(&batch.target_mask, lt, t);
            let nll = tape.cross_entropy(logits, &self.support, &targets, &weights)?;
            per_seq = Some(match per_seq {
                None => nll,
                Some(acc) => tape.add(acc, nll)?,
            });
        }
        let per_sequence = per_seq.expect("lt >= 2");
        let total = tape.sum_all(per_sequence);
        let mean = tape.scale(total, 1.0 / b as f64);
        Ok(BatchLoss { mean, per_sequence })
    }
}

/// Batch loss without dropout.
pub fn eval_loss(arch: &Arch, tape: &mut Tape, batch: &Batch) -> Result<BatchLoss, NumericsError> {
    arch.batch_loss::<rand_chacha::ChaCha8Rng>(tape, batch, None)
}

#[cfg(test)]
mod tests;
