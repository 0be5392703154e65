use rand::Rng;

use super::*;
use crate::encoding::{Batch, EncodedSample, EOW};
use crate::numerics::Tape;

fn tiny_config(vin: usize, vout: usize) -> ModelConfig {
    ModelConfig {
        hidden_size: 4,
        embedding_size: 5,
        input_vocab_size: vin,
        output_vocab_size: vout,
        max_decode_length: 8,
    }
}

fn random_model(vin: usize, vout: usize, seed: u64) -> Model {
    Model::new(tiny_config(vin, vout), InitScheme::Uniform { range: 0.5 }, seed).unwrap()
}

fn tape_losses(model: &Model, samples: &[EncodedSample]) -> (f64, Vec<f64>) {
    let refs: Vec<&EncodedSample> = samples.iter().collect();
    let batch = Batch::from_samples(&refs);
    let mut tape = Tape::new(&model.params);
    let l = eval_loss(&model.arch, &mut tape, &batch).unwrap();
    (tape.scalar(l.mean).unwrap(), tape.value(l.per_sequence).to_vec())
}

fn plain_nll(model: &Model, e: &EncodedSample) -> f64 {
    let enc = encode(&model.arch, &model.params, &e.input_ids).unwrap();
    let mut s = enc.s0.clone();
    let mut nll = 0.0;
    for t in 1..e.target_ids.len() {
        let (next, dist, _) = decode_step(&model.arch, &model.params, e.target_ids[t - 1], &s, &enc);
        s = next;
        nll -= dist[e.target_ids[t]].ln();
    }
    nll
}

#[test]
fn gru_with_zero_weights_halves_state() {
    let model = random_model(6, 6, 0);
    let mut params = model.params.clone();
    let g = model.arch.ids.enc_fwd;
    for id in [g.w_z, g.u_z, g.b_z, g.w_r, g.u_r, g.b_r, g.w_h, g.u_h, g.b_h] {
        params.value_mut(id).fill(0.0);
    }
    let v = [0.3, -0.7, 0.9, 0.1];
    let h = gru_cell(&params, &g, &[1.0, 2.0, 3.0, 4.0, 5.0], &v);
    for (a, b) in h.iter().zip(v) {
        assert_eq!(*a, 0.5 * b);
    }
    let zero = gru_cell(&params, &g, &[1.0; 5], &[0.0; 4]);
    assert!(zero.iter().all(|&x| x == 0.0));
}

#[test]
fn gru_output_is_bounded() {
    let model = Model::new(tiny_config(6, 6), InitScheme::Uniform { range: 1.0 }, 1).unwrap();
    let mut rng = crate::seed::rng(5);
    for _ in 0..200 {
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let h: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.999..0.999)).collect();
        let out = gru_cell(&model.params, &model.arch.ids.enc_bwd, &x, &h);
        assert!(out.iter().all(|v| v.abs() < 1.0));
    }
}

#[test]
fn length_one_input_states() {
    let model = random_model(6, 6, 2);
    let enc = encode(&model.arch, &model.params, &[4]).unwrap();
    assert_eq!(enc.len(), 1);
    assert_eq!(enc.h[0].len(), 8);
    let x = model.params.value(model.arch.ids.enc_embed).row(4);
    let f = gru_cell(&model.params, &model.arch.ids.enc_fwd, x, &[0.0; 4]);
    let b = gru_cell(&model.params, &model.arch.ids.enc_bwd, x, &[0.0; 4]);
    assert_eq!(&enc.h[0][..4], &f[..]);
    assert_eq!(&enc.h[0][4..], &b[..]);
    let (alpha, ctx) = attend(&model.arch, &model.params, &enc.s0, &enc);
    assert_eq!(alpha, vec![1.0]);
    assert_eq!(ctx, enc.h[0]);
}

#[test]
fn reversed_input_swaps_directions() {
    let mut model = random_model(8, 6, 3);
    // Tie the two directions so reversal is a pure symmetry.
    let (f, b) = (model.arch.ids.enc_fwd, model.arch.ids.enc_bwd);
    for (src, dst) in f.matrices().iter().zip(b.matrices()).chain([(f.b_z, b.b_z), (f.b_r, b.b_r), (f.b_h, b.b_h)].iter().map(|(a, b)| (a, *b))) {
        let v = model.params.value(*src).clone();
        *model.params.value_mut(dst) = v;
    }
    let ids = [0, 4, 5, 7, 1];
    let rev: Vec<usize> = ids.iter().rev().copied().collect();
    let a = encode(&model.arch, &model.params, &ids).unwrap();
    let r = encode(&model.arch, &model.params, &rev).unwrap();
    let n = ids.len();
    for i in 0..n {
        assert_eq!(&a.h[i][..4], &r.h[n - 1 - i][4..]);
        assert_eq!(&a.h[i][4..], &r.h[n - 1 - i][..4]);
    }
}

#[test]
fn zero_attention_weights_give_uniform_alpha() {
    let mut model = random_model(8, 6, 4);
    for id in [model.arch.ids.att_w, model.arch.ids.att_u, model.arch.ids.att_v] {
        model.params.value_mut(id).fill(0.0);
    }
    let enc = encode(&model.arch, &model.params, &[0, 3, 4, 5, 1]).unwrap();
    let (alpha, _) = attend(&model.arch, &model.params, &enc.s0, &enc);
    assert!(alpha.iter().all(|&a| (a - 0.2).abs() < 1e-15));
}

#[test]
fn attention_is_normalized_and_context_in_hull() {
    let model = random_model(9, 7, 5);
    let mut rng = crate::seed::rng(6);
    for _ in 0..50 {
        let e = random_sample(&mut rng, 9, 7, 6);
        let enc = encode(&model.arch, &model.params, &e.input_ids).unwrap();
        let s: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (alpha, ctx) = attend(&model.arch, &model.params, &s, &enc);
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (k, c) in ctx.iter().enumerate() {
            let lo = enc.h.iter().map(|r| r[k]).fold(f64::INFINITY, f64::min);
            let hi = enc.h.iter().map(|r| r[k]).fold(f64::NEG_INFINITY, f64::max);
            assert!(*c >= lo - 1e-12 && *c <= hi + 1e-12);
        }
        let (_, dist, _) = decode_step(&model.arch, &model.params, BOW, &s, &enc);
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(dist.iter().all(|&p| p >= 0.0));
        assert_eq!(dist[BOW], 0.0);
        assert_eq!(dist[PAD], 0.0);
        let (_, again, _) = decode_step(&model.arch, &model.params, BOW, &s, &enc);
        assert_eq!(dist, again);
    }
}

#[test]
fn zero_output_layer_gives_uniform_loss() {
    for (vout, seed) in [(4usize, 0u64), (5, 1), (9, 2)] {
        let mut model = random_model(8, vout, seed);
        model.params.value_mut(model.arch.ids.out_w).fill(0.0);
        model.params.value_mut(model.arch.ids.out_b).fill(0.0);
        let k = (vout - 2) as f64;
        let mut rng = crate::seed::rng(seed);
        let samples: Vec<EncodedSample> = (0..4).map(|_| random_sample(&mut rng, 8, vout, 6)).collect();
        let (_, per) = tape_losses(&model, &samples);
        for (e, l) in samples.iter().zip(per) {
            let n = (e.target_ids.len() - 1) as f64;
            assert!((l - n * k.ln()).abs() < 1e-9, "{l} vs {}", n * k.ln());
        }
    }
}

#[test]
fn tape_matches_plain_forward() {
    let model = random_model(10, 8, 7);
    let mut rng = crate::seed::rng(8);
    for _ in 0..20 {
        let e = random_sample(&mut rng, 10, 8, 6);
        let (mean, _) = tape_losses(&model, std::slice::from_ref(&e));
        let plain = plain_nll(&model, &e);
        assert!((mean - plain).abs() < 1e-12 * plain.max(1.0), "{mean} vs {plain}");
        assert!(mean >= 0.0);
    }
}

#[test]
fn batched_loss_equals_unbatched() {
    let model = random_model(12, 10, 9);
    let mut rng = crate::seed::rng(10);
    let samples: Vec<EncodedSample> = (0..7).map(|_| random_sample(&mut rng, 12, 10, 8)).collect();
    let (mean, per) = tape_losses(&model, &samples);
    for (e, l) in samples.iter().zip(&per) {
        let (alone, _) = tape_losses(&model, std::slice::from_ref(e));
        assert!((alone - l).abs() < 1e-10, "{alone} vs {l}");
    }
    assert!((mean - per.iter().sum::<f64>() / 7.0).abs() < 1e-12);
}

#[test]
fn output_relabeling_leaves_loss_unchanged() {
    let vout = 8;
    let model = random_model(10, vout, 11);
    // Permute non-special output ids: 3..8 -> rotated.
    let perm: Vec<usize> = (0..vout).map(|i| if i < 3 { i } else { 3 + (i - 3 + 2) % (vout - 3) }).collect();
    let mut relabeled = model.clone();
    let ids = model.arch.ids;
    let e = model.config().embedding_size;
    {
        let src = model.params.value(ids.dec_embed);
        let dst = relabeled.params.value_mut(ids.dec_embed);
        for i in 0..vout {
            dst.data_mut()[perm[i] * e..(perm[i] + 1) * e].copy_from_slice(src.row(i));
        }
    }
    {
        let src = model.params.value(ids.out_w).clone();
        let dst = relabeled.params.value_mut(ids.out_w);
        for r in 0..src.rows() {
            for i in 0..vout {
                dst.data_mut()[r * vout + perm[i]] = src.at(r, i);
            }
        }
        let b = model.params.value(ids.out_b).clone();
        for i in 0..vout {
            relabeled.params.value_mut(ids.out_b).data_mut()[perm[i]] = b.data()[i];
        }
    }
    let mut rng = crate::seed::rng(12);
    let samples: Vec<EncodedSample> = (0..5).map(|_| random_sample(&mut rng, 10, vout, 6)).collect();
    let mapped: Vec<EncodedSample> = samples
        .iter()
        .map(|s| EncodedSample {
            target_ids: s.target_ids.iter().map(|&t| perm[t]).collect(),
            ..s.clone()
        })
        .collect();
    let (a, _) = tape_losses(&model, &samples);
    let (b, _) = tape_losses(&relabeled, &mapped);
    assert!((a - b).abs() < 1e-12 * a.max(1.0), "{a} vs {b}");
}

#[test]
fn identity_initialization_layout() {
    let cfg = ModelConfig {
        hidden_size: 6,
        embedding_size: 7,
        input_vocab_size: 9,
        output_vocab_size: 8,
        max_decode_length: 10,
    };
    let m = Model::new(cfg, InitScheme::default(), 3).unwrap();
    let exempt = m.arch.ids.dec_gru.matrices();
    for id in m.params.ids() {
        let t = m.params.value(id);
        let name = m.params.name(id);
        if exempt.contains(&id) {
            assert!(t.data().iter().all(|x| x.abs() < 0.08), "{name}");
            assert!(t.data().iter().any(|&x| x != 0.0), "{name}");
        } else if name.rsplit('.').next().unwrap().starts_with('b') {
            assert!(t.data().iter().all(|&x| x == 0.0), "{name}");
        } else {
            assert_eq!(t, &crate::numerics::identity_init(t.rows(), t.cols()), "{name}");
        }
    }
    let again = Model::new(m.config().clone(), InitScheme::default(), 3).unwrap();
    assert_eq!(
        m.params.iter().collect::<Vec<_>>(),
        again.params.iter().collect::<Vec<_>>()
    );
}

#[test]
fn tiny_model_gradients_match_finite_differences() {
    let report = tiny_grad_check(13, 1e-5).unwrap();
    assert!(report.passes(1e-4), "{report}");
}

#[test]
fn greedy_limits_and_log_prob() {
    let model = random_model(10, 8, 15);
    let mut rng = crate::seed::rng(16);
    for _ in 0..30 {
        let e = random_sample(&mut rng, 10, 8, 6);
        let one = greedy_decode(&model.arch, &model.params, &e.input_ids, 1, false).unwrap();
        assert!(one.ids.len() <= 1);
        assert_eq!(one.truncated, one.ids.len() == 1);
        let full = greedy_decode(&model.arch, &model.params, &e.input_ids, 20, true).unwrap();
        assert!(full.log_prob <= 0.0);
        assert!(full.ids.iter().all(|&i| i >= 3));
        let att = full.attention.unwrap();
        assert!(att.iter().all(|a| (a.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }
}

#[test]
fn beam_width_one_is_greedy() {
    let model = Model::new(tiny_config(10, 6), InitScheme::Uniform { range: 1.0 }, 17).unwrap();
    let mut rng = crate::seed::rng(18);
    for _ in 0..200 {
        let e = random_sample(&mut rng, 10, 6, 6);
        let g = greedy_decode(&model.arch, &model.params, &e.input_ids, 12, true).unwrap();
        let b = beam_decode(&model.arch, &model.params, &e.input_ids, 1, 12, true).unwrap();
        assert_eq!(g, b);
        let wide = beam_decode(&model.arch, &model.params, &e.input_ids, 4, 12, false).unwrap();
        if !g.truncated {
            assert!(!wide.truncated);
            assert!(wide.log_prob >= g.log_prob);
        }
    }
}

/// Exhaustive search over every output of at most `max_len` steps.
fn brute_force(model: &Model, input: &[usize], max_len: usize) -> (Vec<usize>, f64) {
    let enc = encode(&model.arch, &model.params, input).unwrap();
    let symbols: Vec<usize> = (0..model.config().output_vocab_size).filter(|&i| model.arch.support[i]).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut stack = vec![(Vec::<usize>::new(), enc.s0.clone(), 0.0f64)];
    while let Some((ids, s, lp)) = stack.pop() {
        if ids.len() == max_len {
            continue;
        }
        let (next, dist, _) = decode_step(&model.arch, &model.params, ids.last().copied().unwrap_or(BOW), &s, &enc);
        for &y in &symbols {
            let total = lp + dist[y].ln();
            if y == EOW {
                if best.as_ref().map_or(true, |b| total > b.1) {
                    best = Some((ids.clone(), total));
                }
            } else {
                let mut more = ids.clone();
                more.push(y);
                stack.push((more, next.clone(), total));
            }
        }
    }
    best.unwrap()
}

#[test]
fn wide_beam_equals_exhaustive_search() {
    // Three supported outputs: EOW and two characters.
    let model = Model::new(tiny_config(8, 5), InitScheme::Uniform { range: 1.5 }, 19).unwrap();
    let mut rng = crate::seed::rng(20);
    for _ in 0..50 {
        let e = random_sample(&mut rng, 8, 5, 5);
        let (ids, lp) = brute_force(&model, &e.input_ids, 3);
        let beam = beam_decode(&model.arch, &model.params, &e.input_ids, 27, 3, false).unwrap();
        assert!(!beam.truncated);
        assert_eq!(beam.ids, ids);
        assert!((beam.log_prob - lp).abs() < 1e-12);
    }
}
