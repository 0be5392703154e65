use rand::Rng;

use super::{eval_loss, InitScheme, Model, ModelConfig, ModelError};
use crate::corpus::LanguageCode;
use crate::encoding::{Batch, EncodedSample, BOW, EOW, NUM_SPECIALS};
use crate::numerics::{grad_check_steps, GradCheckReport};
use crate::seed;

/// Random encoded sample with 1..=`max_len` symbols on each side.
pub fn random_sample<R: Rng>(rng: &mut R, vin: usize, vout: usize, max_len: usize) -> EncodedSample {
    let mut side = |v: usize| {
        let n = rng.gen_range(1..=max_len);
        let mut ids = vec![BOW];
        ids.extend((0..n).map(|_| rng.gen_range(NUM_SPECIALS..v)));
        ids.push(EOW);
        ids
    };
    let input_ids = side(vin);
    let target_ids = side(vout);
    EncodedSample {
        input_ids,
        target_ids,
        language: LanguageCode::new("xx").expect("valid code"),
    }
}

/// Finite-difference check of every parameter of a tiny model (hidden 4,
/// embedding 5, vocabularies 12/10) on one random batch of 3 samples of at
/// most 6 symbols.
pub fn tiny_grad_check(seed_value: u64, h: f64) -> Result<GradCheckReport, ModelError> {
    tiny_grad_check_steps(seed_value, &[h])
}

/// [`tiny_grad_check`] scoring each coordinate with its best step.
pub fn tiny_grad_check_steps(seed_value: u64, steps: &[f64]) -> Result<GradCheckReport, ModelError> {
    let config = ModelConfig {
        hidden_size: 4,
        embedding_size: 5,
        input_vocab_size: 12,
        output_vocab_size: 10,
        max_decode_length: 8,
    };
    let mut model = Model::new(config, InitScheme::Uniform { range: 0.5 }, seed_value)?;
    let mut rng = seed::stream(seed_value, "gradcheck");
    let samples: Vec<EncodedSample> = (0..3).map(|_| random_sample(&mut rng, 12, 10, 6)).collect();
    let refs: Vec<&EncodedSample> = samples.iter().collect();
    let batch = Batch::from_samples(&refs);
    let arch = model.arch.clone();
    Ok(grad_check_steps(&mut model.params, |t| Ok(eval_loss(&arch, t, &batch)?.mean), steps)?)
}
