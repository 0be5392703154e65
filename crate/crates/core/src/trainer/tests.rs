use super::*;
use crate::corpus::{parse_tag, LanguageCode, Sample, TagFormat};
use crate::encoding::encode_all;
use crate::model::{InitScheme, ModelConfig};
use crate::numerics::Tensor;

/// Four lemmata in five suffixing cells.
fn toy() -> Vec<Sample> {
    let lang = LanguageCode::new("xx").unwrap();
    let suffixes = [("V;PRS;1;SG", "o"), ("V;PRS;2;SG", "as"), ("V;PRS;3;SG", "a"), ("V;PST;1;SG", "é"), ("V;PST;3;PL", "aron")];
    let mut out = Vec::new();
    for stem in ["cant", "habl", "mir", "pas"] {
        for (tag, suf) in suffixes {
            let t = parse_tag(tag, TagFormat::default()).unwrap();
            out.push(Sample::new(lang.clone(), &format!("{stem}ar"), t, &format!("{stem}{suf}")).unwrap());
        }
    }
    out
}

fn setup(hidden: usize, emb: usize, seed: u64) -> (Model, SymbolVocab, Vec<EncodedSample>) {
    let samples = toy();
    let vocab = SymbolVocab::build(&samples).unwrap();
    let encoded = encode_all(&samples, &vocab).unwrap();
    let cfg = ModelConfig {
        hidden_size: hidden,
        embedding_size: emb,
        input_vocab_size: vocab.input_size(),
        output_vocab_size: vocab.output_size(),
        max_decode_length: 12,
    };
    (Model::new(cfg, InitScheme::default(), seed).unwrap(), vocab, encoded)
}

fn short_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 7,
        seed: 3,
        eval_every: 2,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_returns_initialization() {
    let (model, vocab, data) = setup(6, 6, 1);
    let out = train(model.clone(), &vocab, &data, &data, &TrainConfig { epochs: 0, ..short_config(0) }).unwrap();
    assert_eq!(out.selected.model.params, model.params);
    assert_eq!(out.selected.epoch, 0);
    assert!(out.history.is_empty());
}

#[test]
fn training_is_deterministic_and_resumable() {
    let (model, vocab, data) = setup(6, 6, 1);
    let a = train(model.clone(), &vocab, &data, &data, &short_config(4)).unwrap();
    let b = train(model.clone(), &vocab, &data, &data, &short_config(4)).unwrap();
    assert_eq!(a.selected.to_bytes(), b.selected.to_bytes());
    assert_eq!(a.last.to_bytes(), b.last.to_bytes());

    let half = train(model, &vocab, &data, &data, &short_config(2)).unwrap();
    let reloaded = Checkpoint::from_bytes(&half.last.to_bytes()).unwrap();
    let rest = resume_from(reloaded, &data, &data, &short_config(4)).unwrap();
    assert_eq!(rest.last.to_bytes(), a.last.to_bytes());
    assert_eq!(rest.history, a.history[2..]);
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let (model, vocab, data) = setup(5, 4, 2);
    let out = train(model, &vocab, &data, &data, &short_config(2)).unwrap();
    let bytes = out.last.to_bytes();
    assert_eq!(&bytes[..4], MAGIC);
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.model.params, out.last.model.params);
    assert_eq!(back.dev, out.last.dev);
    assert_eq!(back.to_bytes(), bytes);

    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 9]), Err(TrainError::Corrupt(_))));
    let mut flipped = bytes.clone();
    flipped[40] ^= 1;
    assert!(matches!(Checkpoint::from_bytes(&flipped), Err(TrainError::Corrupt(_))));

    // A valid file claiming a future format version.
    let mut future = bytes[..bytes.len() - 32].to_vec();
    future[4..8].copy_from_slice(&99u32.to_le_bytes());
    let digest = <sha2::Sha256 as sha2::Digest>::digest(&future);
    future.extend_from_slice(&digest);
    assert!(matches!(Checkpoint::from_bytes(&future), Err(TrainError::Version(99))));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    out.last.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    assert_eq!(Checkpoint::load(&path).unwrap().model.params, out.last.model.params);
}

#[test]
fn vocab_mismatch_is_refused() {
    let (model, vocab, data) = setup(5, 4, 2);
    let out = train(model, &vocab, &data, &data, &short_config(1)).unwrap();
    let mut other = toy();
    other[0].form.push('z');
    let other_vocab = SymbolVocab::build(&other).unwrap();
    assert!(matches!(out.selected.check_vocab(&other_vocab), Err(TrainError::VocabMismatch)));
    assert!(out.selected.check_vocab(&vocab).is_ok());
}

#[test]
fn empty_inputs_and_non_finite_loss() {
    let (mut model, vocab, data) = setup(5, 4, 2);
    assert!(matches!(evaluate_dev(&model, &vocab, &[], 5), Err(TrainError::EmptyDev)));
    assert!(matches!(train(model.clone(), &vocab, &[], &data, &short_config(1)), Err(TrainError::EmptyTrain)));
    let id = model.arch.ids.out_b;
    let n = model.params.value(id).len();
    // Finite parameters whose loss overflows: every target character sits
    // 2e308 below EOW.
    let mut bias = vec![-1e308; n];
    bias[crate::encoding::EOW] = 1e308;
    *model.params.value_mut(id) = Tensor::matrix(1, n, bias).unwrap();
    assert!(matches!(
        train(model.clone(), &vocab, &data, &data, &short_config(1)),
        Err(TrainError::NonFinite { epoch: 1, batch: 0 })
    ));
    *model.params.value_mut(id) = Tensor::matrix(1, n, vec![f64::NAN; n]).unwrap();
    assert!(matches!(
        train(model, &vocab, &data, &data, &short_config(1)),
        Err(TrainError::NonFinite { epoch: 1, batch: 0 })
    ));
}

#[test]
fn training_log_is_tsv() {
    let (model, vocab, data) = setup(5, 4, 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        log_path: Some(dir.path().join("train.log")),
        checkpoint_dir: Some(dir.path().join("ckpt")),
        ..short_config(3)
    };
    train(model, &vocab, &data, &data, &cfg).unwrap();
    let log = std::fs::read_to_string(dir.path().join("train.log")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch\ttrain_loss\tdev_acc\tdev_ed");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].ends_with("\t-\t-"));
    assert!(!lines[2].ends_with("\t-\t-"));
    assert!(dir.path().join("ckpt/best.ckpt").exists());
    assert!(dir.path().join("ckpt/final.ckpt").exists());
}

#[test]
fn selection_prefers_accuracy_then_distance_then_epoch() {
    let m = |a, e| DevMetrics {
        accuracy: a,
        mean_edit_distance: e,
        loss: 0.0,
    };
    assert!(better(&m(0.5, 2.0), 20, &m(0.4, 0.1), 10));
    assert!(better(&m(0.5, 1.0), 20, &m(0.5, 2.0), 10));
    assert!(better(&m(0.5, 1.0), 10, &m(0.5, 1.0), 20));
    assert!(!better(&m(0.5, 1.0), 20, &m(0.5, 1.0), 10));
}
