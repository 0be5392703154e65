use std::path::Path;

use morphxfer::corpus::{sample_transfer_dataset, SplitSizes};
use morphxfer::encoding::{encode_all, SymbolVocab};
use morphxfer::evalx::evaluate;
use morphxfer::experiment::synthetic::synthetic_family;
use morphxfer::experiment::{
    run_cipher, run_learning_curve, run_shot, run_transfer, ExpError, ExperimentSpec, SpecBuilder, RESULTS_HEADER,
};
use morphxfer::model::{InitScheme, Model, ModelConfig};
use morphxfer::trainer::{predict, train};

fn spec(kind: &str, extra: &str, out: &Path) -> ExperimentSpec {
    ExperimentSpec::parse(&format!(
        "kind = {kind}\ntarget = bb\nsynthetic_lemmata = 20\nn_s = 80\nn_t = 20\ndev_size = 20\ntest_size = 40\n\
         seed = 9\nhidden_size = 10\nembedding_size = 8\nepochs = 3\neval_every = 1\nout_dir = {}\n{extra}",
        out.display()
    ))
    .unwrap()
}

#[test]
fn baseline_row_equals_plain_monolingual_training() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec("transfer", "sources = aa\nbaseline = true\n", dir.path());
    let rows = run_transfer(&s).unwrap();
    assert_eq!(rows.iter().map(|r| r.source.as_str()).collect::<Vec<_>>(), ["0", "aa"]);

    let family = synthetic_family(20, 0);
    let sizes = SplitSizes {
        n_s: 0,
        n_t: 20,
        dev: 20,
        test: 40,
    };
    let split = sample_transfer_dataset(&[], &family.b, sizes, s.seeds().split).unwrap();
    let vocab = SymbolVocab::build(split.all_samples()).unwrap();
    let train_data = encode_all(&split.train, &vocab).unwrap();
    let dev = encode_all(&split.dev, &vocab).unwrap();
    let test = encode_all(&split.test, &vocab).unwrap();
    let longest = split.train.iter().map(|x| x.form.chars().count()).max().unwrap();
    let config = ModelConfig {
        hidden_size: 10,
        embedding_size: 8,
        ..ModelConfig::new(vocab.input_size(), vocab.output_size(), longest + 5)
    };
    let model = Model::new(config, InitScheme::default(), s.seeds().init).unwrap();
    let out = train(model, &vocab, &train_data, &dev, &s.train_config()).unwrap();
    let preds = predict(&out.selected.model, &vocab, &test).unwrap();
    let golds: Vec<&str> = split.test.iter().map(|x| x.form.as_str()).collect();
    let report = evaluate(&preds, &golds).unwrap();

    assert_eq!(rows[0].accuracy, report.accuracy);
    assert_eq!(rows[0].mean_edit_distance, report.mean_edit_distance);
    let saved = std::fs::read(dir.path().join(&rows[0].checkpoint)).unwrap();
    assert_eq!(saved, out.selected.to_bytes());

    let results = std::fs::read_to_string(dir.path().join("results.tsv")).unwrap();
    assert_eq!(results.lines().next(), Some(RESULTS_HEADER));
    assert_eq!(results.lines().count(), 3);
    for f in ["summary.txt", "manifest.txt", "timing.tsv", "cells/0_n20/train.log", "cells/aa_n20/predictions.tsv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn identity_cipher_reproduces_the_original_row() {
    let dir = tempfile::tempdir().unwrap();
    let rows = run_cipher(&spec("cipher", "sources = aa\nidentity_cipher = true\n", dir.path())).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].source, "aa ciph");
    assert_eq!(rows[0].accuracy, rows[1].accuracy);
    assert_eq!(rows[0].mean_edit_distance, rows[1].mean_edit_distance);
    let a = std::fs::read(dir.path().join(&rows[0].checkpoint)).unwrap();
    let b = std::fs::read(dir.path().join(&rows[1].checkpoint)).unwrap();
    assert_eq!(a, b);

    let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    let digests: Vec<&str> = manifest.lines().filter(|l| l.starts_with("target_stream_digest")).collect();
    assert_eq!(digests.len(), 2);
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn real_cipher_keeps_target_stream() {
    let dir = tempfile::tempdir().unwrap();
    let rows = run_cipher(&spec("cipher", "sources = aa\ncipher_seed = 4\n", dir.path())).unwrap();
    let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    let digests: Vec<&str> = manifest.lines().filter(|l| l.starts_with("target_stream_digest")).collect();
    assert_eq!(digests[0], digests[1]);
    assert!(manifest.contains("[cipher]\nseed = 4\n"));
    assert_ne!(
        std::fs::read(dir.path().join(&rows[0].checkpoint)).unwrap(),
        std::fs::read(dir.path().join(&rows[1].checkpoint)).unwrap()
    );
}

#[test]
fn learning_curve_orders_rows_and_skips_large_points() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(
        "learning_curve",
        "sources = aa\nbaseline = true\ncurve_sizes = 30,10\nextra_points = 5000\nepochs = 1\n",
        dir.path(),
    );
    let out = run_learning_curve(&s).unwrap();
    let keys: Vec<(usize, &str)> = out.rows.iter().map(|r| (r.n_t, r.source.as_str())).collect();
    assert_eq!(keys, [(10, "0"), (10, "aa"), (30, "0"), (30, "aa")]);
    assert_eq!(out.skipped.len(), 2);
    assert!(out.skipped.iter().all(|k| k.n_t == 5000));
    let csv = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(std::fs::read_to_string(dir.path().join("summary.txt")).unwrap().contains("skipped"));
}

#[test]
fn shot_run_reports_both_classes() {
    let dir = tempfile::tempdir().unwrap();
    let rows = run_shot(&spec("shot", "sources = aa\nbaseline = true\n", dir.path())).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        // 30 tags: one training sample for each of 15.
        assert_eq!(r.row.n_t, 15);
        let shots = r.report.shots.as_ref().unwrap();
        assert_eq!(shots.one_shot.n + shots.zero_shot.n, 40);
        assert_eq!(r.report.n, 40);
    }
    let tsv = std::fs::read_to_string(dir.path().join("shot.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 5);
}

#[test]
fn monolingual_kind_and_kind_checks() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec("monolingual", "", dir.path());
    let rows = run_transfer(&s).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].source, "0");
    assert!(matches!(run_shot(&s), Err(ExpError::WrongKind { .. })));

    let mut b = SpecBuilder::parse(&s.to_text()).unwrap();
    b.set("target", "zz").unwrap();
    assert!(matches!(run_transfer(&b.build().unwrap()), Err(ExpError::MissingData(_))));
}

#[test]
fn unimorph_files_drive_an_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let family = synthetic_family(12, 3);
    for (name, samples) in [("aa.tsv", &family.a), ("bb.tsv", &family.b)] {
        let text: String = samples.iter().map(|s| format!("{}\t{}\t{}\n", s.lemma, s.form, s.tag)).collect();
        std::fs::write(dir.path().join(name), text).unwrap();
    }
    let text = format!(
        "kind = transfer\nsources = aa\ntarget = bb\ndata.aa = {}\ndata.bb = {}\nn_s = 50\nn_t = 10\ndev_size = 10\n\
         test_size = 20\nhidden_size = 6\nembedding_size = 6\nepochs = 1\nout_dir = {}\n",
        dir.path().join("aa.tsv").display(),
        dir.path().join("bb.tsv").display(),
        dir.path().join("run").display()
    );
    let rows = run_transfer(&ExperimentSpec::parse(&text).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    let manifest = std::fs::read_to_string(dir.path().join("run/manifest.txt")).unwrap();
    // File digests are hex SHA-256.
    let line = manifest.lines().find(|l| l.starts_with("aa = ")).unwrap();
    assert_eq!(line.len(), 5 + 64);
}
