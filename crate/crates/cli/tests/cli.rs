use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn morphxfer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morphxfer")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_spec(dir: &Path, extra: &str) -> String {
    let path = dir.join("exp.spec");
    std::fs::write(
        &path,
        format!(
            "# tiny synthetic run\nsources = aa\ntarget = bb\nsynthetic_lemmata = 20\nn_s = 60\nn_t = 20\n\
             dev_size = 20\ntest_size = 30\nhidden_size = 8\nembedding_size = 8\nepochs = 2\nout_dir = {}\n{extra}",
            dir.join("run").display()
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&morphxfer(&["--help"])), 0);
    assert_eq!(code(&morphxfer(&["no-such-command"])), 1);
    assert_eq!(code(&morphxfer(&["gradcheck", "--step", "abc"])), 1);
}

#[test]
fn gradcheck_exit_codes() {
    let ok = morphxfer(&["gradcheck", "--seed", "13"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    assert_eq!(code(&morphxfer(&["gradcheck", "--seed", "0", "--adaptive"])), 0);
    assert_eq!(code(&morphxfer(&["gradcheck", "--seed", "13", "--tolerance", "1e-30"])), 3);
}

#[test]
fn spec_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "kind = shot\n");
    // Subcommand and spec disagree on the kind.
    assert_eq!(code(&morphxfer(&["exp", "transfer", &spec])), 1);
    assert_eq!(code(&morphxfer(&["exp", "shot", &spec, "--no-such-key", "1"])), 1);
    assert_eq!(code(&morphxfer(&["exp", "shot", &spec, "--n-t", "many"])), 1);
    assert_eq!(code(&morphxfer(&["exp", "shot", &spec, "--epochs"])), 1);
}

#[test]
fn missing_input_files_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.spec");
    assert_eq!(code(&morphxfer(&["exp", "transfer", missing.to_str().unwrap()])), 2);
    let spec = dir.path().join("files.spec");
    std::fs::write(
        &spec,
        format!(
            "kind = transfer\nsources = aa\ntarget = bb\ndata.aa = {0}/aa.tsv\ndata.bb = {0}/bb.tsv\nout_dir = {0}/run\n",
            dir.path().display()
        ),
    )
    .unwrap();
    assert_eq!(code(&morphxfer(&["exp", "transfer", spec.to_str().unwrap()])), 2);
}

#[test]
fn experiment_with_overrides_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "");
    let out = morphxfer(&["exp", "transfer", &spec, "--baseline", "true", "--epochs=1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let results = std::fs::read_to_string(dir.path().join("run/results.tsv")).unwrap();
    let sources: Vec<&str> = results.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(sources, ["0", "aa"]);
    let manifest = std::fs::read_to_string(dir.path().join("run/manifest.txt")).unwrap();
    assert!(manifest.contains("epochs = 1\n"));
    assert!(manifest.contains("kind = transfer\n"));
    assert!(!stdout(&out).is_empty());
}

#[test]
fn prepare_train_decode_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "kind = transfer\n");
    let split = dir.path().join("run");
    let model = dir.path().join("model");
    assert_eq!(code(&morphxfer(&["prepare", &spec])), 0);
    assert!(split.join("split.tsv").is_file());

    let train = morphxfer(&[
        "train",
        "--split",
        split.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--hidden-size",
        "8",
        "--embedding-size",
        "8",
        "--epochs",
        "2",
        "--eval-every",
        "1",
    ]);
    assert_eq!(code(&train), 0, "{}", String::from_utf8_lossy(&train.stderr));
    assert!(stdout(&train).starts_with("selected epoch"));
    let ckpt = model.join("best.ckpt");
    assert!(ckpt.is_file());
    assert!(model.join("train.log").is_file());

    let mut child = Command::new(env!("CARGO_BIN_EXE_morphxfer"))
        .args(["decode", "--checkpoint", ckpt.to_str().unwrap(), "--beam", "3"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"bb\tpatir\tV;PST;1;SG\n\nbb\tkor\tV;FUT;3;PL\n")
        .unwrap();
    let decoded = child.wait_with_output().unwrap();
    assert!(decoded.status.success());
    let lines: Vec<String> = stdout(&decoded).lines().map(String::from).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l.split('\t').count() == 4));
    assert!(lines[0].starts_with("bb\tpatir\tV;PST;1;SG\t"));

    let eval = morphxfer(&[
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--split",
        split.to_str().unwrap(),
        "--subset",
        "dev",
        "--tsv",
    ]);
    assert_eq!(code(&eval), 0, "{}", String::from_utf8_lossy(&eval.stderr));
    assert!(!stdout(&eval).is_empty());

    let resumed = morphxfer(&[
        "train",
        "--split",
        split.to_str().unwrap(),
        "--out",
        dir.path().join("resumed").to_str().unwrap(),
        "--epochs",
        "3",
        "--resume",
        model.join("final.ckpt").to_str().unwrap(),
    ]);
    assert_eq!(code(&resumed), 0, "{}", String::from_utf8_lossy(&resumed.stderr));

    // A malformed query line is an input error.
    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, "bb\tonly-two-columns\n").unwrap();
    let o = morphxfer(&["decode", "--checkpoint", ckpt.to_str().unwrap(), "--input", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}
