//! Runs the `fusiform` binary end to end on a small configuration.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fusiform::checkpoint::Checkpoint;

const SMALL: &str = "\
# quick end-to-end settings
train_identities=12
train_images_per_id=4
identities=30
images_per_id=4
pairs_per_identity=3
image_size=16
ae_channels=4,8
bottleneck_dim=8
perceptual_blocks=4:3:1:1,8:3:2:1
ae_steps=30
ae_checkpoint_every=10
proxy_images=100
proxy_held_out=20
proxy_steps=20
verifier_hidden=16
verifier_steps=60
folds=3
";

fn fusiform(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fusiform"))
        .arg("--config")
        .arg(dir.join("run.cfg"))
        .arg("--out")
        .arg(dir.join("run"))
        .args(args)
        .env("FUSIFORM_LOG", "error")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = fusiform(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn toy_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), SMALL).unwrap();
    let run = dir.path().join("run");
    for cmd in ["gen-data", "train-ae", "pretrain-perceptual", "train-verifier", "eval"] {
        ok(dir.path(), &[cmd]);
    }
    let summary = fs::read_to_string(run.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "mode,mean,std");
    let modes: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(modes, ["both", "vc_only", "vd_only", "perceptual_raw"]);
    let ablation = fs::read_to_string(run.join("ablation.csv")).unwrap();
    assert_eq!(ablation.lines().count(), 1 + 4 * 3);
    assert!(run.join("features/features.tsv").exists());
    assert!(run.join("data/bench/index.tsv").exists());
    assert!(run.join("autoencoder.step000010.fsfn").exists());

    // All modes were scored on one fold assignment.
    let folds = fs::read_to_string(run.join("folds.tsv")).unwrap();
    let hashes: Vec<&str> = folds.lines().skip(1).map(|l| l.split('\t').nth(1).unwrap()).collect();
    assert!(hashes.windows(2).all(|w| w[0] == w[1]));

    // A single mode on request.
    let out = ok(dir.path(), &["--mode", "vd_only", "eval"]);
    assert!(out.starts_with("vd_only"));
    assert_eq!(fs::read_to_string(run.join("summary.csv")).unwrap().lines().count(), 2);

    ok(dir.path(), &["extract"]);
}

#[test]
fn inspect_lists_every_tensor_and_crc_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), SMALL).unwrap();
    ok(dir.path(), &["pretrain-perceptual"]);
    let path = dir.path().join("run/perceptual.fsfn");
    let listing = ok(dir.path(), &["inspect", path.to_str().unwrap()]);
    let c = Checkpoint::load(&path).unwrap();
    for (name, t) in &c.tensors {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        assert!(listing.contains(&format!("{name}\t[{}]", dims.join(", "))), "{name} missing");
    }
    assert!(listing.contains("kind=perceptual"));
    assert!(listing.contains("provenance=proxy-pretrained"));

    let mut bytes = fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    fs::write(&path, bytes).unwrap();
    let out = fusiform(dir.path(), &["inspect", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("CRC"));
}

#[test]
fn failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), SMALL).unwrap();
    // No data generated yet.
    assert_eq!(fusiform(dir.path(), &["train-ae"]).status.code(), Some(3));
    fs::write(dir.path().join("run.cfg"), "no_such_key=1\n").unwrap();
    assert_eq!(fusiform(dir.path(), &["eval"]).status.code(), Some(2));

    // Checkpoint built for other dimensions.
    fs::write(dir.path().join("run.cfg"), SMALL).unwrap();
    ok(dir.path(), &["gen-data"]);
    ok(dir.path(), &["train-ae"]);
    ok(dir.path(), &["pretrain-perceptual"]);
    fs::write(dir.path().join("run.cfg"), format!("{SMALL}bottleneck_dim=6\n")).unwrap();
    let out = fusiform(dir.path(), &["extract"]);
    assert_eq!(out.status.code(), Some(7), "{}", String::from_utf8_lossy(&out.stderr));
}
