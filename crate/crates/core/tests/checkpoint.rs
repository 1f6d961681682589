use fusiform::autoencoder::AutoencoderModel;
use fusiform::checkpoint::{self, Checkpoint};
use fusiform::config::RunConfig;
use fusiform::error::Error;
use fusiform::perceptual::{PerceptualModel, Provenance};
use fusiform::verifier::{FusionMode, VerifierModel};
use fusiform::Tensor;

fn small_config() -> RunConfig {
    RunConfig::parse("image_size=16\nae_channels=4,8\nbottleneck_dim=5\nperceptual_blocks=4:3:1:1,6:3:2:1\nverifier_hidden=7\nseed=11\n")
        .unwrap()
}

fn images(n: usize) -> Tensor {
    Tensor::from_fn([n, 3, 16, 16], |i| ((i * 37) % 101) as f32 / 100.0)
}

fn bits(t: &Tensor) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

fn score_bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|v| v.to_bits()).collect()
}

#[test]
fn autoencoder_forward_is_bit_identical_after_reload() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ae.fsfn");
    let mut ae = AutoencoderModel::new(cfg.autoencoder(), 4).unwrap();
    ae.freeze();
    checkpoint::save_autoencoder(&path, &cfg, &ae).unwrap();
    let back = checkpoint::load_autoencoder(&path, &cfg).unwrap();
    let (r1, z1) = ae.reconstruct(&images(3)).unwrap();
    let (r2, z2) = back.reconstruct(&images(3)).unwrap();
    assert_eq!(bits(&r1), bits(&r2));
    assert_eq!(bits(&z1), bits(&z2));
    assert!(back.is_frozen());
    assert_eq!(back.params.checksum(), ae.params.checksum());
}

#[test]
fn perceptual_forward_and_provenance_survive_reload() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.fsfn");
    let mut p = PerceptualModel::random_frozen(cfg.perceptual(), 8).unwrap();
    p.proxy_accuracy = Some(0.8125);
    p.provenance = Provenance::ProxyPretrained;
    checkpoint::save_perceptual(&path, &cfg, &p).unwrap();
    let back = checkpoint::load_perceptual(&path, &cfg).unwrap();
    assert_eq!(back.provenance, Provenance::ProxyPretrained);
    assert_eq!(back.proxy_accuracy, Some(0.8125));
    assert_eq!(bits(&p.perceive(&images(2)).unwrap()), bits(&back.perceive(&images(2)).unwrap()));
}

#[test]
fn verifier_scores_are_bit_identical_after_reload() {
    let mut cfg = small_config();
    cfg.mode = FusionMode::VdOnly;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.fsfn");
    let width = cfg.mode.input_width(5, 6);
    let mut v = VerifierModel::new(cfg.verifier(), width, 2).unwrap();
    let x = Tensor::from_fn([9, width], |i| ((i * 13) % 17) as f32 - 8.0);
    v.fit_input_standardization(&x).unwrap();
    checkpoint::save_verifier(&path, &cfg, &v).unwrap();
    let back = checkpoint::load_verifier(&path, &cfg).unwrap();
    assert_eq!(back.config, v.config);
    assert_eq!(score_bits(&v.predict_rows(&x).unwrap()), score_bits(&back.predict_rows(&x).unwrap()));
}

#[test]
fn wrong_kind_and_dims_are_incompatible() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.fsfn");
    let p = PerceptualModel::random_frozen(cfg.perceptual(), 1).unwrap();
    checkpoint::save_perceptual(&path, &cfg, &p).unwrap();
    assert!(matches!(checkpoint::load_autoencoder(&path, &cfg), Err(Error::Incompatible(_))));
    let mut other = cfg.clone();
    other.perceptual_blocks[1].channels = 9;
    assert!(matches!(checkpoint::load_perceptual(&path, &other), Err(Error::Incompatible(_))));
}

#[test]
fn stored_config_reproduces_run_config() {
    let cfg = RunConfig::paper_scale();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.fsfn");
    let v = VerifierModel::new(cfg.verifier(), cfg.mode.input_width(4, 4), 0).unwrap();
    checkpoint::save_verifier(&path, &cfg, &v).unwrap();
    let stored = checkpoint::stored_config(&Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(stored.to_text(), cfg.to_text());
}
