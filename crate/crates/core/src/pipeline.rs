//! End-to-end stages driven by a [`RunConfig`]: data generation, autoencoder
//! training, perceptual pretraining, feature extraction and evaluation.
//! The CLI commands are thin wrappers around these.

use log::info;

use crate::autoencoder::{self, AutoencoderModel, TrainReport};
use crate::config::RunConfig;
use crate::dataset::{import_directory, Dataset};
use crate::error::Result;
use crate::eval::{run_ablation, AblationConfig, AblationResult};
use crate::fusiform::{Extractor, FeatureBundle, Reconstructor};
use crate::perceptual::{pretrain_proxy, PerceptualModel, Provenance};
use crate::synth::proxy::generate_proxy_set;
use crate::synth::{build_pair_set, derive_seed, generate_faces, IdentitySampler};
use crate::tensor::Tensor;
use crate::verifier::FusionMode;

/// Training identities are numbered from here so they never collide with
/// benchmark identities.
pub const TRAIN_ID_OFFSET: u64 = 1 << 32;

/// Unlabelled faces for autoencoder training.
pub fn training_faces(cfg: &RunConfig) -> Result<Dataset> {
    let mut sampler = IdentitySampler::starting_at(derive_seed(cfg.seed, 10), TRAIN_ID_OFFSET);
    let (_, faces) = generate_faces(
        &mut sampler,
        cfg.train_identities,
        cfg.train_images_per_id,
        cfg.image_size,
        derive_seed(cfg.seed, 11),
    )?;
    Ok(Dataset::from_faces(faces))
}

/// The verification benchmark: imported from `cfg.import_dir` when set,
/// synthetic otherwise.
pub fn benchmark(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.import_dir {
        Some(dir) => import_directory(
            dir,
            cfg.image_size,
            cfg.pairs_per_identity,
            cfg.block_size,
            derive_seed(cfg.seed, 30),
        ),
        None => Ok(Dataset::from_pair_set(build_pair_set(&cfg.benchmark())?)),
    }
}

/// Trains and freezes the autoencoder. `on_checkpoint` sees the model at
/// every checkpoint step and at the end.
pub fn train_autoencoder(
    cfg: &RunConfig,
    images: &[Tensor],
    on_checkpoint: impl FnMut(usize, &AutoencoderModel) -> Result<()>,
) -> Result<(AutoencoderModel, TrainReport)> {
    let mut model = AutoencoderModel::new(cfg.autoencoder(), derive_seed(cfg.seed, 12))?;
    let report = autoencoder::train_autoencoder(&mut model, images, &cfg.autoencoder_training(), on_checkpoint)?;
    model.freeze();
    if let Some((head, tail)) = report.head_tail_means(20) {
        info!("autoencoder loss {head:.5} -> {tail:.5}");
    }
    Ok((model, report))
}

/// Builds the frozen perceptual network according to its configured
/// provenance.
pub fn perceptual_model(cfg: &RunConfig) -> Result<PerceptualModel> {
    match cfg.perceptual_provenance {
        Provenance::RandomFrozen => PerceptualModel::random_frozen(cfg.perceptual(), derive_seed(cfg.seed, 22)),
        Provenance::ProxyPretrained => {
            let set = generate_proxy_set(cfg.proxy_images + cfg.proxy_held_out, cfg.image_size, derive_seed(cfg.seed, 20))?;
            let (train, held_out) = set.split_at(cfg.proxy_images);
            let model = pretrain_proxy(cfg.perceptual(), train, held_out, &cfg.proxy_training())?;
            if let Some(acc) = model.proxy_accuracy {
                info!("proxy held-out accuracy {acc:.4}");
            }
            Ok(model)
        }
    }
}

/// Extracts features for every image, L2-normalized when configured.
pub fn extract_features<R: Reconstructor + ?Sized>(
    cfg: &RunConfig,
    extractor: &Extractor<'_, R>,
    images: &[Tensor],
) -> Result<Vec<FeatureBundle>> {
    let bundles = extractor.extract_batch(images)?;
    Ok(if cfg.normalize_features {
        bundles.iter().map(FeatureBundle::l2_normalized).collect()
    } else {
        bundles
    })
}

pub fn ablation_config(cfg: &RunConfig, modes: &[FusionMode]) -> AblationConfig {
    AblationConfig {
        modes: modes.to_vec(),
        k: cfg.folds,
        seed: cfg.seed,
        hidden: cfg.verifier_hidden,
        abs_diff: cfg.abs_diff,
        train: cfg.verifier_training(),
        sequential: cfg.deterministic,
    }
}

pub fn ablation(cfg: &RunConfig, data: &Dataset, bundles: &[FeatureBundle], modes: &[FusionMode]) -> Result<AblationResult> {
    run_ablation(&data.pairs, bundles, &ablation_config(cfg, modes))
}

/// Everything from data generation to the ablation table, in memory.
pub struct RunOutput {
    pub autoencoder: AutoencoderModel,
    pub autoencoder_report: TrainReport,
    pub perceptual: PerceptualModel,
    pub benchmark: Dataset,
    pub bundles: Vec<FeatureBundle>,
    pub ablation: AblationResult,
}

pub fn run_all(cfg: &RunConfig) -> Result<RunOutput> {
    let train = training_faces(cfg)?;
    let (autoencoder, autoencoder_report) = train_autoencoder(cfg, &train.images, |_, _| Ok(()))?;
    let perceptual = perceptual_model(cfg)?;
    let benchmark = benchmark(cfg)?;
    let bundles = extract_features(cfg, &Extractor::new(&autoencoder, &perceptual)?, &benchmark.images)?;
    let ablation = ablation(cfg, &benchmark, &bundles, &FusionMode::ALL)?;
    Ok(RunOutput {
        autoencoder,
        autoencoder_report,
        perceptual,
        benchmark,
        bundles,
        ablation,
    })
}
