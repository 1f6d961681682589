//! Flat `key=value` run configuration with `toy` and `paper-scale` presets.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::autoencoder::{AutoencoderConfig, AutoencoderTrainConfig};
use crate::error::{Error, Result};
use crate::nn::ConvSpec;
use crate::optim::AdamConfig;
use crate::perceptual::{PerceptualConfig, Provenance, ProxyTrainConfig};
use crate::synth::PairSetConfig;
use crate::verifier::{FusionMode, VerifierConfig, VerifierTrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Toy,
    PaperScale,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Toy => "toy",
            Preset::PaperScale => "paper-scale",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Preset::Toy),
            "paper-scale" => Ok(Preset::PaperScale),
            other => Err(Error::Config(format!("unknown preset {other:?}; expected toy or paper-scale"))),
        }
    }
}

/// Sign convention of `v_d`, recorded in every checkpoint.
pub const VD_SIGN: &str = "original-minus-reconstruction";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub image_size: usize,
    pub ae_channels: Vec<usize>,
    pub bottleneck_dim: usize,
    pub perceptual_blocks: Vec<ConvSpec>,
    pub perceptual_provenance: Provenance,
    pub verifier_hidden: usize,
    pub mode: FusionMode,
    pub abs_diff: bool,
    pub normalize_features: bool,
    pub ae_steps: usize,
    pub ae_batch: usize,
    pub ae_lr: f64,
    pub ae_checkpoint_every: usize,
    pub proxy_images: usize,
    pub proxy_held_out: usize,
    pub proxy_steps: usize,
    pub proxy_batch: usize,
    pub proxy_lr: f64,
    pub verifier_steps: usize,
    pub verifier_batch: usize,
    pub verifier_lr: f64,
    pub train_identities: usize,
    pub train_images_per_id: usize,
    pub identities: usize,
    pub images_per_id: usize,
    pub pairs_per_identity: usize,
    pub block_size: usize,
    pub folds: usize,
    // Operational settings; not serialized into checkpoints.
    pub out: PathBuf,
    pub import_dir: Option<PathBuf>,
    pub threads: usize,
    pub deterministic: bool,
}

impl RunConfig {
    pub fn toy() -> Self {
        RunConfig {
            preset: Preset::Toy,
            seed: 0,
            image_size: 32,
            ae_channels: vec![16, 32, 64],
            bottleneck_dim: 64,
            perceptual_blocks: PerceptualConfig::toy().blocks,
            perceptual_provenance: Provenance::ProxyPretrained,
            verifier_hidden: 128,
            mode: FusionMode::Both,
            abs_diff: false,
            normalize_features: false,
            ae_steps: 2000,
            ae_batch: 64,
            ae_lr: 1e-3,
            ae_checkpoint_every: 500,
            proxy_images: 5000,
            proxy_held_out: 1000,
            proxy_steps: 1500,
            proxy_batch: 64,
            proxy_lr: 1e-3,
            verifier_steps: 3000,
            verifier_batch: 64,
            verifier_lr: 1e-3,
            train_identities: 200,
            train_images_per_id: 10,
            identities: 1000,
            images_per_id: 10,
            pairs_per_identity: 10,
            block_size: 5,
            folds: 10,
            out: PathBuf::from("run"),
            import_dir: None,
            threads: 0,
            deterministic: false,
        }
    }

    pub fn paper_scale() -> Self {
        let ae = AutoencoderConfig::paper_scale();
        let ae_train = AutoencoderTrainConfig::paper_scale();
        let ver = VerifierTrainConfig::paper_scale();
        RunConfig {
            preset: Preset::PaperScale,
            image_size: ae.image_size,
            ae_channels: ae.channels,
            bottleneck_dim: ae.bottleneck_dim,
            perceptual_blocks: PerceptualConfig::paper_scale().blocks,
            verifier_hidden: VerifierConfig::paper_scale(FusionMode::Both).hidden,
            ae_steps: ae_train.steps,
            ae_batch: ae_train.batch_size,
            ae_lr: ae_train.adam.learning_rate,
            ae_checkpoint_every: ae_train.checkpoint_every,
            verifier_steps: ver.steps,
            verifier_batch: ver.batch_size,
            verifier_lr: ver.adam.learning_rate,
            ..Self::toy()
        }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Toy => Self::toy(),
            Preset::PaperScale => Self::paper_scale(),
        }
    }

    /// Model and training keys in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[usize]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
        let blocks = self
            .perceptual_blocks
            .iter()
            .map(|b| format!("{}:{}:{}:{}", b.channels, b.kernel, b.stride, b.pad))
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("preset", self.preset.to_string()),
            ("seed", self.seed.to_string()),
            ("image_size", self.image_size.to_string()),
            ("ae_channels", list(&self.ae_channels)),
            ("bottleneck_dim", self.bottleneck_dim.to_string()),
            ("perceptual_blocks", blocks),
            ("perceptual_provenance", self.perceptual_provenance.to_string()),
            ("verifier_hidden", self.verifier_hidden.to_string()),
            ("mode", self.mode.to_string()),
            ("abs_diff", self.abs_diff.to_string()),
            ("normalize_features", self.normalize_features.to_string()),
            ("vd_sign", VD_SIGN.to_string()),
            ("ae_steps", self.ae_steps.to_string()),
            ("ae_batch", self.ae_batch.to_string()),
            ("ae_lr", self.ae_lr.to_string()),
            ("ae_checkpoint_every", self.ae_checkpoint_every.to_string()),
            ("proxy_images", self.proxy_images.to_string()),
            ("proxy_held_out", self.proxy_held_out.to_string()),
            ("proxy_steps", self.proxy_steps.to_string()),
            ("proxy_batch", self.proxy_batch.to_string()),
            ("proxy_lr", self.proxy_lr.to_string()),
            ("verifier_steps", self.verifier_steps.to_string()),
            ("verifier_batch", self.verifier_batch.to_string()),
            ("verifier_lr", self.verifier_lr.to_string()),
            ("train_identities", self.train_identities.to_string()),
            ("train_images_per_id", self.train_images_per_id.to_string()),
            ("identities", self.identities.to_string()),
            ("images_per_id", self.images_per_id.to_string()),
            ("pairs_per_identity", self.pairs_per_identity.to_string()),
            ("block_size", self.block_size.to_string()),
            ("folds", self.folds.to_string()),
        ]
    }

    /// `key=value` lines for every serialized key.
    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
        }
        let v = value.trim();
        match key.trim() {
            "preset" => self.preset = v.parse()?,
            "seed" => self.seed = num(key, v)?,
            "image_size" => self.image_size = num(key, v)?,
            "ae_channels" => {
                self.ae_channels = v.split(',').map(|c| num(key, c.trim())).collect::<Result<_>>()?;
            }
            "bottleneck_dim" => self.bottleneck_dim = num(key, v)?,
            "perceptual_blocks" => {
                self.perceptual_blocks = v
                    .split(',')
                    .map(|b| {
                        let f: Vec<usize> = b.split(':').map(|x| num(key, x.trim())).collect::<Result<_>>()?;
                        match f[..] {
                            [c, k, s, p] => Ok(ConvSpec::new(c, k, s, p)),
                            _ => Err(Error::Config(format!("{key}: blocks are channels:kernel:stride:pad, got {b:?}"))),
                        }
                    })
                    .collect::<Result<_>>()?;
            }
            "perceptual_provenance" => self.perceptual_provenance = v.parse()?,
            "verifier_hidden" => self.verifier_hidden = num(key, v)?,
            "mode" => self.mode = v.parse()?,
            "abs_diff" => self.abs_diff = num(key, v)?,
            "normalize_features" => self.normalize_features = num(key, v)?,
            "vd_sign" => {
                if v != VD_SIGN {
                    return Err(Error::Incompatible(format!("unsupported vd_sign {v:?}")));
                }
            }
            "ae_steps" => self.ae_steps = num(key, v)?,
            "ae_batch" => self.ae_batch = num(key, v)?,
            "ae_lr" => self.ae_lr = num(key, v)?,
            "ae_checkpoint_every" => self.ae_checkpoint_every = num(key, v)?,
            "proxy_images" => self.proxy_images = num(key, v)?,
            "proxy_held_out" => self.proxy_held_out = num(key, v)?,
            "proxy_steps" => self.proxy_steps = num(key, v)?,
            "proxy_batch" => self.proxy_batch = num(key, v)?,
            "proxy_lr" => self.proxy_lr = num(key, v)?,
            "verifier_steps" => self.verifier_steps = num(key, v)?,
            "verifier_batch" => self.verifier_batch = num(key, v)?,
            "verifier_lr" => self.verifier_lr = num(key, v)?,
            "train_identities" => self.train_identities = num(key, v)?,
            "train_images_per_id" => self.train_images_per_id = num(key, v)?,
            "identities" => self.identities = num(key, v)?,
            "images_per_id" => self.images_per_id = num(key, v)?,
            "pairs_per_identity" => self.pairs_per_identity = num(key, v)?,
            "block_size" => self.block_size = num(key, v)?,
            "folds" => self.folds = num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "import_dir" => self.import_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            "threads" => self.threads = num(key, v)?,
            "deterministic" => self.deterministic = num(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines on top of the preset named by a `preset`
    /// line (toy if absent). Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_preset(text, None)
    }

    /// Like [`RunConfig::parse`], but `preset` (when given) replaces any
    /// `preset` line in the text.
    pub fn parse_with_preset(text: &str, preset: Option<Preset>) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {raw:?}", n + 1)))?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        let from_text = entries.iter().find(|(k, _)| k == "preset").map(|(_, v)| v.parse()).transpose()?;
        let mut cfg = Self::preset(preset.or(from_text).unwrap_or(Preset::Toy));
        for (k, v) in entries.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.autoencoder().flat_dim()?;
        self.perceptual().validate()?;
        for (name, v) in [
            ("ae_batch", self.ae_batch),
            ("proxy_batch", self.proxy_batch),
            ("verifier_batch", self.verifier_batch),
            ("verifier_hidden", self.verifier_hidden),
            ("folds", self.folds),
            ("identities", self.identities),
            ("train_identities", self.train_identities),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.ae_channels.contains(&0) || self.bottleneck_dim == 0 {
            return Err(Error::Config("autoencoder widths must be positive".into()));
        }
        Ok(())
    }

    pub fn autoencoder(&self) -> AutoencoderConfig {
        AutoencoderConfig {
            image_size: self.image_size,
            in_channels: 3,
            channels: self.ae_channels.clone(),
            bottleneck_dim: self.bottleneck_dim,
        }
    }

    pub fn autoencoder_training(&self) -> AutoencoderTrainConfig {
        AutoencoderTrainConfig {
            steps: self.ae_steps,
            batch_size: self.ae_batch,
            adam: AdamConfig::with_learning_rate(self.ae_lr),
            seed: crate::synth::derive_seed(self.seed, 13),
            checkpoint_every: self.ae_checkpoint_every,
        }
    }

    pub fn perceptual(&self) -> PerceptualConfig {
        PerceptualConfig {
            image_size: self.image_size,
            in_channels: 3,
            blocks: self.perceptual_blocks.clone(),
        }
    }

    pub fn proxy_training(&self) -> ProxyTrainConfig {
        ProxyTrainConfig {
            steps: self.proxy_steps,
            batch_size: self.proxy_batch,
            adam: AdamConfig::with_learning_rate(self.proxy_lr),
            seed: crate::synth::derive_seed(self.seed, 21),
        }
    }

    pub fn verifier(&self) -> VerifierConfig {
        VerifierConfig {
            mode: self.mode,
            hidden: self.verifier_hidden,
            abs_diff: self.abs_diff,
        }
    }

    pub fn verifier_training(&self) -> VerifierTrainConfig {
        VerifierTrainConfig {
            steps: self.verifier_steps,
            batch_size: self.verifier_batch,
            adam: AdamConfig::with_learning_rate(self.verifier_lr),
            seed: self.seed,
        }
    }

    pub fn benchmark(&self) -> PairSetConfig {
        PairSetConfig {
            identities: self.identities,
            images_per_id: self.images_per_id,
            pairs_per_identity: self.pairs_per_identity,
            block_size: self.block_size,
            image_size: self.image_size,
            seed: crate::synth::derive_seed(self.seed, 30),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::toy()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        for cfg in [RunConfig::toy(), RunConfig::paper_scale()] {
            let back = RunConfig::parse(&cfg.to_text()).unwrap();
            assert_eq!(back.to_text(), cfg.to_text());
        }
    }

    #[test]
    fn paper_preset_values() {
        let c = RunConfig::parse("preset=paper-scale\n").unwrap();
        assert_eq!(c.image_size, 224);
        assert_eq!(c.bottleneck_dim, 2048);
        assert_eq!(c.perceptual().feature_dim(), 2048);
        assert_eq!((c.verifier_batch, c.verifier_steps, c.verifier_lr), (600, 80_000, 1e-4));
        c.validate().unwrap();
        let text = c.to_text();
        for line in ["verifier_batch=600", "verifier_steps=80000", "verifier_lr=0.0001", "image_size=224"] {
            assert!(text.lines().any(|l| l == line), "{line}");
        }
    }

    #[test]
    fn comments_and_overrides() {
        let c = RunConfig::parse("# run\nseed = 7  # pinned\n\nmode=vd_only\nabs_diff=true\n").unwrap();
        assert_eq!((c.seed, c.mode, c.abs_diff), (7, FusionMode::VdOnly, true));
    }

    #[test]
    fn bad_input_is_a_config_error() {
        for text in ["bogus=1", "seed", "seed=abc", "perceptual_blocks=3:3", "mode=fancy"] {
            assert!(matches!(RunConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
        assert!(matches!(RunConfig::parse("vd_sign=reversed"), Err(Error::Incompatible(_))));
    }
}
