//! Binary checkpoint container.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "FSFN" | version | config_len | config bytes (UTF-8 key=value lines)
//!        | tensor_count | { name_len | name | rank | dims.. | f32 data.. }*
//!        | crc32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::autoencoder::AutoencoderModel;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::perceptual::{PerceptualModel, Provenance};
use crate::tensor::Tensor;
use crate::verifier::VerifierModel;

pub const MAGIC: &[u8; 4] = b"FSFN";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// `key=value` lines.
    pub config: String,
    pub tensors: Vec<(String, Tensor)>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("value {v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

impl Checkpoint {
    pub fn new(config: impl Into<String>) -> Self {
        Checkpoint {
            config: config.into(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn from_store(config: impl Into<String>, store: &ParamStore) -> Self {
        let mut c = Self::new(config);
        for (_, p) in store.iter() {
            c.push(p.name.clone(), p.value.clone());
        }
        c
    }

    /// Parameter store holding every tensor, in file order.
    pub fn to_store(&self) -> Result<ParamStore> {
        let mut s = ParamStore::new();
        for (name, t) in &self.tensors {
            s.add(name.clone(), t.clone())?;
        }
        Ok(s)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Value of `key` in the config blob.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.config
            .lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .map(|(_, v)| v.trim())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION as usize)?;
        put_u32(&mut out, self.config.len())?;
        out.extend_from_slice(self.config.as_bytes());
        put_u32(&mut out, self.tensors.len())?;
        for (name, t) in &self.tensors {
            put_u32(&mut out, name.len())?;
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.rank())?;
            for &d in t.shape() {
                put_u32(&mut out, d)?;
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let (payload, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(Error::CrcMismatch { stored, computed });
        }
        let mut r = Reader { bytes: payload, pos: 4 };
        let version = r.u32()?;
        if version != VERSION as usize {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let n = r.u32()?;
        let config = String::from_utf8(r.take(n)?.to_vec()).map_err(|_| Error::Format("config is not UTF-8".into()))?;
        let count = r.u32()?;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let n = r.u32()?;
            let name =
                String::from_utf8(r.take(n)?.to_vec()).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let rank = r.u32()?;
            let shape: Vec<usize> = (0..rank).map(|_| r.u32()).collect::<Result<_>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("tensor {name} is too large")))?;
            let raw = r.take(numel.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("tensor {name}: {e}")))?;
            tensors.push((name, t));
        }
        if r.pos != payload.len() {
            return Err(Error::Format(format!("{} trailing bytes", payload.len() - r.pos)));
        }
        Ok(Checkpoint { config, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Byte offset of each tensor's float data within `to_bytes()`.
    pub fn data_offsets(&self) -> Vec<usize> {
        let mut pos = 4 + 4 + 4 + self.config.len() + 4;
        self.tensors
            .iter()
            .map(|(name, t)| {
                pos += 4 + name.len() + 4 + 4 * t.rank();
                let at = pos;
                pos += 4 * t.numel();
                at
            })
            .collect()
    }

    /// One line per tensor: name, shape, element count.
    pub fn listing(&self) -> String {
        let mut s = String::new();
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            s.push_str(&format!("{name}\t[{}]\t{}\n", dims.join(", "), t.numel()));
        }
        s
    }
}

pub const KIND_AUTOENCODER: &str = "autoencoder";
pub const KIND_PERCEPTUAL: &str = "perceptual";
pub const KIND_VERIFIER: &str = "verifier";

fn header(config: &RunConfig, kind: &str, extra: &[(&str, String)]) -> String {
    let mut s = format!("kind={kind}\n");
    for (k, v) in extra {
        s.push_str(&format!("{k}={v}\n"));
    }
    s + &config.to_text()
}

fn expect_kind(c: &Checkpoint, kind: &str) -> Result<()> {
    match c.get("kind") {
        Some(k) if k == kind => Ok(()),
        other => Err(Error::Incompatible(format!("expected a {kind} checkpoint, found {other:?}"))),
    }
}

/// Run configuration stored in a checkpoint.
pub fn stored_config(c: &Checkpoint) -> Result<RunConfig> {
    let body: String = c
        .config
        .lines()
        .filter(|l| {
            let key = l.split('=').next().unwrap_or("").trim();
            !matches!(key, "kind" | "provenance" | "proxy_accuracy" | "input_width")
        })
        .map(|l| format!("{l}\n"))
        .collect();
    RunConfig::parse(&body)
}

fn check_dims<V: PartialEq + std::fmt::Debug>(what: &str, key: &str, stored: V, current: V) -> Result<()> {
    if stored != current {
        return Err(Error::Incompatible(format!(
            "{what} checkpoint has {key} {stored:?} but the configuration asks for {current:?}"
        )));
    }
    Ok(())
}

pub fn save_autoencoder(path: &Path, config: &RunConfig, model: &AutoencoderModel) -> Result<()> {
    Checkpoint::from_store(header(config, KIND_AUTOENCODER, &[]), &model.params).save(path)
}

/// Loads a frozen autoencoder and checks its dimensions against `config`.
pub fn load_autoencoder(path: &Path, config: &RunConfig) -> Result<AutoencoderModel> {
    let c = Checkpoint::load(path)?;
    expect_kind(&c, KIND_AUTOENCODER)?;
    let stored = stored_config(&c)?;
    check_dims("autoencoder", "image_size", stored.image_size, config.image_size)?;
    check_dims("autoencoder", "bottleneck_dim", stored.bottleneck_dim, config.bottleneck_dim)?;
    check_dims("autoencoder", "ae_channels", &stored.ae_channels, &config.ae_channels)?;
    let mut m = AutoencoderModel::from_params(stored.autoencoder(), c.to_store()?)?;
    m.freeze();
    Ok(m)
}

pub fn save_perceptual(path: &Path, config: &RunConfig, model: &PerceptualModel) -> Result<()> {
    let mut extra = vec![("provenance", model.provenance.to_string())];
    if let Some(a) = model.proxy_accuracy {
        extra.push(("proxy_accuracy", a.to_string()));
    }
    Checkpoint::from_store(header(config, KIND_PERCEPTUAL, &extra), &model.params).save(path)
}

pub fn load_perceptual(path: &Path, config: &RunConfig) -> Result<PerceptualModel> {
    let c = Checkpoint::load(path)?;
    expect_kind(&c, KIND_PERCEPTUAL)?;
    let stored = stored_config(&c)?;
    check_dims("perceptual", "image_size", stored.image_size, config.image_size)?;
    check_dims(
        "perceptual",
        "feature_dim",
        stored.perceptual().feature_dim(),
        config.perceptual().feature_dim(),
    )?;
    let provenance: Provenance = c
        .get("provenance")
        .ok_or_else(|| Error::Format("perceptual checkpoint lacks provenance".into()))?
        .parse()?;
    let mut m = PerceptualModel::from_params(stored.perceptual(), c.to_store()?, provenance)?;
    m.proxy_accuracy = c.get("proxy_accuracy").and_then(|v| v.parse().ok());
    Ok(m)
}

pub fn save_verifier(path: &Path, config: &RunConfig, model: &VerifierModel) -> Result<()> {
    let mut cfg = config.clone();
    cfg.mode = model.config.mode;
    cfg.verifier_hidden = model.config.hidden;
    cfg.abs_diff = model.config.abs_diff;
    let extra = [("input_width", model.input_width.to_string())];
    Checkpoint::from_store(header(&cfg, KIND_VERIFIER, &extra), &model.params).save(path)
}

pub fn load_verifier(path: &Path, config: &RunConfig) -> Result<VerifierModel> {
    let c = Checkpoint::load(path)?;
    expect_kind(&c, KIND_VERIFIER)?;
    let stored = stored_config(&c)?;
    check_dims("verifier", "bottleneck_dim", stored.bottleneck_dim, config.bottleneck_dim)?;
    check_dims(
        "verifier",
        "feature_dim",
        stored.perceptual().feature_dim(),
        config.perceptual().feature_dim(),
    )?;
    let width: usize = c
        .get("input_width")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Format("verifier checkpoint lacks input_width".into()))?;
    VerifierModel::from_params(stored.verifier(), width, c.to_store()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new("kind=test\nseed=3\n");
        c.push("a.weight", Tensor::from_fn([2, 3], |i| i as f32 * 0.5 - 1.0));
        c.push("a.bias", Tensor::new([1], vec![f32::MIN_POSITIVE]).unwrap());
        c
    }

    #[test]
    fn bytes_round_trip() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"FSFN");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), VERSION);
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), c);
        for (off, (_, t)) in c.data_offsets().into_iter().zip(&c.tensors) {
            let first = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            assert_eq!(first, t.data()[0]);
        }
        assert_eq!(c.get("seed"), Some("3"));
    }

    #[test]
    fn corruption_detected() {
        let bytes = sample().to_bytes().unwrap();
        for i in [5, 20, bytes.len() - 10, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[i] ^= 0x40;
            assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::CrcMismatch { .. })), "byte {i}");
        }
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::CrcMismatch { .. } | Error::Format(_))));
        assert!(matches!(Checkpoint::from_bytes(b"NOPE00000000"), Err(Error::Format(_))));
    }

    #[test]
    fn listing_names_shapes() {
        let l = sample().listing();
        assert_eq!(l, "a.weight\t[2, 3]\t6\na.bias\t[1]\t1\n");
    }
}
