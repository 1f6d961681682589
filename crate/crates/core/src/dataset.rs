//! On-disk datasets and feature exports.
//!
//! A dataset directory holds image shards in the checkpoint container
//! (`shard_00000.fsfn`, ...), an `index.tsv` manifest and, for verification
//! sets, `pairs.tsv`. A feature export is `features.bin` (one record per
//! image) plus `features.tsv` mapping each image to its record offset.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use crate::checkpoint::Checkpoint;
use crate::config::VD_SIGN;
use crate::error::{Error, Result};
use crate::fusiform::FeatureBundle;
use crate::synth::{draw_pairs, preprocess, FaceImage, IdentityGroup, LabeledPair, Nuisance, PairSet};
use crate::tensor::Tensor;

pub const SHARD_SIZE: usize = 500;
pub const INDEX_FILE: &str = "index.tsv";
pub const PAIRS_FILE: &str = "pairs.tsv";
pub const FEATURES_FILE: &str = "features.bin";
pub const FEATURES_INDEX: &str = "features.tsv";

const INDEX_HEADER: &str = "index\tid\tfile\ttensor\tshift_x\tshift_y\tscale\tbrightness\tillumination_angle\tbackground_r\tbackground_g\tbackground_b\tsource";
const PAIRS_HEADER: &str = "image_a\timage_b\tid_a\tid_b\tlabel";
const FEATURES_HEADER: &str = "index\tid\trecord\toffset";

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub identity: u64,
    /// Present for synthetic images.
    pub nuisance: Option<Nuisance>,
    /// Original path for imported images.
    pub source: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub images: Vec<Tensor>,
    pub pairs: Vec<LabeledPair>,
}

impl Dataset {
    pub fn from_faces(faces: Vec<FaceImage>) -> Self {
        let mut d = Dataset::default();
        for f in faces {
            d.records.push(Record {
                identity: f.identity,
                nuisance: Some(f.nuisance),
                source: None,
            });
            d.images.push(f.image);
        }
        d
    }

    pub fn from_pair_set(set: PairSet) -> Self {
        let pairs = set.pairs;
        Dataset {
            pairs,
            ..Self::from_faces(set.images)
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn identity_count(&self) -> usize {
        let mut ids: Vec<u64> = self.records.iter().map(|r| r.identity).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut index = format!("{INDEX_HEADER}\n");
        for (s, chunk) in self.images.chunks(SHARD_SIZE).enumerate() {
            let file = format!("shard_{s:05}.fsfn");
            let mut c = Checkpoint::new(format!("kind=images\nshard={s}\n"));
            for (k, img) in chunk.iter().enumerate() {
                let i = s * SHARD_SIZE + k;
                let name = format!("img{i}");
                let r = &self.records[i];
                let nuisance = match &r.nuisance {
                    Some(n) => format!(
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                        n.shift[0],
                        n.shift[1],
                        n.scale,
                        n.brightness,
                        n.illumination_angle,
                        n.background[0],
                        n.background[1],
                        n.background[2]
                    ),
                    None => "\t\t\t\t\t\t\t".to_string(),
                };
                index.push_str(&format!(
                    "{i}\t{}\t{file}\t{name}\t{nuisance}\t{}\n",
                    r.identity,
                    r.source.as_deref().unwrap_or("")
                ));
                c.push(name, img.clone());
            }
            c.save(&dir.join(&file))?;
        }
        write(&dir.join(INDEX_FILE), &index)?;
        if !self.pairs.is_empty() {
            let mut out = format!("{PAIRS_HEADER}\n");
            for p in &self.pairs {
                out.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", p.image_a, p.image_b, p.id_a, p.id_b, p.label));
            }
            write(&dir.join(PAIRS_FILE), &out)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let index_path = dir.join(INDEX_FILE);
        let text = read(&index_path)?;
        let mut shards: HashMap<String, Checkpoint> = HashMap::new();
        let mut d = Dataset::default();
        for (line_no, line) in rows(&text, INDEX_HEADER, &index_path)? {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = |what: &str| Error::Format(format!("{}:{line_no}: {what}", index_path.display()));
            if f.len() != 13 {
                return Err(bad("expected 13 columns"));
            }
            if f[0].parse::<usize>().ok() != Some(d.images.len()) {
                return Err(bad("index column out of sequence"));
            }
            let identity = f[1].parse().map_err(|_| bad("bad id"))?;
            if !shards.contains_key(f[2]) {
                if f[2].contains(['/', '\\']) {
                    return Err(bad("shard file must be a plain file name"));
                }
                shards.insert(f[2].to_string(), Checkpoint::load(&dir.join(f[2]))?);
            }
            let image = shards[f[2]]
                .tensor(f[3])
                .ok_or_else(|| bad(&format!("tensor {} missing from {}", f[3], f[2])))?
                .clone();
            let nuisance = if f[4].is_empty() {
                None
            } else {
                let v: Vec<f32> = f[4..12]
                    .iter()
                    .map(|s| s.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("bad nuisance field"))?;
                Some(Nuisance {
                    shift: [v[0], v[1]],
                    scale: v[2],
                    brightness: v[3],
                    illumination_angle: v[4],
                    background: [v[5], v[6], v[7]],
                })
            };
            let source = (!f[12].is_empty()).then(|| f[12].to_string());
            d.records.push(Record {
                identity,
                nuisance,
                source,
            });
            d.images.push(image);
        }
        let pairs_path = dir.join(PAIRS_FILE);
        if pairs_path.exists() {
            d.pairs = read_pairs(&pairs_path, &d.records)?;
        }
        Ok(d)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn rows<'a>(text: &'a str, header: &str, path: &Path) -> Result<impl Iterator<Item = (usize, &'a str)>> {
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(Error::Format(format!("{}: unexpected header", path.display())));
    }
    Ok(lines.enumerate().map(|(i, l)| (i + 2, l)).filter(|(_, l)| !l.is_empty()))
}

fn read_pairs(path: &Path, records: &[Record]) -> Result<Vec<LabeledPair>> {
    let text = read(path)?;
    let mut pairs = Vec::new();
    for (line_no, line) in rows(&text, PAIRS_HEADER, path)? {
        let bad = |what: &str| Error::Format(format!("{}:{line_no}: {what}", path.display()));
        let f: Vec<u64> = line
            .split('\t')
            .map(|s| s.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("non-numeric field"))?;
        let [a, b, id_a, id_b, label] = f[..] else {
            return Err(bad("expected 5 columns"));
        };
        let (a, b) = (a as usize, b as usize);
        let known = |i: usize, id: u64| records.get(i).is_some_and(|r| r.identity == id);
        if !known(a, id_a) || !known(b, id_b) || label > 1 || (label == 1) != (id_a == id_b) {
            return Err(bad("pair disagrees with the image index"));
        }
        pairs.push(LabeledPair {
            image_a: a,
            image_b: b,
            id_a,
            id_b,
            label: label as u8,
        });
    }
    Ok(pairs)
}

/// Reads `<root>/<identity>/<image>` files (PNG), preprocesses each to
/// `size`×`size` and draws a balanced pair set. Identities get sequential ids
/// in sorted name order.
pub fn import_directory(
    root: &Path,
    size: usize,
    pairs_per_identity: usize,
    block_size: usize,
    seed: u64,
) -> Result<Dataset> {
    let mut by_identity: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let mut files = Vec::new();
        for f in fs::read_dir(&path).map_err(|e| Error::io(&path, e))? {
            let f = f.map_err(|e| Error::io(&path, e))?.path();
            let is_png = f.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
            if f.is_file() && is_png {
                files.push(f);
            }
        }
        files.sort();
        if !files.is_empty() {
            by_identity.insert(entry.file_name().to_string_lossy().into_owned(), files);
        }
    }
    let mut d = Dataset::default();
    let mut groups = Vec::new();
    for (id, (name, files)) in by_identity.into_iter().enumerate() {
        let start = d.images.len();
        for f in files {
            d.images.push(preprocess(&decode_png(&f)?, size)?);
            let file = f.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            d.records.push(Record {
                identity: id as u64,
                nuisance: None,
                source: Some(format!("{name}/{file}")),
            });
        }
        groups.push(IdentityGroup {
            identity: id as u64,
            images: start..d.images.len(),
        });
    }
    d.pairs = draw_pairs(&groups, pairs_per_identity, block_size, seed)?;
    Ok(d)
}

/// Decodes a PNG into a 3×H×W tensor in [0, 1]; alpha is dropped and grey
/// images are replicated across channels.
pub fn decode_png(path: &Path) -> Result<Tensor> {
    let decode_err = |message: String| Error::Decode {
        path: path.to_path_buf(),
        message,
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| decode_err(e.to_string()))?
        .to_rgb32f();
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(decode_err("empty image".into()));
    }
    let raw = img.into_raw();
    Tensor::new([3, h, w], (0..3 * h * w).map(|i| raw[(i % (h * w)) * 3 + i / (h * w)]).collect())
}

/// Writes `features.bin` and `features.tsv` into `dir`. `meta` is extra
/// `key=value` text stored in the container's config blob.
pub fn write_features(dir: &Path, meta: &str, identities: &[u64], bundles: &[FeatureBundle]) -> Result<()> {
    if identities.len() != bundles.len() {
        return Err(Error::InvalidArgument("one identity per feature record required".into()));
    }
    let first = bundles.first().ok_or(Error::Empty("feature export"))?;
    let dims = (first.v_c.len(), first.v_d.len(), first.perceived.len());
    let mut c = Checkpoint::new(format!(
        "kind=features\nvc_dim={}\nvd_dim={}\nperceived_dim={}\nvd_sign={VD_SIGN}\n{meta}",
        dims.0, dims.1, dims.2
    ));
    for (i, b) in bundles.iter().enumerate() {
        if (b.v_c.len(), b.v_d.len(), b.perceived.len()) != dims {
            return Err(Error::InvalidArgument(format!("feature record {i} has different dimensions")));
        }
        let data: Vec<f32> = b.v_c.iter().chain(&b.v_d).chain(&b.perceived).copied().collect();
        c.push(format!("f{i}"), Tensor::new([data.len()], data)?);
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    c.save(&dir.join(FEATURES_FILE))?;
    let mut tsv = format!("{FEATURES_HEADER}\n");
    for (i, (id, off)) in identities.iter().zip(c.data_offsets()).enumerate() {
        tsv.push_str(&format!("{i}\t{id}\tf{i}\t{off}\n"));
    }
    write(&dir.join(FEATURES_INDEX), &tsv)
}

/// Reads a feature export back; returns the container and the bundles in
/// image order.
pub fn read_features(dir: &Path) -> Result<(Checkpoint, Vec<FeatureBundle>)> {
    let mut c = Checkpoint::load(&dir.join(FEATURES_FILE))?;
    if c.get("kind") != Some("features") {
        return Err(Error::Incompatible(format!("{} is not a feature export", dir.join(FEATURES_FILE).display())));
    }
    match c.get("vd_sign") {
        Some(VD_SIGN) => {}
        other => return Err(Error::Incompatible(format!("feature export has v_d sign {other:?}, expected {VD_SIGN}"))),
    }
    let dim = |k: &str| -> Result<usize> {
        c.get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format(format!("feature export lacks {k}")))
    };
    let (vc, vd, pd) = (dim("vc_dim")?, dim("vd_dim")?, dim("perceived_dim")?);
    let tensors = std::mem::take(&mut c.tensors);
    let mut bundles = Vec::with_capacity(tensors.len());
    for (i, (name, t)) in tensors.into_iter().enumerate() {
        if name != format!("f{i}") || t.shape() != [vc + vd + pd] {
            return Err(Error::Format(format!("feature record {i} ({name}) is malformed")));
        }
        let data = t.into_data();
        bundles.push(FeatureBundle {
            v_c: data[..vc].to_vec(),
            v_d: data[vc..vc + vd].to_vec(),
            perceived: data[vc + vd..].to_vec(),
        });
    }
    Ok((c, bundles))
}
