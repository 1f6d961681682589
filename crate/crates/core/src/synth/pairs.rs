use std::collections::HashSet;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{derive_seed, render, seeded_rng, IdentitySampler, IdentitySpec, Nuisance};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct FaceImage {
    pub identity: u64,
    pub nuisance: Nuisance,
    /// 3×size×size in [0, 1].
    pub image: Tensor,
}

/// A verification pair referring into [`PairSet::images`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LabeledPair {
    pub image_a: usize,
    pub image_b: usize,
    pub id_a: u64,
    pub id_b: u64,
    /// 1 for the same identity, 0 otherwise.
    pub label: u8,
}

impl LabeledPair {
    pub fn is_match(&self) -> bool {
        self.label == 1
    }
}

#[derive(Clone, Debug)]
pub struct PairSet {
    pub identities: Vec<IdentitySpec>,
    pub images: Vec<FaceImage>,
    pub pairs: Vec<LabeledPair>,
}

impl PairSet {
    pub fn image_a(&self, pair: &LabeledPair) -> &Tensor {
        &self.images[pair.image_a].image
    }

    pub fn image_b(&self, pair: &LabeledPair) -> &Tensor {
        &self.images[pair.image_b].image
    }

    pub fn match_fraction(&self) -> f64 {
        self.pairs.iter().filter(|p| p.is_match()).count() as f64 / self.pairs.len().max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairSetConfig {
    pub identities: usize,
    pub images_per_id: usize,
    /// Matched pairs per identity; the same number of mismatched pairs is
    /// drawn with that identity on the A side.
    pub pairs_per_identity: usize,
    /// Mismatched partners are drawn from within consecutive blocks of this
    /// many identities, which keeps identity-disjoint folds feasible.
    pub block_size: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for PairSetConfig {
    fn default() -> Self {
        PairSetConfig {
            identities: 200,
            images_per_id: 10,
            pairs_per_identity: 10,
            block_size: 5,
            image_size: 32,
            seed: 0,
        }
    }
}

/// Renders `images_per_id` images for each of `identities` sequential
/// identities, resampling nuisance per image.
pub fn generate_faces(
    sampler: &mut IdentitySampler,
    identities: usize,
    images_per_id: usize,
    size: usize,
    seed: u64,
) -> Result<(Vec<IdentitySpec>, Vec<FaceImage>)> {
    let mut specs = Vec::with_capacity(identities);
    let mut images = Vec::with_capacity(identities * images_per_id);
    let nuisance_base = derive_seed(seed, 1);
    for _ in 0..identities {
        let spec = sampler.sample_identity();
        for _ in 0..images_per_id {
            let mut rng = seeded_rng(nuisance_base, images.len() as u64);
            let nuisance = Nuisance::sample(&mut rng);
            let image = render(&spec, &nuisance, size)?;
            images.push(FaceImage {
                identity: spec.id,
                nuisance,
                image,
            });
        }
        specs.push(spec);
    }
    Ok((specs, images))
}

fn blocks(identities: usize, block_size: usize) -> Vec<Range<usize>> {
    let size = block_size.clamp(2, identities);
    let mut out: Vec<Range<usize>> = (0..identities)
        .step_by(size)
        .map(|s| s..(s + size).min(identities))
        .collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() < 2) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().end = last.end;
    }
    out
}

/// Builds a balanced verification set: half matched, half mismatched pairs,
/// with no image pair repeated.
pub fn build_pair_set(config: &PairSetConfig) -> Result<PairSet> {
    if config.identities < 2 {
        return Err(Error::InsufficientIdentities {
            need: 2,
            got: config.identities,
        });
    }
    if config.images_per_id < 2 {
        return Err(Error::InvalidArgument(
            "matched pairs need at least 2 images per identity".into(),
        ));
    }
    let combos = config.images_per_id * (config.images_per_id - 1) / 2;
    if config.pairs_per_identity == 0 || config.pairs_per_identity > combos {
        return Err(Error::InvalidArgument(format!(
            "pairs_per_identity must be in 1..={combos} for {} images per identity",
            config.images_per_id
        )));
    }

    let mut sampler = IdentitySampler::new(derive_seed(config.seed, 0));
    let (identities, images) = generate_faces(
        &mut sampler,
        config.identities,
        config.images_per_id,
        config.image_size,
        config.seed,
    )?;
    let per = config.images_per_id;
    let groups: Vec<IdentityGroup> = identities
        .iter()
        .enumerate()
        .map(|(i, spec)| IdentityGroup {
            identity: spec.id,
            images: i * per..(i + 1) * per,
        })
        .collect();
    let pairs = draw_pairs(&groups, config.pairs_per_identity, config.block_size, config.seed)?;

    Ok(PairSet {
        identities,
        images,
        pairs,
    })
}

/// Contiguous image indices belonging to one identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdentityGroup {
    pub identity: u64,
    pub images: Range<usize>,
}

/// Draws up to `pairs_per_identity` matched pairs per identity and as many
/// mismatched pairs with that identity on the A side, partners taken from the
/// same block of `block_size` consecutive groups. No image pair repeats.
pub fn draw_pairs(
    groups: &[IdentityGroup],
    pairs_per_identity: usize,
    block_size: usize,
    seed: u64,
) -> Result<Vec<LabeledPair>> {
    if groups.len() < 2 {
        return Err(Error::InsufficientIdentities {
            need: 2,
            got: groups.len(),
        });
    }
    let mut rng = seeded_rng(seed, 2);
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    let mut quota = vec![0usize; groups.len()];

    for (idx, group) in groups.iter().enumerate() {
        let n = group.images.len();
        let mut combos: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        combos.shuffle(&mut rng);
        for &(i, j) in combos.iter().take(pairs_per_identity) {
            let (a, b) = (group.images.start + i, group.images.start + j);
            seen.insert((a.min(b), a.max(b)));
            pairs.push(LabeledPair {
                image_a: a,
                image_b: b,
                id_a: group.identity,
                id_b: group.identity,
                label: 1,
            });
            quota[idx] += 1;
        }
    }

    for block in blocks(groups.len(), block_size) {
        for idx in block.clone() {
            let mut made = 0;
            let mut attempts = 0;
            while made < quota[idx] {
                attempts += 1;
                if attempts > 1000 * pairs_per_identity {
                    return Err(Error::InvalidArgument(format!(
                        "could not draw {} distinct mismatched pairs inside identity block {block:?}",
                        quota[idx]
                    )));
                }
                let other = rng.gen_range(block.clone());
                if other == idx {
                    continue;
                }
                let (ga, gb) = (&groups[idx], &groups[other]);
                let a = ga.images.start + rng.gen_range(0..ga.images.len());
                let b = gb.images.start + rng.gen_range(0..gb.images.len());
                if !seen.insert((a.min(b), a.max(b))) {
                    continue;
                }
                pairs.push(LabeledPair {
                    image_a: a,
                    image_b: b,
                    id_a: ga.identity,
                    id_b: gb.identity,
                    label: 0,
                });
                made += 1;
            }
        }
    }
    pairs.shuffle(&mut rng);
    Ok(pairs)
}
