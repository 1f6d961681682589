use std::collections::{HashMap, HashSet};

use fusiform::checkpoint::Checkpoint;
use fusiform::config::RunConfig;
use fusiform::eval::{fold_hash, kfold_split, summarize, FoldReport};
use fusiform::fusiform::FeatureBundle;
use fusiform::synth::{build_pair_set, render, seeded_rng, IdentitySampler, Nuisance, PairSetConfig};
use fusiform::verifier::{fuse, FusionMode, VerifierConfig, VerifierModel};
use fusiform::{Error, Tensor};
use proptest::prelude::*;

fn bundle(vals: &[f32], vc: usize) -> FeatureBundle {
    FeatureBundle {
        v_c: vals[..vc].to_vec(),
        v_d: vals[vc..].to_vec(),
        perceived: vals[vc..].iter().map(|v| v * 2.0).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn folds_partition_identity_disjoint_and_balanced(identities in 40usize..90, seed in any::<u64>(), k in 2usize..8) {
        let set = build_pair_set(&PairSetConfig {
            identities,
            images_per_id: 4,
            pairs_per_identity: 2,
            block_size: 4,
            image_size: 16,
            seed,
        }).unwrap();
        let mut rng = seeded_rng(seed, 1);
        match kfold_split(&set.pairs, k, &mut rng) {
            Ok(folds) => {
                let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..set.pairs.len()).collect::<Vec<_>>());
                let mut owner: HashMap<u64, usize> = HashMap::new();
                for (f, fold) in folds.iter().enumerate() {
                    for &i in fold {
                        for id in [set.pairs[i].id_a, set.pairs[i].id_b] {
                            prop_assert_eq!(*owner.entry(id).or_insert(f), f);
                        }
                    }
                }
                let mean = set.pairs.len() as f64 / k as f64;
                for fold in &folds {
                    prop_assert!((fold.len() as f64 - mean).abs() <= 0.2 * mean + 1e-9);
                }
                let again = kfold_split(&set.pairs, k, &mut seeded_rng(seed, 1)).unwrap();
                prop_assert_eq!(fold_hash(&again), fold_hash(&folds));
            }
            Err(e) => prop_assert!(matches!(e, Error::InfeasibleSplit(_)), "{e}"),
        }
    }

    #[test]
    fn summary_recomputable(accs in prop::collection::vec(0.0f64..=1.0, 1..12)) {
        let reports: Vec<FoldReport> = accs.iter().enumerate().map(|(i, &a)| FoldReport {
            fold_index: i,
            correct: 0,
            n_pairs: 0,
            accuracy: a,
            threshold: 0.5,
        }).collect();
        let s = summarize(FusionMode::Both, &reports).unwrap();
        let lo = accs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s.mean >= lo - 1e-12 && s.mean <= hi + 1e-12);
        let n = accs.len() as f64;
        let mean = accs.iter().sum::<f64>() / n;
        let std = if accs.len() > 1 {
            (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        prop_assert!((s.mean - mean).abs() < 1e-12);
        prop_assert!((s.std - std).abs() < 1e-12);
    }

    #[test]
    fn fusion_swap_symmetry(a in prop::collection::vec(-5.0f32..5.0, 7), b in prop::collection::vec(-5.0f32..5.0, 7)) {
        let (x, y) = (bundle(&a, 3), bundle(&b, 3));
        for mode in FusionMode::ALL {
            let ab = fuse(&x, &y, mode, false).unwrap();
            let ba = fuse(&y, &x, mode, false).unwrap();
            prop_assert_eq!(ab.len(), mode.input_width(3, 4));
            // Blocks alternate [difference, product] per component.
            let widths: Vec<usize> = match mode {
                FusionMode::Both => vec![3, 4],
                FusionMode::VcOnly => vec![3],
                FusionMode::VdOnly | FusionMode::PerceptualRaw => vec![4],
            };
            let mut at = 0;
            for w in widths {
                for i in 0..w {
                    prop_assert_eq!(ab[at + i], -ba[at + i]);
                    prop_assert_eq!(ab[at + w + i], ba[at + w + i]);
                }
                at += 2 * w;
            }
            let abs = fuse(&x, &y, mode, true).unwrap();
            prop_assert_eq!(abs, fuse(&y, &x, mode, true).unwrap());
        }
    }

    #[test]
    fn predictions_stay_in_open_unit_interval(seed in any::<u64>(), scale in 0.0f32..1e4, x in prop::collection::vec(-1.0f32..1.0, 10)) {
        let mut model = VerifierModel::<f32>::new(VerifierConfig { mode: FusionMode::VcOnly, hidden: 8, abs_diff: false }, 10, seed).unwrap();
        let fused: Vec<f32> = x.iter().map(|v| v * scale).collect();
        let p = model.predict(&fused).unwrap();
        prop_assert!(p > 0.0 && p < 1.0, "{p}");
        for q in model.params.iter_mut() {
            q.value = q.value.map(|v| v * 1e3);
        }
        let p = model.predict(&fused).unwrap();
        prop_assert!(p > 0.0 && p < 1.0, "{p}");
    }

    #[test]
    fn checkpoint_round_trip_and_any_flip_detected(
        shapes in prop::collection::vec(prop::collection::vec(1usize..5, 0..4), 1..5),
        seed in any::<u64>(),
        flip in any::<prop::sample::Index>(),
        bit in 0u8..8,
    ) {
        let mut c = Checkpoint::new(format!("seed={seed}\n"));
        for (i, shape) in shapes.iter().enumerate() {
            let mut r = seeded_rng(seed, i as u64);
            c.push(format!("t{i}"), Tensor::from_fn(shape.clone(), |_| rand::Rng::gen_range(&mut r, -1e6f32..1e6)));
        }
        let bytes = c.to_bytes().unwrap();
        prop_assert_eq!(&Checkpoint::from_bytes(&bytes).unwrap(), &c);
        let mut bad = bytes.clone();
        bad[flip.index(bytes.len())] ^= 1 << bit;
        prop_assert!(Checkpoint::from_bytes(&bad).is_err());
    }

    #[test]
    fn config_text_round_trip(seed in any::<u64>(), dim in 1usize..4096, lr in 1e-6f64..1.0, steps in 1usize..200_000, abs in any::<bool>()) {
        let mut cfg = RunConfig::toy();
        cfg.seed = seed;
        cfg.bottleneck_dim = dim;
        cfg.ae_lr = lr;
        cfg.verifier_steps = steps;
        cfg.abs_diff = abs;
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back.to_text(), cfg.to_text());
        prop_assert_eq!(back.ae_lr.to_bits(), lr.to_bits());
    }

    #[test]
    fn rendered_faces_in_unit_range(seed in any::<u64>(), size in 16usize..40) {
        let mut sampler = IdentitySampler::new(seed);
        let spec = sampler.sample_identity();
        prop_assert!(spec.in_range());
        prop_assert_eq!(&sampler.spec(spec.id), &spec);
        let nuisance = Nuisance::sample(&mut seeded_rng(seed, 9));
        prop_assert!(nuisance.in_range());
        let img = render(&spec, &nuisance, size).unwrap();
        prop_assert_eq!(img.shape(), &[3, size, size]);
        prop_assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn pair_sets_balanced_and_unique(identities in 2usize..30, per in 2usize..6, seed in any::<u64>()) {
        let set = build_pair_set(&PairSetConfig {
            identities,
            images_per_id: per,
            pairs_per_identity: 1,
            block_size: 5,
            image_size: 16,
            seed,
        }).unwrap();
        prop_assert_eq!(set.match_fraction(), 0.5);
        let mut seen = HashSet::new();
        for p in &set.pairs {
            prop_assert_eq!(p.label == 1, p.id_a == p.id_b);
            prop_assert!(seen.insert((p.image_a.min(p.image_b), p.image_a.max(p.image_b))));
        }
    }
}
