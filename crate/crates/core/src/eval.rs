//! Identity-disjoint k-fold cross-validation and the fusion-mode ablation.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusiform::FeatureBundle;
use crate::synth::{derive_seed, seeded_rng, LabeledPair};
use crate::verifier::{
    fuse_pairs, train_verifier_on_features, FusionMode, VerifierConfig, VerifierModel, VerifierTrainConfig,
    DECISION_THRESHOLD,
};

/// Allowed relative deviation of a fold's size from the mean fold size.
pub const FOLD_BALANCE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct FoldReport {
    pub fold_index: usize,
    pub correct: usize,
    pub n_pairs: usize,
    pub accuracy: f64,
    pub threshold: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub mode: FusionMode,
    pub mean: f64,
    /// Sample (n − 1) standard deviation; 0 for a single fold.
    pub std: f64,
    pub folds: Vec<FoldReport>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Partitions pair indices into `k` folds such that all pairs touching an
/// identity share a fold. Identities linked through mismatched pairs form
/// components that are placed whole, largest first, into the currently
/// smallest fold. Indices inside a fold keep their input order.
pub fn kfold_split(pairs: &[LabeledPair], k: usize, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be ≥ 1".into()));
    }
    if pairs.is_empty() {
        return Err(Error::Empty("pair list"));
    }
    if k == 1 {
        return Ok(vec![(0..pairs.len()).collect()]);
    }
    let mut index: HashMap<u64, usize> = HashMap::new();
    for p in pairs {
        for id in [p.id_a, p.id_b] {
            let next = index.len();
            index.entry(id).or_insert(next);
        }
    }
    let mut uf = UnionFind((0..index.len()).collect());
    for p in pairs {
        uf.union(index[&p.id_a], index[&p.id_b]);
    }
    let mut components: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, p) in pairs.iter().enumerate() {
        let root = uf.find(index[&p.id_a]);
        components.entry(root).or_default().push(i);
    }
    if components.len() < k {
        return Err(Error::InfeasibleSplit(format!(
            "{} identity-connected groups cannot fill {k} folds",
            components.len()
        )));
    }
    let mut groups: Vec<Vec<usize>> = components.into_values().collect();
    groups.sort_by_key(|g| g[0]);
    groups.shuffle(rng);
    groups.sort_by_key(|g| std::cmp::Reverse(g.len()));

    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for g in groups {
        let target = (0..k).min_by_key(|&f| (folds[f].len(), f)).expect("k ≥ 1");
        folds[target].extend(g);
    }
    let mean = pairs.len() as f64 / k as f64;
    for (i, f) in folds.iter_mut().enumerate() {
        let dev = (f.len() as f64 - mean).abs() / mean;
        if dev > FOLD_BALANCE {
            return Err(Error::InfeasibleSplit(format!(
                "fold {i} would hold {} pairs against a mean of {mean:.1}",
                f.len()
            )));
        }
        f.sort_unstable();
    }
    Ok(folds)
}

/// CRC32 over the fold membership lists.
pub fn fold_hash(folds: &[Vec<usize>]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    for f in folds {
        h.update(&(f.len() as u64).to_le_bytes());
        for &i in f {
            h.update(&(i as u64).to_le_bytes());
        }
    }
    h.finalize()
}

/// Accuracy of a trained verifier on the given pairs at the fixed threshold.
pub fn score_fold(
    model: &VerifierModel,
    test: &[LabeledPair],
    bundles: &[FeatureBundle],
    fold_index: usize,
) -> Result<FoldReport> {
    let (x, labels) = fuse_pairs(test, bundles, model.config.mode, model.config.abs_diff)?;
    let scores = model.predict_rows(&x)?;
    let correct = scores
        .iter()
        .zip(&labels)
        .filter(|&(&s, &y)| (s >= DECISION_THRESHOLD) == (y >= 0.5))
        .count();
    Ok(FoldReport {
        fold_index,
        correct,
        n_pairs: test.len(),
        accuracy: correct as f64 / test.len() as f64,
        threshold: DECISION_THRESHOLD,
    })
}

/// Trains on `train`, scores `test`.
pub fn evaluate_fold(
    train: &[LabeledPair],
    test: &[LabeledPair],
    bundles: &[FeatureBundle],
    fold_index: usize,
    config: &VerifierConfig,
    hyper: &VerifierTrainConfig,
) -> Result<FoldReport> {
    if test.is_empty() {
        return Err(Error::Empty("test fold"));
    }
    let key = |p: &LabeledPair| (p.image_a, p.image_b);
    let train_keys: std::collections::HashSet<_> = train.iter().map(key).collect();
    if test.iter().any(|p| train_keys.contains(&key(p))) {
        return Err(Error::InvalidArgument("train and test folds share a pair".into()));
    }
    let (model, _) = train_verifier_on_features(train, bundles, config, hyper)?;
    score_fold(&model, test, bundles, fold_index)
}

/// Mean and sample standard deviation of fold accuracies.
pub fn summarize(mode: FusionMode, reports: &[FoldReport]) -> Result<EvalSummary> {
    if reports.is_empty() {
        return Err(Error::Empty("fold reports"));
    }
    let n = reports.len() as f64;
    let mean = reports.iter().map(|r| r.accuracy).sum::<f64>() / n;
    let std = if reports.len() < 2 {
        0.0
    } else {
        (reports.iter().map(|r| (r.accuracy - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(EvalSummary {
        mode,
        mean,
        std,
        folds: reports.to_vec(),
    })
}

#[derive(Clone, Debug)]
pub struct AblationConfig {
    pub modes: Vec<FusionMode>,
    pub k: usize,
    pub seed: u64,
    pub hidden: usize,
    pub abs_diff: bool,
    pub train: VerifierTrainConfig,
    /// Evaluate folds one after another instead of on the rayon pool.
    pub sequential: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            modes: FusionMode::ALL.to_vec(),
            k: 10,
            seed: 0,
            hidden: 128,
            abs_diff: false,
            train: VerifierTrainConfig::toy(),
            sequential: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AblationResult {
    pub summaries: Vec<EvalSummary>,
    /// Hash of the fold assignment each mode was evaluated on.
    pub fold_hashes: Vec<(FusionMode, u32)>,
    pub folds: Vec<Vec<usize>>,
}

impl AblationResult {
    pub fn summary(&self, mode: FusionMode) -> Option<&EvalSummary> {
        self.summaries.iter().find(|s| s.mode == mode)
    }
}

/// Runs every mode over the same identity-disjoint folds. Fold `i` trains
/// its verifier with the same seed in every mode.
pub fn run_ablation(pairs: &[LabeledPair], bundles: &[FeatureBundle], config: &AblationConfig) -> Result<AblationResult> {
    let folds = kfold_split(pairs, config.k, &mut seeded_rng(config.seed, 0xF0))?;
    let jobs: Vec<(FusionMode, usize)> = config
        .modes
        .iter()
        .flat_map(|&m| (0..folds.len()).map(move |f| (m, f)))
        .collect();
    let run = |&(mode, f): &(FusionMode, usize)| -> Result<(FusionMode, u32, FoldReport)> {
        let hash = fold_hash(&folds);
        let test: Vec<LabeledPair> = folds[f].iter().map(|&i| pairs[i]).collect();
        let train: Vec<LabeledPair> = if folds.len() == 1 {
            test.clone()
        } else {
            folds
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != f)
                .flat_map(|(_, fold)| fold.iter().map(|&i| pairs[i]))
                .collect()
        };
        let vconf = VerifierConfig {
            mode,
            hidden: config.hidden,
            abs_diff: config.abs_diff,
        };
        let hyper = VerifierTrainConfig {
            seed: derive_seed(config.seed, f as u64),
            ..config.train.clone()
        };
        let report = evaluate_fold(&train, &test, bundles, f, &vconf, &hyper)?;
        log::info!("{mode} fold {f}: accuracy {:.4}", report.accuracy);
        Ok((mode, hash, report))
    };
    let results: Vec<(FusionMode, u32, FoldReport)> = if config.sequential {
        jobs.iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    };

    let mut summaries = Vec::new();
    let mut fold_hashes = Vec::new();
    for &mode in &config.modes {
        let mine: Vec<&(FusionMode, u32, FoldReport)> = results.iter().filter(|r| r.0 == mode).collect();
        let reports: Vec<FoldReport> = mine.iter().map(|r| r.2.clone()).collect();
        let hash = mine[0].1;
        if mine.iter().any(|r| r.1 != hash) {
            return Err(Error::InvalidArgument(format!("mode {mode} saw inconsistent fold assignments")));
        }
        fold_hashes.push((mode, hash));
        summaries.push(summarize(mode, &reports)?);
    }
    Ok(AblationResult {
        summaries,
        fold_hashes,
        folds,
    })
}

/// `mode,fold,accuracy,n_pairs` rows.
pub fn write_ablation_csv(out: &mut impl Write, summaries: &[EvalSummary]) -> std::io::Result<()> {
    writeln!(out, "mode,fold,accuracy,n_pairs")?;
    for s in summaries {
        for r in &s.folds {
            writeln!(out, "{},{},{},{}", s.mode, r.fold_index, r.accuracy, r.n_pairs)?;
        }
    }
    Ok(())
}

/// `mode,mean,std` rows.
pub fn write_summary_csv(out: &mut impl Write, summaries: &[EvalSummary]) -> std::io::Result<()> {
    writeln!(out, "mode,mean,std")?;
    for s in summaries {
        writeln!(out, "{},{},{}", s.mode, s.mean, s.std)?;
    }
    Ok(())
}
