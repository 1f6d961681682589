//! Acceptance suite: one pass/fail line per criterion.
//!
//! Trains the toy pipeline for three seeds (roughly 15 minutes on one core),
//! so it runs as a plain binary rather than under the test harness.

#![allow(dead_code)]

#[path = "oracles.rs"]
mod oracles;

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fusiform::autoencoder::AutoencoderModel;
use fusiform::bands::laplacian_energy;
use fusiform::checkpoint::{self, Checkpoint};
use fusiform::cli;
use fusiform::config::RunConfig;
use fusiform::error::{Error, Result};
use fusiform::eval::{kfold_split, write_summary_csv};
use fusiform::fusiform::{Extractor, Reconstructor};
use fusiform::perceptual::PerceptualModel;
use fusiform::pipeline::{self, RunOutput};
use fusiform::synth::{derive_seed, generate_faces, preprocess, seeded_rng, IdentitySampler};
use fusiform::verifier::{fuse_pairs, train_verifier, train_verifier_on_features, FusionMode};
use fusiform::Tensor;

const SEEDS: [u64; 3] = [0, 1, 2];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn failed(e: impl std::fmt::Display) -> Outcome {
    outcome(false, format!("error: {e}"))
}

fn progress(msg: &str) {
    eprintln!("[acceptance] {msg}");
}

fn c1_gradients() -> Outcome {
    let t = Instant::now();
    let checks = gradients::check_all();
    let elapsed = t.elapsed();
    let failures: Vec<String> = checks
        .iter()
        .filter(|c| !c.failures.is_empty())
        .map(|c| format!("{} ({})", c.name, c.failures[0]))
        .collect();
    let w64 = checks.iter().map(|c| c.worst64).fold(0.0, f64::max);
    let w32 = checks.iter().map(|c| c.worst32).fold(0.0, f64::max);
    let pass = failures.is_empty() && elapsed < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "{} ops x {} seeds; max rel err f64 {w64:.1e} (< 1e-6), f32 {w32:.1e} (< 1e-3); {:.1}s (< 120s){}",
            checks.len(),
            gradients::SEEDS,
            elapsed.as_secs_f64(),
            if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
        ),
    )
}

fn c2_mse_oracle() -> Outcome {
    let bad = oracles::mse_mismatches();
    outcome(bad == 0, format!("{bad} of 100 evaluations (50 pairs, f32 and f64) differ from the triple loop"))
}

fn c3_adjoint() -> Outcome {
    let r = oracles::adjoint_report(50);
    outcome(
        r.inexact == 0,
        format!(
            "{} of 50 instances inexact; scatter reference err {:.1e}; inner-product err {:.1e}",
            r.inexact, r.scatter_error, r.dot_error
        ),
    )
}

struct SeedRun {
    cfg: RunConfig,
    out: RunOutput,
    elapsed: Duration,
    ablation_elapsed: Duration,
}

fn run_seed(seed: u64) -> Result<SeedRun> {
    let mut cfg = RunConfig::toy();
    cfg.seed = seed;
    let t = Instant::now();
    let out = pipeline::run_all(&cfg)?;
    let elapsed = t.elapsed();
    // Time the ablation alone on the extracted features.
    let t = Instant::now();
    let again = pipeline::ablation(&cfg, &out.benchmark, &out.bundles, &FusionMode::ALL)?;
    let ablation_elapsed = t.elapsed();
    assert_eq!(
        again.summaries, out.ablation.summaries,
        "ablation is not reproducible for seed {seed}"
    );
    Ok(SeedRun {
        cfg,
        out,
        elapsed,
        ablation_elapsed,
    })
}

fn c4_convergence(run: &SeedRun) -> Result<Outcome> {
    let cfg = &run.cfg;
    let train = pipeline::training_faces(cfg)?;
    let initial = AutoencoderModel::new(cfg.autoencoder(), derive_seed(cfg.seed, 12))?;
    let before = initial.evaluate_loss(&train.images)?;
    let after = run.out.autoencoder.evaluate_loss(&train.images)?;
    let steps = run.out.autoencoder_report.loss_history.len();
    let (head, tail) = run.out.autoencoder_report.head_tail_means(20).unwrap_or((f64::NAN, f64::NAN));
    // Time a fresh training run alone.
    let t = Instant::now();
    let (retrained, _) = pipeline::train_autoencoder(cfg, &train.images, |_, _| Ok(()))?;
    let secs = t.elapsed().as_secs_f64();
    let same = retrained.params.checksum() == run.out.autoencoder.params.checksum();
    let ratio = after / before;
    Ok(outcome(
        ratio <= 0.2 && steps <= 2000 && train.len() == 2000 && secs < 600.0 && same,
        format!(
            "{} faces {}px, {steps} steps: dataset loss {before:.4} -> {after:.4} (ratio {ratio:.3} <= 0.2); \
             minibatch {head:.4} -> {tail:.4}; {secs:.0}s (< 600s); retrain identical: {same}",
            train.len(),
            cfg.image_size
        ),
    ))
}

/// Trace of the covariance of per-identity mean feature vectors.
fn cross_identity_variance(features: &Tensor, identities: &[u64]) -> f64 {
    let d = features.shape()[1];
    let mut sums: HashMap<u64, (Vec<f64>, usize)> = HashMap::new();
    for (row, id) in features.data().chunks(d).zip(identities) {
        let e = sums.entry(*id).or_insert_with(|| (vec![0.0; d], 0));
        for (a, &v) in e.0.iter_mut().zip(row) {
            *a += v as f64;
        }
        e.1 += 1;
    }
    let means: Vec<Vec<f64>> = sums.values().map(|(s, n)| s.iter().map(|v| v / *n as f64).collect()).collect();
    let m = means.len() as f64;
    (0..d)
        .map(|j| {
            let mu = means.iter().map(|r| r[j]).sum::<f64>() / m;
            means.iter().map(|r| (r[j] - mu).powi(2)).sum::<f64>() / (m - 1.0)
        })
        .sum()
}

fn c5_deidentification(run: &SeedRun) -> Result<Outcome> {
    let cfg = &run.cfg;
    let mut sampler = IdentitySampler::starting_at(derive_seed(cfg.seed, 40), 3 << 32);
    let (_, faces) = generate_faces(&mut sampler, 100, 5, cfg.image_size, derive_seed(cfg.seed, 41))?;
    let images: Vec<Tensor> = faces.iter().map(|f| f.image.clone()).collect();
    let ids: Vec<u64> = faces.iter().map(|f| f.identity).collect();
    let batch = Tensor::stack(&images.iter().collect::<Vec<_>>())?;
    let (recon, _) = run.out.autoencoder.reconstruct(&batch)?;
    let n = images.len();
    let plane = 3 * cfg.image_size * cfg.image_size;
    let recon_images: Vec<Tensor> = (0..n)
        .map(|i| Tensor::new([3, cfg.image_size, cfg.image_size], recon.data()[i * plane..(i + 1) * plane].to_vec()))
        .collect::<Result<_>>()?;
    let e_orig = images.iter().map(laplacian_energy).sum::<f64>() / n as f64;
    let e_recon = recon_images.iter().map(laplacian_energy).sum::<f64>() / n as f64;
    let p = &run.out.perceptual;
    let v_orig = cross_identity_variance(&p.perceive(&batch)?, &ids);
    let v_recon = cross_identity_variance(&p.perceive(&recon)?, &ids);
    Ok(outcome(
        e_recon < e_orig && v_recon < v_orig,
        format!(
            "{n} held-out images / 100 identities: (a) Laplacian energy {e_recon:.5} < {e_orig:.5}: {}; \
             (b) cross-identity variance of perceive {v_recon:.5} < {v_orig:.5}: {}",
            e_recon < e_orig,
            v_recon < v_orig
        ),
    ))
}

/// Returns its input as the reconstruction and per-channel means as latent.
struct IdentityStub {
    size: usize,
}

impl Reconstructor for IdentityStub {
    fn image_size(&self) -> usize {
        self.size
    }
    fn latent_dim(&self) -> usize {
        3
    }
    fn is_frozen(&self) -> bool {
        true
    }
    fn reconstruct(&self, images: &Tensor) -> Result<(Tensor, Tensor)> {
        let n = images.numel() / (3 * self.size * self.size);
        let plane = self.size * self.size;
        let latent = Tensor::from_fn([n, 3], |i| {
            images.data()[i * plane..(i + 1) * plane].iter().sum::<f32>() / plane as f32
        });
        Ok((images.clone(), latent))
    }
}

fn c6_identity_stub(run: &SeedRun) -> Result<Outcome> {
    let stub = IdentityStub {
        size: run.cfg.image_size,
    };
    let ex = Extractor::new(&stub, &run.out.perceptual)?;
    let images = &run.out.benchmark.images[..1000];
    let bundles = ex.extract_batch(images)?;
    let nonzero = bundles.iter().filter(|b| b.v_d.iter().any(|&v| v != 0.0)).count();
    Ok(outcome(
        nonzero == 0,
        format!("{nonzero} of {} images have a nonzero v_d entry", images.len()),
    ))
}

fn c7_ablation(runs: &[SeedRun]) -> Outcome {
    let mut per_mode: HashMap<FusionMode, Vec<f64>> = HashMap::new();
    let mut lines = Vec::new();
    for r in runs {
        let mut parts = Vec::new();
        for s in &r.out.ablation.summaries {
            per_mode.entry(s.mode).or_default().push(s.mean);
            parts.push(format!("{} {:.4}", s.mode, s.mean));
        }
        lines.push(format!("seed {}: {}", r.cfg.seed, parts.join(", ")));
    }
    let mean = |m: FusionMode| per_mode[&m].iter().sum::<f64>() / per_mode[&m].len() as f64;
    let (both, vc, vd, raw) = (
        mean(FusionMode::Both),
        mean(FusionMode::VcOnly),
        mean(FusionMode::VdOnly),
        mean(FusionMode::PerceptualRaw),
    );
    let bench = &runs[0].out.benchmark;
    let ablation_secs: f64 = runs.iter().map(|r| r.ablation_elapsed.as_secs_f64()).sum();
    let total_secs: f64 = runs.iter().map(|r| r.elapsed.as_secs_f64()).sum();
    let folds = runs[0].out.ablation.summaries[0].folds.len();
    let pass = both >= vc
        && both >= vd
        && both >= 0.85
        && ablation_secs < 1800.0
        && bench.identity_count() >= 200
        && bench.pairs.len() >= 4000
        && folds == 10;
    for l in &lines {
        progress(l);
    }
    outcome(
        pass,
        format!(
            "{} seeds x {folds} folds, {} identities / {} pairs: mean both {both:.4} vs vc_only {vc:.4}, vd_only {vd:.4} \
             (perceptual_raw {raw:.4}); both >= 0.85; ablation {ablation_secs:.0}s (< 1800s); full pipelines {total_secs:.0}s",
            runs.len(),
            bench.identity_count(),
            bench.pairs.len()
        ),
    )
}

fn c8_protocol(runs: &[SeedRun]) -> Result<Outcome> {
    let mut problems = Vec::new();
    for r in runs {
        let pairs = &r.out.benchmark.pairs;
        let folds = kfold_split(pairs, r.cfg.folds, &mut seeded_rng(r.cfg.seed, 0xF0))?;
        if folds != r.out.ablation.folds {
            problems.push(format!("seed {}: fold assignment not reproducible", r.cfg.seed));
        }
        let mut seen = vec![0u8; pairs.len()];
        for f in &folds {
            for &i in f {
                seen[i] += 1;
            }
        }
        if seen.iter().any(|&c| c != 1) {
            problems.push(format!("seed {}: folds not an exact partition", r.cfg.seed));
        }
        let mut owner: HashMap<u64, usize> = HashMap::new();
        for (fi, f) in folds.iter().enumerate() {
            for &i in f {
                for id in [pairs[i].id_a, pairs[i].id_b] {
                    if *owner.entry(id).or_insert(fi) != fi {
                        problems.push(format!("seed {}: identity {id} in two folds", r.cfg.seed));
                    }
                }
            }
        }
        let hashes: Vec<u32> = r.out.ablation.fold_hashes.iter().map(|(_, h)| *h).collect();
        if hashes.len() != 4 || hashes.windows(2).any(|w| w[0] != w[1]) {
            problems.push(format!("seed {}: fold hashes differ across modes {hashes:?}", r.cfg.seed));
        }
    }
    problems.dedup();
    Ok(outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{} seeds: exhaustive, disjoint, identity-disjoint; 4 modes share one fold hash", runs.len())
        } else {
            problems.join("; ")
        },
    ))
}

fn c9_freeze(run: &SeedRun) -> Result<Outcome> {
    let ae = &run.out.autoencoder;
    let p = &run.out.perceptual;
    let before = (ae.params.checksum(), p.params.checksum());
    let ex = Extractor::new(ae, p)?;
    let probe = &run.out.benchmark.images[0];
    let f0 = ex.extract(probe)?;
    let bench = &run.out.benchmark;
    let pairs = &bench.pairs[..2000];
    let (_, report) = train_verifier(pairs, &bench.images, &ex, &run.cfg.verifier(), &run.cfg.verifier_training())?;
    let after = (ae.params.checksum(), p.params.checksum());
    let f1 = ex.extract(probe)?;
    Ok(outcome(
        before == after && f0 == f1 && ae.is_frozen() && p.is_frozen(),
        format!(
            "autoencoder {:08x} -> {:08x}, perceptual {:08x} -> {:08x} across verifier training \
             (train acc {:.3}); probe features unchanged: {}",
            before.0,
            after.0,
            before.1,
            after.1,
            report.train_accuracy,
            f0 == f1
        ),
    ))
}

const DETERMINISM_CONFIG: &str = "\
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

fn cli_summary(dir: &Path) -> std::result::Result<Vec<u8>, String> {
    let cfg = dir.join("run.cfg");
    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    fs::write(&cfg, DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
    for cmd in ["gen-data", "train-ae", "pretrain-perceptual", "train-verifier", "eval"] {
        let out = Command::new(env!("CARGO_BIN_EXE_fusiform"))
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join("run"))
            .args(["--deterministic", cmd])
            .env("FUSIFORM_LOG", "error")
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{cmd}: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    fs::read(dir.join("run/summary.csv")).map_err(|e| e.to_string())
}

fn bits(t: &Tensor) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

fn c10_determinism(run: &SeedRun) -> Result<Outcome> {
    let tmp = std::env::temp_dir().join(format!("fusiform-acceptance-{}", std::process::id()));
    let a = cli_summary(&tmp.join("a"));
    let b = cli_summary(&tmp.join("b"));
    let csv_same = matches!((&a, &b), (Ok(x), Ok(y)) if x == y && !x.is_empty());

    // In-process: sequential ablation twice gives identical CSV bytes.
    let mut cfg = run.cfg.clone();
    cfg.deterministic = true;
    let mut csv = Vec::new();
    for _ in 0..2 {
        let r = pipeline::ablation(&cfg, &run.out.benchmark, &run.out.bundles, &FusionMode::ALL)?;
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &r.summaries).map_err(|e| Error::Format(e.to_string()))?;
        csv.push(buf);
    }
    let mut parallel = Vec::new();
    write_summary_csv(&mut parallel, &run.out.ablation.summaries).map_err(|e| Error::Format(e.to_string()))?;
    let in_process_same = csv[0] == csv[1] && csv[0] == parallel;

    // Checkpoint round trip on the trained models.
    let ae_path = tmp.join("ae.fsfn");
    let p_path = tmp.join("p.fsfn");
    checkpoint::save_autoencoder(&ae_path, &run.cfg, &run.out.autoencoder)?;
    checkpoint::save_perceptual(&p_path, &run.cfg, &run.out.perceptual)?;
    let ae2 = checkpoint::load_autoencoder(&ae_path, &run.cfg)?;
    let p2 = checkpoint::load_perceptual(&p_path, &run.cfg)?;
    let probe = Tensor::stack(&run.out.benchmark.images[..64].iter().collect::<Vec<_>>())?;
    let (r1, z1) = run.out.autoencoder.reconstruct(&probe)?;
    let (r2, z2) = ae2.reconstruct(&probe)?;
    let round_trip = bits(&r1) == bits(&r2)
        && bits(&z1) == bits(&z2)
        && bits(&run.out.perceptual.perceive(&probe)?) == bits(&p2.perceive(&probe)?);

    // Every single-byte corruption position class is caught.
    let bytes = fs::read(&p_path).map_err(|e| Error::Format(e.to_string()))?;
    let mut caught = 0;
    let positions = [4, 9, bytes.len() / 3, bytes.len() / 2, bytes.len() - 5, bytes.len() - 1];
    for &pos in &positions {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x01;
        caught += usize::from(matches!(Checkpoint::from_bytes(&bad), Err(Error::CrcMismatch { .. })));
    }
    let _ = fs::remove_dir_all(&tmp);
    let crc = caught == positions.len();
    let cli_note = match (&a, &b) {
        (Err(e), _) | (_, Err(e)) => format!(" ({e})"),
        _ => String::new(),
    };
    Ok(outcome(
        csv_same && in_process_same && round_trip && crc,
        format!(
            "CLI summary.csv byte-identical across two deterministic runs: {csv_same}{cli_note}; \
             in-process ablation CSV identical (sequential x2, parallel): {in_process_same}; \
             checkpoint forward bit-identical: {round_trip}; CRC caught {caught}/{}",
            positions.len()
        ),
    ))
}

fn c11_interfaces(run: &SeedRun) -> Result<Outcome> {
    // Predictions on every benchmark pair from a trained verifier.
    let bench = &run.out.benchmark;
    let (model, _) =
        train_verifier_on_features(&bench.pairs, &run.out.bundles, &run.cfg.verifier(), &run.cfg.verifier_training())?;
    let (x, _) = fuse_pairs(&bench.pairs, &run.out.bundles, run.cfg.mode, run.cfg.abs_diff)?;
    let scores = model.predict_rows(&x)?;
    let extreme = x.map(|v| v * 1e6);
    let extreme_scores = model.predict_rows(&extreme)?;
    let open = scores.iter().chain(&extreme_scores).all(|&s| s > 0.0 && s < 1.0);

    // Preprocess over assorted input ranges and sizes.
    let mut rng = seeded_rng(11, 0);
    let mut pre_ok = true;
    for (i, (lo, hi)) in [(0.0f32, 1.0f32), (0.0, 255.0), (-3.0, 7.0), (-1e4, -1e3), (0.2, 0.2)].iter().enumerate() {
        for size in [17usize, 32, 64] {
            let img = Tensor::from_fn([3, size, size + i], |_| rand::Rng::gen_range(&mut rng, *lo..=*hi));
            let out = preprocess(&img, 32)?;
            pre_ok &= out.shape() == [3, 32, 32] && out.data().iter().all(|v| (0.0..=1.0).contains(v));
        }
    }

    // Paper-scale preset through config text and checkpoint inspection.
    let paper = RunConfig::paper_scale();
    let parsed = RunConfig::parse(&paper.to_text())?;
    let values_ok = parsed.image_size == 224
        && parsed.bottleneck_dim == 2048
        && parsed.ae_batch == 600
        && parsed.ae_steps == 80_000
        && parsed.ae_lr == 1e-4
        && parsed.verifier_batch == 600
        && parsed.verifier_steps == 80_000
        && parsed.verifier_lr == 1e-4
        && parsed.autoencoder().bottleneck_dim == 2048
        && parsed.perceptual().feature_dim() == 2048;
    let tmp = std::env::temp_dir().join(format!("fusiform-large-{}", std::process::id()));
    let path = tmp.join("autoencoder.fsfn");
    {
        let mut ae = AutoencoderModel::new(parsed.autoencoder(), 0)?;
        ae.freeze();
        checkpoint::save_autoencoder(&path, &parsed, &ae)?;
    }
    let listing = Command::new(env!("CARGO_BIN_EXE_fusiform"))
        .args(["inspect"])
        .arg(&path)
        .output()
        .map_err(|e| Error::Format(e.to_string()))?;
    let text = String::from_utf8_lossy(&listing.stdout).into_owned();
    let in_process = cli::inspect(&path)?;
    let _ = fs::remove_dir_all(&tmp);
    let wanted = [
        "preset=paper-scale",
        "image_size=224",
        "bottleneck_dim=2048",
        "ae_batch=600",
        "ae_steps=80000",
        "ae_lr=0.0001",
        "enc.fc.weight\t[25088, 2048]",
        "dec.fc.weight\t[2048, 25088]",
    ];
    let missing: Vec<&str> = wanted.iter().copied().filter(|w| !text.contains(w)).collect();
    let inspect_ok = listing.status.success() && missing.is_empty() && text == in_process;
    let mut p_ok = true;
    {
        let p = PerceptualModel::<f32>::random_frozen(parsed.perceptual(), 0)?;
        p_ok &= p.feature_dim() == 2048;
    }
    Ok(outcome(
        open && pre_ok && values_ok && inspect_ok && p_ok,
        format!(
            "{} predictions in (0,1): {open}; preprocess in [0,1]: {pre_ok}; paper-scale preset 224/2048/600/80000/1e-4 \
             through config: {values_ok}; through inspect: {inspect_ok}{}",
            scores.len() + extreme_scores.len(),
            if missing.is_empty() { String::new() } else { format!(" (missing {missing:?})") }
        ),
    ))
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();

    progress("criterion 1: gradient checks");
    results.push((1, "gradient integrity", c1_gradients()));
    results.push((2, "pixel loss oracle", c2_mse_oracle()));
    results.push((3, "adjoint property", c3_adjoint()));

    let mut runs = Vec::new();
    for seed in SEEDS {
        progress(&format!("training toy pipeline for seed {seed}"));
        match run_seed(seed) {
            Ok(r) => {
                progress(&format!("seed {seed} done in {:.0}s", r.elapsed.as_secs_f64()));
                runs.push(r);
            }
            Err(e) => {
                progress(&format!("seed {seed} failed: {e}"));
            }
        }
    }

    let need = |o: Option<Result<Outcome>>| match o {
        Some(Ok(o)) => o,
        Some(Err(e)) => failed(e),
        None => outcome(false, "pipeline run failed"),
    };
    let first = runs.iter().find(|r| r.cfg.seed == 0);
    progress("criterion 4: convergence (includes a timed retraining)");
    results.push((4, "autoencoder convergence", need(first.map(c4_convergence))));
    results.push((5, "de-identification", need(first.map(c5_deidentification))));
    results.push((6, "v_d identity case", need(first.map(c6_identity_stub))));
    results.push((
        7,
        "ablation ordering",
        if runs.len() == SEEDS.len() {
            c7_ablation(&runs)
        } else {
            outcome(false, "not every seed completed")
        },
    ));
    results.push((
        8,
        "protocol integrity",
        if runs.is_empty() { outcome(false, "no runs") } else { need(Some(c8_protocol(&runs))) },
    ));
    results.push((9, "freeze contract", need(first.map(c9_freeze))));
    progress("criterion 10: determinism (two CLI runs)");
    results.push((10, "determinism and serialization", need(first.map(c10_determinism))));
    results.push((11, "interface contracts", need(first.map(c11_interfaces))));

    println!();
    let mut all = true;
    for (n, name, o) in &results {
        all &= o.pass;
        println!("criterion {n:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!(
        "{} of {} criteria passed in {:.0}s",
        results.iter().filter(|r| r.2.pass).count(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if !all {
        std::process::exit(1);
    }
}
