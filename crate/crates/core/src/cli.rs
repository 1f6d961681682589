//! Command-line front end.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::checkpoint::{self, Checkpoint};
use crate::config::{Preset, RunConfig};
use crate::dataset::{self, Dataset};
use crate::error::{Error, Result};
use crate::eval::{write_ablation_csv, write_summary_csv};
use crate::fusiform::{Extractor, FeatureBundle};
use crate::pipeline;
use crate::verifier::{train_verifier_on_features, FusionMode};

pub const LOG_ENV: &str = "FUSIFORM_LOG";

#[derive(Debug, Parser)]
#[command(name = "fusiform", version, about = "Two-level face features and pair verification")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// key=value configuration file; flags override its keys.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = ["toy", "paper-scale"])]
    pub preset: Option<String>,
    #[arg(long, global = true, value_parser = ["both", "vc_only", "vd_only", "perceptual_raw"])]
    pub mode: Option<String>,
    /// Run directory holding data, checkpoints and reports.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Evaluate folds sequentially.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Use |a − b| instead of a − b in pair fusion.
    #[arg(long, global = true)]
    pub abs_diff: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the training faces and the verification benchmark.
    GenData {
        /// Build the benchmark from `<identity>/<image>.png` files instead.
        #[arg(long, value_name = "DIR")]
        import: Option<PathBuf>,
    },
    /// Train the bottleneck autoencoder on the training faces.
    TrainAe,
    /// Build the frozen perceptual network.
    PretrainPerceptual,
    /// Train one verifier on every benchmark pair.
    TrainVerifier,
    /// Export features for every benchmark image.
    Extract,
    /// k-fold ablation over the fusion modes (all four unless --mode).
    Eval,
    /// Print a checkpoint's configuration and tensor table.
    Inspect { path: PathBuf },
}

/// Files inside a run directory.
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunPaths { root: root.into() }
    }
    pub fn train_data(&self) -> PathBuf {
        self.root.join("data/train")
    }
    pub fn bench_data(&self) -> PathBuf {
        self.root.join("data/bench")
    }
    pub fn autoencoder(&self) -> PathBuf {
        self.root.join("autoencoder.fsfn")
    }
    pub fn autoencoder_step(&self, step: usize) -> PathBuf {
        self.root.join(format!("autoencoder.step{step:06}.fsfn"))
    }
    pub fn perceptual(&self) -> PathBuf {
        self.root.join("perceptual.fsfn")
    }
    pub fn verifier(&self) -> PathBuf {
        self.root.join("verifier.fsfn")
    }
    pub fn features(&self) -> PathBuf {
        self.root.join("features")
    }
    pub fn ablation_csv(&self) -> PathBuf {
        self.root.join("ablation.csv")
    }
    pub fn summary_csv(&self) -> PathBuf {
        self.root.join("summary.csv")
    }
    pub fn folds_tsv(&self) -> PathBuf {
        self.root.join("folds.tsv")
    }
}

/// Preset, then config file, then flags.
pub fn resolve_config(args: &GlobalArgs) -> Result<RunConfig> {
    let preset: Option<Preset> = args.preset.as_deref().map(str::parse).transpose()?;
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            RunConfig::parse_with_preset(&text, preset)?
        }
        None => RunConfig::preset(preset.unwrap_or(Preset::Toy)),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = &args.mode {
        cfg.mode = mode.parse()?;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    cfg.deterministic |= args.deterministic;
    cfg.abs_diff |= args.abs_diff;
    cfg.validate()?;
    Ok(cfg)
}

fn file_crc(path: &Path) -> Result<u32> {
    Ok(crc32fast::hash(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Benchmark features: reuses the export under `features/` when it was made
/// from the current checkpoints, otherwise extracts and rewrites it.
pub fn benchmark_features(cfg: &RunConfig, bench: &Dataset) -> Result<Vec<FeatureBundle>> {
    let paths = RunPaths::new(&cfg.out);
    let stamp = format!(
        "autoencoder_crc={}\nperceptual_crc={}\nnormalize_features={}\nimages={}\n",
        file_crc(&paths.autoencoder())?,
        file_crc(&paths.perceptual())?,
        cfg.normalize_features,
        bench.len()
    );
    if paths.features().join(dataset::FEATURES_FILE).exists() {
        match dataset::read_features(&paths.features()) {
            Ok((c, bundles)) if c.config.ends_with(&stamp) => {
                info!("using cached features in {}", paths.features().display());
                return Ok(bundles);
            }
            Ok(_) => info!("feature export is stale; re-extracting"),
            Err(e) => warn!("ignoring unreadable feature export: {e}"),
        }
    }
    let ae = checkpoint::load_autoencoder(&paths.autoencoder(), cfg)?;
    let p = checkpoint::load_perceptual(&paths.perceptual(), cfg)?;
    let bundles = pipeline::extract_features(cfg, &Extractor::new(&ae, &p)?, &bench.images)?;
    let ids: Vec<u64> = bench.records.iter().map(|r| r.identity).collect();
    dataset::write_features(&paths.features(), &stamp, &ids, &bundles)?;
    info!("wrote {} feature records to {}", bundles.len(), paths.features().display());
    Ok(bundles)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| std::io::Write::flush(&mut w)).map_err(|e| Error::io(path, e))
}

pub fn run(cli: Cli) -> Result<()> {
    if let Command::Inspect { path } = &cli.command {
        print!("{}", inspect(path)?);
        return Ok(());
    }
    let cfg = resolve_config(&cli.global)?;
    if cfg.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global() {
            warn!("thread pool already initialised: {e}");
        }
    }
    let paths = RunPaths::new(&cfg.out);
    match cli.command {
        Command::GenData { import } => {
            let mut cfg = cfg;
            if import.is_some() {
                cfg.import_dir = import;
            }
            let bench = pipeline::benchmark(&cfg)?;
            // Imported images double as the (label-free) autoencoder set.
            let train = match cfg.import_dir {
                Some(_) => Dataset {
                    pairs: Vec::new(),
                    ..bench.clone()
                },
                None => pipeline::training_faces(&cfg)?,
            };
            train.save(&paths.train_data())?;
            bench.save(&paths.bench_data())?;
            info!(
                "wrote {} training images and {} benchmark images ({} identities, {} pairs)",
                train.len(),
                bench.len(),
                bench.identity_count(),
                bench.pairs.len()
            );
        }
        Command::TrainAe => {
            let train = Dataset::load(&paths.train_data())?;
            let (model, report) = pipeline::train_autoencoder(&cfg, &train.images, |step, m| {
                if step < cfg.ae_steps {
                    checkpoint::save_autoencoder(&paths.autoencoder_step(step), &cfg, m)?;
                }
                Ok(())
            })?;
            checkpoint::save_autoencoder(&paths.autoencoder(), &cfg, &model)?;
            let last = report.loss_history.last().copied().unwrap_or(f32::NAN);
            println!("autoencoder: {} steps, final loss {last:.6}", report.loss_history.len());
        }
        Command::PretrainPerceptual => {
            let model = pipeline::perceptual_model(&cfg)?;
            checkpoint::save_perceptual(&paths.perceptual(), &cfg, &model)?;
            match model.proxy_accuracy {
                Some(a) => println!("perceptual: {}, proxy held-out accuracy {a:.4}", model.provenance),
                None => println!("perceptual: {}", model.provenance),
            }
        }
        Command::TrainVerifier => {
            let bench = Dataset::load(&paths.bench_data())?;
            let bundles = benchmark_features(&cfg, &bench)?;
            let (model, report) =
                train_verifier_on_features(&bench.pairs, &bundles, &cfg.verifier(), &cfg.verifier_training())?;
            checkpoint::save_verifier(&paths.verifier(), &cfg, &model)?;
            println!("verifier ({}): training accuracy {:.4}", cfg.mode, report.train_accuracy);
        }
        Command::Extract => {
            let bench = Dataset::load(&paths.bench_data())?;
            let bundles = benchmark_features(&cfg, &bench)?;
            println!("features: {} records in {}", bundles.len(), paths.features().display());
        }
        Command::Eval => {
            let bench = Dataset::load(&paths.bench_data())?;
            let bundles = benchmark_features(&cfg, &bench)?;
            let modes: Vec<FusionMode> = match &cli.global.mode {
                Some(_) => vec![cfg.mode],
                None => FusionMode::ALL.to_vec(),
            };
            let result = pipeline::ablation(&cfg, &bench, &bundles, &modes)?;
            write_file(&paths.ablation_csv(), |w| write_ablation_csv(w, &result.summaries))?;
            write_file(&paths.summary_csv(), |w| write_summary_csv(w, &result.summaries))?;
            write_file(&paths.folds_tsv(), |w| {
                use std::io::Write;
                writeln!(w, "mode\tfold_hash")?;
                for (m, h) in &result.fold_hashes {
                    writeln!(w, "{m}\t{h:08x}")?;
                }
                Ok(())
            })?;
            for s in &result.summaries {
                println!("{:<15} {:.4} ± {:.4}", s.mode.as_str(), s.mean, s.std);
            }
        }
        Command::Inspect { .. } => unreachable!(),
    }
    Ok(())
}

/// Configuration blob followed by one line per tensor.
pub fn inspect(path: &Path) -> Result<String> {
    let c = Checkpoint::load(path)?;
    let total: usize = c.tensors.iter().map(|(_, t)| t.numel()).sum();
    Ok(format!(
        "# config\n{}# tensors ({} tensors, {total} values)\n{}",
        c.config,
        c.tensors.len(),
        c.listing()
    ))
}

/// Binary entry point: parses arguments, runs, and exits with the error's
/// status code on failure.
pub fn main() -> ! {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => std::process::exit(0),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
