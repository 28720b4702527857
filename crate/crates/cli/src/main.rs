mod run;
mod store;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mdrr_core::cluster::{agglomerative, class_means, export_dendrogram, export_embeddings, extract_embeddings};
use mdrr_core::eval::{run_ablation, run_sweep, write_ablation_csv, write_metrics_csv, write_sweep_csv};
use mdrr_core::ingest::{build_manifest, filter_min_samples, normalize_labels, split_dataset};
use mdrr_core::pipeline::fit_variant;
use mdrr_core::synth::{tone_corpus, write_corpus, SynthConfig};
use mdrr_core::{FittedPipeline, MetricsReport, ModelVariant, RunConfig, Split, SplitAssignment, SweepSpec};

use run::{exit_code, PartialFailure, RunManifest};
use store::FeatureIndex;

#[derive(Parser)]
#[command(
    name = "mdrr",
    version,
    about = "Animal-sound classification: MFCC, rearrangement, reduction, attention Bi-LSTM"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; missing sections take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a labeled directory tree and write manifest.json and splits.json.
    Ingest { root: PathBuf },
    /// Compute MFCC features for every clip in splits.json.
    Extract {
        /// Defaults to <out>/splits.json.
        #[arg(long)]
        splits: Option<PathBuf>,
    },
    /// Train one model variant on the extracted features.
    Train {
        #[arg(long, default_value = "MDRR")]
        variant: ModelVariant,
    },
    /// Score a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Retrain MDRR over a grid of one parameter.
    Sweep {
        /// JSON sweep specification.
        #[arg(long)]
        spec: PathBuf,
    },
    /// Export attention embeddings and a dendrogram.
    Cluster {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the configured cluster split.
        #[arg(long)]
        split: Option<Split>,
        /// One leaf per clip instead of per class mean.
        #[arg(long)]
        per_clip: bool,
    },
    /// Train and test all three variants.
    Ablation,
    /// Write a synthetic multi-tone corpus as WAV files.
    Synth {
        root: PathBuf,
        #[arg(long, default_value_t = 40)]
        clips_per_class: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Extract { .. } => "extract",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Sweep { .. } => "sweep",
            Command::Cluster { .. } => "cluster",
            Command::Ablation => "ablation",
            Command::Synth { .. } => "synth",
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn features_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("features")
}

fn print_report(report: &MetricsReport, labels: &[String]) {
    println!("precision {:.4}", report.macro_precision);
    println!("recall    {:.4}", report.macro_recall);
    println!("accuracy  {:.4}", report.accuracy);
    let width = labels.iter().map(String::len).max().unwrap_or(0);
    for (c, name) in labels.iter().enumerate() {
        let row: Vec<String> = report.confusion.counts[c].iter().map(|n| n.to_string()).collect();
        println!("  {name:>width$} | {}", row.join(" "));
    }
}

fn cmd_ingest(cfg: &RunConfig, root: &Path, m: &mut RunManifest) -> Result<()> {
    let scanned = build_manifest(root)?;
    let mut manifest = filter_min_samples(&scanned, cfg.ingest.min_samples)?;
    if cfg.ingest.normalize_labels {
        manifest = normalize_labels(&manifest);
    }
    let splits = split_dataset(&manifest, cfg.ingest.ratios, cfg.seed)?;
    for e in &manifest.entries {
        m.input(&e.path)?;
    }

    let out = &cfg.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    manifest.save(out.join("manifest.json"))?;
    splits.save(out.join("splits.json"))?;
    m.output(out.join("manifest.json"));
    m.output(out.join("splits.json"));

    println!("classes: {}", manifest.class_counts.len());
    for (label, n) in &manifest.class_counts {
        println!("  {label}: {n}");
    }
    println!(
        "clips: {} (train {}, val {}, test {}); dropped {} below {} clips; skipped {} files",
        manifest.len(),
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        scanned.len() - manifest.len(),
        cfg.ingest.min_samples,
        scanned.skipped
    );
    Ok(())
}

fn cmd_extract(cfg: &RunConfig, splits_path: Option<PathBuf>, m: &mut RunManifest) -> Result<()> {
    let path = splits_path.unwrap_or_else(|| cfg.output_dir.join("splits.json"));
    let splits = SplitAssignment::load(&path).with_context(|| format!("loading splits {}", path.display()))?;
    m.input(&path)?;
    let dir = features_dir(cfg);
    let (index, summary) = store::extract(&splits, &cfg.mfcc, &dir)?;
    m.output(dir.join(store::INDEX_FILE));
    println!("extracted: {}", summary.extracted);
    println!("skipped: {}", summary.skipped);
    println!("failed: {}", summary.failed);
    for f in &index.failures {
        println!("  {}: {}", f.source.display(), f.error);
    }
    if summary.failed > 0 {
        return Err(PartialFailure { failed: summary.failed }.into());
    }
    Ok(())
}

fn load_features(cfg: &RunConfig, m: &mut RunManifest) -> Result<(FeatureIndex, PathBuf)> {
    let dir = features_dir(cfg);
    let index = FeatureIndex::load(&dir)?;
    m.input(&dir.join(store::INDEX_FILE))?;
    Ok((index, dir))
}

fn cmd_train(cfg: &RunConfig, variant: ModelVariant, m: &mut RunManifest) -> Result<()> {
    let (index, dir) = load_features(cfg, m)?;
    let data = index.load_all(&dir)?;
    let fitted = fit_variant(variant, &data, &cfg.pipeline())?;

    let ckpt_dir = cfg.output_dir.join("checkpoints");
    let log_dir = cfg.output_dir.join("logs");
    fs::create_dir_all(&ckpt_dir)?;
    fs::create_dir_all(&log_dir)?;
    let ckpt = ckpt_dir.join(format!("{variant}.ckpt"));
    let log_path = log_dir.join(format!("{variant}_training.csv"));
    fitted.save(&ckpt)?;
    fitted.log.write_csv(&log_path)?;
    m.output(&ckpt);
    m.output(&log_path);

    println!("checkpoint: {}", ckpt.display());
    println!("best epoch: {} of {}", fitted.best_epoch, fitted.log.epochs.len());
    if data.val.is_empty() {
        println!("validation split is empty");
    } else {
        let e = fitted.evaluate(&data.val)?;
        println!("val accuracy: {:.4}", e.report.accuracy);
        println!("val precision: {:.4}", e.report.macro_precision);
        println!("val recall: {:.4}", e.report.macro_recall);
    }
    Ok(())
}

fn load_checkpoint(path: &Path, m: &mut RunManifest) -> Result<FittedPipeline> {
    if !path.is_file() {
        bail!("checkpoint {} does not exist", path.display());
    }
    m.input(path)?;
    Ok(FittedPipeline::load(path)?)
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, split: Split, m: &mut RunManifest) -> Result<()> {
    let fitted = load_checkpoint(checkpoint, m)?;
    let (index, dir) = load_features(cfg, m)?;
    let clips = index.load_split(&dir, split, &fitted.labels)?;
    if clips.is_empty() {
        bail!("{} split has no extracted clips", split_name(split));
    }
    let e = fitted.evaluate(&clips)?;
    let path = cfg
        .output_dir
        .join(format!("metrics_{}_{}.csv", fitted.variant(), split_name(split)));
    write_metrics_csv(&e.report, &fitted.labels, &path)?;
    m.output(&path);
    println!("{} on {} ({} clips)", fitted.variant(), split_name(split), clips.len());
    print_report(&e.report, &fitted.labels);
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, spec_path: &Path, m: &mut RunManifest) -> Result<()> {
    let spec = SweepSpec::load(spec_path)?;
    m.input(spec_path)?;
    let (index, dir) = load_features(cfg, m)?;
    let data = index.load_all(&dir)?;
    let outcome = run_sweep(&spec, &data, &cfg.pipeline())?;
    fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join(format!("sweep_{}.csv", spec.parameter));
    write_sweep_csv(&outcome.rows, &path)?;
    m.output(&path);
    for r in &outcome.rows {
        println!(
            "{}={} seed {}: accuracy {:.4}",
            r.parameter, r.value, r.seed, r.accuracy
        );
    }
    for (value, seed, reason) in &outcome.skipped {
        println!("skipped {}={value} seed {seed}: {reason}", spec.parameter);
    }
    println!("rows: {}, skipped: {}", outcome.rows.len(), outcome.skipped.len());
    Ok(())
}

fn cmd_cluster(cfg: &RunConfig, checkpoint: &Path, split: Split, per_clip: bool, m: &mut RunManifest) -> Result<()> {
    let fitted = load_checkpoint(checkpoint, m)?;
    let (index, dir) = load_features(cfg, m)?;
    let clips = index.load_split(&dir, split, &fitted.labels)?;
    let set = extract_embeddings(&fitted, &clips)?;
    let points: Vec<(String, Vec<f64>)> = if per_clip {
        set.rows.iter().map(|r| (r.id.clone(), r.vector.clone())).collect()
    } else {
        class_means(&set)?
    };
    let tree = agglomerative(&points)?;

    let emb = cfg.output_dir.join("embeddings.csv");
    let dendro = cfg.output_dir.join("dendrogram");
    export_embeddings(&set, &emb)?;
    export_dendrogram(&tree, &dendro)?;
    m.output(&emb);
    m.output(dendro.with_extension("json"));
    m.output(dendro.with_extension("nwk"));
    println!("embeddings: {} x {}", set.len(), set.dim());
    println!("leaves: {}", tree.leaves.len());
    println!("{}", tree.to_newick());
    Ok(())
}

fn cmd_ablation(cfg: &RunConfig, m: &mut RunManifest) -> Result<()> {
    let (index, dir) = load_features(cfg, m)?;
    let data = index.load_all(&dir)?;
    let mut rows = Vec::new();
    for &seed in &cfg.eval.seeds {
        rows.extend(run_ablation(&data, &cfg.pipeline().with_seed(seed), &cfg.eval.dataset));
    }
    fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("ablation.csv");
    write_ablation_csv(&rows, &path)?;
    m.output(&path);
    for r in &rows {
        match &r.outcome {
            Ok(rep) => println!(
                "{} {}: precision {:.4} recall {:.4} accuracy {:.4}",
                r.variant, r.dataset, rep.macro_precision, rep.macro_recall, rep.accuracy
            ),
            Err(e) => println!("{} {}: failed: {e}", r.variant, r.dataset),
        }
    }
    Ok(())
}

fn cmd_synth(cfg: &RunConfig, root: &Path, clips_per_class: usize, m: &mut RunManifest) -> Result<()> {
    let synth = SynthConfig {
        clips_per_class,
        seed: cfg.seed,
        ..Default::default()
    };
    let manifest = write_corpus(&tone_corpus(&synth)?, root)?;
    m.input_hash("synth_config", run::sha256_json(&synth));
    m.output(root);
    println!(
        "wrote {} clips in {} classes to {}",
        manifest.len(),
        manifest.class_counts.len(),
        root.display()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    if let Some(n) = cli.common.jobs {
        if n == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut m = RunManifest::new(cli.command.name(), &cfg);
    if let Some(p) = &cli.common.config {
        m.input(p)?;
    }
    let result = match cli.command {
        Command::Ingest { root } => cmd_ingest(&cfg, &root, &mut m),
        Command::Extract { splits } => cmd_extract(&cfg, splits, &mut m),
        Command::Train { variant } => cmd_train(&cfg, variant, &mut m),
        Command::Eval { checkpoint, split } => cmd_eval(&cfg, &checkpoint, split, &mut m),
        Command::Sweep { spec } => cmd_sweep(&cfg, &spec, &mut m),
        Command::Cluster {
            checkpoint,
            split,
            per_clip,
        } => cmd_cluster(
            &cfg,
            &checkpoint,
            split.unwrap_or(cfg.cluster.split),
            per_clip || cfg.cluster.per_clip,
            &mut m,
        ),
        Command::Ablation => cmd_ablation(&cfg, &mut m),
        Command::Synth { root, clips_per_class } => cmd_synth(&cfg, &root, clips_per_class, &mut m),
    };
    // a partially failed extract still records what it did
    if result.is_ok()
        || result
            .as_ref()
            .is_err_and(|e| e.downcast_ref::<PartialFailure>().is_some())
    {
        let path = m.write(&cfg.output_dir)?;
        log::info!("run manifest: {}", path.display());
    }
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MDRR_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
