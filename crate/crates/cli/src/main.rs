//! `gad` — train, score, and sweep GAN-based anomaly detectors.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use gad_core::data::{self, SplitSpec};
use gad_core::ganomaly;
use gad_core::metrics::{auprc_of, prf_at_threshold, ThresholdPolicy};
use gad_core::runner::{
    self, best_by_class, read_results_csv, run_experiment, run_sweep, DataCache, ScoreReport,
    TrainedModel,
};
use gad_core::{AdvLossKind, DatasetId, ExperimentConfig, ModelKind};

#[derive(Parser)]
#[command(name = "gad", version, about = "GAN-based anomaly detection toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one configuration and report test metrics.
    Train(TrainArgs),
    /// Score a dataset with a saved checkpoint.
    Score(ScoreArgs),
    /// Run the train/test configuration grid and collect results.csv.
    Sweep(SweepArgs),
    /// Pretty-print a results.csv with per-class bests.
    Report(ReportArgs),
}

/// Flags mirroring the config-file keys; anything set here overrides the
/// file.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// mnist | fashion | cifar10 | kdd | moons
    #[arg(long)]
    dataset: Option<String>,
    /// Directory holding the dataset files.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long)]
    anomaly_class: Option<u32>,
    /// anogan | egbad | ganomaly
    #[arg(long)]
    model: Option<String>,
    /// bce | fm
    #[arg(long)]
    train_loss: Option<String>,
    /// Add the encoder residual term during training (EGBAD).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    residual: Option<bool>,
    /// bce | fm
    #[arg(long)]
    test_score: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Score mixing weight (1−λ)·residual + λ·discriminator term.
    #[arg(long)]
    lambda: Option<f64>,
    /// GANomaly loss weights as `adv,con,enc`.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    gamma_steps: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    search_lr: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Subsample the training pool to N rows.
    #[arg(long)]
    limit: Option<usize>,
    /// Score the whole pooled dataset instead of the held-out 20%.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    test_on_all: Option<bool>,
    /// Keep the leaky-relu after the encoder's first layer.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    encoder_act: Option<bool>,
    /// Return the last epoch instead of the best eval checkpoint.
    #[arg(long)]
    no_model_selection: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_kv(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.dataset {
            cfg.dataset = DatasetId::parse(v)?;
        }
        if let Some(v) = self.anomaly_class {
            cfg.anomaly_class = v;
        }
        if let Some(v) = &self.model {
            cfg.model = ModelKind::parse(v)?;
        }
        if let Some(v) = &self.train_loss {
            cfg.train_loss = AdvLossKind::parse(v)?;
        }
        if let Some(v) = self.residual {
            cfg.residual = v;
        }
        if let Some(v) = &self.test_score {
            cfg.test_score = AdvLossKind::parse(v)?;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch {
            cfg.batch = v;
        }
        if let Some(v) = self.latent_dim {
            cfg.latent_dim = v;
        }
        if let Some(v) = self.hidden_dim {
            cfg.hidden_dim = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = &self.weights {
            cfg.set("weights", v).map_err(anyhow::Error::from)?;
        }
        if let Some(v) = self.gamma_steps {
            cfg.gamma_steps = v;
        }
        if let Some(v) = self.restarts {
            cfg.restarts = v;
        }
        if let Some(v) = self.search_lr {
            cfg.search_lr = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.limit {
            cfg.limit = Some(v);
        }
        if let Some(v) = self.test_on_all {
            cfg.test_on_all = v;
        }
        if let Some(v) = self.encoder_act {
            cfg.encoder_act = v;
        }
        if self.no_model_selection {
            cfg.model_selection = false;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Where to write checkpoints and logs.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Checkpoint directory produced by `train` or `sweep`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Where to write scores.csv (and residuals.bin for ganomaly).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated anomaly classes, or `all` (0-9 for image sets).
    #[arg(long, default_value = "all")]
    classes: String,
    /// Comma-separated models to sweep (egbad,ganomaly,anogan).
    #[arg(long, default_value = "egbad,ganomaly")]
    models: String,
    /// Seed that derives each training's seed stream.
    #[arg(long, default_value_t = 7)]
    master_seed: u64,
    /// Parallel training workers.
    #[arg(long, default_value_t = 2)]
    workers: usize,
    /// Write 0.0 in the seconds column so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
    /// Output directory for results.csv, best_by_class.csv, checkpoints.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Path to a results.csv written by `sweep`.
    #[arg(long, default_value = "out/results.csv")]
    results: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Train(args) => train(args),
        Cmd::Score(args) => score(args),
        Cmd::Sweep(args) => sweep(args),
        Cmd::Report(args) => report(args),
    }
}

fn print_report_line(r: &ScoreReport) {
    match &r.error {
        Some(e) => println!(
            "{} c{} {:<8} train={}/res={} test={}  FAILED: {e}",
            r.config.dataset.as_str(),
            r.config.anomaly_class,
            r.config.model.as_str(),
            r.config.train_loss.as_str(),
            r.config.residual as u8,
            r.test_score_label(),
        ),
        None => println!(
            "{} c{} {:<8} train={}/res={} test={:<6} auprc={:.4} p={:.3} r={:.3} f1={:.3} ({:.1}s)",
            r.config.dataset.as_str(),
            r.config.anomaly_class,
            r.config.model.as_str(),
            r.config.train_loss.as_str(),
            r.config.residual as u8,
            r.test_score_label(),
            r.auprc,
            r.precision,
            r.recall,
            r.f1,
            r.seconds,
        ),
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let raw = data::load_named(cfg.dataset.as_str(), &args.config.data_dir)?;
    if raw.skipped_rows > 0 {
        eprintln!("warning: skipped {} malformed rows", raw.skipped_rows);
    }
    let report = run_experiment(&cfg, &raw, Some(&args.out));
    print_report_line(&report);
    if let Some(e) = &report.error {
        bail!("training failed: {e}");
    }
    println!(
        "checkpoint: {}",
        args.out.join(cfg.train_key()).display()
    );
    Ok(())
}

fn score(args: ScoreArgs) -> Result<()> {
    // checkpoint config is the base; CLI flags override (test_score etc.)
    let saved = std::fs::read_to_string(args.checkpoint.join("config.txt"))
        .with_context(|| format!("reading {}/config.txt", args.checkpoint.display()))?;
    let mut cfg = ExperimentConfig::from_kv(&saved)?;
    {
        // apply CLI overrides on top of the checkpoint's config
        let override_cfg = args.config.resolve()?;
        let defaults = ExperimentConfig::default();
        if override_cfg.test_score != defaults.test_score || args.config.test_score.is_some() {
            cfg.test_score = override_cfg.test_score;
        }
        if args.config.test_on_all.is_some() {
            cfg.test_on_all = override_cfg.test_on_all;
        }
        if args.config.lambda.is_some() {
            cfg.lambda = override_cfg.lambda;
        }
        if args.config.seed.is_some() {
            cfg.seed = override_cfg.seed;
        }
    }

    let model = TrainedModel::load(&args.checkpoint, cfg.model)?;
    let raw = data::load_named(cfg.dataset.as_str(), &args.config.data_dir)?;
    let protocol = data::make_protocol(
        &raw,
        cfg.anomaly_class,
        SplitSpec::new(cfg.seed),
        cfg.limit,
    )?;
    let whole;
    let target = if cfg.test_on_all {
        whole = protocol.whole_dataset(&raw, cfg.anomaly_class);
        &whole
    } else {
        &protocol.test
    };

    let scores = runner::score_with(&model, &cfg, target)?;
    let auprc = auprc_of(&scores, &target.labels)?;
    let (scaled, degenerate) = ganomaly::scale_scores(&scores);
    if degenerate {
        eprintln!("warning: constant scores, scaled outputs all zero");
    }
    let point = prf_at_threshold(
        &scores,
        &target.labels,
        ThresholdPolicy::BaseRateQuantile {
            base_rate: protocol.eval.anomaly_rate().max(f64::MIN_POSITIVE),
        },
    )?;
    println!(
        "{} c{} {}: n={} auprc={:.6} precision={:.6} recall={:.6} f1={:.6}",
        cfg.dataset.as_str(),
        cfg.anomaly_class,
        cfg.model.as_str(),
        target.n,
        auprc,
        point.precision,
        point.recall,
        point.f1
    );

    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        let mut csv = String::from("index,score,scaled_score,label\n");
        for (i, ((s, sc), l)) in scores
            .iter()
            .zip(&scaled)
            .zip(&target.labels)
            .enumerate()
        {
            csv.push_str(&format!("{i},{s:.9},{sc:.9},{l}\n"));
        }
        std::fs::write(out.join("scores.csv"), csv)?;

        if let TrainedModel::Ganomaly(m) = &model {
            let rows: Vec<usize> = (0..target.n).collect();
            let maps = ganomaly::residual_maps(m, &target.batch(&rows))?;
            ganomaly::write_residual_maps(&out.join("residuals.bin"), &maps)?;
        }
        println!("wrote {}", out.join("scores.csv").display());
    }
    Ok(())
}

fn parse_classes(spec: &str, dataset: DatasetId) -> Result<Vec<u32>> {
    if spec == "all" {
        return Ok(match dataset {
            DatasetId::Kdd | DatasetId::Moons => vec![1],
            _ => (0..10).collect(),
        });
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<u32>()
                .with_context(|| format!("bad class '{s}'"))
        })
        .collect()
}

fn sweep(args: SweepArgs) -> Result<()> {
    let base = args.config.resolve()?;
    let classes = parse_classes(&args.classes, base.dataset)?;
    let models: Vec<ModelKind> = args
        .models
        .split(',')
        .map(|s| ModelKind::parse(s.trim()).map_err(anyhow::Error::from))
        .collect::<Result<_>>()?;

    let grid = runner::build_grid(&base, &classes, &models, args.master_seed);
    println!(
        "sweep: {} cells over {} classes x {:?} (master seed {})",
        grid.len(),
        classes.len(),
        args.models,
        args.master_seed
    );

    std::fs::create_dir_all(&args.out)?;
    let cache = DataCache::new(&args.config.data_dir);
    let reports = run_sweep(&grid, &cache, Some(&args.out), args.workers);

    for r in &reports {
        print_report_line(r);
    }
    let results_path = args.out.join("results.csv");
    runner::write_results_csv(&reports, &results_path, args.no_timing)?;
    let best = best_by_class(&reports);
    runner::write_best_csv(&best, &args.out.join("best_by_class.csv"))?;

    println!("\nbest per (dataset, class, model):");
    for row in &best {
        println!(
            "  {} c{} {:<8} auprc={:.4} (train={}, residual={}, test={})",
            row.dataset,
            row.anomaly_class,
            row.model,
            row.auprc,
            row.train_loss,
            row.residual as u8,
            row.test_score
        );
    }
    println!("\nwrote {}", results_path.display());
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let rows = read_results_csv(&args.results)?;
    if rows.is_empty() {
        println!("no results in {}", args.results.display());
        return Ok(());
    }
    println!(
        "{:<8} {:>5} {:<8} {:<5} {:>3} {:<6} {:>9} {:>9} {:>8} {:>8}",
        "dataset", "class", "model", "train", "res", "test", "auprc", "precision", "recall", "f1"
    );
    for row in &rows {
        println!(
            "{:<8} {:>5} {:<8} {:<5} {:>3} {:<6} {:>9} {:>9} {:>8} {:>8}",
            row[0], row[1], row[2], row[3], row[4], row[5], row[7], row[8], row[9], row[10]
        );
    }

    // per-(dataset,class,model) max auprc, in first-seen order
    let mut best: Vec<(String, String, String, f64)> = Vec::new();
    for row in &rows {
        let auprc: f64 = row[7].parse().unwrap_or(f64::NAN);
        if auprc.is_nan() {
            continue;
        }
        let key = (row[0].clone(), row[1].clone(), row[2].clone());
        match best
            .iter_mut()
            .find(|(d, c, m, _)| (d, c, m) == (&key.0, &key.1, &key.2))
        {
            Some(entry) => entry.3 = entry.3.max(auprc),
            None => best.push((key.0, key.1, key.2, auprc)),
        }
    }
    println!("\nbest AUPRC per (dataset, class, model):");
    for (d, c, m, a) in best {
        println!("  {d:<8} c{c:<4} {m:<8} {a:.6}");
    }
    Ok(())
}
