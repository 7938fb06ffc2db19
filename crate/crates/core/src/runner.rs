//! End-to-end experiment execution: load → protocol → train → score →
//! metrics, the Table-style configuration sweep, and result persistence.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use crate::anogan::{self, AnoganConfig};
use crate::checkpoint;
use crate::config::{derive_seed, DatasetId, ExperimentConfig, ModelKind};
use crate::data::{self, LabeledDataset, Protocol, RawDataset, SplitSpec};
use crate::egbad::{self, EgbadConfig, EgbadModel};
use crate::error::{Error, Result};
use crate::ganomaly::{self, GanomalyConfig, GanomalyModel, GanomalyWeights, LatentScore};
use crate::metrics::{auprc_of, prf_at_threshold, ThresholdPolicy};
use crate::objectives::AdvLossKind;
use crate::train::{write_selection_log, SelectionRow, TrainOpts};

pub const RESULTS_HEADER: &str =
    "dataset,anomaly_class,model,train_loss,residual,test_score,seed,auprc,precision,recall,f1,seconds";

/// Outcome of one configuration cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScoreReport {
    pub config: ExperimentConfig,
    pub scores: Vec<f64>,
    /// Min-max scaled scores (identical ranking).
    pub scaled_scores: Vec<f64>,
    pub auprc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub seconds: f64,
    pub seed: u64,
    pub error: Option<String>,
}

impl ScoreReport {
    fn failed(config: ExperimentConfig, seed: u64, error: String) -> ScoreReport {
        ScoreReport {
            config,
            scores: Vec::new(),
            scaled_scores: Vec::new(),
            auprc: f64::NAN,
            precision: f64::NAN,
            recall: f64::NAN,
            f1: f64::NAN,
            threshold: f64::NAN,
            seconds: 0.0,
            seed,
            error: Some(error),
        }
    }

    /// Internal-consistency check: auprc in range, f1 the harmonic mean of
    /// the stored precision/recall.
    pub fn validate(&self) -> Result<()> {
        if self.error.is_some() {
            return Ok(());
        }
        if !(0.0..=1.0).contains(&self.auprc) {
            return Err(Error::contract(format!("auprc {} outside [0,1]", self.auprc)));
        }
        let expect = if self.precision + self.recall == 0.0 {
            0.0
        } else {
            2.0 * self.precision * self.recall / (self.precision + self.recall)
        };
        if (self.f1 - expect).abs() > 1e-9 {
            return Err(Error::contract("f1 is not the harmonic mean of p and r"));
        }
        Ok(())
    }

    /// The test-score column value: GANomaly scores in latent space.
    pub fn test_score_label(&self) -> &'static str {
        match self.config.model {
            ModelKind::Ganomaly => "latent",
            _ => self.config.test_score.as_str(),
        }
    }

    pub fn csv_row(&self, no_timing: bool) -> String {
        let c = &self.config;
        let secs = if no_timing { 0.0 } else { self.seconds };
        format!(
            "{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.3}",
            c.dataset.as_str(),
            c.anomaly_class,
            c.model.as_str(),
            c.train_loss.as_str(),
            c.residual as u8,
            self.test_score_label(),
            self.seed,
            self.auprc,
            self.precision,
            self.recall,
            self.f1,
            secs,
        )
    }
}

/// A trained detector, whatever its kind.
pub enum TrainedModel {
    Anogan { g: crate::network::Network, d: crate::network::Network },
    Egbad(EgbadModel),
    Ganomaly(GanomalyModel),
}

impl TrainedModel {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        match self {
            TrainedModel::Anogan { g, d } => {
                checkpoint::save(g, &dir.join("g.gadn"))?;
                checkpoint::save(d, &dir.join("d.gadn"))?;
            }
            TrainedModel::Egbad(m) => {
                checkpoint::save(&m.g, &dir.join("g.gadn"))?;
                checkpoint::save(&m.e, &dir.join("e.gadn"))?;
                checkpoint::save(&m.d, &dir.join("d.gadn"))?;
            }
            TrainedModel::Ganomaly(m) => {
                checkpoint::save(&m.g_e, &dir.join("g_e.gadn"))?;
                checkpoint::save(&m.g_d, &dir.join("g_d.gadn"))?;
                checkpoint::save(&m.e, &dir.join("e.gadn"))?;
                checkpoint::save(&m.d, &dir.join("d.gadn"))?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path, kind: ModelKind) -> Result<TrainedModel> {
        Ok(match kind {
            ModelKind::Anogan => TrainedModel::Anogan {
                g: checkpoint::load(&dir.join("g.gadn"))?,
                d: checkpoint::load(&dir.join("d.gadn"))?,
            },
            ModelKind::Egbad => TrainedModel::Egbad(EgbadModel {
                g: checkpoint::load(&dir.join("g.gadn"))?,
                e: checkpoint::load(&dir.join("e.gadn"))?,
                d: checkpoint::load(&dir.join("d.gadn"))?,
            }),
            ModelKind::Ganomaly => TrainedModel::Ganomaly(GanomalyModel {
                g_e: checkpoint::load(&dir.join("g_e.gadn"))?,
                g_d: checkpoint::load(&dir.join("g_d.gadn"))?,
                e: checkpoint::load(&dir.join("e.gadn"))?,
                d: checkpoint::load(&dir.join("d.gadn"))?,
            }),
        })
    }
}

fn train_opts(cfg: &ExperimentConfig) -> TrainOpts {
    TrainOpts {
        epochs: cfg.epochs,
        batch_size: cfg.batch,
        latent_dim: cfg.latent_dim,
        hidden_dim: cfg.hidden_dim,
        lr: cfg.lr,
        beta1: cfg.beta1,
    }
}

/// Trains the model a config describes, given its protocol split.
pub fn train_model(
    cfg: &ExperimentConfig,
    protocol: &Protocol,
) -> Result<(TrainedModel, Vec<SelectionRow>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eval = cfg.model_selection.then_some(&protocol.eval);
    match cfg.model {
        ModelKind::Anogan => {
            let (g, d) = anogan::train_anogan(
                &protocol.train_normals,
                &train_opts(cfg),
                cfg.train_loss,
                &mut rng,
            )?;
            Ok((TrainedModel::Anogan { g, d }, Vec::new()))
        }
        ModelKind::Egbad => {
            let ecfg = EgbadConfig {
                train_g_loss: cfg.train_loss,
                use_residual: cfg.residual,
                test_score: cfg.test_score,
                lambda: cfg.lambda,
                opts: train_opts(cfg),
                encoder_first_layer_activation: cfg.encoder_act,
                model_selection: cfg.model_selection,
            };
            let (m, log) = egbad::train_egbad(&protocol.train_normals, eval, &ecfg, &mut rng)?;
            Ok((TrainedModel::Egbad(m), log))
        }
        ModelKind::Ganomaly => {
            let gcfg = GanomalyConfig {
                adv_kind: cfg.train_loss,
                weights: GanomalyWeights {
                    adv: cfg.w_adv,
                    con: cfg.w_con,
                    enc: cfg.w_enc,
                },
                opts: train_opts(cfg),
                model_selection: cfg.model_selection,
                score: LatentScore::SquaredL2,
            };
            let (m, log) = ganomaly::train_ganomaly(&protocol.train_normals, eval, &gcfg, &mut rng)?;
            Ok((TrainedModel::Ganomaly(m), log))
        }
    }
}

/// Scores a dataset with a trained model under the config's test variant.
pub fn score_with(
    model: &TrainedModel,
    cfg: &ExperimentConfig,
    ds: &LabeledDataset,
) -> Result<Vec<f64>> {
    match model {
        TrainedModel::Anogan { g, d } => {
            let acfg = AnoganConfig {
                gamma_steps: cfg.gamma_steps,
                search_lr: cfg.search_lr,
                lambda: cfg.lambda,
                d_loss_kind: cfg.test_score,
                restarts: cfg.restarts,
            };
            // scoring stream is separated from the training stream
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5c0_7e5);
            anogan::score_dataset(g, d, ds, &acfg, &mut rng)
        }
        TrainedModel::Egbad(m) => egbad::score_dataset(m, ds, cfg.test_score, cfg.lambda),
        TrainedModel::Ganomaly(m) => ganomaly::score_dataset(m, ds, LatentScore::SquaredL2),
    }
}

fn report_for(
    cfg: &ExperimentConfig,
    model: &TrainedModel,
    protocol: &Protocol,
    raw: &RawDataset,
    train_seconds: f64,
) -> ScoreReport {
    let started = Instant::now();
    let scoring_set: LabeledDataset;
    let target = if cfg.test_on_all {
        scoring_set = protocol.whole_dataset(raw, cfg.anomaly_class);
        &scoring_set
    } else {
        &protocol.test
    };

    let result = (|| -> Result<ScoreReport> {
        let scores = score_with(model, cfg, target)?;
        let auprc = auprc_of(&scores, &target.labels)?;
        let (scaled, _) = ganomaly::scale_scores(&scores);
        // operating threshold from the eval split's base rate when it has
        // both classes, else from the scored split itself
        let base_rate = if protocol.eval.n > 0 && protocol.eval.anomaly_rate() > 0.0 {
            protocol.eval.anomaly_rate()
        } else {
            target.anomaly_rate()
        };
        let point = prf_at_threshold(
            &scores,
            &target.labels,
            ThresholdPolicy::BaseRateQuantile { base_rate },
        )?;
        Ok(ScoreReport {
            config: cfg.clone(),
            scores,
            scaled_scores: scaled,
            auprc,
            precision: point.precision,
            recall: point.recall,
            f1: point.f1,
            threshold: point.threshold,
            seconds: train_seconds + started.elapsed().as_secs_f64(),
            seed: cfg.seed,
            error: None,
        })
    })();

    match result {
        Ok(report) => report,
        Err(e) => ScoreReport::failed(cfg.clone(), cfg.seed, e.to_string()),
    }
}

/// Runs a single configuration end to end against an already-loaded raw
/// dataset. Failures land in the report instead of propagating.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    raw: &RawDataset,
    out_dir: Option<&Path>,
) -> ScoreReport {
    let items = run_group(cfg, std::slice::from_ref(cfg), raw, out_dir);
    items.into_iter().next().expect("one cell in, one report out")
}

/// Trains once and scores every cell (the cells must share `train_key`).
fn run_group(
    train_cfg: &ExperimentConfig,
    cells: &[ExperimentConfig],
    raw: &RawDataset,
    out_dir: Option<&Path>,
) -> Vec<ScoreReport> {
    let started = Instant::now();
    let protocol = match data::make_protocol(
        raw,
        train_cfg.anomaly_class,
        SplitSpec::new(train_cfg.seed),
        train_cfg.limit,
    ) {
        Ok(p) => p,
        Err(e) => {
            return cells
                .iter()
                .map(|c| ScoreReport::failed(c.clone(), c.seed, e.to_string()))
                .collect()
        }
    };

    let (model, selection_log) = match train_model(train_cfg, &protocol) {
        Ok(x) => x,
        Err(e) => {
            return cells
                .iter()
                .map(|c| ScoreReport::failed(c.clone(), c.seed, e.to_string()))
                .collect()
        }
    };
    let train_seconds = started.elapsed().as_secs_f64();

    if let Some(out) = out_dir {
        let dir = out.join(train_cfg.train_key());
        if let Err(e) = persist_training(&model, train_cfg, &selection_log, &dir) {
            log::warn!("failed to persist checkpoint under {}: {e}", dir.display());
        }
    }

    cells
        .iter()
        .map(|cell| report_for(cell, &model, &protocol, raw, train_seconds))
        .collect()
}

fn persist_training(
    model: &TrainedModel,
    cfg: &ExperimentConfig,
    selection_log: &[SelectionRow],
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    model.save(dir)?;
    std::fs::write(dir.join("config.txt"), cfg.to_kv())?;
    if !selection_log.is_empty() {
        write_selection_log(&dir.join("selection_log.csv"), selection_log)?;
    }
    Ok(())
}

/// Loads raw datasets at most once per sweep.
pub struct DataCache {
    dir: PathBuf,
    map: Mutex<HashMap<DatasetId, Arc<RawDataset>>>,
}

impl DataCache {
    pub fn new(dir: &Path) -> DataCache {
        DataCache {
            dir: dir.to_path_buf(),
            map: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, id: DatasetId) -> Result<Arc<RawDataset>> {
        {
            let map = self.map.lock().expect("cache lock");
            if let Some(ds) = map.get(&id) {
                return Ok(Arc::clone(ds));
            }
        }
        // load outside the lock; a duplicate load on a race is harmless
        let loaded = Arc::new(data::load_named(id.as_str(), &self.dir)?);
        let mut map = self.map.lock().expect("cache lock");
        Ok(Arc::clone(map.entry(id).or_insert(loaded)))
    }
}

struct WorkItem {
    train_cfg: ExperimentConfig,
    cells: Vec<(usize, ExperimentConfig)>,
}

/// Groups configs that share a training (same `train_key`), preserving first
/// appearance order.
fn group_work(configs: &[ExperimentConfig]) -> Vec<WorkItem> {
    let mut items: Vec<WorkItem> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, cfg) in configs.iter().enumerate() {
        let key = cfg.train_key();
        match index.get(&key) {
            Some(&slot) => items[slot].cells.push((i, cfg.clone())),
            None => {
                index.insert(key, items.len());
                items.push(WorkItem {
                    train_cfg: cfg.clone(),
                    cells: vec![(i, cfg.clone())],
                });
            }
        }
    }
    items
}

/// Executes every config, training once per `(train_key)` group and scoring
/// each cell. Work items run in parallel up to `workers`; reports come back
/// in the order of `configs` regardless of scheduling. A config failure is
/// recorded in its report and does not abort the sweep.
pub fn run_sweep(
    configs: &[ExperimentConfig],
    cache: &DataCache,
    out_dir: Option<&Path>,
    workers: usize,
) -> Vec<ScoreReport> {
    let items = group_work(configs);
    let workers = workers.clamp(1, items.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ScoreReport>>> = Mutex::new(vec![None; configs.len()]);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let item = &items[i];
                let cell_cfgs: Vec<ExperimentConfig> =
                    item.cells.iter().map(|(_, c)| c.clone()).collect();
                let reports = match cache.get(item.train_cfg.dataset) {
                    Ok(raw) => run_group(&item.train_cfg, &cell_cfgs, &raw, out_dir),
                    Err(e) => cell_cfgs
                        .iter()
                        .map(|c| ScoreReport::failed(c.clone(), c.seed, e.to_string()))
                        .collect(),
                };
                let mut slots = slots.lock().expect("slot lock");
                for ((orig_idx, _), report) in item.cells.iter().zip(reports) {
                    slots[*orig_idx] = Some(report);
                }
            });
        }
    });

    slots
        .into_inner()
        .expect("slot lock")
        .into_iter()
        .map(|r| r.expect("every config produced a report"))
        .collect()
}

impl Clone for WorkItem {
    fn clone(&self) -> Self {
        WorkItem {
            train_cfg: self.train_cfg.clone(),
            cells: self.cells.clone(),
        }
    }
}

// ── sweep grids ──────────────────────────────────────────────────────

/// The 8-cell BiGAN table for one anomaly class: 4 trainings
/// (bce/fm × residual on/off), each scored with both test variants.
pub fn egbad_grid(base: &ExperimentConfig, anomaly_class: u32) -> Vec<ExperimentConfig> {
    let mut out = Vec::with_capacity(8);
    for &train_loss in &[AdvLossKind::Bce, AdvLossKind::FeatureMatching] {
        for &residual in &[true, false] {
            for &test_score in &[AdvLossKind::Bce, AdvLossKind::FeatureMatching] {
                let mut cfg = base.clone();
                cfg.model = ModelKind::Egbad;
                cfg.anomaly_class = anomaly_class;
                cfg.train_loss = train_loss;
                cfg.residual = residual;
                cfg.test_score = test_score;
                out.push(cfg);
            }
        }
    }
    out
}

/// The GANomaly table for one class: 2 trainings (bce/fm), one latent-score
/// cell each.
pub fn ganomaly_grid(base: &ExperimentConfig, anomaly_class: u32) -> Vec<ExperimentConfig> {
    [AdvLossKind::Bce, AdvLossKind::FeatureMatching]
        .iter()
        .map(|&train_loss| {
            let mut cfg = base.clone();
            cfg.model = ModelKind::Ganomaly;
            cfg.anomaly_class = anomaly_class;
            cfg.train_loss = train_loss;
            cfg.residual = false;
            out_latent(&mut cfg);
            cfg
        })
        .collect()
}

fn out_latent(cfg: &mut ExperimentConfig) {
    // the latent score ignores the test variant; pin it so grouped cells
    // stay unique
    cfg.test_score = AdvLossKind::FeatureMatching;
}

/// Full grid for a dataset: per class, per model, its table cells. Seeds are
/// derived per training from the master seed.
pub fn build_grid(
    base: &ExperimentConfig,
    classes: &[u32],
    models: &[ModelKind],
    master_seed: u64,
) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for &class in classes {
        for &model in models {
            let cells = match model {
                ModelKind::Egbad => egbad_grid(base, class),
                ModelKind::Ganomaly => ganomaly_grid(base, class),
                ModelKind::Anogan => {
                    let mut cfg = base.clone();
                    cfg.model = ModelKind::Anogan;
                    cfg.anomaly_class = class;
                    vec![cfg]
                }
            };
            for mut cfg in cells {
                cfg.seed = derive_seed(master_seed, &cfg.train_key());
                out.push(cfg);
            }
        }
    }
    out
}

// ── persistence ──────────────────────────────────────────────────────

pub fn write_results_csv(reports: &[ScoreReport], path: &Path, no_timing: bool) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{RESULTS_HEADER}")?;
    for report in reports {
        writeln!(f, "{}", report.csv_row(no_timing))?;
    }
    Ok(())
}

/// One row of the per-class best table (the "best result between different
/// types of training" view).
#[derive(Clone, Debug, PartialEq)]
pub struct BestRow {
    pub dataset: String,
    pub anomaly_class: u32,
    pub model: String,
    pub auprc: f64,
    pub train_loss: String,
    pub residual: bool,
    pub test_score: String,
}

/// Best cell per (dataset, anomaly class, model), by AUPRC. Failed reports
/// are skipped.
pub fn best_by_class(reports: &[ScoreReport]) -> Vec<BestRow> {
    let mut best: Vec<BestRow> = Vec::new();
    for r in reports {
        if r.error.is_some() || r.auprc.is_nan() {
            continue;
        }
        let key = (
            r.config.dataset.as_str().to_string(),
            r.config.anomaly_class,
            r.config.model.as_str().to_string(),
        );
        match best
            .iter_mut()
            .find(|b| (b.dataset.clone(), b.anomaly_class, b.model.clone()) == key)
        {
            Some(row) => {
                if r.auprc > row.auprc {
                    *row = best_row_of(r);
                }
            }
            None => best.push(best_row_of(r)),
        }
    }
    best
}

fn best_row_of(r: &ScoreReport) -> BestRow {
    BestRow {
        dataset: r.config.dataset.as_str().to_string(),
        anomaly_class: r.config.anomaly_class,
        model: r.config.model.as_str().to_string(),
        auprc: r.auprc,
        train_loss: r.config.train_loss.as_str().to_string(),
        residual: r.config.residual,
        test_score: r.test_score_label().to_string(),
    }
}

pub fn write_best_csv(rows: &[BestRow], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "dataset,anomaly_class,model,auprc,train_loss,residual,test_score")?;
    for row in rows {
        writeln!(
            f,
            "{},{},{},{:.6},{},{},{}",
            row.dataset,
            row.anomaly_class,
            row.model,
            row.auprc,
            row.train_loss,
            row.residual as u8,
            row.test_score
        )?;
    }
    Ok(())
}

/// Minimal reader for `results.csv` (used by the report view).
pub fn read_results_csv(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RESULTS_HEADER => {}
        _ => return Err(Error::data(format!("{}: unexpected header", path.display()))),
    }
    Ok(lines
        .map(|l| l.split(',').map(|s| s.to_string()).collect())
        .collect())
}
