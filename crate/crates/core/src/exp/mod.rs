//! Experiment orchestration: JSON-configured multi-seed runs with one output
//! directory per seed, a manifest that pins everything needed to re-run, and
//! median/IQR aggregation across seeds.
//!
//! Layout per run:
//! `out_dir/{manifest.json, summary.json, seed-<s>/{metrics.csv, samples-<step>.csv,
//! checkpoint.bin, snapshots/*.ppm}}` (EM seeds write `model.json` instead of
//! a checkpoint; AAE seeds add `codes-<step>.csv`).

mod checkpoint;
mod csvlog;
mod ppm;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use csvlog::{write_metrics_csv, write_point_cloud_csv};
pub use ppm::{scatter_raster, write_scatter_ppm, RASTER_SIZE};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{make_dataset, Dataset, DatasetSpec};
use crate::dist::dirac_penalty;
use crate::em::{em_fit, EmConfig};
use crate::error::{Error, Result};
use crate::gan::{GanModel, GanTrainConfig, GanTrainer};
use crate::metrics::{kl_histogram, mode_coverage, HistogramEstimator};
use crate::nn::OptimSpec;
use crate::rng::{stream, Stream};
use crate::trainlog::TrainLog;
use crate::vae::{vae_train, VaeModel, VaeTrainConfig};
use crate::variants::{AaeModel, AliModel, AliVariant, VariantModel, VariantTrainConfig, VariantTrainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Em,
    Vae,
    Gan,
    GanReg,
    Aae,
    Ali,
}

/// One experiment: a model, a dataset, seeds, and a model-specific train
/// block (validated against the model kind when the run starts).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub dataset: DatasetSpec,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    #[serde(default = "default_eval_interval")]
    pub eval_interval: u64,
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
    #[serde(default)]
    pub dump_ppm: bool,
    /// For `gan-reg`: also run a `lambda = 0` arm on the same seeds and emit
    /// a paired mode-coverage table.
    #[serde(default)]
    pub paired_baseline: bool,
    #[serde(default)]
    pub train: serde_json::Value,
}

fn default_eval_interval() -> u64 {
    500
}
fn default_eval_samples() -> usize {
    4096
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("experiment config: {}", e)))
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {}", path.display(), e)))?;
        ExperimentConfig::from_json(&text)
    }

    /// Applies a `dotted.path=json_value` override to the raw config tree.
    pub fn apply_override(value: &mut serde_json::Value, assignment: &str) -> Result<()> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {:?} is not path=value", assignment)))?;
        let parsed: serde_json::Value =
            serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let mut cur = value;
        let parts: Vec<&str> = path.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            if !cur.is_object() {
                return Err(Error::Config(format!("override path {:?} hits a non-object", path)));
            }
            let map = cur.as_object_mut().unwrap();
            if i + 1 == parts.len() {
                map.insert(part.to_string(), parsed);
                return Ok(());
            }
            cur = map.entry(part.to_string()).or_insert_with(|| serde_json::json!({}));
        }
        unreachable!("empty override path")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list must be non-empty".into()));
        }
        self.dataset.validate()?;
        if self.eval_interval == 0 || self.eval_samples == 0 {
            return Err(Error::Config("eval interval and sample count must be >= 1".into()));
        }
        if self.paired_baseline && self.model != ModelKind::GanReg {
            return Err(Error::Config("paired_baseline only applies to gan-reg".into()));
        }
        // the train block must parse for this model kind before any seed runs
        match self.model {
            ModelKind::Em => block::<EmBlock>(self, "em").map(|_| ())?,
            ModelKind::Vae => block::<VaeBlock>(self, "vae").map(|_| ())?,
            ModelKind::Gan | ModelKind::GanReg => block::<GanBlock>(self, "gan").map(|_| ())?,
            ModelKind::Aae | ModelKind::Ali => block::<VariantBlock>(self, "variant").map(|_| ())?,
        }
        Ok(())
    }
}

fn block<T: for<'de> Deserialize<'de>>(cfg: &ExperimentConfig, what: &str) -> Result<T> {
    serde_json::from_value(cfg.train.clone())
        .map_err(|e| Error::Config(format!("{} train block: {}", what, e)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmBlock {
    pub k: usize,
    #[serde(default = "d_max_iters")]
    pub max_iters: usize,
    #[serde(default = "d_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "d_var_floor")]
    pub var_floor: f64,
}
fn d_max_iters() -> usize {
    500
}
fn d_rel_tol() -> f64 {
    1e-8
}
fn d_var_floor() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeBlock {
    #[serde(default = "d_latent")]
    pub latent_dim: usize,
    #[serde(default = "d_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub dec_log_var: f64,
    #[serde(default = "d_steps_vae")]
    pub steps: u64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_eval_batch")]
    pub eval_batch: usize,
}
fn d_latent() -> usize {
    2
}
fn d_hidden() -> Vec<usize> {
    vec![32, 32]
}
fn d_steps_vae() -> u64 {
    2000
}
fn d_batch() -> usize {
    128
}
fn d_lr() -> f64 {
    1e-3
}
fn d_eval_batch() -> usize {
    512
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanBlock {
    #[serde(default = "d_latent")]
    pub latent_dim: usize,
    #[serde(default = "d_hidden")]
    pub gen_hidden: Vec<usize>,
    #[serde(default = "d_hidden")]
    pub disc_hidden: Vec<usize>,
    /// Used by `gan-reg`; the plain `gan` model trains with lambda = 0.
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_one")]
    pub d_steps: usize,
    #[serde(default = "d_one")]
    pub g_steps: usize,
    #[serde(default = "d_lag")]
    pub snapshot_lag: usize,
    #[serde(default = "d_half")]
    pub p1: f64,
    #[serde(default = "d_periods")]
    pub periods: u64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
}
fn d_lambda() -> f64 {
    0.5
}
fn d_one() -> usize {
    1
}
fn d_lag() -> usize {
    5
}
fn d_half() -> f64 {
    0.5
}
fn d_periods() -> u64 {
    2000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantBlock {
    #[serde(default = "d_latent")]
    pub latent_dim: usize,
    #[serde(default = "d_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "d_one")]
    pub d_steps: usize,
    #[serde(default = "d_one")]
    pub g_steps: usize,
    #[serde(default = "d_lambda_rec")]
    pub lambda_rec: f64,
    #[serde(default = "d_variant")]
    pub variant: AliVariant,
    #[serde(default)]
    pub analytic_kl: bool,
    #[serde(default = "d_lag")]
    pub snapshot_lag: usize,
    #[serde(default = "d_periods")]
    pub periods: u64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
}
fn d_lambda_rec() -> f64 {
    1.0
}
fn d_variant() -> AliVariant {
    AliVariant::Paper
}

/// One seed's outcome inside a run summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub status: String,
    pub final_metrics: BTreeMap<String, f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub median: f64,
    pub iqr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedRow {
    pub seed: u64,
    pub coverage_reg: f64,
    pub coverage_unreg: f64,
    pub kl_reg: f64,
    pub kl_unreg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedSummary {
    pub rows: Vec<PairedRow>,
    pub median_coverage_reg: f64,
    pub median_coverage_unreg: f64,
    pub all_modes_reg: usize,
    pub all_modes_unreg: usize,
    pub total_modes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub per_seed: Vec<SeedOutcome>,
    pub aggregate: BTreeMap<String, MetricAggregate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paired: Option<PairedSummary>,
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn iqr(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile(&v, 0.75) - quantile(&v, 0.25)
}

fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let canon = serde_json::to_vec(cfg)?;
    let mut h = Sha256::new();
    h.update(&canon);
    Ok(format!("{:x}", h.finalize()))
}

fn final_metrics_of(log: &TrainLog) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    if let Some(last) = log.last() {
        for (c, v) in log.columns().iter().zip(&last.values) {
            out.insert((*c).to_string(), *v);
        }
    }
    out
}

/// Histogram estimator over the dataset's padded bounding box.
pub fn dataset_estimator(ds: &Dataset, bins: usize) -> Result<HistogramEstimator> {
    let bounds = ds.bounds(0.25);
    HistogramEstimator::new(&bounds, &vec![bins; bounds.len()], 0.5)
}

struct SeedRun {
    log: TrainLog,
    extra: BTreeMap<String, f64>,
}

fn dump_new_rows(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    seed_dir: &Path,
    seen: &mut usize,
    log: &TrainLog,
    ckpt: &Checkpoint,
    seed: u64,
) -> Result<()> {
    while *seen < log.rows().len() {
        let row = &log.rows()[*seen];
        *seen += 1;
        let mut eval_rng = stream(seed, Stream::Eval);
        let samples = match ckpt {
            Checkpoint::Gan(m) => m.sample(cfg.eval_samples, &mut eval_rng),
            Checkpoint::Aae(m) => m.sample(cfg.eval_samples, &mut eval_rng),
            Checkpoint::Ali(m) => m.sample(cfg.eval_samples, &mut eval_rng),
            Checkpoint::Vae(m) => m.sample(cfg.eval_samples, &mut eval_rng),
        };
        write_point_cloud_csv(&seed_dir.join(format!("samples-{}.csv", row.step)), &samples)?;
        if let Checkpoint::Aae(m) = ckpt {
            let codes = m.encoder.forward(&ds.samples)?;
            write_point_cloud_csv(&seed_dir.join(format!("codes-{}.csv", row.step)), &codes)?;
        }
        if cfg.dump_ppm {
            let snaps = seed_dir.join("snapshots");
            std::fs::create_dir_all(&snaps)?;
            let bounds = ds.bounds(0.25);
            write_scatter_ppm(&snaps.join(format!("samples-{}.ppm", row.step)), &samples, &bounds)?;
        }
    }
    Ok(())
}

fn run_one_seed(cfg: &ExperimentConfig, ds: &Dataset, seed: u64, seed_dir: &Path) -> Result<SeedRun> {
    std::fs::create_dir_all(seed_dir)?;
    match cfg.model {
        ModelKind::Em => {
            let b: EmBlock = block(cfg, "em")?;
            let em_cfg = EmConfig {
                k: b.k,
                max_iters: b.max_iters,
                rel_tol: b.rel_tol,
                var_floor: b.var_floor,
                seed,
            };
            let fit = em_fit(&ds.samples, &em_cfg)?;
            let mut log = TrainLog::with_step_name("iteration", vec!["loglik"]);
            for (i, ll) in fit.loglik_history.iter().enumerate() {
                log.push(i as u64 + 1, vec![*ll])?;
            }
            write_metrics_csv(&seed_dir.join("metrics.csv"), &log)?;
            fit.model.save(&seed_dir.join("model.json"))?;
            let mut extra = BTreeMap::new();
            extra.insert("iterations".to_string(), fit.iterations as f64);
            Ok(SeedRun { log, extra })
        }
        ModelKind::Vae => {
            let b: VaeBlock = block(cfg, "vae")?;
            let d = ds.samples.shape()[1];
            let mut init_rng = stream(seed, Stream::Init);
            let mut model = VaeModel::new_random(d, b.latent_dim, &b.hidden, b.dec_log_var, &mut init_rng);
            let t_cfg = VaeTrainConfig {
                steps: b.steps,
                batch_size: b.batch_size,
                optim: OptimSpec::adam(b.lr),
                seed,
                eval_interval: cfg.eval_interval,
                eval_batch: b.eval_batch,
            };
            let log = vae_train(&mut model, &ds.samples, &t_cfg)?;
            write_metrics_csv(&seed_dir.join("metrics.csv"), &log)?;
            save_checkpoint(&seed_dir.join("checkpoint.bin"), &Checkpoint::Vae(model))?;
            Ok(SeedRun { log, extra: BTreeMap::new() })
        }
        ModelKind::Gan | ModelKind::GanReg => {
            let b: GanBlock = block(cfg, "gan")?;
            let lambda = if cfg.model == ModelKind::Gan { 0.0 } else { b.lambda };
            run_gan_arm(cfg, ds, seed, seed_dir, &b, lambda)
        }
        ModelKind::Aae | ModelKind::Ali => {
            let b: VariantBlock = block(cfg, "variant")?;
            let d = ds.samples.shape()[1];
            let mut init_rng = stream(seed, Stream::Init);
            let model = match cfg.model {
                ModelKind::Aae => VariantModel::Aae(AaeModel::new_random(d, b.latent_dim, &b.hidden, &mut init_rng)),
                _ => VariantModel::Ali(AliModel::new_random(d, b.latent_dim, &b.hidden, &mut init_rng)),
            };
            let t_cfg = VariantTrainConfig {
                d_steps: b.d_steps,
                g_steps: b.g_steps,
                lambda_rec: b.lambda_rec,
                variant: b.variant,
                analytic_kl: b.analytic_kl,
                snapshot_lag: b.snapshot_lag,
                optim: OptimSpec::adam(b.lr),
                seed,
                periods: b.periods,
                batch_size: b.batch_size,
                eval_interval: cfg.eval_interval,
                eval_samples: cfg.eval_samples,
            };
            let mut trainer = VariantTrainer::new(
                model,
                &ds.samples,
                ds.mode_spec(),
                Some(dataset_estimator(ds, 50)?),
                t_cfg.clone(),
            )?;
            let mut seen = 0usize;
            let snapshot_ckpt = |m: &VariantModel| match m {
                VariantModel::Aae(m) => Checkpoint::Aae(m.clone()),
                VariantModel::Ali(m) => Checkpoint::Ali(m.clone()),
            };
            for _ in 0..t_cfg.periods {
                trainer.step_period()?;
                let ck = snapshot_ckpt(trainer.model());
                dump_new_rows(cfg, ds, seed_dir, &mut seen, trainer.log(), &ck, seed)?;
            }
            let log = trainer.log().clone();
            write_metrics_csv(&seed_dir.join("metrics.csv"), &log)?;
            save_checkpoint(&seed_dir.join("checkpoint.bin"), &snapshot_ckpt(trainer.model()))?;
            Ok(SeedRun { log, extra: BTreeMap::new() })
        }
    }
}

fn run_gan_arm(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    seed: u64,
    seed_dir: &Path,
    b: &GanBlock,
    lambda: f64,
) -> Result<SeedRun> {
    std::fs::create_dir_all(seed_dir)?;
    let d = ds.samples.shape()[1];
    let mut init_rng = stream(seed, Stream::Init);
    let model = GanModel::new_random(d, b.latent_dim, &b.gen_hidden, &b.disc_hidden, &mut init_rng);
    let t_cfg = GanTrainConfig {
        lambda,
        d_steps: b.d_steps,
        g_steps: b.g_steps,
        snapshot_lag: b.snapshot_lag,
        p1: b.p1,
        optim: OptimSpec::adam(b.lr),
        seed,
        periods: b.periods,
        batch_size: b.batch_size,
        eval_interval: cfg.eval_interval,
        eval_samples: cfg.eval_samples,
    };
    let mut trainer = GanTrainer::new(
        model,
        &ds.samples,
        ds.mode_spec(),
        Some(dataset_estimator(ds, 50)?),
        t_cfg.clone(),
    )?;
    let mut seen = 0usize;
    for _ in 0..t_cfg.periods {
        trainer.step_period()?;
        let ck = Checkpoint::Gan(trainer.model().clone());
        dump_new_rows(cfg, ds, seed_dir, &mut seen, trainer.log(), &ck, seed)?;
    }
    let log = trainer.log().clone();
    write_metrics_csv(&seed_dir.join("metrics.csv"), &log)?;
    save_checkpoint(&seed_dir.join("checkpoint.bin"), &Checkpoint::Gan(trainer.model().clone()))?;
    Ok(SeedRun { log, extra: BTreeMap::new() })
}

/// Runs every seed (in parallel), aggregates final metrics, and writes
/// `manifest.json` and `summary.json`. A seed that aborts is recorded and
/// does not stop the others.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::Config(format!("cannot create output dir {}: {}", cfg.out_dir.display(), e)))?;
    let ds = make_dataset(&cfg.dataset)?;

    let manifest = serde_json::json!({
        "config": cfg,
        "config_hash": config_hash(cfg)?,
        "version": env!("CARGO_PKG_VERSION"),
        "seeds": cfg.seeds,
    });
    std::fs::write(cfg.out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;

    let outcomes: Vec<(SeedOutcome, Option<SeedRun>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let t0 = std::time::Instant::now();
            let seed_dir = cfg.out_dir.join(format!("seed-{}", seed));
            match run_one_seed(cfg, &ds, seed, &seed_dir) {
                Ok(run) => {
                    let mut m = final_metrics_of(&run.log);
                    m.extend(run.extra.clone());
                    (
                        SeedOutcome {
                            seed,
                            status: "ok".to_string(),
                            final_metrics: m,
                            wall_time_s: t0.elapsed().as_secs_f64(),
                        },
                        Some(run),
                    )
                }
                Err(e) => (
                    SeedOutcome {
                        seed,
                        status: format!("aborted: {}", e),
                        final_metrics: BTreeMap::new(),
                        wall_time_s: t0.elapsed().as_secs_f64(),
                    },
                    None,
                ),
            }
        })
        .collect();

    let mut aggregate: BTreeMap<String, MetricAggregate> = BTreeMap::new();
    let metric_names: Vec<String> = outcomes
        .iter()
        .filter(|(o, _)| o.status == "ok")
        .flat_map(|(o, _)| o.final_metrics.keys().cloned())
        .collect();
    for name in metric_names {
        if aggregate.contains_key(&name) {
            continue;
        }
        let values: Vec<f64> = outcomes
            .iter()
            .filter(|(o, _)| o.status == "ok")
            .filter_map(|(o, _)| o.final_metrics.get(&name).copied())
            .collect();
        if !values.is_empty() {
            aggregate.insert(name, MetricAggregate { median: median(&values), iqr: iqr(&values) });
        }
    }

    let paired = if cfg.model == ModelKind::GanReg && cfg.paired_baseline {
        Some(run_paired_baseline(cfg, &ds, &outcomes)?)
    } else {
        None
    };

    let summary = RunSummary {
        per_seed: outcomes.into_iter().map(|(o, _)| o).collect(),
        aggregate,
        paired,
    };
    std::fs::write(cfg.out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

fn run_paired_baseline(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    reg_outcomes: &[(SeedOutcome, Option<SeedRun>)],
) -> Result<PairedSummary> {
    let b: GanBlock = block(cfg, "gan")?;
    let base_dir = cfg.out_dir.join("pair-lambda0");
    let unreg: Vec<(u64, BTreeMap<String, f64>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let seed_dir = base_dir.join(format!("seed-{}", seed));
            let run = run_gan_arm(cfg, ds, seed, &seed_dir, &b, 0.0)?;
            Ok((seed, final_metrics_of(&run.log)))
        })
        .collect::<Result<Vec<_>>>()?;

    let total_modes = ds.mode_spec().map(|m| m.k()).unwrap_or(0);
    let mut rows = Vec::new();
    for ((out, _), (seed_u, m_u)) in reg_outcomes.iter().zip(&unreg) {
        assert_eq!(out.seed, *seed_u);
        rows.push(PairedRow {
            seed: out.seed,
            coverage_reg: out.final_metrics.get("mode_coverage").copied().unwrap_or(f64::NAN),
            coverage_unreg: m_u.get("mode_coverage").copied().unwrap_or(f64::NAN),
            kl_reg: out.final_metrics.get("kl_est").copied().unwrap_or(f64::NAN),
            kl_unreg: m_u.get("kl_est").copied().unwrap_or(f64::NAN),
        });
    }

    // paired table as CSV
    let mut text = String::from("seed,coverage_reg,coverage_unreg,kl_reg,kl_unreg\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.seed, r.coverage_reg, r.coverage_unreg, r.kl_reg, r.kl_unreg
        ));
    }
    std::fs::write(cfg.out_dir.join("pair_table.csv"), text)?;

    let cov_reg: Vec<f64> = rows.iter().map(|r| r.coverage_reg).collect();
    let cov_unreg: Vec<f64> = rows.iter().map(|r| r.coverage_unreg).collect();
    Ok(PairedSummary {
        median_coverage_reg: median(&cov_reg),
        median_coverage_unreg: median(&cov_unreg),
        all_modes_reg: cov_reg.iter().filter(|&&c| c as usize == total_modes).count(),
        all_modes_unreg: cov_unreg.iter().filter(|&&c| c as usize == total_modes).count(),
        total_modes,
        rows,
    })
}

/// Metrics of a checkpoint against a dataset: histogram KL of `n` generated
/// samples against the data, mode coverage where the dataset has known
/// modes, and reconstruction error for models with an encoder/decoder pair.
pub fn eval_checkpoint(
    ckpt: &Checkpoint,
    ds: &Dataset,
    n: usize,
    seed: u64,
) -> Result<BTreeMap<String, f64>> {
    let mut rng = stream(seed, Stream::Eval);
    let samples = match ckpt {
        Checkpoint::Vae(m) => m.sample(n, &mut rng),
        Checkpoint::Gan(m) => m.sample(n, &mut rng),
        Checkpoint::Aae(m) => m.sample(n, &mut rng),
        Checkpoint::Ali(m) => m.sample(n, &mut rng),
    };
    let mut out = BTreeMap::new();
    let est = dataset_estimator(ds, 50)?;
    out.insert("kl_est".to_string(), kl_histogram(&ds.samples, &samples, &est)?);
    if let Some(ms) = ds.mode_spec() {
        let cov = mode_coverage(&samples, &ms);
        out.insert("mode_coverage".to_string(), cov.modes_covered as f64);
        out.insert("captured_fraction".to_string(), cov.captured_fraction);
    }
    match ckpt {
        Checkpoint::Aae(m) => {
            let codes = m.encoder.forward(&ds.samples)?;
            let recon = m.decoder.forward(&codes)?;
            out.insert("recon_err".to_string(), dirac_penalty(&ds.samples, &recon)?);
        }
        Checkpoint::Vae(m) => {
            let enc_out = m.encoder.forward(&ds.samples)?;
            let (rows, _) = enc_out.as_matrix()?;
            let dz = m.latent_dim;
            let mut mu = Vec::with_capacity(rows * dz);
            for r in 0..rows {
                mu.extend_from_slice(&enc_out.row(r)[..dz]);
            }
            let recon = m.decoder.forward(&crate::nn::Tensor::new(vec![rows, dz], mu))?;
            out.insert("recon_err".to_string(), dirac_penalty(&ds.samples, &recon)?);
        }
        _ => {}
    }
    Ok(out)
}

/// Randomized sweep of the joint-vs-marginal KL bound on Dirichlet-drawn
/// 4x4 joints. Returns `(holds, trials)`.
pub fn bounds_sweep(trials: usize, seed: u64) -> (usize, usize) {
    let mut rng = stream(seed, Stream::Probe);
    let mut holds = 0;
    for _ in 0..trials {
        let p = crate::metrics::DiscreteJoint::random_dirichlet(4, 4, &mut rng);
        let q = crate::metrics::DiscreteJoint::random_dirichlet(4, 4, &mut rng);
        if crate::metrics::joint_bound_check(&p, &q).expect("valid joints").holds {
            holds += 1;
        }
    }
    (holds, trials)
}

/// Taylor probe configured for a dataset-scale generator; see the CLI.
pub fn probe_generator(
    generator: &crate::nn::Mlp,
    ds: &Dataset,
    epsilons: &[f64],
    samples: usize,
    directions: usize,
    bins: usize,
    seed: u64,
) -> Result<Vec<crate::metrics::TaylorProbe>> {
    let est = dataset_estimator(ds, bins)?;
    let mut rng = stream(seed, Stream::Probe);
    let mut out = Vec::with_capacity(directions);
    for _ in 0..directions {
        let dir = crate::metrics::random_unit_direction(generator, &mut rng);
        out.push(crate::metrics::taylor_scaling_probe(
            generator, &dir, epsilons, samples, &est, &mut rng,
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetKind;

    fn em_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            model: ModelKind::Em,
            dataset: DatasetSpec::new(DatasetKind::Ring8, 200, 0.05, 3),
            seeds: vec![1, 2],
            out_dir: dir.to_path_buf(),
            eval_interval: 500,
            eval_samples: 256,
            dump_ppm: false,
            paired_baseline: false,
            train: serde_json::json!({"k": 8, "max_iters": 50}),
        }
    }

    #[test]
    fn em_experiment_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = em_config(dir.path());
        let summary = run_experiment(&cfg).unwrap();
        assert_eq!(summary.per_seed.len(), 2);
        assert!(summary.per_seed.iter().all(|s| s.status == "ok"));
        assert!(summary.aggregate.contains_key("loglik"));
        for seed in [1u64, 2] {
            let sd = dir.path().join(format!("seed-{}", seed));
            assert!(sd.join("metrics.csv").exists());
            assert!(sd.join("model.json").exists());
            let text = std::fs::read_to_string(sd.join("metrics.csv")).unwrap();
            assert!(text.starts_with("iteration,loglik\n"));
            crate::dist::GmmModel::load(&sd.join("model.json")).unwrap();
        }
        assert!(dir.path().join("manifest.json").exists());
        assert!(dir.path().join("summary.json").exists());
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert!(manifest.get("config_hash").is_some());
        assert_eq!(manifest["seeds"], serde_json::json!([1, 2]));
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = em_config(dir.path());
        cfg.seeds.clear();
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn aborted_seed_leaves_others_intact() {
        // a huge learning rate reliably blows up the VAE
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            model: ModelKind::Vae,
            dataset: DatasetSpec::new(DatasetKind::Ring8, 128, 0.05, 3),
            seeds: vec![1, 2],
            out_dir: dir.path().to_path_buf(),
            eval_interval: 50,
            eval_samples: 64,
            dump_ppm: false,
            paired_baseline: false,
            train: serde_json::json!({"steps": 400, "batch_size": 16, "lr": 1e14, "hidden": [16]}),
        };
        let summary = run_experiment(&cfg).unwrap();
        assert_eq!(summary.per_seed.len(), 2);
        for s in &summary.per_seed {
            assert!(s.status.starts_with("aborted: training diverged"), "status {}", s.status);
        }
        // both seed directories exist independently; summary written
        assert!(dir.path().join("seed-1").exists());
        assert!(dir.path().join("seed-2").exists());
        assert!(dir.path().join("summary.json").exists());
    }

    #[test]
    fn overrides_apply_by_dotted_path() {
        let mut v = serde_json::json!({
            "model": "em",
            "train": {"k": 3},
        });
        ExperimentConfig::apply_override(&mut v, "train.k=8").unwrap();
        ExperimentConfig::apply_override(&mut v, "dataset.kind=ring8").unwrap();
        ExperimentConfig::apply_override(&mut v, "model=vae").unwrap();
        assert_eq!(v["train"]["k"], serde_json::json!(8));
        assert_eq!(v["dataset"]["kind"], serde_json::json!("ring8"));
        assert_eq!(v["model"], serde_json::json!("vae"));
        assert!(ExperimentConfig::apply_override(&mut v, "no-equals").is_err());
    }

    #[test]
    fn unknown_train_field_gives_clear_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = em_config(dir.path());
        cfg.train = serde_json::json!({"k": 3, "max_itres": 10});
        let err = run_experiment(&cfg).unwrap_err();
        let msg = format!("{}", err);
        assert!(matches!(err, Error::Config(_)));
        assert!(msg.contains("max_itres"), "unhelpful message: {}", msg);
    }

    #[test]
    fn median_and_iqr() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(iqr(&[1.0, 2.0, 3.0, 4.0, 5.0]), 2.0);
    }

    #[test]
    fn bounds_sweep_all_hold() {
        let (holds, trials) = bounds_sweep(200, 7);
        assert_eq!(holds, trials);
    }
}
