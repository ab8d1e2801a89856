//! Command-line front end: train experiments from JSON configs, evaluate
//! checkpoints, run the parameter-perturbation probe, sweep the joint-KL
//! bound, and run a tiny built-in demo.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use vigen::data::{make_dataset, DatasetKind, DatasetSpec};
use vigen::exp::{
    self, bounds_sweep, eval_checkpoint, load_checkpoint, run_experiment, ExperimentConfig,
};
use vigen::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser)]
#[command(name = "vigen", version, about = "Generative models on 2D synthetic data")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment described by a JSON config file.
    Train(TrainArgs),
    /// Metrics of a saved checkpoint against a dataset.
    Eval(EvalArgs),
    /// Diagnostic probes on a checkpoint.
    Probe {
        #[command(subcommand)]
        what: ProbeCmd,
    },
    /// Randomized verification sweeps.
    Check {
        #[command(subcommand)]
        what: CheckCmd,
    },
    /// Tiny built-in end-to-end run.
    Demo(DemoArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Dotted-path overrides, e.g. --set train.lambda=1.0
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DatasetArgs {
    /// Dataset kind: ring8, grid25, spiral, gmm-file, point-file.
    #[arg(long, default_value = "ring8")]
    kind: String,
    #[arg(long, default_value_t = 8000)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Backing file for gmm-file / point-file datasets.
    #[arg(long)]
    path: Option<PathBuf>,
}

impl DatasetArgs {
    fn spec(&self) -> Result<DatasetSpec, Error> {
        let kind = match self.kind.as_str() {
            "ring8" => DatasetKind::Ring8,
            "grid25" => DatasetKind::Grid25,
            "spiral" => DatasetKind::Spiral,
            "gmm-file" => DatasetKind::GmmFile,
            "point-file" => DatasetKind::PointFile,
            other => return Err(Error::Config(format!("unknown dataset kind {:?}", other))),
        };
        Ok(DatasetSpec { kind, n: self.n, noise: self.noise, seed: self.seed, path: self.path.clone() })
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Model checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Generated sample count.
    #[arg(long, default_value_t = 4096)]
    samples: usize,
    #[arg(long, default_value_t = 0, value_name = "SEED")]
    eval_seed: u64,
}

#[derive(Subcommand)]
enum ProbeCmd {
    /// Log-log scaling of the sample-cloud KL under parameter perturbations.
    Taylor(TaylorArgs),
}

#[derive(Args)]
struct TaylorArgs {
    /// Checkpoint holding a deterministic generator (gan, vae, or aae).
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Comma-separated positive, increasing perturbation sizes.
    #[arg(long, default_value = "0.01,0.02,0.04", value_delimiter = ',')]
    epsilons: Vec<f64>,
    #[arg(long, default_value_t = 20000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    directions: usize,
    #[arg(long, default_value_t = 60)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-epsilon estimates of the first direction as CSV.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Full fit summary as JSON.
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CheckCmd {
    /// Verify KL(joint) >= KL(marginal) on random discrete joint pairs.
    Bounds {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct DemoArgs {
    /// Output directory (default: ./vigen-demo).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses and executes `argv` (without the program name), returning the
/// process exit code.
pub fn cli_main<I>(argv: I) -> i32
where
    I: IntoIterator<Item = String>,
{
    let mut full = vec!["vigen".to_string()];
    full.extend(argv);
    let cli = match Cli::try_parse_from(full) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e);
            match e {
                Error::Config(_) => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Train(args) => train(args),
        Cmd::Eval(args) => eval(args),
        Cmd::Probe { what: ProbeCmd::Taylor(args) } => probe_taylor(args),
        Cmd::Check { what: CheckCmd::Bounds { trials, seed } } => check_bounds(trials, seed),
        Cmd::Demo(args) => demo(args),
    }
}

fn train(args: TrainArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read config {}: {}", args.config.display(), e)))?;
    let mut raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("config is not JSON: {}", e)))?;
    for assignment in &args.overrides {
        ExperimentConfig::apply_override(&mut raw, assignment)?;
    }
    let mut cfg: ExperimentConfig = serde_json::from_value(raw)
        .map_err(|e| Error::Config(format!("experiment config: {}", e)))?;
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    let summary = run_experiment(&cfg)?;
    let aborted = summary.per_seed.iter().filter(|s| s.status != "ok").count();
    for s in &summary.per_seed {
        println!("seed {}: {}", s.seed, s.status);
    }
    for (name, agg) in &summary.aggregate {
        println!("{}: median {} iqr {}", name, agg.median, agg.iqr);
    }
    if let Some(p) = &summary.paired {
        println!(
            "paired coverage: reg median {} vs unreg median {} (all-{} runs: {} vs {})",
            p.median_coverage_reg, p.median_coverage_unreg, p.total_modes, p.all_modes_reg, p.all_modes_unreg
        );
    }
    println!("outputs in {}", cfg.out_dir.display());
    if aborted > 0 {
        return Err(Error::Diverged {
            step: 0,
            detail: format!("{} of {} seeds aborted", aborted, summary.per_seed.len()),
        });
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Error> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let ds = make_dataset(&args.dataset.spec()?)?;
    let metrics = eval_checkpoint(&ckpt, &ds, args.samples, args.eval_seed)?;
    let out = serde_json::json!({
        "checkpoint": args.checkpoint,
        "kind": ckpt.kind(),
        "metrics": metrics,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn probe_taylor(args: TaylorArgs) -> Result<(), Error> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let generator = ckpt.generator_net().ok_or_else(|| {
        Error::Config(format!("checkpoint kind {:?} has no deterministic generator to probe", ckpt.kind()))
    })?;
    let ds = make_dataset(&args.dataset.spec()?)?;
    let probes = exp::probe_generator(
        generator,
        &ds,
        &args.epsilons,
        args.samples,
        args.directions,
        args.bins,
        args.seed,
    )?;
    for (i, p) in probes.iter().enumerate() {
        if p.conclusive {
            println!(
                "direction {}: slope {:.4} intercept {:.4} r2 {:.4}",
                i, p.slope, p.intercept, p.r_squared
            );
        } else {
            println!("direction {}: inconclusive (KL estimates too close to zero)", i);
        }
    }
    if let Some(path) = &args.out_csv {
        let mut text = String::from("epsilon,kl_estimate\n");
        for (eps, kl) in &probes[0].points {
            text.push_str(&format!("{},{}\n", eps, kl));
        }
        std::fs::write(path, text)?;
    }
    if let Some(path) = &args.out_json {
        let dirs: Vec<serde_json::Value> = probes
            .iter()
            .map(|p| {
                serde_json::json!({
                    "slope": p.slope,
                    "intercept": p.intercept,
                    "r_squared": p.r_squared,
                    "conclusive": p.conclusive,
                    "points": p.points,
                })
            })
            .collect();
        let slopes: Vec<f64> = probes.iter().filter(|p| p.conclusive).map(|p| p.slope).collect();
        let summary = serde_json::json!({
            "directions": dirs,
            "median_slope": if slopes.is_empty() {
                serde_json::Value::Null
            } else {
                serde_json::json!(exp::median(&slopes))
            },
        });
        std::fs::write(path, serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(())
}

fn check_bounds(trials: usize, seed: u64) -> Result<(), Error> {
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    let (holds, total) = bounds_sweep(trials, seed);
    println!("{}/{} joint-KL bounds hold", holds, total);
    if holds != total {
        return Err(Error::Contract(format!("{} bound violations detected", total - holds)));
    }
    Ok(())
}

fn demo(args: DemoArgs) -> Result<(), Error> {
    let out = args.out.unwrap_or_else(|| PathBuf::from("vigen-demo"));
    let cfg = ExperimentConfig {
        model: exp::ModelKind::GanReg,
        dataset: DatasetSpec::new(DatasetKind::Ring8, 2048, 0.05, 7),
        seeds: vec![0],
        out_dir: out.clone(),
        eval_interval: 400,
        eval_samples: 512,
        dump_ppm: true,
        paired_baseline: false,
        train: serde_json::json!({
            "periods": 1200,
            "batch_size": 64,
            "gen_hidden": [32, 32],
            "disc_hidden": [32, 32],
            "lambda": 0.5,
        }),
    };
    println!("demo: training a small regularized GAN on ring8 ...");
    let summary = run_experiment(&cfg)?;
    for s in &summary.per_seed {
        println!("seed {}: {}", s.seed, s.status);
        for (k, v) in &s.final_metrics {
            println!("  {} = {}", k, v);
        }
    }
    println!("outputs in {}", out.display());
    Ok(())
}
