//! Command-line interface.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ndarray::s;

use crate::dataset::{fit_normalizer, load_csv, normalize, write_prediction_csv, write_predictions};
use crate::error::{Error, Result};
use crate::evaluation::{benchmark, export_mfs, rmse, ExperimentConfig};
use crate::fuzzy::FuzzyModel;
use crate::model_io;
use crate::rollout::simulate_full;
use crate::state_repr::build_trajectories;
use crate::synthetic::{generate, SyntheticKind};
use crate::training::train;

#[derive(Debug, Parser)]
#[command(name = "xfode", version, about = "Additive fuzzy ODE system identification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write it as JSON.
    Train(TrainArgs),
    /// Free-run a trained model over a record.
    Simulate(SimulateArgs),
    /// Multi-seed train/test benchmark from a TOML config.
    Benchmark(BenchmarkArgs),
    /// Write membership curves of a trained model as CSV.
    ExportMfs(ExportArgs),
    /// Generate a synthetic benchmark record.
    GenData(GenDataArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Experiment config (TOML); explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training CSV (inputs then outputs).
    #[arg(long, required_unless_present = "config")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub nu: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    /// Use only the first rows for training (default: the whole file).
    #[arg(long)]
    pub train_rows: Option<usize>,
    /// xfode, afode or fode.
    #[arg(long)]
    pub model: Option<String>,
    /// Partitioning strategy 1, 2 or 3 (xfode only).
    #[arg(long)]
    pub ps: Option<u8>,
    /// State representation: 1 lagged, 2 incremental.
    #[arg(long)]
    pub sr: Option<u8>,
    /// Number of lags or difference orders.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub rules: Option<usize>,
    /// Rollout horizon N.
    #[arg(long)]
    pub rollout: Option<usize>,
    /// Window stride.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    pub mbs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Global gradient-norm clip; 0 disables.
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Record in original units.
    #[arg(long)]
    pub data: PathBuf,
    /// Prediction CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-step, per-block contributions (normalized units).
    #[arg(long)]
    pub dump_contributions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated seeds, overriding the config.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// JSON report path; the table always goes to stdout.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// tank_like, damper_like or fuzzy_ground_truth.
    #[arg(long)]
    pub kind: String,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns 0 on success, 1 on usage errors, 2 on runtime errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(Error::InvalidConfig(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => cmd_train(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::ExportMfs(a) => {
            let model = model_io::load(&a.model)?;
            for p in export_mfs(&model, &a.out_dir)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::GenData(a) => {
            let kind: SyntheticKind = a.kind.parse()?;
            generate(kind, a.n, a.seed)?.write_csv(&a.out)
        }
    }
}

fn merged_config(a: &TrainArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = a.$field.clone() { cfg.$field = v; } )* };
    }
    set!(nu, ny, model, ps, sr, m, rules, rollout, stride, epochs, mbs, lr, grad_clip);
    if a.data.is_some() {
        cfg.data = a.data.clone();
    }
    if a.train_rows.is_some() {
        cfg.train_rows = a.train_rows;
    }
    cfg.seeds = vec![a.seed];
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = merged_config(&a)?;
    let ds = cfg.dataset()?;
    // train uses the whole file unless told otherwise
    let train_raw = match (a.train_rows, &cfg.data) {
        (Some(rows), _) => ds.split(rows)?.0,
        (None, Some(_)) => ds,
        (None, None) => ds.split(cfg.train_rows.unwrap_or(ds.len() / 2))?.0,
    };
    let stats = fit_normalizer(&train_raw);
    let train_ds = normalize(&train_raw, &stats)?;
    let state = cfg.state()?;
    let set = build_trajectories(&train_ds, state, cfg.rollout, cfg.stride)?;
    let mut model = FuzzyModel::init(
        cfg.kind()?,
        cfg.rules,
        train_ds.n_u(),
        train_ds.n_y(),
        state,
        &set.z_domains(),
        a.seed,
    )?;
    model.norm = Some(stats);
    let run = train(&mut model, &set, &cfg.train_config(a.seed))?;
    model_io::save(&model, &a.out)?;
    eprintln!(
        "trained {} ({} parameters) on {} windows: initial loss {:.6}, best loss {:.6} at epoch {}, {} skipped batches",
        model.kind,
        model.count_parameters(),
        set.len(),
        run.initial_loss,
        run.best_loss,
        run.best_epoch,
        run.skipped_total()
    );
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let model = model_io::load(&a.model)?;
    let raw = load_csv(&a.data, model.n_u, model.n_y)?;
    let ds = match &model.norm {
        Some(stats) => normalize(&raw, stats)?,
        None => raw.clone(),
    };
    let (pred, contrib) = simulate_full(&model, &ds, a.dump_contributions.is_some())?;
    let pred = match &model.norm {
        Some(stats) => stats.denormalize_outputs(model.n_u, &pred),
        None => pred,
    };
    let m = model.state.m;
    let truth = raw.outputs.slice(s![m.., ..]).to_owned();
    match &a.out {
        Some(p) => write_prediction_csv(p, m, &truth, &pred)?,
        None => write_predictions(std::io::stdout().lock(), m, &truth, &pred)?,
    }
    if let (Some(path), Some(c)) = (&a.dump_contributions, contrib) {
        write_contributions(path, m, &c)?;
    }
    eprintln!("rmse: {:?}", rmse(&truth, &pred)?);
    Ok(())
}

fn write_contributions(path: &PathBuf, first: usize, c: &[Vec<Vec<f64>>]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let n_x = c.first().and_then(|s| s.first()).map_or(0, Vec::len);
    let cols: Vec<String> = (1..=n_x).map(|o| format!("d_{o}")).collect();
    writeln!(f, "k,block,{}", cols.join(","))?;
    for (k, step) in c.iter().enumerate() {
        for (i, block) in step.iter().enumerate() {
            let vals: Vec<String> = block.iter().map(|v| format!("{v:?}")).collect();
            writeln!(f, "{},{},{}", first + k, i + 1, vals.join(","))?;
        }
    }
    f.flush()?;
    Ok(())
}

fn cmd_benchmark(a: BenchmarkArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(seeds) = a.seeds {
        cfg.seeds = seeds;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    let report = benchmark(&cfg)?;
    print!("{}", report.to_table());
    if let Some(p) = &a.json {
        std::fs::write(p, report.to_json()?)?;
    }
    Ok(())
}
