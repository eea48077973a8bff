//! Simulation-mode RMSE, multi-seed benchmarks and membership-curve export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{fit_normalizer, load_csv, normalize, NormStats, RawDataset};
use crate::error::{Error, Result};
use crate::fuzzy::{Dynamics, FuzzyModel, ModelKind};
use crate::membership::{sample_curves, softplus, Strategy};
use crate::rollout::simulate;
use crate::state_repr::{build_trajectories, StateConfig, StateMode, TrajectorySet};
use crate::synthetic::{generate, SyntheticKind};
use crate::training::{train, TrainConfig};

/// Default number of grid points per exported membership curve.
pub const CURVE_POINTS: usize = 501;

/// Per-channel root mean squared error.
pub fn rmse(y_true: &Array2<f64>, y_pred: &Array2<f64>) -> Result<Vec<f64>> {
    if y_true.dim() != y_pred.dim() || y_true.nrows() == 0 {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", y_true.dim(), y_pred.dim())));
    }
    let t = y_true.nrows() as f64;
    Ok(y_true
        .columns()
        .into_iter()
        .zip(y_pred.columns())
        .map(|(a, b)| (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / t).sqrt())
        .collect())
}

/// Benchmark description, read from a flat TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// CSV path; takes precedence over `synthetic`.
    pub data: Option<PathBuf>,
    /// `tank_like`, `damper_like` or `fuzzy_ground_truth`.
    pub synthetic: Option<String>,
    pub samples: usize,
    pub data_seed: u64,
    pub nu: usize,
    pub ny: usize,
    /// Defaults to half the record.
    pub train_rows: Option<usize>,
    /// `xfode`, `afode` or `fode`.
    pub model: String,
    pub ps: u8,
    pub sr: u8,
    pub m: usize,
    pub rules: usize,
    pub rollout: usize,
    pub stride: usize,
    pub epochs: usize,
    pub mbs: usize,
    pub lr: f64,
    /// Non-positive disables clipping.
    pub grad_clip: f64,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            data: None,
            synthetic: Some("tank_like".into()),
            samples: 3000,
            data_seed: 0,
            nu: 1,
            ny: 1,
            train_rows: None,
            model: "xfode".into(),
            ps: 1,
            sr: 2,
            m: 2,
            rules: 5,
            rollout: 20,
            stride: 1,
            epochs: t.epochs,
            mbs: t.mini_batch_size,
            lr: t.learning_rate,
            grad_clip: t.grad_clip.unwrap_or(0.0),
            seeds: (0..5).collect(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn kind(&self) -> Result<ModelKind> {
        let ps: Strategy = self.ps.to_string().parse()?;
        ModelKind::from_parts(&self.model, Some(ps)).or_else(|e| match self.model.as_str() {
            "afode" | "fode" => ModelKind::from_parts(&self.model, None),
            _ => Err(e),
        })
    }

    pub fn state(&self) -> Result<StateConfig> {
        Ok(StateConfig::new(StateMode::from_code(self.sr)?, self.m))
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            mini_batch_size: self.mbs,
            learning_rate: self.lr,
            seed,
            grad_clip: (self.grad_clip > 0.0).then_some(self.grad_clip),
            ..TrainConfig::default()
        }
    }

    pub fn dataset(&self) -> Result<RawDataset> {
        match (&self.data, &self.synthetic) {
            (Some(path), _) => load_csv(path, self.nu, self.ny),
            (None, Some(kind)) => generate(kind.parse::<SyntheticKind>()?, self.samples, self.data_seed),
            (None, None) => Err(Error::InvalidConfig("either data or synthetic must be set".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kind()?;
        self.state()?;
        self.train_config(0).validate()?;
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seed list is empty".into()));
        }
        if self.rules < 2 {
            return Err(Error::InvalidConfig("rules must be >= 2".into()));
        }
        Ok(())
    }
}

/// Normalized splits and training windows shared by every seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub stats: NormStats,
    pub train: RawDataset,
    pub test: RawDataset,
    pub trajectories: TrajectorySet,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let ds = cfg.dataset()?;
    let train_rows = cfg.train_rows.unwrap_or(ds.len() / 2);
    let (train_raw, test_raw) = ds.split(train_rows)?;
    let stats = fit_normalizer(&train_raw);
    let train = normalize(&train_raw, &stats)?;
    let test = normalize(&test_raw, &stats)?;
    let trajectories = build_trajectories(&train, cfg.state()?, cfg.rollout, cfg.stride)?;
    Ok(Prepared { stats, train, test, trajectories })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub diverged: bool,
    pub error: Option<String>,
    pub rmse_normalized: Vec<f64>,
    pub rmse_original: Vec<f64>,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub best_epoch: usize,
    pub skipped_batches: usize,
}

/// Free-run test RMSE of a trained model, normalized and original units.
/// Row 0 of the simulation is the measured initial output and is excluded.
pub fn test_rmse(model: &FuzzyModel, test: &RawDataset, stats: &NormStats) -> Result<(Vec<f64>, Vec<f64>)> {
    let pred = simulate(model, test)?;
    let m = model.state.m;
    let truth = test.outputs.slice(s![m + 1.., ..]).to_owned();
    let pred = pred.slice(s![1.., ..]).to_owned();
    let norm = rmse(&truth, &pred)?;
    let orig = rmse(
        &stats.denormalize_outputs(model.n_u, &truth),
        &stats.denormalize_outputs(model.n_u, &pred),
    )?;
    Ok((norm, orig))
}

/// Trains and evaluates one seed.
pub fn run_seed(cfg: &ExperimentConfig, prep: &Prepared, seed: u64) -> Result<(FuzzyModel, SeedResult)> {
    let kind = cfg.kind()?;
    let state = cfg.state()?;
    let mut model = FuzzyModel::init(
        kind,
        cfg.rules,
        prep.train.n_u(),
        prep.train.n_y(),
        state,
        &prep.trajectories.z_domains(),
        seed,
    )?;
    model.norm = Some(prep.stats.clone());
    let mut result = SeedResult {
        seed,
        diverged: false,
        error: None,
        rmse_normalized: Vec::new(),
        rmse_original: Vec::new(),
        initial_loss: f64::NAN,
        best_loss: f64::NAN,
        best_epoch: 0,
        skipped_batches: 0,
    };
    let run = match train(&mut model, &prep.trajectories, &cfg.train_config(seed)) {
        Ok(run) => run,
        Err(e @ Error::DivergedRun { .. }) => {
            result.diverged = true;
            result.error = Some(e.to_string());
            return Ok((model, result));
        }
        Err(e) => return Err(e),
    };
    result.initial_loss = run.initial_loss;
    result.best_loss = run.best_loss;
    result.best_epoch = run.best_epoch;
    result.skipped_batches = run.skipped_total();
    match test_rmse(&model, &prep.test, &prep.stats) {
        Ok((n, o)) => {
            result.rmse_normalized = n;
            result.rmse_original = o;
        }
        Err(e @ Error::NumericalDivergence { .. }) => {
            result.diverged = true;
            result.error = Some(e.to_string());
        }
        Err(e) => return Err(e),
    }
    Ok((model, result))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub model: String,
    pub strategy: String,
    pub state_representation: String,
    pub m: usize,
    pub rules: usize,
    pub rollout: usize,
    pub n_x: usize,
    pub n_z: usize,
    pub learnable_parameters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ConfigEcho,
    pub dataset: String,
    pub seeds: Vec<SeedResult>,
    /// Seeds excluded from the statistics.
    pub diverged_seeds: Vec<u64>,
    pub single_seed: bool,
    pub mean_rmse_normalized: Vec<f64>,
    pub se_rmse_normalized: Vec<f64>,
    pub mean_rmse_original: Vec<f64>,
    pub se_rmse_original: Vec<f64>,
}

/// Mean and standard error (sample std / sqrt(n)) per channel.
fn mean_se(rows: &[&Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let channels = rows[0].len();
    let mut mean = vec![0.0; channels];
    let mut se = vec![0.0; channels];
    for c in 0..channels {
        mean[c] = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        if rows.len() > 1 {
            let var = rows.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / (n - 1.0);
            se[c] = (var / n).sqrt();
        }
    }
    (mean, se)
}

/// Runs `body` on a pool capped by `XFODE_THREADS` when that is set.
pub fn with_thread_cap<T: Send>(body: impl FnOnce() -> T + Send) -> T {
    match std::env::var("XFODE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(body),
            Err(_) => body(),
        },
        _ => body(),
    }
}

pub fn benchmark(cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let results: Vec<SeedResult> = with_thread_cap(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| run_seed(cfg, &prep, seed).map(|(_, r)| r))
            .collect::<Result<Vec<_>>>()
    })?;
    let ok: Vec<&SeedResult> = results.iter().filter(|r| !r.diverged).collect();
    if ok.is_empty() {
        return Err(Error::AllSeedsDiverged { seeds: results.len() });
    }
    let (mean_n, se_n) = mean_se(&ok.iter().map(|r| &r.rmse_normalized).collect::<Vec<_>>());
    let (mean_o, se_o) = mean_se(&ok.iter().map(|r| &r.rmse_original).collect::<Vec<_>>());
    let kind = cfg.kind()?;
    let state = cfg.state()?;
    let n_x = state.n_x(prep.train.n_y());
    let n_z = n_x + prep.train.n_u();
    Ok(EvalReport {
        config: ConfigEcho {
            model: kind.name().into(),
            strategy: kind.strategy().to_string(),
            state_representation: state.mode.to_string(),
            m: state.m,
            rules: cfg.rules,
            rollout: cfg.rollout,
            n_x,
            n_z,
            learnable_parameters: kind.count_parameters(cfg.rules, n_x, n_z),
        },
        dataset: prep.train.name.clone(),
        diverged_seeds: results.iter().filter(|r| r.diverged).map(|r| r.seed).collect(),
        single_seed: ok.len() == 1,
        seeds: results,
        mean_rmse_normalized: mean_n,
        se_rmse_normalized: se_n,
        mean_rmse_original: mean_o,
        se_rmse_original: se_o,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_table(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {} m={} P={} N={} #LP={} on {}",
            c.model, c.strategy, c.state_representation, c.m, c.rules, c.rollout, c.learnable_parameters, self.dataset
        );
        let _ = writeln!(out, "{:>6} {:>10} {:>24} {:>24}", "seed", "status", "rmse (normalized)", "rmse (original)");
        for r in &self.seeds {
            let status = if r.diverged { "diverged" } else { "ok" };
            let _ = writeln!(
                out,
                "{:>6} {:>10} {:>24} {:>24}",
                r.seed,
                status,
                fmt_vec(&r.rmse_normalized),
                fmt_vec(&r.rmse_original)
            );
        }
        for (label, mean, se) in [
            ("normalized", &self.mean_rmse_normalized, &self.se_rmse_normalized),
            ("original", &self.mean_rmse_original, &self.se_rmse_original),
        ] {
            let cells: Vec<String> = mean.iter().zip(se).map(|(m, s)| format!("{m:.4} ± {s:.4}")).collect();
            let _ = writeln!(out, "mean rmse ({label}): {}", cells.join(", "));
        }
        if self.single_seed {
            let _ = writeln!(out, "single seed: standard error not defined, reported as 0");
        }
        if !self.diverged_seeds.is_empty() {
            let _ = writeln!(out, "excluded diverged seeds: {:?}", self.diverged_seeds);
        }
        out
    }
}

fn fmt_vec(v: &[f64]) -> String {
    if v.is_empty() {
        return "-".into();
    }
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(",")
}

/// Readable names of the combined-input dimensions `[x; u]`.
pub fn dimension_names(state: StateConfig, n_y: usize, n_u: usize) -> Vec<String> {
    let mut names = Vec::new();
    for order in 0..=state.m {
        for j in 1..=n_y {
            names.push(match (state.mode, order) {
                (_, 0) => format!("y{j}"),
                (StateMode::Lagged, l) => format!("y{j}[k-{l}]"),
                (StateMode::Incremental, 1) => format!("y{j} velocity"),
                (StateMode::Incremental, 2) => format!("y{j} acceleration"),
                (StateMode::Incremental, o) => format!("y{j} difference order {o}"),
            });
        }
    }
    names.extend((1..=n_u).map(|j| format!("u{j}")));
    names
}

/// Membership curves per dimension, rows `[z, mu_1, ..., mu_P]`.
pub fn membership_curves(model: &FuzzyModel, points: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    match &model.dynamics {
        Dynamics::Additive(_) => {
            Ok(model.dynamics.decoded()?.iter().map(|mfs| sample_curves(mfs, points)).collect())
        }
        Dynamics::Fode(f) => {
            let n_z = f.n_z();
            Ok((0..n_z)
                .map(|i| {
                    let c: Vec<f64> = (0..f.rules).map(|p| f.centers[p * n_z + i]).collect();
                    let sg: Vec<f64> = (0..f.rules).map(|p| softplus(f.sigma_raw[p * n_z + i])).collect();
                    let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let span = if hi > lo { (hi - lo) / 10.0 } else { 1.0 };
                    let (a, b) = (lo - span, hi + span);
                    (0..points)
                        .map(|k| {
                            let z = if points > 1 { a + (b - a) * k as f64 / (points - 1) as f64 } else { a };
                            let mut row = vec![z];
                            row.extend(c.iter().zip(&sg).map(|(c, s)| (-(z - c).powi(2) / (2.0 * s * s)).exp()));
                            row
                        })
                        .collect()
                })
                .collect())
        }
    }
}

/// Writes `mf_z{i}.csv` per dimension plus `manifest.csv`; returns the paths.
pub fn export_mfs(model: &FuzzyModel, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let names = dimension_names(model.state, model.n_y, model.n_u);
    let curves = membership_curves(model, CURVE_POINTS)?;
    let mut written = Vec::new();
    let mut manifest = csv::Writer::from_path(dir.join("manifest.csv"))?;
    manifest.write_record(["file", "dimension", "name"])?;
    for (i, rows) in curves.iter().enumerate() {
        let file = format!("mf_z{}.csv", i + 1);
        let path = dir.join(&file);
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["z".to_string()];
        header.extend((1..=model.rules).map(|p| format!("mu_{p}")));
        w.write_record(&header)?;
        for row in rows {
            w.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        manifest.write_record([file.as_str(), &format!("z{}", i + 1), &names[i]])?;
        written.push(path);
    }
    manifest.flush()?;
    written.push(dir.join("manifest.csv"));
    Ok(written)
}
