//! Mini-batched L1 rollout training with reverse-mode gradients and Adam.

use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuzzy::{Dynamics, Evaluator, FuzzyModel};
use crate::membership::DecodedMfs;
use crate::rollout::check_state;
use crate::state_repr::{Trajectory, TrajectorySet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub mini_batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            mini_batch_size: 32,
            learning_rate: 1e-2,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            grad_clip: Some(10.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.mini_batch_size == 0 {
            return Err(Error::InvalidConfig("mini-batch size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad learning rate {}", self.learning_rate)));
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return Err(Error::InvalidConfig("gradient clip must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub seed: u64,
    /// Full-set L1 at the initial parameters.
    pub initial_loss: f64,
    /// Mean mini-batch L1 per epoch.
    pub loss_trace: Vec<f64>,
    /// Diverged mini-batches per epoch.
    pub skipped: Vec<usize>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub best_params: Vec<f64>,
    #[serde(skip)]
    pub wall_time: f64,
}

impl TrainRun {
    pub fn skipped_total(&self) -> usize {
        self.skipped.iter().sum()
    }
}

/// Mean over trajectories of the summed absolute state error over steps `1..=N`.
pub fn l1_loss(predictions: &[Array2<f64>], targets: &TrajectorySet) -> Result<f64> {
    if predictions.len() != targets.len() || targets.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} trajectories",
            predictions.len(),
            targets.len()
        )));
    }
    let mut total = 0.0;
    for (p, t) in predictions.iter().zip(&targets.trajectories) {
        if p.dim() != t.x.dim() {
            return Err(Error::ShapeMismatch(format!("prediction {:?} vs target {:?}", p.dim(), t.x.dim())));
        }
        for k in 1..p.nrows() {
            for (a, b) in p.row(k).iter().zip(t.x.row(k)) {
                total += (a - b).abs();
            }
        }
    }
    Ok(total / targets.len() as f64)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Forward rollout over a trajectory's first `N` inputs; returns the loss
/// contribution and the visited combined inputs.
fn forward(ev: &Evaluator<'_>, t: &Trajectory, zs: &mut Vec<f64>, s: &mut crate::fuzzy::Scratch) -> Result<f64> {
    let n_x = t.x.ncols();
    let n_u = t.u.ncols();
    let n_z = n_x + n_u;
    let steps = t.x.nrows() - 1;
    zs.clear();
    zs.resize(steps * n_z + n_x, 0.0);
    for i in 0..n_x {
        zs[i] = t.x[[0, i]];
    }
    let mut dx = vec![0.0; n_x];
    let mut loss = 0.0;
    for k in 0..steps {
        let base = k * n_z;
        for j in 0..n_u {
            zs[base + n_x + j] = t.u[[k, j]];
        }
        ev.derivative(&zs[base..base + n_z], &mut dx, s);
        let next = base + n_z;
        for i in 0..n_x {
            zs[next + i] = zs[base + i] + dx[i];
        }
        check_state(k + 1, &zs[next..next + n_x])?;
        for i in 0..n_x {
            loss += (zs[next + i] - t.x[[k + 1, i]]).abs();
        }
    }
    Ok(loss)
}

/// Loss and raw-parameter gradient of `batch` (mean over its trajectories).
fn batch_gradient(ev: &Evaluator<'_>, batch: &[&Trajectory]) -> Result<(f64, Vec<f64>)> {
    let scale = 1.0 / batch.len() as f64;
    let mut acc = ev.zero_grad();
    let mut s = ev.scratch();
    let mut zs = Vec::new();
    let mut loss = 0.0;
    for t in batch {
        loss += forward(ev, t, &mut zs, &mut s)?;
        let n_x = t.x.ncols();
        let n_z = n_x + t.u.ncols();
        let steps = t.x.nrows() - 1;
        let mut lambda = vec![0.0; n_x];
        let mut grad_z = vec![0.0; n_z];
        for k in (0..steps).rev() {
            let next = (k + 1) * n_z;
            for i in 0..n_x {
                lambda[i] += sign(zs[next + i] - t.x[[k + 1, i]]) * scale;
            }
            grad_z.iter_mut().for_each(|g| *g = 0.0);
            ev.backward(&zs[k * n_z..(k + 1) * n_z], &lambda, &mut grad_z, &mut acc, &mut s);
            for i in 0..n_x {
                lambda[i] += grad_z[i];
            }
        }
    }
    Ok((loss * scale, ev.finish(acc)))
}

/// Exact reverse-mode gradient of the L1 rollout loss over `trajectories`.
pub fn compute_gradient(dynamics: &Dynamics, trajectories: &[Trajectory]) -> Result<(f64, Vec<f64>)> {
    if trajectories.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let batch: Vec<&Trajectory> = trajectories.iter().collect();
    batch_gradient(&dynamics.evaluator()?, &batch)
}

/// L1 rollout loss of `dynamics` over `trajectories`.
pub fn loss(dynamics: &Dynamics, trajectories: &[Trajectory]) -> Result<f64> {
    if trajectories.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let ev = dynamics.evaluator()?;
    let mut s = ev.scratch();
    let mut zs = Vec::new();
    let mut total = 0.0;
    for t in trajectories {
        total += forward(&ev, t, &mut zs, &mut s)?;
    }
    Ok(total / trajectories.len() as f64)
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self { lr, beta1, beta2, epsilon, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

fn clip(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let f = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= f);
    }
}

/// Trains `model` in place and leaves it at the lowest-loss epoch snapshot.
pub fn train(model: &mut FuzzyModel, set: &TrajectorySet, cfg: &TrainConfig) -> Result<TrainRun> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, available: 0 });
    }
    if set.n_x != model.n_x() || set.n_u != model.n_u {
        return Err(Error::DimensionMismatch { expected: model.n_z(), found: set.n_x + set.n_u });
    }
    let started = Instant::now();
    let initial_loss = loss(&model.dynamics, &set.trajectories).unwrap_or(f64::INFINITY);
    let mut theta = model.dynamics.params();
    let mut adam = Adam::new(theta.len(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mbs = cfg.mini_batch_size.min(set.len());
    let mut run = TrainRun {
        seed: cfg.seed,
        initial_loss,
        loss_trace: Vec::with_capacity(cfg.epochs),
        skipped: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        best_loss: f64::INFINITY,
        best_params: theta.clone(),
        wall_time: 0.0,
    };
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut used, mut skipped) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(mbs) {
            let batch: Vec<&Trajectory> = chunk.iter().map(|&i| &set.trajectories[i]).collect();
            let step = model.dynamics.evaluator().and_then(|ev| batch_gradient(&ev, &batch));
            match step {
                Ok((l, mut g)) if l.is_finite() && g.iter().all(|v| v.is_finite()) => {
                    if let Some(c) = cfg.grad_clip {
                        clip(&mut g, c);
                    }
                    adam.step(&mut theta, &g);
                    model.dynamics.set_params(&theta)?;
                    sum += l;
                    used += 1;
                }
                Ok(_) | Err(Error::NumericalDivergence { .. }) | Err(Error::NonFiniteParameter(_)) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        if skipped > 0 {
            log::warn!("epoch {epoch}: skipped {skipped} diverged mini-batches");
        }
        if used == 0 {
            return Err(Error::DivergedRun { epoch });
        }
        let mean = sum / used as f64;
        log::info!("epoch {epoch} loss {mean:.6e} skipped {skipped}");
        run.loss_trace.push(mean);
        run.skipped.push(skipped);
        if mean < run.best_loss {
            run.best_loss = mean;
            run.best_epoch = epoch;
            run.best_params.clone_from(&theta);
        }
    }
    model.dynamics.set_params(&run.best_params)?;
    model.meta.seed = cfg.seed;
    model.meta.epochs = cfg.epochs;
    model.meta.final_loss = Some(run.best_loss);
    run.wall_time = started.elapsed().as_secs_f64();
    Ok(run)
}

/// Decoded antecedents for every additive block (empty for FODE); handy for
/// checking reparameterization invariants after training.
pub fn decoded_antecedents(model: &FuzzyModel) -> Result<Vec<DecodedMfs>> {
    model.dynamics.decoded()
}
