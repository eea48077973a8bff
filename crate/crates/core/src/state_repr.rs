//! Output-derived state vectors (lagged or incremental) and rollout windows.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::dataset::RawDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateMode {
    /// `[y_k, y_{k-1}, ..., y_{k-m}]`
    Lagged,
    /// `[y_k, Δy_k, ..., Δ^m y_k]`
    Incremental,
}

impl StateMode {
    pub fn code(self) -> u8 {
        match self {
            StateMode::Lagged => 1,
            StateMode::Incremental => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(StateMode::Lagged),
            2 => Ok(StateMode::Incremental),
            other => Err(Error::InvalidConfig(format!("state representation must be 1 or 2, got {other}"))),
        }
    }
}

impl fmt::Display for StateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SR{}", self.code())
    }
}

impl FromStr for StateMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches("SR").trim_start_matches("sr");
        t.parse::<u8>()
            .map_err(|_| Error::InvalidConfig(format!("bad state representation {s:?}")))
            .and_then(StateMode::from_code)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateConfig {
    pub mode: StateMode,
    /// Number of lags (lagged) or difference orders (incremental).
    pub m: usize,
}

impl StateConfig {
    pub fn new(mode: StateMode, m: usize) -> Self {
        Self { mode, m }
    }

    pub fn n_x(&self, n_y: usize) -> usize {
        (self.m + 1) * n_y
    }
}

/// Builds the state matrix from outputs. Row `r` of the result is the state at
/// original sample index `r + m`; the returned offset is `m`.
pub fn build_states(outputs: &Array2<f64>, cfg: StateConfig) -> Result<(Array2<f64>, usize)> {
    let (k, n_y) = outputs.dim();
    let m = cfg.m;
    if k <= m {
        return Err(Error::InsufficientSamples { needed: m + 1, available: k });
    }
    let rows = k - m;
    let mut states = Array2::zeros((rows, (m + 1) * n_y));
    match cfg.mode {
        StateMode::Lagged => {
            for lag in 0..=m {
                states
                    .slice_mut(s![.., lag * n_y..(lag + 1) * n_y])
                    .assign(&outputs.slice(s![m - lag..k - lag, ..]));
            }
        }
        StateMode::Incremental => {
            // diff holds Δ^j y for original indices j..k
            let mut diff = outputs.to_owned();
            for order in 0..=m {
                let start = m - order;
                states
                    .slice_mut(s![.., order * n_y..(order + 1) * n_y])
                    .assign(&diff.slice(s![start.., ..]));
                if order < m {
                    let n = diff.nrows();
                    diff = &diff.slice(s![1..n, ..]) - &diff.slice(s![0..n - 1, ..]);
                }
            }
        }
    }
    Ok((states, m))
}

/// Current output block of a state vector (first `n_y` components).
pub fn output_of_state(x: &[f64], n_y: usize) -> Result<&[f64]> {
    if n_y == 0 || x.len() < n_y || !x.len().is_multiple_of(n_y) {
        return Err(Error::DimensionMismatch { expected: n_y, found: x.len() });
    }
    Ok(&x[..n_y])
}

/// One rollout window: `N + 1` inputs and states at the same sample indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub u: Array2<f64>,
    pub x: Array2<f64>,
    /// Original sample index of row 0.
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub trajectories: Vec<Trajectory>,
    pub horizon: usize,
    pub n_x: usize,
    pub n_u: usize,
}

impl TrajectorySet {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Per-dimension (min, max) over all combined inputs `[x; u]` in the set.
    pub fn z_domains(&self) -> Vec<(f64, f64)> {
        let n_z = self.n_x + self.n_u;
        let mut dom = vec![(f64::INFINITY, f64::NEG_INFINITY); n_z];
        for t in &self.trajectories {
            for (x, u) in t.x.outer_iter().zip(t.u.outer_iter()) {
                for (i, v) in x.iter().chain(u.iter()).enumerate() {
                    dom[i].0 = dom[i].0.min(*v);
                    dom[i].1 = dom[i].1.max(*v);
                }
            }
        }
        dom
    }
}

/// Cuts overlapping windows of `horizon + 1` samples every `stride` states.
pub fn build_trajectories(
    ds: &RawDataset,
    cfg: StateConfig,
    horizon: usize,
    stride: usize,
) -> Result<TrajectorySet> {
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be >= 1".into()));
    }
    if horizon == 0 {
        return Err(Error::InvalidConfig("rollout horizon must be >= 1".into()));
    }
    let needed = cfg.m + horizon + 1;
    if ds.len() < needed {
        return Err(Error::InsufficientSamples { needed, available: ds.len() });
    }
    let (states, offset) = build_states(&ds.outputs, cfg)?;
    let valid = states.nrows();
    let count = (valid - horizon - 1) / stride + 1;
    let trajectories = (0..count)
        .map(|b| {
            let s0 = b * stride;
            Trajectory {
                x: states.slice(s![s0..s0 + horizon + 1, ..]).to_owned(),
                u: ds.inputs.slice(s![offset + s0..offset + s0 + horizon + 1, ..]).to_owned(),
                start: offset + s0,
            }
        })
        .collect();
    Ok(TrajectorySet { trajectories, horizon, n_x: states.ncols(), n_u: ds.n_u() })
}
