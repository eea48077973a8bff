//! Deterministic synthetic identification benchmarks.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{NormStats, RawDataset};
use crate::error::{Error, Result};
use crate::fuzzy::{AdditiveDynamics, Dynamics, FuzzyModel, ModelKind, ModelMeta, SingleInputFls};
use crate::membership::{AntecedentChain, Strategy};
use crate::state_repr::{StateConfig, StateMode};

pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Single tank draining through an orifice, `y' = -a sqrt(y) + b u`.
    TankLike,
    /// Mass-spring system with quadratic velocity damping.
    DamperLike,
    /// Trajectory of a random contractive PS1 additive fuzzy model.
    FuzzyGroundTruth,
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::TankLike => "tank_like",
            SyntheticKind::DamperLike => "damper_like",
            SyntheticKind::FuzzyGroundTruth => "fuzzy_ground_truth",
        })
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "tank_like" | "tank" => Ok(SyntheticKind::TankLike),
            "damper_like" | "damper" => Ok(SyntheticKind::DamperLike),
            "fuzzy_ground_truth" | "fuzzy" => Ok(SyntheticKind::FuzzyGroundTruth),
            other => Err(Error::InvalidConfig(format!("unknown synthetic kind {other:?}"))),
        }
    }
}

/// Piecewise-constant input: a random level from `levels` held for a random
/// number of samples in `hold`.
pub fn multilevel_input(rng: &mut impl Rng, n: usize, levels: &[f64], hold: (usize, usize)) -> Vec<f64> {
    let mut u = Vec::with_capacity(n);
    while u.len() < n {
        let level = levels[rng.gen_range(0..levels.len())];
        let len = rng.gen_range(hold.0..=hold.1);
        u.extend(std::iter::repeat_n(level, len.min(n - u.len())));
    }
    u
}

pub fn generate(kind: SyntheticKind, n: usize, seed: u64) -> Result<RawDataset> {
    if n < MIN_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_SAMPLES, available: n });
    }
    match kind {
        SyntheticKind::TankLike => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let levels: Vec<f64> = (0..8).map(|i| 0.15 + 0.85 * i as f64 / 7.0).collect();
            let u = multilevel_input(&mut rng, n, &levels, (10, 50));
            Ok(tank_response(&u, 0.5, "tank_like"))
        }
        SyntheticKind::DamperLike => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = multilevel_input(&mut rng, n, &[-1.0, -0.5, 0.0, 0.5, 1.0], (5, 40));
            let (k_spring, c0, c1, dt, sub) = (4.0, 0.3, 2.0, 0.05, 5);
            let (mut pos, mut vel) = (0.0f64, 0.0f64);
            let mut y = Vec::with_capacity(n);
            for &uk in &u {
                y.push(pos);
                let h = dt / sub as f64;
                for _ in 0..sub {
                    let acc = uk - k_spring * pos - (c0 + c1 * vel * vel) * vel;
                    pos += h * vel;
                    vel += h * acc;
                }
            }
            dataset("damper_like", u, y)
        }
        SyntheticKind::FuzzyGroundTruth => {
            let model = ground_truth_model(seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5EED));
            let u = multilevel_input(&mut rng, n, &[-1.0, -0.6, -0.2, 0.2, 0.6, 1.0], (5, 30));
            let ev = model.dynamics.evaluator()?;
            let mut s = ev.scratch();
            let mut y = Vec::with_capacity(n);
            let mut x = 0.0;
            let mut dx = [0.0];
            for &uk in &u {
                y.push(x);
                ev.derivative(&[x, uk], &mut dx, &mut s);
                x += dx[0];
            }
            dataset("fuzzy_ground_truth", u, y)
        }
    }
}

/// Euler response of the tank to input `u` from level `y0`.
pub fn tank_response(u: &[f64], y0: f64, name: &str) -> RawDataset {
    let (a, b) = (0.067, 0.133);
    let mut y = Vec::with_capacity(u.len());
    let mut level: f64 = y0;
    for &uk in u {
        y.push(level);
        level = (level - a * level.max(0.0).sqrt() + b * uk).max(0.0);
    }
    dataset(name, u.to_vec(), y).expect("finite tank response")
}

fn dataset(name: &str, u: Vec<f64>, y: Vec<f64>) -> Result<RawDataset> {
    let n = u.len();
    RawDataset::new(
        name,
        Array2::from_shape_vec((n, 1), u).map_err(|e| Error::ShapeMismatch(e.to_string()))?,
        Array2::from_shape_vec((n, 1), y).map_err(|e| Error::ShapeMismatch(e.to_string()))?,
    )
}

/// Ground-truth dynamics behind [`SyntheticKind::FuzzyGroundTruth`] in data
/// units: `m = 0`, one input, PS1 with five rules per block.
pub fn ground_truth_model(seed: u64) -> Result<FuzzyModel> {
    let rules = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y_chain = AntecedentChain::init(Strategy::Ps1, rules, -1.5, 1.5)?;
    let u_chain = AntecedentChain::init(Strategy::Ps1, rules, -1.0, 1.0)?;
    let mut y_cons = Vec::with_capacity(rules * 2);
    let mut u_cons = Vec::with_capacity(rules * 2);
    for _ in 0..rules {
        y_cons.push(rng.gen_range(-0.15..-0.08));
        y_cons.push(rng.gen_range(-0.02..0.02));
        u_cons.push(rng.gen_range(0.05..0.2));
        u_cons.push(rng.gen_range(-0.02..0.02));
    }
    let blocks = vec![SingleInputFls::new(y_chain, y_cons, 1)?, SingleInputFls::new(u_chain, u_cons, 1)?];
    Ok(FuzzyModel {
        kind: ModelKind::Xfode(Strategy::Ps1),
        rules,
        n_u: 1,
        n_y: 1,
        state: StateConfig::new(StateMode::Lagged, 0),
        norm: None,
        dynamics: Dynamics::Additive(AdditiveDynamics::new(blocks, 1, 1)?),
        meta: ModelMeta { seed, ..Default::default() },
    })
}

/// Re-expresses an additive model with `m = 0` in the normalized coordinates
/// given by `stats` (inputs first, then outputs).
pub fn to_normalized(model: &FuzzyModel, stats: &NormStats) -> Result<FuzzyModel> {
    let Dynamics::Additive(a) = &model.dynamics else {
        return Err(Error::InvalidConfig("coordinate change needs additive dynamics".into()));
    };
    if model.state.m != 0 {
        return Err(Error::InvalidConfig("coordinate change needs m = 0".into()));
    }
    let n_u = model.n_u;
    let shift: Vec<f64> = stats.mean[n_u..].iter().chain(&stats.mean[..n_u]).copied().collect();
    let scale: Vec<f64> = stats.std[n_u..].iter().chain(&stats.std[..n_u]).copied().collect();
    let mut out = model.clone();
    out.dynamics = Dynamics::Additive(a.change_coordinates(&shift, &scale)?);
    out.norm = Some(stats.clone());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tank_drains_without_input() {
        let ds = tank_response(&vec![0.0; 300], 2.0, "drain");
        let y = ds.outputs.column(0).to_vec();
        assert!(y.windows(2).all(|w| w[1] <= w[0]));
        assert!(y[299] < 2.0);
    }

    #[test]
    fn generators_are_deterministic() {
        for kind in [SyntheticKind::TankLike, SyntheticKind::DamperLike, SyntheticKind::FuzzyGroundTruth] {
            let a = generate(kind, 500, 3).unwrap();
            let b = generate(kind, 500, 3).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, generate(kind, 500, 4).unwrap());
            assert_eq!(a.len(), 500);
        }
        assert!(generate(SyntheticKind::TankLike, 99, 0).is_err());
    }

    #[test]
    fn ground_truth_stays_bounded() {
        let ds = generate(SyntheticKind::FuzzyGroundTruth, 2000, 1).unwrap();
        assert!(ds.outputs.iter().all(|v| v.abs() < 5.0));
        let spread = ds.outputs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - ds.outputs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread > 0.5);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in [SyntheticKind::TankLike, SyntheticKind::DamperLike, SyntheticKind::FuzzyGroundTruth] {
            assert_eq!(kind.to_string().parse::<SyntheticKind>().unwrap(), kind);
        }
    }
}
