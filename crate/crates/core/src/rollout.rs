//! Forward-Euler propagation of fuzzy dynamics: `x_{k+1} = x_k + F([x_k; u_k])`.

use ndarray::{s, Array2, ArrayView2};

use crate::dataset::RawDataset;
use crate::error::{Error, Result};
use crate::fuzzy::{Dynamics, Evaluator, FuzzyModel};
use crate::state_repr::build_states;

/// States beyond this magnitude count as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    /// `(N + 1) x n_x`, row 0 is the initial state.
    pub states: Array2<f64>,
    /// Per step, per block contribution (`N x n_z x n_x`) when requested.
    pub contributions: Option<Vec<Vec<Vec<f64>>>>,
}

pub(crate) fn check_state(step: usize, x: &[f64]) -> Result<()> {
    match x.iter().find(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
        Some(&magnitude) => Err(Error::NumericalDivergence { step, magnitude }),
        None => Ok(()),
    }
}

/// Rolls out `u.nrows()` steps from `x0` with a prepared evaluator.
pub fn rollout_with(ev: &Evaluator<'_>, x0: &[f64], u: ArrayView2<'_, f64>, contributions: bool) -> Result<RolloutResult> {
    let dynamics = ev.dynamics();
    let (n_x, n_u) = (dynamics.n_x(), dynamics.n_u());
    if x0.len() != n_x {
        return Err(Error::DimensionMismatch { expected: n_x, found: x0.len() });
    }
    if u.ncols() != n_u {
        return Err(Error::DimensionMismatch { expected: n_u, found: u.ncols() });
    }
    let steps = u.nrows();
    let mut states = Array2::zeros((steps + 1, n_x));
    states.row_mut(0).iter_mut().zip(x0).for_each(|(d, s)| *d = *s);
    let mut scratch = ev.scratch();
    let mut z = vec![0.0; n_x + n_u];
    let mut dx = vec![0.0; n_x];
    let mut contrib = contributions.then(Vec::new);
    for k in 0..steps {
        for i in 0..n_x {
            z[i] = states[[k, i]];
        }
        for j in 0..n_u {
            z[n_x + j] = u[[k, j]];
        }
        ev.derivative(&z, &mut dx, &mut scratch);
        if let Some(c) = contrib.as_mut() {
            c.push(ev.contributions(&z, &mut scratch));
        }
        for i in 0..n_x {
            states[[k + 1, i]] = states[[k, i]] + dx[i];
        }
        check_state(k + 1, states.row(k + 1).as_slice().unwrap())?;
    }
    Ok(RolloutResult { states, contributions: contrib })
}

/// Rolls out one step per row of `u` starting from `x0`.
pub fn rollout(dynamics: &Dynamics, x0: &[f64], u: ArrayView2<'_, f64>) -> Result<RolloutResult> {
    rollout_with(&dynamics.evaluator()?, x0, u, false)
}

/// Free-run simulation on a (normalized) record: the state at sample `m` is
/// built from the first `m + 1` measured outputs, then only measured inputs
/// drive the model. Returns `K - m` predicted outputs (row 0 is sample `m`).
pub fn simulate(model: &FuzzyModel, ds: &RawDataset) -> Result<Array2<f64>> {
    Ok(simulate_full(model, ds, false)?.0)
}

/// [`simulate`] plus the optional per-step contributions.
pub fn simulate_full(
    model: &FuzzyModel,
    ds: &RawDataset,
    contributions: bool,
) -> Result<(Array2<f64>, Option<Vec<Vec<Vec<f64>>>>)> {
    if ds.n_u() != model.n_u || ds.n_y() != model.n_y {
        return Err(Error::DimensionMismatch { expected: model.n_u + model.n_y, found: ds.n_u() + ds.n_y() });
    }
    let m = model.state.m;
    let head = ds.outputs.slice(s![..m + 1, ..]).to_owned();
    let (x0, offset) = build_states(&head, model.state)?;
    let steps = ds.len() - offset - 1;
    let u = ds.inputs.slice(s![offset..offset + steps, ..]);
    let ev = model.dynamics.evaluator()?;
    let res = rollout_with(&ev, x0.row(0).as_slice().unwrap(), u, contributions)?;
    Ok((res.states.slice(s![.., ..model.n_y]).to_owned(), res.contributions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuzzy::{AdditiveDynamics, SingleInputFls};
    use crate::membership::{AntecedentChain, Strategy};
    use crate::state_repr::{StateConfig, StateMode};
    use ndarray::Array2;

    fn constant_block(n_x: usize, intercept: f64) -> SingleInputFls {
        let chain = AntecedentChain::init(Strategy::Ps1, 2, -1.0, 1.0).unwrap();
        let mut cons = vec![0.0; 2 * n_x * 2];
        for p in 0..2 {
            cons[(p * n_x) * 2 + 1] = intercept;
        }
        SingleInputFls::new(chain, cons, n_x).unwrap()
    }

    #[test]
    fn zero_dynamics_hold_state() {
        let d = Dynamics::Additive(
            AdditiveDynamics::new((0..3).map(|_| constant_block(2, 0.0)).collect(), 2, 1).unwrap(),
        );
        let u = Array2::from_elem((5, 1), 0.3);
        let r = rollout(&d, &[1.0, 2.0], u.view()).unwrap();
        assert_eq!(r.states.nrows(), 6);
        for row in r.states.outer_iter() {
            assert_eq!(row.to_vec(), vec![1.0, 2.0]);
        }
    }

    #[test]
    fn constant_derivative_counts_up() {
        let blocks = vec![constant_block(1, 1.0), constant_block(1, 0.0)];
        let d = Dynamics::Additive(AdditiveDynamics::new(blocks, 1, 1).unwrap());
        let r = rollout(&d, &[0.0], Array2::zeros((3, 1)).view()).unwrap();
        assert_eq!(r.states.column(0).to_vec(), vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn divergence_is_reported() {
        let blocks = vec![constant_block(1, 4e5), constant_block(1, 0.0)];
        let d = Dynamics::Additive(AdditiveDynamics::new(blocks, 1, 1).unwrap());
        let err = rollout(&d, &[0.0], Array2::zeros((5, 1)).view()).unwrap_err();
        assert!(matches!(err, Error::NumericalDivergence { step: 3, .. }));
    }

    #[test]
    fn simulate_zero_dynamics_holds_last_measured_output() {
        let st = StateConfig::new(StateMode::Incremental, 2);
        let mut model = crate::fuzzy::FuzzyModel::init(
            crate::fuzzy::ModelKind::Xfode(Strategy::Ps1),
            3,
            1,
            1,
            st,
            &[(-1.0, 1.0); 4],
            0,
        )
        .unwrap();
        let zeros = vec![0.0; model.count_parameters()];
        let mut theta = model.dynamics.params();
        // keep antecedents, zero the consequents
        if let Dynamics::Additive(a) = &model.dynamics {
            let mut at = 0;
            for b in &a.blocks {
                at += b.chain.raw.len();
                theta[at..at + b.consequents.len()].copy_from_slice(&zeros[..b.consequents.len()]);
                at += b.consequents.len();
            }
        }
        model.dynamics.set_params(&theta).unwrap();
        let k = 12;
        let u = Array2::from_shape_fn((k, 1), |(i, _)| i as f64);
        let y = Array2::from_shape_fn((k, 1), |(i, _)| (i * i) as f64 * 0.1);
        let ds = RawDataset::new("t", u, y).unwrap();
        let pred = simulate(&model, &ds).unwrap();
        assert_eq!(pred.nrows(), k - 2);
        assert!(pred.iter().all(|&v| v == ds.outputs[[2, 0]]));
    }
}
