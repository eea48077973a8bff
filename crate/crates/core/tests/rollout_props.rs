mod common;

use ndarray::{s, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xfode::fuzzy::{AdditiveDynamics, ModelMeta, SingleInputFls};
use xfode::membership::AntecedentChain;
use xfode::rollout::{rollout, simulate};
use xfode::{Dynamics, FuzzyModel, ModelKind, RawDataset, StateConfig, StateMode, Strategy};

/// Block whose every rule outputs `slopes[o] * z` on output `o`.
fn linear_block(slopes: &[f64]) -> SingleInputFls {
    let chain = AntecedentChain::init(Strategy::Ps1, 3, -2.0, 2.0).unwrap();
    let cons = (0..3).flat_map(|_| slopes.iter().flat_map(|a| [*a, 0.0])).collect();
    SingleInputFls::new(chain, cons, slopes.len()).unwrap()
}

fn model_from(blocks: Vec<SingleInputFls>, n_y: usize, state: StateConfig) -> FuzzyModel {
    let n_x = state.n_x(n_y);
    let n_u = blocks.len() - n_x;
    FuzzyModel {
        kind: ModelKind::Xfode(Strategy::Ps1),
        rules: 3,
        n_u,
        n_y,
        state,
        norm: None,
        dynamics: Dynamics::Additive(AdditiveDynamics::new(blocks, n_x, n_u).unwrap()),
        meta: ModelMeta::default(),
    }
}

fn random_inputs(rng: &mut ChaCha8Rng, n: usize, n_u: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n_u), |_| rng.gen_range(-1.0..1.0))
}

fn first_order_record(n: usize, seed: u64) -> RawDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_inputs(&mut rng, n, 1);
    let mut y = Array2::zeros((n, 1));
    y[[0, 0]] = 0.4;
    for k in 0..n - 1 {
        y[[k + 1, 0]] = 0.9 * y[[k, 0]] + 0.1 * u[[k, 0]];
    }
    RawDataset::new("first_order", u, y).unwrap()
}

fn kind_of(i: usize) -> ModelKind {
    common::KINDS[i % 5]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn initial_state_is_copied(seed in any::<u64>(), k in 0usize..5, steps in 0usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = common::random_model(&mut rng, kind_of(k), 3, 1, 1, StateConfig::new(StateMode::Incremental, 1));
        let x0 = [rng.gen_range(-1.0..1.0), rng.gen_range(-0.1..0.1)];
        let u = random_inputs(&mut rng, steps, 1);
        let r = rollout(&model.dynamics, &x0, u.view()).unwrap();
        prop_assert_eq!(r.states.nrows(), steps + 1);
        prop_assert_eq!(r.states.row(0).to_vec(), x0.to_vec());
    }

    #[test]
    fn each_step_adds_the_derivative(seed in any::<u64>(), k in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = common::random_model(&mut rng, kind_of(k), 3, 1, 1, StateConfig::new(StateMode::Lagged, 1));
        let u = random_inputs(&mut rng, 10, 1);
        let r = rollout(&model.dynamics, &[0.2, -0.1], u.view()).unwrap();
        let ev = model.dynamics.evaluator().unwrap();
        let mut scratch = ev.scratch();
        for k in 0..10 {
            let z = [r.states[[k, 0]], r.states[[k, 1]], u[[k, 0]]];
            let mut dx = [0.0; 2];
            ev.derivative(&z, &mut dx, &mut scratch);
            for i in 0..2 {
                prop_assert_eq!(r.states[[k + 1, i]], r.states[[k, i]] + dx[i]);
            }
        }
    }

    #[test]
    fn rollouts_compose(seed in any::<u64>(), k in 0usize..5, n1 in 1usize..10, n2 in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = common::random_model(&mut rng, kind_of(k), 3, 1, 1, StateConfig::new(StateMode::Incremental, 1));
        let u = random_inputs(&mut rng, n1 + n2, 1);
        let whole = rollout(&model.dynamics, &[0.1, 0.0], u.view()).unwrap();
        let first = rollout(&model.dynamics, &[0.1, 0.0], u.slice(s![..n1, ..])).unwrap();
        let mid = first.states.row(n1).to_vec();
        let second = rollout(&model.dynamics, &mid, u.slice(s![n1.., ..])).unwrap();
        prop_assert_eq!(whole.states.slice(s![n1.., ..]), second.states.view());
        prop_assert_eq!(whole.states.slice(s![..=n1, ..]), first.states.view());
    }

    #[test]
    fn rollout_is_deterministic(seed in any::<u64>(), k in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = common::random_model(&mut rng, kind_of(k), 4, 2, 1, StateConfig::new(StateMode::Lagged, 0));
        let u = random_inputs(&mut rng, 30, 2);
        let a = rollout(&model.dynamics, &[0.3], u.view()).unwrap();
        let b = rollout(&model.dynamics, &[0.3], u.view()).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn halving_model_is_reproduced() {
    let model = model_from(vec![linear_block(&[-0.5]), linear_block(&[0.0])], 1, StateConfig::new(StateMode::Lagged, 0));
    let u = Array2::zeros((40, 1));
    let r = rollout(&model.dynamics, &[1.5], u.view()).unwrap();
    for k in 0..=40 {
        assert!((r.states[[k, 0]] - 1.5 * 0.5f64.powi(k as i32)).abs() < 1e-10);
    }
}

#[test]
fn incremental_state_reproduces_linear_system() {
    let model = model_from(
        vec![
            linear_block(&[-0.1, -0.1, -0.1]),
            linear_block(&[0.0, -1.0, -1.0]),
            linear_block(&[0.0, 0.0, -1.0]),
            linear_block(&[0.1, 0.1, 0.1]),
        ],
        1,
        StateConfig::new(StateMode::Incremental, 2),
    );
    let ds = first_order_record(1000, 5);
    let pred = simulate(&model, &ds).unwrap();
    assert_eq!(pred.nrows(), 998);
    let worst = (0..998).map(|r| (pred[[r, 0]] - ds.outputs[[r + 2, 0]]).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-8, "max error {worst}");
}

#[test]
fn zero_model_holds_last_measured_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for mode in [StateMode::Lagged, StateMode::Incremental] {
        let state = StateConfig::new(mode, 2);
        let mut model = common::random_model(&mut rng, ModelKind::Xfode(Strategy::Ps2), 3, 1, 1, state);
        common::zero_consequents(&mut model.dynamics);
        let ds = first_order_record(200, 8);
        let pred = simulate(&model, &ds).unwrap();
        assert_eq!(pred.nrows(), 198);
        assert!(pred.iter().all(|v| *v == ds.outputs[[2, 0]]));
    }
}

#[test]
fn simulation_length_is_k_minus_m() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ds = first_order_record(150, 2);
    for m in 0..4 {
        for mode in [StateMode::Lagged, StateMode::Incremental] {
            let mut model = common::random_model(&mut rng, ModelKind::Afode, 3, 1, 1, StateConfig::new(mode, m));
            common::zero_consequents(&mut model.dynamics);
            assert_eq!(simulate(&model, &ds).unwrap().dim(), (150 - m, 1));
        }
    }
}

#[test]
fn mismatched_record_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = common::random_model(&mut rng, ModelKind::Afode, 3, 2, 1, StateConfig::new(StateMode::Lagged, 0));
    assert!(simulate(&model, &first_order_record(120, 0)).is_err());
    assert!(rollout(&model.dynamics, &[0.0, 0.0], Array2::zeros((3, 2)).view()).is_err());
}
