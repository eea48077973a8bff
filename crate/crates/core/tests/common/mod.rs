#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use xfode::fuzzy::{AdditiveDynamics, Dynamics, SingleInputFls};
use xfode::membership::{AntecedentChain, Strategy};
use xfode::{FuzzyModel, ModelKind, StateConfig};

pub const STRATEGIES: [Strategy; 4] = [Strategy::Ps1, Strategy::Ps2, Strategy::Ps3, Strategy::FreeGauss];

pub const KINDS: [ModelKind; 5] = [
    ModelKind::Xfode(Strategy::Ps1),
    ModelKind::Xfode(Strategy::Ps2),
    ModelKind::Xfode(Strategy::Ps3),
    ModelKind::Afode,
    ModelKind::Fode,
];

pub fn random_chain(rng: &mut ChaCha8Rng, strategy: Strategy, rules: usize) -> AntecedentChain {
    let lo = rng.gen_range(-2.0..1.0);
    let hi = lo + rng.gen_range(0.5..4.0);
    let mut chain = AntecedentChain::init(strategy, rules, lo, hi).unwrap();
    for r in chain.raw.iter_mut() {
        *r += rng.gen_range(-0.5..0.5);
    }
    chain
}

pub fn random_fls(rng: &mut ChaCha8Rng, strategy: Strategy, rules: usize, n_x: usize) -> SingleInputFls {
    let chain = random_chain(rng, strategy, rules);
    let cons = (0..rules * n_x * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
    SingleInputFls::new(chain, cons, n_x).unwrap()
}

pub fn random_additive(rng: &mut ChaCha8Rng, strategy: Strategy, rules: usize, n_x: usize, n_u: usize) -> AdditiveDynamics {
    let blocks = (0..n_x + n_u).map(|_| random_fls(rng, strategy, rules, n_x)).collect();
    AdditiveDynamics::new(blocks, n_x, n_u).unwrap()
}

/// Freshly initialized model with every parameter jittered.
pub fn random_model(rng: &mut ChaCha8Rng, kind: ModelKind, rules: usize, n_u: usize, n_y: usize, st: StateConfig) -> FuzzyModel {
    let n_z = st.n_x(n_y) + n_u;
    let mut m = FuzzyModel::init(kind, rules, n_u, n_y, st, &vec![(-1.0, 1.0); n_z], rng.gen()).unwrap();
    let theta: Vec<f64> = m.dynamics.params().iter().map(|v| v + rng.gen_range(-0.2..0.2)).collect();
    m.dynamics.set_params(&theta).unwrap();
    m
}

/// Sets every consequent of an additive model to zero.
pub fn zero_consequents(d: &mut Dynamics) {
    if let Dynamics::Additive(a) = d {
        for b in &mut a.blocks {
            b.consequents.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}
