mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_additive, random_fls};
use xfode::fuzzy::{AdditiveDynamics, Dynamics, FodeDynamics, SingleInputFls};
use xfode::membership::{softplus, softplus_inverse, AntecedentChain, Strategy};

fn constant_block(values: &[f64]) -> SingleInputFls {
    let chain = AntecedentChain::init(Strategy::Ps2, 3, -1.0, 1.0).unwrap();
    let mut cons = Vec::new();
    for _ in 0..3 {
        for v in values {
            cons.extend([0.0, *v]);
        }
    }
    SingleInputFls::new(chain, cons, values.len()).unwrap()
}

#[test]
fn zero_consequents_give_zero_dynamics() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut d = random_additive(&mut rng, Strategy::Ps1, 5, 3, 1);
    for b in &mut d.blocks {
        b.consequents.iter_mut().for_each(|v| *v = 0.0);
    }
    for _ in 0..50 {
        let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
        assert_eq!(d.infer(&z).unwrap().0, vec![0.0; 3]);
    }
}

#[test]
fn additive_sum_of_two_blocks() {
    let d = AdditiveDynamics::new(vec![constant_block(&[1.0, 0.0]), constant_block(&[0.5, -1.0])], 2, 0).unwrap();
    let (total, parts) = d.infer(&[0.3, -0.2]).unwrap();
    assert_eq!(total, vec![1.5, -1.0]);
    assert_eq!(parts, vec![vec![1.0, 0.0], vec![0.5, -1.0]]);
    assert!(d.infer(&[0.0]).is_err());
}

fn strategy_of(i: usize) -> Strategy {
    common::STRATEGIES[i % 4]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn additive_equals_sum_of_blocks(seed in any::<u64>(), s in 0usize..4, n_x in 1usize..4, n_u in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_additive(&mut rng, strategy_of(s), 4, n_x, n_u);
        let z: Vec<f64> = (0..n_x + n_u).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (total, _) = d.infer(&z).unwrap();
        let mut expect = vec![0.0; n_x];
        for (b, zi) in d.blocks.iter().zip(&z) {
            for (e, v) in expect.iter_mut().zip(b.infer(*zi).unwrap()) {
                *e += v;
            }
        }
        prop_assert_eq!(total, expect);
    }

    #[test]
    fn scaling_grades_leaves_output_unchanged(seed in any::<u64>(), s in 0usize..4, k in 1e-6f64..1e6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fls = random_fls(&mut rng, strategy_of(s), 5, 2);
        let mfs = fls.chain.decode().unwrap();
        let (lo, hi) = (mfs.centers[0], mfs.centers[4]);
        for _ in 0..20 {
            let z = rng.gen_range(lo..hi);
            let mu = mfs.grades(z);
            let den: f64 = mu.iter().map(|m| k * m).sum();
            prop_assume!(den > 0.0);
            let out = fls.infer(z).unwrap();
            for (o, got) in out.iter().enumerate() {
                let num: f64 = mu.iter().enumerate().map(|(p, m)| {
                    let (a, b) = fls.consequent(p, o);
                    k * m * (a * z + b)
                }).sum();
                prop_assert!((num / den - got).abs() <= 1e-9 * (1.0 + got.abs()));
            }
        }
    }

    #[test]
    fn output_within_active_pair_hull(seed in any::<u64>(), s in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let strategy = strategy_of(s);
        let fls = random_fls(&mut rng, strategy, 5, 2);
        let mfs = fls.chain.decode().unwrap();
        for _ in 0..50 {
            let z = rng.gen_range(mfs.anchors[0]..mfs.anchors[4]);
            let a = mfs.active_pair(z).first - 1;
            let out = fls.infer(z).unwrap();
            for (o, v) in out.iter().enumerate() {
                let d = |p: usize| { let (s1, b) = fls.consequent(p, o); s1 * z + b };
                let (lo, hi) = (d(a).min(d(a + 1)), d(a).max(d(a + 1)));
                let max_d = (0..5).map(|p| d(p).abs()).fold(0.0, f64::max);
                let tol = if strategy == Strategy::Ps2 { 5e-4 * max_d } else { 1e-12 * (1.0 + max_d) };
                prop_assert!(*v >= lo - tol && *v <= hi + tol, "{} not in [{}, {}]", v, lo, hi);
            }
        }
    }
}

/// Largest step on a fine grid compared with the steepest coarse slope.
fn max_jump_ratio(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let coarse = 400;
    let hc = (hi - lo) / coarse as f64;
    let mut slope = 1e-12f64;
    for i in 0..coarse {
        let z = lo + hc * i as f64;
        slope = slope.max((f(z + hc) - f(z)).abs() / hc);
    }
    let fine = 40_000;
    let hf = (hi - lo) / fine as f64;
    let mut worst = 0.0f64;
    for i in 0..fine {
        let z = lo + hf * i as f64;
        worst = worst.max((f(z + hf) - f(z)).abs() / (slope * hf));
    }
    worst
}

#[test]
fn inference_is_continuous() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for strategy in [Strategy::Ps1, Strategy::Ps2, Strategy::FreeGauss] {
        for _ in 0..5 {
            let fls = random_fls(&mut rng, strategy, 5, 1);
            let (lo, hi) = fls.chain.decode().unwrap().plot_range();
            let r = max_jump_ratio(|z| fls.infer(z).unwrap()[0], lo, hi);
            assert!(r < 3.0, "{strategy}: jump ratio {r}");
        }
    }
}

#[test]
fn ps3_is_continuous_within_segments() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let fls = random_fls(&mut rng, Strategy::Ps3, 5, 1);
        let a = fls.chain.decode().unwrap().anchors;
        for w in a.windows(2) {
            let eps = (w[1] - w[0]) * 1e-9;
            let r = max_jump_ratio(|z| fls.infer(z).unwrap()[0], w[0], w[1] - eps);
            assert!(r < 3.0, "jump ratio {r} on [{}, {}]", w[0], w[1]);
        }
    }
}

fn random_fode(rng: &mut ChaCha8Rng, rules: usize, n_x: usize, n_u: usize) -> FodeDynamics {
    let n_z = n_x + n_u;
    FodeDynamics {
        rules,
        n_x,
        n_u,
        centers: (0..rules * n_z).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        sigma_raw: (0..rules * n_z).map(|_| softplus_inverse(rng.gen_range(0.3..1.5)).unwrap()).collect(),
        consequents: (0..rules * n_x * (n_z + 1)).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

/// Product of Gaussians without any rescaling.
fn fode_reference(f: &FodeDynamics, z: &[f64]) -> Vec<f64> {
    let n_z = f.n_x + f.n_u;
    let w: Vec<f64> = (0..f.rules)
        .map(|p| {
            (0..n_z)
                .map(|i| {
                    let s = softplus(f.sigma_raw[p * n_z + i]);
                    (-(z[i] - f.centers[p * n_z + i]).powi(2) / (2.0 * s * s)).exp()
                })
                .product()
        })
        .collect();
    let total: f64 = w.iter().sum();
    (0..f.n_x)
        .map(|o| {
            (0..f.rules)
                .map(|p| {
                    let row = &f.consequents[(p * f.n_x + o) * (n_z + 1)..][..n_z + 1];
                    let d: f64 = row[..n_z].iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + row[n_z];
                    w[p] * d
                })
                .sum::<f64>()
                / total
        })
        .collect()
}

#[test]
fn fode_matches_reference_implementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..100 {
        let f = random_fode(&mut rng, 5, 3, 1);
        let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let got = f.infer(&z).unwrap();
        for (a, b) in got.iter().zip(fode_reference(&f, &z)) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn fode_single_rule_and_shared_consequents() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let f = random_fode(&mut rng, 1, 2, 2);
    let z = [0.3, -0.2, 0.9, 0.1];
    let got = f.infer(&z).unwrap();
    for (o, v) in got.iter().enumerate() {
        let row = &f.consequents[o * 5..o * 5 + 5];
        let d: f64 = row[..4].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + row[4];
        assert!((v - d).abs() < 1e-14);
    }
    let mut g = random_fode(&mut rng, 5, 1, 1);
    let shared: Vec<f64> = g.consequents[..3].to_vec();
    for p in 0..5 {
        g.consequents[p * 3..p * 3 + 3].copy_from_slice(&shared);
    }
    for _ in 0..20 {
        let z = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let expect = shared[0] * z[0] + shared[1] * z[1] + shared[2];
        assert!((g.infer(&z).unwrap()[0] - expect).abs() < 1e-12);
    }
    assert!(g.infer(&[0.0]).is_err());
}

#[test]
fn evaluator_matches_direct_inference() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for s in common::STRATEGIES {
        let d = random_additive(&mut rng, s, 5, 2, 1);
        let dyn_ = Dynamics::Additive(d.clone());
        let ev = dyn_.evaluator().unwrap();
        let mut scratch = ev.scratch();
        for _ in 0..50 {
            let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut out = vec![0.0; 2];
            ev.derivative(&z, &mut out, &mut scratch);
            assert_eq!(out, d.infer(&z).unwrap().0);
        }
    }
}
