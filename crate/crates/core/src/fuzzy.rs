//! First-order TSK fuzzy dynamics: single-input blocks, their additive sum,
//! and the multi-input FODE baseline.
//!
//! Every model exposes a flat parameter vector (antecedent raw parameters and
//! consequents in declaration order) and an [`Evaluator`] that caches decoded
//! membership functions for fast forward and vector-Jacobian evaluation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::dataset::NormStats;
use crate::error::{Error, Result};
use crate::membership::{softplus, softplus_grad, softplus_inverse, AntecedentChain, DecodedGrad, DecodedMfs, Strategy};
use crate::state_repr::StateConfig;

/// Grade sums below this fall back to the nearest rule.
pub const DENOM_EPS: f64 = 1e-12;

/// Consequent initialization range `[-CONSEQUENT_INIT, CONSEQUENT_INIT]`.
pub const CONSEQUENT_INIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Additive single-input blocks with a partitioning strategy.
    Xfode(Strategy),
    /// Additive single-input blocks with free Gaussian MFs.
    Afode,
    /// One multi-input FLS with Gaussian MFs and product t-norm.
    Fode,
}

impl ModelKind {
    pub fn from_parts(kind: &str, ps: Option<Strategy>) -> Result<Self> {
        match kind.trim().to_ascii_lowercase().as_str() {
            "xfode" => match ps {
                Some(s) if s.is_partitioned() => Ok(ModelKind::Xfode(s)),
                Some(_) => Err(Error::InvalidConfig("xfode needs PS1, PS2 or PS3".into())),
                None => Ok(ModelKind::Xfode(Strategy::Ps1)),
            },
            "afode" => Ok(ModelKind::Afode),
            "fode" => Ok(ModelKind::Fode),
            other => Err(Error::InvalidConfig(format!("unknown model kind {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Xfode(_) => "xfode",
            ModelKind::Afode => "afode",
            ModelKind::Fode => "fode",
        }
    }

    pub fn strategy(self) -> Strategy {
        match self {
            ModelKind::Xfode(s) => s,
            _ => Strategy::FreeGauss,
        }
    }

    /// Learnable parameter count for `rules` rules, state size `n_x` and
    /// combined input size `n_z`.
    pub fn count_parameters(self, rules: usize, n_x: usize, n_z: usize) -> usize {
        match self {
            ModelKind::Xfode(_) => n_z * (2 + rules + 2 * rules * n_x),
            ModelKind::Afode => n_z * (2 * rules + 2 * rules * n_x),
            ModelKind::Fode => 2 * rules * n_z + rules * (n_z + 1) * n_x,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Xfode(s) => write!(f, "xFODE-{s}"),
            ModelKind::Afode => f.write_str("AFODE"),
            ModelKind::Fode => f.write_str("FODE"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    /// Accepts `fode`, `afode`, `xfode` (PS1) and `xfode-ps{1,2,3}`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.split_once('-') {
            Some((k, ps)) => ModelKind::from_parts(k, Some(ps.parse()?)),
            None => ModelKind::from_parts(&lower, None),
        }
    }
}

/// One single-input FLS: `P` rules, each with an affine consequent per state
/// component, `d_{p,o}(z) = a_p^o z + a_{p,0}^o`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleInputFls {
    pub chain: AntecedentChain,
    /// `P x n_x x 2`, slope then intercept.
    pub consequents: Vec<f64>,
    pub n_x: usize,
}

impl SingleInputFls {
    pub fn new(chain: AntecedentChain, consequents: Vec<f64>, n_x: usize) -> Result<Self> {
        let expected = chain.rules * n_x * 2;
        if consequents.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: consequents.len() });
        }
        Ok(Self { chain, consequents, n_x })
    }

    pub fn rules(&self) -> usize {
        self.chain.rules
    }

    pub fn num_params(&self) -> usize {
        self.chain.raw.len() + self.consequents.len()
    }

    /// `(slope, intercept)` of rule `p`, output `o` (both 0-based).
    pub fn consequent(&self, p: usize, o: usize) -> (f64, f64) {
        let i = (p * self.n_x + o) * 2;
        (self.consequents[i], self.consequents[i + 1])
    }

    /// Normalized weighted average of all rule consequents at `z`.
    pub fn infer(&self, z: f64) -> Result<Vec<f64>> {
        let mfs = self.chain.decode()?;
        let mut scratch = Scratch::new(self.rules(), self.n_x);
        let mut out = vec![0.0; self.n_x];
        block_forward(&mfs, &self.consequents, self.n_x, z, &mut scratch, &mut out);
        Ok(out)
    }

    /// Inference restricted to the active pair of consecutive rules.
    pub fn infer_two_rule(&self, z: f64) -> Result<Vec<f64>> {
        let mfs = self.chain.decode()?;
        let n = self.rules();
        let (mut g, mut dg) = (vec![0.0; n], vec![0.0; n]);
        mfs.scaled_grades(z, &mut g, &mut dg);
        let a = mfs.active_pair(z).first - 1;
        let sum = g[a] + g[a + 1];
        if sum < DENOM_EPS {
            let p = mfs.nearest_rule(z);
            return Ok((0..self.n_x).map(|o| self.affine(p, o, z)).collect());
        }
        Ok((0..self.n_x)
            .map(|o| (g[a] * self.affine(a, o, z) + g[a + 1] * self.affine(a + 1, o, z)) / sum)
            .collect())
    }

    fn affine(&self, p: usize, o: usize, z: f64) -> f64 {
        let (a, b) = self.consequent(p, o);
        a * z + b
    }
}

/// `x_{k+1} - x_k = sum_i f_i(z_i)` over the combined input `z = [x; u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveDynamics {
    pub blocks: Vec<SingleInputFls>,
    pub n_x: usize,
    pub n_u: usize,
}

impl AdditiveDynamics {
    pub fn new(blocks: Vec<SingleInputFls>, n_x: usize, n_u: usize) -> Result<Self> {
        if blocks.len() != n_x + n_u {
            return Err(Error::DimensionMismatch { expected: n_x + n_u, found: blocks.len() });
        }
        if let Some(b) = blocks.iter().find(|b| b.n_x != n_x) {
            return Err(Error::DimensionMismatch { expected: n_x, found: b.n_x });
        }
        Ok(Self { blocks, n_x, n_u })
    }

    /// Sum of block outputs and the per-block contributions.
    pub fn infer(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if z.len() != self.blocks.len() {
            return Err(Error::DimensionMismatch { expected: self.blocks.len(), found: z.len() });
        }
        let parts: Vec<Vec<f64>> =
            self.blocks.iter().zip(z).map(|(b, &zi)| b.infer(zi)).collect::<Result<_>>()?;
        let mut total = vec![0.0; self.n_x];
        for part in &parts {
            for (t, v) in total.iter_mut().zip(part) {
                *t += v;
            }
        }
        Ok((total, parts))
    }

    /// Same dynamics in affine-transformed coordinates `z' = (z - shift) / scale`.
    ///
    /// State increments scale by `scale[..n_x]` only; shifts cancel in
    /// `x_{k+1} - x_k`.
    pub fn change_coordinates(&self, shift: &[f64], scale: &[f64]) -> Result<Self> {
        let n_z = self.blocks.len();
        if shift.len() != n_z || scale.len() != n_z {
            return Err(Error::DimensionMismatch { expected: n_z, found: shift.len().min(scale.len()) });
        }
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let (a, s) = (shift[i], scale[i]);
                let mut raw = b.chain.raw.clone();
                let n = b.rules();
                match b.chain.strategy {
                    Strategy::FreeGauss => {
                        for p in 0..n {
                            raw[p] = (raw[p] - a) / s;
                            raw[n + p] = softplus_inverse(softplus(raw[n + p]) / s)?;
                        }
                    }
                    _ => {
                        raw[0] = (raw[0] - a) / s;
                        for r in raw.iter_mut().skip(1) {
                            *r = softplus_inverse(softplus(*r) / s)?;
                        }
                    }
                }
                let mut cons = b.consequents.clone();
                for p in 0..n {
                    for o in 0..self.n_x {
                        let j = (p * self.n_x + o) * 2;
                        let (slope, icpt) = (cons[j], cons[j + 1]);
                        cons[j] = slope * s / scale[o];
                        cons[j + 1] = (slope * a + icpt) / scale[o];
                    }
                }
                SingleInputFls::new(AntecedentChain::new(b.chain.strategy, n, raw)?, cons, self.n_x)
            })
            .collect::<Result<_>>()?;
        AdditiveDynamics::new(blocks, self.n_x, self.n_u)
    }
}

/// Multi-input FLS baseline: `w_p(z) = prod_i exp(-(z_i - c_pi)^2 / 2 s_pi^2)`,
/// consequents affine in the whole `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct FodeDynamics {
    pub rules: usize,
    pub n_x: usize,
    pub n_u: usize,
    /// `P x n_z`
    pub centers: Vec<f64>,
    /// `P x n_z`, softplus-encoded
    pub sigma_raw: Vec<f64>,
    /// `P x n_x x (n_z + 1)`, slopes then intercept
    pub consequents: Vec<f64>,
}

impl FodeDynamics {
    pub fn n_z(&self) -> usize {
        self.n_x + self.n_u
    }

    pub fn num_params(&self) -> usize {
        self.centers.len() + self.sigma_raw.len() + self.consequents.len()
    }

    pub fn infer(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n_z() {
            return Err(Error::DimensionMismatch { expected: self.n_z(), found: z.len() });
        }
        let dynamics = Dynamics::Fode(self.clone());
        let ev = dynamics.evaluator()?;
        let mut out = vec![0.0; self.n_x];
        ev.derivative(z, &mut out, &mut ev.scratch());
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    Additive(AdditiveDynamics),
    Fode(FodeDynamics),
}

impl Dynamics {
    pub fn n_x(&self) -> usize {
        match self {
            Dynamics::Additive(a) => a.n_x,
            Dynamics::Fode(f) => f.n_x,
        }
    }

    pub fn n_u(&self) -> usize {
        match self {
            Dynamics::Additive(a) => a.n_u,
            Dynamics::Fode(f) => f.n_u,
        }
    }

    pub fn n_z(&self) -> usize {
        self.n_x() + self.n_u()
    }

    pub fn num_params(&self) -> usize {
        match self {
            Dynamics::Additive(a) => a.blocks.iter().map(SingleInputFls::num_params).sum(),
            Dynamics::Fode(f) => f.num_params(),
        }
    }

    /// Flat parameter vector in declaration order.
    pub fn params(&self) -> Vec<f64> {
        match self {
            Dynamics::Additive(a) => a
                .blocks
                .iter()
                .flat_map(|b| b.chain.raw.iter().chain(&b.consequents).copied())
                .collect(),
            Dynamics::Fode(f) => {
                f.centers.iter().chain(&f.sigma_raw).chain(&f.consequents).copied().collect()
            }
        }
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::DimensionMismatch { expected: self.num_params(), found: theta.len() });
        }
        match self {
            Dynamics::Additive(a) => {
                let mut at = 0;
                for b in &mut a.blocks {
                    for dst in b.chain.raw.iter_mut().chain(b.consequents.iter_mut()) {
                        *dst = theta[at];
                        at += 1;
                    }
                }
            }
            Dynamics::Fode(f) => {
                let mut it = theta.iter();
                for dst in f.centers.iter_mut().chain(f.sigma_raw.iter_mut()).chain(f.consequents.iter_mut()) {
                    *dst = *it.next().unwrap();
                }
            }
        }
        Ok(())
    }

    pub fn evaluator(&self) -> Result<Evaluator<'_>> {
        let (decoded, sigma) = match self {
            Dynamics::Additive(a) => {
                (a.blocks.iter().map(|b| b.chain.decode()).collect::<Result<Vec<_>>>()?, Vec::new())
            }
            Dynamics::Fode(f) => {
                if let Some(i) = f.centers.iter().chain(&f.sigma_raw).position(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteParameter(i));
                }
                (Vec::new(), f.sigma_raw.iter().map(|&r| softplus(r)).collect())
            }
        };
        Ok(Evaluator { dynamics: self, decoded, sigma })
    }

    /// Decoded antecedents of every additive block (empty for FODE).
    pub fn decoded(&self) -> Result<Vec<DecodedMfs>> {
        match self {
            Dynamics::Additive(a) => a.blocks.iter().map(|b| b.chain.decode()).collect(),
            Dynamics::Fode(_) => Ok(Vec::new()),
        }
    }
}

/// Work buffers reused across evaluations.
#[derive(Debug, Clone)]
pub struct Scratch {
    g: Vec<f64>,
    dg: Vec<f64>,
    w: Vec<f64>,
    e: Vec<f64>,
    block_out: Vec<f64>,
}

impl Scratch {
    pub fn new(rules: usize, n_x: usize) -> Self {
        Self {
            g: vec![0.0; rules],
            dg: vec![0.0; rules],
            w: vec![0.0; rules],
            e: vec![0.0; rules],
            block_out: vec![0.0; n_x],
        }
    }
}

/// Gradient accumulator matching [`Dynamics::params`] layout.
#[derive(Debug, Clone)]
pub struct GradAccumulator {
    /// Consequent (and FODE antecedent, in decoded space) gradients; chain
    /// slots stay zero until [`Evaluator::finish`].
    flat: Vec<f64>,
    decoded: Vec<DecodedGrad>,
}

impl GradAccumulator {
    pub fn add(&mut self, other: &GradAccumulator) {
        for (a, b) in self.flat.iter_mut().zip(&other.flat) {
            *a += b;
        }
        for (a, b) in self.decoded.iter_mut().zip(&other.decoded) {
            for (x, y) in a.centers.iter_mut().zip(&b.centers) {
                *x += y;
            }
            for (x, y) in a.left.iter_mut().zip(&b.left) {
                *x += y;
            }
            for (x, y) in a.right.iter_mut().zip(&b.right) {
                *x += y;
            }
        }
    }
}

/// Frozen view of a model with decoded antecedents.
pub struct Evaluator<'a> {
    dynamics: &'a Dynamics,
    decoded: Vec<DecodedMfs>,
    sigma: Vec<f64>,
}

/// Forward pass of one single-input block. Returns the fallback rule when the
/// grade sum vanishes.
fn block_forward(
    mfs: &DecodedMfs,
    cons: &[f64],
    n_x: usize,
    z: f64,
    s: &mut Scratch,
    out: &mut [f64],
) -> Option<usize> {
    let n = mfs.rules();
    mfs.scaled_grades(z, &mut s.g[..n], &mut s.dg[..n]);
    let sum: f64 = s.g[..n].iter().sum();
    if !(sum >= DENOM_EPS) {
        let p = mfs.nearest_rule(z);
        for (o, v) in out.iter_mut().enumerate() {
            let j = (p * n_x + o) * 2;
            *v = cons[j] * z + cons[j + 1];
        }
        return Some(p);
    }
    out.iter_mut().for_each(|v| *v = 0.0);
    for p in 0..n {
        let gp = s.g[p];
        if gp == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().enumerate() {
            let j = (p * n_x + o) * 2;
            *v += gp * (cons[j] * z + cons[j + 1]);
        }
    }
    out.iter_mut().for_each(|v| *v /= sum);
    None
}

impl<'a> Evaluator<'a> {
    pub fn dynamics(&self) -> &Dynamics {
        self.dynamics
    }

    pub fn decoded(&self) -> &[DecodedMfs] {
        &self.decoded
    }

    pub fn scratch(&self) -> Scratch {
        let rules = match self.dynamics {
            Dynamics::Additive(a) => a.blocks.iter().map(|b| b.rules()).max().unwrap_or(0),
            Dynamics::Fode(f) => f.rules,
        };
        Scratch::new(rules, self.dynamics.n_x())
    }

    pub fn zero_grad(&self) -> GradAccumulator {
        GradAccumulator {
            flat: vec![0.0; self.dynamics.num_params()],
            decoded: self.decoded.iter().map(|d| DecodedGrad::zeros(d.rules())).collect(),
        }
    }

    /// State increment at combined input `z` (length `n_z`).
    pub fn derivative(&self, z: &[f64], out: &mut [f64], s: &mut Scratch) {
        match self.dynamics {
            Dynamics::Additive(a) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                let mut block_out = std::mem::take(&mut s.block_out);
                for ((b, mfs), &zi) in a.blocks.iter().zip(&self.decoded).zip(z) {
                    block_forward(mfs, &b.consequents, a.n_x, zi, s, &mut block_out);
                    for (t, v) in out.iter_mut().zip(&block_out) {
                        *t += v;
                    }
                }
                s.block_out = block_out;
            }
            Dynamics::Fode(f) => {
                self.fode_weights(f, z, s);
                let sum: f64 = s.g[..f.rules].iter().sum();
                let n_z = f.n_z();
                out.iter_mut().for_each(|v| *v = 0.0);
                for p in 0..f.rules {
                    for (o, v) in out.iter_mut().enumerate() {
                        *v += s.g[p] * fode_affine(f, p, o, z);
                    }
                }
                let _ = n_z;
                out.iter_mut().for_each(|v| *v /= sum);
            }
        }
    }

    /// Per-block contributions `d_i` (`n_z x n_x`). FODE reports a single block.
    pub fn contributions(&self, z: &[f64], s: &mut Scratch) -> Vec<Vec<f64>> {
        match self.dynamics {
            Dynamics::Additive(a) => a
                .blocks
                .iter()
                .zip(&self.decoded)
                .zip(z)
                .map(|((b, mfs), &zi)| {
                    let mut o = vec![0.0; a.n_x];
                    block_forward(mfs, &b.consequents, a.n_x, zi, s, &mut o);
                    o
                })
                .collect(),
            Dynamics::Fode(f) => {
                let mut o = vec![0.0; f.n_x];
                self.derivative(z, &mut o, s);
                vec![o]
            }
        }
    }

    /// Log-domain rule weights, shifted so the largest is 1.
    fn fode_weights(&self, f: &FodeDynamics, z: &[f64], s: &mut Scratch) {
        let n_z = f.n_z();
        let mut top = f64::NEG_INFINITY;
        for p in 0..f.rules {
            let mut e = 0.0;
            for i in 0..n_z {
                let d = z[i] - f.centers[p * n_z + i];
                let sg = self.sigma[p * n_z + i];
                e -= d * d / (2.0 * sg * sg);
            }
            s.e[p] = e;
            top = top.max(e);
        }
        for p in 0..f.rules {
            s.g[p] = (s.e[p] - top).exp();
        }
    }

    /// Vector-Jacobian product of the state increment at `z` with `upstream`:
    /// adds `upstream^T dF/dz` to `grad_z` and `upstream^T dF/dtheta` to `acc`.
    pub fn backward(&self, z: &[f64], upstream: &[f64], grad_z: &mut [f64], acc: &mut GradAccumulator, s: &mut Scratch) {
        match self.dynamics {
            Dynamics::Additive(a) => {
                let n_x = a.n_x;
                let mut offset = 0;
                let mut f = std::mem::take(&mut s.block_out);
                for (i, (b, mfs)) in a.blocks.iter().zip(&self.decoded).enumerate() {
                    let zi = z[i];
                    let n = b.rules();
                    let cons_off = offset + b.chain.raw.len();
                    let cons = &b.consequents;
                    let fallback = block_forward(mfs, cons, n_x, zi, s, &mut f);
                    let gcons = &mut acc.flat[cons_off..cons_off + cons.len()];
                    if let Some(p) = fallback {
                        for o in 0..n_x {
                            let j = (p * n_x + o) * 2;
                            gcons[j] += upstream[o] * zi;
                            gcons[j + 1] += upstream[o];
                            grad_z[i] += upstream[o] * cons[j];
                        }
                    } else {
                        let sum: f64 = s.g[..n].iter().sum();
                        let mut gz = 0.0;
                        for p in 0..n {
                            let gp = s.g[p];
                            if gp == 0.0 {
                                s.w[p] = 0.0;
                                continue;
                            }
                            let omega = gp / sum;
                            let mut wp = 0.0;
                            for o in 0..n_x {
                                let j = (p * n_x + o) * 2;
                                let up = upstream[o];
                                gcons[j] += up * omega * zi;
                                gcons[j + 1] += up * omega;
                                gz += up * omega * cons[j];
                                wp += up * (cons[j] * zi + cons[j + 1] - f[o]);
                            }
                            s.w[p] = wp / sum;
                            gz += s.w[p] * s.dg[p];
                        }
                        grad_z[i] += gz;
                        mfs.accumulate_grad(zi, &s.g[..n], &s.w[..n], &mut acc.decoded[i]);
                    }
                    offset = cons_off + cons.len();
                }
                s.block_out = f;
            }
            Dynamics::Fode(fd) => {
                let n_z = fd.n_z();
                let n_x = fd.n_x;
                let rules = fd.rules;
                self.fode_weights(fd, z, s);
                let sum: f64 = s.g[..rules].iter().sum();
                let mut out = std::mem::take(&mut s.block_out);
                out.iter_mut().for_each(|v| *v = 0.0);
                for p in 0..rules {
                    for (o, v) in out.iter_mut().enumerate() {
                        *v += s.g[p] * fode_affine(fd, p, o, z);
                    }
                }
                out.iter_mut().for_each(|v| *v /= sum);
                let c_off = 0;
                let s_off = rules * n_z;
                let q_off = 2 * rules * n_z;
                for p in 0..rules {
                    let omega = s.g[p] / sum;
                    let mut wp = 0.0;
                    for o in 0..n_x {
                        let up = upstream[o];
                        let base = q_off + (p * n_x + o) * (n_z + 1);
                        for i in 0..n_z {
                            acc.flat[base + i] += up * omega * z[i];
                            grad_z[i] += up * omega * fd.consequents[base - q_off + i];
                        }
                        acc.flat[base + n_z] += up * omega;
                        wp += up * (fode_affine(fd, p, o, z) - out[o]);
                    }
                    // dL/de_p
                    let t = wp / sum * s.g[p];
                    for i in 0..n_z {
                        let k = p * n_z + i;
                        let sg = self.sigma[k];
                        let d = z[i] - fd.centers[k];
                        acc.flat[c_off + k] += t * d / (sg * sg);
                        acc.flat[s_off + k] += t * d * d / (sg * sg * sg);
                        grad_z[i] -= t * d / (sg * sg);
                    }
                }
                s.block_out = out;
            }
        }
    }

    /// Converts accumulated gradients to raw-parameter space.
    pub fn finish(&self, acc: GradAccumulator) -> Vec<f64> {
        let mut flat = acc.flat;
        match self.dynamics {
            Dynamics::Additive(a) => {
                let mut offset = 0;
                for (b, g) in a.blocks.iter().zip(&acc.decoded) {
                    let len = b.chain.raw.len();
                    b.chain.backward(g, &mut flat[offset..offset + len]);
                    offset += len + b.consequents.len();
                }
            }
            Dynamics::Fode(f) => {
                let s_off = f.rules * f.n_z();
                for (k, r) in f.sigma_raw.iter().enumerate() {
                    flat[s_off + k] *= softplus_grad(*r);
                }
            }
        }
        flat
    }
}

fn fode_affine(f: &FodeDynamics, p: usize, o: usize, z: &[f64]) -> f64 {
    let n_z = f.n_z();
    let base = (p * f.n_x + o) * (n_z + 1);
    let row = &f.consequents[base..base + n_z + 1];
    row[..n_z].iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + row[n_z]
}

/// Metadata carried in the model file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: u64,
    pub epochs: usize,
    pub final_loss: Option<f64>,
}

/// A complete identified model: dynamics plus the configuration needed to
/// simulate it on raw data.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyModel {
    pub kind: ModelKind,
    pub rules: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub state: StateConfig,
    pub norm: Option<NormStats>,
    pub dynamics: Dynamics,
    pub meta: ModelMeta,
}

impl FuzzyModel {
    /// Fresh model. `domains` gives `(min, max)` per combined-input dimension;
    /// consequents are drawn uniformly from `[-0.1, 0.1]`.
    pub fn init(
        kind: ModelKind,
        rules: usize,
        n_u: usize,
        n_y: usize,
        state: StateConfig,
        domains: &[(f64, f64)],
        seed: u64,
    ) -> Result<Self> {
        let n_x = state.n_x(n_y);
        let n_z = n_x + n_u;
        if domains.len() != n_z {
            return Err(Error::DimensionMismatch { expected: n_z, found: domains.len() });
        }
        if rules < 2 && kind != ModelKind::Fode || rules == 0 {
            return Err(Error::InvalidConfig(format!("invalid rule count {rules}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cons = |len: usize| -> Vec<f64> {
            (0..len).map(|_| rng.gen_range(-CONSEQUENT_INIT..=CONSEQUENT_INIT)).collect()
        };
        let dynamics = match kind {
            ModelKind::Fode => {
                let consequents = cons(rules * n_x * (n_z + 1));
                let mut centers = vec![0.0; rules * n_z];
                let mut sigma_raw = vec![0.0; rules * n_z];
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
                for (i, &(lo, hi)) in domains.iter().enumerate() {
                    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
                    let mut order: Vec<usize> = (0..rules).collect();
                    for j in (1..rules).rev() {
                        order.swap(j, rng.gen_range(0..=j));
                    }
                    let gaps = (rules.max(2) - 1) as f64;
                    let sig = softplus_inverse((hi - lo) / gaps)?;
                    for p in 0..rules {
                        centers[p * n_z + i] = lo + (hi - lo) * order[p] as f64 / gaps;
                        sigma_raw[p * n_z + i] = sig;
                    }
                }
                Dynamics::Fode(FodeDynamics { rules, n_x, n_u, centers, sigma_raw, consequents })
            }
            _ => {
                let strategy = kind.strategy();
                let blocks = domains
                    .iter()
                    .map(|&(lo, hi)| {
                        let chain = AntecedentChain::init(strategy, rules, lo, hi)?;
                        SingleInputFls::new(chain, cons(rules * n_x * 2), n_x)
                    })
                    .collect::<Result<_>>()?;
                Dynamics::Additive(AdditiveDynamics::new(blocks, n_x, n_u)?)
            }
        };
        Ok(Self { kind, rules, n_u, n_y, state, norm: None, dynamics, meta: ModelMeta { seed, ..Default::default() } })
    }

    pub fn n_x(&self) -> usize {
        self.dynamics.n_x()
    }

    pub fn n_z(&self) -> usize {
        self.dynamics.n_z()
    }

    pub fn count_parameters(&self) -> usize {
        self.dynamics.num_params()
    }
}
