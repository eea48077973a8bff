//! Membership-function families and antecedent partitioning strategies.
//!
//! An [`AntecedentChain`] holds the unconstrained parameters of the `P`
//! membership functions of one input dimension. [`AntecedentChain::decode`]
//! maps them to concrete centers and spreads; spreads always pass through
//! softplus so any finite raw vector yields a valid partition.
//!
//! Partitioned layouts (`Ps1`, `Ps2`, `Ps3`) store `[c_1, s_1^l', s_1^r', ..., s_P^r']`:
//! the first center, the first left spread and all right spreads. Centers
//! chain as `c_{p+1} = c_p + k * s_p^r` (`k = 1` for triangles, `k = 4` for
//! two-sided Gaussians) and left spreads copy the previous right spread.
//! `FreeGauss` stores `[c_1..c_P, s_1'..s_P']` with no coupling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `log(1 + e^x)`, stable for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of softplus, the logistic function.
pub fn softplus_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`]: `log(e^v - 1)`.
pub fn softplus_inverse(v: f64) -> Result<f64> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::NonPositiveInput(v));
    }
    // log(e^v - 1) = v + log(1 - e^-v)
    if v > 1.0 {
        Ok(v + (-(-v).exp()).ln_1p())
    } else {
        Ok(v.exp_m1().ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Independent Gaussian MFs (AFODE blocks).
    FreeGauss,
    /// Coupled triangles.
    Ps1,
    /// Chained two-sided Gaussians with 4-sigma spacing.
    Ps2,
    /// Chained two-sided Gaussians, odd MFs replaced by local complements.
    Ps3,
}

impl Strategy {
    /// Length of the raw antecedent parameter vector for `rules` MFs.
    pub fn param_len(self, rules: usize) -> usize {
        match self {
            Strategy::FreeGauss => 2 * rules,
            _ => rules + 2,
        }
    }

    fn spacing(self) -> f64 {
        match self {
            Strategy::Ps1 => 1.0,
            _ => 4.0,
        }
    }

    pub fn is_partitioned(self) -> bool {
        self != Strategy::FreeGauss
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::FreeGauss => "gauss",
            Strategy::Ps1 => "PS1",
            Strategy::Ps2 => "PS2",
            Strategy::Ps3 => "PS3",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "ps1" => Ok(Strategy::Ps1),
            "2" | "ps2" => Ok(Strategy::Ps2),
            "3" | "ps3" => Ok(Strategy::Ps3),
            "gauss" | "free" | "freegauss" => Ok(Strategy::FreeGauss),
            _ => Err(Error::InvalidConfig(format!("unknown partitioning strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntecedentChain {
    pub strategy: Strategy,
    pub rules: usize,
    pub raw: Vec<f64>,
}

impl AntecedentChain {
    pub fn new(strategy: Strategy, rules: usize, raw: Vec<f64>) -> Result<Self> {
        if rules < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 rules, got {rules}")));
        }
        let expected = strategy.param_len(rules);
        if raw.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: raw.len() });
        }
        Ok(Self { strategy, rules, raw })
    }

    /// Chain with evenly spaced centers from `min` to `max`.
    ///
    /// A degenerate domain (`max <= min`) is widened to `[min - 0.5, max + 0.5]`.
    pub fn init(strategy: Strategy, rules: usize, min: f64, max: f64) -> Result<Self> {
        if rules < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 rules, got {rules}")));
        }
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::DegenerateDomain { min, max });
        }
        let (lo, hi) = if max > min { (min, max) } else { (min - 0.5, max + 0.5) };
        let width = hi - lo;
        let gaps = (rules - 1) as f64;
        let raw = match strategy {
            Strategy::FreeGauss => {
                let sigma = softplus_inverse(width / (2.0 * gaps))?;
                (0..rules)
                    .map(|p| lo + width * p as f64 / gaps)
                    .chain(std::iter::repeat_n(sigma, rules))
                    .collect()
            }
            s => {
                let spread = softplus_inverse(width / (s.spacing() * gaps))?;
                std::iter::once(lo).chain(std::iter::repeat_n(spread, rules + 1)).collect()
            }
        };
        Self::new(strategy, rules, raw)
    }

    pub fn decode(&self) -> Result<DecodedMfs> {
        if let Some(i) = self.raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteParameter(i));
        }
        let n = self.rules;
        let (centers, left, right) = match self.strategy {
            Strategy::FreeGauss => {
                let c = self.raw[..n].to_vec();
                let s: Vec<f64> = self.raw[n..].iter().map(|&r| softplus(r)).collect();
                (c, s.clone(), s)
            }
            strategy => {
                let k = strategy.spacing();
                let right: Vec<f64> = self.raw[2..].iter().map(|&r| softplus(r)).collect();
                let mut centers = Vec::with_capacity(n);
                let mut left = Vec::with_capacity(n);
                centers.push(self.raw[0]);
                left.push(softplus(self.raw[1]));
                for p in 1..n {
                    centers.push(centers[p - 1] + k * right[p - 1]);
                    left.push(right[p - 1]);
                }
                (centers, left, right)
            }
        };
        let anchors = match self.strategy {
            Strategy::Ps3 => (0..n)
                .map(|p| if p % 2 == 0 && p > 0 && p + 1 < n { 0.5 * (centers[p - 1] + centers[p + 1]) } else { centers[p] })
                .collect(),
            _ => centers.clone(),
        };
        Ok(DecodedMfs { strategy: self.strategy, centers, left, right, anchors })
    }

    /// Pulls a gradient with respect to decoded centers/spreads back to `raw`.
    pub fn backward(&self, g: &DecodedGrad, raw_grad: &mut [f64]) {
        let n = self.rules;
        match self.strategy {
            Strategy::FreeGauss => {
                for p in 0..n {
                    raw_grad[p] += g.centers[p];
                    raw_grad[n + p] += (g.left[p] + g.right[p]) * softplus_grad(self.raw[n + p]);
                }
            }
            strategy => {
                let k = strategy.spacing();
                // suffix sums of center gradients: c_q depends on s_p^r for all p < q
                let mut tail = 0.0;
                let mut total_right = vec![0.0; n];
                for p in (0..n).rev() {
                    let via_next_left = if p + 1 < n { g.left[p + 1] } else { 0.0 };
                    total_right[p] = g.right[p] + via_next_left + k * tail;
                    tail += g.centers[p];
                }
                raw_grad[0] += tail;
                raw_grad[1] += g.left[0] * softplus_grad(self.raw[1]);
                for p in 0..n {
                    raw_grad[2 + p] += total_right[p] * softplus_grad(self.raw[2 + p]);
                }
            }
        }
    }
}

/// Gradient with respect to decoded `(c_p, s_p^l, s_p^r)`, treated as independent.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedGrad {
    pub centers: Vec<f64>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl DecodedGrad {
    pub fn zeros(rules: usize) -> Self {
        Self { centers: vec![0.0; rules], left: vec![0.0; rules], right: vec![0.0; rules] }
    }
}

/// Role of one MF under PS3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ps3Role {
    /// Two-sided Gaussian, active on `[lo, hi)`.
    Gaussian,
    /// Local complement of its even-indexed neighbours.
    Complement,
}

/// Which pair of consecutive rules is active for an input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActivePair {
    /// 1-based index `p*`; rules `p*` and `p* + 1` are active.
    pub first: usize,
    /// Input lay outside `[anchor_1, anchor_P]`.
    pub clamped: bool,
}

/// Concrete membership functions of one input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedMfs {
    pub strategy: Strategy,
    pub centers: Vec<f64>,
    /// Left spread (`Δ^l` for triangles, `σ^l` otherwise).
    pub left: Vec<f64>,
    /// Right spread.
    pub right: Vec<f64>,
    /// Segment boundaries: centers, except PS3 interior odd MFs which sit at
    /// the midpoint of their even neighbours.
    pub anchors: Vec<f64>,
}

#[inline]
fn gauss_log(z: f64, c: f64, s: f64) -> f64 {
    let d = z - c;
    -d * d / (2.0 * s * s)
}

impl DecodedMfs {
    pub fn rules(&self) -> usize {
        self.centers.len()
    }

    /// Triangle `(l, c, r)` of rule `p` (0-based). Neighbouring triangles
    /// share endpoints with the adjacent centers exactly.
    pub fn triangle(&self, p: usize) -> (f64, f64, f64) {
        let n = self.rules();
        let c = self.centers[p];
        let l = if p > 0 { self.centers[p - 1] } else { c - self.left[p] };
        let r = if p + 1 < n { self.centers[p + 1] } else { c + self.right[p] };
        (l, c, r)
    }

    /// PS3 role of rule `p` (0-based): odd 1-based indices are complements.
    pub fn ps3_role(&self, p: usize) -> Ps3Role {
        if p % 2 == 1 {
            Ps3Role::Gaussian
        } else {
            Ps3Role::Complement
        }
    }

    /// Support `[lo, hi)` of a PS3 Gaussian rule `p` (0-based, odd).
    pub fn ps3_support(&self, p: usize) -> (f64, f64) {
        let n = self.rules();
        let lo = if p >= 3 { self.anchors[p - 1] } else { f64::NEG_INFINITY };
        let hi = if p + 2 < n { self.anchors[p + 1] } else { f64::INFINITY };
        (lo, hi)
    }

    fn gauss2_log(&self, p: usize, z: f64) -> f64 {
        let s = if z <= self.centers[p] { self.left[p] } else { self.right[p] };
        gauss_log(z, self.centers[p], s)
    }

    /// Membership grade of rule `p` (1-based) at `z`.
    pub fn evaluate(&self, p: usize, z: f64) -> Result<f64> {
        let n = self.rules();
        if p == 0 || p > n {
            return Err(Error::IndexOutOfRange { index: p, rules: n });
        }
        Ok(self.grade(p - 1, z))
    }

    /// Grades of all rules at `z`.
    pub fn grades(&self, z: f64) -> Vec<f64> {
        (0..self.rules()).map(|p| self.grade(p, z)).collect()
    }

    fn grade(&self, p: usize, z: f64) -> f64 {
        match self.strategy {
            Strategy::FreeGauss => gauss_log(z, self.centers[p], self.left[p]).exp(),
            Strategy::Ps2 => self.gauss2_log(p, z).exp(),
            Strategy::Ps1 => self.tri_grade(p, z).0,
            Strategy::Ps3 => self.ps3_grade(p, z).0,
        }
    }

    /// Triangle grade and its z-derivative (right-hand at kinks).
    fn tri_grade(&self, p: usize, z: f64) -> (f64, f64) {
        let n = self.rules();
        let (l, c, r) = self.triangle(p);
        if (p == 0 && z < c) || (p + 1 == n && z >= c) {
            (1.0, 0.0)
        } else if z >= l && z < c {
            ((z - l) / (c - l), 1.0 / (c - l))
        } else if z >= c && z < r {
            ((r - z) / (r - c), -1.0 / (r - c))
        } else {
            (0.0, 0.0)
        }
    }

    /// PS3 grade and the Gaussian rule it is derived from (with sign), if any.
    fn ps3_grade(&self, p: usize, z: f64) -> (f64, Option<(usize, f64)>) {
        let n = self.rules();
        let g2 = |q: usize| self.gauss2_log(q, z).exp();
        match self.ps3_role(p) {
            Ps3Role::Gaussian => {
                let (lo, hi) = self.ps3_support(p);
                if z >= lo && z < hi {
                    (g2(p), Some((p, 1.0)))
                } else {
                    (0.0, None)
                }
            }
            Ps3Role::Complement => {
                let source = if p == 0 {
                    (z < self.centers[1]).then_some(1)
                } else if p + 1 == n {
                    (z >= self.centers[p - 1]).then_some(p - 1)
                } else if z >= self.centers[p - 1] && z < self.anchors[p] {
                    Some(p - 1)
                } else if z >= self.anchors[p] && z < self.centers[p + 1] {
                    Some(p + 1)
                } else {
                    None
                };
                match source {
                    Some(q) => (1.0 - g2(q), Some((q, -1.0))),
                    None => (0.0, None),
                }
            }
        }
    }

    /// Scaled grades `g_p = K * mu_p(z)` and `dg_p/dz`, with `K > 0` common
    /// to all rules. Gaussian families divide by the largest grade so the
    /// sum never underflows; ratios between grades are exact.
    pub fn scaled_grades(&self, z: f64, g: &mut [f64], dg: &mut [f64]) {
        let n = self.rules();
        match self.strategy {
            Strategy::FreeGauss | Strategy::Ps2 => {
                let mut top = f64::NEG_INFINITY;
                for p in 0..n {
                    let (e, s) = match self.strategy {
                        Strategy::FreeGauss => (gauss_log(z, self.centers[p], self.left[p]), self.left[p]),
                        _ => {
                            let s = if z <= self.centers[p] { self.left[p] } else { self.right[p] };
                            (gauss_log(z, self.centers[p], s), s)
                        }
                    };
                    g[p] = e;
                    dg[p] = -(z - self.centers[p]) / (s * s);
                    top = top.max(e);
                }
                for p in 0..n {
                    g[p] = (g[p] - top).exp();
                    dg[p] *= g[p];
                }
            }
            Strategy::Ps1 => {
                for p in 0..n {
                    (g[p], dg[p]) = self.tri_grade(p, z);
                }
            }
            Strategy::Ps3 => {
                for p in 0..n {
                    let (v, src) = self.ps3_grade(p, z);
                    g[p] = v;
                    dg[p] = match src {
                        Some((q, sign)) => {
                            let s = if z <= self.centers[q] { self.left[q] } else { self.right[q] };
                            let mu = self.gauss2_log(q, z).exp();
                            sign * -(z - self.centers[q]) / (s * s) * mu
                        }
                        None => 0.0,
                    };
                }
            }
        }
    }

    /// Adds `sum_p w_p * d g_p / d(c, s^l, s^r)` for the scaled grades of
    /// [`scaled_grades`](Self::scaled_grades), holding the common scale fixed.
    pub fn accumulate_grad(&self, z: f64, g: &[f64], w: &[f64], acc: &mut DecodedGrad) {
        let n = self.rules();
        match self.strategy {
            Strategy::FreeGauss => {
                for p in 0..n {
                    let (c, s) = (self.centers[p], self.left[p]);
                    let d = z - c;
                    let t = w[p] * g[p];
                    acc.centers[p] += t * d / (s * s);
                    acc.left[p] += t * d * d / (s * s * s);
                }
            }
            Strategy::Ps2 => {
                for p in 0..n {
                    let t = w[p] * g[p];
                    gauss2_partials(self, p, z, t, acc);
                }
            }
            Strategy::Ps1 => {
                for p in 0..n {
                    if w[p] == 0.0 {
                        continue;
                    }
                    let (l, c, r) = self.triangle(p);
                    if (p == 0 && z < c) || (p + 1 == n && z >= c) {
                        continue;
                    }
                    let (dl, dc, dr) = if z >= l && z < c {
                        let h = c - l;
                        ((z - c) / (h * h), -(z - l) / (h * h), 0.0)
                    } else if z >= c && z < r {
                        let h = r - c;
                        (0.0, (r - z) / (h * h), (z - c) / (h * h))
                    } else {
                        continue;
                    };
                    let t = w[p];
                    acc.centers[p] += t * dc;
                    if p > 0 {
                        acc.centers[p - 1] += t * dl;
                    } else {
                        acc.centers[0] += t * dl;
                        acc.left[0] -= t * dl;
                    }
                    if p + 1 < n {
                        acc.centers[p + 1] += t * dr;
                    } else {
                        acc.centers[p] += t * dr;
                        acc.right[p] += t * dr;
                    }
                }
            }
            Strategy::Ps3 => {
                for p in 0..n {
                    if w[p] == 0.0 {
                        continue;
                    }
                    if let (_, Some((q, sign))) = self.ps3_grade(p, z) {
                        let mu = self.gauss2_log(q, z).exp();
                        gauss2_partials(self, q, z, sign * w[p] * mu, acc);
                    }
                }
                let _ = g;
            }
        }
    }

    /// Rule whose anchor is nearest to `z` (0-based); used when every grade vanishes.
    pub fn nearest_rule(&self, z: f64) -> usize {
        let mut best = 0;
        for (p, a) in self.anchors.iter().enumerate() {
            if (z - a).abs() < (z - self.anchors[best]).abs() {
                best = p;
            }
        }
        best
    }

    /// Segment `[anchor_{p*}, anchor_{p*+1}]` containing `z`. Ties go to the
    /// right segment; inputs outside the partition clamp to the outer segments.
    pub fn active_pair(&self, z: f64) -> ActivePair {
        let n = self.rules();
        let a = &self.anchors;
        if z < a[0] {
            return ActivePair { first: 1, clamped: true };
        }
        if z > a[n - 1] {
            return ActivePair { first: n - 1, clamped: true };
        }
        // number of anchors <= z, at least 1
        let k = a.partition_point(|&v| v <= z);
        ActivePair { first: k.clamp(1, n - 1), clamped: false }
    }

    /// Smallest distance from `z` to any point where a grade is not smooth.
    pub fn kink_distance(&self, z: f64) -> f64 {
        let pts = self.centers.iter().chain(self.anchors.iter());
        let mut best = pts.fold(f64::INFINITY, |m, c| m.min((z - c).abs()));
        if self.strategy == Strategy::Ps1 {
            let n = self.rules();
            best = best.min((z - (self.centers[0] - self.left[0])).abs());
            best = best.min((z - (self.centers[n - 1] + self.right[n - 1])).abs());
        }
        best
    }

    /// Sampling range for plots: `[c_min - span, c_max + span]`, `span = (c_max - c_min) / 10`.
    pub fn plot_range(&self) -> (f64, f64) {
        let lo = self.centers.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.centers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo) / 10.0;
        (lo - span, hi + span)
    }
}

fn gauss2_partials(mfs: &DecodedMfs, p: usize, z: f64, t: f64, acc: &mut DecodedGrad) {
    let c = mfs.centers[p];
    let d = z - c;
    if z <= c {
        let s = mfs.left[p];
        acc.centers[p] += t * d / (s * s);
        acc.left[p] += t * d * d / (s * s * s);
    } else {
        let s = mfs.right[p];
        acc.centers[p] += t * d / (s * s);
        acc.right[p] += t * d * d / (s * s * s);
    }
}

/// Membership curves on a uniform grid: one row per point, `[z, mu_1..mu_P]`.
pub fn sample_curves(mfs: &DecodedMfs, points: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = mfs.plot_range();
    let steps = points.max(2) - 1;
    (0..=steps)
        .map(|i| {
            let z = lo + (hi - lo) * i as f64 / steps as f64;
            std::iter::once(z).chain(mfs.grades(z)).collect()
        })
        .collect()
}
