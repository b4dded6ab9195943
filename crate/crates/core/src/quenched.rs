//! Quantities conditional on a sampled leaf environment `ξ`.
//!
//! Given `N = 2^t` leaf configurations, the root configuration has
//! independent sites, site `i` following the empirical spin distribution of
//! column `i`. Everything here is a deterministic function of the leaves.

use std::io::Write;

use crate::error::{Error, Result};
use crate::onb::SiteBases;

/// `N × n` matrix of leaf spin indices, row `x` being leaf `ξ(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    n: usize,
    k: usize,
    t: u32,
    leaves: Vec<u8>,
    source: String,
}

impl Environment {
    pub fn new(n: usize, k: usize, t: u32, leaves: Vec<u8>, source: impl Into<String>) -> Result<Self> {
        let big_n = 1usize
            .checked_shl(t)
            .ok_or_else(|| Error::InvalidParameter(format!("depth t = {t} too large")))?;
        if leaves.len() != big_n * n {
            return Err(Error::DimensionMismatch(format!(
                "{} leaf entries for N × n = {big_n} × {n}",
                leaves.len()
            )));
        }
        if let Some(&d) = leaves.iter().find(|&&d| d as usize >= k) {
            return Err(Error::IndexOutOfBounds(format!("leaf spin index {d} >= k = {k}")));
        }
        Ok(Environment { n, k, t, leaves, source: source.into() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn depth(&self) -> u32 {
        self.t
    }

    pub fn leaf_count(&self) -> usize {
        1 << self.t
    }

    pub fn leaf(&self, x: usize) -> &[u8] {
        &self.leaves[x * self.n..(x + 1) * self.n]
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

/// `p̂_i(s_l)`: row `i` is the spin histogram of column `i` divided by `N`.
pub fn empirical_marginals(env: &Environment) -> Vec<Vec<f64>> {
    let mut counts = vec![vec![0u64; env.k]; env.n];
    for x in 0..env.leaf_count() {
        for (i, &s) in env.leaf(x).iter().enumerate() {
            counts[i][s as usize] += 1;
        }
    }
    let big_n = env.leaf_count() as f64;
    counts
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / big_n).collect())
        .collect()
}

/// `q[i][m-1] = q_m(i) = (1/N) Σ_x f_m^i(ξ_i(x))` for `m = 1..k-1`; `q_0 ≡ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuenchedMoments {
    n: usize,
    k: usize,
    q: Vec<f64>,
}

impl QuenchedMoments {
    pub fn from_values(n: usize, k: usize, q: Vec<f64>) -> Result<Self> {
        if q.len() != n * (k - 1) {
            return Err(Error::DimensionMismatch(format!("{} moments for n (k-1) = {}", q.len(), n * (k - 1))));
        }
        Ok(QuenchedMoments { n, k, q })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `q_m(i)` for `m ≥ 1`.
    pub fn get(&self, i: usize, m: usize) -> f64 {
        self.q[i * (self.k - 1) + m - 1]
    }

    /// `(q_1(i), …, q_{k-1}(i))`.
    pub fn site(&self, i: usize) -> &[f64] {
        &self.q[i * (self.k - 1)..(i + 1) * (self.k - 1)]
    }

    pub fn values(&self) -> &[f64] {
        &self.q
    }

    /// `A_ξ = Σ_i Σ_m q_m(i)²`.
    pub fn a_xi(&self) -> f64 {
        self.q.iter().map(|x| x * x).sum()
    }
}

fn check_bases(n: usize, k: usize, bases: &SiteBases) -> Result<()> {
    if bases.n() != n || bases.k() != k {
        return Err(Error::DimensionMismatch(format!(
            "bases (n, k) = ({}, {}) vs ({n}, {k})",
            bases.n(),
            bases.k()
        )));
    }
    Ok(())
}

pub fn quenched_moments(env: &Environment, bases: &SiteBases) -> Result<QuenchedMoments> {
    check_bases(env.n, env.k, bases)?;
    let mut acc = MomentAccumulator::new(bases.clone());
    for x in 0..env.leaf_count() {
        acc.push_leaf(env.leaf(x));
    }
    acc.finish()
}

/// Streaming quenched moments: leaves are folded in one at a time so deep
/// trees never need to be stored.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    bases: SiteBases,
    sums: Vec<f64>,
    leaves: u64,
}

impl MomentAccumulator {
    pub fn new(bases: SiteBases) -> Self {
        let len = bases.n() * (bases.k() - 1);
        MomentAccumulator { bases, sums: vec![0.0; len], leaves: 0 }
    }

    pub fn push_leaf(&mut self, leaf: &[u8]) {
        let km1 = self.bases.k() - 1;
        for (i, &s) in leaf.iter().enumerate() {
            let b = self.bases.site(i);
            for m in 1..=km1 {
                self.sums[i * km1 + m - 1] += b.value(m, s as usize);
            }
        }
        self.leaves += 1;
    }

    pub fn finish(self) -> Result<QuenchedMoments> {
        if self.leaves == 0 {
            return Err(Error::InvalidParameter("no leaves accumulated".into()));
        }
        let big_n = self.leaves as f64;
        let (n, k) = (self.bases.n(), self.bases.k());
        QuenchedMoments::from_values(n, k, self.sums.into_iter().map(|s| s / big_n).collect())
    }
}

/// `h(σ) = Π_i p̂_i(σ_i) / p_i(σ_i)`, the authoritative quenched density.
pub fn quenched_density(env: &Environment, bases: &SiteBases, sigma: &[u8]) -> Result<f64> {
    check_bases(env.n, env.k, bases)?;
    if sigma.len() != env.n {
        return Err(Error::DimensionMismatch(format!("configuration of length {} for n = {}", sigma.len(), env.n)));
    }
    let emp = empirical_marginals(env);
    Ok(density_from_empirical(&emp, bases, sigma))
}

pub fn density_from_empirical(emp: &[Vec<f64>], bases: &SiteBases, sigma: &[u8]) -> f64 {
    sigma
        .iter()
        .enumerate()
        .map(|(i, &s)| emp[i][s as usize] / bases.site(i).marginal().prob(s as usize))
        .product()
}

/// `Π_i (1 + Σ_{m≥1} q_m(i) f_m^i(σ_i))`.
pub fn density_expansion(moments: &QuenchedMoments, bases: &SiteBases, sigma: &[u8]) -> Result<f64> {
    check_bases(moments.n, moments.k, bases)?;
    if sigma.len() != moments.n {
        return Err(Error::DimensionMismatch(format!(
            "configuration of length {} for n = {}",
            sigma.len(),
            moments.n
        )));
    }
    Ok(sigma
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let b = bases.site(i);
            1.0 + moments.site(i).iter().enumerate().map(|(j, q)| q * b.value(j + 1, s as usize)).sum::<f64>()
        })
        .product())
}

/// `‖h - 1‖²_{L²(π)} = Π_i (1 + Σ_m q_m(i)²) - 1`, accumulated in log space.
pub fn quenched_l2_fluctuation(moments: &QuenchedMoments) -> f64 {
    let log: f64 = (0..moments.n)
        .map(|i| moments.site(i).iter().map(|q| q * q).sum::<f64>().ln_1p())
        .sum();
    log.exp_m1()
}

/// Per-environment bounds on `‖ĥ - 1‖_{L¹(π)}` where `ĥ` removes the linear
/// terms of the density expansion.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct HhatBounds {
    pub a_xi: f64,
    /// `2 + √A`
    pub bound1: f64,
    /// `√(e^A - A - 1)`
    pub bound2: f64,
    pub combined: f64,
}

/// `e^a - a - 1` without cancellation for small `a`.
pub fn exp_minus_linear(a: f64) -> f64 {
    if a.abs() < 1e-3 {
        // a²/2 + a³/6 + a⁴/24 + a⁵/120
        a * a * (0.5 + a * (1.0 / 6.0 + a * (1.0 / 24.0 + a / 120.0)))
    } else {
        a.exp_m1() - a
    }
}

pub fn hhat_bounds_from_a(a: f64) -> HhatBounds {
    let bound1 = 2.0 + a.sqrt();
    let bound2 = exp_minus_linear(a).max(0.0).sqrt();
    HhatBounds { a_xi: a, bound1, bound2, combined: bound1.min(bound2) }
}

pub fn hhat_l1_bounds(moments: &QuenchedMoments) -> HhatBounds {
    hhat_bounds_from_a(moments.a_xi())
}

/// CSV export of per-environment statistics:
/// `env_id,A_xi,bound1,bound2,l2_fluct`.
pub fn write_quenched_csv<W: Write>(mut w: W, rows: &[(usize, HhatBounds, f64)]) -> Result<()> {
    writeln!(w, "env_id,A_xi,bound1,bound2,l2_fluct")?;
    for (id, b, l2) in rows {
        writeln!(w, "{id},{:?},{:?},{:?},{:?}", b.a_xi, b.bound1, b.bound2, l2)?;
    }
    Ok(())
}
