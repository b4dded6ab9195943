//! The recombination dynamics `μ_{t+1} = μ_t ∘ μ_t`.
//!
//! Three exact routes to the same measures are kept side by side:
//! [`recombine`] (subset-marginal algorithm, the production path),
//! [`recombine_bruteforce`] (parent-pair sum) and
//! [`partition_average_oracle`] (average over leaf assignments of a depth-`t`
//! tree). [`sample_root`] draws from `μ_t` through the graphical construction
//! for any `n`.

use std::io::Write;

use rand::Rng;

use crate::bounds::upper_bound_linear;
use crate::error::{Error, Result};
use crate::measures::{index_config, state_count, tv_distance, DenseMeasure, DenseSampler};
use crate::quenched::Environment;
use crate::stats::{merge_ordered, run_tasks, split_samples, Estimate, Moments};

/// Cap on `k^{3n}` for the brute-force oracle.
pub const BRUTEFORCE_CAP: u128 = 1 << 27;
/// Cap on `N^n · k^n` for the partition-average oracle.
pub const PARTITION_CAP: u128 = 1 << 24;

/// Something that can draw configurations, or their restriction to a set of
/// sites, from an initial distribution `μ`.
pub trait ConfigSampler: Sync {
    fn n(&self) -> usize;
    fn k(&self) -> usize;

    /// Draws `σ ~ μ` and writes `σ_{sites[j]}` into `out[j]`. `sites` is
    /// strictly increasing. Implementations may sample only the requested
    /// coordinates as long as the joint law is `μ_{sites}`.
    fn sample_sites<R: Rng + ?Sized>(&self, sites: &[usize], rng: &mut R, out: &mut [u8]);

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u8]) {
        let all: Vec<usize> = (0..self.n()).collect();
        self.sample_sites(&all, rng, out);
    }
}

impl ConfigSampler for DenseSampler {
    fn n(&self) -> usize {
        DenseSampler::n(self)
    }

    fn k(&self) -> usize {
        DenseSampler::k(self)
    }

    fn sample_sites<R: Rng + ?Sized>(&self, sites: &[usize], rng: &mut R, out: &mut [u8]) {
        let mut full = vec![0u8; DenseSampler::n(self)];
        self.sample_into(rng, &mut full);
        for (slot, &i) in out.iter_mut().zip(sites) {
            *slot = full[i];
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u8]) {
        self.sample_into(rng, out);
    }
}

fn same_shape(a: &DenseMeasure, b: &DenseMeasure) -> Result<()> {
    if a.n() != b.n() || a.k() != b.k() {
        return Err(Error::DimensionMismatch(format!(
            "(n, k) = ({}, {}) vs ({}, {})",
            a.n(),
            a.k(),
            b.n(),
            b.k()
        )));
    }
    Ok(())
}

/// All `2^n` subset marginals. Bit `j` of the mask stands for site `j`
/// (0-based); each table is indexed by the retained sites in ascending order,
/// lowest site most significant. Cost `O(k (k+1)^n)`.
pub(crate) fn subset_marginals(mu: &DenseMeasure) -> Vec<Vec<f64>> {
    let (n, k) = (mu.n(), mu.k());
    let full = (1usize << n) - 1;
    let mut tables: Vec<Vec<f64>> = vec![Vec::new(); 1 << n];
    tables[full] = mu.weights().to_vec();
    let mut masks: Vec<usize> = (0..full).collect();
    masks.sort_by_key(|m| std::cmp::Reverse(m.count_ones()));
    for mask in masks {
        let j = (!mask).trailing_zeros() as usize;
        let parent = mask | (1 << j);
        let m = parent.count_ones() as usize;
        let pos = (parent & ((1 << j) - 1)).count_ones() as usize;
        let stride = k.pow((m - 1 - pos) as u32);
        let src = &tables[parent];
        let mut out = vec![0.0; src.len() / k];
        for (hi, chunk) in src.chunks(stride * k).enumerate() {
            let dst = &mut out[hi * stride..(hi + 1) * stride];
            for d in 0..k {
                for (o, v) in dst.iter_mut().zip(&chunk[d * stride..(d + 1) * stride]) {
                    *o += v;
                }
            }
        }
        tables[mask] = out;
    }
    tables
}

/// `spread[a]` = contribution of marginal index `a` (sites of `mask`) to the
/// full canonical index.
fn spread_table(mask: usize, n: usize, k: usize) -> Vec<usize> {
    let sites: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
    let place: Vec<usize> = sites.iter().map(|&i| k.pow((n - 1 - i) as u32)).collect();
    let mut out = vec![0usize; k.pow(sites.len() as u32)];
    for (a, slot) in out.iter_mut().enumerate() {
        let mut rem = a;
        let mut v = 0;
        for p in place.iter().rev() {
            v += (rem % k) * p;
            rem /= k;
        }
        *slot = v;
    }
    out
}

/// Collision product `ν₁ ∘ ν₂ = 2^{-n} Σ_A (ν₁)_A ⊗ (ν₂)_{A^c}`.
///
/// Terms for `A` and `A^c` are accumulated as one pair, so swapping the
/// arguments reproduces the result bit for bit.
pub fn recombine(nu1: &DenseMeasure, nu2: &DenseMeasure, cap: usize) -> Result<DenseMeasure> {
    same_shape(nu1, nu2)?;
    let (n, k) = (nu1.n(), nu1.k());
    let len = state_count(n, k, cap)?;
    if n == 0 {
        return Ok(nu1.clone());
    }
    let m1 = subset_marginals(nu1);
    let m2 = subset_marginals(nu2);
    let full = (1usize << n) - 1;
    let last = 1usize << (n - 1);
    let mut out = vec![0.0; len];
    for a_mask in (0..=full).filter(|m| m & last == 0) {
        let c_mask = full ^ a_mask;
        let spread_a = spread_table(a_mask, n, k);
        let spread_c = spread_table(c_mask, n, k);
        let (x1, x2) = (&m1[a_mask], &m2[a_mask]);
        let (y1, y2) = (&m1[c_mask], &m2[c_mask]);
        for (a, &sa) in spread_a.iter().enumerate() {
            let (p1, p2) = (x1[a], x2[a]);
            for (c, &sc) in spread_c.iter().enumerate() {
                out[sa + sc] += p1 * y2[c] + p2 * y1[c];
            }
        }
    }
    // The map is quadratic, so a mass drift of ε in the inputs would become
    // 2ε in the output; dividing by the input totals keeps iterates on the simplex.
    let scale = (0.5f64).powi(n as i32) / (m1[0][0] * m2[0][0]);
    out.iter_mut().for_each(|w| *w *= scale);
    DenseMeasure::new(n, k, out)
}

/// Parent-pair oracle: `Σ_{τ,τ'} ν₁(τ) ν₂(τ') Π_i (1{τ_i=σ_i} + 1{τ'_i=σ_i}) / 2`.
/// Cost `O(n k^{3n})`.
pub fn recombine_bruteforce(nu1: &DenseMeasure, nu2: &DenseMeasure) -> Result<DenseMeasure> {
    same_shape(nu1, nu2)?;
    let (n, k) = (nu1.n(), nu1.k());
    let required = (k as u128).checked_pow(3 * n as u32).unwrap_or(u128::MAX);
    if required > BRUTEFORCE_CAP {
        return Err(Error::CapacityExceeded { required, cap: BRUTEFORCE_CAP });
    }
    let len = k.pow(n as u32);
    let configs: Vec<Vec<u8>> = (0..len).map(|i| index_config(i, n, k)).collect();
    let mut out = vec![0.0; len];
    for (s, sigma) in configs.iter().enumerate() {
        let mut total = 0.0;
        for (ta, tau) in configs.iter().enumerate() {
            let wa = nu1.weights()[ta];
            if wa == 0.0 {
                continue;
            }
            for (tb, tau2) in configs.iter().enumerate() {
                let wb = nu2.weights()[tb];
                if wb == 0.0 {
                    continue;
                }
                let mut inherit = 1.0;
                for i in 0..n {
                    let hits = u8::from(tau[i] == sigma[i]) + u8::from(tau2[i] == sigma[i]);
                    inherit *= hits as f64 * 0.5;
                    if inherit == 0.0 {
                        break;
                    }
                }
                total += wa * wb * inherit;
            }
        }
        out[s] = total;
    }
    DenseMeasure::new(n, k, out)
}

/// `μ_0, μ_1, …, μ_T` of an exact evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionTrace {
    steps: Vec<DenseMeasure>,
}

impl EvolutionTrace {
    pub fn initial(&self) -> &DenseMeasure {
        &self.steps[0]
    }

    pub fn steps(&self) -> &[DenseMeasure] {
        &self.steps
    }

    pub fn at(&self, t: usize) -> &DenseMeasure {
        &self.steps[t]
    }

    pub fn final_measure(&self) -> &DenseMeasure {
        self.steps.last().unwrap()
    }

    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }

    /// One row per step against the stationary measure `pi`.
    pub fn rows(&self, pi: &DenseMeasure) -> Result<Vec<TraceRow>> {
        self.steps
            .iter()
            .enumerate()
            .map(|(t, mu)| {
                Ok(TraceRow {
                    t: t as u32,
                    tv_to_pi: tv_distance(mu, pi)?,
                    upper_bound: upper_bound_linear(mu.n() as u64, mu.k() as u64, t as u32),
                    l2_bound: l2_tv_bound(mu, pi)?,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TraceRow {
    pub t: u32,
    pub tv_to_pi: f64,
    pub upper_bound: f64,
    pub l2_bound: f64,
}

/// CSV with columns `t,tv_to_pi,upper_bound,l2_bound`.
pub fn write_trace_csv<W: Write>(mut w: W, rows: &[TraceRow]) -> Result<()> {
    writeln!(w, "t,tv_to_pi,upper_bound,l2_bound")?;
    for r in rows {
        writeln!(w, "{},{:?},{:?},{:?}", r.t, r.tv_to_pi, r.upper_bound, r.l2_bound)?;
    }
    Ok(())
}

/// `min(1, ½ ‖μ/π - 1‖_{L²(π)})`, the Cauchy–Schwarz bound on TV.
pub fn l2_tv_bound(mu: &DenseMeasure, pi: &DenseMeasure) -> Result<f64> {
    same_shape(mu, pi)?;
    let mut chi2 = 0.0;
    for (m, p) in mu.weights().iter().zip(pi.weights()) {
        if *p > 0.0 {
            chi2 += (m - p) * (m - p) / p;
        } else if *m > 0.0 {
            return Ok(1.0);
        }
    }
    Ok((0.5 * chi2.sqrt()).min(1.0))
}

/// Exact evolution for `t` steps.
pub fn evolve_exact(mu: &DenseMeasure, t: usize, cap: usize) -> Result<EvolutionTrace> {
    let mut steps = Vec::with_capacity(t + 1);
    steps.push(mu.clone());
    for _ in 0..t {
        let prev = steps.last().unwrap();
        let next = recombine(prev, prev, cap)?;
        steps.push(next);
    }
    Ok(EvolutionTrace { steps })
}

/// `μ_t = N^{-n} Σ_{(U_1..U_n) ∈ [N]^n} ⊗_x μ_{A_x}` with `A_x = {i : U_i = x}`.
pub fn partition_average_oracle(mu: &DenseMeasure, t: u32) -> Result<DenseMeasure> {
    let (n, k) = (mu.n(), mu.k());
    let big_n = 1u128 << t;
    let required = big_n
        .checked_pow(n as u32)
        .and_then(|a| a.checked_mul((k as u128).pow(n as u32)))
        .unwrap_or(u128::MAX);
    if required > PARTITION_CAP {
        return Err(Error::CapacityExceeded { required, cap: PARTITION_CAP });
    }
    let big_n = big_n as usize;
    let len = k.pow(n as u32);
    let marg = subset_marginals(mu);
    let configs: Vec<Vec<u8>> = (0..len).map(|i| index_config(i, n, k)).collect();
    let mut out = vec![0.0; len];
    let assignments = big_n.pow(n as u32);
    let mut blocks = vec![0usize; big_n];
    for u in 0..assignments {
        blocks.iter_mut().for_each(|b| *b = 0);
        let mut rem = u;
        for i in 0..n {
            blocks[rem % big_n] |= 1 << i;
            rem /= big_n;
        }
        for (s, sigma) in configs.iter().enumerate() {
            let mut w = 1.0;
            for &mask in blocks.iter().filter(|&&m| m != 0) {
                let idx = (0..n)
                    .filter(|i| mask >> i & 1 == 1)
                    .fold(0usize, |acc, i| acc * k + sigma[i] as usize);
                w *= marg[mask][idx];
            }
            out[s] += w;
        }
    }
    let scale = 1.0 / assignments as f64;
    out.iter_mut().for_each(|w| *w *= scale);
    DenseMeasure::new(n, k, out)
}

/// Scratch buffers for repeated root sampling.
#[derive(Debug, Default, Clone)]
pub struct RootScratch {
    picks: Vec<(u64, u32)>,
    sites: Vec<usize>,
    values: Vec<u8>,
}

/// Draws `σ*_i = ξ_i(U_i)` for a depth-`t` tree with leaves `ξ(x) ~ μ`.
///
/// Only leaves that some site points to are drawn, each restricted to the
/// sites pointing to it; unreferenced leaves do not affect the root, so the
/// law is unchanged.
pub fn sample_root_into<S, R>(sampler: &S, t: u32, rng: &mut R, scratch: &mut RootScratch, out: &mut [u8])
where
    S: ConfigSampler,
    R: Rng + ?Sized,
{
    let n = sampler.n();
    assert!(t < 64, "tree depth must be below 64");
    let leaves = 1u64 << t;
    scratch.picks.clear();
    scratch.picks.extend((0..n as u32).map(|i| (rng.random_range(0..leaves), i)));
    scratch.picks.sort_unstable();
    let mut start = 0;
    while start < n {
        let leaf = scratch.picks[start].0;
        let mut end = start;
        scratch.sites.clear();
        while end < n && scratch.picks[end].0 == leaf {
            scratch.sites.push(scratch.picks[end].1 as usize);
            end += 1;
        }
        scratch.values.resize(scratch.sites.len(), 0);
        sampler.sample_sites(&scratch.sites, rng, &mut scratch.values);
        for (&i, &v) in scratch.sites.iter().zip(&scratch.values) {
            out[i] = v;
        }
        start = end;
    }
}

pub fn sample_root<S: ConfigSampler, R: Rng + ?Sized>(sampler: &S, t: u32, rng: &mut R) -> Vec<u8> {
    let mut out = vec![0u8; sampler.n()];
    sample_root_into(sampler, t, rng, &mut RootScratch::default(), &mut out);
    out
}

/// `N = 2^t` independent leaves `ξ(x) ~ μ`.
pub fn sample_environment<S: ConfigSampler, R: Rng + ?Sized>(
    sampler: &S,
    t: u32,
    rng: &mut R,
    source: &str,
) -> Result<Environment> {
    let n = sampler.n();
    let big_n = 1usize
        .checked_shl(t)
        .filter(|b| b.checked_mul(n).is_some())
        .ok_or_else(|| Error::InvalidParameter(format!("depth t = {t} too large for an explicit environment")))?;
    let mut leaves = vec![0u8; big_n * n];
    for leaf in leaves.chunks_mut(n.max(1)) {
        sampler.sample(rng, leaf);
    }
    Environment::new(n, sampler.k(), t, leaves, source)
}

/// First time the binary fragmentation of `[n]` separates every pair.
/// Tracks only the still-unseparated pairs.
pub fn fragmentation_time<R: Rng + ?Sized>(n: usize, rng: &mut R) -> u32 {
    let mut pairs: Vec<(u32, u32)> = (0..n as u32).flat_map(|i| (i + 1..n as u32).map(move |j| (i, j))).collect();
    let mut bits = vec![false; n];
    let mut t = 0;
    while !pairs.is_empty() {
        bits.iter_mut().for_each(|b| *b = rng.random());
        pairs.retain(|&(i, j)| bits[i as usize] == bits[j as usize]);
        t += 1;
    }
    t
}

/// Empirical `P(τ_frag > t)` for `t = 0..=t_max`.
pub fn fragmentation_survival(n: usize, t_max: u32, runs: u64, seed: u64, tasks: usize) -> Vec<Estimate> {
    let counts = split_samples(runs, tasks);
    let parts = run_tasks(seed, counts.len(), |j, rng| {
        let mut m = vec![Moments::new(); t_max as usize + 1];
        for _ in 0..counts[j] {
            let tau = fragmentation_time(n, rng);
            for (t, slot) in m.iter_mut().enumerate() {
                slot.push(if tau > t as u32 { 1.0 } else { 0.0 });
            }
        }
        m
    });
    let merged = merge_ordered(parts, |a: &Vec<Moments>, b: &Vec<Moments>| {
        a.iter().zip(b).map(|(x, y)| x.merge(y)).collect()
    })
    .unwrap_or_default();
    merged.iter().map(Moments::estimate).collect()
}
