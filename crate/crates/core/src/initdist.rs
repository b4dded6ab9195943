//! Special initial distributions: comonotonic couplings, monochromatic
//! mixtures, block-wise baskets, and random marginal-respecting measures.

use std::ops::Range;

use rand::Rng;
use rayon::prelude::*;

use crate::dynamics::ConfigSampler;
use crate::error::{Error, Result};
use crate::measures::{
    check_marginal_constraint, config_index, product_measure, state_count, DenseMeasure, DenseSampler,
    MarginalSequence, SiteMarginal, SpinSpace,
};
use crate::onb::OrthonormalBasis;

/// Right-continuous generalized inverse `min{l : F(s_l) >= u}`.
pub fn quantile(cdf: &[f64], u: f64) -> u8 {
    cdf.partition_point(|&c| c < u).min(cdf.len() - 1) as u8
}

/// Draws one `U ~ Uniform[0,1)` and sets `σ_i = F_i^{-1}(U)` for each listed site.
pub fn comonotonic_sampler<R: Rng + ?Sized>(seq: &MarginalSequence, sites: &[usize], rng: &mut R, out: &mut [u8]) {
    let u: f64 = rng.random();
    for (slot, &i) in out.iter_mut().zip(sites) {
        *slot = quantile(&seq.site(i).cdf(), u);
    }
}

/// Sorted union of CDF breakpoints in `(0, 1]`, always ending in 1.
fn breakpoints<'a>(cdfs: impl IntoIterator<Item = &'a Vec<f64>>) -> Vec<f64> {
    let mut pts: Vec<f64> = cdfs.into_iter().flat_map(|c| c.iter().copied()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Exact law of the comonotonic coupling: one atom per interval of the
/// common refinement of all CDF breakpoints, weighted by its length.
pub fn comonotonic_dense(seq: &MarginalSequence, cap: usize) -> Result<DenseMeasure> {
    let (n, k) = (seq.n(), seq.k());
    let len = state_count(n, k, cap)?;
    let cdfs: Vec<Vec<f64>> = seq.marginals().iter().map(SiteMarginal::cdf).collect();
    let mut weights = vec![0.0; len];
    let mut config = vec![0u8; n];
    let mut left = 0.0;
    for right in breakpoints(&cdfs) {
        for (slot, cdf) in config.iter_mut().zip(&cdfs) {
            *slot = quantile(cdf, right);
        }
        weights[config_index(&config, k)] += right - left;
        left = right;
    }
    DenseMeasure::new(n, k, weights)
}

/// `Σ_l p(s_l) δ_{(s_l, …, s_l)}`.
pub fn monochromatic_dense(p: &SiteMarginal, n: usize, cap: usize) -> Result<DenseMeasure> {
    let k = p.k();
    let len = state_count(n, k, cap)?;
    let mut weights = vec![0.0; len];
    for l in 0..k {
        weights[config_index(&vec![l as u8; n], k)] = p.prob(l);
    }
    DenseMeasure::new(n, k, weights)
}

/// `E[g_a(F_a^{-1}(U)) g_b(F_b^{-1}(U))]`, summed exactly over the common
/// refinement of the two breakpoint partitions.
pub fn comonotonic_cross_moment(pa: &SiteMarginal, pb: &SiteMarginal, ga: &[f64], gb: &[f64]) -> f64 {
    let (ca, cb) = (pa.cdf(), pb.cdf());
    let mut left = 0.0;
    let mut total = 0.0;
    for right in breakpoints([&ca, &cb]) {
        total += (right - left) * ga[quantile(&ca, right) as usize] * gb[quantile(&cb, right) as usize];
        left = right;
    }
    total
}

/// `E[f_1^a(σ_a) f_1^b(σ_b)]` under the comonotonic coupling of `pa` and `pb`.
pub fn comonotonic_pair_correlation(space: &SpinSpace, pa: &SiteMarginal, pb: &SiteMarginal) -> Result<f64> {
    let fa = OrthonormalBasis::build(space, pa)?;
    let fb = OrthonormalBasis::build(space, pb)?;
    Ok(comonotonic_cross_moment(pa, pb, fa.row(1), fb.row(1)))
}

/// Points `δ + (1 - kδ)·c/R` for all compositions `c` of `R` into `k` parts.
/// The grid at resolution `R` is contained in the grid at `2R`.
pub fn delta_grid(k: usize, delta: f64, resolution: usize) -> Result<Vec<SiteMarginal>> {
    if !(delta > 0.0 && delta * k as f64 <= 1.0 + 1e-15) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must lie in (0, 1/{k}]")));
    }
    if resolution == 0 {
        return Err(Error::InvalidParameter("grid resolution must be positive".into()));
    }
    let free = (1.0 - k as f64 * delta).max(0.0);
    let r = resolution as f64;
    let mut out = Vec::new();
    let mut parts = vec![0usize; k];
    compositions(resolution, 0, &mut parts, &mut |c| {
        let probs: Vec<f64> = c.iter().map(|&ci| delta + free * (ci as f64 / r)).collect();
        out.push(probs);
    });
    let mut grid = Vec::with_capacity(out.len());
    for probs in out {
        let m = SiteMarginal::new(probs)?;
        if !grid.contains(&m) {
            grid.push(m);
        }
    }
    Ok(grid)
}

fn compositions(remaining: usize, pos: usize, parts: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if pos == parts.len() - 1 {
        parts[pos] = remaining;
        f(parts);
        return;
    }
    for c in 0..=remaining {
        parts[pos] = c;
        compositions(remaining - c, pos + 1, parts, f);
    }
}

/// Grid minimum of the comonotonic pair correlation over `P_δ × P_δ`.
/// A numerical proxy for `ρ(k, δ)`, not a certified bound.
pub fn rho_estimate(space: &SpinSpace, delta: f64, resolution: usize) -> Result<f64> {
    let grid = delta_grid(space.k(), delta, resolution)?;
    let bases = grid
        .iter()
        .map(|p| OrthonormalBasis::build(space, p))
        .collect::<Result<Vec<_>>>()?;
    let min = (0..grid.len())
        .into_par_iter()
        .map(|a| {
            (a..grid.len())
                .map(|b| comonotonic_cross_moment(&grid[a], &grid[b], bases[a].row(1), bases[b].row(1)))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(min)
}

/// Random dense measure whose single-site marginals are `seq`: heavy-tailed
/// positive weights fitted to the marginals by iterative proportional fitting.
pub fn random_marginal_respecting<R: Rng + ?Sized>(seq: &MarginalSequence, rng: &mut R, cap: usize) -> Result<DenseMeasure> {
    let (n, k) = (seq.n(), seq.k());
    let len = state_count(n, k, cap)?;
    let mut w: Vec<f64> = (0..len).map(|_| (-(1.0 - rng.random::<f64>()).ln()).powi(3) + 1e-9).collect();
    let stride: Vec<usize> = (0..n).map(|i| k.pow((n - 1 - i) as u32)).collect();
    for _ in 0..10_000 {
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let mut marg = vec![0.0; k];
            for (idx, x) in w.iter().enumerate() {
                marg[idx / stride[i] % k] += x;
            }
            let total: f64 = marg.iter().sum();
            let factor: Vec<f64> = (0..k).map(|l| seq.site(i).prob(l) * total / marg[l]).collect();
            for l in 0..k {
                worst = worst.max((marg[l] / total - seq.site(i).prob(l)).abs());
            }
            for (idx, x) in w.iter_mut().enumerate() {
                *x *= factor[idx / stride[i] % k];
            }
        }
        if worst < 1e-14 {
            break;
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let mu = DenseMeasure::new(n, k, w)?;
    let check = check_marginal_constraint(&mu, seq, 1e-12)?;
    if !check.ok {
        return Err(Error::NumericalBreakdown { degree: 0, norm: check.worst_deviation });
    }
    Ok(mu)
}

/// Which special initial distribution a [`StructuredInit`] represents.
#[derive(Debug, Clone, PartialEq)]
pub enum InitKind {
    ProductStationary,
    Monochromatic,
    ComonotonicGlobal,
    Basket { b: usize },
    Dense,
}

/// An initial distribution in `P^{(n)}` with an `O(n)` sampler.
///
/// Sites are split into consecutive comonotonic blocks followed by
/// independent stationary leftover sites; a dense measure can be wrapped
/// instead for small `n`.
#[derive(Debug, Clone)]
pub struct StructuredInit {
    kind: InitKind,
    seq: MarginalSequence,
    cdfs: Vec<Vec<f64>>,
    blocks: Vec<Range<usize>>,
    leftover: Range<usize>,
    dense: Option<(DenseMeasure, DenseSampler)>,
}

impl StructuredInit {
    fn with_blocks(kind: InitKind, seq: MarginalSequence, b: usize) -> Self {
        let n = seq.n();
        let a = n / b;
        let blocks = (0..a).map(|j| j * b..(j + 1) * b).collect();
        let cdfs = seq.marginals().iter().map(SiteMarginal::cdf).collect();
        StructuredInit { kind, seq, cdfs, blocks, leftover: a * b..n, dense: None }
    }

    /// `π`, the product of the marginals.
    pub fn product(seq: MarginalSequence) -> Self {
        let mut s = Self::with_blocks(InitKind::ProductStationary, seq, 1);
        s.blocks.clear();
        s.leftover = 0..s.seq.n();
        s
    }

    /// `Σ_l p(s_l) δ_{(s_l…s_l)}`; the sequence must be homogeneous.
    pub fn monochromatic(seq: MarginalSequence) -> Result<Self> {
        if !seq.is_homogeneous() {
            return Err(Error::InvalidParameter("monochromatic init needs homogeneous marginals".into()));
        }
        let n = seq.n();
        Ok(Self::with_blocks(InitKind::Monochromatic, seq, n))
    }

    pub fn comonotonic(seq: MarginalSequence) -> Self {
        let n = seq.n();
        Self::with_blocks(InitKind::ComonotonicGlobal, seq, n)
    }

    /// `a = ⌊n/b⌋` independent comonotonic blocks of size `b`, leftover sites stationary.
    pub fn basket(seq: MarginalSequence, b: usize) -> Result<Self> {
        if b == 0 || b > seq.n() {
            return Err(Error::InvalidParameter(format!("block size b = {b} must lie in 1..={}", seq.n())));
        }
        Ok(Self::with_blocks(InitKind::Basket { b }, seq, b))
    }

    /// Wraps a dense measure whose marginals must match `seq` to `1e-9`.
    pub fn dense(seq: MarginalSequence, mu: DenseMeasure) -> Result<Self> {
        let check = check_marginal_constraint(&mu, &seq, 1e-9)?;
        if !check.ok {
            return Err(Error::InvalidMeasure(format!(
                "dense init violates the marginals by {}",
                check.worst_deviation
            )));
        }
        let mut s = Self::product(seq);
        s.kind = InitKind::Dense;
        s.leftover = 0..0;
        let sampler = mu.sampler();
        s.dense = Some((mu, sampler));
        Ok(s)
    }

    pub fn kind(&self) -> &InitKind {
        &self.kind
    }

    pub fn seq(&self) -> &MarginalSequence {
        &self.seq
    }

    /// Comonotonic blocks (empty for product and dense kinds).
    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn leftover(&self) -> Range<usize> {
        self.leftover.clone()
    }

    pub fn dense_measure(&self) -> Option<&DenseMeasure> {
        self.dense.as_ref().map(|(mu, _)| mu)
    }

    /// Block containing site `i`, if any.
    pub fn block_of(&self, i: usize) -> Option<usize> {
        if self.blocks.is_empty() || i >= self.leftover.start {
            return None;
        }
        Some(i / self.blocks[0].len())
    }

    /// Exact dense law.
    pub fn to_dense(&self, cap: usize) -> Result<DenseMeasure> {
        state_count(self.seq.n(), self.seq.k(), cap)?;
        if let Some((mu, _)) = &self.dense {
            return Ok(mu.clone());
        }
        let mut factors = Vec::new();
        for block in &self.blocks {
            let sites: Vec<usize> = block.clone().collect();
            factors.push(comonotonic_dense(&self.seq.restrict(&sites)?, cap)?);
        }
        if !self.leftover.is_empty() {
            let sites: Vec<usize> = self.leftover.clone().collect();
            factors.push(product_measure(&self.seq.restrict(&sites)?, cap)?);
        }
        let mut iter = factors.into_iter();
        let first = iter.next().expect("n >= 1");
        iter.try_fold(first, |acc, f| kron(&acc, &f))
    }

    /// `E_μ[g_i(σ_i) g_j(σ_j)]` for `i != j`, exact. `gi`, `gj` are value
    /// tables over spin indices with zero mean under `p_i`, `p_j`.
    pub fn pair_moment(&self, i: usize, j: usize, gi: &[f64], gj: &[f64]) -> Result<f64> {
        if let Some((mu, _)) = &self.dense {
            let pair = mu.marginalize(&[i.min(j), i.max(j)])?;
            let k = self.seq.k();
            let (ga, gb) = if i < j { (gi, gj) } else { (gj, gi) };
            return Ok((0..k * k).map(|x| pair.weights()[x] * ga[x / k] * gb[x % k]).sum());
        }
        match (self.block_of(i), self.block_of(j)) {
            (Some(a), Some(b)) if a == b => Ok(comonotonic_cross_moment(self.seq.site(i), self.seq.site(j), gi, gj)),
            _ => Ok(0.0),
        }
    }
}

/// Tensor product of measures on consecutive site blocks.
pub fn kron(a: &DenseMeasure, b: &DenseMeasure) -> Result<DenseMeasure> {
    if a.k() != b.k() {
        return Err(Error::DimensionMismatch(format!("k = {} vs {}", a.k(), b.k())));
    }
    let mut w = Vec::with_capacity(a.weights().len() * b.weights().len());
    for x in a.weights() {
        w.extend(b.weights().iter().map(|y| x * y));
    }
    DenseMeasure::new(a.n() + b.n(), a.k(), w)
}

impl ConfigSampler for StructuredInit {
    fn n(&self) -> usize {
        self.seq.n()
    }

    fn k(&self) -> usize {
        self.seq.k()
    }

    fn sample_sites<R: Rng + ?Sized>(&self, sites: &[usize], rng: &mut R, out: &mut [u8]) {
        if let Some((_, sampler)) = &self.dense {
            return sampler.sample_sites(sites, rng, out);
        }
        let mut current: Option<(usize, f64)> = None;
        for (slot, &i) in out.iter_mut().zip(sites) {
            *slot = match self.block_of(i) {
                Some(block) => {
                    let u = match current {
                        Some((b, u)) if b == block => u,
                        _ => {
                            let u = rng.random::<f64>();
                            current = Some((block, u));
                            u
                        }
                    };
                    quantile(&self.cdfs[i], u)
                }
                None => self.seq.site(i).sample(rng),
            };
        }
    }
}
