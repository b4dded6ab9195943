//! Spin spaces, site marginals and dense probability measures on `S^n`.
//!
//! A configuration `σ ∈ S^n` is stored as `n` spin indices (`u8`, index `l`
//! meaning value `s_l`). Dense measures index configurations as base-`k`
//! integers with site 1 as the most significant digit.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};

/// Default cap on `k^n` for dense measures.
pub const DEFAULT_CAP: usize = 1 << 24;

const NORMALIZATION_TOL: f64 = 1e-10;
const MARGINAL_SUM_TOL: f64 = 1e-12;

/// Number of dense states `k^n`, or `CapacityExceeded` above `cap`.
pub fn state_count(n: usize, k: usize, cap: usize) -> Result<usize> {
    let required = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if required > cap as u128 {
        return Err(Error::CapacityExceeded { required, cap: cap as u128 });
    }
    Ok(required as usize)
}

pub fn config_index(config: &[u8], k: usize) -> usize {
    config.iter().fold(0usize, |acc, &d| acc * k + d as usize)
}

pub fn index_config(mut index: usize, n: usize, k: usize) -> Vec<u8> {
    let mut out = vec![0u8; n];
    for slot in out.iter_mut().rev() {
        *slot = (index % k) as u8;
        index /= k;
    }
    out
}

/// The ordered set of spin values `s_0 < s_1 < … < s_{k-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSpace {
    values: Vec<f64>,
}

impl SpinSpace {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidSpinSpace(format!("need k >= 2 spin values, got {}", values.len())));
        }
        if values.len() > u8::MAX as usize {
            return Err(Error::InvalidSpinSpace(format!("k = {} exceeds 255", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpinSpace("spin values must be finite".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpinSpace("spin values must be strictly increasing".into()));
        }
        Ok(SpinSpace { values })
    }

    /// `{0, 1, …, k-1}`.
    pub fn integers(k: usize) -> Result<Self> {
        Self::new((0..k).map(|l| l as f64).collect())
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, l: usize) -> f64 {
        self.values[l]
    }
}

/// A nondegenerate single-site distribution together with its δ certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteMarginal {
    probs: Vec<f64>,
    delta: f64,
}

impl SiteMarginal {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidMeasure("a site marginal needs at least two states".into()));
        }
        for (index, &value) in probs.iter().enumerate() {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::DegenerateMarginal { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > MARGINAL_SUM_TOL {
            return Err(Error::InvalidMeasure(format!("site marginal sums to {sum}")));
        }
        let min = probs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(SiteMarginal { delta: min.min(1.0 - max), probs })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, l: usize) -> f64 {
        self.probs[l]
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Cumulative distribution `F(s_l)`; the last entry is exactly 1.
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out: Vec<f64> = self
            .probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *out.last_mut().unwrap() = 1.0;
        out
    }

    /// Inverse-CDF draw of a spin index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u8 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (l, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return l as u8;
            }
        }
        (self.probs.len() - 1) as u8
    }
}

/// Per-site marginals `p_1, …, p_n` over a common spin space.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalSequence {
    space: SpinSpace,
    marginals: Vec<SiteMarginal>,
    delta: f64,
}

impl MarginalSequence {
    pub fn new(space: SpinSpace, marginals: Vec<SiteMarginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidParameter("a marginal sequence needs n >= 1 sites".into()));
        }
        if let Some((i, m)) = marginals.iter().enumerate().find(|(_, m)| m.k() != space.k()) {
            return Err(Error::DimensionMismatch(format!(
                "site {i} marginal has {} states, spin space has {}",
                m.k(),
                space.k()
            )));
        }
        let delta = marginals.iter().map(|m| m.delta()).fold(f64::INFINITY, f64::min);
        Ok(MarginalSequence { space, marginals, delta })
    }

    pub fn homogeneous(space: SpinSpace, p: SiteMarginal, n: usize) -> Result<Self> {
        Self::new(space, vec![p; n])
    }

    /// Random marginals in `P_δ`: `p = δ + (1 - kδ)·w` with `w` uniform on the simplex.
    pub fn random<R: Rng + ?Sized>(space: SpinSpace, n: usize, delta: f64, rng: &mut R) -> Result<Self> {
        let k = space.k();
        if !(delta > 0.0 && delta * k as f64 <= 1.0) {
            return Err(Error::InvalidParameter(format!("delta = {delta} must lie in (0, 1/k]")));
        }
        let marginals = (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                let total: f64 = w.iter().sum();
                let mut probs: Vec<f64> = w.iter().map(|x| delta + (1.0 - k as f64 * delta) * x / total).collect();
                let s: f64 = probs.iter().sum();
                probs.iter_mut().for_each(|p| *p /= s);
                SiteMarginal::new(probs)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(space, marginals)
    }

    pub fn n(&self) -> usize {
        self.marginals.len()
    }

    pub fn k(&self) -> usize {
        self.space.k()
    }

    pub fn space(&self) -> &SpinSpace {
        &self.space
    }

    pub fn site(&self, i: usize) -> &SiteMarginal {
        &self.marginals[i]
    }

    pub fn marginals(&self) -> &[SiteMarginal] {
        &self.marginals
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_homogeneous(&self) -> bool {
        self.marginals.windows(2).all(|w| w[0] == w[1])
    }

    /// Restriction to a subset of sites, in the given order.
    pub fn restrict(&self, sites: &[usize]) -> Result<Self> {
        let marginals = sites
            .iter()
            .map(|&i| {
                self.marginals
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::IndexOutOfBounds(format!("site {i} >= n = {}", self.n())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.space.clone(), marginals)
    }

    /// Draw from the product measure `π`.
    pub fn sample_product<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u8]) {
        for (slot, m) in out.iter_mut().zip(&self.marginals) {
            *slot = m.sample(rng);
        }
    }
}

/// A probability vector over `S^n` in canonical index order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMeasure {
    n: usize,
    k: usize,
    weights: Vec<f64>,
}

impl DenseMeasure {
    pub fn new(n: usize, k: usize, weights: Vec<f64>) -> Result<Self> {
        let expected = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if weights.len() as u128 != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for k^n = {k}^{n}",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMeasure(format!("weight {w} is not a nonnegative number")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {sum}")));
        }
        Ok(DenseMeasure { n, k, weights })
    }

    pub fn point_mass(k: usize, config: &[u8], cap: usize) -> Result<Self> {
        let n = config.len();
        let len = state_count(n, k, cap)?;
        if let Some(&d) = config.iter().find(|&&d| d as usize >= k) {
            return Err(Error::IndexOutOfBounds(format!("spin index {d} >= k = {k}")));
        }
        let mut weights = vec![0.0; len];
        weights[config_index(config, k)] = 1.0;
        Ok(DenseMeasure { n, k, weights })
    }

    /// Builds a measure from nonnegative weights of any positive total.
    pub fn normalize(n: usize, k: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidMeasure("weights must be nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidMeasure("cannot renormalize a zero measure".into()));
        }
        Self::new(n, k, weights.into_iter().map(|w| w / sum).collect())
    }

    /// Rescales the weights to sum to one.
    pub fn renormalized(&self) -> Result<Self> {
        let sum: f64 = self.weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidMeasure("cannot renormalize a zero measure".into()));
        }
        Ok(DenseMeasure { n: self.n, k: self.k, weights: self.weights.iter().map(|w| w / sum).collect() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, config: &[u8]) -> f64 {
        self.weights[config_index(config, self.k)]
    }

    /// Marginal on `sites` (sorted ascending, duplicates removed). The empty
    /// set yields the one-point measure with weight 1.
    pub fn marginalize(&self, sites: &[usize]) -> Result<DenseMeasure> {
        let mut sites = sites.to_vec();
        sites.sort_unstable();
        sites.dedup();
        if let Some(&i) = sites.iter().find(|&&i| i >= self.n) {
            return Err(Error::IndexOutOfBounds(format!("site {i} >= n = {}", self.n)));
        }
        let k = self.k;
        let mut out = vec![0.0; k.pow(sites.len() as u32)];
        // place value of each full-index digit inside the marginal index
        let mut place = vec![0usize; self.n];
        let mut p = 1usize;
        for &i in sites.iter().rev() {
            place[i] = p;
            p *= k;
        }
        let mut digits = vec![0usize; self.n];
        let mut target = 0usize;
        for &w in &self.weights {
            out[target] += w;
            // odometer increment of `digits`, tracking the marginal index
            for i in (0..self.n).rev() {
                digits[i] += 1;
                target += place[i];
                if digits[i] < k {
                    break;
                }
                digits[i] = 0;
                target -= k * place[i];
            }
        }
        Ok(DenseMeasure { n: sites.len(), k, weights: out })
    }

    /// Single-site marginal as a probability vector.
    pub fn site_marginal(&self, i: usize) -> Result<Vec<f64>> {
        Ok(self.marginalize(&[i])?.weights)
    }

    /// Inverse-CDF sampler over the dense support.
    pub fn sampler(&self) -> DenseSampler {
        let mut acc = 0.0;
        let cumulative = self
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        DenseSampler { n: self.n, k: self.k, cumulative }
    }

    /// CSV form: `n,<n>` / `k,<k>` / `spins,<s_0>,…` header lines, then one
    /// weight per line in canonical index order.
    pub fn write_csv<W: Write>(&self, space: &SpinSpace, mut w: W) -> Result<()> {
        self.check_space(space)?;
        writeln!(w, "n,{}", self.n)?;
        writeln!(w, "k,{}", self.k)?;
        let spins: Vec<String> = space.values().iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "spins,{}", spins.join(","))?;
        for x in &self.weights {
            writeln!(w, "{x:?}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<(SpinSpace, DenseMeasure)> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing {what} line")))?
                .map_err(Error::from)
        };
        let header_value = |line: String, key: &str| -> Result<usize> {
            let (k, v) = line.split_once(',').ok_or_else(|| Error::Format(format!("bad {key} line")))?;
            if k.trim() != key {
                return Err(Error::Format(format!("expected `{key}`, found `{k}`")));
            }
            v.trim().parse().map_err(|e| Error::Format(format!("{key}: {e}")))
        };
        let n = header_value(next("n")?, "n")?;
        let k = header_value(next("k")?, "k")?;
        let spins_line = next("spins")?;
        let mut fields = spins_line.split(',');
        if fields.next().map(str::trim) != Some("spins") {
            return Err(Error::Format("expected `spins` line".into()));
        }
        let values = fields
            .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Format(format!("spin value: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != k {
            return Err(Error::Format(format!("{} spin values for k = {k}", values.len())));
        }
        let space = SpinSpace::new(values)?;
        let mut weights = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            weights.push(line.trim().parse::<f64>().map_err(|e| Error::Format(format!("weight: {e}")))?);
        }
        Ok((space, DenseMeasure::new(n, k, weights)?))
    }

    /// Binary form: magic `RCLM`, `n` and `k` as little-endian u32, `k`
    /// spin values then `k^n` weights as little-endian f64.
    pub fn to_bytes(&self, space: &SpinSpace) -> Result<Vec<u8>> {
        self.check_space(space)?;
        let mut out = Vec::with_capacity(12 + 8 * (self.k + self.weights.len()));
        out.extend_from_slice(b"RCLM");
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        for v in space.values().iter().chain(&self.weights) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(SpinSpace, DenseMeasure)> {
        if bytes.len() < 12 || &bytes[..4] != b"RCLM" {
            return Err(Error::Format("missing RCLM header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let (n, k) = (u32_at(4), u32_at(8));
        let floats: Vec<f64> = bytes[12..]
            .chunks(8)
            .map(|c| c.try_into().map(f64::from_le_bytes))
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format("truncated float payload".into()))?;
        if floats.len() < k {
            return Err(Error::Format("truncated spin values".into()));
        }
        let space = SpinSpace::new(floats[..k].to_vec())?;
        Ok((space, DenseMeasure::new(n, k, floats[k..].to_vec())?))
    }

    fn check_space(&self, space: &SpinSpace) -> Result<()> {
        if space.k() != self.k {
            return Err(Error::DimensionMismatch(format!("spin space k = {}, measure k = {}", space.k(), self.k)));
        }
        Ok(())
    }
}

/// Draws configurations from a dense measure by binary search on cumulative weights.
#[derive(Debug, Clone)]
pub struct DenseSampler {
    n: usize,
    k: usize,
    cumulative: Vec<f64>,
}

impl DenseSampler {
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        // skip zero-weight tail states that rounding could select
        idx.min(self.cumulative.len() - 1)
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u8]) {
        let mut idx = self.sample_index(rng);
        for slot in out.iter_mut().rev() {
            *slot = (idx % self.k) as u8;
            idx /= self.k;
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// The stationary product measure `π = ⊗ p_i`.
pub fn product_measure(seq: &MarginalSequence, cap: usize) -> Result<DenseMeasure> {
    let (n, k) = (seq.n(), seq.k());
    let len = state_count(n, k, cap)?;
    let mut weights = vec![1.0];
    weights.reserve(len);
    for m in seq.marginals() {
        weights = weights.iter().flat_map(|w| m.probs().iter().map(move |p| w * p)).collect();
    }
    Ok(DenseMeasure { n, k, weights })
}

/// `½ Σ |μ(σ) - ν(σ)|`.
pub fn tv_distance(mu: &DenseMeasure, nu: &DenseMeasure) -> Result<f64> {
    if mu.n != nu.n || mu.k != nu.k {
        return Err(Error::DimensionMismatch(format!(
            "(n, k) = ({}, {}) vs ({}, {})",
            mu.n, mu.k, nu.n, nu.k
        )));
    }
    let l1: f64 = mu.weights.iter().zip(&nu.weights).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * l1).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalCheck {
    pub ok: bool,
    pub worst_deviation: f64,
}

/// Sup-norm comparison of every single-site marginal of `mu` with `seq`.
pub fn check_marginal_constraint(mu: &DenseMeasure, seq: &MarginalSequence, tol: f64) -> Result<MarginalCheck> {
    if mu.n != seq.n() || mu.k != seq.k() {
        return Err(Error::DimensionMismatch(format!(
            "measure (n, k) = ({}, {}), marginals ({}, {})",
            mu.n,
            mu.k,
            seq.n(),
            seq.k()
        )));
    }
    let mut worst = 0.0f64;
    for i in 0..mu.n {
        let m = mu.site_marginal(i)?;
        for (a, b) in m.iter().zip(seq.site(i).probs()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(MarginalCheck { ok: worst <= tol, worst_deviation: worst })
}
