//! Closed-form bounds on `D_n(μ, t)` and the empirical experiments around
//! them: the basket test-event lower bound and the `Q₂` sharpness statistic.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dynamics::{sample_root_into, ConfigSampler, RootScratch};
use crate::error::{Error, Result};
use crate::initdist::StructuredInit;
use crate::measures::MarginalSequence;
use crate::onb::SiteBases;
use crate::quenched::{hhat_bounds_from_a, MomentAccumulator};
use crate::stats::{merge_ordered, run_tasks, split_samples, Estimate, Moments, PairMoments};

/// `min(1, (k-1) n 2^{-t})`.
pub fn upper_bound_linear(n: u64, k: u64, t: u32) -> f64 {
    ((k - 1) as f64 * n as f64 * 0.5f64.powi(t as i32)).min(1.0)
}

/// `x/2` on `[0, 1)`, `1 - 1/(1 + x²)` from 1 on.
pub fn phi(x: f64) -> f64 {
    if x < 1.0 {
        x / 2.0
    } else {
        1.0 - 1.0 / (1.0 + x * x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiBound {
    pub value: f64,
    /// `false` outside `n 2^{-t} >= ln 2 / (2(k-1))`; `value` is then the linear bound.
    pub in_regime: bool,
}

pub fn phi_regime(n: u64, k: u64, t: u32) -> bool {
    n as f64 * 0.5f64.powi(t as i32) >= std::f64::consts::LN_2 / (2.0 * (k - 1) as f64)
}

/// `1 - ½ exp(-2(k-1) n 2^{-t})` in its regime of validity.
pub fn upper_bound_phi(n: u64, k: u64, t: u32) -> PhiBound {
    if phi_regime(n, k, t) {
        let x = (k - 1) as f64 * n as f64 * 0.5f64.powi(t as i32);
        PhiBound { value: 1.0 - 0.5 * (-2.0 * x).exp(), in_regime: true }
    } else {
        PhiBound { value: upper_bound_linear(n, k, t), in_regime: false }
    }
}

/// Closed-form bounds at one `(n, k, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub n: u64,
    pub k: u64,
    pub t: u32,
    pub upper_linear: f64,
    pub upper_phi: PhiBound,
}

pub fn bound_report(n: u64, k: u64, t: u32) -> BoundReport {
    BoundReport { n, k, t, upper_linear: upper_bound_linear(n, k, t), upper_phi: upper_bound_phi(n, k, t) }
}

/// Monte Carlo `½ E_ξ[min(bound1, bound2)]` over environments of depth `t`.
pub fn expected_hhat_bound<S: ConfigSampler>(
    sampler: &S,
    bases: &SiteBases,
    t: u32,
    environments: u64,
    seed: u64,
    tasks: usize,
) -> Result<Estimate> {
    if bases.n() != sampler.n() || bases.k() != sampler.k() {
        return Err(Error::DimensionMismatch("bases do not match the sampler".into()));
    }
    let leaves = 1u64.checked_shl(t).ok_or_else(|| Error::InvalidParameter(format!("depth t = {t} too large")))?;
    let counts = split_samples(environments, tasks);
    let parts = run_tasks(seed, counts.len(), |j, rng| -> Result<Moments> {
        let mut m = Moments::new();
        let mut leaf = vec![0u8; sampler.n()];
        for _ in 0..counts[j] {
            let mut acc = MomentAccumulator::new(bases.clone());
            for _ in 0..leaves {
                sampler.sample(rng, &mut leaf);
                acc.push_leaf(&leaf);
            }
            let q = acc.finish()?;
            m.push(0.5 * hhat_bounds_from_a(q.a_xi()).combined);
        }
        Ok(m)
    });
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(merge_ordered(parts, |a, b| a.merge(b)).unwrap_or_default().estimate())
}

/// `C₀ = 80 / ρ`.
pub fn c0_from_rho(rho: f64) -> f64 {
    80.0 / rho
}

/// `⌈C₀ 2^t⌉` and the same value capped at `n`.
pub fn basket_block_size(c0: f64, t: u32, n: usize) -> (u64, usize) {
    let requested = (c0 * 2f64.powi(t as i32)).ceil() as u64;
    (requested, requested.min(n as u64) as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasketExperimentConfig {
    pub n: usize,
    pub t: u32,
    pub b: usize,
    pub xi_factor: f64,
    pub event_fraction: f64,
    pub samples_mu: u64,
    pub samples_pi: u64,
    pub seed: u64,
    pub tasks: usize,
}

impl BasketExperimentConfig {
    /// Thresholds `20b` and `a/15`.
    pub fn new(n: usize, t: u32, b: usize) -> Self {
        BasketExperimentConfig {
            n,
            t,
            b,
            xi_factor: 20.0,
            event_fraction: 1.0 / 15.0,
            samples_mu: 20_000,
            samples_pi: 20_000,
            seed: 0,
            tasks: 64,
        }
    }

    pub fn blocks(&self) -> usize {
        self.n / self.b.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.b == 0 || self.b > self.n {
            return Err(Error::InvalidParameter(format!("block size b = {} must lie in 1..={}", self.b, self.n)));
        }
        if self.t >= 63 {
            return Err(Error::InvalidParameter(format!("depth t = {} too large", self.t)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct BlockStats {
    xi: PairMoments,
    exceed: Moments,
    event: Moments,
}

impl BlockStats {
    fn merge(&self, o: &BlockStats) -> BlockStats {
        BlockStats { xi: self.xi.merge(&o.xi), exceed: self.exceed.merge(&o.exceed), event: self.event.merge(&o.event) }
    }
}

fn f1_tables(seq: &MarginalSequence) -> Result<Vec<Vec<f64>>> {
    let bases = SiteBases::build(seq)?;
    Ok((0..seq.n()).map(|i| bases.site(i).row(1).to_vec()).collect())
}

fn block_stats<F>(cfg: &BasketExperimentConfig, f1: &[Vec<f64>], samples: u64, seed: u64, draw: F) -> BlockStats
where
    F: Fn(&mut crate::stats::TaskRng, &mut RootScratch, &mut [u8]) + Sync,
{
    let a = cfg.blocks();
    let b = cfg.b;
    let xi_threshold = cfg.xi_factor * b as f64;
    let z_threshold = cfg.event_fraction * a as f64;
    let counts = split_samples(samples, cfg.tasks);
    let parts = run_tasks(seed, counts.len(), |j, rng| {
        let mut stats = BlockStats::default();
        let mut scratch = RootScratch::default();
        let mut sigma = vec![0u8; cfg.n];
        for _ in 0..counts[j] {
            draw(rng, &mut scratch, &mut sigma);
            let (mut sum_xi, mut sum_xi2, mut z) = (0.0, 0.0, 0usize);
            for block in 0..a {
                let m: f64 = (block * b..(block + 1) * b).map(|i| f1[i][sigma[i] as usize]).sum();
                let xi = m * m;
                sum_xi += xi;
                sum_xi2 += xi * xi;
                z += usize::from(xi >= xi_threshold);
            }
            stats.xi.push(sum_xi / a as f64, sum_xi2 / a as f64);
            stats.exceed.push(z as f64 / a as f64);
            stats.event.push(if z as f64 >= z_threshold { 1.0 } else { 0.0 });
        }
        stats
    });
    merge_ordered(parts, |x, y| x.merge(y)).unwrap_or_default()
}

fn check_blocks(cfg: &BasketExperimentConfig, init: &StructuredInit) -> Result<()> {
    cfg.validate()?;
    let expected: Vec<Range<usize>> = (0..cfg.blocks()).map(|j| j * cfg.b..(j + 1) * cfg.b).collect();
    if init.seq().n() != cfg.n || init.blocks() != expected.as_slice() {
        return Err(Error::InvalidParameter(format!(
            "initial distribution is not a basket init with n = {}, b = {}",
            cfg.n, cfg.b
        )));
    }
    Ok(())
}

/// Estimates for the block statistics `Ξ_j = (Σ_{i∈B_j} f_1^i(σ_i))²`
/// and the event `A = {#{j : Ξ_j >= 20b} >= a/15}` under `π` and `μ_t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasketReport {
    pub n: usize,
    pub t: u32,
    pub b: usize,
    pub a: usize,
    /// `a < 15`: the event threshold is below one block.
    pub few_blocks: bool,
    pub xi_threshold: f64,
    pub event_threshold: f64,
    pub pi_xi_mean: Estimate,
    pub mu_xi_mean: Estimate,
    pub mu_xi_second: Estimate,
    pub mu_xi_ratio: Estimate,
    pub pi_block_exceed: Estimate,
    pub mu_block_exceed: Estimate,
    pub pi_event: Estimate,
    pub mu_event: Estimate,
    /// `max(0, μ̂_t(A) - π̂(A) - 2 SE)`.
    pub tv_lower: Estimate,
}

pub fn basket_experiment(cfg: &BasketExperimentConfig, init: &StructuredInit) -> Result<BasketReport> {
    check_blocks(cfg, init)?;
    let seq = init.seq();
    let f1 = f1_tables(seq)?;
    let pi = block_stats(cfg, &f1, cfg.samples_pi, cfg.seed, |rng, _, out| seq.sample_product(rng, out));
    let mu = block_stats(cfg, &f1, cfg.samples_mu, cfg.seed ^ 0x9e37_79b9_7f4a_7c15, |rng, scratch, out| {
        sample_root_into(init, cfg.t, rng, scratch, out)
    });
    let (pe, me) = (pi.event.estimate(), mu.event.estimate());
    let se = (pe.se * pe.se + me.se * me.se).sqrt();
    let tv_lower = Estimate { mean: (me.mean - pe.mean - 2.0 * se).max(0.0), se, samples: pe.samples + me.samples };
    let a = cfg.blocks();
    Ok(BasketReport {
        n: cfg.n,
        t: cfg.t,
        b: cfg.b,
        a,
        few_blocks: a < 15,
        xi_threshold: cfg.xi_factor * cfg.b as f64,
        event_threshold: cfg.event_fraction * a as f64,
        pi_xi_mean: pi.xi.x.estimate(),
        mu_xi_mean: mu.xi.x.estimate(),
        mu_xi_second: mu.xi.y.estimate(),
        mu_xi_ratio: mu.xi.ratio_to_squared_mean(),
        pi_block_exceed: pi.exceed.estimate(),
        mu_block_exceed: mu.exceed.estimate(),
        pi_event: pe,
        mu_event: me,
        tv_lower,
    })
}

/// Checks `E[Ξ_j²] <= 3.1 E[Ξ_j]²` and `E[Ξ_j] >= b + b(b-1)2^{-t}ρ` under `μ_t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondMomentReport {
    pub xi_mean: Estimate,
    pub xi_second: Estimate,
    pub ratio: Estimate,
    pub first_moment_floor: f64,
    pub ratio_ok: bool,
    pub first_moment_ok: bool,
}

pub fn evolved_block_second_moment_check(
    cfg: &BasketExperimentConfig,
    init: &StructuredInit,
    rho: f64,
) -> Result<SecondMomentReport> {
    check_blocks(cfg, init)?;
    let f1 = f1_tables(init.seq())?;
    let mu = block_stats(cfg, &f1, cfg.samples_mu, cfg.seed ^ 0x9e37_79b9_7f4a_7c15, |rng, scratch, out| {
        sample_root_into(init, cfg.t, rng, scratch, out)
    });
    Ok(second_moment_report(cfg, mu.xi, rho))
}

fn second_moment_report(cfg: &BasketExperimentConfig, xi: PairMoments, rho: f64) -> SecondMomentReport {
    summarize_second_moment(cfg.b, cfg.t, xi.x.estimate(), xi.y.estimate(), xi.ratio_to_squared_mean(), rho)
}

/// The same checks read off an existing [`BasketReport`].
pub fn second_moment_from_basket(report: &BasketReport, rho: f64) -> SecondMomentReport {
    summarize_second_moment(report.b, report.t, report.mu_xi_mean, report.mu_xi_second, report.mu_xi_ratio, rho)
}

fn summarize_second_moment(b: usize, t: u32, xi_mean: Estimate, xi_second: Estimate, ratio: Estimate, rho: f64) -> SecondMomentReport {
    let b = b as f64;
    let floor = b + b * (b - 1.0) * 0.5f64.powi(t as i32) * rho;
    SecondMomentReport {
        xi_mean,
        xi_second,
        ratio,
        first_moment_floor: floor,
        ratio_ok: ratio.mean <= 3.1 + 3.0 * ratio.se,
        first_moment_ok: xi_mean.mean >= floor - 3.0 * xi_mean.se,
    }
}

/// One group of second-order terms in `Q₂`.
#[derive(Debug, Clone, PartialEq)]
pub enum Q2Term {
    /// `Σ_{m,m'} c[(m-1)(k-1) + m'-1] f_m^i(σ_i) f_{m'}^j(σ_j)`.
    Pair { i: usize, j: usize, coef: Vec<f64> },
    /// A comonotonic block with identical marginals, where
    /// `E_μ[f_m^i f_{m'}^j] = δ_{mm'}` for every pair in the block.
    HomogeneousBlock { sites: Range<usize> },
}

/// `Q₂(σ) = Σ_{i<j} Σ_{m,m'} N^{-1} E_μ[f_m^i f_{m'}^j] f_m^i(σ_i) f_{m'}^j(σ_j)`.
#[derive(Debug, Clone)]
pub struct Q2Model {
    k: usize,
    t: u32,
    bases: SiteBases,
    terms: Vec<Q2Term>,
}

impl Q2Model {
    pub fn from_init(init: &StructuredInit, t: u32) -> Result<Self> {
        let seq = init.seq();
        let bases = SiteBases::build(seq)?;
        let k = seq.k();
        let mut terms = Vec::new();
        let pair_term = |i: usize, j: usize| -> Result<Q2Term> {
            let mut coef = Vec::with_capacity((k - 1) * (k - 1));
            for m in 1..k {
                for mm in 1..k {
                    coef.push(init.pair_moment(i, j, bases.site(i).row(m), bases.site(j).row(mm))?);
                }
            }
            Ok(Q2Term::Pair { i, j, coef })
        };
        if init.dense_measure().is_some() {
            for i in 0..seq.n() {
                for j in i + 1..seq.n() {
                    terms.push(pair_term(i, j)?);
                }
            }
        } else {
            for block in init.blocks() {
                let homogeneous = seq.marginals()[block.clone()].windows(2).all(|w| w[0] == w[1]);
                if homogeneous {
                    terms.push(Q2Term::HomogeneousBlock { sites: block.clone() });
                } else {
                    for i in block.clone() {
                        for j in i + 1..block.end {
                            terms.push(pair_term(i, j)?);
                        }
                    }
                }
            }
        }
        Ok(Q2Model { k, t, bases, terms })
    }

    pub fn terms(&self) -> &[Q2Term] {
        &self.terms
    }

    fn inv_n(&self) -> f64 {
        0.5f64.powi(self.t as i32)
    }

    pub fn evaluate(&self, sigma: &[u8]) -> f64 {
        let k = self.k;
        let mut total = 0.0;
        for term in &self.terms {
            match term {
                Q2Term::Pair { i, j, coef } => {
                    let (fi, fj) = (self.bases.site(*i), self.bases.site(*j));
                    let (si, sj) = (sigma[*i] as usize, sigma[*j] as usize);
                    for m in 1..k {
                        for mm in 1..k {
                            total += coef[(m - 1) * (k - 1) + mm - 1] * fi.value(m, si) * fj.value(mm, sj);
                        }
                    }
                }
                Q2Term::HomogeneousBlock { sites } => {
                    for m in 1..k {
                        let (mut s, mut s2) = (0.0, 0.0);
                        for i in sites.clone() {
                            let v = self.bases.site(i).value(m, sigma[i] as usize);
                            s += v;
                            s2 += v * v;
                        }
                        total += 0.5 * (s * s - s2);
                    }
                }
            }
        }
        total * self.inv_n()
    }

    /// `E_π[Q₂²] = N^{-2} Σ_{i<j} Σ_{m,m'} E_μ[f_m^i f_{m'}^j]²`, by
    /// orthonormality of the products under `π`.
    pub fn exact_pi_second_moment(&self) -> f64 {
        let mut total = 0.0;
        for term in &self.terms {
            total += match term {
                Q2Term::Pair { coef, .. } => coef.iter().map(|c| c * c).sum::<f64>(),
                Q2Term::HomogeneousBlock { sites } => {
                    let b = sites.len() as f64;
                    b * (b - 1.0) / 2.0 * (self.k - 1) as f64
                }
            };
        }
        total * self.inv_n() * self.inv_n()
    }
}

pub fn q2_statistic(model: &Q2Model, sigma: &[u8]) -> f64 {
    model.evaluate(sigma)
}

/// Monte Carlo `E_π[Q₂]` and `E_π[Q₂²]` over `σ ~ π`.
pub fn q2_pi_moments(model: &Q2Model, seq: &MarginalSequence, samples: u64, seed: u64, tasks: usize) -> (Estimate, Estimate) {
    let counts = split_samples(samples, tasks);
    let parts = run_tasks(seed, counts.len(), |j, rng| {
        let mut m = PairMoments::default();
        let mut sigma = vec![0u8; seq.n()];
        for _ in 0..counts[j] {
            seq.sample_product(rng, &mut sigma);
            let q = model.evaluate(&sigma);
            m.push(q, q * q);
        }
        m
    });
    let m = merge_ordered(parts, |a, b| a.merge(b)).unwrap_or_default();
    (m.x.estimate(), m.y.estimate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::evolve_exact;
    use crate::initdist::random_marginal_respecting;
    use crate::measures::{index_config, product_measure, tv_distance, SiteMarginal, SpinSpace, DEFAULT_CAP};
    use crate::stats::task_rng;

    #[test]
    fn linear_bound_examples() {
        assert_eq!(upper_bound_linear(4, 2, 4), 0.25);
        assert_eq!(upper_bound_linear(3, 3, 0), 1.0);
    }

    #[test]
    fn phi_examples_and_shape() {
        assert_eq!(phi(0.5), 0.25);
        assert_eq!(phi(1.0), 0.5);
        assert_eq!(phi(1.0 - 1e-15), (1.0 - 1e-15) / 2.0);
        assert!((phi(3.0) - 0.9).abs() < 1e-15);
        let mut prev = 0.0;
        for i in 0..=100_000 {
            let v = phi(i as f64 * 1e-3);
            assert!(v >= prev && v < 1.0);
            prev = v;
        }
    }

    #[test]
    fn phi_bound_examples() {
        let b = upper_bound_phi(8, 2, 3);
        assert!(b.in_regime);
        assert!((b.value - (1.0 - 0.5 * (-2.0f64).exp())).abs() < 1e-15);
        assert!((b.value - 0.9323).abs() < 1e-4);
        let below = upper_bound_phi(1, 2, 3);
        assert!(!below.in_regime);
        assert_eq!(below.value, upper_bound_linear(1, 2, 3));
        // exactly at the threshold ln 2 / 2 the bound is 3/4
        let x = std::f64::consts::LN_2 / 2.0;
        assert!((1.0 - 0.5 * (-2.0 * x).exp() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn hhat_chain_dominates_exact_distance() {
        let space = SpinSpace::integers(2).unwrap();
        let seq = MarginalSequence::random(space, 3, 0.1, &mut task_rng(1, 0)).unwrap();
        let init = StructuredInit::comonotonic(seq.clone());
        let mu = init.to_dense(DEFAULT_CAP).unwrap();
        let pi = product_measure(&seq, DEFAULT_CAP).unwrap();
        let bases = SiteBases::build(&seq).unwrap();
        let trace = evolve_exact(&mu, 5, DEFAULT_CAP).unwrap();
        for t in 1..=5u32 {
            let exact = tv_distance(trace.at(t as usize), &pi).unwrap();
            let est = expected_hhat_bound(&init, &bases, t, 4000, 7, 8).unwrap();
            assert!(exact <= est.mean + 3.0 * est.se, "t = {t}: {exact} vs {est:?}");
            assert!(est.mean <= upper_bound_linear(3, 2, t) + 3.0 * est.se || est.mean <= 1.0);
        }
    }

    #[test]
    fn basket_on_small_instance_is_conservative() {
        let space = SpinSpace::integers(2).unwrap();
        let seq = MarginalSequence::homogeneous(space, SiteMarginal::uniform(2).unwrap(), 4).unwrap();
        let init = StructuredInit::basket(seq.clone(), 4).unwrap();
        let mut cfg = BasketExperimentConfig::new(4, 1, 4);
        cfg.xi_factor = 2.0;
        cfg.samples_mu = 20_000;
        cfg.samples_pi = 20_000;
        let report = basket_experiment(&cfg, &init).unwrap();
        let mu = evolve_exact(&init.to_dense(DEFAULT_CAP).unwrap(), 1, DEFAULT_CAP).unwrap();
        let pi = product_measure(&seq, DEFAULT_CAP).unwrap();
        let exact = tv_distance(mu.final_measure(), &pi).unwrap();
        assert!(report.tv_lower.mean <= exact);
        assert!(report.pi_xi_mean.within(4.0, 3.0));
        assert!(report.few_blocks);
        // exact event probability: Ξ = 16 iff all four spins agree
        let a_exact: f64 = (0..16)
            .filter(|&x| {
                let c = index_config(x, 4, 2);
                c.iter().all(|&s| s == c[0])
            })
            .map(|x| mu.final_measure().weights()[x])
            .sum();
        assert!(report.mu_event.within(a_exact, 4.0), "{a_exact} vs {:?}", report.mu_event);
        assert!(basket_experiment(&BasketExperimentConfig::new(4, 1, 2), &init).is_err());
    }

    #[test]
    fn q2_vanishes_for_product_and_matches_dense() {
        let space = SpinSpace::integers(3).unwrap();
        let seq = MarginalSequence::random(space, 4, 0.1, &mut task_rng(2, 0)).unwrap();
        let product = Q2Model::from_init(&StructuredInit::product(seq.clone()), 1).unwrap();
        assert_eq!(product.exact_pi_second_moment(), 0.0);
        assert_eq!(product.evaluate(&[0, 1, 2, 0]), 0.0);

        let hom = MarginalSequence::homogeneous(SpinSpace::integers(3).unwrap(), seq.site(0).clone(), 4).unwrap();
        for s in [seq.clone(), hom] {
            let co = StructuredInit::comonotonic(s.clone());
            let dense = StructuredInit::dense(s.clone(), co.to_dense(DEFAULT_CAP).unwrap()).unwrap();
            let a = Q2Model::from_init(&co, 2).unwrap();
            let b = Q2Model::from_init(&dense, 2).unwrap();
            for x in 0..81 {
                let sigma = index_config(x, 4, 3);
                assert!((a.evaluate(&sigma) - b.evaluate(&sigma)).abs() < 1e-12);
            }
            assert!((a.exact_pi_second_moment() - b.exact_pi_second_moment()).abs() < 1e-12);
            // brute-force E_π[Q₂²]
            let pi = product_measure(&s, DEFAULT_CAP).unwrap();
            let direct: f64 = (0..81).map(|x| pi.weights()[x] * a.evaluate(&index_config(x, 4, 3)).powi(2)).sum();
            assert!((direct - a.exact_pi_second_moment()).abs() < 1e-12);
        }
    }

    #[test]
    fn q2_pi_moments_match_exact() {
        let space = SpinSpace::integers(2).unwrap();
        let seq = MarginalSequence::homogeneous(space, SiteMarginal::new(vec![0.3, 0.7]).unwrap(), 64).unwrap();
        let model = Q2Model::from_init(&StructuredInit::comonotonic(seq.clone()), 5).unwrap();
        let (mean, second) = q2_pi_moments(&model, &seq, 40_000, 3, 8);
        assert!(mean.within(0.0, 4.0));
        assert!(second.within(model.exact_pi_second_moment(), 4.0));
    }

    #[test]
    fn ipf_inits_feed_q2() {
        let space = SpinSpace::integers(2).unwrap();
        let seq = MarginalSequence::random(space, 3, 0.1, &mut task_rng(3, 0)).unwrap();
        let mu = random_marginal_respecting(&seq, &mut task_rng(3, 1), DEFAULT_CAP).unwrap();
        let model = Q2Model::from_init(&StructuredInit::dense(seq, mu).unwrap(), 0).unwrap();
        assert_eq!(model.terms().len(), 3);
        assert!(model.exact_pi_second_moment() > 0.0);
    }

    #[test]
    fn block_sizes() {
        assert_eq!(basket_block_size(80.0, 3, 1 << 14), (640, 640));
        assert_eq!(basket_block_size(80.0, 10, 1 << 14), (81_920, 1 << 14));
    }
}
