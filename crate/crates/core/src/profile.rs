//! The homogeneous monochromatic cutoff profile: exact evolution in count
//! space, the `α/β` form of the quenched density, `ψ`, and the Gaussian TV
//! limit.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{state_count, DenseMeasure, SiteMarginal};
use crate::onb::OrthonormalBasis;
use crate::special::chi_square_cdf;
use crate::stats::{merge_ordered, monte_carlo_scalar, Estimate};

/// Default cap on `C(N+k-1, k-1) · C(n+k-1, k-1)`.
pub const COUNT_CAP: u128 = 1 << 34;

/// All count vectors `(n_0, …, n_{k-1})` with `Σ n_l = n`, lexicographic.
pub fn compositions(n: usize, k: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; k];
    fn rec(rem: usize, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos == cur.len() - 1 {
            cur[pos] = rem as u32;
            out.push(cur.clone());
            return;
        }
        for c in 0..=rem {
            cur[pos] = c as u32;
            rec(rem - c, pos + 1, cur, out);
        }
    }
    rec(n, 0, &mut cur, &mut out);
    out
}

fn binomial_u128(n: u128, r: u128) -> u128 {
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// `C(n + k - 1, k - 1)`.
pub fn composition_count(n: usize, k: usize) -> u128 {
    binomial_u128((n + k - 1) as u128, (k - 1) as u128)
}

struct LnFactorial(Vec<f64>);

impl LnFactorial {
    /// Compensated running sum, so large tables keep full relative accuracy.
    fn new(max: usize) -> Self {
        let mut v = vec![0.0; max + 1];
        let (mut sum, mut carry) = (0.0f64, 0.0f64);
        for i in 1..=max {
            let y = (i as f64).ln() - carry;
            let next = sum + y;
            carry = (next - sum) - y;
            sum = next;
            v[i] = sum;
        }
        LnFactorial(v)
    }

    /// `ln` of the multinomial pmf of `counts` under `probs`.
    fn ln_pmf(&self, counts: &[u32], ln_probs: &[f64]) -> f64 {
        let total: u32 = counts.iter().sum();
        let mut v = self.0[total as usize];
        for (&c, &lp) in counts.iter().zip(ln_probs) {
            if c > 0 {
                v += c as f64 * lp - self.0[c as usize];
            }
        }
        v
    }
}

/// A law on site-count vectors of `n` sites and `k` spins.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMeasure {
    n: usize,
    k: usize,
    counts: Vec<Vec<u32>>,
    weights: Vec<f64>,
}

impl CountMeasure {
    pub fn new(n: usize, k: usize, weights: Vec<f64>) -> Result<Self> {
        let counts = compositions(n, k);
        if weights.len() != counts.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} count vectors",
                weights.len(),
                counts.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidMeasure("count weights must be a probability vector".into()));
        }
        Ok(CountMeasure { n, k, counts, weights })
    }

    /// `Multinomial(n, p)`.
    pub fn multinomial(p: &SiteMarginal, n: usize) -> Self {
        let k = p.k();
        let counts = compositions(n, k);
        let lf = LnFactorial::new(n);
        let ln_p: Vec<f64> = p.probs().iter().map(|x| x.ln()).collect();
        let weights = counts.iter().map(|c| lf.ln_pmf(c, &ln_p).exp()).collect();
        CountMeasure { n, k, counts, weights }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn counts(&self) -> &[Vec<u32>] {
        &self.counts
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tv(&self, other: &CountMeasure) -> Result<f64> {
        if self.n != other.n || self.k != other.k {
            return Err(Error::DimensionMismatch("count measures of different shape".into()));
        }
        let s: f64 = self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).sum();
        Ok((0.5 * s).min(1.0))
    }

    /// Spreads each count vector's mass uniformly over its configurations.
    pub fn lift_to_dense(&self, cap: usize) -> Result<DenseMeasure> {
        let (n, k) = (self.n, self.k);
        let len = state_count(n, k, cap)?;
        let lf = LnFactorial::new(n);
        let pos: std::collections::HashMap<&[u32], usize> =
            self.counts.iter().enumerate().map(|(j, c)| (c.as_slice(), j)).collect();
        let mut w = vec![0.0; len];
        let mut counts = vec![0u32; k];
        for (idx, slot) in w.iter_mut().enumerate() {
            counts.iter_mut().for_each(|c| *c = 0);
            let mut rem = idx;
            for _ in 0..n {
                counts[rem % k] += 1;
                rem /= k;
            }
            let ln_coef = lf.0[n] - counts.iter().map(|&c| lf.0[c as usize]).sum::<f64>();
            *slot = self.weights[pos[counts.as_slice()]] * (-ln_coef).exp();
        }
        DenseMeasure::new(n, k, w)
    }
}

/// Exact site-count law after `t` steps from the monochromatic init, with
/// the probability that some spin is missing from all leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct CountEvolution {
    pub measure: CountMeasure,
    /// `P(M_l = 0 for some l)`, where the quenched log-density leaves its domain.
    pub domain_failure: f64,
}

/// `μ_t` in count space: leaf colors `M ~ Multinomial(N, p)`, then site
/// counts `~ Multinomial(n, M/N)`.
pub fn monochromatic_count_evolution(p: &SiteMarginal, n: usize, t: u32, cap: u128) -> Result<CountEvolution> {
    let k = p.k();
    let big_n = 1usize
        .checked_shl(t)
        .filter(|&x| x > 0 && t < 40)
        .ok_or_else(|| Error::InvalidParameter(format!("depth t = {t} too large")))?;
    let required = composition_count(big_n, k).saturating_mul(composition_count(n, k));
    if required > cap {
        return Err(Error::CapacityExceeded { required, cap });
    }
    let envs = compositions(big_n, k);
    let sites = compositions(n, k);
    let lf = LnFactorial::new(big_n.max(n));
    let ln_p: Vec<f64> = p.probs().iter().map(|x| x.ln()).collect();
    let ln_big_n = (big_n as f64).ln();
    let chunks = 64.min(envs.len());
    let per = envs.len().div_ceil(chunks);
    let parts: Vec<(Vec<f64>, f64)> = envs
        .par_chunks(per)
        .map(|chunk| {
            let mut acc = vec![0.0; sites.len()];
            let mut fail = 0.0;
            let mut ln_q = vec![0.0; k];
            for m in chunk {
                let w_env = lf.ln_pmf(m, &ln_p).exp();
                if w_env == 0.0 {
                    continue;
                }
                if m.contains(&0) {
                    fail += w_env;
                }
                for (l, &ml) in m.iter().enumerate() {
                    ln_q[l] = if ml == 0 { f64::NEG_INFINITY } else { (ml as f64).ln() - ln_big_n };
                }
                for (slot, c) in acc.iter_mut().zip(&sites) {
                    if c.iter().zip(m).any(|(&ci, &mi)| ci > 0 && mi == 0) {
                        continue;
                    }
                    *slot += w_env * lf.ln_pmf(c, &ln_q).exp();
                }
            }
            (acc, fail)
        })
        .collect();
    let (weights, fail) = merge_ordered(parts, |a, b| {
        (a.0.iter().zip(&b.0).map(|(x, y)| x + y).collect(), a.1 + b.1)
    })
    .expect("at least one environment");
    Ok(CountEvolution { measure: CountMeasure::new(n, k, weights)?, domain_failure: fail })
}

/// `½ Σ |cm - Multinomial(n, p)|`.
pub fn count_tv_to_stationary(cm: &CountMeasure, p: &SiteMarginal) -> Result<f64> {
    if p.k() != cm.k {
        return Err(Error::DimensionMismatch("marginal and count measure disagree on k".into()));
    }
    cm.tv(&CountMeasure::multinomial(p, cm.n))
}

/// `‖N(0, (1+s) I_d) - N(0, I_d)‖_TV` via the radial reduction: the densities
/// cross at `r² = d(1+s) ln(1+s) / s`.
pub fn gaussian_tv_limit(d: u32, s: f64) -> f64 {
    assert!(d >= 1 && s > 0.0, "need d >= 1 and s > 0");
    let r2 = d as f64 * (1.0 + s) * s.ln_1p() / s;
    chi_square_cdf(d, r2) - chi_square_cdf(d, r2 / (1.0 + s))
}

/// `α = √n Σ_l p_l f(s_l) ln g_l` and `β = n Σ_l p_l ln g_l` with
/// `g_l = 1 + Σ_m q_m f_m(s_l)`, so that the quenched density equals
/// `exp(α · f̄(σ) + β)` with `f̄_m(σ) = n^{-1/2} Σ_i f_m(σ_i)`.
pub fn alpha_beta(q: &[f64], basis: &OrthonormalBasis, n: usize) -> Result<(Vec<f64>, f64)> {
    let k = basis.k();
    if q.len() != k - 1 {
        return Err(Error::DimensionMismatch(format!("{} moments for k = {k}", q.len())));
    }
    let p = basis.marginal();
    let mut ln_g = vec![0.0; k];
    for (l, slot) in ln_g.iter_mut().enumerate() {
        let g = 1.0 + q.iter().enumerate().map(|(j, qm)| qm * basis.value(j + 1, l)).sum::<f64>();
        if g <= 0.0 {
            return Err(Error::DomainError { level: l, value: g });
        }
        *slot = g.ln();
    }
    let nf = n as f64;
    let beta = nf * (0..k).map(|l| p.prob(l) * ln_g[l]).sum::<f64>();
    let alpha = (1..k)
        .map(|m| nf.sqrt() * (0..k).map(|l| p.prob(l) * basis.value(m, l) * ln_g[l]).sum::<f64>())
        .collect();
    Ok((alpha, beta))
}

/// `f̄_m(σ) = n^{-1/2} Σ_i f_m(σ_i)` for `m = 1..k-1`.
pub fn normalized_sums(basis: &OrthonormalBasis, sigma: &[u8]) -> Vec<f64> {
    let scale = 1.0 / (sigma.len() as f64).sqrt();
    (1..basis.k())
        .map(|m| scale * sigma.iter().map(|&s| basis.value(m, s as usize)).sum::<f64>())
        .collect()
}

/// `ψ(u) = E[exp(Z·u - ½‖Z‖²)]`, `Z ~ N(0, sI)`, in closed form:
/// `(1+s)^{-d/2} exp(s‖u‖² / (2(1+s)))`.
pub fn psi(u: &[f64], s: f64) -> f64 {
    let d = u.len() as f64;
    let u2: f64 = u.iter().map(|x| x * x).sum();
    (1.0 + s).powf(-d / 2.0) * (s * u2 / (2.0 * (1.0 + s))).exp()
}

/// Monte Carlo estimate of `ψ(u)`.
pub fn psi_monte_carlo(u: &[f64], s: f64, samples: u64, seed: u64, tasks: usize) -> Estimate {
    let sd = s.sqrt();
    monte_carlo_scalar(seed, tasks, samples, |rng| {
        let mut e = 0.0;
        for &ui in u {
            let z: f64 = sd * rng.sample::<f64, _>(StandardNormal);
            e += z * ui - 0.5 * z * z;
        }
        e.exp()
    })
}

/// Draws `M ~ Multinomial(total, p)` by sequential binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(total: u64, p: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0u64; p.len()];
    let mut rem = total;
    let mut mass = 1.0;
    for (l, &pl) in p.iter().enumerate() {
        if l == p.len() - 1 {
            out[l] = rem;
            break;
        }
        let prob = (pl / mass).clamp(0.0, 1.0);
        let draw = rand_distr::Binomial::new(rem, prob).expect("valid binomial").sample(rng);
        out[l] = draw;
        rem -= draw;
        mass -= pl;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileRow {
    pub k: usize,
    pub s: f64,
    pub t: u32,
    pub n: usize,
    pub tv_exact: f64,
    pub tv_gaussian: f64,
    pub gap: f64,
    pub alpha_domain_failure_rate: f64,
}

/// Exact count TV against the Gaussian limit for `n = round(s 2^t)`.
pub fn profile_experiment(p: &SiteMarginal, s: f64, ts: &[u32], cap: u128) -> Result<Vec<ProfileRow>> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("s = {s} must be positive")));
    }
    let k = p.k();
    let limit = gaussian_tv_limit((k - 1) as u32, s);
    ts.iter()
        .map(|&t| {
            let n = ((s * 2f64.powi(t as i32)).round() as usize).max(1);
            let evo = monochromatic_count_evolution(p, n, t, cap)?;
            let tv = count_tv_to_stationary(&evo.measure, p)?;
            Ok(ProfileRow {
                k,
                s,
                t,
                n,
                tv_exact: tv,
                tv_gaussian: limit,
                gap: (tv - limit).abs(),
                alpha_domain_failure_rate: evo.domain_failure,
            })
        })
        .collect()
}

pub fn write_profile_csv<W: Write>(mut w: W, rows: &[ProfileRow]) -> Result<()> {
    writeln!(w, "k,s,t,n,tv_exact,tv_gaussian,gap,alpha_domain_failure_rate")?;
    for r in rows {
        writeln!(
            w,
            "{},{:?},{},{},{:?},{:?},{:?},{:?}",
            r.k, r.s, r.t, r.n, r.tv_exact, r.tv_gaussian, r.gap, r.alpha_domain_failure_rate
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::evolve_exact;
    use crate::initdist::monochromatic_dense;
    use crate::measures::{config_index, product_measure, tv_distance, MarginalSequence, SpinSpace, DEFAULT_CAP};
    use crate::stats::{task_rng, Moments};

    #[test]
    fn composition_enumeration() {
        assert_eq!(compositions(2, 2), vec![vec![0, 2], vec![1, 1], vec![2, 0]]);
        assert_eq!(compositions(5, 3).len() as u128, composition_count(5, 3));
        assert_eq!(composition_count(128, 2), 129);
    }

    #[test]
    fn depth_zero_is_monochromatic() {
        let p = SiteMarginal::new(vec![0.2, 0.3, 0.5]).unwrap();
        let evo = monochromatic_count_evolution(&p, 4, 0, COUNT_CAP).unwrap();
        for (c, w) in evo.measure.counts().iter().zip(evo.measure.weights()) {
            let expected = match c.iter().position(|&x| x == 4) {
                Some(l) => p.prob(l),
                None => 0.0,
            };
            assert!((w - expected).abs() < 1e-15);
        }
        assert!((evo.domain_failure - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_site_balanced_depth_zero_tv_is_half() {
        let p = SiteMarginal::uniform(2).unwrap();
        let evo = monochromatic_count_evolution(&p, 2, 0, COUNT_CAP).unwrap();
        let tv = count_tv_to_stationary(&evo.measure, &p).unwrap();
        assert!((tv - 0.5).abs() < 1e-15);
        let stat = CountMeasure::multinomial(&p, 5);
        assert!(count_tv_to_stationary(&stat, &p).unwrap() < 1e-15);
    }

    #[test]
    fn lift_matches_dense_evolution() {
        for (k, n, t) in [(2usize, 3usize, 2u32), (3, 3, 3), (2, 4, 3), (3, 4, 2)] {
            let p = SiteMarginal::new((1..=k).map(|l| l as f64 / (k * (k + 1) / 2) as f64).collect()).unwrap();
            let evo = monochromatic_count_evolution(&p, n, t, COUNT_CAP).unwrap();
            let lifted = evo.measure.lift_to_dense(DEFAULT_CAP).unwrap();
            let mono = monochromatic_dense(&p, n, DEFAULT_CAP).unwrap();
            let dense = evolve_exact(&mono, t as usize, DEFAULT_CAP).unwrap();
            let d = dense.final_measure();
            for (a, b) in lifted.weights().iter().zip(d.weights()) {
                assert!((a - b).abs() < 1e-10);
            }
            // exchangeability of the dense evolution
            let mut sigma = vec![0u8; n];
            for idx in 0..d.weights().len() {
                let mut rem = idx;
                for s in sigma.iter_mut().rev() {
                    *s = (rem % k) as u8;
                    rem /= k;
                }
                sigma.reverse();
                assert!((d.weights()[idx] - d.weights()[config_index(&sigma, k)]).abs() < 1e-13);
            }
            let seq = MarginalSequence::homogeneous(SpinSpace::integers(k).unwrap(), p.clone(), n).unwrap();
            let pi = product_measure(&seq, DEFAULT_CAP).unwrap();
            let tv_count = count_tv_to_stationary(&evo.measure, &p).unwrap();
            assert!((tv_count - tv_distance(d, &pi).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn converges_at_fixed_n() {
        let p = SiteMarginal::uniform(2).unwrap();
        let evo = monochromatic_count_evolution(&p, 6, 14, COUNT_CAP).unwrap();
        assert!(count_tv_to_stationary(&evo.measure, &p).unwrap() < 2e-3);
    }

    #[test]
    fn capacity() {
        let p = SiteMarginal::uniform(3).unwrap();
        assert!(matches!(
            monochromatic_count_evolution(&p, 64, 6, 1000),
            Err(Error::CapacityExceeded { .. })
        ));
    }

    #[test]
    fn gaussian_tv_shape() {
        assert!((gaussian_tv_limit(1, 1.0) - 0.166).abs() < 1e-3);
        for d in 1..=5 {
            let mut prev = 0.0;
            for i in 1..200 {
                let s = i as f64 * 0.05;
                let v = gaussian_tv_limit(d, s);
                assert!(v > prev && v < 1.0);
                prev = v;
            }
            let tiny = gaussian_tv_limit(d, 1e-4);
            assert!(tiny <= d as f64 / 2.0 * 1e-4 * 1.01);
        }
    }

    #[test]
    fn alpha_beta_reconstructs_density() {
        let space = SpinSpace::integers(3).unwrap();
        let p = SiteMarginal::new(vec![0.2, 0.5, 0.3]).unwrap();
        let basis = OrthonormalBasis::build(&space, &p).unwrap();
        let mut rng = task_rng(4, 0);
        for _ in 0..200 {
            let n = rng.random_range(1..=32);
            let q: Vec<f64> = (0..2).map(|_| rng.random_range(-0.3..0.3)).collect();
            let sigma: Vec<u8> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let (alpha, beta) = alpha_beta(&q, &basis, n).unwrap();
            let fbar = normalized_sums(&basis, &sigma);
            let recon = (alpha.iter().zip(&fbar).map(|(a, f)| a * f).sum::<f64>() + beta).exp();
            let direct: f64 = sigma
                .iter()
                .map(|&s| 1.0 + q[0] * basis.value(1, s as usize) + q[1] * basis.value(2, s as usize))
                .product();
            assert!((recon - direct).abs() <= 1e-8 * direct.abs());
        }
        let (a0, b0) = alpha_beta(&[0.0, 0.0], &basis, 10).unwrap();
        assert_eq!((a0, b0), (vec![0.0, 0.0], 0.0));
        assert!(matches!(alpha_beta(&[-5.0, 0.0], &basis, 3), Err(Error::DomainError { .. })));
    }

    #[test]
    fn alpha_beta_second_order() {
        let space = SpinSpace::integers(3).unwrap();
        let p = SiteMarginal::new(vec![0.2, 0.5, 0.3]).unwrap();
        let basis = OrthonormalBasis::build(&space, &p).unwrap();
        let n = 50;
        for scale in [1e-2, 3e-3, 1e-3] {
            let q = [scale, -0.7 * scale];
            let q2 = q[0] * q[0] + q[1] * q[1];
            let (alpha, beta) = alpha_beta(&q, &basis, n).unwrap();
            // β has no first-order term and α no zeroth-order term, so the
            // remainders are O(n‖q‖³) and O(√n ‖q‖²)
            assert!((beta + 0.5 * n as f64 * q2).abs() < 20.0 * n as f64 * scale.powi(3));
            for m in 0..2 {
                assert!((alpha[m] - (n as f64).sqrt() * q[m]).abs() < 20.0 * (n as f64).sqrt() * scale * scale);
            }
        }
    }

    #[test]
    fn alpha_clt_moments() {
        // balanced k = 2, s = 1: α ≈ N(0, s), β + ½α² ≈ 0
        let space = SpinSpace::integers(2).unwrap();
        let p = SiteMarginal::uniform(2).unwrap();
        let basis = OrthonormalBasis::build(&space, &p).unwrap();
        let big_n = 1u64 << 12;
        let n = big_n as usize;
        let mut rng = task_rng(10, 0);
        let (mut a1, mut a2, mut gap) = (Moments::new(), Moments::new(), Moments::new());
        for _ in 0..20_000 {
            let m = sample_multinomial(big_n, p.probs(), &mut rng);
            let q = [(0..2).map(|l| m[l] as f64 / big_n as f64 * basis.value(1, l)).sum::<f64>()];
            let (alpha, beta) = alpha_beta(&q, &basis, n).unwrap();
            a1.push(alpha[0]);
            a2.push(alpha[0] * alpha[0]);
            gap.push(beta + 0.5 * alpha[0] * alpha[0]);
        }
        assert!(a1.estimate().within(0.0, 3.0));
        assert!(a2.estimate().within(1.0, 3.0));
        assert!(gap.mean().abs() < 1e-2);
    }

    #[test]
    fn psi_closed_form_and_monte_carlo() {
        let s = 0.5;
        let u0 = [0.0, 0.0];
        let mc = psi_monte_carlo(&u0, s, 200_000, 5, 16);
        assert!(mc.within(1.5f64.powf(-1.0), 3.0));
        let u = [0.4, -0.2];
        assert!(psi_monte_carlo(&u, s, 200_000, 6, 16).within(psi(&u, s), 3.0));
        let mut rng = task_rng(7, 0);
        let mut m = Moments::new();
        for _ in 0..200_000 {
            let z: Vec<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            m.push(psi(&z, s));
        }
        assert!(m.estimate().within(1.0, 3.0));
        assert!((psi(&[3.0, 1.0], 1e-9) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn profile_rows_and_csv() {
        let p = SiteMarginal::uniform(2).unwrap();
        let rows = profile_experiment(&p, 1.0, &[3, 4], COUNT_CAP).unwrap();
        assert_eq!(rows[0].n, 8);
        assert_eq!(rows[1].n, 16);
        let mut buf = Vec::new();
        write_profile_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,s,t,n,tv_exact,tv_gaussian,gap,alpha_domain_failure_rate\n2,1.0,3,8,"));
        let small = profile_experiment(&p, 0.25, &[6], COUNT_CAP).unwrap()[0].tv_exact;
        let large = profile_experiment(&p, 4.0, &[6], COUNT_CAP).unwrap()[0].tv_exact;
        assert!(large > small);
    }
}
