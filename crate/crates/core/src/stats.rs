//! Monte Carlo plumbing: reproducible per-task RNG streams, mergeable
//! sufficient statistics and a deterministic parallel task driver.
//!
//! Every Monte Carlo loop in the crate is split into a fixed number of tasks.
//! Task `j` draws from the ChaCha8 stream `j` of the master seed, so its
//! output does not depend on which thread runs it. Task results are collected
//! in task order and merged by a pairwise tree whose shape depends only on the
//! task count, which makes the final numbers independent of the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub type TaskRng = ChaCha8Rng;

/// Independent generator for task `task` under the master `seed`.
pub fn task_rng(seed: u64, task: u64) -> TaskRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task);
    rng
}

/// Mean, standard error of the mean and sample count of an estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub samples: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { mean: value, se: 0.0, samples: 0 }
    }

    /// `|mean - target| <= z * se`, with a tiny absolute floor so that
    /// zero-variance estimators compare against exact targets.
    pub fn within(&self, target: f64, z: f64) -> bool {
        (self.mean - target).abs() <= z * self.se + 1e-12
    }
}

/// Streaming mean/variance (Welford) with an associative merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2
            + other.m2
            + delta * delta * (self.count as f64) * (other.count as f64) / count as f64;
        Moments { count, mean, m2 }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn estimate(&self) -> Estimate {
        let se = if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        };
        Estimate { mean: self.mean, se, samples: self.count }
    }
}

/// Mergeable accumulator for a pair of per-sample quantities, keeping the
/// cross moment needed for delta-method ratio errors.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairMoments {
    pub x: Moments,
    pub y: Moments,
    cxy: f64,
}

impl PairMoments {
    pub fn push(&mut self, x: f64, y: f64) {
        let dx = x - self.x.mean();
        self.x.push(x);
        self.y.push(y);
        self.cxy += dx * (y - self.y.mean());
    }

    pub fn merge(&self, other: &PairMoments) -> PairMoments {
        let n1 = self.x.count() as f64;
        let n2 = other.x.count() as f64;
        let cxy = if n1 == 0.0 || n2 == 0.0 {
            self.cxy + other.cxy
        } else {
            let dx = other.x.mean() - self.x.mean();
            let dy = other.y.mean() - self.y.mean();
            self.cxy + other.cxy + dx * dy * n1 * n2 / (n1 + n2)
        };
        PairMoments { x: self.x.merge(&other.x), y: self.y.merge(&other.y), cxy }
    }

    pub fn covariance(&self) -> f64 {
        let n = self.x.count();
        if n < 2 {
            0.0
        } else {
            self.cxy / (n - 1) as f64
        }
    }

    /// Estimate of `E[y] / E[x]^2` with a delta-method standard error.
    pub fn ratio_to_squared_mean(&self) -> Estimate {
        let n = self.x.count();
        let mx = self.x.mean();
        let my = self.y.mean();
        let r = my / (mx * mx);
        // gradient of g(mx, my) = my / mx^2
        let gx = -2.0 * my / (mx * mx * mx);
        let gy = 1.0 / (mx * mx);
        let var = gx * gx * self.x.variance() + gy * gy * self.y.variance() + 2.0 * gx * gy * self.covariance();
        let se = if n < 2 { 0.0 } else { (var.max(0.0) / n as f64).sqrt() };
        Estimate { mean: r, se, samples: n }
    }
}

/// Splits `total` samples over `tasks` tasks; earlier tasks absorb the remainder.
pub fn split_samples(total: u64, tasks: usize) -> Vec<u64> {
    let tasks = tasks.max(1) as u64;
    let base = total / tasks;
    let extra = total % tasks;
    (0..tasks).map(|j| base + u64::from(j < extra)).collect()
}

/// Runs `tasks` independent tasks in parallel, returning results in task order.
pub fn run_tasks<T, F>(seed: u64, tasks: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut TaskRng) -> T + Sync,
{
    (0..tasks)
        .into_par_iter()
        .map(|j| {
            let mut rng = task_rng(seed, j as u64);
            f(j, &mut rng)
        })
        .collect()
}

/// Pairwise tree reduction in index order; the tree shape depends only on
/// `items.len()`.
pub fn merge_ordered<T, F>(items: Vec<T>, merge: F) -> Option<T>
where
    T: Clone,
    F: Fn(&T, &T) -> T + Copy,
{
    match items.len() {
        0 => None,
        1 => items.into_iter().next(),
        len => {
            let mut left = items;
            let right = left.split_off(len / 2);
            let l = merge_ordered(left, merge)?;
            let r = merge_ordered(right, merge)?;
            Some(merge(&l, &r))
        }
    }
}

/// Convenience: parallel Monte Carlo of a scalar, `total` samples over `tasks`.
pub fn monte_carlo_scalar<F>(seed: u64, tasks: usize, total: u64, sample: F) -> Estimate
where
    F: Fn(&mut TaskRng) -> f64 + Sync,
{
    let counts = split_samples(total, tasks);
    let parts = run_tasks(seed, counts.len(), |j, rng| {
        let mut m = Moments::new();
        for _ in 0..counts[j] {
            m.push(sample(rng));
        }
        m
    });
    merge_ordered(parts, |a, b| a.merge(b)).unwrap_or_default().estimate()
}
