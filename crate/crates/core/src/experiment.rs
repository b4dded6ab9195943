//! Experiment configs (TOML), validation, and the deterministic runner
//! behind the command-line tool.
//!
//! A run produces a CSV data file and a JSON report. Both embed the artifact
//! version and the full config; the CSV carries them as leading `#` lines.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bounds::{
    basket_block_size, basket_experiment, bound_report, c0_from_rho, q2_pi_moments, second_moment_from_basket,
    BasketExperimentConfig, Q2Model,
};
use crate::dynamics::{evolve_exact, fragmentation_survival, sample_environment, sample_root_into, write_trace_csv, RootScratch};
use crate::error::{Error, Result};
use crate::initdist::{random_marginal_respecting, rho_estimate, StructuredInit};
use crate::measures::{product_measure, state_count, tv_distance, MarginalSequence, SiteMarginal, SpinSpace, DEFAULT_CAP};
use crate::onb::SiteBases;
use crate::profile::{profile_experiment, write_profile_csv, COUNT_CAP};
use crate::quenched::{hhat_l1_bounds, quenched_l2_fluctuation, quenched_moments, HhatBounds};
use crate::stats::{merge_ordered, run_tasks, split_samples, task_rng, Estimate, Moments};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ExactEvolve,
    McEvolve,
    Bounds,
    BasketLb,
    SharpnessQ2,
    Profile,
    Fragmentation,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ExactEvolve => "exact-evolve",
            ExperimentKind::McEvolve => "mc-evolve",
            ExperimentKind::Bounds => "bounds",
            ExperimentKind::BasketLb => "basket-lb",
            ExperimentKind::SharpnessQ2 => "sharpness-q2",
            ExperimentKind::Profile => "profile",
            ExperimentKind::Fragmentation => "fragmentation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MarginalSpec {
    Homogeneous { p: Vec<f64> },
    PerSite { sites: Vec<Vec<f64>> },
    /// Uniform on `P_δ`, drawn from its own seed.
    Random { delta: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub k: usize,
    pub n: usize,
    /// Spin values; defaults to `0, 1, …, k-1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spins: Option<Vec<f64>>,
    pub marginals: MarginalSpec,
    /// Assumed lower bound on every marginal probability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitSpec {
    Product,
    Monochromatic,
    Comonotonic,
    Basket { b: usize },
    RandomDense { seed: u64 },
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Comonotonic
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Times `0..=t_max` unless `ts` is given.
    pub t_max: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ts: Option<Vec<u32>>,
    /// Monte Carlo samples (environments for `bounds`).
    pub samples: u64,
    /// Samples under `π` where the experiment needs them; defaults to `samples`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_samples: Option<u64>,
    /// Values of `n 2^{-t}` for `basket-lb`, `sharpness-q2` and `profile`.
    pub s_values: Vec<f64>,
    pub n_values: Vec<usize>,
    pub rho_resolution: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            t_max: 8,
            ts: None,
            samples: 10_000,
            pi_samples: None,
            s_values: Vec::new(),
            n_values: Vec::new(),
            rho_resolution: 32,
        }
    }
}

impl RunConfig {
    pub fn times(&self) -> Vec<u32> {
        self.ts.clone().unwrap_or_else(|| (0..=self.t_max).collect())
    }
}

fn default_tasks() -> usize {
    64
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    /// Number of Monte Carlo tasks; fixes the random streams and merge order.
    #[serde(default = "default_tasks")]
    pub tasks: usize,
    /// Cap on `k^n` for dense work.
    #[serde(default = "default_cap")]
    pub cap: usize,
    pub model: ModelConfig,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn space(&self) -> Result<SpinSpace> {
        match &self.model.spins {
            Some(v) => SpinSpace::new(v.clone()),
            None => SpinSpace::integers(self.model.k),
        }
    }

    pub fn marginal_sequence(&self) -> Result<MarginalSequence> {
        let space = self.space()?;
        let n = self.model.n;
        match &self.model.marginals {
            MarginalSpec::Homogeneous { p } => MarginalSequence::homogeneous(space, SiteMarginal::new(p.clone())?, n),
            MarginalSpec::PerSite { sites } => {
                if sites.len() != n {
                    return Err(Error::DimensionMismatch(format!("{} site marginals for n = {n}", sites.len())));
                }
                let m = sites.iter().map(|p| SiteMarginal::new(p.clone())).collect::<Result<Vec<_>>>()?;
                MarginalSequence::new(space, m)
            }
            MarginalSpec::Random { delta, seed } => MarginalSequence::random(space, n, *delta, &mut task_rng(*seed, 0)),
        }
    }

    pub fn structured_init(&self) -> Result<StructuredInit> {
        let seq = self.marginal_sequence()?;
        match &self.init {
            InitSpec::Product => Ok(StructuredInit::product(seq)),
            InitSpec::Monochromatic => StructuredInit::monochromatic(seq),
            InitSpec::Comonotonic => Ok(StructuredInit::comonotonic(seq)),
            InitSpec::Basket { b } => StructuredInit::basket(seq, *b),
            InitSpec::RandomDense { seed } => {
                let mu = random_marginal_respecting(&seq, &mut task_rng(*seed, 0), self.cap)?;
                StructuredInit::dense(seq, mu)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
    /// The config is well formed but exceeds a size cap.
    pub capacity: bool,
}

impl Violation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Violation { field: field.into(), message: message.into(), capacity: false }
    }

    fn capacity(field: &str, message: impl Into<String>) -> Self {
        Violation { field: field.into(), message: message.into(), capacity: true }
    }
}

fn dyadic_depth(n: usize, s: f64) -> Option<u32> {
    let ratio = n as f64 / s;
    let t = ratio.log2().round();
    (t >= 0.0 && t < 63.0 && (2f64.powi(t as i32) - ratio).abs() < 1e-9 * ratio).then_some(t as u32)
}

/// Field-level problems with a config; empty when it can be run.
pub fn validate(cfg: &ExperimentConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let k = cfg.model.k;
    let n = cfg.model.n;
    if k < 2 {
        out.push(Violation::new("model.k", format!("k = {k} must be at least 2")));
        return out;
    }
    if n == 0 {
        out.push(Violation::new("model.n", "n must be at least 1"));
        return out;
    }
    if let Some(spins) = &cfg.model.spins {
        if spins.len() != k {
            out.push(Violation::new("model.spins", format!("{} spin values for k = {k}", spins.len())));
        } else if let Err(e) = SpinSpace::new(spins.clone()) {
            out.push(Violation::new("model.spins", e.to_string()));
        }
    }
    let marginal_lists: Vec<(String, &Vec<f64>)> = match &cfg.model.marginals {
        MarginalSpec::Homogeneous { p } => vec![("model.marginals.p".to_string(), p)],
        MarginalSpec::PerSite { sites } => {
            if sites.len() != n {
                out.push(Violation::new("model.marginals.sites", format!("{} site marginals for n = {n}", sites.len())));
            }
            sites.iter().enumerate().map(|(i, p)| (format!("model.marginals.sites[{i}]"), p)).collect()
        }
        MarginalSpec::Random { delta, .. } => {
            if !(*delta > 0.0 && *delta * k as f64 <= 1.0) {
                out.push(Violation::new("model.marginals.delta", format!("delta = {delta} must lie in (0, 1/k]")));
            }
            Vec::new()
        }
    };
    for (field, p) in &marginal_lists {
        if p.len() != k {
            out.push(Violation::new(field, format!("{} probabilities for k = {k}", p.len())));
            continue;
        }
        if let Err(e) = SiteMarginal::new((*p).clone()) {
            out.push(Violation::new(field, e.to_string()));
            continue;
        }
        if let Some(delta) = cfg.model.delta {
            let m = SiteMarginal::new((*p).clone()).unwrap();
            if m.delta() < delta {
                out.push(Violation::new(
                    field,
                    format!("marginal has delta {} below the declared delta {delta}", m.delta()),
                ));
            }
        }
    }
    if !out.is_empty() {
        return out;
    }
    let seq = match cfg.marginal_sequence() {
        Ok(s) => s,
        Err(e) => {
            out.push(Violation::new("model", e.to_string()));
            return out;
        }
    };
    if let (Some(delta), MarginalSpec::Random { .. }) = (cfg.model.delta, &cfg.model.marginals) {
        if seq.delta() < delta {
            out.push(Violation::new("model.delta", format!("sampled marginals have delta {} < {delta}", seq.delta())));
        }
    }
    if cfg.tasks == 0 {
        out.push(Violation::new("tasks", "at least one task is required"));
    }
    match &cfg.init {
        InitSpec::Monochromatic if !seq.is_homogeneous() => {
            out.push(Violation::new("init.kind", "monochromatic init needs homogeneous marginals"));
        }
        InitSpec::Basket { b } if *b == 0 || *b > n => {
            out.push(Violation::new("init.b", format!("block size b = {b} must lie in 1..={n}")));
        }
        InitSpec::RandomDense { .. } if state_count(n, k, cfg.cap).is_err() => {
            out.push(Violation::capacity("init.kind", format!("random-dense init needs k^n = {k}^{n} entries")));
        }
        _ => {}
    }
    let times = cfg.run.times();
    if times.iter().any(|&t| t >= 63) {
        out.push(Violation::new("run.t_max", "depths must be below 63"));
    }
    let needs_dense = matches!(cfg.experiment, ExperimentKind::ExactEvolve);
    if needs_dense && state_count(n, k, cfg.cap).is_err() {
        out.push(Violation::capacity("model.n", format!("k^n = {k}^{n} exceeds the cap of {}", cfg.cap)));
    }
    match cfg.experiment {
        ExperimentKind::McEvolve | ExperimentKind::Bounds => {
            if cfg.run.samples < 2 {
                out.push(Violation::new("run.samples", "need at least two samples"));
            }
            if cfg.experiment == ExperimentKind::Bounds {
                let max_t = times.iter().copied().max().unwrap_or(0);
                let leaves = (cfg.run.samples as u128) << max_t.min(62);
                if leaves * n as u128 > 1u128 << 36 {
                    out.push(Violation::capacity("run.samples", "environment sampling exceeds 2^36 leaf draws"));
                }
            }
        }
        ExperimentKind::BasketLb | ExperimentKind::SharpnessQ2 => {
            if cfg.run.s_values.is_empty() {
                out.push(Violation::new("run.s_values", "at least one value of n 2^-t is required"));
            }
            for &s in &cfg.run.s_values {
                if !(s > 0.0) || dyadic_depth(n, s).is_none() {
                    out.push(Violation::new("run.s_values", format!("n / s = {n} / {s} must be a power of two")));
                }
            }
            if cfg.experiment == ExperimentKind::BasketLb && !matches!(cfg.init, InitSpec::Comonotonic | InitSpec::Monochromatic) {
                out.push(Violation::new("init.kind", "basket-lb builds its own basket init; use comonotonic"));
            }
            if cfg.run.rho_resolution == 0 {
                out.push(Violation::new("run.rho_resolution", "must be positive"));
            }
        }
        ExperimentKind::Profile => {
            if !seq.is_homogeneous() {
                out.push(Violation::new("model.marginals", "profile needs homogeneous marginals"));
            }
            if cfg.run.s_values.is_empty() {
                out.push(Violation::new("run.s_values", "at least one value of s is required"));
            }
            for &s in &cfg.run.s_values {
                if !(s > 0.0) {
                    out.push(Violation::new("run.s_values", format!("s = {s} must be positive")));
                    continue;
                }
                for &t in &times {
                    let nn = ((s * 2f64.powi(t as i32)).round() as usize).max(1);
                    let req = crate::profile::composition_count(1usize << t.min(40), k)
                        .saturating_mul(crate::profile::composition_count(nn, k));
                    if t > 40 || req > COUNT_CAP {
                        out.push(Violation::capacity("run.t_max", format!("count evolution at t = {t} is too large")));
                    }
                }
            }
        }
        ExperimentKind::Fragmentation => {
            if cfg.run.n_values.is_empty() {
                out.push(Violation::new("run.n_values", "at least one n is required"));
            }
        }
        ExperimentKind::ExactEvolve => {}
    }
    out
}

/// Files produced by one run, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub files: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

fn csv_header(cfg: &ExperimentConfig) -> Result<Vec<u8>> {
    let config = serde_json::to_string(cfg).map_err(|e| Error::Format(e.to_string()))?;
    Ok(format!("# reclab {VERSION}\n# config: {config}\n").into_bytes())
}

fn report(cfg: &ExperimentConfig, results: serde_json::Value) -> Result<Vec<u8>> {
    let doc = json!({ "version": VERSION, "experiment": cfg.experiment.name(), "config": cfg, "results": results });
    let mut bytes = serde_json::to_vec_pretty(&doc).map_err(|e| Error::Format(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn to_json<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Format(e.to_string()))
}

fn csv_estimate(e: &Estimate) -> String {
    format!("{:?},{:?},{}", e.mean, e.se, e.samples)
}

/// Validates and runs an experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let violations = validate(cfg);
    if !violations.is_empty() {
        let text = violations.iter().map(|v| format!("{}: {}", v.field, v.message)).collect::<Vec<_>>().join("; ");
        return Err(Error::Validation { message: text, capacity_only: violations.iter().all(|v| v.capacity) });
    }
    let (csv, results) = match cfg.experiment {
        ExperimentKind::ExactEvolve => run_exact(cfg)?,
        ExperimentKind::McEvolve => run_mc(cfg)?,
        ExperimentKind::Bounds => run_bounds(cfg)?,
        ExperimentKind::BasketLb => run_basket(cfg)?,
        ExperimentKind::SharpnessQ2 => run_q2(cfg)?,
        ExperimentKind::Profile => run_profile(cfg)?,
        ExperimentKind::Fragmentation => run_fragmentation(cfg)?,
    };
    let mut data = csv_header(cfg)?;
    data.extend(csv);
    let name = cfg.experiment.name();
    Ok(RunOutput { files: vec![(format!("{name}.csv"), data), (format!("{name}.json"), report(cfg, results)?)] })
}

/// [`run`] inside a dedicated pool of `threads` workers. The thread count
/// never changes the output.
pub fn run_with_threads(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput> {
    match threads {
        None => run(cfg),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .install(|| run(cfg)),
    }
}

type Produced = (Vec<u8>, serde_json::Value);

fn run_exact(cfg: &ExperimentConfig) -> Result<Produced> {
    let init = cfg.structured_init()?;
    let mu = init.to_dense(cfg.cap)?;
    let pi = product_measure(init.seq(), cfg.cap)?;
    let t_max = cfg.run.times().into_iter().max().unwrap_or(0) as usize;
    let rows = evolve_exact(&mu, t_max, cfg.cap)?.rows(&pi)?;
    let rows: Vec<_> = rows.into_iter().filter(|r| cfg.run.times().contains(&r.t)).collect();
    let mut csv = Vec::new();
    write_trace_csv(&mut csv, &rows)?;
    let violations = rows.iter().filter(|r| r.tv_to_pi > r.upper_bound + 1e-12).count();
    Ok((csv, json!({ "estimator": "exact", "rows": to_json(&rows)?, "bound_violations": violations })))
}

/// `Σ_{i≠j} E_μ[f_1^i f_1^j]`, exact.
fn f1_pair_sum(init: &StructuredInit, bases: &SiteBases) -> Result<f64> {
    let n = init.seq().n();
    if init.dense_measure().is_some() {
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                total += 2.0 * init.pair_moment(i, j, bases.site(i).row(1), bases.site(j).row(1))?;
            }
        }
        return Ok(total);
    }
    let mut total = 0.0;
    for block in init.blocks() {
        let seq = init.seq();
        if seq.marginals()[block.clone()].windows(2).all(|w| w[0] == w[1]) {
            let b = block.len() as f64;
            total += b * (b - 1.0);
        } else {
            for i in block.clone() {
                for j in i + 1..block.end {
                    total += 2.0 * init.pair_moment(i, j, bases.site(i).row(1), bases.site(j).row(1))?;
                }
            }
        }
    }
    Ok(total)
}

#[derive(Serialize)]
struct McRow {
    t: u32,
    sq_magnetization: Estimate,
    exact: f64,
}

fn run_mc(cfg: &ExperimentConfig) -> Result<Produced> {
    let init = cfg.structured_init()?;
    let bases = SiteBases::build(init.seq())?;
    let n = init.seq().n();
    let pair_sum = f1_pair_sum(&init, &bases)?;
    let mut rows = Vec::new();
    for (idx, t) in cfg.run.times().into_iter().enumerate() {
        let counts = split_samples(cfg.run.samples, cfg.tasks);
        let parts = run_tasks(cfg.seed.wrapping_add(idx as u64), counts.len(), |j, rng| {
            let mut m = Moments::new();
            let mut scratch = RootScratch::default();
            let mut sigma = vec![0u8; n];
            for _ in 0..counts[j] {
                sample_root_into(&init, t, rng, &mut scratch, &mut sigma);
                let s: f64 = sigma.iter().enumerate().map(|(i, &x)| bases.site(i).value(1, x as usize)).sum();
                m.push(s * s / n as f64);
            }
            m
        });
        let est = merge_ordered(parts, |a, b| a.merge(b)).unwrap_or_default().estimate();
        let exact = 1.0 + pair_sum * 0.5f64.powi(t as i32) / n as f64;
        rows.push(McRow { t, sq_magnetization: est, exact });
    }
    let mut csv = b"t,statistic,estimate,se,samples,exact\n".to_vec();
    for r in &rows {
        csv.extend(format!("{},sq_magnetization,{},{:?}\n", r.t, csv_estimate(&r.sq_magnetization), r.exact).bytes());
    }
    Ok((csv, json!({ "estimator": "monte-carlo", "rows": to_json(&rows)? })))
}

#[derive(Serialize)]
struct BoundsRow {
    t: u32,
    upper_linear: f64,
    upper_phi: f64,
    phi_in_regime: bool,
    hhat_half: Estimate,
    exact_tv: Option<f64>,
}

fn run_bounds(cfg: &ExperimentConfig) -> Result<Produced> {
    let init = cfg.structured_init()?;
    let seq = init.seq().clone();
    let bases = SiteBases::build(&seq)?;
    let (n, k) = (seq.n(), seq.k());
    let exact = if state_count(n, k, cfg.cap.min(1 << 16)).is_ok() {
        let mu = init.to_dense(cfg.cap)?;
        let pi = product_measure(&seq, cfg.cap)?;
        let t_max = cfg.run.times().into_iter().max().unwrap_or(0) as usize;
        let trace = evolve_exact(&mu, t_max, cfg.cap)?;
        Some(trace.steps().iter().map(|m| tv_distance(m, &pi)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut env_csv = Vec::new();
    for (idx, t) in cfg.run.times().into_iter().enumerate() {
        let counts = split_samples(cfg.run.samples, cfg.tasks);
        let parts = run_tasks(cfg.seed.wrapping_add(idx as u64), counts.len(), |j, rng| -> Result<Vec<(HhatBounds, f64)>> {
            (0..counts[j])
                .map(|_| {
                    let env = sample_environment(&init, t, rng, "init")?;
                    let q = quenched_moments(&env, &bases)?;
                    Ok((hhat_l1_bounds(&q), quenched_l2_fluctuation(&q)))
                })
                .collect()
        });
        let per_env: Vec<(HhatBounds, f64)> =
            parts.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
        let mut m = Moments::new();
        for (b, _) in &per_env {
            m.push(0.5 * b.combined);
        }
        for (id, (b, l2)) in per_env.iter().enumerate() {
            env_csv.push(format!("{t},{id},{:?},{:?},{:?},{:?}", b.a_xi, b.bound1, b.bound2, l2));
        }
        let br = bound_report(n as u64, k as u64, t);
        rows.push(BoundsRow {
            t,
            upper_linear: br.upper_linear,
            upper_phi: br.upper_phi.value,
            phi_in_regime: br.upper_phi.in_regime,
            hhat_half: m.estimate(),
            exact_tv: exact.as_ref().map(|e| e[t as usize]),
        });
    }
    let mut csv = b"t,upper_linear,upper_phi,phi_in_regime,hhat_half,se,samples,exact_tv\n".to_vec();
    for r in &rows {
        let exact = r.exact_tv.map(|v| format!("{v:?}")).unwrap_or_default();
        csv.extend(
            format!(
                "{},{:?},{:?},{},{},{}\n",
                r.t,
                r.upper_linear,
                r.upper_phi,
                r.phi_in_regime,
                csv_estimate(&r.hhat_half),
                exact
            )
            .bytes(),
        );
    }
    Ok((csv, json!({ "estimator": "monte-carlo over environments", "rows": to_json(&rows)?, "environments": {
        "columns": "t,env_id,A_xi,bound1,bound2,l2_fluct",
        "rows": env_csv,
    } })))
}

fn run_basket(cfg: &ExperimentConfig) -> Result<Produced> {
    let seq = cfg.marginal_sequence()?;
    let n = seq.n();
    let rho = rho_estimate(seq.space(), seq.delta(), cfg.run.rho_resolution)?;
    let c0 = c0_from_rho(rho);
    let mut items = Vec::new();
    let mut csv = b"s,t,b_requested,b,a,few_blocks,pi_exceed,se,samples,mu_exceed,se,samples,pi_event,se,samples,mu_event,se,samples,tv_lower,se,samples,xi_ratio,se,samples,xi_mean,se,samples,first_moment_floor\n".to_vec();
    for (idx, &s) in cfg.run.s_values.iter().enumerate() {
        let t = dyadic_depth(n, s).expect("validated");
        let (requested, b) = basket_block_size(c0, t, n);
        let init = StructuredInit::basket(seq.clone(), b)?;
        let mut bc = BasketExperimentConfig::new(n, t, b);
        bc.samples_mu = cfg.run.samples;
        bc.samples_pi = cfg.run.pi_samples.unwrap_or(cfg.run.samples);
        bc.seed = cfg.seed.wrapping_add(idx as u64);
        bc.tasks = cfg.tasks;
        let rep = basket_experiment(&bc, &init)?;
        let second = second_moment_from_basket(&rep, rho);
        csv.extend(
            format!(
                "{s:?},{t},{requested},{b},{},{},{},{},{},{},{},{},{},{:?}\n",
                rep.a,
                rep.few_blocks,
                csv_estimate(&rep.pi_block_exceed),
                csv_estimate(&rep.mu_block_exceed),
                csv_estimate(&rep.pi_event),
                csv_estimate(&rep.mu_event),
                csv_estimate(&rep.tv_lower),
                csv_estimate(&rep.mu_xi_ratio),
                csv_estimate(&rep.mu_xi_mean),
                second.first_moment_floor
            )
            .bytes(),
        );
        items.push(json!({ "s": s, "b_requested": requested, "report": to_json(&rep)?, "second_moment": to_json(&second)? }));
    }
    Ok((csv, json!({ "rho_hat": rho, "rho_resolution": cfg.run.rho_resolution, "c0": c0, "rows": items })))
}

fn run_q2(cfg: &ExperimentConfig) -> Result<Produced> {
    let init = cfg.structured_init()?;
    let seq = init.seq().clone();
    let n = seq.n();
    let mut csv = b"s,t,n,q2_mean,se,samples,q2_second,se,samples,exact_second\n".to_vec();
    let mut rows = Vec::new();
    for (idx, &s) in cfg.run.s_values.iter().enumerate() {
        let t = dyadic_depth(n, s).expect("validated");
        let model = Q2Model::from_init(&init, t)?;
        let (mean, second) = q2_pi_moments(&model, &seq, cfg.run.samples, cfg.seed.wrapping_add(idx as u64), cfg.tasks);
        let exact = model.exact_pi_second_moment();
        csv.extend(format!("{s:?},{t},{n},{},{},{exact:?}\n", csv_estimate(&mean), csv_estimate(&second)).bytes());
        rows.push(json!({ "s": s, "t": t, "mean": to_json(&mean)?, "second": to_json(&second)?, "exact_second": exact }));
    }
    Ok((csv, json!({ "rows": rows })))
}

fn run_profile(cfg: &ExperimentConfig) -> Result<Produced> {
    let seq = cfg.marginal_sequence()?;
    let p = seq.site(0);
    let mut rows = Vec::new();
    for &s in &cfg.run.s_values {
        rows.extend(profile_experiment(p, s, &cfg.run.times(), COUNT_CAP)?);
    }
    let mut csv = Vec::new();
    write_profile_csv(&mut csv, &rows)?;
    Ok((csv, json!({ "estimator": "exact", "rows": to_json(&rows)? })))
}

fn run_fragmentation(cfg: &ExperimentConfig) -> Result<Produced> {
    let mut csv = b"n,t,survival,se,samples,union_bound\n".to_vec();
    let mut rows = Vec::new();
    let t_max = cfg.run.times().into_iter().max().unwrap_or(0);
    for (idx, &n) in cfg.run.n_values.iter().enumerate() {
        let surv = fragmentation_survival(n, t_max, cfg.run.samples, cfg.seed.wrapping_add(idx as u64), cfg.tasks);
        let pairs = (n * n.saturating_sub(1) / 2) as f64;
        for t in cfg.run.times() {
            let e = &surv[t as usize];
            let bound = (pairs * 0.5f64.powi(t as i32)).min(1.0);
            csv.extend(format!("{n},{t},{},{bound:?}\n", csv_estimate(e)).bytes());
            rows.push(json!({ "n": n, "t": t, "survival": to_json(e)?, "union_bound": bound }));
        }
    }
    Ok((csv, json!({ "rows": rows })))
}
