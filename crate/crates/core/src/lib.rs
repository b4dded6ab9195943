//! Exact and Monte Carlo laboratory for the nonlinear recombination model on
//! finite product spaces `S^n`.
//!
//! Starting from `μ_0` with site marginals `p_i`, the dynamics is
//! `μ_{t+1} = μ_t ∘ μ_t`, where each coordinate of the offspring is copied
//! from one of two independent parents chosen uniformly. The crate offers
//! exact evolution for small `n`, the tree sampler for any `n`, quenched
//! density tools, bound evaluators and the Gaussian cutoff profile.

pub mod bounds;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod initdist;
pub mod measures;
pub mod onb;
pub mod profile;
pub mod quenched;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use measures::{DenseMeasure, MarginalSequence, SiteMarginal, SpinSpace, DEFAULT_CAP};
