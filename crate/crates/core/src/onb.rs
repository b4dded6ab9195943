//! Per-site orthonormal polynomial bases of `L²(S, p_i)`.
//!
//! Bases are built by modified Gram–Schmidt (one re-orthogonalization pass)
//! on the monomials of the centered, rescaled spin value. That spans the same
//! polynomial spaces as the raw monomials while keeping the Gram–Schmidt
//! inputs well scaled. `f_m` has degree exactly `m` with positive leading
//! coefficient, and `f_0 ≡ 1`.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measures::{MarginalSequence, SiteMarginal, SpinSpace};

const BREAKDOWN_NORM: f64 = 1e-14;

/// Value table `table[m][l] = f_m(s_l)` for one marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    k: usize,
    table: Vec<f64>,
    marginal: SiteMarginal,
}

fn inner(a: &[f64], b: &[f64], p: &[f64]) -> f64 {
    a.iter().zip(b).zip(p).map(|((x, y), w)| x * y * w).sum()
}

impl OrthonormalBasis {
    pub fn build(space: &SpinSpace, p: &SiteMarginal) -> Result<Self> {
        let k = space.k();
        if p.k() != k {
            return Err(Error::DimensionMismatch(format!("marginal has {} states, spin space {k}", p.k())));
        }
        let probs = p.probs();
        let mean: f64 = space.values().iter().zip(probs).map(|(s, w)| s * w).sum();
        let scale = space.values().iter().map(|s| (s - mean).abs()).fold(0.0, f64::max);
        let z: Vec<f64> = space.values().iter().map(|s| (s - mean) / scale).collect();

        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k);
        rows.push(vec![1.0; k]);
        for m in 1..k {
            let mut w: Vec<f64> = z.iter().map(|x| x.powi(m as i32)).collect();
            for _pass in 0..2 {
                for f in &rows {
                    let c = inner(&w, f, probs);
                    w.iter_mut().zip(f).for_each(|(wi, fi)| *wi -= c * fi);
                }
            }
            let norm = inner(&w, &w, probs).sqrt();
            if !(norm >= BREAKDOWN_NORM) {
                return Err(Error::NumericalBreakdown { degree: m, norm });
            }
            rows.push(w.into_iter().map(|x| x / norm).collect());
        }
        Ok(OrthonormalBasis { k, table: rows.concat(), marginal: p.clone() })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn marginal(&self) -> &SiteMarginal {
        &self.marginal
    }

    /// `f_m(s_l)` with bounds checking.
    pub fn evaluate(&self, m: usize, l: usize) -> Result<f64> {
        if m >= self.k || l >= self.k {
            return Err(Error::IndexOutOfBounds(format!("(m, l) = ({m}, {l}) with k = {}", self.k)));
        }
        Ok(self.table[m * self.k + l])
    }

    #[inline]
    pub fn value(&self, m: usize, l: usize) -> f64 {
        self.table[m * self.k + l]
    }

    /// Row `m`: values of `f_m` on `s_0 … s_{k-1}`.
    pub fn row(&self, m: usize) -> &[f64] {
        &self.table[m * self.k..(m + 1) * self.k]
    }

    /// The `k × k` matrix `M[m][l] = f_m(s_l)`, row-major.
    pub fn matrix(&self) -> &[f64] {
        &self.table
    }

    /// `⟨f_a, f_b⟩_p`.
    pub fn inner(&self, a: usize, b: usize) -> f64 {
        inner(self.row(a), self.row(b), self.marginal.probs())
    }
}

/// Builds the basis of one site. Alias kept for call sites that read better
/// as a free function.
pub fn build_basis(space: &SpinSpace, p: &SiteMarginal) -> Result<OrthonormalBasis> {
    OrthonormalBasis::build(space, p)
}

/// One basis per site; sites with bitwise-identical marginals share a table.
#[derive(Debug, Clone)]
pub struct SiteBases {
    k: usize,
    bases: Vec<Arc<OrthonormalBasis>>,
}

impl SiteBases {
    pub fn build(seq: &MarginalSequence) -> Result<Self> {
        let mut cache: HashMap<Vec<u64>, Arc<OrthonormalBasis>> = HashMap::new();
        let mut bases = Vec::with_capacity(seq.n());
        for m in seq.marginals() {
            let key: Vec<u64> = m.probs().iter().map(|p| p.to_bits()).collect();
            let basis = match cache.get(&key) {
                Some(b) => Arc::clone(b),
                None => {
                    let b = Arc::new(OrthonormalBasis::build(seq.space(), m)?);
                    cache.insert(key, Arc::clone(&b));
                    b
                }
            };
            bases.push(basis);
        }
        Ok(SiteBases { k: seq.k(), bases })
    }

    pub fn n(&self) -> usize {
        self.bases.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn site(&self, i: usize) -> &OrthonormalBasis {
        &self.bases[i]
    }

    pub fn shared(&self, i: usize) -> &Arc<OrthonormalBasis> {
        &self.bases[i]
    }

    pub fn distinct_tables(&self) -> usize {
        let mut ptrs: Vec<*const OrthonormalBasis> = self.bases.iter().map(Arc::as_ptr).collect();
        ptrs.sort();
        ptrs.dedup();
        ptrs.len()
    }

    /// CSV dump with columns `site,m,l,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "site,m,l,value")?;
        for (i, b) in self.bases.iter().enumerate() {
            for m in 0..self.k {
                for l in 0..self.k {
                    writeln!(w, "{i},{m},{l},{:?}", b.value(m, l))?;
                }
            }
        }
        Ok(())
    }
}

/// Batch construction of all site bases.
pub fn mean_vector_table(seq: &MarginalSequence) -> Result<SiteBases> {
    SiteBases::build(seq)
}
