//! Block proportions, Bernoulli KL divergences and the uniform bound on the
//! weighted divergence between observed and expected block densities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;
use crate::model::{EdgeProbabilities, Partition};
use crate::netdata::{dyads, n_dyads, Sociomatrix};
use crate::scalar::Scalar;

/// Per block pair: dyad counts `n_ab`, edge counts, sample proportions and
/// (optionally) mean model probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BlockProportions<T> {
    pub k: usize,
    pub counts: SymMatrix<u64>,
    pub edges: SymMatrix<u64>,
    /// Observed edge proportion; 0 where the pair has no dyads.
    pub phat: SymMatrix<T>,
    /// Mean of the supplied probabilities; 0 where the pair has no dyads.
    pub pbar: Option<SymMatrix<T>>,
}

impl<T: Scalar> BlockProportions<T> {
    pub fn total_dyads(&self) -> u64 {
        self.counts.upper().map(|(_, _, c)| c).sum()
    }
}

fn block_counts(z: &Partition) -> SymMatrix<u64> {
    let sizes: Vec<u64> = z.sizes().into_iter().map(|s| s as u64).collect();
    SymMatrix::from_upper(z.k(), |a, b| {
        if a == b {
            sizes[a] * sizes[a].saturating_sub(1) / 2
        } else {
            sizes[a] * sizes[b]
        }
    })
}

fn ratio<T: Scalar>(num: f64, den: u64) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::lit(num / den as f64)
    }
}

pub fn block_proportions<T: Scalar>(
    z: &Partition,
    a: &Sociomatrix,
    p: Option<&EdgeProbabilities<T>>,
) -> Result<BlockProportions<T>> {
    let n = a.n_nodes();
    if z.len() != n {
        return Err(Error::DimensionMismatch {
            context: "partition",
            expected: n,
            found: z.len(),
        });
    }
    if let Some(p) = p {
        if p.len() != n_dyads(n) {
            return Err(Error::DimensionMismatch {
                context: "edge probabilities",
                expected: n_dyads(n),
                found: p.len(),
            });
        }
    }
    let k = z.k();
    let counts = block_counts(z);
    let mut edges = SymMatrix::filled(k, 0u64);
    for (i, j) in a.edges() {
        let (zi, zj) = (z.label(i), z.label(j));
        edges.set(zi, zj, edges.get(zi, zj) + 1);
    }
    let phat = SymMatrix::from_upper(k, |s, t| ratio(edges.get(s, t) as f64, counts.get(s, t)));
    let pbar = p.map(|p| {
        let mut sums = SymMatrix::filled(k, 0.0f64);
        for ((i, j), &pij) in dyads(n).zip(p.as_slice()) {
            let (zi, zj) = (z.label(i), z.label(j));
            sums.set(zi, zj, sums.get(zi, zj) + pij.as_f64());
        }
        SymMatrix::from_upper(k, |s, t| ratio(sums.get(s, t), counts.get(s, t)))
    });
    Ok(BlockProportions {
        k,
        counts,
        edges,
        phat,
        pbar,
    })
}

/// `D(p || q) = p ln(p/q) + (1 - p) ln((1 - p)/(1 - q))`, with `0 ln 0 = 0`.
pub fn bernoulli_kl<T: Scalar>(p: T, q: T) -> Result<T> {
    let (zero, one) = (T::zero(), T::one());
    if !(p >= zero && p <= one) || !(q >= zero && q <= one) {
        return Err(Error::Domain(format!("probabilities must lie in [0, 1], got p = {p}, q = {q}")));
    }
    if p == q {
        return Ok(zero);
    }
    if q == zero || q == one {
        return Err(Error::Domain(format!("divergence from q = {q} is infinite for p = {p}")));
    }
    let term = |u: T, v: T| if u == zero { zero } else { u * (u / v).ln() };
    Ok((term(p, q) + term(one - p, one - q)).max(zero))
}

/// `sum_{a<=b} n_ab D(phat_ab || reference_ab)`, skipping empty block pairs.
pub fn divergence_statistic<T: Scalar>(bp: &BlockProportions<T>, reference: &SymMatrix<T>) -> Result<T> {
    if reference.dim() != bp.k {
        return Err(Error::DimensionMismatch {
            context: "reference matrix",
            expected: bp.k,
            found: reference.dim(),
        });
    }
    let mut total = T::zero();
    for (a, b, n_ab) in bp.counts.upper() {
        if n_ab > 0 {
            total += T::lit(n_ab as f64) * bernoulli_kl(bp.phat.get(a, b), reference.get(a, b))?;
        }
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSpec {
    pub n: usize,
    pub k: usize,
    pub delta: f64,
    /// Number of simultaneous statements sharing `delta`.
    pub bonferroni_m: usize,
}

impl BoundSpec {
    pub fn new(n: usize, k: usize, delta: f64, bonferroni_m: usize) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::Domain(format!("bound needs n >= 1 and k >= 1, got n = {n}, k = {k}")));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::Domain(format!("delta must lie in (0, 1], got {delta}")));
        }
        if bonferroni_m == 0 {
            return Err(Error::Domain("bonferroni_m must be at least 1".into()));
        }
        Ok(Self {
            n,
            k,
            delta,
            bonferroni_m,
        })
    }

    /// `delta / m`.
    pub fn effective_delta(&self) -> f64 {
        self.delta / self.bonferroni_m as f64
    }
}

/// `N ln K + (K^2 + K) ln(N/K + 1) + ln(m / delta)`.
pub fn uniform_bound(spec: &BoundSpec) -> f64 {
    let (n, k) = (spec.n as f64, spec.k as f64);
    n * k.ln() + (k * k + k) * (n / k + 1.0).ln() + (1.0 / spec.effective_delta()).ln()
}

/// `stat / C(N, 2)`.
pub fn normalized_divergence<T: Scalar>(stat: T, n: usize) -> Result<T> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("normalization needs n >= 2, got {n}")));
    }
    Ok(stat / T::of_count(n_dyads(n)))
}
