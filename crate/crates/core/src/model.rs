//! Log-odds parameterization of edge probabilities and the Bernoulli product
//! log-likelihood.
//!
//! For dyad `(i, j)` the log-odds are
//! `theta[z_i][z_j] + alpha_i + alpha_j + x(i, j) · beta`, with `sum(alpha) = 0`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;
use crate::netdata::{dyads, DyadCovariates, Sociomatrix};
use crate::scalar::{logistic, normalize_log_weights, softplus, Scalar};

/// Class assignment `z` of every node to one of `k` classes (0-based).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    k: usize,
    labels: Vec<usize>,
}

impl Partition {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("class count must be at least 1".into()));
        }
        if let Some((i, &c)) = labels.iter().enumerate().find(|(_, &c)| c >= k) {
            return Err(Error::InvalidInput(format!(
                "node {i} has class {c}, outside 0..{k}"
            )));
        }
        Ok(Self { k, labels })
    }

    /// Everyone in class 0.
    pub fn single(n: usize) -> Self {
        Self {
            k: 1,
            labels: vec![0; n],
        }
    }

    /// From 1-based labels, as written in documents.
    pub fn from_one_based(labels: &[usize], k: usize) -> Result<Self> {
        if labels.contains(&0) {
            return Err(Error::InvalidInput("class labels are 1-based".into()));
        }
        Self::new(labels.iter().map(|&c| c - 1).collect(), k)
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|&c| c + 1).collect()
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub(crate) fn set(&mut self, i: usize, class: usize) {
        debug_assert!(class < self.k);
        self.labels[i] = class;
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.labels {
            sizes[c] += 1;
        }
        sizes
    }

    /// Applies `new_label[old]` to every node.
    pub fn relabeled(&self, new_label: &[usize]) -> Self {
        Self {
            k: self.k,
            labels: self.labels.iter().map(|&c| new_label[c]).collect(),
        }
    }
}

/// `(z, theta, alpha, beta)`. `alpha = None` means node effects are fixed at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    z: Partition,
    theta: SymMatrix<T>,
    alpha: Option<Vec<T>>,
    beta: Vec<T>,
    column_names: Vec<String>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(
        z: Partition,
        theta: SymMatrix<T>,
        alpha: Option<Vec<T>>,
        beta: Vec<T>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        if theta.dim() != z.k() {
            return Err(Error::DimensionMismatch {
                context: "theta",
                expected: z.k(),
                found: theta.dim(),
            });
        }
        if beta.len() != column_names.len() {
            return Err(Error::DimensionMismatch {
                context: "beta",
                expected: column_names.len(),
                found: beta.len(),
            });
        }
        if let Some(a) = &alpha {
            if a.len() != z.len() {
                return Err(Error::DimensionMismatch {
                    context: "alpha",
                    expected: z.len(),
                    found: a.len(),
                });
            }
            let sum: T = a.iter().copied().sum();
            let scale: T = a.iter().map(|v| v.abs()).sum::<T>() + T::one();
            let tol = T::lit(1e-8).max(T::epsilon() * T::lit(64.0) * scale);
            if sum.abs() > tol {
                return Err(Error::InvalidInput(format!(
                    "node effects must sum to zero, sum is {sum}"
                )));
            }
        }
        Ok(Self {
            z,
            theta,
            alpha,
            beta,
            column_names,
        })
    }

    /// All-zero parameters over `n` nodes with everyone in class 0.
    pub fn zeros(n: usize, k: usize, with_alpha: bool, column_names: Vec<String>) -> Self {
        Self {
            z: Partition {
                k,
                labels: vec![0; n],
            },
            theta: SymMatrix::filled(k, T::zero()),
            alpha: with_alpha.then(|| vec![T::zero(); n]),
            beta: vec![T::zero(); column_names.len()],
            column_names,
        }
    }

    pub fn k(&self) -> usize {
        self.z.k()
    }

    pub fn n_nodes(&self) -> usize {
        self.z.len()
    }

    pub fn z(&self) -> &Partition {
        &self.z
    }

    pub fn theta(&self) -> &SymMatrix<T> {
        &self.theta
    }

    pub fn alpha(&self) -> Option<&[T]> {
        self.alpha.as_deref()
    }

    #[inline]
    pub fn alpha_at(&self, i: usize) -> T {
        self.alpha.as_ref().map_or(T::zero(), |a| a[i])
    }

    pub fn beta(&self) -> &[T] {
        &self.beta
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn with_partition(mut self, z: Partition) -> Result<Self> {
        if z.k() != self.k() || z.len() != self.n_nodes() {
            return Err(Error::DimensionMismatch {
                context: "partition",
                expected: self.n_nodes(),
                found: z.len(),
            });
        }
        self.z = z;
        Ok(self)
    }

    pub(crate) fn partition_mut(&mut self) -> &mut Partition {
        &mut self.z
    }

    pub(crate) fn set_theta(&mut self, theta: SymMatrix<T>) {
        self.theta = theta;
    }

    /// Moves the mean of `theta`'s upper triangle into the intercept.
    ///
    /// The intercept and `theta` both shift every dyad's log-odds, so this
    /// leaves the likelihood unchanged. Without an `intercept` column the
    /// parameters are returned as is.
    pub fn centered(&self) -> Self {
        let Some(c) = self.column_names.iter().position(|n| n == "intercept") else {
            return self.clone();
        };
        let k = self.k();
        let count = T::of_count(k * (k + 1) / 2);
        let mean = self.theta.upper().map(|(_, _, v)| v).sum::<T>() / count;
        let mut out = self.clone();
        out.theta = self.theta.map(|v| v - mean);
        out.beta[c] += mean;
        out
    }

    fn check_design(&self, x: &DyadCovariates<T>) -> Result<()> {
        if x.n_nodes() != self.n_nodes() {
            return Err(Error::DimensionMismatch {
                context: "design nodes",
                expected: self.n_nodes(),
                found: x.n_nodes(),
            });
        }
        if x.n_columns() != self.beta.len() {
            return Err(Error::DimensionMismatch {
                context: "design columns",
                expected: self.beta.len(),
                found: x.n_columns(),
            });
        }
        Ok(())
    }
}

/// Per-dyad log-odds in canonical order.
pub fn linear_predictor<T: Scalar>(params: &ModelParams<T>, x: &DyadCovariates<T>) -> Result<Vec<T>> {
    params.check_design(x)?;
    let z = params.z();
    let beta = params.beta();
    Ok(dyads(params.n_nodes())
        .enumerate()
        .map(|(d, (i, j))| {
            let xb: T = x.row(d).iter().zip(beta).map(|(&v, &b)| v * b).sum();
            params.theta.get(z.label(i), z.label(j)) + params.alpha_at(i) + params.alpha_at(j) + xb
        })
        .collect())
}

/// Bernoulli success probability per dyad, each strictly inside (0, 1).
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EdgeProbabilities<T> {
    p: Vec<T>,
}

impl<T: Scalar> EdgeProbabilities<T> {
    pub fn new(p: Vec<T>) -> Result<Self> {
        if let Some((dyad, v)) = p
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > T::zero() && v < T::one()))
        {
            return Err(Error::ProbabilityOutOfRange {
                dyad,
                value: v.as_f64(),
            });
        }
        Ok(Self { p })
    }

    /// Constant probability on `n_dyads` dyads.
    pub fn constant(n_dyads: usize, p: T) -> Result<Self> {
        Self::new(vec![p; n_dyads])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// `P_ij = logistic(theta[z_i][z_j] + alpha_i + alpha_j + x(i,j) · beta)`.
///
/// Fails if any log-odds is so extreme that its probability rounds to 0 or 1.
pub fn log_odds<T: Scalar>(params: &ModelParams<T>, x: &DyadCovariates<T>) -> Result<EdgeProbabilities<T>> {
    EdgeProbabilities::new(linear_predictor(params, x)?.into_iter().map(logistic).collect())
}

/// `sum_{i<j} A_ij log P_ij + (1 - A_ij) log(1 - P_ij)`.
pub fn log_likelihood<T: Scalar>(a: &Sociomatrix, p: &EdgeProbabilities<T>) -> Result<T> {
    if p.len() != a.n_dyads() {
        return Err(Error::DimensionMismatch {
            context: "edge probabilities",
            expected: a.n_dyads(),
            found: p.len(),
        });
    }
    let mut total = T::zero();
    for ((i, j), &pij) in dyads(a.n_nodes()).zip(p.as_slice()) {
        total += if a.has_edge(i, j) { pij.ln() } else { (-pij).ln_1p() };
    }
    Ok(total)
}

/// Log-likelihood evaluated from log-odds, stable for probabilities near 0 or 1.
pub fn log_likelihood_from_log_odds<T: Scalar>(a: &Sociomatrix, eta: &[T]) -> Result<T> {
    if eta.len() != a.n_dyads() {
        return Err(Error::DimensionMismatch {
            context: "log-odds",
            expected: a.n_dyads(),
            found: eta.len(),
        });
    }
    Ok(dyads(a.n_nodes())
        .zip(eta)
        .map(|((i, j), &e)| if a.has_edge(i, j) { e - softplus(e) } else { -softplus(e) })
        .sum())
}

/// Full-data log-likelihood at `params`.
pub fn params_log_likelihood<T: Scalar>(
    a: &Sociomatrix,
    params: &ModelParams<T>,
    x: &DyadCovariates<T>,
) -> Result<T> {
    log_likelihood_from_log_odds(a, &linear_predictor(params, x)?)
}

/// Distribution of `z_i` given every other label, proportional to the
/// likelihood of the dyads touching node `i`.
pub fn conditional_z_distribution<T: Scalar>(
    i: usize,
    params: &ModelParams<T>,
    a: &Sociomatrix,
    x: &DyadCovariates<T>,
) -> Result<Vec<T>> {
    params.check_design(x)?;
    let n = params.n_nodes();
    if a.n_nodes() != n {
        return Err(Error::DimensionMismatch {
            context: "sociomatrix",
            expected: n,
            found: a.n_nodes(),
        });
    }
    if i >= n {
        return Err(Error::InvalidInput(format!("node {i} out of range for {n} nodes")));
    }
    let k = params.k();
    let z = params.z();
    let mut weights = vec![T::zero(); k];
    for j in (0..n).filter(|&j| j != i) {
        let d = crate::netdata::dyad_index(n, i.min(j), i.max(j));
        let xb: T = x.row(d).iter().zip(params.beta()).map(|(&v, &b)| v * b).sum();
        let offset = params.alpha_at(i) + params.alpha_at(j) + xb;
        let edge = a.has_edge(i, j);
        for (c, w) in weights.iter_mut().enumerate() {
            let eta = params.theta().get(c, z.label(j)) + offset;
            *w += if edge { eta - softplus(eta) } else { -softplus(eta) };
        }
    }
    normalize_log_weights(&mut weights);
    Ok(weights)
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct ParamsDocument<T> {
    k: usize,
    z: Vec<usize>,
    theta: SymMatrix<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<Vec<T>>,
    beta: Vec<T>,
    column_names: Vec<String>,
}

impl<T: Scalar> Serialize for ModelParams<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ParamsDocument {
            k: self.k(),
            z: self.z.one_based(),
            theta: self.theta.clone(),
            alpha: self.alpha.clone(),
            beta: self.beta.clone(),
            column_names: self.column_names.clone(),
        }
        .serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for ModelParams<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = ParamsDocument::<T>::deserialize(d)?;
        let z = Partition::from_one_based(&doc.z, doc.k).map_err(D::Error::custom)?;
        ModelParams::new(z, doc.theta, doc.alpha, doc.beta, doc.column_names).map_err(D::Error::custom)
    }
}
