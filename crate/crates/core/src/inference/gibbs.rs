//! Coordinate-wise Gibbs updates of the class labels.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;
use crate::model::{ModelParams, Partition};
use crate::netdata::{DyadCovariates, Sociomatrix};
use crate::scalar::{normalize_log_weights, softplus, Scalar};

/// Entries allowed in the per-pair term table before falling back to
/// computing each term inside the sweep.
const TERM_TABLE_LIMIT: usize = 1 << 24;

/// Per-E-step precomputation: with `theta` and the offsets fixed, every
/// dyad contributes one of `K x K` log-likelihood terms.
pub(crate) struct GibbsKernel<T> {
    n: usize,
    theta: SymMatrix<T>,
    /// `alpha_i + alpha_j + x(i,j) · beta` as a dense `N x N` matrix, or
    /// `None` when it is identically zero.
    offsets: Option<Vec<T>>,
    /// `terms[(i * N + j) * K * K + c * K + b]` is the term of dyad `(i, j)`
    /// with `z_i = c`, `z_j = b`.
    terms: Option<Vec<T>>,
}

impl<T: Scalar> GibbsKernel<T> {
    pub(crate) fn new(params: &ModelParams<T>, a: &Sociomatrix, x: &DyadCovariates<T>) -> Result<Self> {
        let n = params.n_nodes();
        if a.n_nodes() != n {
            return Err(Error::DimensionMismatch {
                context: "sociomatrix",
                expected: n,
                found: a.n_nodes(),
            });
        }
        let theta = params.theta().clone();
        let trivial = params.alpha().is_none_or(|al| al.iter().all(|&v| v == T::zero()))
            && params.beta().iter().all(|&b| b == T::zero());
        if trivial {
            return Ok(Self {
                n,
                theta,
                offsets: None,
                terms: None,
            });
        }
        if x.n_nodes() != n || x.n_columns() != params.beta().len() {
            return Err(Error::DimensionMismatch {
                context: "design columns",
                expected: params.beta().len(),
                found: x.n_columns(),
            });
        }
        let mut offsets = vec![T::zero(); n * n];
        let mut d = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                let xb: T = x.row(d).iter().zip(params.beta()).map(|(&v, &b)| v * b).sum();
                let o = params.alpha_at(i) + params.alpha_at(j) + xb;
                offsets[i * n + j] = o;
                offsets[j * n + i] = o;
                d += 1;
            }
        }
        let k = theta.dim();
        let terms = (n * n * k * k <= TERM_TABLE_LIMIT).then(|| {
            let kk = k * k;
            let mut terms = vec![T::zero(); n * n * kk];
            for i in 0..n {
                for j in (i + 1)..n {
                    let o = offsets[i * n + j];
                    let edge = a.has_edge(i, j);
                    for c in 0..k {
                        for b in 0..k {
                            let t = dyad_term(edge, theta.get(c, b) + o);
                            // Symmetric theta and offsets make both orientations equal.
                            terms[(i * n + j) * kk + c * k + b] = t;
                            terms[(j * n + i) * kk + c * k + b] = t;
                        }
                    }
                }
            }
            terms
        });
        Ok(Self {
            n,
            theta,
            offsets: Some(offsets),
            terms,
        })
    }

    /// One pass over nodes `0..N-1`, one uniform draw per node.
    pub(crate) fn sweep<R: Rng + ?Sized>(&self, a: &Sociomatrix, z: &mut Partition, rng: &mut R) {
        let k = z.k();
        if k < 2 {
            return;
        }
        let theta = &self.theta;
        let mut sizes = z.sizes();
        let mut weights = vec![T::zero(); k];
        let mut edge_counts = vec![0usize; k];
        let sp = theta.map(softplus);
        for i in 0..self.n {
            let current = z.label(i);
            match (&self.offsets, &self.terms) {
                (None, _) => {
                    edge_counts.iter_mut().for_each(|e| *e = 0);
                    for &j in a.neighbors(i) {
                        edge_counts[z.label(j)] += 1;
                    }
                    for (c, w) in weights.iter_mut().enumerate() {
                        let mut total = T::zero();
                        for b in 0..k {
                            let others = sizes[b] - usize::from(b == current);
                            total += T::of_count(edge_counts[b]) * theta.get(c, b)
                                - T::of_count(others) * sp.get(c, b);
                        }
                        *w = total;
                    }
                }
                (Some(_), Some(terms)) => {
                    weights.iter_mut().for_each(|w| *w = T::zero());
                    let kk = k * k;
                    for j in (0..self.n).filter(|&j| j != i) {
                        let block = &terms[(i * self.n + j) * kk..];
                        let zj = z.label(j);
                        for (c, w) in weights.iter_mut().enumerate() {
                            *w += block[c * k + zj];
                        }
                    }
                }
                (Some(offsets), None) => {
                    weights.iter_mut().for_each(|w| *w = T::zero());
                    let row = a.row(i);
                    let orow = &offsets[i * self.n..(i + 1) * self.n];
                    for j in (0..self.n).filter(|&j| j != i) {
                        let zj = z.label(j);
                        for (c, w) in weights.iter_mut().enumerate() {
                            *w += dyad_term(row[j], theta.get(c, zj) + orow[j]);
                        }
                    }
                }
            }
            normalize_log_weights(&mut weights);
            let u: f64 = rng.random();
            let draw = categorical(&weights, u);
            if draw != current {
                sizes[current] -= 1;
                sizes[draw] += 1;
                z.set(i, draw);
            }
        }
    }
}

fn dyad_term<T: Scalar>(edge: bool, eta: T) -> T {
    if edge {
        eta - softplus(eta)
    } else {
        -softplus(eta)
    }
}

/// Inverse-CDF draw from normalized `probs` using uniform `u` in `[0, 1)`.
fn categorical<T: Scalar>(probs: &[T], u: f64) -> usize {
    let mut acc = 0.0;
    for (c, p) in probs.iter().enumerate() {
        acc += p.as_f64();
        if u < acc {
            return c;
        }
    }
    // Rounding left the cumulative sum just under 1.
    probs.iter().rposition(|p| *p > T::zero()).unwrap_or(probs.len() - 1)
}

/// A single sweep starting from `params.z()`.
pub fn gibbs_sweep<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    a: &Sociomatrix,
    x: &DyadCovariates<T>,
    rng: &mut R,
) -> Result<Partition> {
    let mut z = params.z().clone();
    if z.k() < 2 {
        return Ok(z);
    }
    GibbsKernel::new(params, a, x)?.sweep(a, &mut z, rng);
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::conditional_z_distribution;
    use crate::netdata::dyads;
    use crate::rng::substream;

    fn planted(n: usize, within: f64, between: f64, seed: u64) -> (Sociomatrix, Partition) {
        let z = Partition::new((0..n).map(|i| usize::from(i >= n / 2)).collect(), 2).unwrap();
        let mut rng = substream(seed, "planted", 0);
        let flags: Vec<bool> = dyads(n)
            .map(|(i, j)| rng.random::<f64>() < if z.label(i) == z.label(j) { within } else { between })
            .collect();
        let ids = (0..n).map(|i| i.to_string()).collect();
        (Sociomatrix::from_dyad_flags(ids, &flags).unwrap(), z)
    }

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn single_class_is_a_no_op() {
        let (g, _) = planted(10, 0.5, 0.5, 1);
        let params = ModelParams::<f64>::zeros(10, 1, false, vec![]);
        let mut rng = substream(1, "sweep", 0);
        let before: u64 = substream(1, "sweep", 0).random();
        let z = gibbs_sweep(&params, &g, &DyadCovariates::empty(10), &mut rng).unwrap();
        assert_eq!(z, params.z().clone());
        // No randomness consumed.
        assert_eq!(rng.random::<u64>(), before);
    }

    #[test]
    fn consumes_one_draw_per_node() {
        let (g, z) = planted(12, 0.6, 0.1, 2);
        let params = ModelParams::<f64>::zeros(12, 2, false, vec![]).with_partition(z).unwrap();
        let mut used = substream(3, "sweep", 0);
        gibbs_sweep(&params, &g, &DyadCovariates::empty(12), &mut used).unwrap();
        let mut reference = substream(3, "sweep", 0);
        for _ in 0..12 {
            let _: f64 = reference.random();
        }
        assert_eq!(used.random::<u64>(), reference.random::<u64>());
    }

    #[test]
    fn zero_theta_gives_uniform_labels() {
        let n = 600;
        let (g, _) = planted(n, 0.3, 0.3, 4);
        let params = ModelParams::<f64>::zeros(n, 3, false, vec![]);
        let mut rng = substream(5, "sweep", 0);
        let z = gibbs_sweep(&params, &g, &DyadCovariates::empty(n), &mut rng).unwrap();
        for size in z.sizes() {
            // Binomial(600, 1/3): sd about 11.5.
            assert!((size as f64 - 200.0).abs() < 50.0, "size {size}");
        }
    }

    #[test]
    fn fast_and_general_paths_agree_with_brute_force() {
        let n = 15;
        let (g, z) = planted(n, 0.5, 0.2, 6);
        let theta = SymMatrix::from_rows(vec![vec![0.4, -1.0], vec![-1.0, 0.9]]).unwrap();
        let params = ModelParams::new(z.clone(), theta.clone(), None, vec![], vec![]).unwrap();
        let mut expected = z.clone();
        let mut rng = substream(7, "sweep", 0);
        for i in 0..n {
            let p = params.clone().with_partition(expected.clone()).unwrap();
            let probs = conditional_z_distribution(i, &p, &g, &DyadCovariates::empty(n)).unwrap();
            let u: f64 = rng.random();
            expected.set(i, categorical(&probs, u));
        }
        let got = gibbs_sweep(&params, &g, &DyadCovariates::empty(n), &mut substream(7, "sweep", 0)).unwrap();
        assert_eq!(got, expected);

        // Same conditionals with a nonzero offset forced through the general path.
        let x = DyadCovariates::intercept_only(n);
        let shifted = SymMatrix::from_upper(2, |a, b| theta.get(a, b) - 0.5);
        let params2 = ModelParams::new(z, shifted, None, vec![0.5], vec!["intercept".into()]).unwrap();
        let got2 = gibbs_sweep(&params2, &g, &x, &mut substream(7, "sweep", 0)).unwrap();
        assert_eq!(got2, expected);

        let mut untabled = GibbsKernel::new(&params2, &g, &x).unwrap();
        assert!(untabled.terms.take().is_some());
        let mut got3 = params2.z().clone();
        untabled.sweep(&g, &mut got3, &mut substream(7, "sweep", 0));
        assert_eq!(got3, expected);
    }

    #[test]
    fn planted_truth_is_stable() {
        let n = 40;
        let theta = SymMatrix::from_rows(vec![vec![logit(0.8), logit(0.05)], vec![logit(0.05), logit(0.8)]]).unwrap();
        let mut unchanged = 0usize;
        for run in 0..100u64 {
            let (g, z) = planted(n, 0.8, 0.05, 100 + run);
            let params = ModelParams::new(z.clone(), theta.clone(), None, vec![], vec![]).unwrap();
            let mut rng = substream(run, "stability", 0);
            let after = gibbs_sweep(&params, &g, &DyadCovariates::empty(n), &mut rng).unwrap();
            unchanged += z.labels().iter().zip(after.labels()).filter(|(a, b)| a == b).count();
        }
        assert!(unchanged as f64 / (100.0 * n as f64) >= 0.95);
    }
}
