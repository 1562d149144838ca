//! Conditional maximization over `(theta, alpha, beta)` for a fixed partition.
//!
//! The log-likelihood is concave in these parameters for fixed `z`, so a
//! damped Newton iteration converges to the maximizer. `theta` is optimized
//! through its upper triangle and `alpha` through its first `N - 1`
//! coordinates, with `alpha_{N-1} = -sum(alpha_0..alpha_{N-2})`.

use serde::{Deserialize, Serialize};

use super::Restriction;
use crate::error::{Error, Result};
use crate::matrix::{cholesky_solve, upper_index, SymMatrix};
use crate::model::{ModelParams, Partition};
use crate::netdata::{DyadCovariates, Sociomatrix};
use crate::scalar::{logistic, softplus, Scalar};

/// Any fitted log-odds beyond this magnitude is treated as separation.
pub const SEPARATION_LOG_ODDS: f64 = 30.0;

const MAX_HALVINGS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MStepOptions<T> {
    /// Weight of the `ridge * |params|^2 / 2` penalty.
    pub ridge: T,
    /// Newton stops once the gradient norm falls below this.
    pub tol: T,
    pub max_iters: usize,
}

impl<T: Scalar> Default for MStepOptions<T> {
    fn default() -> Self {
        Self {
            ridge: T::zero(),
            tol: T::lit(1e-8),
            max_iters: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MStepOutput<T> {
    pub theta: SymMatrix<T>,
    pub alpha: Option<Vec<T>>,
    pub beta: Vec<T>,
    /// Unpenalized conditional log-likelihood at the returned parameters.
    pub log_likelihood: T,
    /// Penalized objective actually maximized.
    pub objective: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
    /// Some fitted log-odds exceeded [`SEPARATION_LOG_ODDS`] in magnitude.
    pub degenerate: bool,
}

impl<T: Scalar> MStepOutput<T> {
    pub fn into_params(self, z: Partition, column_names: Vec<String>) -> Result<ModelParams<T>> {
        ModelParams::new(z, self.theta, self.alpha, self.beta, column_names)
    }
}

/// Position of each parameter block inside the Newton vectors.
#[derive(Clone, Copy, Debug)]
struct Layout {
    k: usize,
    n: usize,
    n_theta: usize,
    alpha: bool,
    p: usize,
}

impl Layout {
    fn alpha_offset(&self) -> usize {
        self.n_theta
    }

    fn beta_offset(&self) -> usize {
        self.n_theta + if self.alpha { self.n } else { 0 }
    }

    fn full_dim(&self) -> usize {
        self.beta_offset() + self.p
    }

    fn reduced_dim(&self) -> usize {
        self.full_dim() - usize::from(self.alpha)
    }

    /// Full index of the dependent coordinate `alpha_{N-1}`.
    fn last_alpha(&self) -> usize {
        self.alpha_offset() + self.n - 1
    }

    fn is_free_alpha(&self, r: usize) -> bool {
        self.alpha && r >= self.alpha_offset() && r < self.last_alpha()
    }

    fn to_full(&self, r: usize) -> usize {
        if self.alpha && r >= self.last_alpha() {
            r + 1
        } else {
            r
        }
    }

    fn expand<T: Scalar>(&self, gamma: &[T]) -> Vec<T> {
        if !self.alpha {
            return gamma.to_vec();
        }
        let last = self.last_alpha();
        let dependent = -gamma[self.alpha_offset()..last].iter().copied().sum::<T>();
        let mut full = Vec::with_capacity(self.full_dim());
        full.extend_from_slice(&gamma[..last]);
        full.push(dependent);
        full.extend_from_slice(&gamma[last..]);
        full
    }

    fn pack<T: Scalar>(&self, params: Option<&ModelParams<T>>) -> Vec<T> {
        let mut gamma = vec![T::zero(); self.reduced_dim()];
        let Some(params) = params else { return gamma };
        if self.n_theta > 0 && params.k() == self.k {
            for (a, b, v) in params.theta().upper() {
                gamma[upper_index(self.k, a, b)] = v;
            }
        }
        if self.alpha {
            if let Some(alpha) = params.alpha() {
                let off = self.alpha_offset();
                gamma[off..off + self.n - 1].copy_from_slice(&alpha[..self.n - 1]);
            }
        }
        if self.p > 0 && params.beta().len() == self.p {
            let off = self.beta_offset() - usize::from(self.alpha);
            gamma[off..off + self.p].copy_from_slice(params.beta());
        }
        gamma
    }
}

struct Evaluation<T> {
    log_likelihood: T,
    objective: T,
    grad: Vec<T>,
    info: Vec<T>,
    max_abs_eta: T,
}

/// Newton solver bound to one network and design.
///
/// Construction checks the covariate design for linear dependence once, so
/// repeated M-steps inside stochastic EM skip that work.
pub struct MStepSolver<'a, T> {
    a: &'a Sociomatrix,
    x: &'a DyadCovariates<T>,
    restriction: Restriction,
    opts: MStepOptions<T>,
    x_ptr: Vec<usize>,
    x_col: Vec<usize>,
    x_val: Vec<T>,
}

impl<'a, T: Scalar> MStepSolver<'a, T> {
    pub fn new(
        a: &'a Sociomatrix,
        x: &'a DyadCovariates<T>,
        restriction: Restriction,
        opts: MStepOptions<T>,
    ) -> Result<Self> {
        if x.n_nodes() != a.n_nodes() {
            return Err(Error::DimensionMismatch {
                context: "design nodes",
                expected: a.n_nodes(),
                found: x.n_nodes(),
            });
        }
        if a.n_nodes() < 2 {
            return Err(Error::InvalidInput("network needs at least two nodes".into()));
        }
        if !(opts.ridge >= T::zero()) || !(opts.tol > T::zero()) || opts.max_iters == 0 {
            return Err(Error::InvalidConfig(format!(
                "M-step needs ridge >= 0, tol > 0 and max_iters > 0 (got {}, {}, {})",
                opts.ridge, opts.tol, opts.max_iters
            )));
        }
        let mut x_ptr = Vec::with_capacity(x.n_dyads() + 1);
        let (mut x_col, mut x_val) = (Vec::new(), Vec::new());
        x_ptr.push(0);
        for d in 0..x.n_dyads() {
            if restriction.estimates_beta() {
                for (c, &v) in x.row(d).iter().enumerate() {
                    if v != T::zero() {
                        x_col.push(c);
                        x_val.push(v);
                    }
                }
            }
            x_ptr.push(x_col.len());
        }
        let solver = Self {
            a,
            x,
            restriction,
            opts,
            x_ptr,
            x_col,
            x_val,
        };
        solver.check_design()?;
        Ok(solver)
    }

    pub fn restriction(&self) -> Restriction {
        self.restriction
    }

    pub fn options(&self) -> &MStepOptions<T> {
        &self.opts
    }

    fn layout(&self, k: usize) -> Layout {
        Layout {
            k,
            n: self.a.n_nodes(),
            n_theta: if self.restriction.estimates_theta() { k * (k + 1) / 2 } else { 0 },
            alpha: self.restriction.estimates_alpha(),
            p: if self.restriction.estimates_beta() { self.x.n_columns() } else { 0 },
        }
    }

    /// Rejects linearly dependent covariate columns, and the `theta`/constant
    /// column aliasing when no ridge penalty resolves it.
    fn check_design(&self) -> Result<()> {
        if !self.restriction.estimates_beta() {
            return Ok(());
        }
        let p = self.x.n_columns();
        let mut gram = vec![0.0f64; p * p];
        for d in 0..self.x.n_dyads() {
            let (lo, hi) = (self.x_ptr[d], self.x_ptr[d + 1]);
            for s in lo..hi {
                let (cs, vs) = (self.x_col[s], self.x_val[s].as_f64());
                for t in lo..hi {
                    gram[cs * p + self.x_col[t]] += vs * self.x_val[t].as_f64();
                }
            }
        }
        // Incremental Cholesky: a column is dependent if its residual after
        // projection on the accepted columns vanishes.
        let mut accepted: Vec<usize> = Vec::new();
        let mut l: Vec<Vec<f64>> = Vec::new();
        let mut offending = Vec::new();
        for c in 0..p {
            let diag = gram[c * p + c];
            let mut y = Vec::with_capacity(accepted.len());
            for (r, &ar) in accepted.iter().enumerate() {
                let s: f64 = (0..r).map(|q| l[r][q] * y[q]).sum();
                y.push((gram[ar * p + c] - s) / l[r][r]);
            }
            let resid = diag - y.iter().map(|v| v * v).sum::<f64>();
            if resid <= 1e-9 * diag.max(1.0) {
                offending.push(self.x.columns()[c].clone());
            } else {
                y.push(resid.sqrt());
                l.push(y);
                accepted.push(c);
            }
        }
        if !offending.is_empty() {
            return Err(Error::RankDeficient { columns: offending });
        }
        if self.restriction.estimates_theta() && self.opts.ridge == T::zero() {
            let first = self.x.row(0).to_vec();
            if let Some(c) = (0..p).find(|&c| {
                first[c] != T::zero() && (1..self.x.n_dyads()).all(|d| self.x.row(d)[c] == first[c])
            }) {
                return Err(Error::RankDeficient {
                    columns: vec!["theta".into(), self.x.columns()[c].clone()],
                });
            }
        }
        Ok(())
    }

    fn evaluate(&self, lay: &Layout, z: &Partition, gamma: &[T], derivs: bool) -> Evaluation<T> {
        let full = lay.expand(gamma);
        let n = lay.n;
        let dim = lay.full_dim();
        let (a_off, b_off) = (lay.alpha_offset(), lay.beta_offset());
        let mut grad = if derivs { vec![T::zero(); dim] } else { Vec::new() };
        let mut info = if derivs { vec![T::zero(); dim * dim] } else { Vec::new() };
        let mut ll = T::zero();
        let mut max_abs_eta = T::zero();
        let mut feats: Vec<(usize, T)> = Vec::with_capacity(3 + lay.p);
        let mut d = 0;
        for i in 0..n {
            let row = self.a.row(i);
            for j in (i + 1)..n {
                let (lo, hi) = (self.x_ptr[d], self.x_ptr[d + 1]);
                let mut eta = T::zero();
                let theta_idx = (lay.n_theta > 0).then(|| {
                    let (zi, zj) = (z.label(i), z.label(j));
                    upper_index(lay.k, zi.min(zj), zi.max(zj))
                });
                if let Some(t) = theta_idx {
                    eta += full[t];
                }
                if lay.alpha {
                    eta += full[a_off + i] + full[a_off + j];
                }
                let mut xb = T::zero();
                for s in lo..hi {
                    xb += self.x_val[s] * full[b_off + self.x_col[s]];
                }
                eta += xb;
                let edge = row[j];
                let sp = softplus(eta);
                ll += if edge { eta - sp } else { -sp };
                max_abs_eta = max_abs_eta.max(eta.abs());
                if derivs {
                    let prob = logistic(eta);
                    let resid = if edge { T::one() - prob } else { -prob };
                    let weight = prob * (T::one() - prob);
                    feats.clear();
                    if let Some(t) = theta_idx {
                        feats.push((t, T::one()));
                    }
                    if lay.alpha {
                        feats.push((a_off + i, T::one()));
                        feats.push((a_off + j, T::one()));
                    }
                    for s in lo..hi {
                        feats.push((b_off + self.x_col[s], self.x_val[s]));
                    }
                    for &(fi, vi) in &feats {
                        grad[fi] += resid * vi;
                        let wv = weight * vi;
                        let base = fi * dim;
                        for &(fj, vj) in &feats {
                            info[base + fj] += wv * vj;
                        }
                    }
                }
                d += 1;
            }
        }

        let (mut grad, mut info) = if derivs { self.reduce(lay, grad, info) } else { (grad, info) };
        let ridge = self.opts.ridge;
        let mut objective = ll;
        if ridge > T::zero() {
            let rd = lay.reduced_dim();
            objective -= ridge * T::lit(0.5) * gamma.iter().map(|&g| g * g).sum::<T>();
            if derivs {
                for r in 0..rd {
                    grad[r] -= ridge * gamma[r];
                    info[r * rd + r] += ridge;
                }
            }
        }
        Evaluation {
            log_likelihood: ll,
            objective,
            grad,
            info,
            max_abs_eta,
        }
    }

    /// Maps full-space derivatives onto the free coordinates.
    fn reduce(&self, lay: &Layout, grad: Vec<T>, info: Vec<T>) -> (Vec<T>, Vec<T>) {
        if !lay.alpha {
            return (grad, info);
        }
        let (fd, rd, last) = (lay.full_dim(), lay.reduced_dim(), lay.last_alpha());
        let coef = |r: usize| if lay.is_free_alpha(r) { T::one() } else { T::zero() };
        let g: Vec<T> = (0..rd).map(|r| grad[lay.to_full(r)] - coef(r) * grad[last]).collect();
        let mut h = vec![T::zero(); rd * rd];
        let i_ll = info[last * fd + last];
        for r in 0..rd {
            let (fr, cr) = (lay.to_full(r), coef(r));
            for s in 0..rd {
                let (fs, cs) = (lay.to_full(s), coef(s));
                h[r * rd + s] = info[fr * fd + fs] - cr * info[last * fd + fs] - cs * info[fr * fd + last]
                    + cr * cs * i_ll;
            }
        }
        (g, h)
    }

    fn unpack(&self, lay: &Layout, gamma: &[T]) -> (SymMatrix<T>, Option<Vec<T>>, Vec<T>) {
        let full = lay.expand(gamma);
        let theta = if lay.n_theta > 0 {
            SymMatrix::from_upper(lay.k, |a, b| full[upper_index(lay.k, a, b)])
        } else {
            SymMatrix::filled(lay.k, T::zero())
        };
        let alpha = lay
            .alpha
            .then(|| full[lay.alpha_offset()..lay.alpha_offset() + lay.n].to_vec());
        let beta = if lay.p > 0 {
            full[lay.beta_offset()..].to_vec()
        } else {
            vec![T::zero(); self.x.n_columns()]
        };
        (theta, alpha, beta)
    }

    fn param_name(&self, lay: &Layout, r: usize) -> String {
        let f = lay.to_full(r);
        if f < lay.n_theta {
            let (a, b) = (0..lay.k)
                .flat_map(|a| (a..lay.k).map(move |b| (a, b)))
                .nth(f)
                .unwrap_or((0, 0));
            format!("theta[{},{}]", a + 1, b + 1)
        } else if f < lay.beta_offset() {
            format!("alpha[{}]", f - lay.alpha_offset())
        } else {
            self.x.columns()[f - lay.beta_offset()].clone()
        }
    }

    fn singular(&self, lay: &Layout, info: &[T]) -> Error {
        let rd = lay.reduced_dim();
        let scale = (0..rd).map(|r| info[r * rd + r]).fold(T::zero(), T::max);
        let mut columns: Vec<String> = (0..rd)
            .filter(|&r| info[r * rd + r] <= scale * T::lit(1e-12))
            .map(|r| self.param_name(lay, r))
            .collect();
        if columns.is_empty() {
            columns.push("singular Hessian (aliased parameters; use ridge > 0)".into());
        }
        Error::RankDeficient { columns }
    }

    /// Gradient of the penalized objective with respect to the free coordinates.
    pub fn gradient(&self, params: &ModelParams<T>) -> Vec<T> {
        let lay = self.layout(params.k());
        let gamma = lay.pack(Some(params));
        self.evaluate(&lay, params.z(), &gamma, true).grad
    }

    /// Maximizes the conditional log-likelihood given `z`, starting from
    /// `start` (or zero).
    pub fn solve(&self, z: &Partition, start: Option<&ModelParams<T>>) -> Result<MStepOutput<T>> {
        if z.len() != self.a.n_nodes() {
            return Err(Error::DimensionMismatch {
                context: "partition",
                expected: self.a.n_nodes(),
                found: z.len(),
            });
        }
        let lay = self.layout(z.k());
        let mut gamma = lay.pack(start);
        let threshold = T::lit(SEPARATION_LOG_ODDS);
        let step_tol = self.opts.tol.sqrt();
        let mut ev = self.evaluate(&lay, z, &gamma, true);
        let mut iterations = 0;
        let mut converged = false;
        let mut degenerate = false;
        loop {
            if ev.max_abs_eta > threshold {
                degenerate = true;
                break;
            }
            let step = cholesky_solve(&ev.info, &ev.grad).ok_or_else(|| self.singular(&lay, &ev.info))?;
            // Under separation the gradient vanishes while Newton steps stay
            // of unit size, so a small gradient alone is not convergence.
            if norm(&ev.grad) < self.opts.tol && norm(&step) < step_tol {
                converged = true;
                break;
            }
            if iterations == self.opts.max_iters {
                break;
            }
            iterations += 1;
            let small_step = norm(&step) < step_tol;
            let mut scale = T::one();
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let candidate: Vec<T> = gamma.iter().zip(&step).map(|(&g, &s)| g + scale * s).collect();
                let trial = self.evaluate(&lay, z, &candidate, false);
                if trial.objective > ev.objective {
                    accepted = Some(candidate);
                    break;
                }
                if small_step {
                    break;
                }
                scale = scale * T::lit(0.5);
            }
            // No representable improvement left: flat to rounding.
            let Some(next) = accepted else {
                converged = small_step;
                break;
            };
            gamma = next;
            ev = self.evaluate(&lay, z, &gamma, true);
        }
        let (theta, alpha, beta) = self.unpack(&lay, &gamma);
        Ok(MStepOutput {
            theta,
            alpha,
            beta,
            log_likelihood: ev.log_likelihood,
            objective: ev.objective,
            grad_norm: norm(&ev.grad),
            iterations,
            converged,
            degenerate,
        })
    }
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&g| g * g).sum::<T>().sqrt()
}

/// One conditional maximization from zero initial values.
pub fn m_step<T: Scalar>(
    z: &Partition,
    a: &Sociomatrix,
    x: &DyadCovariates<T>,
    restriction: Restriction,
    ridge: T,
    tol: T,
) -> Result<MStepOutput<T>> {
    let opts = MStepOptions {
        ridge,
        tol,
        ..MStepOptions::default()
    };
    MStepSolver::new(a, x, restriction, opts)?.solve(z, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params_log_likelihood;
    use crate::netdata::{dyads, n_dyads};
    use crate::rng::substream;
    use rand::Rng;

    fn graph_from(n: usize, mut p: impl FnMut(usize, usize) -> f64, seed: u64) -> Sociomatrix {
        let mut rng = substream(seed, "mstep-test", 0);
        let flags: Vec<bool> = dyads(n).map(|(i, j)| rng.random::<f64>() < p(i, j)).collect();
        Sociomatrix::from_dyad_flags((0..n).map(|i| i.to_string()).collect(), &flags).unwrap()
    }

    fn design(n: usize, seed: u64) -> DyadCovariates<f64> {
        let mut rng = substream(seed, "mstep-design", 0);
        let names: Vec<String> = ["intercept", "u", "v"].map(String::from).to_vec();
        let values = (0..n_dyads(n))
            .flat_map(|_| [1.0, rng.random::<f64>() - 0.5, f64::from(rng.random::<bool>())])
            .collect::<Vec<_>>();
        DyadCovariates::from_rows(n, names.clone(), names, values).unwrap()
    }

    #[test]
    fn pure_blockmodel_single_class_is_logit_density() {
        let g = graph_from(30, |_, _| 0.2, 1);
        let out = m_step(&Partition::single(30), &g, &DyadCovariates::empty(30), Restriction::PureBlockmodel, 0.0, 1e-10).unwrap();
        let density = g.density();
        assert!((out.theta.get(0, 0) - (density / (1.0 - density)).ln()).abs() < 1e-8);
        assert!(out.converged && !out.degenerate);
    }

    #[test]
    fn complete_graph_intercept_only_separates() {
        let g = Sociomatrix::with_numbered_nodes(6, dyads(6)).unwrap();
        let x = DyadCovariates::intercept_only(6);
        let out = m_step(&Partition::single(6), &g, &x, Restriction::Baseline, 0.0, 1e-8).unwrap();
        assert!(out.degenerate);
        assert!(out.beta[0] > 0.0);
    }

    #[test]
    fn rank_deficient_design_names_columns() {
        let n = 6;
        let names: Vec<String> = ["intercept", "a", "a_twice"].map(String::from).to_vec();
        let mut rng = substream(3, "rank", 0);
        let values = (0..n_dyads(n))
            .flat_map(|_| {
                let v: f64 = rng.random();
                [1.0, v, 2.0 * v]
            })
            .collect();
        let x = DyadCovariates::from_rows(n, names.clone(), names, values).unwrap();
        let g = graph_from(n, |_, _| 0.5, 4);
        match m_step(&Partition::single(n), &g, &x, Restriction::Baseline, 0.0, 1e-8) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["a_twice".to_string()]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn theta_intercept_aliasing_needs_ridge() {
        let g = graph_from(10, |_, _| 0.3, 5);
        let x = DyadCovariates::intercept_only(10);
        let z = Partition::new((0..10).map(|i| i % 2).collect(), 2).unwrap();
        assert!(matches!(
            m_step(&z, &g, &x, Restriction::NoAlpha, 0.0, 1e-8),
            Err(Error::RankDeficient { .. })
        ));
        let out = m_step(&z, &g, &x, Restriction::NoAlpha, 1e-8, 1e-8).unwrap();
        assert!(out.converged);
    }

    #[test]
    fn full_model_gradient_matches_finite_differences() {
        let n = 12;
        let g = graph_from(n, |i, j| if (i + j) % 3 == 0 { 0.6 } else { 0.25 }, 6);
        let x = design(n, 7);
        let z = Partition::new((0..n).map(|i| i % 2).collect(), 2).unwrap();
        let opts = MStepOptions { ridge: 1e-8, ..Default::default() };
        let solver = MStepSolver::new(&g, &x, Restriction::Full, opts).unwrap();
        let mut rng = substream(8, "point", 0);
        let mut alpha: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let mean = alpha.iter().sum::<f64>() / n as f64;
        alpha.iter_mut().for_each(|a| *a -= mean);
        let params = ModelParams::new(
            z.clone(),
            SymMatrix::from_rows(vec![vec![0.3, -0.4], vec![-0.4, 0.1]]).unwrap(),
            Some(alpha),
            vec![-0.5, 0.7, 0.2],
            x.columns().to_vec(),
        )
        .unwrap();
        let analytic = solver.gradient(&params);
        let lay = solver.layout(2);
        let gamma = lay.pack(Some(&params));
        let f = |gam: &[f64]| {
            let (theta, alpha, beta) = solver.unpack(&lay, gam);
            let p = ModelParams::new(z.clone(), theta, alpha, beta, x.columns().to_vec()).unwrap();
            params_log_likelihood(&g, &p, &x).unwrap()
        };
        let h = 1e-5;
        for r in 0..lay.reduced_dim() {
            let (mut up, mut down) = (gamma.clone(), gamma.clone());
            up[r] += h;
            down[r] -= h;
            let fd = (f(&up) - f(&down)) / (2.0 * h);
            let rel = (fd - analytic[r]).abs() / analytic[r].abs().max(1e-3);
            assert!(rel < 1e-4, "coordinate {r}: fd {fd} vs analytic {}", analytic[r]);
        }
    }

    #[test]
    fn newton_is_monotone_and_converges() {
        let n = 25;
        let g = graph_from(n, |i, j| if i % 2 == j % 2 { 0.5 } else { 0.1 }, 9);
        let x = design(n, 10);
        let z = Partition::new((0..n).map(|i| i % 2).collect(), 2).unwrap();
        let solver = MStepSolver::new(&g, &x, Restriction::Full, MStepOptions { ridge: 1e-8, ..Default::default() }).unwrap();
        let out = solver.solve(&z, None).unwrap();
        assert!(out.converged, "grad norm {}", out.grad_norm);
        let zero = ModelParams::zeros(n, 2, true, x.columns().to_vec()).with_partition(z.clone()).unwrap();
        let start_ll = params_log_likelihood(&g, &zero, &x).unwrap();
        assert!(out.log_likelihood >= start_ll);
        let alpha_sum: f64 = out.alpha.as_ref().unwrap().iter().sum();
        assert!(alpha_sum.abs() < 1e-10);
        // Warm start from the optimum does not move it.
        let params = out.clone().into_params(z.clone(), x.columns().to_vec()).unwrap();
        let again = solver.solve(&z, Some(&params)).unwrap();
        assert_eq!(again.iterations, 0);
    }

    #[test]
    fn f32_baseline_fit_tracks_f64() {
        let n = 40;
        let g = graph_from(n, |_, _| 0.3, 11);
        let x64 = design(n, 12);
        let x32 = DyadCovariates::<f32>::from_rows(
            n,
            x64.columns().to_vec(),
            x64.families().to_vec(),
            (0..x64.n_dyads()).flat_map(|d| x64.row(d).iter().map(|&v| v as f32).collect::<Vec<_>>()).collect(),
        )
        .unwrap();
        let z = Partition::single(n);
        let a = m_step(&z, &g, &x64, Restriction::Baseline, 0.0, 1e-8).unwrap();
        let b = m_step(&z, &g, &x32, Restriction::Baseline, 0.0f32, 1e-2).unwrap();
        for (u, v) in a.beta.iter().zip(&b.beta) {
            assert!((u - *v as f64).abs() < 1e-3);
        }
    }
}
