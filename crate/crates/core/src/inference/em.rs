//! Stochastic EM with random restarts.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gibbs::GibbsKernel;
use super::mstep::{MStepOptions, MStepSolver};
use super::Restriction;
use crate::error::{Error, Result};
use crate::matrix::SymMatrix;
use crate::model::{params_log_likelihood, ModelParams, Partition};
use crate::netdata::{DyadCovariates, Sociomatrix};
use crate::rng::substream;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FitConfig<T> {
    pub k: usize,
    pub restriction: Restriction,
    pub max_em_iters: usize,
    pub gibbs_sweeps_per_estep: usize,
    pub newton_tol: T,
    pub newton_max_iters: usize,
    pub ridge: T,
    pub n_restarts: usize,
    pub seed: u64,
}

impl<T: Scalar> FitConfig<T> {
    /// Defaults: 200 EM iterations, 5 sweeps per E-step, 10 restarts, ridge
    /// `1e-8` (zero for the baseline), seed 0.
    pub fn new(k: usize, restriction: Restriction) -> Self {
        let baseline = restriction == Restriction::Baseline;
        Self {
            k: if baseline { 1 } else { k },
            restriction,
            max_em_iters: 200,
            gibbs_sweeps_per_estep: 5,
            newton_tol: T::lit(1e-8),
            newton_max_iters: 100,
            ridge: if baseline { T::zero() } else { T::lit(1e-8) },
            n_restarts: 10,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("k", self.k),
            ("max_em_iters", self.max_em_iters),
            ("gibbs_sweeps_per_estep", self.gibbs_sweeps_per_estep),
            ("newton_max_iters", self.newton_max_iters),
            ("n_restarts", self.n_restarts),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        if !(self.ridge >= T::zero()) {
            return Err(Error::InvalidConfig(format!("ridge must be >= 0, got {}", self.ridge)));
        }
        if !(self.newton_tol > T::zero()) {
            return Err(Error::InvalidConfig(format!("newton_tol must be > 0, got {}", self.newton_tol)));
        }
        Ok(())
    }

    /// Class count actually fitted: the baseline always has one class.
    pub fn effective_k(&self) -> usize {
        if self.restriction == Restriction::Baseline {
            1
        } else {
            self.k
        }
    }

    fn mstep_options(&self) -> MStepOptions<T> {
        MStepOptions {
            ridge: self.ridge,
            tol: self.newton_tol,
            max_iters: self.newton_max_iters,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FitProvenance<T> {
    pub config: FitConfig<T>,
    pub seed: u64,
    /// Index of the restart that produced `params`.
    pub best_restart: usize,
    /// Best log-likelihood per restart; `None` where the restart failed.
    pub restart_logliks: Vec<Option<T>>,
    /// Restarts in which some M-step hit the separation threshold.
    pub degenerate_restarts: usize,
    pub failed_restarts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FitResult<T> {
    pub params: ModelParams<T>,
    pub best_loglik: T,
    /// Log-likelihood after each M-step of the winning restart.
    pub trajectory: Vec<T>,
    /// The M-step that produced `params` hit the separation threshold.
    pub degenerate: bool,
    pub provenance: FitProvenance<T>,
}

struct RestartOutcome<T> {
    params: ModelParams<T>,
    loglik: T,
    trajectory: Vec<T>,
    degenerate: bool,
    any_degenerate: bool,
}

/// Runs stochastic EM from `cfg.n_restarts` random starts and keeps the
/// highest-likelihood iterate seen.
pub fn fit<T: Scalar>(a: &Sociomatrix, x: &DyadCovariates<T>, cfg: &FitConfig<T>) -> Result<FitResult<T>> {
    cfg.validate()?;
    let n = a.n_nodes();
    let k = cfg.effective_k();
    if k > n {
        return Err(Error::InvalidConfig(format!("k = {k} exceeds the {n} nodes")));
    }
    let solver = MStepSolver::new(a, x, cfg.restriction, cfg.mstep_options())?;
    let names = x.columns().to_vec();
    let with_alpha = cfg.restriction.estimates_alpha();

    let beta0 = if cfg.restriction.estimates_beta() && cfg.restriction != Restriction::Baseline {
        let base = MStepSolver::new(a, x, Restriction::Baseline, cfg.mstep_options())?;
        base.solve(&Partition::single(n), None)
            .map(|o| o.beta)
            .unwrap_or_else(|_| vec![T::zero(); x.n_columns()])
    } else {
        vec![T::zero(); x.n_columns()]
    };

    // Without latent classes there is nothing to sample: one M-step is the fit.
    let n_restarts = if k == 1 { 1 } else { cfg.n_restarts };
    let outcomes: Vec<Result<RestartOutcome<T>>> = (0..n_restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(cfg.seed, "restart", r as u64);
            let z = if k == 1 {
                Partition::single(n)
            } else {
                Partition::new((0..n).map(|_| rng.random_range(0..k)).collect(), k)?
            };
            let alpha = with_alpha.then(|| vec![T::zero(); n]);
            let params = ModelParams::new(z, SymMatrix::filled(k, T::zero()), alpha, beta0.clone(), names.clone())?;
            run_restart(&solver, a, x, cfg, params, k, &mut rng)
        })
        .collect();

    let mut best: Option<(usize, RestartOutcome<T>)> = None;
    let mut restart_logliks = Vec::with_capacity(n_restarts);
    let mut failed = Vec::new();
    let mut first_error = None;
    let mut degenerate_restarts = 0;
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => {
                restart_logliks.push(Some(o.loglik));
                degenerate_restarts += usize::from(o.any_degenerate);
                if best.as_ref().is_none_or(|(_, b)| o.loglik > b.loglik) {
                    best = Some((r, o));
                }
            }
            Err(e) => {
                restart_logliks.push(None);
                failed.push(format!("restart {r}: {e}"));
                first_error.get_or_insert(e);
            }
        }
    }
    let Some((best_restart, outcome)) = best else {
        return Err(first_error.unwrap_or_else(|| Error::InvalidConfig("no restarts ran".into())));
    };
    let params = canonicalize(&outcome.params);
    let best_loglik = params_log_likelihood(a, &params, x)?;
    Ok(FitResult {
        params,
        best_loglik,
        trajectory: outcome.trajectory,
        degenerate: outcome.degenerate,
        provenance: FitProvenance {
            config: cfg.clone(),
            seed: cfg.seed,
            best_restart,
            restart_logliks,
            degenerate_restarts,
            failed_restarts: failed,
        },
    })
}

fn run_restart<T: Scalar, R: Rng>(
    solver: &MStepSolver<'_, T>,
    a: &Sociomatrix,
    x: &DyadCovariates<T>,
    cfg: &FitConfig<T>,
    mut params: ModelParams<T>,
    k: usize,
    rng: &mut R,
) -> Result<RestartOutcome<T>> {
    let iterations = if k == 1 { 1 } else { cfg.max_em_iters };
    let mut trajectory = Vec::with_capacity(iterations);
    let mut best: Option<(ModelParams<T>, T, bool)> = None;
    let mut any_degenerate = false;
    for _ in 0..iterations {
        if k > 1 {
            let kernel = GibbsKernel::new(&params, a, x)?;
            let mut z = params.z().clone();
            for _ in 0..cfg.gibbs_sweeps_per_estep {
                kernel.sweep(a, &mut z, rng);
            }
            *params.partition_mut() = z;
        }
        let out = solver.solve(params.z(), Some(&params))?;
        any_degenerate |= out.degenerate;
        let (loglik, degenerate) = (out.log_likelihood, out.degenerate);
        params = out.into_params(params.z().clone(), x.columns().to_vec())?;
        trajectory.push(loglik);
        if best.as_ref().is_none_or(|(_, b, _)| loglik > *b) {
            best = Some((params.clone(), loglik, degenerate));
        }
    }
    let (params, loglik, degenerate) = best.expect("at least one EM iteration");
    Ok(RestartOutcome {
        params,
        loglik,
        trajectory,
        degenerate,
        any_degenerate,
    })
}

/// Relabels classes by decreasing size, ties broken by smallest member;
/// empty classes go last in their original order.
pub fn canonicalize<T: Scalar>(params: &ModelParams<T>) -> ModelParams<T> {
    let z = params.z();
    let k = z.k();
    let sizes = z.sizes();
    let mut first = vec![usize::MAX; k];
    for (i, &c) in z.labels().iter().enumerate() {
        first[c] = first[c].min(i);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&c| (sizes[c] == 0, std::cmp::Reverse(sizes[c]), first[c], c));
    let mut new_label = vec![0; k];
    for (pos, &c) in order.iter().enumerate() {
        new_label[c] = pos;
    }
    let mut out = params.clone();
    *out.partition_mut() = z.relabeled(&new_label);
    out.set_theta(params.theta().permuted(&new_label));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netdata::dyads;
    use rand::Rng;
    use proptest::prelude::*;

    fn planted(n: usize, within: f64, between: f64, seed: u64) -> (Sociomatrix, Vec<usize>) {
        let truth: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
        let mut rng = substream(seed, "planted", 0);
        let flags: Vec<bool> = dyads(n)
            .map(|(i, j)| rng.random::<f64>() < if truth[i] == truth[j] { within } else { between })
            .collect();
        let ids = (0..n).map(|i| i.to_string()).collect();
        (Sociomatrix::from_dyad_flags(ids, &flags).unwrap(), truth)
    }

    fn agreement(z: &Partition, truth: &[usize]) -> f64 {
        let same = z.labels().iter().zip(truth).filter(|(a, b)| a == b).count();
        let n = truth.len();
        same.max(n - same) as f64 / n as f64
    }

    #[test]
    fn canonical_order_examples() {
        let p = ModelParams::<f64>::new(
            Partition::from_one_based(&[2, 2, 1], 2).unwrap(),
            SymMatrix::from_rows(vec![vec![1.0, 2.0], vec![2.0, 3.0]]).unwrap(),
            None,
            vec![],
            vec![],
        )
        .unwrap();
        let c = canonicalize(&p);
        assert_eq!(c.z().one_based(), vec![1, 1, 2]);
        assert_eq!(c.theta().rows(), vec![vec![3.0, 2.0], vec![2.0, 1.0]]);

        let tie = ModelParams::<f64>::zeros(4, 2, false, vec![])
            .with_partition(Partition::from_one_based(&[2, 1, 1, 2], 2).unwrap())
            .unwrap();
        assert_eq!(canonicalize(&tie).z().one_based(), vec![1, 2, 2, 1]);
    }

    #[test]
    fn baseline_has_single_iteration() {
        let (g, _) = planted(30, 0.3, 0.1, 1);
        let x = DyadCovariates::<f64>::intercept_only(30);
        let res = fit(&g, &x, &FitConfig::new(4, Restriction::Baseline)).unwrap();
        assert_eq!(res.trajectory.len(), 1);
        assert_eq!(res.params.k(), 1);
        let density = g.density();
        assert!((res.params.beta()[0] - (density / (1.0 - density)).ln()).abs() < 1e-8);
    }

    #[test]
    fn planted_blocks_are_recovered_deterministically() {
        let (g, truth) = planted(100, 0.3, 0.05, 2);
        let mut cfg = FitConfig::<f64>::new(2, Restriction::PureBlockmodel).with_seed(9);
        cfg.max_em_iters = 40;
        cfg.n_restarts = 3;
        let x = DyadCovariates::empty(100);
        let a = fit(&g, &x, &cfg).unwrap();
        assert!(agreement(a.params.z(), &truth) >= 0.95);
        assert!(a.trajectory.len() <= cfg.max_em_iters);
        assert_eq!(a.best_loglik, params_log_likelihood(&g, &a.params, &x).unwrap());
        let b = fit(&g, &x, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = FitConfig::<f64>::new(2, Restriction::Full);
        cfg.n_restarts = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = FitConfig::<f64>::new(2, Restriction::Full);
        cfg.ridge = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = FitConfig::<f64>::new(2, Restriction::Full);
        cfg.newton_tol = 0.0;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn canonicalize_preserves_likelihood(
            labels in proptest::collection::vec(0usize..3, 6..12),
            vals in proptest::collection::vec(-2.0f64..2.0, 6),
            seed in 0u64..1000,
        ) {
            let n = labels.len();
            let mut rng = substream(seed, "graph", 0);
            let flags: Vec<bool> = dyads(n).map(|_| rng.random::<bool>()).collect();
            let g = Sociomatrix::from_dyad_flags((0..n).map(|i| i.to_string()).collect(), &flags).unwrap();
            let theta = SymMatrix::from_upper(3, |a, b| vals[crate::matrix::upper_index(3, a, b)]);
            let p = ModelParams::new(Partition::new(labels, 3).unwrap(), theta, None, vec![], vec![]).unwrap();
            let x = DyadCovariates::empty(n);
            let before = params_log_likelihood(&g, &p, &x).unwrap();
            let c = canonicalize(&p);
            let after = params_log_likelihood(&g, &c, &x).unwrap();
            prop_assert!((before - after).abs() <= 1e-12 * before.abs().max(1.0));
            let sizes = c.z().sizes();
            prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
