//! Residual-structure assessment: compare block densities of a candidate
//! partition against the nominal values implied by a covariate-only
//! baseline, plus diagnostics relating classes to node attributes.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::confidence::{
    block_proportions, divergence_statistic, normalized_divergence, uniform_bound, BoundSpec,
};
use crate::error::{Error, Result};
use crate::inference::{fit, FitConfig, FitResult, MStepOptions, MStepSolver, Restriction};
use crate::matrix::SymMatrix;
use crate::model::{log_odds, Partition};
use crate::netdata::{
    build_dyad_covariates, compute_degree_bins, dyads, DyadCovariates, DyadScheme, NodeCovariates,
    Sociomatrix, DEFAULT_DEGREE_CUTPOINTS,
};
use crate::rng::child_seed;
use crate::scalar::Scalar;

/// Covariates whose co-membership is compared against the classes.
pub const ALIGNMENT_COVARIATES: [&str; 3] = ["gender", "race", "grade"];

const SEARCH_NOTE: &str = "candidate partitions come from a blockmodel search on the expanded design \
(degree-bin, race-pair and grade-pair indicators in place of node effects); nominal block \
probabilities come from the covariate-only baseline; the bound holds uniformly over partitions, \
so the choice of search does not affect its validity";

/// Class-by-level counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crosstab {
    pub levels: Vec<String>,
    /// `counts[class][level]`.
    pub counts: Vec<Vec<usize>>,
}

impl Crosstab {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AssessmentReport<T> {
    pub k: usize,
    pub divergence: T,
    pub bound: f64,
    pub normalized_divergence: T,
    pub normalized_bound: f64,
    /// `normalized_divergence >= normalized_bound`.
    pub exceeds_bound: bool,
    pub jaccard: BTreeMap<String, f64>,
    pub variance_ratio: f64,
    /// Classes against grade levels.
    pub crosstab: Crosstab,
    /// 1-based class labels.
    pub partition: Vec<usize>,
    pub observed: SymMatrix<T>,
    pub nominal: SymMatrix<T>,
    pub baseline_ref: String,
    pub bonferroni_m: usize,
    pub delta: f64,
}

/// SHA-256 of the serialized baseline parameters and log-likelihood.
pub fn baseline_fingerprint<T: Scalar>(baseline: &FitResult<T>) -> String {
    let body = serde_json::to_vec(&(&baseline.params, baseline.best_loglik)).unwrap_or_default();
    hex::encode(Sha256::digest(&body))
}

/// Mean baseline probability per block pair of `z`.
///
/// Pairs without dyads get the overall mean so every entry stays interior.
pub fn baseline_nominal<T: Scalar>(
    z: &Partition,
    baseline: &FitResult<T>,
    x: &DyadCovariates<T>,
) -> Result<SymMatrix<T>> {
    if baseline.params.k() != 1 || baseline.params.alpha().is_some() {
        return Err(Error::InvalidInput(
            "nominal block probabilities need a baseline fit (one class, no node effects)".into(),
        ));
    }
    if baseline.degenerate {
        return Err(Error::DegenerateBaseline);
    }
    let n = baseline.params.n_nodes();
    if z.len() != n {
        return Err(Error::DimensionMismatch {
            context: "partition",
            expected: n,
            found: z.len(),
        });
    }
    let p = log_odds(&baseline.params, x)?;
    let k = z.k();
    let mut sums = SymMatrix::filled(k, 0.0f64);
    let mut counts = SymMatrix::filled(k, 0usize);
    let mut total = 0.0;
    for ((i, j), &pij) in dyads(n).zip(p.as_slice()) {
        let (a, b) = (z.label(i), z.label(j));
        sums.set(a, b, sums.get(a, b) + pij.as_f64());
        counts.set(a, b, counts.get(a, b) + 1);
        total += pij.as_f64();
    }
    let overall = total / p.len().max(1) as f64;
    Ok(SymMatrix::from_upper(k, |a, b| {
        let c = counts.get(a, b);
        T::lit(if c == 0 { overall } else { sums.get(a, b) / c as f64 })
    }))
}

pub fn assess_partition<T: Scalar>(
    z: &Partition,
    a: &Sociomatrix,
    x: &DyadCovariates<T>,
    baseline: &FitResult<T>,
    spec: &BoundSpec,
    nodes: &NodeCovariates,
) -> Result<AssessmentReport<T>> {
    let n = a.n_nodes();
    if spec.n != n || spec.k != z.k() {
        return Err(Error::InvalidConfig(format!(
            "bound is for N = {}, K = {} but the partition has N = {}, K = {}",
            spec.n,
            spec.k,
            z.len(),
            z.k()
        )));
    }
    if nodes.len() != n {
        return Err(Error::DimensionMismatch {
            context: "node covariates",
            expected: n,
            found: nodes.len(),
        });
    }
    let bp = block_proportions::<T>(z, a, None)?;
    let nominal = baseline_nominal(z, baseline, x)?;
    let divergence = divergence_statistic(&bp, &nominal)?;
    let bound = uniform_bound(spec);
    let normalized = normalized_divergence(divergence, n)?;
    let normalized_bound = normalized_divergence(bound, n)?;
    let mut jaccard = BTreeMap::new();
    for cov in ALIGNMENT_COVARIATES {
        let labels = nodes.labels(cov).ok_or_else(|| Error::UnknownCovariate(cov.into()))?;
        jaccard.insert(cov.to_string(), jaccard_alignment(z.labels(), &labels)?);
    }
    Ok(AssessmentReport {
        k: z.k(),
        divergence,
        bound,
        normalized_divergence: normalized,
        normalized_bound,
        exceeds_bound: normalized.as_f64() >= normalized_bound,
        jaccard,
        variance_ratio: degree_variance_ratio(z, a)?,
        crosstab: crosstab(z, nodes.grade())?,
        partition: z.one_based(),
        observed: bp.phat,
        nominal,
        baseline_ref: baseline_fingerprint(baseline),
        bonferroni_m: spec.bonferroni_m,
        delta: spec.delta,
    })
}

fn pairs(count: usize) -> u64 {
    let c = count as u64;
    c * c.saturating_sub(1) / 2
}

/// `|A ∩ B| / |A ∪ B|` over the dyads joined by each labelling; 1 when both
/// sets are empty.
pub fn jaccard_alignment<A: Eq + Hash, B: Eq + Hash>(first: &[A], second: &[B]) -> Result<f64> {
    if first.len() != second.len() {
        return Err(Error::DimensionMismatch {
            context: "labels",
            expected: first.len(),
            found: second.len(),
        });
    }
    let mut left: HashMap<&A, usize> = HashMap::new();
    let mut right: HashMap<&B, usize> = HashMap::new();
    let mut joint: HashMap<(&A, &B), usize> = HashMap::new();
    for (u, v) in first.iter().zip(second) {
        *left.entry(u).or_default() += 1;
        *right.entry(v).or_default() += 1;
        *joint.entry((u, v)).or_default() += 1;
    }
    let a: u64 = left.values().map(|&c| pairs(c)).sum();
    let b: u64 = right.values().map(|&c| pairs(c)).sum();
    let both: u64 = joint.values().map(|&c| pairs(c)).sum();
    let union = a + b - both;
    Ok(if union == 0 { 1.0 } else { both as f64 / union as f64 })
}

fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Mean over non-empty classes of within-class degree variance divided by
/// the variance of all degrees (population variances).
pub fn degree_variance_ratio(z: &Partition, a: &Sociomatrix) -> Result<f64> {
    if z.len() != a.n_nodes() {
        return Err(Error::DimensionMismatch {
            context: "partition",
            expected: a.n_nodes(),
            found: z.len(),
        });
    }
    let degrees: Vec<f64> = a.degrees().into_iter().map(|d| d as f64).collect();
    let total = population_variance(&degrees);
    if !(total > 0.0) {
        return Err(Error::ConstantSequence("degree sequence"));
    }
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); z.k()];
    for (i, &d) in degrees.iter().enumerate() {
        groups[z.label(i)].push(d);
    }
    let ratios: Vec<f64> = groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| population_variance(g) / total)
        .collect();
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// Counts of nodes per (class, level), levels in ascending order.
pub fn crosstab<L: Ord + ToString>(z: &Partition, labels: &[L]) -> Result<Crosstab> {
    if labels.len() != z.len() {
        return Err(Error::DimensionMismatch {
            context: "labels",
            expected: z.len(),
            found: labels.len(),
        });
    }
    let mut levels: Vec<&L> = labels.iter().collect();
    levels.sort();
    levels.dedup();
    let mut counts = vec![vec![0; levels.len()]; z.k()];
    for (i, l) in labels.iter().enumerate() {
        let col = levels.binary_search(&l).expect("level collected above");
        counts[z.label(i)][col] += 1;
    }
    Ok(Crosstab {
        levels: levels.into_iter().map(ToString::to_string).collect(),
        counts,
    })
}

/// Pearson correlation between fitted node effects and degrees.
pub fn alpha_degree_correlation<T: Scalar>(fit: &FitResult<T>, a: &Sociomatrix) -> Result<f64> {
    let alpha = fit
        .params
        .alpha()
        .ok_or_else(|| Error::InvalidInput("fit has no free node effects".into()))?;
    if alpha.len() != a.n_nodes() {
        return Err(Error::DimensionMismatch {
            context: "node effects",
            expected: a.n_nodes(),
            found: alpha.len(),
        });
    }
    let xs: Vec<f64> = alpha.iter().map(|v| v.as_f64()).collect();
    let ys: Vec<f64> = a.degrees().into_iter().map(|d| d as f64).collect();
    pearson(&xs, &ys)
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if !(sxx > 0.0) {
        return Err(Error::ConstantSequence("node effects"));
    }
    if !(syy > 0.0) {
        return Err(Error::ConstantSequence("degree sequence"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevianceTest {
    pub withheld: String,
    pub columns: Vec<String>,
    pub df: usize,
    /// `2 (loglik_full - loglik_withheld)`, never negative.
    pub deviance_change: f64,
    /// Change in deviance seen from the withheld model, `-deviance_change`.
    pub signed_change: f64,
    /// Chi-squared upper tail; absent when node effects are free.
    pub p_value: Option<f64>,
}

impl DevianceTest {
    pub fn p_value(&self) -> Result<f64> {
        self.p_value.ok_or(Error::NoAsymptotics)
    }
}

fn one_class_loglik<T: Scalar>(a: &Sociomatrix, x: &DyadCovariates<T>, restriction: Restriction) -> Result<f64> {
    let ridge = if restriction == Restriction::Baseline { T::zero() } else { T::lit(1e-8) };
    let opts = MStepOptions {
        ridge,
        tol: T::lit(1e-8),
        max_iters: 100,
    };
    let solver = MStepSolver::new(a, x, restriction, opts)?;
    Ok(solver.solve(&Partition::single(a.n_nodes()), None)?.log_likelihood.as_f64())
}

/// Refits without the named column (or covariate family) and reports the
/// change in deviance.
///
/// `restriction` is `Baseline` for the chi-squared test; `Full` refits with
/// free node effects and withholds the p-value.
pub fn analysis_of_deviance<T: Scalar>(
    a: &Sociomatrix,
    x: &DyadCovariates<T>,
    withhold: &str,
    restriction: Restriction,
) -> Result<DevianceTest> {
    if !matches!(restriction, Restriction::Baseline | Restriction::Full) {
        return Err(Error::InvalidConfig(format!(
            "analysis of deviance compares one-class fits; `{restriction}` is not supported"
        )));
    }
    let drop = x.columns_for(withhold);
    if drop.is_empty() {
        return Err(Error::UnknownCovariate(withhold.into()));
    }
    let full = one_class_loglik(a, x, restriction)?;
    let reduced = one_class_loglik(a, &x.without_columns(&drop), restriction)?;
    let change = (2.0 * (full - reduced)).max(0.0);
    let p_value = if restriction == Restriction::Baseline {
        let chi = ChiSquared::new(drop.len() as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Some(chi.sf(change))
    } else {
        None
    };
    Ok(DevianceTest {
        withheld: withhold.into(),
        columns: drop.iter().map(|&c| x.columns()[c].clone()).collect(),
        df: drop.len(),
        deviance_change: change,
        signed_change: -change,
        p_value,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AssessConfig<T> {
    pub k_values: Vec<usize>,
    pub delta: f64,
    /// Family size for the Bonferroni correction; `None` uses the number of
    /// `k_values`.
    pub bonferroni_m: Option<usize>,
    pub degree_cutpoints: Vec<usize>,
    /// EM settings for the structured search; `k` and `restriction` are
    /// overridden per run.
    pub search: FitConfig<T>,
}

impl<T: Scalar> AssessConfig<T> {
    pub fn new(k_values: Vec<usize>) -> Self {
        Self {
            k_values,
            delta: 0.05,
            bonferroni_m: None,
            degree_cutpoints: DEFAULT_DEGREE_CUTPOINTS.to_vec(),
            search: FitConfig::new(2, Restriction::NoAlpha),
        }
    }

    pub fn family_size(&self) -> usize {
        self.bonferroni_m.unwrap_or(self.k_values.len()).max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SearchSummary<T> {
    pub k: usize,
    pub seed: u64,
    pub best_loglik: T,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NetworkAssessment<T> {
    pub baseline: FitResult<T>,
    pub baseline_ref: String,
    pub design_notes: Vec<String>,
    pub searches: Vec<SearchSummary<T>>,
    pub reports: Vec<AssessmentReport<T>>,
    pub note: String,
}

/// Fits the baseline, searches for structure at each `K` with the expanded
/// design, and assesses each candidate partition against the baseline.
pub fn assess_network<T: Scalar>(
    a: &Sociomatrix,
    nodes: &NodeCovariates,
    cfg: &AssessConfig<T>,
) -> Result<NetworkAssessment<T>> {
    if cfg.k_values.is_empty() {
        return Err(Error::InvalidConfig("no K values to assess".into()));
    }
    let x_basic = build_dyad_covariates::<T>(nodes, DyadScheme::Basic)?;
    let mut base_cfg = FitConfig::new(1, Restriction::Baseline).with_seed(cfg.search.seed);
    base_cfg.newton_tol = cfg.search.newton_tol;
    base_cfg.newton_max_iters = cfg.search.newton_max_iters;
    let baseline = fit(a, &x_basic, &base_cfg)?;
    if baseline.degenerate {
        return Err(Error::DegenerateBaseline);
    }
    let mut binned = nodes.clone();
    binned.set_degree_bins(compute_degree_bins(a, &cfg.degree_cutpoints)?)?;
    let x_search = build_dyad_covariates::<T>(&binned, DyadScheme::Expanded)?;
    let m = cfg.family_size();

    let runs: Vec<Result<(SearchSummary<T>, AssessmentReport<T>)>> = cfg
        .k_values
        .par_iter()
        .map(|&k| {
            let mut search = cfg.search.clone();
            search.k = k;
            search.restriction = Restriction::NoAlpha;
            search.seed = child_seed(cfg.search.seed, "search", k as u64);
            let found = fit(a, &x_search, &search)?;
            let spec = BoundSpec::new(a.n_nodes(), k, cfg.delta, m)?;
            let report = assess_partition(found.params.z(), a, &x_basic, &baseline, &spec, nodes)?;
            let summary = SearchSummary {
                k,
                seed: search.seed,
                best_loglik: found.best_loglik,
                degenerate: found.degenerate,
            };
            Ok((summary, report))
        })
        .collect();
    let mut searches = Vec::new();
    let mut reports = Vec::new();
    for run in runs {
        let (s, r) = run?;
        searches.push(s);
        reports.push(r);
    }
    Ok(NetworkAssessment {
        baseline_ref: baseline_fingerprint(&baseline),
        baseline,
        design_notes: x_search.notes().to_vec(),
        searches,
        reports,
        note: SEARCH_NOTE.into(),
    })
}
