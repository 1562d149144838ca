//! Simulation from the log-odds model: graph generation, coefficient bias of
//! one-class fits, and the slack of the uniform bound.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::{block_proportions, divergence_statistic, uniform_bound, BoundSpec};
use crate::error::{Error, Result};
use crate::inference::{fit, FitConfig, Restriction};
use crate::matrix::SymMatrix;
use crate::model::{linear_predictor, EdgeProbabilities, ModelParams, Partition};
use crate::netdata::{
    build_dyad_covariates, DyadCovariates, DyadScheme, NodeCovariates, Sociomatrix,
    DEFAULT_GRADE_RANGE,
};
use crate::rng::{child_seed, substream};
use crate::scalar::{logistic, Scalar};

/// Category probabilities for synthetic node covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateGenerator {
    pub gender: Vec<f64>,
    pub race: Vec<f64>,
    /// Probabilities for consecutive grades starting at `first_grade`.
    pub grade: Vec<f64>,
    pub first_grade: i32,
}

impl CovariateGenerator {
    /// Two equally likely genders, five races with weights `exp(-skew * r)`,
    /// grades uniform on 7 to 12.
    pub fn synthetic(race_skew: f64) -> Self {
        let weights: Vec<f64> = (0..5).map(|r| (-race_skew * r as f64).exp()).collect();
        let total: f64 = weights.iter().sum();
        Self {
            gender: vec![0.5, 0.5],
            race: weights.iter().map(|w| w / total).collect(),
            grade: vec![1.0 / 6.0; 6],
            first_grade: DEFAULT_GRADE_RANGE.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, probs) in [("gender", &self.gender), ("race", &self.race), ("grade", &self.grade)] {
            let total: f64 = probs.iter().sum();
            if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!("{name} probabilities must be nonnegative and sum to 1")));
            }
        }
        Ok(())
    }

    fn last_grade(&self) -> i32 {
        self.first_grade + self.grade.len() as i32 - 1
    }

    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<NodeCovariates> {
        let mut gender = Vec::with_capacity(n);
        let mut race = Vec::with_capacity(n);
        let mut grade = Vec::with_capacity(n);
        for _ in 0..n {
            let g = pick(&self.gender, rng);
            gender.push(["F", "M"].get(g).map_or_else(|| format!("gender{}", g + 1), |s| s.to_string()));
            race.push(format!("race{}", pick(&self.race, rng) + 1));
            grade.push(self.first_grade + pick(&self.grade, rng) as i32);
        }
        NodeCovariates::new(gender, race, grade, (self.first_grade, self.last_grade()))
    }
}

fn pick<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SimScenario<T> {
    pub n_nodes: usize,
    pub covariates: CovariateGenerator,
    /// Generating parameters over the basic dyad design.
    pub true_params: ModelParams<T>,
    pub n_replicates: usize,
    pub seed: u64,
}

impl<T: Scalar> SimScenario<T> {
    pub fn new(covariates: CovariateGenerator, true_params: ModelParams<T>, n_replicates: usize, seed: u64) -> Result<Self> {
        covariates.validate()?;
        if n_replicates == 0 {
            return Err(Error::InvalidConfig("at least one replicate is required".into()));
        }
        let basic = ["intercept", "same_gender", "same_race", "grade_diff"];
        if true_params.column_names() != basic {
            return Err(Error::InvalidConfig(format!(
                "generating coefficients must be named {basic:?}, got {:?}",
                true_params.column_names()
            )));
        }
        Ok(Self {
            n_nodes: true_params.n_nodes(),
            covariates,
            true_params,
            n_replicates,
            seed,
        })
    }

    /// `K = 1`, `theta = 0`, no node effects, coefficients `beta`.
    pub fn baseline(n: usize, beta: [f64; 4], covariates: CovariateGenerator, n_replicates: usize, seed: u64) -> Result<Self> {
        let names = ["intercept", "same_gender", "same_race", "grade_diff"].map(String::from).to_vec();
        let beta = beta.iter().map(|&b| T::lit(b)).collect();
        let params = ModelParams::new(Partition::single(n), SymMatrix::filled(1, T::zero()), None, beta, names)?;
        Self::new(covariates, params, n_replicates, seed)
    }
}

/// Draws covariates, then every dyad independently with its model probability.
pub fn generate_graph<T: Scalar>(scenario: &SimScenario<T>, replicate: usize) -> Result<(Sociomatrix, NodeCovariates)> {
    let (graph, nodes, _) = generate_with_probabilities(scenario, replicate)?;
    Ok((graph, nodes))
}

fn generate_with_probabilities<T: Scalar>(
    scenario: &SimScenario<T>,
    replicate: usize,
) -> Result<(Sociomatrix, NodeCovariates, Vec<T>)> {
    let n = scenario.n_nodes;
    let mut cov_rng = substream(scenario.seed, "covariates", replicate as u64);
    let nodes = scenario.covariates.draw(n, &mut cov_rng)?;
    let x = build_dyad_covariates::<T>(&nodes, DyadScheme::Basic)?;
    let p: Vec<T> = linear_predictor(&scenario.true_params, &x)?.into_iter().map(logistic).collect();
    let mut edge_rng = substream(scenario.seed, "edges", replicate as u64);
    let flags: Vec<bool> = p.iter().map(|&pij| edge_rng.random::<f64>() < pij.as_f64()).collect();
    let ids = (0..n).map(|i| format!("n{i}")).collect();
    Ok((Sociomatrix::from_dyad_flags(ids, &flags)?, nodes, p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub restriction: Restriction,
    pub n_used: usize,
    pub n_degenerate: usize,
    pub n_failed: usize,
    /// Mean of `estimate - truth` per coefficient.
    pub bias: Vec<f64>,
    /// Monte Carlo standard error; `None` with fewer than two replicates.
    pub se: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasStudy {
    pub columns: Vec<String>,
    pub truth: Vec<f64>,
    pub n_replicates: usize,
    pub rows: Vec<BiasRow>,
}

enum ReplicateFit {
    Estimate(Vec<f64>),
    Degenerate,
    Failed,
}

/// Fits every replicate under each one-class restriction and summarizes the
/// coefficient error.
///
/// `Full` here means free node effects with `theta` absorbed into the
/// intercept. Degenerate and failed replicates are excluded and counted.
pub fn bias_study<T: Scalar>(scenario: &SimScenario<T>, restrictions: &[Restriction]) -> Result<BiasStudy> {
    if scenario.true_params.k() != 1 || scenario.true_params.theta().get(0, 0) != T::zero() {
        return Err(Error::InvalidConfig("bias study needs a one-class generating model with theta = 0".into()));
    }
    let truth: Vec<f64> = scenario.true_params.beta().iter().map(|b| b.as_f64()).collect();
    let mut rows = Vec::new();
    for &restriction in restrictions {
        if matches!(restriction, Restriction::PureBlockmodel) {
            return Err(Error::InvalidConfig("bias study needs restrictions that estimate beta".into()));
        }
        let fits: Vec<ReplicateFit> = (0..scenario.n_replicates)
            .into_par_iter()
            .map(|r| {
                let Ok((g, nodes)) = generate_graph(scenario, r) else { return ReplicateFit::Failed };
                let Ok(x) = build_dyad_covariates::<T>(&nodes, DyadScheme::Basic) else { return ReplicateFit::Failed };
                let cfg = FitConfig::new(1, restriction).with_seed(child_seed(scenario.seed, "bias-fit", r as u64));
                match fit(&g, &x, &cfg) {
                    Ok(res) if res.degenerate => ReplicateFit::Degenerate,
                    Ok(res) => ReplicateFit::Estimate(res.params.centered().beta().iter().map(|b| b.as_f64()).collect()),
                    Err(_) => ReplicateFit::Failed,
                }
            })
            .collect();
        let estimates: Vec<&Vec<f64>> = fits
            .iter()
            .filter_map(|f| match f {
                ReplicateFit::Estimate(b) => Some(b),
                _ => None,
            })
            .collect();
        let n_used = estimates.len();
        let mut bias = vec![f64::NAN; truth.len()];
        let mut se = vec![None; truth.len()];
        for (c, t) in truth.iter().enumerate() {
            let errors: Vec<f64> = estimates.iter().map(|b| b[c] - t).collect();
            if n_used > 0 {
                bias[c] = errors.iter().sum::<f64>() / n_used as f64;
            }
            if n_used > 1 {
                let var = errors.iter().map(|e| (e - bias[c]).powi(2)).sum::<f64>() / (n_used - 1) as f64;
                se[c] = Some((var / n_used as f64).sqrt());
            }
        }
        rows.push(BiasRow {
            restriction,
            n_used,
            n_degenerate: fits.iter().filter(|f| matches!(f, ReplicateFit::Degenerate)).count(),
            n_failed: fits.iter().filter(|f| matches!(f, ReplicateFit::Failed)).count(),
            bias,
            se,
        });
    }
    Ok(BiasStudy {
        columns: scenario.true_params.column_names().to_vec(),
        truth,
        n_replicates: scenario.n_replicates,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlackRecord {
    pub scenario: usize,
    pub replicate: usize,
    pub n: usize,
    pub k: usize,
    pub divergence: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub q90: f64,
    pub q95: f64,
    pub fraction_above_one: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    /// `None` for the overflow bin.
    pub right: Option<f64>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlackStudy {
    pub delta: f64,
    pub records: Vec<SlackRecord>,
    pub summary: Summary,
    pub histogram: Vec<HistogramBin>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SlackConfig<T> {
    pub k_values: Vec<usize>,
    pub delta: f64,
    pub histogram_bins: usize,
    /// EM settings; `k` and `seed` are set per fit.
    pub fit: FitConfig<T>,
}

impl<T: Scalar> SlackConfig<T> {
    pub fn new(k_values: Vec<usize>) -> Self {
        Self {
            k_values,
            delta: 0.05,
            histogram_bins: 20,
            fit: FitConfig::new(2, Restriction::NoAlpha),
        }
    }
}

/// Type-7 quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-width bins on `[0, 1)` plus an overflow bin for ratios `>= 1`.
pub fn ratio_histogram(ratios: &[f64], bins: usize) -> Vec<HistogramBin> {
    let bins = bins.max(1);
    let width = 1.0 / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            left: b as f64 * width,
            right: Some((b + 1) as f64 * width),
            count: 0,
        })
        .chain(std::iter::once(HistogramBin {
            left: 1.0,
            right: None,
            count: 0,
        }))
        .collect();
    for &r in ratios {
        let idx = if r >= 1.0 { bins } else { ((r.max(0.0) / width) as usize).min(bins - 1) };
        out[idx].count += 1;
    }
    out
}

pub fn summarize(ratios: &[f64]) -> Summary {
    let mut sorted = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    let count = sorted.len();
    Summary {
        count,
        min: sorted.first().copied().unwrap_or(f64::NAN),
        max: sorted.last().copied().unwrap_or(f64::NAN),
        mean: sorted.iter().sum::<f64>() / count.max(1) as f64,
        median: quantile(&sorted, 0.5),
        q90: quantile(&sorted, 0.9),
        q95: quantile(&sorted, 0.95),
        fraction_above_one: sorted.iter().filter(|&&r| r > 1.0).count() as f64 / count.max(1) as f64,
    }
}

/// For every replicate and `K`, fits the structured model, then divides the
/// divergence of the fitted partition from the true block means by the
/// uniform bound (no multiplicity correction).
pub fn slack_study<T: Scalar>(scenarios: &[SimScenario<T>], cfg: &SlackConfig<T>) -> Result<SlackStudy> {
    if cfg.k_values.is_empty() {
        return Err(Error::InvalidConfig("no K values for the slack study".into()));
    }
    for s in scenarios {
        if s.true_params.k() != 1 || s.true_params.theta().get(0, 0) != T::zero() {
            return Err(Error::InvalidConfig("slack study scenarios must have one class and theta = 0".into()));
        }
    }
    let units: Vec<(usize, usize, usize)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(s, sc)| (0..sc.n_replicates).flat_map(move |r| cfg.k_values.iter().map(move |&k| (s, r, k))))
        .collect();
    let records: Vec<Result<SlackRecord>> = units
        .par_iter()
        .map(|&(s, r, k)| {
            let scenario = &scenarios[s];
            let (g, nodes, p) = generate_with_probabilities(scenario, r)?;
            let x = build_dyad_covariates::<T>(&nodes, DyadScheme::Basic)?;
            slack_record(scenario, s, r, k, &g, &x, p, cfg)
        })
        .collect();
    let records: Vec<SlackRecord> = records.into_iter().collect::<Result<_>>()?;
    let ratios: Vec<f64> = records.iter().map(|r| r.ratio).collect();
    Ok(SlackStudy {
        delta: cfg.delta,
        summary: summarize(&ratios),
        histogram: ratio_histogram(&ratios, cfg.histogram_bins),
        records,
    })
}

#[allow(clippy::too_many_arguments)]
fn slack_record<T: Scalar>(
    scenario: &SimScenario<T>,
    s: usize,
    r: usize,
    k: usize,
    g: &Sociomatrix,
    x: &DyadCovariates<T>,
    p: Vec<T>,
    cfg: &SlackConfig<T>,
) -> Result<SlackRecord> {
    let mut fit_cfg = cfg.fit.clone();
    fit_cfg.k = k;
    fit_cfg.seed = child_seed(scenario.seed, "slack-fit", (r * 1000 + k) as u64);
    let found = fit(g, x, &fit_cfg)?;
    let bp = block_proportions(found.params.z(), g, Some(&EdgeProbabilities::new(p)?))?;
    let reference = bp.pbar.clone().expect("probabilities supplied");
    let divergence = divergence_statistic(&bp, &reference)?.as_f64();
    let bound = uniform_bound(&BoundSpec::new(g.n_nodes(), k, cfg.delta, 1)?);
    Ok(SlackRecord {
        scenario: s,
        replicate: r,
        n: g.n_nodes(),
        k,
        divergence,
        bound,
        ratio: divergence / bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netdata::{dyads, n_dyads};
    use approx::assert_relative_eq;

    fn zero_scenario(n: usize, reps: usize) -> SimScenario<f64> {
        SimScenario::baseline(n, [0.0; 4], CovariateGenerator::synthetic(0.5), reps, 11).unwrap()
    }

    #[test]
    fn zero_parameters_give_half_density() {
        let s = zero_scenario(12, 200);
        let counts: Vec<f64> = (0..200).map(|r| generate_graph(&s, r).unwrap().0.n_edges() as f64).collect();
        let mean = counts.iter().sum::<f64>() / 200.0;
        let expected = n_dyads(12) as f64 / 2.0;
        // Binomial(66, 1/2) mean of 200 draws: sd about 4.06 / sqrt(200).
        let sd = (n_dyads(12) as f64 * 0.25 / 200.0).sqrt();
        assert!((mean - expected).abs() < 3.0 * sd, "mean {mean}");
    }

    #[test]
    fn intercept_sets_density() {
        let s = SimScenario::<f64>::baseline(204, [-2.6, 0.0, 0.0, 0.0], CovariateGenerator::synthetic(0.5), 1, 3).unwrap();
        let (_, nodes, p) = generate_with_probabilities(&s, 0).unwrap();
        assert_eq!(nodes.len(), 204);
        assert!(p.iter().all(|&v| (v - 0.069_138_420_343_346_8).abs() < 1e-12));
    }

    #[test]
    fn generation_is_deterministic() {
        let s = zero_scenario(30, 2);
        let (a, na) = generate_graph(&s, 1).unwrap();
        let (b, nb) = generate_graph(&s, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(na, nb);
        assert_ne!(generate_graph(&s, 0).unwrap().0, a);
    }

    #[test]
    fn histogram_and_quantiles() {
        let h = ratio_histogram(&[0.0, 0.04, 0.05, 0.99, 1.0, 2.0], 20);
        assert_eq!(h.len(), 21);
        assert_eq!(h[0].count, 2);
        assert_eq!(h[1].count, 1);
        assert_eq!(h[19].count, 1);
        assert_eq!(h[20].count, 2);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile(&[5.0], 0.95), 5.0);
    }

    #[test]
    fn single_replicate_has_no_standard_error() {
        let s = SimScenario::<f64>::baseline(40, [-1.0, 0.2, 0.5, -0.5], CovariateGenerator::synthetic(0.5), 1, 5).unwrap();
        let study = bias_study(&s, &[Restriction::Baseline]).unwrap();
        assert_eq!(study.rows[0].n_used, 1);
        assert!(study.rows[0].se.iter().all(Option::is_none));
    }

    #[test]
    fn baseline_bias_is_small() {
        let s = SimScenario::<f64>::baseline(80, [-1.5, 0.2, 0.6, -0.8], CovariateGenerator::synthetic(0.5), 40, 6).unwrap();
        let study = bias_study(&s, &[Restriction::Baseline]).unwrap();
        let row = &study.rows[0];
        assert_eq!(row.n_used + row.n_degenerate + row.n_failed, 40);
        for (b, se) in row.bias.iter().zip(&row.se) {
            assert!(b.abs() <= 4.0 * se.unwrap(), "bias {b} se {se:?}");
        }
    }

    #[test]
    fn true_partition_slack_shrinks_with_n() {
        // Pure two-block model evaluated at its own partition: the divergence
        // is sampling noise, so divergence / bound falls as N grows.
        let ratio_at = |n: usize| {
            let z = Partition::new((0..n).map(|i| i % 2).collect(), 2).unwrap();
            let theta = SymMatrix::from_rows(vec![vec![-0.5, -2.0], vec![-2.0, -0.5]]).unwrap();
            let params = ModelParams::new(z.clone(), theta, None, vec![], vec![]).unwrap();
            let p: Vec<f64> = linear_predictor(&params, &DyadCovariates::empty(n)).unwrap().into_iter().map(logistic).collect();
            let mut total = 0.0;
            for rep in 0..20 {
                let mut rng = substream(rep, "lln", n as u64);
                let flags: Vec<bool> = p.iter().map(|&q| rng.random::<f64>() < q).collect();
                let g = Sociomatrix::from_dyad_flags((0..n).map(|i| i.to_string()).collect(), &flags).unwrap();
                let bp = block_proportions(&z, &g, Some(&EdgeProbabilities::new(p.clone()).unwrap())).unwrap();
                let d = divergence_statistic(&bp, bp.pbar.as_ref().unwrap()).unwrap();
                total += d / uniform_bound(&BoundSpec::new(n, 2, 0.05, 1).unwrap());
            }
            total / 20.0
        };
        let (small, large) = (ratio_at(50), ratio_at(200));
        assert!(large < small, "{large} vs {small}");
        assert!(large < 0.05);
    }

    #[test]
    fn marginal_frequencies_match_probabilities() {
        // Pooled chi-squared goodness of fit on a 6-node graph.
        let s = SimScenario::<f64>::baseline(6, [-0.4, 0.3, 0.5, -0.3], CovariateGenerator::synthetic(0.5), 1, 8).unwrap();
        let reps = 10_000;
        let (mut observed, mut expected) = (0.0, 0.0);
        let mut chi2 = 0.0;
        let mut buckets = vec![(0.0f64, 0.0f64); 10];
        for r in 0..reps {
            let (g, _, p) = generate_with_probabilities(&s, r).unwrap();
            for ((i, j), q) in dyads(6).zip(&p) {
                let b = ((q * 10.0) as usize).min(9);
                let hit = f64::from(u8::from(g.has_edge(i, j)));
                buckets[b].0 += hit;
                buckets[b].1 += q;
                observed += hit;
                expected += q;
            }
        }
        let mut df = 0usize;
        for (o, e) in &buckets {
            if *e > 5.0 {
                chi2 += (o - e).powi(2) / e;
                df += 1;
            }
        }
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let p_value = ChiSquared::new(df as f64).unwrap().sf(chi2);
        assert!(p_value > 0.01, "chi2 {chi2} df {df}");
        assert_relative_eq!(observed / expected, 1.0, epsilon = 0.02);
    }
}
