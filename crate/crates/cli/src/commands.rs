use std::fs;

use blockcert::assess::{assess_network, crosstab as tabulate, AssessConfig, Crosstab};
use blockcert::confidence::{uniform_bound, BoundSpec};
use blockcert::netdata::{build_dyad_covariates, compute_degree_bins, load_network, n_dyads, DEFAULT_DEGREE_CUTPOINTS};
use blockcert::simstudy::{bias_study, slack_study, CovariateGenerator, SimScenario, SlackConfig};
use blockcert::{fit as fit_model, DyadScheme, Error, FitConfig, ModelParams, NodeCovariates, Restriction, Result, Sociomatrix};
use serde::Serialize;
use serde_json::{json, Value};

use crate::output::{emit, write_tsv, RunManifest};
use crate::{AssessArgs, BoundArgs, CrosstabArgs, EmArgs, FitArgs, NetworkArgs, SimulateArgs, Study};

fn em_config(em: &EmArgs, k: usize, restriction: Restriction) -> FitConfig<f64> {
    let mut cfg = FitConfig::new(k, restriction).with_seed(em.seed);
    cfg.max_em_iters = em.em_iters;
    cfg.gibbs_sweeps_per_estep = em.sweeps;
    cfg.n_restarts = em.restarts;
    cfg.newton_tol = em.newton_tol;
    cfg
}

fn em_json(em: &EmArgs) -> Value {
    json!({
        "em_iters": em.em_iters,
        "sweeps": em.sweeps,
        "restarts": em.restarts,
        "seed": em.seed,
        "newton_tol": em.newton_tol,
    })
}

fn network_json(net: &NetworkArgs) -> Value {
    json!({
        "edges": net.edges.display().to_string(),
        "covariates": net.covariates.display().to_string(),
        "symmetrize": net.symmetrize,
    })
}

fn load(net: &NetworkArgs, manifest: &mut RunManifest) -> Result<(Sociomatrix, NodeCovariates)> {
    manifest.add_input("edges", &net.edges)?;
    manifest.add_input("covariates", &net.covariates)?;
    load_network(&net.edges, &net.covariates, net.symmetrize)
}

pub fn fit(args: FitArgs) -> Result<()> {
    let mut cfg = em_config(&args.em, args.k, args.model);
    if let Some(ridge) = args.ridge {
        cfg.ridge = ridge;
    }
    cfg.validate()?;
    let config = json!({
        "network": network_json(&args.network),
        "k": cfg.k,
        "model": args.model,
        "scheme": args.scheme,
        "ridge": cfg.ridge,
        "em": em_json(&args.em),
    });
    let mut manifest = RunManifest::new("fit", config, args.em.seed);
    let (g, mut nodes) = load(&args.network, &mut manifest)?;
    if args.scheme == DyadScheme::Expanded {
        nodes.set_degree_bins(compute_degree_bins(&g, &DEFAULT_DEGREE_CUTPOINTS)?)?;
    }
    let x = build_dyad_covariates::<f64>(&nodes, args.scheme)?;
    let result = fit_model(&g, &x, &cfg)?;
    emit(&manifest, &result, args.out.as_deref())
}

pub fn assess(args: AssessArgs) -> Result<()> {
    let mut cfg = AssessConfig::<f64>::new(args.k_range.clone());
    cfg.delta = args.delta;
    cfg.bonferroni_m = args.bonferroni_m;
    cfg.degree_cutpoints = args.degree_cutpoints.clone();
    cfg.search = em_config(&args.em, 2, Restriction::NoAlpha);
    let config = json!({
        "network": network_json(&args.network),
        "k_values": cfg.k_values,
        "delta": cfg.delta,
        "bonferroni_m": cfg.family_size(),
        "degree_cutpoints": cfg.degree_cutpoints,
        "em": em_json(&args.em),
    });
    let mut manifest = RunManifest::new("assess", config, args.em.seed);
    let (g, nodes) = load(&args.network, &mut manifest)?;
    let result = assess_network(&g, &nodes, &cfg)?;

    if let Some(path) = &args.ordering {
        let mut rows = Vec::new();
        for report in &result.reports {
            let mut order: Vec<usize> = (0..g.n_nodes()).collect();
            order.sort_by_key(|&i| (nodes.grade()[i], report.partition[i], i));
            for (rank, &i) in order.iter().enumerate() {
                rows.push(vec![
                    report.k.to_string(),
                    (rank + 1).to_string(),
                    g.node_ids()[i].clone(),
                    nodes.grade()[i].to_string(),
                    report.partition[i].to_string(),
                ]);
            }
        }
        write_tsv(path, &["k", "rank", "node", "grade", "class"], &rows)?;
    }
    emit(&manifest, &result, args.out.as_deref())
}

#[derive(Serialize)]
struct BiasOutput {
    n: usize,
    #[serde(flatten)]
    study: blockcert::simstudy::BiasStudy,
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let generator = CovariateGenerator::synthetic(args.race_skew);
    generator.validate()?;
    let scenarios = args
        .n
        .iter()
        .enumerate()
        .map(|(s, &n)| {
            let seed = blockcert::rng::child_seed(args.em.seed, "scenario", s as u64);
            SimScenario::<f64>::baseline(n, args.beta, generator.clone(), args.replicates, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut config = json!({
        "study": match args.study { Study::Bias => "bias", Study::Slack => "slack" },
        "n": args.n,
        "replicates": args.replicates,
        "beta": args.beta,
        "race_skew": args.race_skew,
    });
    let manifest_config = |extra: Value, config: &mut Value| {
        if let (Value::Object(base), Value::Object(more)) = (config, extra) {
            base.extend(more);
        }
    };
    match args.study {
        Study::Bias => {
            let restrictions = [Restriction::Baseline, Restriction::Full];
            manifest_config(json!({ "restrictions": restrictions }), &mut config);
            let manifest = RunManifest::new("simulate", config, args.em.seed);
            let studies = scenarios
                .iter()
                .map(|sc| bias_study(sc, &restrictions).map(|study| BiasOutput { n: sc.n_nodes, study }))
                .collect::<Result<Vec<_>>>()?;
            emit(&manifest, &json!({ "study": "bias", "scenarios": studies }), args.out.as_deref())
        }
        Study::Slack => {
            let mut cfg = SlackConfig::<f64>::new(args.k_range.clone());
            cfg.delta = args.delta;
            cfg.fit = em_config(&args.em, 2, args.model);
            cfg.fit.validate()?;
            manifest_config(
                json!({
                    "k_values": cfg.k_values,
                    "delta": cfg.delta,
                    "model": args.model,
                    "histogram_bins": cfg.histogram_bins,
                    "em": em_json(&args.em),
                }),
                &mut config,
            );
            let manifest = RunManifest::new("simulate", config, args.em.seed);
            let study = slack_study(&scenarios, &cfg)?;
            if let Some(path) = &args.histogram {
                let rows: Vec<Vec<String>> = study
                    .histogram
                    .iter()
                    .map(|b| {
                        vec![
                            b.left.to_string(),
                            b.right.map_or_else(|| "inf".to_string(), |r| r.to_string()),
                            b.count.to_string(),
                        ]
                    })
                    .collect();
                write_tsv(path, &["bin_left", "bin_right", "count"], &rows)?;
            }
            emit(&manifest, &json!({ "study": "slack", "slack": study }), args.out.as_deref())
        }
    }
}

pub fn bound(args: BoundArgs) -> Result<()> {
    let spec = BoundSpec::new(args.n, args.k, args.delta, args.bonferroni_m)?;
    let raw = uniform_bound(&spec);
    let dyads = n_dyads(args.n);
    if dyads == 0 {
        return Err(Error::InvalidInput("normalization needs at least two nodes".into()));
    }
    let config = json!({
        "n": args.n,
        "k": args.k,
        "delta": args.delta,
        "bonferroni_m": args.bonferroni_m,
    });
    let manifest = RunManifest::new("bound", config, 0);
    let result = json!({
        "n": args.n,
        "k": args.k,
        "delta": args.delta,
        "bonferroni_m": args.bonferroni_m,
        "bound": raw,
        "normalized_bound": raw / dyads as f64,
    });
    if args.out.is_some() {
        println!("bound {raw:.2} normalized {:.6}", raw / dyads as f64);
    }
    emit(&manifest, &result, args.out.as_deref())
}

fn read_partition(path: &std::path::Path) -> Result<ModelParams<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("{}: not JSON: {e}", path.display())))?;
    let params = doc
        .pointer("/result/params")
        .or_else(|| doc.get("params"))
        .unwrap_or(&doc)
        .clone();
    serde_json::from_value(params)
        .map_err(|e| Error::InvalidInput(format!("{}: no fitted parameters: {e}", path.display())))
}

pub fn crosstab(args: CrosstabArgs) -> Result<()> {
    let config = json!({
        "network": network_json(&args.network),
        "fit": args.fit.display().to_string(),
        "by": args.by,
        "degree_cutpoints": args.degree_cutpoints,
    });
    let mut manifest = RunManifest::new("crosstab", config, 0);
    let (g, nodes) = load(&args.network, &mut manifest)?;
    manifest.add_input("fit", &args.fit)?;
    let params = read_partition(&args.fit)?;
    if params.n_nodes() != g.n_nodes() {
        return Err(Error::DimensionMismatch {
            context: "partition",
            expected: g.n_nodes(),
            found: params.n_nodes(),
        });
    }
    let z = params.z();
    let table: Crosstab = match args.by.as_str() {
        "grade" => tabulate(z, nodes.grade())?,
        "degree" => tabulate(z, &compute_degree_bins(&g, &args.degree_cutpoints)?)?,
        "gender" => tabulate(z, nodes.gender())?,
        "race" => tabulate(z, nodes.race())?,
        other => return Err(Error::UnknownCovariate(other.to_string())),
    };
    if let Some(path) = &args.tsv {
        let mut rows = Vec::new();
        for (class, counts) in table.counts.iter().enumerate() {
            for (level, count) in table.levels.iter().zip(counts) {
                rows.push(vec![(class + 1).to_string(), level.clone(), count.to_string()]);
            }
        }
        write_tsv(path, &["class", &args.by, "count"], &rows)?;
    }
    let result = json!({ "by": args.by, "k": z.k(), "crosstab": table });
    emit(&manifest, &result, args.out.as_deref())
}
