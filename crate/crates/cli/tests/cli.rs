use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use blockcert::simstudy::{generate_graph, CovariateGenerator, SimScenario};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_blockcert"));
    cmd.env("NO_COLOR", "1");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn schema_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"))
}

fn validate(doc: &Value, schema: &str) {
    let schema: Value = serde_json::from_str(&fs::read_to_string(schema_path(schema)).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "schema violations: {errors:#?}");
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

struct Network {
    _dir: TempDir,
    edges: PathBuf,
    covariates: PathBuf,
}

impl Network {
    fn args(&self) -> Vec<String> {
        vec![
            "--edges".into(),
            self.edges.display().to_string(),
            "--covariates".into(),
            self.covariates.display().to_string(),
        ]
    }
}

fn write_network(edges: &str, covariates: &str) -> Network {
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("edges.txt");
    let c = dir.path().join("covariates.csv");
    fs::write(&e, edges).unwrap();
    fs::write(&c, covariates).unwrap();
    Network { _dir: dir, edges: e, covariates: c }
}

fn toy() -> Network {
    write_network(
        "a b\nb c\nc d\na d\n",
        "id,gender,race,grade\na,F,white,7\nb,F,black,8\nc,M,white,8\nd,M,black,9\n",
    )
}

fn simulated(n: usize, seed: u64) -> Network {
    let scenario = SimScenario::<f64>::baseline(n, [-1.5, 0.2, 0.8, -0.8], CovariateGenerator::synthetic(0.5), 1, seed).unwrap();
    let (g, nodes) = generate_graph(&scenario, 0).unwrap();
    let ids = g.node_ids();
    let edges: String = g.edges().iter().map(|&(i, j)| format!("{} {}\n", ids[i], ids[j])).collect();
    let mut covs = String::from("id,gender,race,grade\n");
    for i in 0..n {
        covs.push_str(&format!("{},{},{},{}\n", ids[i], nodes.gender()[i], nodes.race()[i], nodes.grade()[i]));
    }
    write_network(&edges, &covs)
}

fn with(base: &[String], extra: &[&str]) -> Vec<String> {
    base.iter().cloned().chain(extra.iter().map(|s| s.to_string())).collect()
}

fn run_owned(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    run(&refs)
}

#[test]
fn bound_prints_raw_and_normalized() {
    let doc = stdout_json(&run(&["bound", "--n", "204", "--k", "2", "--delta", "0.05"]));
    validate(&doc, "bound");
    let raw = doc["result"]["bound"].as_f64().unwrap();
    assert_eq!(format!("{raw:.2}"), "172.21");
    let normalized = doc["result"]["normalized_bound"].as_f64().unwrap();
    assert!((normalized - raw / 20706.0).abs() < 1e-15);
    assert_eq!(doc["manifest"]["command"], "bound");
}

#[test]
fn baseline_fit_on_toy_network() {
    let net = toy();
    let doc = stdout_json(&run_owned(&fit_args(&net, &["--model", "baseline"])));
    validate(&doc, "fit");
    let params = &doc["result"]["params"];
    assert_eq!(params["k"], 1);
    assert_eq!(params["theta"], serde_json::json!([[0.0]]));
    assert!(params.get("alpha").is_none());
    assert_eq!(params["z"], serde_json::json!([1, 1, 1, 1]));
    let digests = doc["manifest"]["input_digests"].as_object().unwrap();
    assert_eq!(digests.len(), 2);
}

fn fit_args(net: &Network, extra: &[&str]) -> Vec<String> {
    let mut v = vec!["fit".to_string()];
    v.extend(with(&net.args(), extra));
    v
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["bound", "--n", "10"]).status.code(), Some(2));
    assert_eq!(run(&["fit", "--model", "nonsense", "--edges", "x", "--covariates", "y"]).status.code(), Some(2));
    assert_eq!(run(&["assess", "--k-range", "5:2", "--edges", "x", "--covariates", "y"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_one_and_name_the_module() {
    let out = run(&["fit", "--edges", "/nonexistent/e.txt", "--covariates", "/nonexistent/c.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error[netdata]"), "{stderr}");
    assert!(!stderr.contains('\x1b'));

    let out = run(&["bound", "--n", "10", "--k", "2", "--delta", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[confidence]"));

    let bad = write_network("a z\n", "id,gender,race,grade\na,F,white,7\nb,M,white,8\n");
    let out = run_owned(&fit_args(&bad, &[]));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`z`"));
}

#[test]
fn degenerate_fit_is_a_finding() {
    let net = toy();
    let out = run_owned(&fit_args(&net, &["--model", "baseline"]));
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    assert!(doc["result"]["degenerate"].is_boolean());
}

#[test]
fn fit_is_deterministic_and_schema_valid() {
    let net = simulated(40, 3);
    let args = fit_args(&net, &["--k", "2", "--model", "no-alpha", "--em-iters", "8", "--restarts", "2", "--seed", "11"]);
    let first = run_owned(&args);
    let second = run_owned(&args);
    assert_eq!(first.stdout, second.stdout);
    validate(&stdout_json(&first), "fit");

    let other = run_owned(&fit_args(&net, &["--k", "2", "--model", "no-alpha", "--em-iters", "8", "--restarts", "2", "--seed", "12"]));
    assert_ne!(first.stdout, other.stdout);
}

#[test]
fn threads_flag_does_not_change_output() {
    let net = simulated(30, 4);
    let mut one = vec!["--threads".to_string(), "1".to_string()];
    one.extend(fit_args(&net, &["--k", "3", "--em-iters", "5", "--restarts", "3"]));
    let many = fit_args(&net, &["--k", "3", "--em-iters", "5", "--restarts", "3"]);
    assert_eq!(run_owned(&one).stdout, run_owned(&many).stdout);
}

#[test]
fn assess_reports_every_k_with_default_family_size() {
    let net = simulated(40, 5);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let ordering = dir.path().join("ordering.tsv");
    let mut args = vec!["assess".to_string()];
    args.extend(with(
        &net.args(),
        &[
            "--k-range",
            "2:6",
            "--em-iters",
            "4",
            "--restarts",
            "1",
            "--out",
            out.to_str().unwrap(),
            "--ordering",
            ordering.to_str().unwrap(),
        ],
    ));
    let status = run_owned(&args);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    validate(&doc, "assess");
    let reports = doc["result"]["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 5);
    for (report, k) in reports.iter().zip(2..) {
        assert_eq!(report["k"], k);
        assert_eq!(report["bonferroni_m"], 5);
    }

    let tsv = fs::read_to_string(&ordering).unwrap();
    let mut lines = tsv.lines();
    assert_eq!(lines.next(), Some("k\trank\tnode\tgrade\tclass"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 5 * 40);
    for pair in rows.windows(2).filter(|w| w[0][0] == w[1][0]) {
        let key = |r: &Vec<&str>| (r[3].parse::<i32>().unwrap(), r[4].parse::<usize>().unwrap());
        assert!(key(&pair[0]) <= key(&pair[1]));
    }
}

#[test]
fn crosstab_reads_a_fit() {
    let net = simulated(40, 6);
    let dir = tempfile::tempdir().unwrap();
    let fit_out = dir.path().join("fit.json");
    let tsv = dir.path().join("table.tsv");
    let status = run_owned(&fit_args(&net, &["--k", "2", "--em-iters", "4", "--restarts", "1", "--out", fit_out.to_str().unwrap()]));
    assert!(status.status.success());
    for by in ["gender", "race", "grade", "degree"] {
        let mut args = vec!["crosstab".to_string()];
        args.extend(with(&net.args(), &["--fit", fit_out.to_str().unwrap(), "--by", by, "--tsv", tsv.to_str().unwrap()]));
        let doc = stdout_json(&run_owned(&args));
        validate(&doc, "crosstab");
        let total: u64 = doc["result"]["crosstab"]["counts"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|row| row.as_array().unwrap().iter().map(|c| c.as_u64().unwrap()))
            .sum();
        assert_eq!(total, 40);
        assert!(fs::read_to_string(&tsv).unwrap().starts_with(&format!("class\t{by}\tcount\n")));
        assert_eq!(doc["manifest"]["input_digests"].as_object().unwrap().len(), 3);
    }
}

#[test]
fn simulate_outputs_validate() {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("hist.tsv");
    let slack = stdout_json(&run(&[
        "simulate", "--study", "slack", "--n", "30", "--replicates", "2", "--k-range", "2:3", "--em-iters", "4",
        "--restarts", "1", "--histogram", hist.to_str().unwrap(),
    ]));
    validate(&slack, "simulate");
    assert_eq!(slack["result"]["slack"]["records"].as_array().unwrap().len(), 4);
    let tsv = fs::read_to_string(&hist).unwrap();
    assert!(tsv.starts_with("bin_left\tbin_right\tcount\n"));
    let counted: usize = tsv.lines().skip(1).map(|l| l.rsplit('\t').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(counted, 4);

    let bias = stdout_json(&run(&["simulate", "--study", "bias", "--n", "30", "--replicates", "2", "--seed", "1"]));
    validate(&bias, "simulate");
    let rows = bias["result"]["scenarios"][0]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["restriction"], "baseline");
}

#[test]
fn schemas_reject_malformed_documents() {
    let mut doc = stdout_json(&run(&["bound", "--n", "20", "--k", "3"]));
    doc["result"]["bound"] = Value::String("large".into());
    let schema: Value = serde_json::from_str(&fs::read_to_string(schema_path("bound")).unwrap()).unwrap();
    assert!(!jsonschema::is_valid(&schema, &doc));
}
