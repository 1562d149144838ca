use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use blockcert::{DyadScheme, Restriction, Symmetrization};
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod output;

#[derive(Parser, Debug)]
#[command(name = "blockcert", version, about = "Fit covariate-adjusted blockmodels and certify residual block structure")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model by stochastic EM.
    Fit(FitArgs),
    /// Search for residual block structure and compare it against the bound.
    Assess(AssessArgs),
    /// Run a simulation study.
    Simulate(SimulateArgs),
    /// Evaluate the uniform divergence bound.
    Bound(BoundArgs),
    /// Cross-tabulate a fitted partition against a node covariate.
    Crosstab(CrosstabArgs),
}

#[derive(Args, Debug, Clone)]
struct NetworkArgs {
    /// Edge list: one whitespace-separated pair of node ids per line.
    #[arg(long)]
    edges: PathBuf,
    /// Node covariates CSV with columns id, gender, race, grade.
    #[arg(long)]
    covariates: PathBuf,
    /// How directed nominations become undirected edges.
    #[arg(long, default_value = "union", value_parser = parse_from_str::<Symmetrization>)]
    symmetrize: Symmetrization,
}

#[derive(Args, Debug, Clone)]
struct EmArgs {
    #[arg(long, default_value_t = 200)]
    em_iters: usize,
    #[arg(long, default_value_t = 5)]
    sweeps: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    newton_tol: f64,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value = "full", value_parser = parse_from_str::<Restriction>)]
    model: Restriction,
    /// Dyad design: basic or expanded.
    #[arg(long, default_value = "basic", value_parser = parse_from_str::<DyadScheme>)]
    scheme: DyadScheme,
    /// Ridge penalty (default 1e-8, or 0 for the baseline).
    #[arg(long)]
    ridge: Option<f64>,
    #[command(flatten)]
    em: EmArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AssessArgs {
    #[command(flatten)]
    network: NetworkArgs,
    /// Inclusive class-count range, `lo:hi`.
    #[arg(long, default_value = "2:6", value_parser = parse_k_range)]
    k_range: ::std::vec::Vec<usize>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Bonferroni family size, or `auto` for the number of K values.
    #[arg(long, default_value = "auto", value_parser = parse_family_size)]
    bonferroni_m: ::std::option::Option<usize>,
    /// Degree-bin cutpoints, comma separated.
    #[arg(long, default_value = "3,7", value_parser = parse_list::<usize>)]
    degree_cutpoints: ::std::vec::Vec<usize>,
    #[command(flatten)]
    em: EmArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Node ordering by grade then class, as TSV.
    #[arg(long)]
    ordering: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Study {
    Bias,
    Slack,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    study: Study,
    /// Node counts, comma separated.
    #[arg(long, default_value = "204", value_parser = parse_list::<usize>)]
    n: ::std::vec::Vec<usize>,
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    #[arg(long, default_value = "2:6", value_parser = parse_k_range)]
    k_range: ::std::vec::Vec<usize>,
    /// Generating coefficients for intercept, same gender, same race, grade difference.
    #[arg(long, default_value = "-2.6,0.025,0.9,-1.6", allow_hyphen_values = true, value_parser = parse_beta)]
    beta: [f64; 4],
    #[arg(long, default_value_t = 0.5)]
    race_skew: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Model fitted in the slack study.
    #[arg(long, default_value = "no-alpha", value_parser = parse_from_str::<Restriction>)]
    model: Restriction,
    #[command(flatten)]
    em: EmArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Histogram of divergence/bound ratios as TSV (slack study).
    #[arg(long)]
    histogram: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BoundArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 1)]
    bonferroni_m: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CrosstabArgs {
    #[command(flatten)]
    network: NetworkArgs,
    /// Output of `fit`, whose partition is tabulated.
    #[arg(long)]
    fit: PathBuf,
    /// gender, race, grade or degree.
    #[arg(long, default_value = "grade", value_parser = ["gender", "race", "grade", "degree"])]
    by: String,
    #[arg(long, default_value = "3,7", value_parser = parse_list::<usize>)]
    degree_cutpoints: ::std::vec::Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tsv: Option<PathBuf>,
}

fn parse_from_str<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(|part| part.trim().parse().map_err(|_| format!("`{part}` is not a valid value")))
        .collect()
}

/// `lo:hi` (inclusive) or a single value.
fn parse_k_range(s: &str) -> Result<Vec<usize>, String> {
    let (lo, hi) = match s.split_once(':') {
        Some((lo, hi)) => (lo, hi),
        None => (s, s),
    };
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("`{v}` is not a class count"));
    let (lo, hi) = (parse(lo)?, parse(hi)?);
    if lo == 0 || lo > hi {
        return Err(format!("range {lo}:{hi} must satisfy 1 <= lo <= hi"));
    }
    Ok((lo..=hi).collect())
}

fn parse_family_size(s: &str) -> Result<Option<usize>, String> {
    if s == "auto" {
        return Ok(None);
    }
    match s.parse::<usize>() {
        Ok(m) if m >= 1 => Ok(Some(m)),
        _ => Err(format!("`{s}` is neither `auto` nor a positive integer")),
    }
}

fn parse_beta(s: &str) -> Result<[f64; 4], String> {
    let values = parse_list::<f64>(s)?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 4 coefficients, got {}", v.len()))
}

fn report(err: &blockcert::Error) {
    let color = std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty()) && std::io::stderr().is_terminal();
    let label = format!("error[{}]", err.module());
    if color {
        eprintln!("\x1b[1;31m{label}\x1b[0m: {err}");
    } else {
        eprintln!("{label}: {err}");
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("warning: could not configure {threads} threads: {e}");
        }
    }
    let result = match cli.command {
        Command::Fit(args) => commands::fit(args),
        Command::Assess(args) => commands::assess(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Bound(args) => commands::bound(args),
        Command::Crosstab(args) => commands::crosstab(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(1)
        }
    }
}
