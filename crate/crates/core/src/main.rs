use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use elliptest::ellip::{pairwise_test, run_test, TestConfig, VarianceMode};
use elliptest::entropy::{choose_k, entropy_estimate, WeightRule};
use elliptest::error::{Error, Result};
use elliptest::io::read_csv;
use elliptest::matrix_ops::SymMatrix;
use elliptest::simharness::{emit_table, run_grid_with_progress, ExperimentGrid, Format};

const SCHEMA_VERSION: u32 = 1;
const EXIT_REJECT: u8 = 3;
const FAST_B: usize = 25;

#[derive(Parser)]
#[command(name = "elliptest", version, about = "KL-divergence test of elliptical symmetry")]
struct Cli {
    /// Print progress to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test one dataset. Exit code 0 = not rejected, 3 = rejected, 1 = error.
    Test(TestArgs),
    /// Run a simulation grid from a TOML config.
    Simulate(SimulateArgs),
    /// Weighted kNN entropy estimate of the rows of a CSV file.
    Entropy(EntropyArgs),
    /// Test every pair of columns with a Bonferroni-adjusted level.
    /// Exit code 3 when any pair is rejected.
    Pairwise(PairwiseArgs),
}

#[derive(Args, Clone)]
struct TestFlags {
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Resamples for the bias estimate (0 disables it).
    #[arg(long = "b", default_value_t = 100)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Neighbor depth for H(Y).
    #[arg(long)]
    k_p: Option<usize>,
    /// Neighbor depth for H(U).
    #[arg(long = "k-1")]
    k_1: Option<usize>,
    /// auto, uniform, l2, or a comma-separated list.
    #[arg(long, default_value = "auto")]
    weights_p: String,
    #[arg(long = "weights-1", default_value = "uniform")]
    weights_1: String,
    /// Kernel bandwidth for the radius density (default n^{-1/5}).
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, value_enum, default_value_t = VarianceArg::Inflation)]
    variance_mode: VarianceArg,
    /// Exponent c of the n^{-c} term in plug-in variance mode.
    #[arg(long, default_value_t = 0.5)]
    c_exponent: f64,
    /// Add seeded Uniform(-eps, eps) noise to break ties.
    #[arg(long)]
    jitter: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VarianceArg {
    Inflation,
    Plugin,
}

#[derive(Args)]
struct TestArgs {
    input: PathBuf,
    /// Hypothesized mean, comma-separated; requires --sigma.
    #[arg(long, requires = "sigma")]
    mu: Option<String>,
    /// Hypothesized covariance, p*p entries row-major, comma-separated.
    #[arg(long, requires = "mu")]
    sigma: Option<String>,
    #[command(flatten)]
    flags: TestFlags,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the replication count.
    #[arg(long)]
    reps: Option<usize>,
    /// Use 25 resamples for the bias estimate.
    #[arg(long)]
    fast: bool,
    /// Record per-cell wall time (output is then no longer reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Markdown,
}

#[derive(Args)]
struct EntropyArgs {
    input: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    /// auto, uniform, l2, or a comma-separated list.
    #[arg(long, default_value = "auto")]
    weights: String,
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PairwiseArgs {
    input: PathBuf,
    #[command(flatten)]
    flags: TestFlags,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("{what}: `{}` is not a number", t.trim())))
        })
        .collect()
}

fn parse_weights(s: &str) -> Result<WeightRule> {
    match s.to_ascii_lowercase().as_str() {
        "auto" => Ok(WeightRule::Auto),
        "uniform" => Ok(WeightRule::Uniform),
        "l2" | "l2-optimal" | "l2_optimal" => Ok(WeightRule::L2Optimal),
        _ => Ok(WeightRule::Custom(parse_list(s, "weights")?)),
    }
}

impl TestFlags {
    fn config(&self) -> Result<TestConfig> {
        let cfg = TestConfig {
            k_p: self.k_p,
            k_1: self.k_1,
            weights_p: parse_weights(&self.weights_p)?,
            weights_1: parse_weights(&self.weights_1)?,
            bandwidth: self.bandwidth,
            b: self.b,
            alpha: self.alpha,
            c_exponent: self.c_exponent,
            variance_mode: match self.variance_mode {
                VarianceArg::Inflation => VarianceMode::Inflation,
                VarianceArg::Plugin => VarianceMode::Plugin,
            },
            seed: self.seed,
            jitter: self.jitter,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    s.push('\n');
    write_out(path, &s)
}

fn cmd_test(a: &TestArgs) -> Result<u8> {
    let cfg = a.flags.config()?;
    let table = read_csv(&a.input)?;
    let x = table.data;
    let known = match (&a.mu, &a.sigma) {
        (Some(mu), Some(sigma)) => {
            let mu = parse_list(mu, "mu")?;
            let entries = parse_list(sigma, "sigma")?;
            let p = mu.len();
            if p != x.ncols() || entries.len() != p * p {
                return Err(Error::InvalidInput(format!(
                    "data has {} columns; --mu needs that many entries and --sigma their square",
                    x.ncols()
                )));
            }
            Some((mu, SymMatrix::from_row_slice(p, &entries)?))
        }
        _ => None,
    };
    let result = run_test(&x, known.as_ref().map(|(m, s)| (m.as_slice(), s)), &cfg)?;
    let reject = result.reject;
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "test",
        "input": a.input.display().to_string(),
        "columns": table.header,
        "config": cfg,
        "known_moments": known.as_ref().map(|(m, s)| json!({ "mu": m, "sigma": s.to_row_major() })),
        "result": result,
    });
    write_json(a.output.as_deref(), &report)?;
    Ok(if reject { EXIT_REJECT } else { 0 })
}

fn cmd_simulate(a: &SimulateArgs, verbose: bool) -> Result<u8> {
    let text = std::fs::read_to_string(&a.config)?;
    let mut grid: ExperimentGrid = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(seed) = a.seed {
        grid.base_seed = Some(seed);
    }
    if let Some(reps) = a.reps {
        grid.reps = reps;
    }
    if a.fast {
        grid.b = FAST_B;
    }
    grid.validate()?;
    let table = run_grid_with_progress(&grid, a.timing, |r| {
        if verbose {
            eprintln!(
                "setting {} n={} p={} s={}: {}/{} rejected ({} failed)",
                r.setting, r.n, r.p, r.s, r.reject_count, r.reps, r.failed
            );
        }
    })?;
    let format = match a.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
        FormatArg::Markdown => Format::Markdown,
    };
    write_out(a.output.as_deref(), &emit_table(&table, format))?;
    Ok(0)
}

fn cmd_entropy(a: &EntropyArgs) -> Result<u8> {
    let table = read_csv(&a.input)?;
    let x = match a.jitter {
        Some(eps) if eps > 0.0 && eps.is_finite() => elliptest::ellip::jitter(&table.data, eps, a.seed),
        Some(eps) => return Err(Error::InvalidInput(format!("jitter must be positive, got {eps}"))),
        None => table.data,
    };
    let (n, d) = (x.nrows(), x.ncols());
    let k = a.k.unwrap_or_else(|| choose_k(d, n));
    let resolved = parse_weights(&a.weights)?.resolve(k, d)?;
    let est = entropy_estimate(&x, &resolved.weights)?;
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "entropy",
        "input": a.input.display().to_string(),
        "n": n,
        "d": d,
        "h_hat": est.h_hat,
        "k": k,
        "weights_rule": a.weights,
        "weights": resolved.weights.w,
        "weights_fell_back_to_uniform": resolved.fell_back_to_uniform,
        "jitter": a.jitter,
        "seed": a.seed,
    });
    write_json(a.output.as_deref(), &report)?;
    Ok(0)
}

fn cmd_pairwise(a: &PairwiseArgs) -> Result<u8> {
    let cfg = a.flags.config()?;
    let table = read_csv(&a.input)?;
    let report = pairwise_test(&table.data, &cfg)?;
    let any = report.rejections > 0;
    let out = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "pairwise",
        "input": a.input.display().to_string(),
        "columns": table.header,
        "config": cfg,
        "report": report,
    });
    write_json(a.output.as_deref(), &out)?;
    Ok(if any { EXIT_REJECT } else { 0 })
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ELLIPTEST_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("ELLIPTEST_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let run = || -> Result<u8> {
        init_threads()?;
        match &cli.command {
            Command::Test(a) => cmd_test(a),
            Command::Simulate(a) => cmd_simulate(a, cli.verbose > 0),
            Command::Entropy(a) => cmd_entropy(a),
            Command::Pairwise(a) => cmd_pairwise(a),
        }
    };
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
