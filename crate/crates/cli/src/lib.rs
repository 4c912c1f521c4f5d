//! Command-line front end for the replication harness.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qpost_core::harness::{
    build_model, find_mode, laplace_proposal, manifest_json, posterior_target, pseudo_true, replications_csv,
    run_replications, simulate, summary_csv, Experiment, ExperimentConfig, Method, ReplicationSummary, SUMMARY_HEADER,
};
use qpost_core::sampler::{chain_summary, rwmh_sample, SamplerConfig};
use qpost_core::Error;

pub const VERSION: &str = concat!("qpost ", env!("CARGO_PKG_VERSION"));

const OUTPUT_HELP: &str = "\
Outputs (under --out-dir):
  <experiment>_summary.csv       param,bias,avg_post_var,mse,avg_post_sd,coverage,n_reps
                                 one row per method and parameter, param named method.param
  <experiment>_manifest.json     config, seeds, failures, wall_time_s, version
  <experiment>_replications.csv  with --per-rep: method,rep,seed,param,post_mean,post_var,covered,acceptance_rate

Config files hold one `key = value` per line; `#` starts a comment.
Exit codes: 0 success, 1 degraded run or runtime failure, 2 usage or config error.";

#[derive(Debug, Parser)]
#[command(name = "qpost", version, about = "Q-posterior replication studies", after_help = OUTPUT_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Known-variance normal mean (conjugate check).
    Gaussian(RunArgs),
    /// Heteroskedastic linear regression.
    Linreg(RunArgs),
    /// Overdispersed Poisson regression.
    Poisson(RunArgs),
    /// Median via a smoothed rank loss.
    Median(RunArgs),
    /// ARFIMA(2,d,1) Whittle likelihood.
    Whittle(RunArgs),
    /// Conway–Maxwell–Poisson by discrete Fisher divergence.
    Cmp(RunArgs),
    /// Normal location by kernel Stein discrepancy.
    Ksd(RunArgs),
    /// Normal location-scale by Tukey's loss.
    Tukey(RunArgs),
    /// One dataset and one posterior chain.
    Sample {
        experiment: String,
        /// q, gibbs_w<omega> or gibbs_psihat.
        #[arg(long, default_value = "q")]
        method: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Loss minimizer on one large simulated dataset.
    PseudoTrue {
        experiment: String,
        #[arg(long, default_value_t = 1_000_000)]
        big_n: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Prints summary CSV files as an aligned table.
    Table { files: Vec<PathBuf> },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, default_value = "qpost-out")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated methods; defaults to the Q-posterior and the experiment's comparators.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Also write per-replication results.
    #[arg(long)]
    pub per_rep: bool,
}

/// A config problem, with the offending line when it came from a file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn split_pair(s: &str) -> Option<(&str, &str)> {
    let (k, v) = s.split_once('=')?;
    let (k, v) = (k.trim(), v.trim());
    (!k.is_empty() && !v.is_empty()).then_some((k, v))
}

/// Defaults, then `text` (`key = value` lines, `#` comments), then `overrides`.
pub fn parse_config(experiment: Experiment, text: &str, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::new(experiment);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ConfigError { line: Some(i + 1), message };
        let (k, v) = split_pair(line).ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        cfg.set(k, v).map_err(|e| err(strip_prefix(e)))?;
    }
    for o in overrides {
        let (k, v) = split_pair(o).ok_or_else(|| ConfigError { line: None, message: format!("expected KEY=VALUE, got `{o}`") })?;
        cfg.set(k, v).map_err(|e| ConfigError { line: None, message: strip_prefix(e) })?;
    }
    cfg.validate().map_err(|e| ConfigError { line: None, message: strip_prefix(e) })?;
    Ok(cfg)
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::InvalidArgument(m) => m,
        other => other.to_string(),
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Degraded(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::ExperimentDegraded { .. } => Failure::Degraded(e.to_string()),
            Error::InvalidArgument(_) | Error::OddSampleRequired(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(experiment: Experiment, common: &CommonArgs) -> Result<ExperimentConfig, Failure> {
    let text = match &common.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut overrides = common.set.clone();
    if let Some(s) = common.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(w) = common.workers {
        overrides.push(format!("workers={w}"));
    }
    Ok(parse_config(experiment, &text, &overrides)?)
}

fn experiment_arg(s: &str) -> Result<Experiment, Failure> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
        Failure::Config(format!("unknown experiment '{s}'; expected one of {}", names.join(", ")))
    })
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    fs::write(&p, body)?;
    Ok(p)
}

fn run_study(experiment: Experiment, args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_config(experiment, &args.common)?;
    let methods: Vec<Method> = if args.methods.is_empty() {
        experiment.methods()
    } else {
        args.methods.iter().map(|m| m.parse::<Method>()).collect::<Result<_, _>>()?
    };
    for m in &methods {
        cfg.clone().with_method(*m).validate()?;
    }
    let mut runs: Vec<ReplicationSummary> = Vec::new();
    let mut degraded = None;
    for m in methods {
        match run_replications(&cfg.clone().with_method(m)) {
            Ok(s) => runs.push(s),
            Err(e @ Error::ExperimentDegraded { .. }) => {
                eprintln!("{}: {e}", m.label());
                degraded.get_or_insert(e);
            }
            Err(e) => return Err(e.into()),
        }
    }
    let refs: Vec<&ReplicationSummary> = runs.iter().collect();
    let dir = &args.common.out_dir;
    let csv = summary_csv(&refs);
    let summary = write(dir, &format!("{experiment}_summary.csv"), &csv)?;
    write(dir, &format!("{experiment}_manifest.json"), &manifest_json(&cfg, &refs, VERSION))?;
    if args.per_rep {
        let body: String = refs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let t = replications_csv(s);
                if i == 0 { t } else { t.lines().skip(1).map(|l| format!("{l}\n")).collect() }
            })
            .collect();
        write(dir, &format!("{experiment}_replications.csv"), &body)?;
    }
    print!("{}", render_table(&csv));
    eprintln!("wrote {}", summary.display());
    match degraded {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn run_sample(experiment: &str, method: &str, common: &CommonArgs) -> Result<(), Failure> {
    let experiment = experiment_arg(experiment)?;
    let method: Method = method.parse()?;
    let cfg = load_config(experiment, common)?.with_method(method);
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.base_seed);
    let data = simulate(&cfg, cfg.n, &mut rng)?;
    let model = build_model(&cfg, method, &data, &mut rng)?;
    let target = posterior_target(model.as_ref(), method);
    let init = find_mode(model.as_ref(), &target);
    let proposal = laplace_proposal(&target, &init);
    let sc = SamplerConfig::new(init, cfg.n_iters, cfg.burn_in, rng.random()).with_proposal(proposal);
    let chain = rwmh_sample(&target, &sc)?.map_draws(|t| model.to_reported(t))?;
    let names = model.param_names();
    let dir = &common.out_dir;
    write(dir, &format!("{experiment}_data.csv"), &data.to_csv())?;
    let path = write(dir, &format!("{experiment}_{}_chain.csv", method.label()), &chain.to_csv(&names))?;
    let s = chain_summary(&chain, cfg.alpha)?;
    println!("param,mean,variance,ci_lower,ci_upper");
    for (j, n) in names.iter().enumerate() {
        println!("{n},{},{},{},{}", s.mean[j], s.variance[j], s.ci_lower[j], s.ci_upper[j]);
    }
    println!("acceptance_rate,{}", chain.acceptance_rate);
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run_pseudo_true(experiment: &str, big_n: usize, common: &CommonArgs) -> Result<(), Failure> {
    let experiment = experiment_arg(experiment)?;
    let cfg = load_config(experiment, common)?;
    let r = pseudo_true(&cfg, big_n, cfg.base_seed)?;
    let body = serde_json::to_string_pretty(&r).map_err(|e| Failure::Runtime(e.to_string()))?;
    let path = write(&common.out_dir, &format!("{experiment}_pseudo_true.json"), &body)?;
    println!("{body}");
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// Right-aligned columns for a summary CSV.
pub fn render_table(csv: &str) -> String {
    let rows: Vec<Vec<&str>> = csv.lines().filter(|l| !l.is_empty()).map(|l| l.split(',').collect()).collect();
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let cell = |r: &[&str], j: usize| -> String {
        let s = r.get(j).copied().unwrap_or("");
        match s.parse::<f64>() {
            Ok(v) if s.contains('.') || s.contains('e') => format!("{v:.4}"),
            _ => s.to_string(),
        }
    };
    let width: Vec<usize> = (0..cols).map(|j| rows.iter().map(|r| cell(r, j).len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in &rows {
        let line: Vec<String> = (0..cols)
            .map(|j| if j == 0 { format!("{:<w$}", cell(r, j), w = width[j]) } else { format!("{:>w$}", cell(r, j), w = width[j]) })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn run_table(files: &[PathBuf]) -> Result<(), Failure> {
    if files.is_empty() {
        return Err(Failure::Config("table needs at least one summary CSV".into()));
    }
    for f in files {
        let text = fs::read_to_string(f).map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", f.display())))?;
        if text.lines().next() != Some(SUMMARY_HEADER) {
            return Err(Failure::Config(format!("{} is not a summary CSV", f.display())));
        }
        println!("{}", f.display());
        print!("{}", render_table(&text));
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Gaussian(a) => run_study(Experiment::Gaussian, a),
        Command::Linreg(a) => run_study(Experiment::Linreg, a),
        Command::Poisson(a) => run_study(Experiment::Poisson, a),
        Command::Median(a) => run_study(Experiment::Median, a),
        Command::Whittle(a) => run_study(Experiment::Whittle, a),
        Command::Cmp(a) => run_study(Experiment::Cmp, a),
        Command::Ksd(a) => run_study(Experiment::Ksd, a),
        Command::Tukey(a) => run_study(Experiment::Tukey, a),
        Command::Sample { experiment, method, common } => run_sample(experiment, method, common),
        Command::PseudoTrue { experiment, big_n, common } => run_pseudo_true(experiment, *big_n, common),
        Command::Table { files } => run_table(files),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(Failure::Degraded(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config(Experiment::Linreg, "", &[]).unwrap();
        assert_eq!(c, ExperimentConfig::new(Experiment::Linreg));
        assert_eq!((c.n, c.n_reps, c.knob("gamma")), (100, 300, 0.0));
    }

    #[test]
    fn file_then_overrides() {
        let text = "# regression settings\n\ngamma = 2   # heteroskedastic\nn_reps=10\n";
        let c = parse_config(Experiment::Linreg, text, &[]).unwrap();
        assert_eq!((c.knob("gamma"), c.n_reps), (2.0, 10));
        let c = parse_config(Experiment::Linreg, text, &["n_reps = 4".into(), "gamma=1".into()]).unwrap();
        assert_eq!((c.knob("gamma"), c.n_reps), (1.0, 4));
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let e = parse_config(Experiment::Linreg, "n = 50\ngamma = -1\n", &[]).unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.message.contains("gamma >= 0"), "{e}");
        let e = parse_config(Experiment::Linreg, "\n\nkappa = 6\n", &[]).unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("valid keys: n, n_reps, alpha, n_iters, burn_in, seed, workers, gamma"), "{e}");
        let e = parse_config(Experiment::Linreg, "gamma two\n", &[]).unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = parse_config(Experiment::Linreg, "n = abc\n", &[]).unwrap_err();
        assert!(e.message.contains("cannot parse"), "{e}");
        let e = parse_config(Experiment::Linreg, "", &["burn_in=20000".into()]).unwrap_err();
        assert_eq!(e.line, None);
        assert!(parse_config(Experiment::Linreg, "", &["gamma".into()]).is_err());
    }

    #[test]
    fn table_alignment() {
        let t = render_table("param,bias\nq.theta,0.123456\nq.sigma2,-1\n");
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "param       bias");
        assert_eq!(lines[1], "q.theta   0.1235");
        assert_eq!(lines[2], "q.sigma2      -1");
    }
}
