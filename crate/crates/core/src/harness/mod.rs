//! Seeded replication studies: coverage, bias and spread of posterior summaries.

mod calibrate;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

pub use calibrate::{
    bvm_variance_check, find_mode, laplace_proposal, minimize_loss, pilot_proposal_cov, pseudo_true, BvmCheck,
    PseudoTrueResult,
};
pub use report::{manifest_json, replications_csv, summary_csv, SUMMARY_HEADER};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::{
    arfima_dgp, cmp_sample, contaminated_normal_dgp, estimate_dispersion, linreg_dgp, linreg_pseudo_true, median_dgp,
    poisson_dgp, Dataset, DfdModel, GaussianMean, KsdConfig, KsdModel, LinRegModel, MedianDgp, MedianModel,
    PoissonModel, TukeyModel, WhittleModel, ARFIMA_THETA, POISSON_THETA,
};
use crate::qcore::{gibbs_target, q_target, ScoreModel};
use crate::sampler::{chain_summary, covers, rwmh_sample, Chain, SamplerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Gaussian,
    Linreg,
    Poisson,
    Median,
    Whittle,
    Cmp,
    Ksd,
    Tukey,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Gaussian,
        Experiment::Linreg,
        Experiment::Poisson,
        Experiment::Median,
        Experiment::Whittle,
        Experiment::Cmp,
        Experiment::Ksd,
        Experiment::Tukey,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Gaussian => "gaussian",
            Experiment::Linreg => "linreg",
            Experiment::Poisson => "poisson",
            Experiment::Median => "median",
            Experiment::Whittle => "whittle",
            Experiment::Cmp => "cmp",
            Experiment::Ksd => "ksd",
            Experiment::Tukey => "tukey",
        }
    }

    /// DGP and model settings beyond the common ones.
    pub fn knobs(self) -> &'static [Knob] {
        match self {
            Experiment::Gaussian => &GAUSSIAN_KNOBS,
            Experiment::Linreg | Experiment::Poisson => &REGRESSION_KNOBS,
            Experiment::Median => &MEDIAN_KNOBS,
            Experiment::Whittle => &[],
            Experiment::Cmp => &CMP_KNOBS,
            Experiment::Ksd => &KSD_KNOBS,
            Experiment::Tukey => &TUKEY_KNOBS,
        }
    }

    /// The Q-posterior followed by the comparators reported alongside it.
    pub fn methods(self) -> Vec<Method> {
        let mut m = vec![Method::QPosterior, Method::Gibbs { omega: 1.0 }];
        match self {
            Experiment::Poisson => m.push(Method::GibbsEstimatedDispersion),
            Experiment::Tukey => m.push(Method::Gibbs { omega: 2.0 }),
            _ => {}
        }
        m
    }

    fn defaults(self) -> (usize, usize, f64, usize, usize) {
        // (n, n_reps, alpha, n_iters, burn_in)
        match self {
            Experiment::Gaussian => (200, 300, 0.05, 10_000, 5_000),
            Experiment::Linreg => (100, 300, 0.05, 10_000, 5_000),
            Experiment::Poisson => (1000, 300, 0.05, 10_000, 5_000),
            Experiment::Median => (101, 300, 0.05, 10_000, 5_000),
            Experiment::Whittle => (2048, 50, 0.10, 20_000, 10_000),
            Experiment::Cmp => (2000, 50, 0.10, 20_000, 10_000),
            Experiment::Ksd => (100, 50, 0.05, 20_000, 10_000),
            Experiment::Tukey => (500, 50, 0.10, 20_000, 10_000),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment '{s}'")))
    }
}

const INF: f64 = f64::INFINITY;
const GAUSSIAN_KNOBS: [Knob; 4] = [
    Knob::real("mu", 1.0, -INF, INF),
    Knob::real("sigma", 1.0, 1e-12, INF),
    Knob::real("prior_mean", 0.0, -INF, INF),
    Knob::real("prior_var", 100.0, 1e-12, INF),
];
const REGRESSION_KNOBS: [Knob; 1] = [Knob::real("gamma", 0.0, 0.0, INF)];
const MEDIAN_KNOBS: [Knob; 2] = [Knob::int("dgp", 1.0, 1.0, 2.0), Knob::int("bootstrap", 500.0, 2.0, 1e7)];
const CMP_KNOBS: [Knob; 2] = [Knob::real("theta1", 4.0, 1e-12, 20.0), Knob::real("theta2", 0.75, 1e-3, 1.0)];
const KSD_KNOBS: [Knob; 4] = [
    Knob::real("epsilon", 0.0, 0.0, 0.999),
    Knob::real("c", 1.0, 1e-12, INF),
    Knob::real("beta", 0.5, 1e-12, INF),
    Knob::int("weighted", 1.0, 0.0, 1.0),
];
const TUKEY_KNOBS: [Knob; 3] = [
    Knob::real("kappa", 6.0, 1e-12, INF),
    Knob::real("epsilon", 0.1, 0.0, 0.999),
    Knob::int("pseudo_true_n", 1e6, 1e5, 1e9),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knob {
    pub name: &'static str,
    pub default: f64,
    pub min: f64,
    pub max: f64,
    pub integer: bool,
}

impl Knob {
    const fn real(name: &'static str, default: f64, min: f64, max: f64) -> Self {
        Self { name, default, min, max, integer: false }
    }

    const fn int(name: &'static str, default: f64, min: f64, max: f64) -> Self {
        Self { name, default, min, max, integer: true }
    }

    pub fn range_text(&self) -> String {
        let kind = if self.integer { "integer " } else { "" };
        match (self.min.is_finite(), self.max.is_finite()) {
            (true, true) => format!("{kind}{} in [{}, {}]", self.name, self.min, self.max),
            (true, false) => format!("{kind}{} >= {}", self.name, self.min),
            (false, true) => format!("{kind}{} <= {}", self.name, self.max),
            (false, false) => format!("finite {}", self.name),
        }
    }

    fn check(&self, v: f64) -> Result<()> {
        let ok = v.is_finite() && v >= self.min && v <= self.max && (!self.integer || v.fract() == 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("{} = {v} is out of range; valid range is {}", self.name, self.range_text())))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    QPosterior,
    /// `π(θ) exp{−ω D(θ)}` with the model's comparator loss.
    Gibbs { omega: f64 },
    /// Quasi-Poisson Gibbs posterior with a per-dataset Pearson dispersion estimate.
    GibbsEstimatedDispersion,
}

impl Method {
    /// Short label used as the CSV parameter prefix.
    pub fn label(&self) -> String {
        match self {
            Method::QPosterior => "q".into(),
            Method::Gibbs { omega } => format!("gibbs_w{omega}"),
            Method::GibbsEstimatedDispersion => "gibbs_psihat".into(),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// `q`, `gibbs_psihat` or `gibbs_w<omega>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q" => Ok(Method::QPosterior),
            "gibbs_psihat" => Ok(Method::GibbsEstimatedDispersion),
            _ => {
                let omega = s
                    .strip_prefix("gibbs_w")
                    .and_then(|w| w.parse::<f64>().ok())
                    .filter(|w| *w > 0.0 && w.is_finite())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}' (q, gibbs_w<omega>, gibbs_psihat)")))?;
                Ok(Method::Gibbs { omega })
            }
        }
    }
}

/// Settings shared by every experiment.
pub const COMMON_KEYS: [&str; 7] = ["n", "n_reps", "alpha", "n_iters", "burn_in", "seed", "workers"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub method: Method,
    pub n: usize,
    pub n_reps: usize,
    pub alpha: f64,
    pub n_iters: usize,
    pub burn_in: usize,
    pub base_seed: u64,
    pub workers: usize,
    pub knobs: BTreeMap<String, f64>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        let (n, n_reps, alpha, n_iters, burn_in) = experiment.defaults();
        Self {
            experiment,
            method: Method::QPosterior,
            n,
            n_reps,
            alpha,
            n_iters,
            burn_in,
            base_seed: 20_240_101,
            workers: 1,
            knobs: experiment.knobs().iter().map(|k| (k.name.to_string(), k.default)).collect(),
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    /// Every accepted key for this experiment.
    pub fn valid_keys(&self) -> Vec<&'static str> {
        COMMON_KEYS.iter().copied().chain(self.experiment.knobs().iter().map(|k| k.name)).collect()
    }

    pub fn knob(&self, name: &str) -> f64 {
        self.knobs.get(name).copied().unwrap_or_else(|| {
            self.experiment.knobs().iter().find(|k| k.name == name).map(|k| k.default).unwrap_or(f64::NAN)
        })
    }

    /// Parses and range-checks one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::InvalidArgument(format!("cannot parse '{value}' as {what} for key '{key}'"));
        let count = |min: usize| -> Result<usize> {
            let v: usize = value.parse().map_err(|_| bad("a nonnegative integer"))?;
            if v < min {
                return Err(Error::InvalidArgument(format!("{key} = {v} is out of range; valid range is {key} >= {min}")));
            }
            Ok(v)
        };
        match key {
            "n" => self.n = count(2)?,
            "n_reps" => self.n_reps = count(1)?,
            "n_iters" => self.n_iters = count(1)?,
            "burn_in" => self.burn_in = count(0)?,
            "workers" => self.workers = count(1)?,
            "seed" => self.base_seed = value.parse().map_err(|_| bad("an unsigned 64-bit integer"))?,
            "alpha" => {
                let a: f64 = value.parse().map_err(|_| bad("a number"))?;
                if !(a > 0.0 && a < 1.0) {
                    return Err(Error::InvalidArgument(format!("alpha = {a} is out of range; valid range is 0 < alpha < 1")));
                }
                self.alpha = a;
            }
            _ => {
                let knob = self.experiment.knobs().iter().find(|k| k.name == key).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "unknown key '{key}' for {}; valid keys: {}",
                        self.experiment,
                        self.valid_keys().join(", ")
                    ))
                })?;
                let v: f64 = value.parse().map_err(|_| bad("a number"))?;
                knob.check(v)?;
                self.knobs.insert(key.to_string(), v);
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(Error::InvalidArgument("n_reps must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if self.burn_in >= self.n_iters {
            return Err(Error::InvalidArgument(format!(
                "burn_in ({}) must be smaller than n_iters ({})",
                self.burn_in, self.n_iters
            )));
        }
        if self.workers == 0 {
            return Err(Error::InvalidArgument("workers must be at least 1".into()));
        }
        for k in self.experiment.knobs() {
            k.check(self.knob(k.name))?;
        }
        if let Some(extra) = self.knobs.keys().find(|k| !self.experiment.knobs().iter().any(|s| s.name == *k)) {
            return Err(Error::InvalidArgument(format!("unknown key '{extra}' for {}", self.experiment)));
        }
        match self.method {
            Method::Gibbs { omega } if !(omega > 0.0 && omega.is_finite()) => {
                return Err(Error::InvalidArgument(format!("omega must be positive, got {omega}")));
            }
            Method::GibbsEstimatedDispersion if self.experiment != Experiment::Poisson => {
                return Err(Error::InvalidArgument("estimated dispersion applies to the poisson experiment only".into()));
            }
            _ => {}
        }
        if self.experiment == Experiment::Median && self.n % 2 == 0 {
            return Err(Error::OddSampleRequired(self.n));
        }
        Ok(())
    }

    fn median_dgp(&self) -> MedianDgp {
        if self.knob("dgp") == 2.0 { MedianDgp::Mixture } else { MedianDgp::Gaussian }
    }
}

/// One dataset of size `n` from the experiment's data-generating process.
pub fn simulate<R: Rng + ?Sized>(cfg: &ExperimentConfig, n: usize, rng: &mut R) -> Result<Dataset> {
    match cfg.experiment {
        Experiment::Gaussian => {
            let (mu, sigma) = (cfg.knob("mu"), cfg.knob("sigma"));
            let y = (0..n).map(|_| mu + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
            Dataset::new(y, None, "gaussian")
        }
        Experiment::Linreg => Ok(linreg_dgp(cfg.knob("gamma"), n, rng)?.0),
        Experiment::Poisson => Ok(poisson_dgp(cfg.knob("gamma"), n, rng)?.0),
        Experiment::Median => Ok(median_dgp(cfg.median_dgp(), n, rng)?.0),
        Experiment::Whittle => arfima_dgp(&ARFIMA_THETA, n, rng),
        Experiment::Cmp => cmp_sample(&[cfg.knob("theta1"), cfg.knob("theta2")], n, rng),
        Experiment::Ksd => contaminated_normal_dgp(cfg.knob("epsilon"), n, rng),
        Experiment::Tukey => contaminated_normal_dgp(cfg.knob("epsilon"), n, rng),
    }
}

/// The model whose posterior `method` targets, fitted to `data`.
///
/// `rng` drives any resampling the model needs (median bootstrap).
pub fn build_model<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    method: Method,
    data: &Dataset,
    rng: &mut R,
) -> Result<Box<dyn ScoreModel<f64>>> {
    Ok(match cfg.experiment {
        Experiment::Gaussian => Box::new(
            GaussianMean::new(data.responses.clone(), cfg.knob("sigma"))
                .with_gaussian_prior(cfg.knob("prior_mean"), cfg.knob("prior_var")),
        ),
        Experiment::Linreg => Box::new(LinRegModel::new(data)?),
        Experiment::Poisson => {
            let psi = if method == Method::GibbsEstimatedDispersion {
                let fit = estimate_dispersion(data)?;
                if fit.is_degenerate() {
                    return Err(Error::FitFailure(format!("degenerate dispersion estimate {}", fit.psi)));
                }
                fit.psi
            } else {
                1.0
            };
            Box::new(PoissonModel::new(data, psi)?)
        }
        Experiment::Median => Box::new(MedianModel::new(data, cfg.knob("bootstrap") as usize, rng)?),
        Experiment::Whittle => Box::new(WhittleModel::from_series(&data.responses)?),
        Experiment::Cmp => Box::new(DfdModel::new(data)?),
        Experiment::Ksd => Box::new(KsdModel::new(
            data,
            KsdConfig { c: cfg.knob("c"), beta: cfg.knob("beta"), weighted: cfg.knob("weighted") != 0.0 },
        )?),
        Experiment::Tukey => Box::new(TukeyModel::new(data, cfg.knob("kappa"))?),
    })
}

/// Log-density the sampler targets for `method`.
pub fn posterior_target<'a>(model: &'a dyn ScoreModel<f64>, method: Method) -> Box<dyn Fn(&[f64]) -> f64 + 'a> {
    let prior = model.prior();
    match method {
        Method::QPosterior => {
            let ws = model.default_weights();
            Box::new(move |t: &[f64]| q_target(model, &ws, &prior)(t))
        }
        Method::Gibbs { omega } => Box::new(move |t: &[f64]| gibbs_target(model, omega, &prior)(t)),
        Method::GibbsEstimatedDispersion => Box::new(move |t: &[f64]| gibbs_target(model, 1.0, &prior)(t)),
    }
}

/// Runs one chain for `method` from the loss minimizer with the given proposal covariance.
pub fn sample_posterior(
    model: &dyn ScoreModel<f64>,
    method: Method,
    proposal: &Matrix<f64>,
    n_iters: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Chain<f64>> {
    let target = posterior_target(model, method);
    let init = find_mode(model, &target);
    let cfg = SamplerConfig::new(init, n_iters, burn_in, seed).with_proposal(proposal.clone());
    rwmh_sample(&target, &cfg)
}

/// Value that credible intervals are checked against, in the reported parameterization.
pub fn coverage_target(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    Ok(match cfg.experiment {
        Experiment::Gaussian => vec![cfg.knob("mu")],
        Experiment::Linreg => linreg_pseudo_true(cfg.knob("gamma")),
        Experiment::Poisson => POISSON_THETA.to_vec(),
        Experiment::Median => vec![cfg.median_dgp().true_median()],
        Experiment::Whittle => ARFIMA_THETA.to_vec(),
        Experiment::Cmp => vec![cfg.knob("theta1"), cfg.knob("theta2")],
        Experiment::Ksd => vec![0.0],
        Experiment::Tukey => {
            let big_n = cfg.knob("pseudo_true_n") as usize;
            pseudo_true(cfg, big_n, cfg.base_seed.wrapping_sub(2))?.reported
        }
    })
}

/// Accuracy of one parameter's posterior across replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSummary {
    pub name: String,
    pub truth: f64,
    /// Mean of (posterior mean − truth).
    pub bias: f64,
    pub avg_post_var: f64,
    pub mse: f64,
    pub avg_post_sd: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub seed: u64,
    pub post_mean: Vec<f64>,
    pub post_var: Vec<f64>,
    pub covered: Vec<bool>,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationFailure {
    pub rep: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationSummary {
    pub method: Method,
    pub params: Vec<ParamSummary>,
    pub n_reps: usize,
    pub n_reps_completed: usize,
    pub pilot_seed: u64,
    pub records: Vec<ReplicationRecord>,
    pub failures: Vec<ReplicationFailure>,
    pub wall_time_s: f64,
}

impl ReplicationSummary {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.records.iter().map(|r| r.seed).chain(self.failures.iter().map(|f| f.seed)).collect();
        s.sort_unstable();
        s
    }
}

pub fn replication_seed(cfg: &ExperimentConfig, rep: usize) -> u64 {
    cfg.base_seed.wrapping_add(rep as u64)
}

fn run_one(cfg: &ExperimentConfig, proposal: &Matrix<f64>, truth: &[f64], rep: usize) -> Result<ReplicationRecord> {
    let seed = replication_seed(cfg, rep);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = simulate(cfg, cfg.n, &mut rng)?;
    let model = build_model(cfg, cfg.method, &data, &mut rng)?;
    let chain = sample_posterior(model.as_ref(), cfg.method, proposal, cfg.n_iters, cfg.burn_in, rng.random())?;
    let reported = chain.map_draws(|t| model.to_reported(t))?;
    let s = chain_summary(&reported, cfg.alpha)?;
    Ok(ReplicationRecord {
        rep,
        seed,
        covered: covers(&s, truth)?,
        post_mean: s.mean,
        post_var: s.variance,
        acceptance_rate: chain.acceptance_rate,
    })
}

/// Runs `n_reps` independent replications on `workers` threads.
///
/// Replication `r` (from 1) draws everything from the seed `base_seed + r`, and
/// results are combined in replication order, so the summary does not depend on
/// the number of threads. Failed replications are skipped and listed; more
/// than 5% failures is an [`Error::ExperimentDegraded`].
pub fn run_replications(cfg: &ExperimentConfig) -> Result<ReplicationSummary> {
    cfg.validate()?;
    let truth = coverage_target(cfg)?;
    run_replications_against(cfg, &truth)
}

/// As [`run_replications`], with an explicit coverage target.
pub fn run_replications_against(cfg: &ExperimentConfig, truth: &[f64]) -> Result<ReplicationSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let (proposal, names) = pool.install(|| calibrate::pilot(cfg))?;
    let outcomes: Vec<Result<ReplicationRecord>> =
        pool.install(|| (1..=cfg.n_reps).into_par_iter().map(|r| run_one(cfg, &proposal, truth, r)).collect());

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => records.push(r),
            Err(e) => failures.push(ReplicationFailure { rep: i + 1, seed: replication_seed(cfg, i + 1), error: e.to_string() }),
        }
    }
    if failures.len() * 20 > cfg.n_reps {
        return Err(Error::ExperimentDegraded { failed: failures.len(), total: cfg.n_reps });
    }
    let params = aggregate(&names, truth, &records)?;
    Ok(ReplicationSummary {
        method: cfg.method,
        params,
        n_reps: cfg.n_reps,
        n_reps_completed: records.len(),
        pilot_seed: cfg.base_seed.wrapping_sub(1),
        records,
        failures,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn aggregate(names: &[String], truth: &[f64], records: &[ReplicationRecord]) -> Result<Vec<ParamSummary>> {
    if records.is_empty() {
        return Err(Error::ExperimentDegraded { failed: 0, total: 0 });
    }
    crate::error::check_dim(names.len(), truth.len())?;
    let r = records.len() as f64;
    Ok(names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut p = ParamSummary {
                name: name.clone(),
                truth: truth[j],
                bias: 0.0,
                avg_post_var: 0.0,
                mse: 0.0,
                avg_post_sd: 0.0,
                coverage: 0.0,
            };
            for rec in records {
                let err = rec.post_mean[j] - truth[j];
                p.bias += err;
                p.mse += err * err;
                p.avg_post_var += rec.post_var[j];
                p.avg_post_sd += rec.post_var[j].sqrt();
                p.coverage += f64::from(u8::from(rec.covered[j]));
            }
            p.bias /= r;
            p.mse /= r;
            p.avg_post_var /= r;
            p.avg_post_sd /= r;
            p.coverage /= r;
            p
        })
        .collect())
}
