//! CSV tables and the JSON run manifest.

use std::fmt::Write as _;

use serde_json::json;

use super::{ExperimentConfig, ReplicationSummary};

pub const SUMMARY_HEADER: &str = "param,bias,avg_post_var,mse,avg_post_sd,coverage,n_reps";

/// One row per method and parameter, named `method.param`.
pub fn summary_csv(runs: &[&ReplicationSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in runs {
        let label = s.method.label();
        for p in &s.params {
            let _ = writeln!(
                out,
                "{label}.{},{},{},{},{},{},{}",
                p.name, p.bias, p.avg_post_var, p.mse, p.avg_post_sd, p.coverage, s.n_reps_completed
            );
        }
    }
    out
}

/// Per-replication posterior means, variances and coverage indicators.
pub fn replications_csv(s: &ReplicationSummary) -> String {
    let label = s.method.label();
    let mut out = String::from("method,rep,seed,param,post_mean,post_var,covered,acceptance_rate\n");
    for r in &s.records {
        for (j, p) in s.params.iter().enumerate() {
            let _ = writeln!(
                out,
                "{label},{},{},{},{},{},{},{}",
                r.rep, r.seed, p.name, r.post_mean[j], r.post_var[j], u8::from(r.covered[j]), r.acceptance_rate
            );
        }
    }
    out
}

/// Manifest with the effective configuration, every replication seed, the failures and the wall time.
pub fn manifest_json(cfg: &ExperimentConfig, runs: &[&ReplicationSummary], version: &str) -> String {
    let methods: Vec<String> = runs.iter().map(|s| s.method.label()).collect();
    let seeds: Vec<serde_json::Value> = runs
        .iter()
        .map(|s| json!({ "method": s.method.label(), "pilot": s.pilot_seed, "replications": s.seeds() }))
        .collect();
    let failures: Vec<serde_json::Value> = runs
        .iter()
        .flat_map(|s| {
            s.failures.iter().map(move |f| json!({ "method": s.method.label(), "rep": f.rep, "seed": f.seed, "error": f.error }))
        })
        .collect();
    let wall: f64 = runs.iter().map(|s| s.wall_time_s).sum();
    let v = json!({
        "config": {
            "experiment": cfg.experiment,
            "methods": methods,
            "n": cfg.n,
            "n_reps": cfg.n_reps,
            "alpha": cfg.alpha,
            "n_iters": cfg.n_iters,
            "burn_in": cfg.burn_in,
            "seed": cfg.base_seed,
            "workers": cfg.workers,
            "knobs": cfg.knobs,
        },
        "seeds": seeds,
        "failures": failures,
        "wall_time_s": wall,
        "version": version,
    });
    serde_json::to_string_pretty(&v).unwrap_or_default()
}
