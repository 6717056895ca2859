//! Experiment runner: builds paired instances, runs every policy on every
//! rep, aggregates metrics, and writes CSV results.
//!
//! Rep `i` uses seed `base + i` for the instance, the action graph, the
//! reward noise and the exploration draws, so all policies in a rep face the
//! same problem and the same randomness.

mod config;
mod io;
mod metrics;

pub use config::{
    ExperimentConfig, ExperimentSection, FamilySpec, GraphSpec, InstanceSpec, PolicySettings,
    ThetaSpec,
};
pub use io::{
    aggregate_csv, aggregate_rows, fmt_float, raw_csv, raw_rows, read_results, write_atomic,
    write_results, AggregateRow, RawRow, AGGREGATE_FILE, RAW_FILE,
};
pub use metrics::{cumulative_regret, hit_rate, recorded_hit_rate, window_ratio, MetricSeries};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::envs::{
    instance_from_reward_matrix, make_actions_gaussian, make_actions_outer, make_theta,
    read_reward_matrix, BanditInstance, IngestOptions,
};
use crate::error::{Error, Result};
use crate::graphs::{ba_graph, er_graph, knn_graph, Graph};
use crate::linalg::vec_of;
use crate::policies::{run_policy, PolicyKind, RunDiagnostics, StepRecord};
use crate::rng::{stream, Stream};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "GBL_WORKERS";

/// One policy run within an experiment.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub policy: String,
    pub kind: PolicyKind,
    pub rep: usize,
    pub seed: u64,
    pub records: Vec<StepRecord>,
    pub diagnostics: RunDiagnostics,
}

#[derive(Debug, Clone)]
pub struct FailedRun {
    pub policy: String,
    pub rep: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Completed runs ordered by rep, then by policy order in the config.
    pub runs: Vec<RunRecord>,
    /// One entry per configured policy.
    pub series: Vec<MetricSeries>,
    pub failed: Vec<FailedRun>,
}

impl ExperimentResult {
    pub fn series_for(&self, policy: &str) -> Option<&MetricSeries> {
        self.series.iter().find(|s| s.policy == policy)
    }

    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        write_results(dir, &self.runs, &self.series)
    }
}

/// Instance source resolved once per experiment.
enum Source {
    Synthetic,
    Matrix(DMatrix<f64>),
}

fn build_graph(spec: GraphSpec, inst_actions: &[DMatrix<f64>], seed: u64) -> Result<Graph> {
    let n = inst_actions.len();
    let mut rng = stream(seed, Stream::Graph);
    match spec {
        GraphSpec::Er { p } => er_graph(n, p, &mut rng),
        GraphSpec::Ba { m } => ba_graph(n, m, &mut rng),
        GraphSpec::Knn { k } => {
            let points: Vec<Vec<f64>> = inst_actions
                .iter()
                .map(|a| vec_of(a).as_slice().to_vec())
                .collect();
            knn_graph(&points, k.min(n.saturating_sub(1)))
        }
        GraphSpec::Empty => Ok(Graph::empty(n)),
    }
}

fn theta_graph(n: usize, p: f64, rng: &mut crate::rng::Rng) -> Result<Graph> {
    if p == 0.0 {
        Ok(Graph::empty(n))
    } else {
        er_graph(n, p, rng)
    }
}

fn build_instance(cfg: &ExperimentConfig, source: &Source, seed: u64) -> Result<BanditInstance> {
    let family = cfg.family.build()?;
    match (&cfg.instance, source) {
        (InstanceSpec::Matrix { rank, .. }, Source::Matrix(reward)) => {
            let mut inst = instance_from_reward_matrix(reward, family, 1, *rank)?;
            inst.graph = build_graph(cfg.graph, &inst.actions, seed)?;
            Ok(inst)
        }
        (
            InstanceSpec::Gaussian {
                d1,
                d2,
                rank,
                n,
                theta,
            },
            _,
        ) => {
            let mut rng = stream(seed, Stream::Instance);
            let actions = make_actions_gaussian(*n, *d1, *d2, &mut rng)?;
            let rows = theta_graph(*d1, theta.row_p, &mut rng)?;
            let cols = theta_graph(*d2, theta.col_p, &mut rng)?;
            let tp = make_theta(*d1, *d2, *rank, &rows, &cols, theta.eps, &mut rng)?;
            let graph = build_graph(cfg.graph, &actions, seed)?;
            BanditInstance::new(actions, tp, graph, family)
        }
        (
            InstanceSpec::Outer {
                d1,
                d2,
                rank,
                n1,
                n2,
                theta,
            },
            _,
        ) => {
            let mut rng = stream(seed, Stream::Instance);
            let actions = make_actions_outer(*n1, *n2, *d1, *d2, &mut rng)?;
            let rows = theta_graph(*d1, theta.row_p, &mut rng)?;
            let cols = theta_graph(*d2, theta.col_p, &mut rng)?;
            let tp = make_theta(*d1, *d2, *rank, &rows, &cols, theta.eps, &mut rng)?;
            let graph = build_graph(cfg.graph, &actions, seed)?;
            BanditInstance::new(actions, tp, graph, family)
        }
        (InstanceSpec::Matrix { .. }, Source::Synthetic) => {
            unreachable!("matrix source is loaded up front")
        }
    }
}

fn load_source(cfg: &ExperimentConfig) -> Result<Source> {
    match &cfg.instance {
        InstanceSpec::Matrix {
            path,
            has_header,
            impute_missing_zero,
            ..
        } => {
            let opts = IngestOptions {
                has_header: *has_header,
                impute_missing_zero: *impute_missing_zero,
                ..IngestOptions::default()
            };
            Ok(Source::Matrix(read_reward_matrix(path, &opts)?))
        }
        _ => Ok(Source::Synthetic),
    }
}

/// Instance for rep seed `seed`, exactly as [`run_experiment`] builds it.
pub fn instance_for_seed(cfg: &ExperimentConfig, seed: u64) -> Result<BanditInstance> {
    build_instance(cfg, &load_source(cfg)?, seed)
}

/// Worker count from `GBL_WORKERS`, else the config, else all cores.
pub fn worker_count(configured: usize) -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(configured)
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let n = worker_count(workers);
    if n == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every configured policy on every rep.
///
/// Runs that abort are dropped from the metrics with a warning; an error is
/// returned only when the configuration or the instance itself is unusable.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    with_pool(cfg.experiment.workers, || run_in_pool(cfg))?
}

fn run_in_pool(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let source = load_source(cfg)?;
    let kinds = cfg.policy_kinds();
    let base = cfg.experiment.seed;
    let reps = cfg.experiment.reps;

    let per_rep: Vec<Result<Vec<(RunRecord, Option<String>)>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = base.wrapping_add(rep as u64);
            let inst = build_instance(cfg, &source, seed)?;
            let rank = cfg.rank().unwrap_or(inst.true_param.rank);
            Ok(kinds
                .par_iter()
                .map(|&kind| {
                    let pc = cfg.policy_config(kind, rank, seed);
                    let out = run_policy(&inst, &pc);
                    let failure = out.failure.as_ref().map(|e| e.to_string());
                    let record = RunRecord {
                        policy: kind.name().to_string(),
                        kind,
                        rep,
                        seed,
                        records: out.records,
                        diagnostics: out.diagnostics,
                    };
                    (record, failure)
                })
                .collect())
        })
        .collect();

    let mut runs = Vec::new();
    let mut failed = Vec::new();
    let mut series: Vec<MetricSeries> = kinds.iter().map(|k| MetricSeries::new(k.name())).collect();
    for rep_result in per_rep {
        for (run, failure) in rep_result? {
            match failure {
                Some(message) => {
                    log::warn!(
                        "{} rep {} (seed {}) failed and is excluded: {message}",
                        run.policy,
                        run.rep,
                        run.seed
                    );
                    failed.push(FailedRun {
                        policy: run.policy,
                        rep: run.rep,
                        seed: run.seed,
                        message,
                    });
                }
                None => {
                    let idx = kinds
                        .iter()
                        .position(|&k| k == run.kind)
                        .expect("configured kind");
                    series[idx].push(run.rep, &run.records);
                    runs.push(run);
                }
            }
        }
    }
    Ok(ExperimentResult {
        runs,
        series,
        failed,
    })
}

/// Graph parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Edge probability of an Erdős–Rényi action graph.
    GraphP,
    /// Attachment count of a Barabási–Albert action graph.
    GraphM,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::GraphP => "graph_p",
            SweepParam::GraphM => "graph_m",
        }
    }

    /// Copy of `cfg` with the action graph set by this parameter.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut out = cfg.clone();
        out.graph = match self {
            SweepParam::GraphP => GraphSpec::Er { p: value },
            SweepParam::GraphM => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!(
                        "graph_m values must be positive integers, got {value}"
                    )));
                }
                GraphSpec::Ba { m: value as usize }
            }
        };
        out.validate()?;
        Ok(out)
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "graph_p" => Ok(SweepParam::GraphP),
            "graph_m" => Ok(SweepParam::GraphM),
            other => Err(Error::Config(format!(
                "unknown sweep parameter '{other}' (graph_p or graph_m)"
            ))),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub result: ExperimentResult,
}

pub const SWEEP_FILE: &str = "sweep.csv";

/// Runs the experiment once per value, sharing one worker pool across
/// sweep points, reps and policies.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::Config(format!(
            "sweep over {param} needs at least one value"
        )));
    }
    let cfgs = values
        .iter()
        .map(|&v| param.apply(cfg, v))
        .collect::<Result<Vec<_>>>()?;
    with_pool(cfg.experiment.workers, || {
        values
            .par_iter()
            .zip(&cfgs)
            .map(|(&value, c)| {
                log::info!("sweep {param}={value}");
                Ok(SweepPoint {
                    value,
                    result: run_in_pool(c)?,
                })
            })
            .collect()
    })?
}

pub fn sweep_dir_name(param: SweepParam, value: f64) -> String {
    format!("{}={}", param.name(), value)
}

/// Writes each point's results under `dir/<param>=<value>/` and a summary
/// `dir/sweep.csv` with `param,value,policy,reps,mean_final_regret,std_final_regret,mean_final_hit_rate`.
pub fn write_sweep(dir: &Path, param: SweepParam, points: &[SweepPoint]) -> Result<PathBuf> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Csv {
        path: dir.join(SWEEP_FILE),
        message: e.to_string(),
    };
    w.write_record([
        "param",
        "value",
        "policy",
        "reps",
        "mean_final_regret",
        "std_final_regret",
        "mean_final_hit_rate",
    ])
    .map_err(err)?;
    for point in points {
        point
            .result
            .write(&dir.join(sweep_dir_name(param, point.value)))?;
        for s in &point.result.series {
            let last = |v: Vec<f64>| v.last().copied().unwrap_or(f64::NAN);
            w.write_record([
                param.name().to_string(),
                point.value.to_string(),
                s.policy.clone(),
                s.n_reps().to_string(),
                fmt_float(last(s.mean_cum_regret())),
                fmt_float(last(s.std_cum_regret())),
                fmt_float(last(s.mean_hit_rate())),
            ])
            .map_err(err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv {
        path: dir.join(SWEEP_FILE),
        message: e.to_string(),
    })?;
    let path = dir.join(SWEEP_FILE);
    write_atomic(&path, &bytes)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(policies: &str, reps: usize) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&format!(
            r#"
[experiment]
horizon = 60
reps = {reps}
seed = 11
policies = [{policies}]
workers = 2

[instance]
kind = "gaussian"
d1 = 3
d2 = 3
rank = 1
n = 12

[graph]
model = "er"
p = 0.5

[family]
name = "linear"
omega = 0.1

[policy]
t1 = 12
alpha = 0.2
"#
        ))
        .unwrap()
    }

    #[test]
    fn every_policy_runs_every_rep() {
        let cfg = small(r#""gg_estt", "ablation_nograph", "gg_oful", "ucb_glm""#, 3);
        let res = run_experiment(&cfg).unwrap();
        assert!(res.failed.is_empty());
        assert_eq!(res.runs.len(), 12);
        for s in &res.series {
            assert_eq!(s.n_reps(), 3);
            assert_eq!(s.horizon(), 60);
        }
    }

    #[test]
    fn reps_share_instances_and_draws() {
        let cfg = small(r#""gg_estt", "ucb_glm""#, 2);
        let res = run_experiment(&cfg).unwrap();
        let first = |p: &str, rep: usize| {
            res.runs
                .iter()
                .find(|r| r.policy == p && r.rep == rep)
                .unwrap()
        };
        for rep in 0..2 {
            let a = first("gg_estt", rep);
            let b = first("ucb_glm", rep);
            assert_eq!(a.seed, 11 + rep as u64);
            for t in 0..12 {
                assert_eq!(a.records[t].action, b.records[t].action);
                assert_eq!(a.records[t].reward.to_bits(), b.records[t].reward.to_bits());
            }
        }
        let i0 = instance_for_seed(&cfg, 11).unwrap();
        let i1 = instance_for_seed(&cfg, 12).unwrap();
        assert_ne!(i0.true_param.theta, i1.true_param.theta);
    }

    #[test]
    fn sweep_param_rewrites_graph() {
        let cfg = small(r#""ucb_glm""#, 1);
        assert_eq!(
            SweepParam::GraphM.apply(&cfg, 3.0).unwrap().graph,
            GraphSpec::Ba { m: 3 }
        );
        assert!(SweepParam::GraphM.apply(&cfg, 2.5).is_err());
        assert!(SweepParam::GraphP.apply(&cfg, 1.5).is_err());
        assert!("graph_q".parse::<SweepParam>().is_err());
    }
}
