//! CSV output. Floats are written with ten significant digits.
//!
//! `raw.csv`: `policy,rep,seed,t,action,reward,instant_regret,cum_regret,hit`
//! with an empty `action` for off-set exploration rounds.
//!
//! `aggregate.csv`: `policy,t,mean_cum_regret,std_cum_regret,mean_hit_rate`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::MetricSeries;
use super::RunRecord;
use crate::error::{Error, Result};

pub const RAW_FILE: &str = "raw.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub policy: String,
    pub rep: usize,
    pub seed: u64,
    pub t: usize,
    pub action: Option<usize>,
    pub reward: f64,
    pub instant_regret: f64,
    pub cum_regret: f64,
    pub hit: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub policy: String,
    pub t: usize,
    pub mean_cum_regret: f64,
    pub std_cum_regret: f64,
    pub mean_hit_rate: f64,
}

pub fn fmt_float(x: f64) -> String {
    format!("{x:.9e}")
}

pub fn raw_rows(runs: &[RunRecord]) -> Vec<RawRow> {
    let mut rows = Vec::new();
    for run in runs {
        let mut acc = 0.0;
        for r in &run.records {
            acc += r.instant_regret;
            rows.push(RawRow {
                policy: run.policy.clone(),
                rep: run.rep,
                seed: run.seed,
                t: r.t,
                action: r.action,
                reward: r.reward,
                instant_regret: r.instant_regret,
                cum_regret: acc,
                hit: u8::from(r.hit),
            });
        }
    }
    rows
}

pub fn aggregate_rows(series: &[MetricSeries]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for s in series {
        let (mean, sd, hit) = (s.mean_cum_regret(), s.std_cum_regret(), s.mean_hit_rate());
        for t in 0..mean.len() {
            rows.push(AggregateRow {
                policy: s.policy.clone(),
                t: t + 1,
                mean_cum_regret: mean[t],
                std_cum_regret: sd[t],
                mean_hit_rate: hit[t],
            });
        }
    }
    rows
}

fn csv_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes `content` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(content).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn raw_csv(rows: &[RawRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| csv_error(Path::new(RAW_FILE), e);
    w.write_record([
        "policy",
        "rep",
        "seed",
        "t",
        "action",
        "reward",
        "instant_regret",
        "cum_regret",
        "hit",
    ])
    .map_err(err)?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.rep.to_string(),
            r.seed.to_string(),
            r.t.to_string(),
            r.action.map(|a| a.to_string()).unwrap_or_default(),
            fmt_float(r.reward),
            fmt_float(r.instant_regret),
            fmt_float(r.cum_regret),
            r.hit.to_string(),
        ])
        .map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| csv_error(Path::new(RAW_FILE), e))
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| csv_error(Path::new(AGGREGATE_FILE), e);
    w.write_record([
        "policy",
        "t",
        "mean_cum_regret",
        "std_cum_regret",
        "mean_hit_rate",
    ])
    .map_err(err)?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.t.to_string(),
            fmt_float(r.mean_cum_regret),
            fmt_float(r.std_cum_regret),
            fmt_float(r.mean_hit_rate),
        ])
        .map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| csv_error(Path::new(AGGREGATE_FILE), e))
}

/// Writes `raw.csv` and `aggregate.csv` under `dir`.
pub fn write_results(
    dir: &Path,
    runs: &[RunRecord],
    series: &[MetricSeries],
) -> Result<(PathBuf, PathBuf)> {
    let raw = dir.join(RAW_FILE);
    let agg = dir.join(AGGREGATE_FILE);
    write_atomic(&raw, &raw_csv(&raw_rows(runs))?)?;
    write_atomic(&agg, &aggregate_csv(&aggregate_rows(series))?)?;
    Ok((raw, agg))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => csv_error(path, format!("{other:?}")),
    })?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| csv_error(path, e))
}

/// Reads back the two files written by [`write_results`].
pub fn read_results(dir: &Path) -> Result<(Vec<RawRow>, Vec<AggregateRow>)> {
    Ok((
        read_rows(&dir.join(RAW_FILE))?,
        read_rows(&dir.join(AGGREGATE_FILE))?,
    ))
}
