use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[experiment]
horizon = 120
reps = 2
seed = 11
policies = ["gg_estt", "ucb_glm"]

[instance]
kind = "gaussian"
d1 = 3
d2 = 3
rank = 1
n = 20

[graph]
model = "er"
p = 0.5

[family]
name = "linear"
omega = 0.05

[policy]
t1 = 20
alpha = 0.1
tau = 0.1
"#;

fn gbl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gbl"))
        .args(args)
        .env("GBL_WORKERS", "1")
        .output()
        .expect("run gbl")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn simulate_writes_both_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("res");
    let o = gbl(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let raw = lines(&out.join("raw.csv"));
    assert_eq!(
        raw[0],
        "policy,rep,seed,t,action,reward,instant_regret,cum_regret,hit"
    );
    assert_eq!(raw.len(), 2 * 2 * 120 + 1);
    let agg = lines(&out.join("aggregate.csv"));
    assert_eq!(
        agg[0],
        "policy,t,mean_cum_regret,std_cum_regret,mean_hit_rate"
    );
    assert_eq!(agg.len(), 2 * 120 + 1);
}

#[test]
fn global_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("res");
    let o = gbl(&[
        "--reps",
        "1",
        "--seed",
        "99",
        "--out",
        out.to_str().unwrap(),
        "simulate",
        "--config",
        &cfg,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let raw = lines(&out.join("raw.csv"));
    assert_eq!(raw.len(), 2 * 120 + 1);
    assert!(raw[1].starts_with("gg_estt,0,99,1,"), "{}", raw[1]);
}

#[test]
fn sweep_writes_one_aggregate_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("sweep");
    let o = gbl(&[
        "sweep",
        "--param",
        "graph_p",
        "--values",
        "0.2,0.8",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for v in ["0.2", "0.8"] {
        let agg = out.join(format!("graph_p={v}")).join("aggregate.csv");
        assert_eq!(lines(&agg).len(), 2 * 120 + 1);
    }
    let summary = lines(&out.join("sweep.csv"));
    assert_eq!(
        summary[0],
        "param,value,policy,reps,mean_final_regret,std_final_regret,mean_final_hit_rate"
    );
    assert_eq!(summary.len(), 1 + 2 * 2);
}

#[test]
fn unknown_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("alpha = 0.1", "alpah = 0.1"));
    let o = gbl(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("alpah"), "{err}");
}

#[test]
fn invalid_value_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("rank = 1", "rank = 7"));
    let o = gbl(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bad_usage_exits_with_two() {
    assert_eq!(
        gbl(&["sweep", "--param", "graph_q", "--values", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        gbl(&["ingest", "--matrix", "x.csv", "--family", "gamma"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn ingest_runs_on_a_reward_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("r.csv");
    let text: String = (0..6)
        .map(|i| {
            (0..5)
                .map(|j| ((i + 1) * (j + 2)).to_string())
                .collect::<Vec<_>>()
                .join(",")
                + "\n"
        })
        .collect();
    fs::write(&matrix, text).unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("ingest");
    let o = gbl(&[
        "ingest",
        "--matrix",
        matrix.to_str().unwrap(),
        "--family",
        "linear",
        "--config",
        &cfg,
        "--knn",
        "3",
        "--horizon",
        "80",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(lines(&out.join("raw.csv")).len(), 2 * 2 * 80 + 1);
}

#[test]
fn malformed_matrix_names_the_cell() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("r.csv");
    fs::write(&matrix, "1,2,3\n4,x,6\n").unwrap();
    let o = gbl(&[
        "ingest",
        "--matrix",
        matrix.to_str().unwrap(),
        "--family",
        "linear",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("row 2") && err.contains("column 2"), "{err}");
}
