//! From a reward-matrix file to a bandit run.
//!
//! Writes a noisy rank-2 20x20 matrix to a CSV file, ingests it with a 5-NN
//! action graph, checks that expected rewards reproduce the normalized
//! entries, and runs the policies on it.
//!
//! cargo run --release --example ingest_reward_matrix

use gbl::envs::{ingest_reward_matrix, IngestOptions, LinkFamily};
use gbl::harness::{read_results, run_experiment, ExperimentConfig, GraphSpec, InstanceSpec};
use gbl::rng::seeded;
use nalgebra::DMatrix;
use rand::Rng;

const REFERENCE: &str = include_str!("../../../configs/reference.toml");

fn main() -> gbl::Result<()> {
    let dir = std::env::temp_dir().join("gbl_ingest_example");
    std::fs::create_dir_all(&dir).map_err(|e| gbl::Error::Config(e.to_string()))?;
    let path = dir.join("ratings.csv");

    let mut rng = seeded(5);
    let a = DMatrix::from_fn(20, 2, |_, _| rng.random_range(0.0..1.0));
    let b = DMatrix::from_fn(2, 20, |_, _| rng.random_range(0.0..1.0));
    let reward = &a * &b;
    let text: String = reward
        .row_iter()
        .map(|row| {
            row.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
                + "\n"
        })
        .collect();
    std::fs::write(&path, text).map_err(|e| gbl::Error::Config(e.to_string()))?;

    let inst = ingest_reward_matrix(&path, LinkFamily::linear(0.01)?, &IngestOptions::default())?;
    let stored = gbl::envs::read_reward_matrix(&path, &IngestOptions::default())?;
    let total = stored.norm();
    let worst = (0..20 * 20)
        .map(|i| (inst.predictor(i) - stored[(i / 20, i % 20)] / total).abs())
        .fold(0.0, f64::max);
    println!(
        "ingested {} actions of shape {}x{}, rank {}, graph edges {}, max |reward - entry/|R|| = {worst:.2e}",
        inst.n_actions(),
        inst.d1,
        inst.d2,
        inst.true_param.rank,
        inst.graph.edge_count()
    );

    let mut cfg = ExperimentConfig::from_toml_str(REFERENCE)?;
    cfg.instance = InstanceSpec::Matrix {
        path: path.clone(),
        rank: Some(2),
        has_header: false,
        impute_missing_zero: false,
    };
    cfg.graph = GraphSpec::Knn { k: 5 };
    cfg.experiment.horizon = 1000;
    cfg.experiment.reps = 3;
    let res = run_experiment(&cfg)?;
    for s in &res.series {
        println!(
            "{:<18} final regret {:>8.3}",
            s.policy,
            s.mean_final_regret()
        );
    }
    let out = dir.join("results");
    res.write(&out)?;
    let (raw, agg) = read_results(&out)?;
    println!(
        "read back {} raw rows and {} aggregate rows from {}",
        raw.len(),
        agg.len(),
        out.display()
    );
    Ok(())
}
