//! Regret as the action graph gets denser, for ER edge probability and BA
//! attachment count. Writes per-value results and a sweep summary.
//!
//! cargo run --release --example graph_sweep [out_dir]

use std::path::PathBuf;

use gbl::harness::{run_sweep, write_sweep, ExperimentConfig, SweepParam};

const REFERENCE: &str = include_str!("../../../configs/reference.toml");

fn main() -> gbl::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("gbl_graph_sweep"));
    let mut cfg = ExperimentConfig::from_toml_str(REFERENCE)?;
    cfg.experiment.policies = vec!["gg_estt".into()];

    for (param, values) in [
        (SweepParam::GraphP, vec![0.2, 0.5, 0.8]),
        (SweepParam::GraphM, vec![2.0, 5.0, 8.0]),
    ] {
        let points = run_sweep(&cfg, param, &values)?;
        println!("{param}:");
        for p in &points {
            let s = &p.result.series[0];
            println!(
                "  {:>4} -> mean final regret {:>8.2}",
                p.value,
                s.mean_final_regret()
            );
        }
        let path = write_sweep(&out.join(param.name()), param, &points)?;
        println!("  wrote {}", path.display());
    }
    Ok(())
}
