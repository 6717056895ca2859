//! How often GG-ESTT plays an action from the top 5% as rounds accumulate.
//!
//! cargo run --release --example hit_rate

use gbl::harness::{hit_rate, instance_for_seed, ExperimentConfig};
use gbl::policies::{run_policy, PolicyKind};

const REFERENCE: &str = include_str!("../../../configs/reference.toml");

fn main() -> gbl::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(REFERENCE)?;
    let seed = cfg.experiment.seed;
    let inst = instance_for_seed(&cfg, seed)?;
    let top = inst.top_set(cfg.experiment.hit_pct)?;
    println!(
        "{} actions, top set {:?}, optimal {}",
        inst.n_actions(),
        top,
        inst.optimal_index
    );

    let pc = cfg.policy_config(PolicyKind::GgEstt, 2, seed);
    let out = run_policy(&inst, &pc);
    if let Some(e) = &out.failure {
        return Err(gbl::Error::Config(e.to_string()));
    }
    let rate = hit_rate(&out.records, &top);
    for t in [50, 100, 250, 500, 1000, 1500, 2000] {
        if t <= rate.len() {
            println!("t = {t:>5}  hit rate {:.3}", rate[t - 1]);
        }
    }
    let tail = &out.records[out.records.len() - 200..];
    let recent = tail.iter().filter(|r| r.hit).count() as f64 / tail.len() as f64;
    println!("hit rate over the last 200 rounds: {recent:.3}");
    Ok(())
}
