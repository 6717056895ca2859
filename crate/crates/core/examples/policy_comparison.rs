//! All four policies on the reference instance with paired reps.
//!
//! cargo run --release --example policy_comparison [linear|logistic|poisson] [reps]

use gbl::envs::FamilyKind;
use gbl::harness::{run_experiment, ExperimentConfig};

const REFERENCE: &str = include_str!("../../../configs/reference.toml");

fn main() -> gbl::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = ExperimentConfig::from_toml_str(REFERENCE)?;
    if let Some(name) = args.next() {
        cfg.family.name = match name.as_str() {
            "logistic" => FamilyKind::Logistic,
            "poisson" => FamilyKind::Poisson,
            _ => FamilyKind::Linear,
        };
        if cfg.family.name != FamilyKind::Linear {
            cfg.family.omega = None;
        }
    }
    if let Some(reps) = args.next() {
        cfg.experiment.reps = reps
            .parse()
            .map_err(|_| gbl::Error::Config(format!("bad reps '{reps}'")))?;
    }

    let res = run_experiment(&cfg)?;
    let h = cfg.experiment.horizon;
    println!(
        "{:?} family, T = {h}, reps = {}",
        cfg.family.name, cfg.experiment.reps
    );
    println!(
        "{:<18} {:>12} {:>10} {:>10}",
        "policy", "final regret", "std", "hit rate"
    );
    for s in &res.series {
        let sd = s.std_cum_regret();
        println!(
            "{:<18} {:>12.2} {:>10.2} {:>10.3}",
            s.policy,
            s.mean_final_regret(),
            sd.last().copied().unwrap_or(f64::NAN),
            s.mean_hit_rate()[h - 1]
        );
    }
    println!("\nper-rep diagnostics for gg_estt:");
    for run in res.runs.iter().filter(|r| r.policy == "gg_estt") {
        let d = &run.diagnostics;
        println!(
            "  rep {} seed {}: t1 {} k {:?} tau {:.3} subspace error {:.3} final regret {:.1}",
            run.rep,
            run.seed,
            d.t1,
            d.k,
            d.tau.unwrap_or(f64::NAN),
            d.subspace_error.unwrap_or(f64::NAN),
            run.records.iter().map(|r| r.instant_regret).sum::<f64>()
        );
    }
    Ok(())
}
