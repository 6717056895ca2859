use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gbl::envs::FamilyKind;
use gbl::harness::{
    run_experiment, run_sweep, write_sweep, ExperimentConfig, GraphSpec, InstanceSpec, SweepParam,
};
use gbl::Error;

const REFERENCE_CONFIG: &str = include_str!("../../../../configs/reference.toml");

#[derive(Parser)]
#[command(
    name = "gbl",
    version,
    about = "Graph-informed low-rank matrix bandit experiments"
)]
struct Cli {
    /// Base seed; rep i uses seed + i.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured policy on every rep and write raw and aggregate CSVs.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build an instance from a reward-matrix file and run the policies on it.
    Ingest {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, value_parser = parse_family)]
        family: FamilyKind,
        /// Policy and horizon settings; the built-in reference config if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Neighbours per action in the k-NN action graph.
        #[arg(long, default_value_t = 5)]
        knn: usize,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        header: bool,
        /// Read empty cells as zero.
        #[arg(long)]
        impute_zero: bool,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Repeat the experiment over action-graph parameter values.
    Sweep {
        #[arg(long, value_parser = ["graph_p", "graph_m"])]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Base config; the built-in reference config if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_family(s: &str) -> Result<FamilyKind, String> {
    match s {
        "linear" => Ok(FamilyKind::Linear),
        "logistic" => Ok(FamilyKind::Logistic),
        "poisson" => Ok(FamilyKind::Poisson),
        other => Err(format!(
            "unknown family '{other}' (linear, logistic or poisson)"
        )),
    }
}

fn load(path: Option<&PathBuf>) -> gbl::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => ExperimentConfig::from_toml_str(REFERENCE_CONFIG),
    }
}

fn apply_overrides(cli: &Cli, cfg: &mut ExperimentConfig) -> gbl::Result<()> {
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(reps) = cli.reps {
        cfg.experiment.reps = reps;
    }
    if let Some(out) = &cli.out {
        cfg.experiment.out = out.clone();
    }
    cfg.validate()
}

fn report(result: &gbl::harness::ExperimentResult) {
    for s in &result.series {
        println!(
            "{:<18} reps {}  mean final regret {:>10.3}  final hit rate {:.3}",
            s.policy,
            s.n_reps(),
            s.mean_final_regret(),
            s.mean_hit_rate().last().copied().unwrap_or(f64::NAN)
        );
    }
    for f in &result.failed {
        eprintln!("warning: {} rep {} failed: {}", f.policy, f.rep, f.message);
    }
}

fn run(cli: &Cli) -> gbl::Result<()> {
    match &cli.command {
        Command::Simulate { config } => {
            let mut cfg = ExperimentConfig::load(config)?;
            apply_overrides(cli, &mut cfg)?;
            let result = run_experiment(&cfg)?;
            report(&result);
            let (raw, agg) = result.write(&cfg.experiment.out)?;
            println!("wrote {} and {}", raw.display(), agg.display());
        }
        Command::Ingest {
            matrix,
            family,
            config,
            knn,
            rank,
            header,
            impute_zero,
            horizon,
        } => {
            let mut cfg = load(config.as_ref())?;
            cfg.instance = InstanceSpec::Matrix {
                path: matrix.clone(),
                rank: *rank,
                has_header: *header,
                impute_missing_zero: *impute_zero,
            };
            cfg.graph = GraphSpec::Knn { k: *knn };
            cfg.family.name = *family;
            if *family != FamilyKind::Linear {
                cfg.family.omega = None;
            }
            if let Some(h) = horizon {
                cfg.experiment.horizon = *h;
            }
            apply_overrides(cli, &mut cfg)?;
            let result = run_experiment(&cfg)?;
            report(&result);
            let (raw, agg) = result.write(&cfg.experiment.out)?;
            println!("wrote {} and {}", raw.display(), agg.display());
        }
        Command::Sweep {
            param,
            values,
            config,
        } => {
            let param: SweepParam = param.parse()?;
            let mut cfg = load(config.as_ref())?;
            apply_overrides(cli, &mut cfg)?;
            let points = run_sweep(&cfg, param, values)?;
            for p in &points {
                println!("{param}={}", p.value);
                report(&p.result);
            }
            let path = write_sweep(&cfg.experiment.out, param, &points)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
