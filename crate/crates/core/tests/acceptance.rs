//! Acceptance criteria A1-A8. Runs as a plain binary (no libtest harness) and
//! prints one PASS/FAIL line per criterion; exits non-zero if any fail.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

use gbl::envs::{
    draw_noise, ingest_reward_matrix, make_theta, mu_star_monte_carlo, standard_normal_matrix,
    IngestOptions, LinkFamily,
};
use gbl::graphs::{alpha_max, ba_graph, er_graph, knn_graph, laplacian, quad_kernel, Graph};
use gbl::harness::{
    instance_for_seed, read_results, run_experiment, run_sweep, window_ratio, ExperimentConfig,
    ExperimentResult, GraphSpec, InstanceSpec, SweepParam, AGGREGATE_FILE, RAW_FILE,
};
use gbl::linalg::{frob_inner, sorted_symmetric_eigen};
use gbl::rng::{seeded, stream, Stream};
use gbl::stage1::{
    default_nu_beta, estimate_theta_stage1, rearrangement, split_and_transform, svt, Stage1Config,
    TheoryInputs, TruncatedMoment,
};
use gbl::stage2::{fit_glm_penalized_from, init_design, PenaltySpec};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs_dir().join(name)).expect("reference config")
}

fn final_regret(result: &ExperimentResult, policy: &str) -> f64 {
    result
        .series_for(policy)
        .map_or(f64::NAN, |s| s.mean_final_regret())
}

// Adjacent levels may rise by at most 5%.
fn monotone_within(values: &[f64], tol: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] * (1.0 + tol))
}

fn a1() -> Outcome {
    let start = Instant::now();
    let mut cfg = load("reference.toml");
    cfg.experiment.policies = vec!["gg_estt".into()];
    let mut pass = true;
    let mut parts = Vec::new();
    for (param, values) in [
        (SweepParam::GraphP, vec![0.2, 0.5, 0.8]),
        (SweepParam::GraphM, vec![2.0, 5.0, 8.0]),
    ] {
        let points = match run_sweep(&cfg, param, &values) {
            Ok(p) => p,
            Err(e) => return Outcome::new(false, format!("{param} sweep failed: {e}")),
        };
        let regrets: Vec<f64> = points
            .iter()
            .map(|p| final_regret(&p.result, "gg_estt"))
            .collect();
        pass &= monotone_within(&regrets, 0.05);
        parts.push(format!(
            "{param} {:?} -> {}",
            values,
            regrets
                .iter()
                .map(|r| format!("{r:.1}"))
                .collect::<Vec<_>>()
                .join(" / ")
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 600.0;
    parts.push(format!("{secs:.1}s"));
    Outcome::new(pass, parts.join("; "))
}

const FAMILIES: [(&str, &str); 3] = [
    ("linear", "reference.toml"),
    ("logistic", "reference_logistic.toml"),
    ("poisson", "reference_poisson.toml"),
];

fn a2(results: &[(&str, ExperimentResult)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (family, res) in results {
        let ours = final_regret(res, "gg_estt");
        let others: Vec<(&str, f64)> = ["ablation_nograph", "gg_oful", "ucb_glm"]
            .iter()
            .map(|p| (*p, final_regret(res, p)))
            .collect();
        let ok = others.iter().all(|(_, r)| ours < *r);
        pass &= ok;
        parts.push(format!(
            "{family}: gg_estt {ours:.1} vs {}",
            others
                .iter()
                .map(|(p, r)| format!("{p} {r:.1}"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn a3(results: &[(&str, ExperimentResult)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (family, res) in results {
        let Some(series) = res.series_for("gg_estt") else {
            return Outcome::new(false, format!("{family}: no gg_estt runs"));
        };
        let t1 = res
            .runs
            .iter()
            .find(|r| r.policy == "gg_estt")
            .map_or(0, |r| r.diagnostics.t1);
        let cum = series.mean_cum_regret();
        let ratio = window_ratio(&cum, t1, cum.len() / 4);
        pass &= ratio < 0.6;
        parts.push(format!("{family} {ratio:.3}"));
    }
    Outcome::new(
        pass,
        format!("late/early quartile ratio {}", parts.join(", ")),
    )
}

/// Stage-1 error against `μ*Θ*` from standard normal exploration, averaged
/// over five instances of the reference shape.
fn a4() -> Outcome {
    let base = load("reference.toml");
    let family = base.family.build().expect("family");
    let t1s = [100usize, 400, 1600];
    let reps = 5u64;
    let mut errors = vec![0.0; t1s.len()];
    for rep in 0..reps {
        let seed = base.experiment.seed + rep;
        let inst = instance_for_seed(&base, seed).expect("instance");
        let theta = &inst.true_param.theta;
        let mu_star = mu_star_monte_carlo(
            theta,
            &inst.family,
            20_000,
            &mut stream(seed, Stream::MonteCarlo),
        );
        let n = inst.n_actions();
        let kernel_lambda = 0.01;
        let alpha = alpha_max(kernel_lambda, family.a_mu, n).expect("alpha_max");
        let kernel =
            quad_kernel(&inst.stack, &laplacian(&inst.graph), family.a_mu, alpha).expect("kernel");
        for (slot, &t1) in t1s.iter().enumerate() {
            let mut rng = stream(seed, Stream::Explore);
            let mut noise = stream(seed, Stream::Noise);
            let samples: Vec<(DMatrix<f64>, f64)> = (0..t1)
                .map(|_| {
                    let g = standard_normal_matrix(inst.d1, inst.d2, &mut rng);
                    let draw = draw_noise(&mut noise);
                    let y = inst.family.sample_from(frob_inner(&g, theta), draw);
                    (g, y)
                })
                .collect();
            let inp = TheoryInputs {
                d1: inst.d1,
                d2: inst.d2,
                t1,
                gamma: 1.0,
                omega: inst.family.omega,
                r_max: 1.0,
                delta: 0.01,
                zeta: 1.0,
            };
            let (nu, _) = default_nu_beta(&inp);
            let moment = TruncatedMoment::from_samples(samples.iter().map(|(g, y)| (g, *y)), nu)
                .expect("moment");
            // nuclear weight on the scale of the noise in M̄
            let log_term = (2.0 * (inst.d1 + inst.d2) as f64 / 0.01).ln();
            let lambda = ((inst.d1 + inst.d2) as f64 * log_term / t1 as f64)
                .sqrt()
                .min(1.0);
            let cfg = Stage1Config {
                lambda,
                alpha,
                rank: inst.true_param.rank,
                t1,
                ..Stage1Config::default()
            };
            let est = estimate_theta_stage1(&moment, &kernel, &cfg).expect("stage 1");
            errors[slot] += (&est.theta - theta * mu_star).norm() / reps as f64;
        }
    }
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let ratio = errors[0] / errors[2];
    Outcome::new(
        decreasing && ratio >= 2.0,
        format!(
            "error at T1 100/400/1600 = {:.4} / {:.4} / {:.4}, ratio {ratio:.2}",
            errors[0], errors[1], errors[2]
        ),
    )
}

fn random_graph(n: usize, rng: &mut gbl::rng::Rng) -> Graph {
    er_graph(n, 0.3, rng).expect("graph")
}

fn a5() -> Outcome {
    let mut rng = seeded(5);
    let mut worst = [0.0f64; 5];

    // proximal solve with alpha = 0 against one-shot SVT
    for _ in 0..10 {
        let (d1, d2, n) = (5, 4, 30);
        let stack = DMatrix::from_fn(n, d1 * d2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let kernel =
            quad_kernel(&stack, &laplacian(&random_graph(n, &mut rng)), 1.0, 0.0).expect("kernel");
        let samples: Vec<(DMatrix<f64>, f64)> = (0..50)
            .map(|_| {
                let g = standard_normal_matrix(d1, d2, &mut rng);
                (g, rng.sample(StandardNormal))
            })
            .collect();
        let moment =
            TruncatedMoment::from_samples(samples.iter().map(|(g, y)| (g, *y)), 0.3).unwrap();
        let lambda = 0.4;
        let est = estimate_theta_stage1(
            &moment,
            &kernel,
            &Stage1Config {
                lambda,
                ..Stage1Config::default()
            },
        )
        .unwrap();
        let closed = svt(&moment.mbar, lambda / 2.0);
        worst[0] = worst[0].max((&est.theta - closed).amax());
    }

    // linear penalized fit against ridge, and the design bookkeeping
    for trial in 0..10 {
        let d = 6;
        let rho = 0.5 + trial as f64 * 0.1;
        let penalty = PenaltySpec::ridge(rho, d).unwrap();
        let family = LinkFamily::linear(0.1).unwrap();
        let xs: Vec<DVector<f64>> = (0..40)
            .map(|_| DVector::from_fn(d, |_, _| rng.sample(StandardNormal)))
            .collect();
        let ys: Vec<f64> = xs.iter().map(|_| rng.sample(StandardNormal)).collect();
        let seed_pairs: Vec<(DVector<f64>, f64)> = xs[..5]
            .iter()
            .cloned()
            .zip(ys[..5].iter().copied())
            .collect();
        let mut state = init_design(&penalty, family.c_mu, &seed_pairs).unwrap();
        let v0 = penalty.matrix() / family.c_mu;
        for (x, y) in xs[5..].iter().zip(&ys[5..]) {
            state.update_design(x, *y).unwrap();
        }
        let fit = fit_glm_penalized_from(&state, &penalty, &family, &DVector::zeros(d)).unwrap();
        let mut gram = DMatrix::identity(d, d) * rho;
        let mut xty = DVector::zeros(d);
        for (x, y) in xs.iter().zip(&ys) {
            gram += x * x.transpose();
            xty += x * *y;
        }
        let ridge = gram.clone().cholesky().unwrap().solve(&xty);
        worst[1] = worst[1].max((&fit.theta - ridge).amax());

        let direct = gram.clone().try_inverse().unwrap();
        worst[2] = worst[2].max((&state.vinv - direct).amax());

        let increment = (gram.determinant() / v0.determinant()).ln();
        worst[3] = worst[3].max((state.logdet_v - state.logdet_v0 - increment).abs());
    }

    // quadratic forms against pairwise sums over edges
    for _ in 0..10 {
        let n = 25;
        let g = random_graph(n, &mut rng);
        let l = laplacian(&g);
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let pairwise: f64 = g.edges().map(|(a, b)| (v[a] - v[b]).powi(2)).sum();
        let quad = v.dot(&(&l * &v));
        worst[4] = worst[4].max((quad - pairwise).abs() / pairwise.max(1.0));

        let d = 6;
        let stack = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (a_mu, alpha) = (0.7, 0.3);
        let kernel = quad_kernel(&stack, &l, a_mu, alpha).unwrap();
        let theta: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let z = &stack * DVector::from_column_slice(&theta);
        let pairwise: f64 =
            a_mu * alpha * g.edges().map(|(a, b)| (z[a] - z[b]).powi(2)).sum::<f64>();
        worst[4] = worst[4].max((kernel.quad_form(&theta) - pairwise).abs() / pairwise.max(1.0));
    }

    let tol = [1e-6, 1e-8, 1e-8, 1e-8, 1e-10];
    let pass = worst.iter().zip(tol).all(|(w, t)| *w <= t);
    Outcome::new(
        pass,
        format!(
            "svt {:.1e}, ridge {:.1e}, rank-1 inverse {:.1e}, logdet {:.1e}, quad form {:.1e}",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    )
}

fn transform_and_tail_checks(rng: &mut gbl::rng::Rng) -> Result<(), String> {
    for trial in 0..100 {
        let (d1, d2) = (3 + trial % 4, 3 + (trial / 4) % 4);
        let r = 1 + trial % 2;
        let tp = make_theta(d1, d2, r, &Graph::empty(d1), &Graph::empty(d2), 1.0, rng)
            .map_err(|e| e.to_string())?;
        let noise = standard_normal_matrix(d1, d2, rng) * (0.05 + 0.1 * (trial % 5) as f64);
        let tr = split_and_transform(&(&tp.theta + noise), r).map_err(|e| e.to_string())?;

        let x = standard_normal_matrix(d1, d2, rng);
        let xt = tr.rearrange(&tr.rotate(&x));
        let th = tr.rearrange(&tr.rotate(&tp.theta));
        if (xt.dot(&th) - frob_inner(&x, &tp.theta)).abs() > 1e-10 {
            return Err(format!("inner product not preserved (trial {trial})"));
        }
        if (xt.norm() - x.norm()).abs() > 1e-12 {
            return Err(format!("norm not preserved (trial {trial})"));
        }
        let rotated = tr.rotate(&x);
        if (tr.unrearrange(&tr.rearrange(&rotated)) - &rotated).amax() != 0.0 {
            return Err(format!("rearrangement not invertible (trial {trial})"));
        }
        let mut perm = rearrangement(d1, d2, r);
        perm.sort_unstable();
        if perm != (0..d1 * d2).collect::<Vec<_>>() {
            return Err(format!("rearrangement not a bijection (trial {trial})"));
        }
        if tr.k != (d1 + d2 - r) * r {
            return Err(format!("k = {} (trial {trial})", tr.k));
        }
        let tail = th.rows(tr.k, d1 * d2 - tr.k).norm_squared();
        let bound = (tr.u_hat_perp.transpose() * &tp.u_star).norm_squared()
            * (tr.v_hat_perp.transpose() * &tp.v_star).norm_squared();
        if tail > bound + 1e-10 {
            return Err(format!(
                "tail {tail:.3e} above bound {bound:.3e} (trial {trial})"
            ));
        }
    }
    Ok(())
}

fn laplacian_checks(rng: &mut gbl::rng::Rng) -> Result<(), String> {
    for trial in 0..30 {
        let n = 10 + trial;
        let g = match trial % 3 {
            0 => er_graph(n, 0.3, rng),
            1 => ba_graph(n, 2, rng),
            _ => {
                let pts: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..3).map(|_| rng.sample(StandardNormal)).collect())
                    .collect();
                knn_graph(&pts, 3)
            }
        }
        .map_err(|e| e.to_string())?;
        let l = laplacian(&g);
        let row_sum = l.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max);
        if row_sum > 1e-12 {
            return Err(format!("row sum {row_sum:.3e} (trial {trial})"));
        }
        let (vals, _) = sorted_symmetric_eigen(&l);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            return Err(format!("eigenvalue {min:.3e} (trial {trial})"));
        }
    }
    Ok(())
}

fn glm_checks() -> Result<(), String> {
    let families = [
        LinkFamily::linear(0.1).map_err(|e| e.to_string())?,
        LinkFamily::logistic(),
        LinkFamily::poisson(),
    ];
    let h = 1e-4;
    for f in &families {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=100 {
            let z = -1.0 + 0.02 * i as f64;
            let fd = (f.mu(z + h) - f.mu(z - h)) / (2.0 * h);
            if (fd - f.mu_prime(z)).abs() > 1e-6 {
                return Err(format!("{:?} derivative mismatch at {z}", f.kind));
            }
            lo = lo.min(f.mu_prime(z));
            hi = hi.max(f.mu_prime(z));
        }
        if lo < f.c_mu - 1e-9 || hi > f.k_mu + 1e-9 {
            return Err(format!(
                "{:?} mu' range [{lo}, {hi}] outside [{}, {}]",
                f.kind, f.c_mu, f.k_mu
            ));
        }
    }
    Ok(())
}

fn regret_checks(results: &[(&str, ExperimentResult)]) -> Result<(), String> {
    for (family, res) in results {
        for run in &res.runs {
            if let Some(r) = run
                .records
                .iter()
                .find(|r| r.instant_regret.is_nan() || r.instant_regret < 0.0)
            {
                return Err(format!(
                    "{family} {} rep {} round {}: regret {}",
                    run.policy, run.rep, r.t, r.instant_regret
                ));
            }
        }
    }
    Ok(())
}

fn determinism_check() -> Result<(), String> {
    let mut cfg = load("reference.toml");
    cfg.experiment.reps = 2;
    cfg.experiment.horizon = 300;
    let dirs = [tempfile::tempdir(), tempfile::tempdir()];
    let mut bytes = Vec::new();
    for dir in &dirs {
        let dir = dir.as_ref().map_err(|e| e.to_string())?;
        run_experiment(&cfg)
            .and_then(|r| r.write(dir.path()))
            .map_err(|e| e.to_string())?;
        let raw = std::fs::read(dir.path().join(RAW_FILE)).map_err(|e| e.to_string())?;
        let agg = std::fs::read(dir.path().join(AGGREGATE_FILE)).map_err(|e| e.to_string())?;
        bytes.push((raw, agg));
    }
    if bytes[0] != bytes[1] {
        return Err("CSV output differs between identical runs".into());
    }
    Ok(())
}

fn a6(results: &[(&str, ExperimentResult)]) -> Outcome {
    let mut rng = seeded(6);
    let checks: [(&str, Result<(), String>); 5] = [
        ("transform+tail", transform_and_tail_checks(&mut rng)),
        ("laplacian", laplacian_checks(&mut rng)),
        ("glm derivatives", glm_checks()),
        ("regret >= 0", regret_checks(results)),
        ("determinism", determinism_check()),
    ];
    let failures: Vec<String> = checks
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect();
    if failures.is_empty() {
        Outcome::new(
            true,
            checks
                .iter()
                .map(|(n, _)| *n)
                .collect::<Vec<_>>()
                .join(", "),
        )
    } else {
        Outcome::new(false, failures.join("; "))
    }
}

fn a7(linear: &ExperimentResult) -> Outcome {
    let hit = linear
        .series_for("gg_estt")
        .and_then(|s| s.mean_hit_rate().last().copied())
        .unwrap_or(f64::NAN);
    Outcome::new(hit >= 0.8, format!("gg_estt hit rate at T = {hit:.4}"))
}

fn write_matrix(path: &Path, m: &DMatrix<f64>) {
    let text: String = m
        .row_iter()
        .map(|r| {
            r.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
                + "\n"
        })
        .collect();
    std::fs::write(path, text).expect("write matrix");
}

fn a8() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut rng = seeded(8);
    let (n1, n2) = (20, 20);
    let left = DMatrix::from_fn(n1, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
    let right = DMatrix::from_fn(3, n2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let reward = left * right;
    let path = dir.path().join("reward.csv");
    write_matrix(&path, &reward);

    let inst = match ingest_reward_matrix(
        &path,
        LinkFamily::linear(0.01).unwrap(),
        &IngestOptions::default(),
    ) {
        Ok(i) => i,
        Err(e) => return Outcome::new(false, format!("ingest failed: {e}")),
    };
    let normalized = &reward / reward.norm();
    let expected = inst.expected_rewards();
    let round_trip = (0..n1 * n2)
        .map(|idx| (expected[idx] - normalized[(idx / n2, idx % n2)]).abs())
        .fold(0.0, f64::max);

    let mut cfg = load("reference.toml");
    cfg.instance = InstanceSpec::Matrix {
        path: path.clone(),
        rank: None,
        has_header: false,
        impute_missing_zero: false,
    };
    cfg.graph = GraphSpec::Knn { k: 5 };
    cfg.experiment.horizon = 400;
    cfg.experiment.reps = 2;
    let out = dir.path().join("run");
    let written = run_experiment(&cfg).and_then(|r| r.write(&out).map(|_| r));
    let csv_ok = match written.and_then(|_| read_results(&out)) {
        Ok((raw, agg)) => {
            let policies = cfg.experiment.policies.len();
            raw.len() == policies * cfg.experiment.reps * cfg.experiment.horizon
                && agg.len() == policies * cfg.experiment.horizon
                && raw
                    .iter()
                    .all(|r| r.cum_regret.is_finite() && r.reward.is_finite())
                && agg.iter().all(|a| a.mean_cum_regret.is_finite())
        }
        Err(e) => return Outcome::new(false, format!("end-to-end run failed: {e}")),
    };
    Outcome::new(
        round_trip <= 1e-8 && csv_ok,
        format!(
            "round-trip max error {round_trip:.1e}; rank {}; CSVs valid: {csv_ok}",
            inst.true_param.rank
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let results: Vec<(&str, ExperimentResult)> = FAMILIES
        .iter()
        .map(|(family, file)| {
            let res = run_experiment(&load(file)).expect("reference experiment");
            (*family, res)
        })
        .collect();

    let outcomes = [
        ("A1", a1()),
        ("A2", a2(&results)),
        ("A3", a3(&results)),
        ("A4", a4()),
        ("A5", a5()),
        ("A6", a6(&results)),
        ("A7", a7(&results[0].1)),
        ("A8", a8()),
    ];
    let mut failed = 0;
    for (name, o) in &outcomes {
        println!(
            "{name} {} {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.1}s)",
        outcomes.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
