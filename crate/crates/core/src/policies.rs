//! The two-stage policy, its no-graph ablation, the vectorized graph UCB
//! and a plain GLM-UCB baseline.
//!
//! All four share the same exploration phase. Every random quantity a run
//! consumes (exploration choices and per-round reward noise) is drawn up
//! front from named streams of the run seed, so runs with equal seeds face
//! identical draws round by round.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::envs::{draw_noise, standard_normal_matrix, BanditInstance, NoiseDraw};
use crate::error::{Error, Result};
use crate::graphs::{check_alpha, laplacian, quad_kernel, LaplacianKernel};
use crate::linalg::{frob_inner, sin_theta, vec_of};
use crate::rng::{stream, Stream};
use crate::stage1::{
    default_nu_beta, estimate_theta_stage1, rotate_and_rearrange_action, split_and_transform,
    tau_bound, Stage1Config, SubspaceTransform, TheoryInputs, TruncatedMoment,
};
use crate::stage2::{
    confidence_radius_with, fit_glm_penalized, init_design, lambda_perp_default,
    select_ucb_tracked, PenaltySpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    GgEstt,
    GgOful,
    AblationNograph,
    UcbGlm,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::GgEstt,
        PolicyKind::AblationNograph,
        PolicyKind::GgOful,
        PolicyKind::UcbGlm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::GgEstt => "gg_estt",
            PolicyKind::GgOful => "gg_oful",
            PolicyKind::AblationNograph => "ablation_nograph",
            PolicyKind::UcbGlm => "ucb_glm",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown policy '{s}'")))
    }
}

/// How exploration rounds pick what to play.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exploration {
    /// A uniformly random action from the finite set.
    Uniform,
    /// A fresh standard normal feature matrix `G`; the played feature is
    /// `G/‖G‖` and Stage 1 sees `(G, y)`, whose score is `G` itself.
    Gaussian,
}

#[derive(Debug, Clone)]
pub struct PolicyConfig {
    pub name: String,
    pub kind: PolicyKind,
    pub horizon: usize,
    /// Exploration length; `None` uses [`t1_default`] with `ĉ_r = 1`.
    pub t1: Option<usize>,
    pub rank: usize,
    /// Nuclear-norm weight of Stage 1.
    pub lambda: f64,
    /// Laplacian weight, shared by both stages.
    pub alpha: f64,
    /// Truncation scale; `None` uses the theory default.
    pub nu: Option<f64>,
    pub lambda2: f64,
    pub lambda_perp: Option<f64>,
    pub delta: f64,
    /// Tail bound override; `None` uses the plug-in bound.
    pub tau: Option<f64>,
    /// Graph factor in the theory constants.
    pub zeta: f64,
    pub exploration: Exploration,
    pub hit_pct: f64,
    pub seed: u64,
    pub stage1_max_iters: usize,
    /// Multiplier on every confidence radius; `1.0` keeps the theory width.
    pub width_scale: f64,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind, horizon: usize, rank: usize, seed: u64) -> Self {
        PolicyConfig {
            name: kind.name().to_string(),
            kind,
            horizon,
            t1: None,
            rank,
            lambda: 0.01,
            alpha: 0.0,
            nu: None,
            lambda2: 1.0,
            lambda_perp: None,
            delta: 0.01,
            tau: None,
            zeta: 1.0,
            exploration: Exploration::Uniform,
            hit_pct: 5.0,
            seed,
            stage1_max_iters: 500,
            width_scale: 1.0,
        }
    }

    pub fn with_kind(&self, kind: PolicyKind) -> Self {
        PolicyConfig {
            name: kind.name().to_string(),
            kind,
            ..self.clone()
        }
    }

    /// Exploration length used for `inst`.
    pub fn resolved_t1(&self, inst: &BanditInstance) -> usize {
        self.t1.unwrap_or_else(|| {
            t1_default(
                inst.d1,
                inst.d2,
                self.rank,
                inst.sampling_gamma,
                self.horizon,
                1.0,
            )
        })
    }

    fn validate(&self, inst: &BanditInstance) -> Result<usize> {
        if self.horizon < 2 {
            return Err(Error::Config(format!(
                "horizon must be at least 2, got {}",
                self.horizon
            )));
        }
        let t1 = self.resolved_t1(inst);
        if t1 > self.horizon {
            return Err(Error::Config(format!(
                "t1 = {t1} exceeds horizon {}",
                self.horizon
            )));
        }
        let two_stage = matches!(self.kind, PolicyKind::GgEstt | PolicyKind::AblationNograph);
        if two_stage && t1 == 0 {
            return Err(Error::Config("two-stage policies need t1 >= 1".into()));
        }
        if self.rank == 0 || self.rank > inst.d1.min(inst.d2) {
            return Err(Error::Config(format!(
                "rank {} outside [1, min(d1, d2)]",
                self.rank
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda <= 1.0) {
            return Err(Error::Config(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Config(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        if !(self.width_scale >= 0.0 && self.width_scale.is_finite()) {
            return Err(Error::Config(format!(
                "width_scale must be non-negative, got {}",
                self.width_scale
            )));
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(Error::Config(format!(
                "zeta must lie in (0, 1], got {}",
                self.zeta
            )));
        }
        Ok(t1)
    }
}

/// One round of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based round.
    pub t: usize,
    /// Index into the action set; `None` for off-set Gaussian exploration.
    pub action: Option<usize>,
    pub reward: f64,
    pub instant_regret: f64,
    pub hit: bool,
    /// Seconds spent deciding and updating in this round.
    pub elapsed: f64,
}

/// Stage-level quantities reported alongside the records.
#[derive(Debug, Clone, Default)]
pub struct RunDiagnostics {
    pub t1: usize,
    pub k: Option<usize>,
    pub tau: Option<f64>,
    pub nu: Option<f64>,
    pub lambda_perp: Option<f64>,
    pub stage1_iterations: Option<usize>,
    pub stage1_converged: Option<bool>,
    /// `r`-th singular value of the Stage-1 estimate.
    pub c_r_hat: Option<f64>,
    /// `max(‖Û⊥ᵀU*‖, ‖V̂⊥ᵀV*‖)` in operator norm.
    pub subspace_error: Option<f64>,
    /// Norm of the true parameter's coordinates past `k`.
    pub tail_norm: Option<f64>,
    pub final_width: Option<f64>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub policy: String,
    pub records: Vec<StepRecord>,
    pub diagnostics: RunDiagnostics,
    /// Set when the run aborted; `records` then holds the completed prefix.
    pub failure: Option<Error>,
}

impl RunOutcome {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn cumulative_regret(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.records
            .iter()
            .map(|r| {
                acc += r.instant_regret;
                acc
            })
            .collect()
    }

    pub fn final_regret(&self) -> f64 {
        self.records.iter().map(|r| r.instant_regret).sum()
    }
}

/// `ceil(sqrt(d1 d2 γ r T) / ĉ_r)`, capped at `T/2`, then floored at
/// `r (d1 + d2)`. The floor wins when the two collide.
pub fn t1_default(
    d1: usize,
    d2: usize,
    rank: usize,
    gamma: f64,
    horizon: usize,
    c_r_hat: f64,
) -> usize {
    let raw = ((d1 * d2) as f64 * gamma * rank as f64 * horizon as f64).sqrt() / c_r_hat;
    let raw = raw.ceil() as usize;
    raw.min(horizon / 2).max(rank * (d1 + d2))
}

/// Per-round draws shared by every policy run with the same seed.
#[derive(Debug, Clone)]
pub struct RoundDraws {
    pub noise: Vec<NoiseDraw>,
    pub explore_index: Vec<usize>,
    pub explore_gaussian: Vec<DMatrix<f64>>,
}

impl RoundDraws {
    pub fn new(
        seed: u64,
        horizon: usize,
        t1: usize,
        inst: &BanditInstance,
        mode: Exploration,
    ) -> Self {
        let mut noise_rng = stream(seed, Stream::Noise);
        let noise = (0..horizon).map(|_| draw_noise(&mut noise_rng)).collect();
        let mut explore_rng = stream(seed, Stream::Explore);
        let mut explore_index = Vec::with_capacity(t1);
        let mut explore_gaussian = Vec::new();
        for _ in 0..t1 {
            match mode {
                Exploration::Uniform => {
                    explore_index.push(explore_rng.random_range(0..inst.n_actions()))
                }
                Exploration::Gaussian => explore_gaussian.push(standard_normal_matrix(
                    inst.d1,
                    inst.d2,
                    &mut explore_rng,
                )),
            }
        }
        RoundDraws {
            noise,
            explore_index,
            explore_gaussian,
        }
    }
}

/// What Stage 1 and Stage 2 need from one exploration round.
struct ExploreSample {
    played: DMatrix<f64>,
    score_input: DMatrix<f64>,
    y: f64,
}

struct Recorder<'a> {
    inst: &'a BanditInstance,
    hit_set: Vec<bool>,
    records: Vec<StepRecord>,
    clock: Instant,
}

impl<'a> Recorder<'a> {
    fn new(inst: &'a BanditInstance, hit_pct: f64, horizon: usize) -> Result<Self> {
        let mut hit_set = vec![false; inst.n_actions()];
        for i in inst.top_set(hit_pct)? {
            hit_set[i] = true;
        }
        Ok(Recorder {
            inst,
            hit_set,
            records: Vec::with_capacity(horizon),
            clock: Instant::now(),
        })
    }

    fn push(&mut self, action: Option<usize>, reward: f64, regret: f64) {
        let elapsed = self.clock.elapsed().as_secs_f64();
        self.clock = Instant::now();
        self.records.push(StepRecord {
            t: self.records.len() + 1,
            action,
            reward,
            instant_regret: regret.max(0.0),
            hit: action.is_some_and(|i| self.hit_set[i]),
            elapsed,
        });
    }

    fn push_action(&mut self, index: usize, reward: f64) {
        let regret = self.inst.instant_regret(index);
        self.push(Some(index), reward, regret);
    }
}

fn explore_phase(
    inst: &BanditInstance,
    draws: &RoundDraws,
    t1: usize,
    rec: &mut Recorder<'_>,
) -> Vec<ExploreSample> {
    let mut samples = Vec::with_capacity(t1);
    for t in 0..t1 {
        if let Some(&i) = draws.explore_index.get(t) {
            let y = inst.sample_reward_index(i, draws.noise[t]);
            rec.push_action(i, y);
            samples.push(ExploreSample {
                played: inst.actions[i].clone(),
                score_input: inst.actions[i].clone(),
                y,
            });
        } else {
            let g = &draws.explore_gaussian[t];
            let played = g / g.norm();
            let z = frob_inner(&played, &inst.true_param.theta);
            let y = inst.family.sample_from(z, draws.noise[t]);
            let regret = inst.optimal_reward() - inst.family.mu(z);
            rec.push(None, y, regret);
            samples.push(ExploreSample {
                played,
                score_input: g.clone(),
                y,
            });
        }
    }
    samples
}

/// The UCB loop for rounds `t1..T` on feature rows `stack`.
fn ucb_phase(
    inst: &BanditInstance,
    cfg: &PolicyConfig,
    draws: &RoundDraws,
    t1: usize,
    stack: &DMatrix<f64>,
    history: Vec<(DVector<f64>, f64)>,
    penalty: &PenaltySpec,
    width_constant: f64,
    rec: &mut Recorder<'_>,
) -> Result<f64> {
    let fam = &inst.family;
    let mut state = init_design(penalty, fam.c_mu, &history)?;
    state.track_widths(stack)?;
    let mut e_t = f64::NAN;
    for t in t1..cfg.horizon {
        if !state.history.is_empty() {
            fit_glm_penalized(&mut state, penalty, fam)?;
        }
        e_t =
            cfg.width_scale * confidence_radius_with(&state, fam.omega, cfg.delta, width_constant);
        let i = select_ucb_tracked(&state, e_t, fam)?;
        let y = inst.sample_reward_index(i, draws.noise[t]);
        rec.push_action(i, y);
        state.update_design(&stack.row(i).transpose(), y)?;
    }
    Ok(e_t)
}

fn kernel_on(
    stack: &DMatrix<f64>,
    inst: &BanditInstance,
    alpha: f64,
) -> Result<Option<LaplacianKernel>> {
    if alpha == 0.0 {
        return Ok(None);
    }
    quad_kernel(stack, &laplacian(&inst.graph), inst.family.a_mu, alpha).map(Some)
}

fn run_two_stage(inst: &BanditInstance, cfg: &PolicyConfig, alpha: f64) -> RunOutcome {
    let mut diag = RunDiagnostics::default();
    let mut rec = None;
    let result = two_stage_inner(inst, cfg, alpha, &mut diag, &mut rec);
    finish(cfg, rec, diag, result)
}

fn finish(
    cfg: &PolicyConfig,
    rec: Option<Recorder<'_>>,
    diag: RunDiagnostics,
    result: Result<()>,
) -> RunOutcome {
    let records = rec.map(|r| r.records).unwrap_or_default();
    if let Err(e) = &result {
        warn!("{} aborted after {} rounds: {e}", cfg.name, records.len());
    }
    RunOutcome {
        policy: cfg.name.clone(),
        records,
        diagnostics: diag,
        failure: result.err(),
    }
}

fn theory_inputs(inst: &BanditInstance, cfg: &PolicyConfig, t1: usize) -> TheoryInputs {
    TheoryInputs {
        d1: inst.d1,
        d2: inst.d2,
        t1,
        gamma: inst.sampling_gamma,
        omega: inst.family.omega,
        r_max: inst.family.r_max,
        delta: cfg.delta,
        zeta: cfg.zeta,
    }
}

fn two_stage_inner<'a>(
    inst: &'a BanditInstance,
    cfg: &PolicyConfig,
    alpha: f64,
    diag: &mut RunDiagnostics,
    rec_slot: &mut Option<Recorder<'a>>,
) -> Result<()> {
    let t1 = cfg.validate(inst)?;
    diag.t1 = t1;
    let draws = RoundDraws::new(cfg.seed, cfg.horizon, t1, inst, cfg.exploration);
    let rec = rec_slot.insert(Recorder::new(inst, cfg.hit_pct, cfg.horizon)?);
    let samples = explore_phase(inst, &draws, t1, rec);
    if t1 == cfg.horizon {
        return Ok(());
    }

    let fam = &inst.family;
    let theory = theory_inputs(inst, cfg, t1);
    let nu = cfg.nu.unwrap_or_else(|| default_nu_beta(&theory).0);
    diag.nu = Some(nu);
    let moment = TruncatedMoment::from_samples(samples.iter().map(|s| (&s.score_input, s.y)), nu)?;
    let raw_kernel = match kernel_on(&inst.stack, inst, alpha)? {
        Some(k) => {
            check_alpha(
                alpha,
                cfg.lambda.max(f64::MIN_POSITIVE),
                fam.a_mu,
                inst.n_actions(),
            );
            k
        }
        None => quad_kernel(
            &DMatrix::identity(inst.dim(), inst.dim()),
            &DMatrix::zeros(inst.dim(), inst.dim()),
            fam.a_mu,
            0.0,
        )?,
    };
    let s1cfg = Stage1Config {
        lambda: cfg.lambda,
        alpha,
        rank: cfg.rank,
        t1,
        max_iters: cfg.stage1_max_iters,
        tol_rel_obj: 1e-8,
    };
    let est = estimate_theta_stage1(&moment, &raw_kernel, &s1cfg)?;
    diag.stage1_iterations = Some(est.iterations);
    diag.stage1_converged = Some(est.converged);

    let transform = split_and_transform(&est.theta, cfg.rank)?;
    let c_r_hat = transform.singular_values[cfg.rank - 1];
    diag.c_r_hat = Some(c_r_hat);
    diag.k = Some(transform.k);
    let tail_sv_max = transform
        .singular_values
        .iter()
        .skip(cfg.rank)
        .fold(0.0f64, |a, &b| a.max(b));
    let tau = match cfg.tau {
        Some(t) => t,
        None if tail_sv_max < 1e-10 => 0.0,
        None => tau_bound(&transform, &theory, None)?,
    };
    diag.tau = Some(tau);
    let tp = &inst.true_param;
    diag.subspace_error = Some(
        sin_theta(&transform.u_hat_perp, &tp.u_star)
            .max(sin_theta(&transform.v_hat_perp, &tp.v_star)),
    );
    let theta_t = transform.rearrange(&transform.rotate(&tp.theta));
    diag.tail_norm = Some(theta_t.rows_range(transform.k..).norm());
    debug!(
        "{}: t1={t1} nu={nu:.4} c_r_hat={c_r_hat:.4} tau={tau:.4} subspace_err={:.4}",
        cfg.name,
        diag.subspace_error.unwrap_or(f64::NAN)
    );

    let stack = transformed_stack(inst, &transform)?;
    let history = samples
        .iter()
        .map(|s| Ok((rotate_and_rearrange_action(&s.played, &transform)?, s.y)))
        .collect::<Result<Vec<_>>>()?;
    let lambda_perp = cfg
        .lambda_perp
        .unwrap_or_else(|| lambda_perp_default(fam.c_mu, cfg.horizon, transform.k, cfg.lambda2));
    diag.lambda_perp = Some(lambda_perp);
    let penalty = PenaltySpec::new(
        cfg.lambda2,
        lambda_perp,
        transform.k,
        inst.dim(),
        kernel_on(&stack, inst, alpha)?,
    )?;
    let constant = fam.c_mu.sqrt() * (cfg.lambda2.sqrt() + lambda_perp.sqrt() * tau + 1.0);
    let e_t = ucb_phase(
        inst, cfg, &draws, t1, &stack, history, &penalty, constant, rec,
    )?;
    diag.final_width = Some(e_t);
    Ok(())
}

/// Rows are the rotated and rearranged actions.
pub fn transformed_stack(
    inst: &BanditInstance,
    transform: &SubspaceTransform,
) -> Result<DMatrix<f64>> {
    let mut stack = DMatrix::zeros(inst.n_actions(), inst.dim());
    for (i, a) in inst.actions.iter().enumerate() {
        stack
            .row_mut(i)
            .copy_from(&rotate_and_rearrange_action(a, transform)?.transpose());
    }
    Ok(stack)
}

fn run_vectorized(inst: &BanditInstance, cfg: &PolicyConfig) -> RunOutcome {
    let mut diag = RunDiagnostics::default();
    let mut rec = None;
    let result = vectorized_inner(inst, cfg, &mut diag, &mut rec);
    finish(cfg, rec, diag, result)
}

fn vectorized_inner<'a>(
    inst: &'a BanditInstance,
    cfg: &PolicyConfig,
    diag: &mut RunDiagnostics,
    rec_slot: &mut Option<Recorder<'a>>,
) -> Result<()> {
    let t1 = cfg.validate(inst)?;
    diag.t1 = t1;
    let draws = RoundDraws::new(cfg.seed, cfg.horizon, t1, inst, cfg.exploration);
    let rec = rec_slot.insert(Recorder::new(inst, cfg.hit_pct, cfg.horizon)?);
    let samples = explore_phase(inst, &draws, t1, rec);
    if t1 == cfg.horizon {
        return Ok(());
    }
    let fam = &inst.family;
    let d = inst.dim();
    let history: Vec<_> = samples.iter().map(|s| (vec_of(&s.played), s.y)).collect();
    let (penalty, constant) = match cfg.kind {
        PolicyKind::GgOful => {
            let kernel = kernel_on(&inst.stack, inst, cfg.alpha)?;
            let sigma = kernel.as_ref().map_or(0.0, |k| k.sigma_max_k);
            let constant = fam.c_mu.sqrt() * (1.0 + (cfg.alpha * sigma).sqrt());
            (PenaltySpec::new(1.0, 1.0, d, d, kernel)?, constant)
        }
        _ => (
            PenaltySpec::ridge(cfg.lambda2, d)?,
            (fam.c_mu * cfg.lambda2).sqrt(),
        ),
    };
    let e_t = ucb_phase(
        inst,
        cfg,
        &draws,
        t1,
        &inst.stack,
        history,
        &penalty,
        constant,
        rec,
    )?;
    diag.final_width = Some(e_t);
    Ok(())
}

pub fn run_gg_estt(inst: &BanditInstance, cfg: &PolicyConfig) -> RunOutcome {
    run_two_stage(inst, cfg, cfg.alpha)
}

/// The two-stage policy with `α = 0` in both stages.
pub fn run_ablation_nograph(inst: &BanditInstance, cfg: &PolicyConfig) -> RunOutcome {
    run_two_stage(inst, cfg, 0.0)
}

/// Graph-penalized GLM-UCB on raw vectorized actions with unit ridge.
pub fn run_gg_oful(inst: &BanditInstance, cfg: &PolicyConfig) -> RunOutcome {
    run_vectorized(
        inst,
        &PolicyConfig {
            kind: PolicyKind::GgOful,
            ..cfg.clone()
        },
    )
}

/// Ridge-penalized GLM-UCB on raw vectorized actions, no graph.
pub fn run_ucb_glm(inst: &BanditInstance, cfg: &PolicyConfig) -> RunOutcome {
    run_vectorized(
        inst,
        &PolicyConfig {
            kind: PolicyKind::UcbGlm,
            ..cfg.clone()
        },
    )
}

pub fn run_policy(inst: &BanditInstance, cfg: &PolicyConfig) -> RunOutcome {
    match cfg.kind {
        PolicyKind::GgEstt => run_gg_estt(inst, cfg),
        PolicyKind::AblationNograph => run_ablation_nograph(inst, cfg),
        PolicyKind::GgOful => run_gg_oful(inst, cfg),
        PolicyKind::UcbGlm => run_ucb_glm(inst, cfg),
    }
}
