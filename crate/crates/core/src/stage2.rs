//! Stage 2: penalized GLM fitting, the incremental design matrix, confidence
//! widths and UCB arm selection.
//!
//! Everything here works on plain coefficient vectors; whether those live in
//! rotated/rearranged coordinates or in raw `vec(X)` coordinates is decided by
//! the caller.

use std::collections::HashMap;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::envs::{argmax_lowest, FamilyKind, LinkFamily};
use crate::error::{Error, Result};
use crate::graphs::LaplacianKernel;
use crate::linalg::{inverse_spd, logdet_spd, symmetrize};

/// Steps between full refactorizations of the design matrix.
pub const REFACTOR_EVERY: usize = 256;
pub const NEWTON_MAX_ITERS: usize = 50;
pub const NEWTON_GRAD_TOL: f64 = 1e-8;
pub const NEWTON_MAX_HALVINGS: usize = 30;

/// `Λ + K` with `Λ = diag(λ₂ × k, λ⊥ × (d − k))`.
#[derive(Debug, Clone)]
pub struct PenaltySpec {
    pub lambda2: f64,
    pub lambda_perp: f64,
    pub k: usize,
    pub kernel: Option<LaplacianKernel>,
    total: DMatrix<f64>,
}

impl PenaltySpec {
    pub fn new(
        lambda2: f64,
        lambda_perp: f64,
        k: usize,
        dim: usize,
        kernel: Option<LaplacianKernel>,
    ) -> Result<Self> {
        if !(lambda2 > 0.0 && lambda_perp > 0.0) {
            return Err(Error::Config(format!(
                "penalties must be positive (lambda2 = {lambda2}, lambda_perp = {lambda_perp})"
            )));
        }
        if k > dim {
            return Err(Error::invalid(format!(
                "split index {k} exceeds dimension {dim}"
            )));
        }
        let mut total = DMatrix::from_diagonal(&DVector::from_fn(dim, |i, _| {
            if i < k {
                lambda2
            } else {
                lambda_perp
            }
        }));
        if let Some(kern) = &kernel {
            if kern.dim() != dim {
                return Err(Error::DimensionMismatch {
                    context: "penalty kernel",
                    expected: dim.to_string(),
                    actual: kern.dim().to_string(),
                });
            }
            total += &kern.kernel;
        }
        Ok(PenaltySpec {
            lambda2,
            lambda_perp,
            k,
            kernel,
            total,
        })
    }

    /// Plain ridge `ρI`.
    pub fn ridge(rho: f64, dim: usize) -> Result<Self> {
        PenaltySpec::new(rho, rho, dim, dim, None)
    }

    pub fn dim(&self) -> usize {
        self.total.nrows()
    }

    /// `Λ + K`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.total
    }
}

/// `c_μ T / (k log(1 + c_μ T / λ₂))`.
pub fn lambda_perp_default(c_mu: f64, horizon: usize, k: usize, lambda2: f64) -> f64 {
    let ct = c_mu * horizon as f64;
    ct / (k as f64 * (ct / lambda2).ln_1p())
}

/// All observations sharing one feature vector, which lets the likelihood
/// be evaluated once per distinct action.
#[derive(Debug, Clone)]
struct FeatureGroup {
    x: DVector<f64>,
    count: f64,
    sum_y: f64,
}

fn feature_key(x: &DVector<f64>) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// `V_t(c_μ) = (Λ + K)/c_μ + Σ x xᵀ` with its inverse and log-determinant,
/// the observation history and the current fit.
#[derive(Debug, Clone)]
pub struct DesignState {
    pub v: DMatrix<f64>,
    pub vinv: DMatrix<f64>,
    pub logdet_v: f64,
    pub logdet_v0: f64,
    pub history: Vec<(DVector<f64>, f64)>,
    pub theta_hat: DVector<f64>,
    groups: Vec<FeatureGroup>,
    group_of: HashMap<Vec<u64>, usize>,
    updates: usize,
    tracked: Option<TrackedWidths>,
}

/// Squared widths `‖x_i‖²_{V⁻¹}` of a fixed action stack, kept current
/// through the same rank-one updates as `V⁻¹`.
#[derive(Debug, Clone)]
struct TrackedWidths {
    stack: DMatrix<f64>,
    sq: DVector<f64>,
}

fn squared_widths(stack: &DMatrix<f64>, vinv: &DMatrix<f64>) -> DVector<f64> {
    let av = stack * vinv;
    DVector::from_fn(stack.nrows(), |i, _| av.row(i).dot(&stack.row(i)).max(0.0))
}

pub fn init_design(
    penalty: &PenaltySpec,
    c_mu: f64,
    exploration: &[(DVector<f64>, f64)],
) -> Result<DesignState> {
    if !(c_mu > 0.0) {
        return Err(Error::invalid(format!("c_mu must be positive, got {c_mu}")));
    }
    let d = penalty.dim();
    let v0 = penalty.matrix() / c_mu;
    let logdet_v0 = logdet_spd(&v0).map_err(|_| {
        Error::Config("initial design matrix (penalty + kernel) is not positive definite".into())
    })?;
    let mut state = DesignState {
        vinv: DMatrix::zeros(d, d),
        v: v0,
        logdet_v: logdet_v0,
        logdet_v0,
        history: Vec::with_capacity(exploration.len()),
        theta_hat: DVector::zeros(d),
        groups: Vec::new(),
        group_of: HashMap::new(),
        updates: 0,
        tracked: None,
    };
    for (x, y) in exploration {
        state.check_dim(x)?;
        state.v.ger(1.0, x, x, 1.0);
        state.record(x.clone(), *y);
    }
    state.refactor()?;
    Ok(state)
}

impl DesignState {
    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    /// Number of distinct feature vectors seen so far.
    pub fn distinct_features(&self) -> usize {
        self.groups.len()
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "design feature",
                expected: self.dim().to_string(),
                actual: x.len().to_string(),
            });
        }
        Ok(())
    }

    fn record(&mut self, x: DVector<f64>, y: f64) {
        let key = feature_key(&x);
        match self.group_of.get(&key) {
            Some(&g) => {
                self.groups[g].count += 1.0;
                self.groups[g].sum_y += y;
            }
            None => {
                self.group_of.insert(key, self.groups.len());
                self.groups.push(FeatureGroup {
                    x: x.clone(),
                    count: 1.0,
                    sum_y: y,
                });
            }
        }
        self.history.push((x, y));
    }

    /// Recomputes the inverse and log-determinant from `V` directly.
    pub fn refactor(&mut self) -> Result<()> {
        symmetrize(&mut self.v);
        self.vinv = inverse_spd(&self.v)?;
        self.logdet_v = logdet_spd(&self.v)?;
        if let Some(tr) = &mut self.tracked {
            tr.sq = squared_widths(&tr.stack, &self.vinv);
        }
        Ok(())
    }

    /// Keeps `‖x_i‖²_{V⁻¹}` for every row of `stack` up to date from now on,
    /// for use with [`select_ucb_tracked`].
    pub fn track_widths(&mut self, stack: &DMatrix<f64>) -> Result<()> {
        if stack.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "tracked action stack",
                expected: self.dim().to_string(),
                actual: stack.ncols().to_string(),
            });
        }
        self.tracked = Some(TrackedWidths {
            sq: squared_widths(stack, &self.vinv),
            stack: stack.clone(),
        });
        Ok(())
    }

    /// `V += xxᵀ` with a rank-one inverse update and the determinant lemma.
    pub fn update_design(&mut self, x: &DVector<f64>, y: f64) -> Result<()> {
        self.check_dim(x)?;
        let vx = &self.vinv * x;
        let denom = 1.0 + x.dot(&vx);
        self.v.ger(1.0, x, x, 1.0);
        self.record(x.clone(), y);
        self.updates += 1;
        if !(denom > 0.0 && denom.is_finite()) || self.updates.is_multiple_of(REFACTOR_EVERY) {
            if !(denom > 0.0 && denom.is_finite()) {
                warn!("rank-one update broke down (1 + x'V^-1x = {denom}); refactorizing");
            }
            return self.refactor();
        }
        self.vinv.ger(-1.0 / denom, &vx, &vx, 1.0);
        self.logdet_v += denom.ln();
        if let Some(tr) = &mut self.tracked {
            let proj = &tr.stack * &vx;
            for (w, p) in tr.sq.iter_mut().zip(proj.iter()) {
                *w = (*w - p * p / denom).max(0.0);
            }
        }
        #[cfg(debug_assertions)]
        if self.updates.is_multiple_of(50) {
            let (inv_err, logdet_err) = self.audit();
            debug_assert!(
                inv_err < 1e-6 && logdet_err < 1e-6,
                "design drift {inv_err:.2e} / {logdet_err:.2e}"
            );
        }
        Ok(())
    }

    /// Max-abs deviation of `V·V⁻¹` from `I` and absolute log-determinant
    /// error against a fresh factorization.
    pub fn audit(&self) -> (f64, f64) {
        let d = self.dim();
        let inv_err = (&self.v * &self.vinv - DMatrix::identity(d, d)).amax();
        let logdet_err = logdet_spd(&self.v).map_or(f64::INFINITY, |l| (l - self.logdet_v).abs());
        (inv_err, logdet_err)
    }

    /// `‖x‖_{V⁻¹}`.
    pub fn width_norm(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.vinv * x)).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct GlmFit {
    pub theta: DVector<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting at the initial point.
    pub trace: Vec<f64>,
}

struct GlmProblem<'a> {
    features: DMatrix<f64>,
    counts: DVector<f64>,
    sums: DVector<f64>,
    penalty: &'a DMatrix<f64>,
    family: &'a LinkFamily,
}

impl GlmProblem<'_> {
    fn objective(&self, theta: &DVector<f64>) -> f64 {
        let z = &self.features * theta;
        let mut loss = 0.0;
        for g in 0..z.len() {
            loss += self.counts[g] * self.family.b(z[g]) - self.sums[g] * z[g];
        }
        loss + 0.5 * theta.dot(&(self.penalty * theta))
    }

    fn gradient(&self, theta: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        let resid = DVector::from_fn(z.len(), |g, _| {
            self.counts[g] * self.family.mu(z[g]) - self.sums[g]
        });
        self.features.tr_mul(&resid) + self.penalty * theta
    }

    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut scaled = self.features.clone();
        for (g, mut row) in scaled.row_iter_mut().enumerate() {
            row *= (self.counts[g] * self.family.mu_prime(z[g])).sqrt();
        }
        let mut h = scaled.tr_mul(&scaled) + self.penalty;
        symmetrize(&mut h);
        h
    }
}

/// Damped Newton on `Σ[b(⟨x,θ⟩) − y⟨x,θ⟩] + ½θᵀ(Λ + K)θ` from `start`.
pub fn fit_glm_penalized_from(
    state: &DesignState,
    penalty: &PenaltySpec,
    family: &LinkFamily,
    start: &DVector<f64>,
) -> Result<GlmFit> {
    let d = state.dim();
    if penalty.dim() != d || start.len() != d {
        return Err(Error::DimensionMismatch {
            context: "fit_glm_penalized",
            expected: d.to_string(),
            actual: format!("penalty {}, start {}", penalty.dim(), start.len()),
        });
    }
    let n = state.groups.len();
    let mut features = DMatrix::zeros(n, d);
    for (g, grp) in state.groups.iter().enumerate() {
        features.row_mut(g).copy_from(&grp.x.transpose());
    }
    let prob = GlmProblem {
        features,
        counts: DVector::from_iterator(n, state.groups.iter().map(|g| g.count)),
        sums: DVector::from_iterator(n, state.groups.iter().map(|g| g.sum_y)),
        penalty: penalty.matrix(),
        family,
    };

    // With μ' ≡ 1 and c_μ = 1 the Hessian is exactly V, whose inverse the
    // state already holds.
    let unit_curvature = family.kind == FamilyKind::Linear && family.c_mu == 1.0;
    let mut theta = start.clone();
    let mut obj = prob.objective(&theta);
    let mut trace = vec![obj];
    let mut z = &prob.features * &theta;
    let mut grad = prob.gradient(&theta, &z);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < NEWTON_MAX_ITERS {
        if grad.norm() < NEWTON_GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let step = if unit_curvature {
            &state.vinv * &grad
        } else {
            prob.hessian(&z)
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("GLM Hessian".into()))?
                .solve(&grad)
        };
        let slack = 1e-12 * (1.0 + obj.abs());
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=NEWTON_MAX_HALVINGS {
            let cand = &theta - &step * t;
            let cand_obj = prob.objective(&cand);
            if cand_obj <= obj + slack {
                accepted = Some((cand, cand_obj));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cand_obj)) = accepted else {
            break;
        };
        let cand_z = &prob.features * &cand;
        let cand_grad = prob.gradient(&cand, &cand_z);
        // inside the roundoff slack only accept steps that still make progress
        if cand_obj > obj && cand_grad.norm() >= grad.norm() {
            break;
        }
        theta = cand;
        obj = cand_obj.min(obj);
        trace.push(cand_obj);
        z = cand_z;
        grad = cand_grad;
    }
    if !converged && grad.norm() < NEWTON_GRAD_TOL {
        converged = true;
    }
    let grad_norm = grad.norm();
    if !converged && grad_norm > 1e-6 {
        warn!("GLM fit stopped after {iterations} Newton steps with gradient norm {grad_norm:.3e}");
    }
    Ok(GlmFit {
        theta,
        objective: obj,
        grad_norm,
        iterations,
        converged,
        trace,
    })
}

/// Warm-started fit; stores the result as the state's current estimate.
pub fn fit_glm_penalized(
    state: &mut DesignState,
    penalty: &PenaltySpec,
    family: &LinkFamily,
) -> Result<GlmFit> {
    if state.history.is_empty() {
        return Err(Error::invalid("cannot fit a GLM with an empty history"));
    }
    let start = state.theta_hat.clone();
    let fit = fit_glm_penalized_from(state, penalty, family, &start)?;
    state.theta_hat = fit.theta.clone();
    Ok(fit)
}

/// `ω·sqrt(log|V_t| − log|V₀| + 2log(1/δ)) + constant`.
pub fn confidence_radius_with(state: &DesignState, omega: f64, delta: f64, constant: f64) -> f64 {
    let inner = state.logdet_v - state.logdet_v0 + 2.0 * (1.0 / delta).ln();
    omega * inner.max(0.0).sqrt() + constant
}

/// `e_t` for the transformed problem: the noise term plus
/// `sqrt(c_μ)(sqrt λ₂ + sqrt λ⊥ τ + 1)`.
pub fn confidence_radius(
    state: &DesignState,
    penalty: &PenaltySpec,
    family: &LinkFamily,
    tau: f64,
    omega: f64,
    delta: f64,
) -> f64 {
    let constant =
        family.c_mu.sqrt() * (penalty.lambda2.sqrt() + penalty.lambda_perp.sqrt() * tau + 1.0);
    confidence_radius_with(state, omega, delta, constant)
}

/// UCB scores `μ(⟨θ̂,x⟩) + (k_μ/c_μ) e_t ‖x‖_{V⁻¹}` for every row of `actions`.
pub fn ucb_scores(
    actions: &DMatrix<f64>,
    state: &DesignState,
    e_t: f64,
    family: &LinkFamily,
) -> Vec<f64> {
    let means = actions * &state.theta_hat;
    let av = actions * &state.vinv;
    let mult = family.k_mu / family.c_mu * e_t;
    (0..actions.nrows())
        .map(|i| {
            let q = av.row(i).dot(&actions.row(i)).max(0.0);
            family.mu(means[i]) + mult * q.sqrt()
        })
        .collect()
}

/// [`ucb_scores`] for the stack registered with
/// [`DesignState::track_widths`].
pub fn tracked_ucb_scores(state: &DesignState, e_t: f64, family: &LinkFamily) -> Result<Vec<f64>> {
    let tr = state
        .tracked
        .as_ref()
        .ok_or_else(|| Error::invalid("no action stack is being tracked"))?;
    let means = &tr.stack * &state.theta_hat;
    let mult = family.k_mu / family.c_mu * e_t;
    Ok((0..tr.stack.nrows())
        .map(|i| family.mu(means[i]) + mult * tr.sq[i].sqrt())
        .collect())
}

/// [`select_ucb`] over the tracked stack.
pub fn select_ucb_tracked(state: &DesignState, e_t: f64, family: &LinkFamily) -> Result<usize> {
    let scores = tracked_ucb_scores(state, e_t, family)?;
    if scores.is_empty() {
        return Err(Error::invalid("select_ucb needs at least one action"));
    }
    Ok(argmax_lowest(&scores))
}

/// Index of the highest UCB score; ties go to the lowest index.
pub fn select_ucb(
    actions: &DMatrix<f64>,
    state: &DesignState,
    e_t: f64,
    family: &LinkFamily,
) -> Result<usize> {
    if actions.nrows() == 0 {
        return Err(Error::invalid("select_ucb needs at least one action"));
    }
    if actions.ncols() != state.dim() {
        return Err(Error::DimensionMismatch {
            context: "select_ucb actions",
            expected: state.dim().to_string(),
            actual: actions.ncols().to_string(),
        });
    }
    Ok(argmax_lowest(&ucb_scores(actions, state, e_t, family)))
}
