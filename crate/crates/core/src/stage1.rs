//! Stage 1: graph-regularized low-rank subspace estimation.
//!
//! The estimate minimizes
//!
//! ```text
//! ‖Θ − M̄‖_F² + λ‖Θ‖_* + vec(Θ)ᵀ K vec(Θ)
//! ```
//!
//! where `M̄` is the average of truncated score-weighted rewards and `K` is
//! the Laplacian kernel. The smooth part is a strongly convex quadratic, so
//! forward-backward splitting with step `1/(2(1 + σ_max(K)))` and singular
//! value thresholding as the proximal step descends monotonically.
//!
//! The estimate's singular subspaces then define an orthogonal change of
//! coordinates in which the last `(d1 − r)(d2 − r)` coordinates of the
//! parameter are nearly zero.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::envs::score_standard_normal;
use crate::error::{Error, Result};
use crate::graphs::LaplacianKernel;
use crate::linalg::{
    frob_inner, orthonormal_complement, sorted_svd, sorted_symmetric_eigen, unvec, vec_of,
};

/// Scalar truncation `ψ`: `log(1 + x + x²/2)` for `x ≥ 0`, odd extension
/// below zero. Grows logarithmically, so heavy tails are damped.
pub fn psi(x: f64) -> f64 {
    if x >= 0.0 {
        (x + 0.5 * x * x).ln_1p()
    } else {
        -(-x + 0.5 * x * x).ln_1p()
    }
}

/// Matrix truncation: applies `ψ` to the spectrum of the symmetric dilation
/// `[[0, νA], [νAᵀ, 0]]`, keeps the upper-right block and divides by `ν`.
pub fn psi_nu(a: &DMatrix<f64>, nu: f64) -> Result<DMatrix<f64>> {
    if !(nu > 0.0) {
        return Err(Error::invalid(format!(
            "truncation scale must be positive, got {nu}"
        )));
    }
    let (d1, d2) = a.shape();
    let d = d1 + d2;
    let mut dil = DMatrix::zeros(d, d);
    dil.view_mut((0, d1), (d1, d2)).copy_from(&(a * nu));
    dil.view_mut((d1, 0), (d2, d1))
        .copy_from(&(a.transpose() * nu));
    let (vals, h) = sorted_symmetric_eigen(&dil);
    let psi_vals = DVector::from_iterator(d, vals.iter().map(|&v| psi(v)));
    let full = &h * DMatrix::from_diagonal(&psi_vals) * h.transpose();
    Ok(full.view((0, d1), (d1, d2)).into_owned() / nu)
}

/// `M̄ = (1/T₁) Σ ψ_ν(yᵢ S(Xᵢ))`.
#[derive(Debug, Clone)]
pub struct TruncatedMoment {
    pub mbar: DMatrix<f64>,
    pub nu: f64,
    pub t1: usize,
}

impl TruncatedMoment {
    /// Builds the moment from exploration samples under the standard normal
    /// score.
    pub fn from_samples<'a, I>(samples: I, nu: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a DMatrix<f64>, f64)>,
    {
        let mut acc: Option<DMatrix<f64>> = None;
        let mut count = 0usize;
        for (x, y) in samples {
            let term = psi_nu(&(score_standard_normal(x) * y), nu)?;
            match acc.as_mut() {
                Some(m) => *m += term,
                None => acc = Some(term),
            }
            count += 1;
        }
        let sum =
            acc.ok_or_else(|| Error::invalid("truncated moment needs at least one sample"))?;
        Ok(TruncatedMoment {
            mbar: sum / count as f64,
            nu,
            t1: count,
        })
    }
}

/// Theory defaults for the truncation scale `ν` and the atomic-norm weight
/// `β` (the latter is reported only).
#[derive(Debug, Clone, Copy)]
pub struct TheoryInputs {
    pub d1: usize,
    pub d2: usize,
    pub t1: usize,
    pub gamma: f64,
    pub omega: f64,
    pub r_max: f64,
    pub delta: f64,
    /// Graph factor in `(0, 1]`.
    pub zeta: f64,
}

impl TheoryInputs {
    fn log_term(&self) -> f64 {
        (2.0 * (self.d1 + self.d2) as f64 / self.delta).ln()
    }

    fn noise_scale(&self) -> f64 {
        4.0 * self.omega * self.omega + self.r_max * self.r_max
    }
}

pub fn default_nu_beta(inp: &TheoryInputs) -> (f64, f64) {
    let t1 = inp.t1 as f64;
    let nu = (2.0 * inp.log_term()
        / (inp.noise_scale() * inp.gamma * t1 * inp.d1.max(inp.d2) as f64))
        .sqrt();
    let beta = 4.0
        * inp.zeta
        * (2.0 * inp.noise_scale() * inp.gamma * (inp.d1 * inp.d2) as f64 * inp.log_term() / t1)
            .sqrt();
    (nu, beta)
}

/// Singular value thresholding `P max(Σ − t, 0) Qᵀ`.
pub fn svt(m: &DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    assert!(threshold >= 0.0, "svt threshold must be non-negative");
    if threshold == 0.0 {
        return m.clone();
    }
    let (u, s, v) = sorted_svd(m);
    let shrunk = DVector::from_iterator(s.len(), s.iter().map(|&x| (x - threshold).max(0.0)));
    u * DMatrix::from_diagonal(&shrunk) * v.transpose()
}

#[derive(Debug, Clone)]
pub struct Stage1Config {
    /// Nuclear-norm weight, in `(0, 1]` (zero is accepted for testing).
    pub lambda: f64,
    /// Laplacian weight; values above the error-bound threshold only warn.
    pub alpha: f64,
    pub rank: usize,
    pub t1: usize,
    pub max_iters: usize,
    pub tol_rel_obj: f64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            lambda: 0.01,
            alpha: 0.0,
            rank: 1,
            t1: 100,
            max_iters: 500,
            tol_rel_obj: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stage1Estimate {
    pub theta: DMatrix<f64>,
    /// Objective after each iteration, starting with the initial point.
    pub objectives: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub step: f64,
}

fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    sorted_svd(m).1.sum()
}

/// Objective `‖Θ − M̄‖² + λ‖Θ‖_* + vec(Θ)ᵀK vec(Θ)`.
pub fn stage1_objective(
    theta: &DMatrix<f64>,
    mbar: &DMatrix<f64>,
    kernel: &LaplacianKernel,
    lambda: f64,
) -> f64 {
    let diff = theta - mbar;
    let v = vec_of(theta);
    frob_inner(&diff, &diff) + lambda * nuclear_norm(theta) + kernel.quad_form(v.as_slice())
}

pub fn estimate_theta_stage1(
    moment: &TruncatedMoment,
    kernel: &LaplacianKernel,
    cfg: &Stage1Config,
) -> Result<Stage1Estimate> {
    let (d1, d2) = moment.mbar.shape();
    if kernel.dim() != d1 * d2 {
        return Err(Error::DimensionMismatch {
            context: "stage1 kernel",
            expected: (d1 * d2).to_string(),
            actual: kernel.dim().to_string(),
        });
    }
    if !(cfg.lambda >= 0.0 && cfg.lambda <= 1.0) {
        return Err(Error::invalid(format!(
            "stage-1 lambda {} outside [0, 1]",
            cfg.lambda
        )));
    }
    let mbar = &moment.mbar;
    let step = 1.0 / (2.0 * (1.0 + kernel.sigma_max_scaled()));
    let threshold = cfg.lambda * step;

    let mut theta = mbar.clone();
    let mut obj = stage1_objective(&theta, mbar, kernel, cfg.lambda);
    let mut objectives = vec![obj];
    let mut best = (theta.clone(), obj);
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        let kv = &kernel.kernel * vec_of(&theta);
        let grad = (&theta - mbar) * 2.0 + unvec(&kv, d1, d2) * 2.0;
        let next = svt(&(&theta - grad * step), threshold);
        let next_obj = stage1_objective(&next, mbar, kernel, cfg.lambda);
        objectives.push(next_obj);
        let decrease = obj - next_obj;
        theta = next;
        if next_obj < best.1 {
            best = (theta.clone(), next_obj);
        }
        let rel = decrease.abs() / obj.abs().max(f64::MIN_POSITIVE);
        obj = next_obj;
        if rel < cfg.tol_rel_obj {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!(
            "stage-1 solver hit {} iterations without meeting tolerance",
            cfg.max_iters
        );
    }
    Ok(Stage1Estimate {
        theta: best.0,
        objectives,
        iterations,
        converged,
        step,
    })
}

/// Orthogonal change of coordinates derived from a Stage-1 estimate.
#[derive(Debug, Clone)]
pub struct SubspaceTransform {
    pub u_hat: DMatrix<f64>,
    pub u_hat_perp: DMatrix<f64>,
    pub v_hat: DMatrix<f64>,
    pub v_hat_perp: DMatrix<f64>,
    /// `perm[p]` is the column-major index in `vec(X′)` placed at position `p`.
    pub perm: Vec<usize>,
    pub rank: usize,
    /// Effective dimension `(d1 + d2 − r) r`.
    pub k: usize,
    pub tau: f64,
    /// Singular values of the estimate the transform was built from.
    pub singular_values: DVector<f64>,
    pub degenerate: bool,
    left: DMatrix<f64>,
    right: DMatrix<f64>,
}

/// Block order: rows `..r` × cols `..r`, rows `r..` × cols `..r`,
/// rows `..r` × cols `r..`, rows `r..` × cols `r..`; each block column-major.
pub fn rearrangement(d1: usize, d2: usize, r: usize) -> Vec<usize> {
    let mut perm = Vec::with_capacity(d1 * d2);
    let blocks = [(0..r, 0..r), (r..d1, 0..r), (0..r, r..d2), (r..d1, r..d2)];
    for (rows, cols) in blocks {
        for c in cols {
            for row in rows.clone() {
                perm.push(c * d1 + row);
            }
        }
    }
    perm
}

impl SubspaceTransform {
    pub fn d1(&self) -> usize {
        self.left.nrows()
    }

    pub fn d2(&self) -> usize {
        self.right.nrows()
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// `(Û, Û⊥)`.
    pub fn left_basis(&self) -> &DMatrix<f64> {
        &self.left
    }

    /// `(V̂, V̂⊥)`.
    pub fn right_basis(&self) -> &DMatrix<f64> {
        &self.right
    }

    /// `(Û,Û⊥)ᵀ X (V̂,V̂⊥)`.
    pub fn rotate(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.left.transpose() * x * &self.right
    }

    pub fn rearrange(&self, rotated: &DMatrix<f64>) -> DVector<f64> {
        let v = rotated.as_slice();
        DVector::from_iterator(self.perm.len(), self.perm.iter().map(|&i| v[i]))
    }

    /// Inverse of [`Self::rearrange`].
    pub fn unrearrange(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let mut out = vec![0.0; self.perm.len()];
        for (p, &i) in self.perm.iter().enumerate() {
            out[i] = v[p];
        }
        DMatrix::from_vec(self.d1(), self.d2(), out)
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }
}

/// Full SVD split at rank `r` plus the block rearrangement.
pub fn split_and_transform(theta_hat: &DMatrix<f64>, r: usize) -> Result<SubspaceTransform> {
    let (d1, d2) = theta_hat.shape();
    if r == 0 || r > d1.min(d2) {
        return Err(Error::invalid(format!(
            "rank {r} outside [1, min({d1}, {d2})]"
        )));
    }
    let (u, s, v) = sorted_svd(theta_hat);
    let degenerate = r < s.len() && (s[r - 1] - s[r]).abs() <= 1e-12;
    if degenerate {
        warn!(
            "singular values {} and {} tie at rank split; using decomposition order",
            r,
            r + 1
        );
    }
    let u_hat = u.columns(0, r).into_owned();
    let v_hat = v.columns(0, r).into_owned();
    let u_hat_perp = orthonormal_complement(&u_hat);
    let v_hat_perp = orthonormal_complement(&v_hat);
    let left = concat_cols(&u_hat, &u_hat_perp);
    let right = concat_cols(&v_hat, &v_hat_perp);
    Ok(SubspaceTransform {
        perm: rearrangement(d1, d2, r),
        k: (d1 + d2 - r) * r,
        tau: 1.0,
        rank: r,
        singular_values: s,
        degenerate,
        u_hat,
        u_hat_perp,
        v_hat,
        v_hat_perp,
        left,
        right,
    })
}

fn concat_cols(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    if b.ncols() > 0 {
        out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    }
    out
}

pub fn rotate_and_rearrange_action(
    x: &DMatrix<f64>,
    transform: &SubspaceTransform,
) -> Result<DVector<f64>> {
    if x.shape() != (transform.d1(), transform.d2()) {
        return Err(Error::DimensionMismatch {
            context: "rotate_and_rearrange_action",
            expected: format!("{}x{}", transform.d1(), transform.d2()),
            actual: format!("{}x{}", x.nrows(), x.ncols()),
        });
    }
    Ok(transform.rearrange(&transform.rotate(x)))
}

/// Plug-in tail bound
/// `τ = c₁ ζ² d1 d2 γ r log(2(d1+d2)/δ) / (T₁ ĉ_r²)`, `c₁ = 36(4ω² + r_max²)`,
/// clamped to `[1e-8, 1]`. `ĉ_r` is the `r`-th singular value of the
/// Stage-1 estimate; when it vanishes `fallback` is used if given.
pub fn tau_bound(
    transform: &SubspaceTransform,
    inp: &TheoryInputs,
    fallback: Option<f64>,
) -> Result<f64> {
    let c_r_hat = transform.singular_values[transform.rank - 1];
    if c_r_hat < 1e-10 {
        return fallback.ok_or_else(|| {
            Error::invalid(format!("r-th singular value {c_r_hat:.3e} too small for the tail bound and no override set"))
        });
    }
    Ok(tau_formula(inp, transform.rank, c_r_hat).clamp(1e-8, 1.0))
}

/// Unclamped tail-bound formula.
pub fn tau_formula(inp: &TheoryInputs, rank: usize, c_r_hat: f64) -> f64 {
    let c1 = 36.0 * inp.noise_scale();
    c1 * inp.zeta * inp.zeta * (inp.d1 * inp.d2) as f64 * inp.gamma * rank as f64 * inp.log_term()
        / (inp.t1 as f64 * c_r_hat * c_r_hat)
}

/// `c₁ = 36(4ω² + r_max²)`.
pub fn tail_constant(omega: f64, r_max: f64) -> f64 {
    36.0 * (4.0 * omega * omega + r_max * r_max)
}
