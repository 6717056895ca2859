//! Bandit environments: reward families, synthetic action sets and true
//! parameters, reward sampling, and reward-matrix ingestion.

mod family;
mod ingest;

pub use family::{FamilyKind, LinkFamily, NoiseDraw, POISSON_CLIP};
pub use ingest::{
    ingest_reward_matrix, instance_from_reward_matrix, read_reward_matrix, IngestOptions,
};

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graphs::{laplacian, Graph};
use crate::linalg::{frob_inner, sorted_svd, sorted_symmetric_eigen, vec_of};
use crate::rng::Rng;

/// Default eigenvalue floor when whitening by a singular Laplacian.
pub const DEFAULT_THETA_EPS: f64 = 1e-6;

pub fn draw_noise(rng: &mut Rng) -> NoiseDraw {
    NoiseDraw {
        normal: rng.sample(StandardNormal),
        uniform: rng.random(),
    }
}

pub fn standard_normal_matrix(d1: usize, d2: usize, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(d1, d2, |_, _| rng.sample(StandardNormal))
}

fn normalize_frobenius(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.norm();
    if n > 0.0 {
        m /= n;
    }
    m
}

/// `n` matrices with i.i.d. standard normal entries, each scaled to unit
/// Frobenius norm.
pub fn make_actions_gaussian(
    n: usize,
    d1: usize,
    d2: usize,
    rng: &mut Rng,
) -> Result<Vec<DMatrix<f64>>> {
    if n == 0 || d1 == 0 || d2 == 0 {
        return Err(Error::invalid("make_actions_gaussian needs n, d1, d2 >= 1"));
    }
    Ok((0..n)
        .map(|_| normalize_frobenius(standard_normal_matrix(d1, d2, rng)))
        .collect())
}

/// Outer products `p_i qⱼᵀ` of `n1` row vectors and `n2` column vectors,
/// Frobenius-normalized. Action `(i, j)` (0-based) sits at index `i*n2 + j`.
pub fn make_actions_outer(
    n1: usize,
    n2: usize,
    d1: usize,
    d2: usize,
    rng: &mut Rng,
) -> Result<Vec<DMatrix<f64>>> {
    if n1 == 0 || n2 == 0 || d1 == 0 || d2 == 0 {
        return Err(Error::invalid("make_actions_outer needs positive sizes"));
    }
    let ps: Vec<DVector<f64>> = (0..n1)
        .map(|_| DVector::from_fn(d1, |_, _| rng.sample(StandardNormal)))
        .collect();
    let qs: Vec<DVector<f64>> = (0..n2)
        .map(|_| DVector::from_fn(d2, |_, _| rng.sample(StandardNormal)))
        .collect();
    let mut out = Vec::with_capacity(n1 * n2);
    for p in &ps {
        for q in &qs {
            out.push(normalize_frobenius(p * q.transpose()));
        }
    }
    Ok(out)
}

/// Score function of the standard normal exploration density, `S(x) = x`.
pub fn score_standard_normal(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone()
}

/// Second-moment bound of the score under the standard normal density.
pub const STANDARD_NORMAL_GAMMA: f64 = 1.0;

/// The unknown parameter `Θ*` with its rank-`r` factorization.
#[derive(Debug, Clone)]
pub struct TrueParameter {
    pub theta: DMatrix<f64>,
    pub rank: usize,
    pub u_star: DMatrix<f64>,
    pub s_star: DVector<f64>,
    pub v_star: DMatrix<f64>,
    /// `r`-th singular value.
    pub c_r: f64,
}

impl TrueParameter {
    /// Factorizes `theta` by truncated SVD at `rank`.
    pub fn from_matrix(theta: DMatrix<f64>, rank: usize) -> Result<Self> {
        let m = theta.nrows().min(theta.ncols());
        if rank == 0 || rank > m {
            return Err(Error::invalid(format!("rank {rank} outside [1, {m}]")));
        }
        let (u, s, v) = sorted_svd(&theta);
        Ok(TrueParameter {
            u_star: u.columns(0, rank).into_owned(),
            s_star: s.rows(0, rank).into_owned(),
            v_star: v.columns(0, rank).into_owned(),
            c_r: s[rank - 1],
            rank,
            theta,
        })
    }

    pub fn singular_values(&self) -> DVector<f64> {
        sorted_svd(&self.theta).1
    }
}

fn whitener(g: &Graph, eps: f64) -> DMatrix<f64> {
    let (vals, vecs) = sorted_symmetric_eigen(&laplacian(g));
    let scale = DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&s| 1.0 / (s.max(0.0) + eps).sqrt()),
    );
    vecs * DMatrix::from_diagonal(&scale)
}

/// Graph-whitened low-rank parameter `Θ* = A (UVᵀ) Bᵀ`, normalized to unit
/// Frobenius norm. `A` and `B` come from the eigendecompositions of the row
/// and column graph Laplacians with eigenvalue floor `eps`.
pub fn make_theta(
    d1: usize,
    d2: usize,
    r: usize,
    row_graph: &Graph,
    col_graph: &Graph,
    eps: f64,
    rng: &mut Rng,
) -> Result<TrueParameter> {
    if r == 0 || r > d1.min(d2) {
        return Err(Error::invalid(format!(
            "rank {r} outside [1, min({d1}, {d2})]"
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid(format!(
            "eigenvalue floor must be positive, got {eps}"
        )));
    }
    if row_graph.node_count() != d1 || col_graph.node_count() != d2 {
        return Err(Error::DimensionMismatch {
            context: "make_theta graphs",
            expected: format!("{d1} and {d2} nodes"),
            actual: format!("{} and {}", row_graph.node_count(), col_graph.node_count()),
        });
    }
    let u = standard_normal_matrix(d1, r, rng);
    let v = standard_normal_matrix(d2, r, rng);
    let a = whitener(row_graph, eps);
    let b = whitener(col_graph, eps);
    let theta = normalize_frobenius(a * (u * v.transpose()) * b.transpose());
    TrueParameter::from_matrix(theta, r)
}

/// A finite-armed matrix bandit problem.
#[derive(Debug, Clone)]
pub struct BanditInstance {
    pub d1: usize,
    pub d2: usize,
    pub actions: Vec<DMatrix<f64>>,
    /// `n × d1d2`; row `i` is `vec(actions[i])`.
    pub stack: DMatrix<f64>,
    pub true_param: TrueParameter,
    pub graph: Graph,
    pub family: LinkFamily,
    pub sampling_gamma: f64,
    pub optimal_index: usize,
    predictors: Vec<f64>,
}

impl BanditInstance {
    pub fn new(
        actions: Vec<DMatrix<f64>>,
        true_param: TrueParameter,
        graph: Graph,
        family: LinkFamily,
    ) -> Result<Self> {
        let n = actions.len();
        if n == 0 {
            return Err(Error::invalid("instance needs at least one action"));
        }
        let (d1, d2) = true_param.theta.shape();
        for (i, a) in actions.iter().enumerate() {
            if a.shape() != (d1, d2) {
                return Err(Error::DimensionMismatch {
                    context: "instance action",
                    expected: format!("{d1}x{d2}"),
                    actual: format!("{}x{} (action {i})", a.nrows(), a.ncols()),
                });
            }
        }
        if graph.node_count() != n {
            return Err(Error::DimensionMismatch {
                context: "instance graph",
                expected: format!("{n} nodes"),
                actual: graph.node_count().to_string(),
            });
        }
        let d = d1 * d2;
        let mut stack = DMatrix::zeros(n, d);
        for (i, a) in actions.iter().enumerate() {
            stack.row_mut(i).copy_from(&vec_of(a).transpose());
        }
        let predictors: Vec<f64> = actions
            .iter()
            .map(|a| frob_inner(a, &true_param.theta))
            .collect();
        let mut inst = BanditInstance {
            d1,
            d2,
            actions,
            stack,
            true_param,
            graph,
            family,
            sampling_gamma: STANDARD_NORMAL_GAMMA,
            optimal_index: 0,
            predictors,
        };
        inst.optimal_index = argmax_lowest(&inst.expected_rewards());
        Ok(inst)
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn dim(&self) -> usize {
        self.d1 * self.d2
    }

    /// `⟨X_i, Θ*⟩`.
    pub fn predictor(&self, index: usize) -> f64 {
        self.predictors[index]
    }

    pub fn expected_reward_of(&self, index: usize) -> f64 {
        self.family.mu(self.predictors[index])
    }

    pub fn expected_rewards(&self) -> Vec<f64> {
        self.predictors.iter().map(|&z| self.family.mu(z)).collect()
    }

    /// `mu(⟨X, Θ*⟩)` for an arbitrary matrix.
    pub fn expected_reward(&self, x: &DMatrix<f64>) -> f64 {
        self.family.mu(frob_inner(x, &self.true_param.theta))
    }

    pub fn optimal_reward(&self) -> f64 {
        self.expected_reward_of(self.optimal_index)
    }

    /// `mu(⟨X*,Θ*⟩) − mu(⟨X_i,Θ*⟩)`.
    pub fn instant_regret(&self, index: usize) -> f64 {
        (self.optimal_reward() - self.expected_reward_of(index)).max(0.0)
    }

    pub fn sample_reward_index(&self, index: usize, draw: NoiseDraw) -> f64 {
        self.family.sample_from(self.predictors[index], draw)
    }

    /// Indices of the top `pct`% actions by expected reward
    /// (`ceil(pct/100 * n)` of them, ties to the lower index).
    pub fn top_set(&self, pct: f64) -> Result<Vec<usize>> {
        top_set_of(&self.expected_rewards(), pct)
    }
}

pub fn top_set_of(rewards: &[f64], pct: f64) -> Result<Vec<usize>> {
    if !(pct > 0.0 && pct < 100.0) {
        return Err(Error::invalid(format!(
            "hit-rate percentile {pct} outside (0, 100)"
        )));
    }
    let n = rewards.len();
    let count = ((pct / 100.0) * n as f64).ceil().max(1.0) as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| rewards[b].total_cmp(&rewards[a]).then(a.cmp(&b)));
    idx.truncate(count.min(n));
    idx.sort_unstable();
    Ok(idx)
}

/// Reward for action matrix `x` under the instance's family.
pub fn sample_reward(x: &DMatrix<f64>, inst: &BanditInstance, rng: &mut Rng) -> Result<f64> {
    if x.shape() != (inst.d1, inst.d2) {
        return Err(Error::DimensionMismatch {
            context: "sample_reward action",
            expected: format!("{}x{}", inst.d1, inst.d2),
            actual: format!("{}x{}", x.nrows(), x.ncols()),
        });
    }
    let z = frob_inner(x, &inst.true_param.theta);
    Ok(inst.family.sample_from(z, draw_noise(rng)))
}

pub fn instant_regret(chosen: usize, inst: &BanditInstance) -> f64 {
    inst.instant_regret(chosen)
}

pub fn expected_reward(x: &DMatrix<f64>, inst: &BanditInstance) -> f64 {
    inst.expected_reward(x)
}

pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Monte Carlo estimate of `E[mu'(⟨X, Θ*⟩)]` under standard normal `X`.
pub fn mu_star_monte_carlo(
    theta: &DMatrix<f64>,
    family: &LinkFamily,
    samples: usize,
    rng: &mut Rng,
) -> f64 {
    let (d1, d2) = theta.shape();
    let mut acc = 0.0;
    for _ in 0..samples {
        let x = standard_normal_matrix(d1, d2, rng);
        acc += family.mu_prime(frob_inner(&x, theta));
    }
    acc / samples as f64
}
