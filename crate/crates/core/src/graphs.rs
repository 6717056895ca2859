//! Action-similarity graphs, their Laplacians, and the Laplacian
//! quadratic-form kernel `K = a_mu * alpha * X̃ᵀ L X̃`.
//!
//! Graphs are undirected with unit edge weights. The kernel's quadratic form
//! `θᵀKθ` equals `a_mu * alpha * ½ Σ_ij W_ij (⟨x_i,θ⟩ − ⟨x_j,θ⟩)²`, i.e. it
//! penalizes differences between the predicted rewards of connected actions.

use std::collections::BTreeSet;
use std::sync::Mutex;

use log::warn;
use nalgebra::DMatrix;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::power_sigma_max;
use crate::rng::Rng;

const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITERS: usize = 1000;

/// Undirected simple graph on nodes `0..n`. Edges are stored as `(i, j)`
/// with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Graph::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                g.edges.insert((i, j));
            }
        }
        g
    }

    /// Builds a graph from an edge list. Self-loops and out-of-range nodes
    /// are rejected; duplicate and reversed pairs collapse.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Graph::empty(n);
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop on node {a}")));
            }
            g.add_edge(a, b);
        }
        Ok(g)
    }

    fn add_edge(&mut self, a: usize, b: usize) {
        debug_assert!(a != b);
        self.edges.insert((a.min(b), a.max(b)));
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n, self.n);
        for &(a, b) in &self.edges {
            w[(a, b)] = 1.0;
            w[(b, a)] = 1.0;
        }
        w
    }
}

/// Erdős–Rényi graph: each of the `n(n−1)/2` pairs is kept independently
/// with probability `p`.
pub fn er_graph(n: usize, p: f64, rng: &mut Rng) -> Result<Graph> {
    if n == 0 {
        return Err(Error::invalid("er_graph needs n >= 1"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "edge probability {p} outside [0, 1]"
        )));
    }
    let mut g = Graph::empty(n);
    for i in 0..n {
        for j in (i + 1)..n {
            // one draw per pair regardless of p keeps edge sets nested in p
            let u: f64 = rng.random();
            if u < p {
                g.add_edge(i, j);
            }
        }
    }
    Ok(g)
}

/// Barabási–Albert preferential attachment. Starts from the complete graph on
/// `m` nodes; every later node attaches to `m` distinct existing nodes drawn
/// with probability proportional to their current degree.
pub fn ba_graph(n: usize, m: usize, rng: &mut Rng) -> Result<Graph> {
    if m == 0 || m >= n {
        return Err(Error::invalid(format!(
            "ba_graph needs 1 <= m < n, got m={m}, n={n}"
        )));
    }
    let mut g = Graph::complete(m);
    g.n = n;
    let mut deg = vec![0usize; n];
    for (a, b) in g.edges() {
        deg[a] += 1;
        deg[b] += 1;
    }
    for new in m..n {
        let mut chosen: Vec<usize> = Vec::with_capacity(m);
        while chosen.len() < m {
            let candidates: Vec<usize> = (0..new).filter(|v| !chosen.contains(v)).collect();
            let total: usize = candidates.iter().map(|&v| deg[v]).sum();
            let pick = if total == 0 {
                candidates[rng.random_range(0..candidates.len())]
            } else {
                let mut target = rng.random_range(0..total);
                let mut pick = candidates[candidates.len() - 1];
                for &v in &candidates {
                    if target < deg[v] {
                        pick = v;
                        break;
                    }
                    target -= deg[v];
                }
                pick
            };
            chosen.push(pick);
        }
        for &v in &chosen {
            g.add_edge(new, v);
            deg[new] += 1;
            deg[v] += 1;
        }
    }
    Ok(g)
}

/// Symmetrized k-nearest-neighbour graph under Euclidean distance: `(i, j)`
/// is an edge when either endpoint is among the other's `k` nearest points.
/// Distance ties go to the lower index.
pub fn knn_graph(points: &[Vec<f64>], k: usize) -> Result<Graph> {
    let n = points.len();
    if k >= n {
        return Err(Error::invalid(format!(
            "knn_graph needs k < n, got k={k}, n={n}"
        )));
    }
    let dim = points.first().map_or(0, Vec::len);
    if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            context: "knn_graph point",
            expected: dim.to_string(),
            actual: format!("{} (point {i})", p.len()),
        });
    }
    let mut g = Graph::empty(n);
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d2: f64 = points[i]
                    .iter()
                    .zip(&points[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, j)
            })
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            g.add_edge(i, j);
        }
    }
    Ok(g)
}

/// `L = D − W`.
pub fn laplacian(g: &Graph) -> DMatrix<f64> {
    let mut l = -g.adjacency();
    for (i, d) in g.degrees().into_iter().enumerate() {
        l[(i, i)] = d as f64;
    }
    l
}

/// The Laplacian of a graph and the quadratic-form kernel it induces on an
/// action stack.
#[derive(Debug, Clone)]
pub struct LaplacianKernel {
    pub laplacian: DMatrix<f64>,
    /// `a_mu * alpha * X̃ᵀ L X̃`.
    pub kernel: DMatrix<f64>,
    pub sigma_max_l: f64,
    /// Largest singular value of the unscaled `X̃ᵀ L X̃`.
    pub sigma_max_k: f64,
    pub a_mu: f64,
    pub alpha: f64,
}

impl LaplacianKernel {
    /// Quadratic form `θᵀKθ`.
    pub fn quad_form(&self, theta: &[f64]) -> f64 {
        let d = self.kernel.nrows();
        assert_eq!(theta.len(), d);
        let mut acc = 0.0;
        for j in 0..d {
            let mut row = 0.0;
            for i in 0..d {
                row += self.kernel[(i, j)] * theta[i];
            }
            acc += row * theta[j];
        }
        acc
    }

    /// Largest singular value of the scaled kernel `K`.
    pub fn sigma_max_scaled(&self) -> f64 {
        self.a_mu * self.alpha * self.sigma_max_k
    }

    pub fn dim(&self) -> usize {
        self.kernel.nrows()
    }
}

/// Builds `K = a_mu * alpha * X̃ᵀ L X̃` from an `n × d` action stack.
pub fn quad_kernel(
    action_stack: &DMatrix<f64>,
    laplacian: &DMatrix<f64>,
    a_mu: f64,
    alpha: f64,
) -> Result<LaplacianKernel> {
    let n = action_stack.nrows();
    if laplacian.nrows() != n || laplacian.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "quad_kernel laplacian",
            expected: format!("{n}x{n}"),
            actual: format!("{}x{}", laplacian.nrows(), laplacian.ncols()),
        });
    }
    if !(a_mu > 0.0) {
        return Err(Error::invalid(format!("a_mu must be positive, got {a_mu}")));
    }
    if !(alpha >= 0.0) {
        return Err(Error::invalid(format!(
            "alpha must be non-negative, got {alpha}"
        )));
    }
    let mut raw = action_stack.transpose() * laplacian * action_stack;
    crate::linalg::symmetrize(&mut raw);
    let sigma_max_k = power_sigma_max(&raw, POWER_TOL, POWER_MAX_ITERS);
    let sigma_max_l = power_sigma_max(laplacian, POWER_TOL, POWER_MAX_ITERS);
    let kernel = raw * (a_mu * alpha);
    Ok(LaplacianKernel {
        laplacian: laplacian.clone(),
        kernel,
        sigma_max_l,
        sigma_max_k,
        a_mu,
        alpha,
    })
}

/// Largest Laplacian weight for which the Stage-1 error bound holds:
/// `(1 − λ) / (4 a_mu n (n − 1))`.
pub fn alpha_max(lambda: f64, a_mu: f64, n: usize) -> Result<f64> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::invalid(format!(
            "lambda must lie in (0, 1], got {lambda}"
        )));
    }
    if !(a_mu > 0.0) {
        return Err(Error::invalid(format!("a_mu must be positive, got {a_mu}")));
    }
    if n < 2 {
        return Err(Error::invalid("alpha_max needs n >= 2"));
    }
    let nf = n as f64;
    Ok((1.0 - lambda) / (4.0 * a_mu * nf * (nf - 1.0)))
}

/// Logs a warning when `alpha` exceeds [`alpha_max`]. Never rejects.
/// Each distinct `(alpha, threshold)` pair is reported once per process.
pub fn check_alpha(alpha: f64, lambda: f64, a_mu: f64, n: usize) -> bool {
    static REPORTED: Mutex<BTreeSet<(u64, u64)>> = Mutex::new(BTreeSet::new());
    match alpha_max(lambda, a_mu, n) {
        Ok(max) if alpha > max => {
            let fresh = REPORTED
                .lock()
                .map(|mut seen| seen.insert((alpha.to_bits(), max.to_bits())))
                .unwrap_or(true);
            if fresh {
                warn!("alpha = {alpha:.3e} exceeds the error-bound threshold {max:.3e}");
            }
            false
        }
        _ => true,
    }
}
