//! Random action graphs and the Laplacian kernel they induce.
//!
//! Builds ER, BA and k-NN graphs over 60 Gaussian actions, then checks that
//! the kernel's quadratic form equals the pairwise sum of squared predicted
//! reward differences over the edges.
//!
//! cargo run --example graphs_and_kernels

use gbl::envs::make_actions_gaussian;
use gbl::graphs::{alpha_max, ba_graph, er_graph, knn_graph, laplacian, quad_kernel, Graph};
use gbl::linalg::vec_of;
use gbl::rng::{stream, Stream};
use nalgebra::{DMatrix, DVector};

fn describe(name: &str, g: &Graph) {
    let deg = g.degrees();
    let max = deg.iter().max().copied().unwrap_or(0);
    let mean = deg.iter().sum::<usize>() as f64 / deg.len() as f64;
    println!(
        "{name:<10} edges {:>5}  mean degree {mean:>6.2}  max degree {max:>3}",
        g.edge_count()
    );
}

fn main() -> gbl::Result<()> {
    let seed = 7;
    let (n, d1, d2) = (60, 4, 4);
    let mut rng = stream(seed, Stream::Instance);
    let actions = make_actions_gaussian(n, d1, d2, &mut rng)?;
    let stack = DMatrix::from_fn(n, d1 * d2, |i, j| vec_of(&actions[i])[j]);

    let mut grng = stream(seed, Stream::Graph);
    let er = er_graph(n, 0.1, &mut grng)?;
    let ba = ba_graph(n, 3, &mut grng)?;
    let points: Vec<Vec<f64>> = actions
        .iter()
        .map(|a| vec_of(a).as_slice().to_vec())
        .collect();
    let knn = knn_graph(&points, 5)?;
    for (name, g) in [("er p=0.1", &er), ("ba m=3", &ba), ("knn k=5", &knn)] {
        describe(name, g);
    }

    let (lambda, a_mu) = (0.01, 1.0);
    let amax = alpha_max(lambda, a_mu, n)?;
    println!("\nalpha_max for lambda={lambda}, n={n}: {amax:.3e}");

    let l = laplacian(&er);
    let kern = quad_kernel(&stack, &l, a_mu, amax)?;
    println!(
        "sigma_max(L) = {:.3}, sigma_max(X'LX) = {:.3}",
        kern.sigma_max_l, kern.sigma_max_k
    );

    let theta = DVector::from_fn(d1 * d2, |i, _| ((i as f64) * 0.37).sin());
    let quad = kern.quad_form(theta.as_slice());
    let preds = &stack * &theta;
    let pairwise: f64 = er
        .edges()
        .map(|(i, j)| (preds[i] - preds[j]).powi(2))
        .sum::<f64>()
        * a_mu
        * amax;
    println!("theta'K theta = {quad:.6e}, edge sum = {pairwise:.6e}");
    Ok(())
}
