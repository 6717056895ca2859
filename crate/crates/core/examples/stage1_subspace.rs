//! Stage-1 subspace estimation from standard normal exploration.
//!
//! Draws `T₁` Gaussian matrices, observes rewards of their normalized
//! versions, forms the truncated moment and solves the nuclear-norm plus
//! Laplacian problem. Prints the subspace error against the true factors
//! for several `T₁`, then shows the rotated coordinates of the truth.
//!
//! cargo run --release --example stage1_subspace

use gbl::envs::{make_theta, standard_normal_matrix, LinkFamily, DEFAULT_THETA_EPS};
use gbl::graphs::{quad_kernel, Graph};
use gbl::linalg::sin_theta;
use gbl::rng::{stream, Stream};
use gbl::stage1::{
    default_nu_beta, estimate_theta_stage1, split_and_transform, tau_bound, Stage1Config,
    TheoryInputs, TruncatedMoment,
};
use nalgebra::DMatrix;

fn main() -> gbl::Result<()> {
    let (d1, d2, r) = (8, 8, 2);
    let family = LinkFamily::linear(0.01)?;
    let mut irng = stream(3, Stream::Instance);
    let truth = make_theta(
        d1,
        d2,
        r,
        &Graph::empty(d1),
        &Graph::empty(d2),
        DEFAULT_THETA_EPS,
        &mut irng,
    )?;

    let sv = truth.singular_values();
    println!(
        "true singular values {:.4} {:.4}; the weaker one sets the difficulty\n",
        sv[0], sv[1]
    );
    println!(
        "{:>6} {:>10} {:>12} {:>10} {:>8}",
        "T1", "nu", "subspace", "tau", "iters"
    );
    for t1 in [100, 400, 1600] {
        let mut rng = stream(t1 as u64, Stream::Explore);
        let mut noise = stream(t1 as u64, Stream::Noise);
        let samples: Vec<(DMatrix<f64>, f64)> = (0..t1)
            .map(|_| {
                let g = standard_normal_matrix(d1, d2, &mut rng);
                let z = (&g / g.norm()).dot(&truth.theta);
                let y = family.sample_from(z, gbl::envs::draw_noise(&mut noise));
                (g, y)
            })
            .collect();

        let inputs = TheoryInputs {
            d1,
            d2,
            t1,
            gamma: 1.0,
            omega: family.omega,
            r_max: family.r_max,
            delta: 0.01,
            zeta: 1.0,
        };
        let (nu, _beta) = default_nu_beta(&inputs);
        let moment = TruncatedMoment::from_samples(samples.iter().map(|(g, y)| (g, *y)), nu)?;
        // No graph here: the kernel is zero, so the solve is plain SVT.
        let kernel = quad_kernel(
            &DMatrix::zeros(2, d1 * d2),
            &DMatrix::zeros(2, 2),
            family.a_mu,
            0.0,
        )?;
        let cfg = Stage1Config {
            lambda: 0.01,
            rank: r,
            t1,
            ..Stage1Config::default()
        };
        let est = estimate_theta_stage1(&moment, &kernel, &cfg)?;
        let tr = split_and_transform(&est.theta, r)?;
        let err =
            sin_theta(&tr.u_hat_perp, &truth.u_star).max(sin_theta(&tr.v_hat_perp, &truth.v_star));
        let tau = tau_bound(&tr, &inputs, Some(1.0))?;
        println!(
            "{t1:>6} {nu:>10.4} {err:>12.4} {tau:>10.4} {:>8}",
            est.iterations
        );
        if t1 == 1600 {
            let coords = tr.rearrange(&tr.rotate(&truth.theta));
            let head: f64 = coords.rows(0, tr.k).norm();
            let tail: f64 = coords.rows(tr.k, coords.len() - tr.k).norm();
            println!(
                "\ntruth in rotated coordinates: |head| = {head:.4}, |tail| = {tail:.4} (k = {})",
                tr.k
            );
        }
    }
    Ok(())
}
