//! Penalized logistic fit, the design matrix and UCB selection by hand.
//!
//! Simulates logistic rewards for a 6-dimensional parameter, fits the
//! penalized GLM after each batch, and shows the confidence radius and the
//! chosen action.
//!
//! cargo run --release --example stage2_glm_ucb

use gbl::envs::{draw_noise, LinkFamily};
use gbl::rng::{stream, Stream};
use gbl::stage2::{
    confidence_radius_with, fit_glm_penalized, init_design, lambda_perp_default, select_ucb,
    PenaltySpec,
};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

fn main() -> gbl::Result<()> {
    let d = 6;
    let k = 3;
    let family = LinkFamily::logistic();
    let theta = DVector::from_vec(vec![0.6, -0.5, 0.4, 0.05, -0.03, 0.02]);

    let mut rng = stream(9, Stream::Instance);
    let mut actions: DMatrix<f64> = DMatrix::from_fn(40, d, |_, _| StandardNormal.sample(&mut rng));
    for mut row in actions.row_iter_mut() {
        let n = row.norm();
        row /= n;
    }
    let best = (&actions * &theta).argmax().0;

    let horizon = 600;
    let lambda_perp = lambda_perp_default(family.c_mu, horizon, k, 1.0);
    let penalty = PenaltySpec::new(1.0, lambda_perp, k, d, None)?;
    println!(
        "lambda_perp = {lambda_perp:.2} on the last {} coordinates",
        d - k
    );
    let mut state = init_design(&penalty, family.c_mu, &[])?;
    let mut noise = stream(9, Stream::Noise);
    let constant = family.c_mu.sqrt() * (1.0 + 1.0);

    let mut chosen = 0;
    for t in 1..=horizon {
        let e_t = confidence_radius_with(&state, family.omega, 0.01, constant);
        chosen = if state.history.is_empty() {
            t % actions.nrows()
        } else {
            select_ucb(&actions, &state, e_t, &family)?
        };
        let x = actions.row(chosen).transpose();
        let y = family.sample_from(x.dot(&theta), draw_noise(&mut noise));
        state.update_design(&x, y)?;
        if t % 100 == 0 {
            let fit = fit_glm_penalized(&mut state, &penalty, &family)?;
            println!(
                "t = {t:>4}  newton iters {:>2}  |grad| {:.1e}  e_t {e_t:.3}  error {:.3}  chosen {chosen}",
                fit.iterations,
                fit.grad_norm,
                (&fit.theta - &theta).norm()
            );
        } else if t > 20 && t % 10 == 0 {
            fit_glm_penalized(&mut state, &penalty, &family)?;
        }
    }
    println!("best action {best}, last chosen {chosen}");
    Ok(())
}
