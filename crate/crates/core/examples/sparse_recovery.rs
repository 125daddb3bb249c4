//! Recovers a 2-sparse vector three ways: homotopy, ISTA at the same λ, and
//! exhaustive ℓ0 search.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sparse_atr::l1solver::{objective, L0Outcome};
use sparse_atr::{homotopy_solve, ista_solve, l0_brute_force, SolverOptions, Tolerance};

fn main() -> sparse_atr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (d, n) = (64, 20);
    let mut a = DMatrix::from_fn(d, n, |_, _| StandardNormal.sample(&mut rng));
    for mut col in a.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }
    let mut truth = DVector::zeros(n);
    truth[3] = 1.5;
    truth[14] = -0.8;
    let y = &a * &truth;

    let code = homotopy_solve(
        &a,
        &y,
        &SolverOptions {
            epsilon: Tolerance::Absolute(1e-6),
            ..SolverOptions::default()
        },
    )?;
    println!(
        "homotopy support {:?}, residual {:.2e}",
        code.active_set, code.residual_norm
    );
    println!(
        "homotopy x[3] = {:.6}, x[14] = {:.6}",
        code.x[3], code.x[14]
    );

    match l0_brute_force(&a, &y, 1e-6, 3)? {
        L0Outcome::Feasible { support, .. } => println!("l0 support       {support:?}"),
        L0Outcome::Infeasible { best_residual } => println!("l0 infeasible ({best_residual:.2e})"),
    }

    // Same problem at a fixed λ, where both solvers target one minimizer.
    let lambda = 0.1 * code.lambda_max;
    let path = homotopy_solve(
        &a,
        &y,
        &SolverOptions {
            epsilon: Tolerance::Absolute(0.0),
            lambda_min: Tolerance::Absolute(lambda),
            ..SolverOptions::default()
        },
    )?;
    let ista = ista_solve(&a, &y, lambda, 1e-15, 200_000)?;
    let f_path = objective(&a, &y, &path.x, lambda);
    println!(
        "at lambda {lambda:.4}: homotopy F = {f_path:.10}, ista F = {:.10} ({} iterations)",
        ista.objective, ista.iterations
    );
    Ok(())
}
