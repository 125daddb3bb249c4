//! Follows the LASSO path on a random dictionary and certifies the result.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sparse_atr::{homotopy_solve, kkt_check, SolverOptions, Tolerance};

fn main() -> sparse_atr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (d, n) = (20, 40);
    let mut a = DMatrix::from_fn(d, n, |_, _| StandardNormal.sample(&mut rng));
    for mut col in a.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }
    let y = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));

    let opts = SolverOptions {
        epsilon: Tolerance::Relative(0.05),
        ..SolverOptions::default()
    };
    let code = homotopy_solve(&a, &y, &opts)?;

    println!(
        "{:>4} {:>12} {:>14} {:>12} {:>6}",
        "step", "lambda", "event", "residual", "active"
    );
    for (i, bp) in code.path.iter().enumerate() {
        println!(
            "{i:>4} {:>12.6} {:>14} {:>12.6} {:>6}",
            bp.lambda,
            format!("{:?}", bp.event),
            bp.residual_norm,
            bp.active_len
        );
    }
    let report = kkt_check(&a, &y, &code.x, code.lambda_final, 1e-8);
    println!(
        "stopped: {:?} at lambda {:.6}, |x|_1 = {:.4}, kkt violation {:.2e}",
        code.status,
        code.lambda_final,
        code.l1_norm(),
        report.max_violation
    );
    Ok(())
}
