//! Sparse-representation classification (SRC) for sonar-like target chips.
//!
//! The pipeline:
//!
//! 1. [`imaging`] renders synthetic target chips, corrupts them with Gaussian
//!    noise or Gaussian blur, and turns them into unit-norm feature vectors.
//! 2. [`dictionary`] stacks vectorized training chips column-wise into a
//!    class-partitioned dictionary `A = [A_1 A_2 ...]`.
//! 3. [`l1solver`] sparse-codes a test vector over `A` by following the LASSO
//!    regularization path (homotopy) of `½‖y − Ax‖₂² + λ‖x‖₁`.
//! 4. [`classifier`] assigns the class whose coefficients reconstruct the test
//!    vector with the smallest residual, and scores how concentrated the code
//!    is with the sparsity concentration index (SCI) so foreign objects can be
//!    rejected.
//! 5. [`harness`] runs the training-size, noise, blur, and SCI-threshold
//!    sweeps and writes CSV tables, confusion matrices, and gnuplot scripts.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod classifier;
pub mod dictionary;
pub mod error;
pub mod harness;
pub mod imaging;
pub mod l1solver;

pub use classifier::{
    classify, classify_with_rejection, nearest_neighbor_baseline, sci, ClassificationResult,
    RejectionPolicy,
};
pub use dictionary::{build_dictionary, delta, sample_split, ClassLabel, DataSplit, Dictionary};
pub use error::{Error, Result};
pub use imaging::{
    add_noise, apply_blur, generate_chip, read_pgm, vectorize, write_pgm, CorruptionSpec,
    FeatureDim, ImageChip, ShapeClass,
};
pub use l1solver::{
    homotopy_solve, ista_solve, kkt_check, l0_brute_force, HomotopySolver, SolverOptions,
    SparseCode, StopStatus, Tolerance,
};
