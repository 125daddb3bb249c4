//! Residual-based classification over a class-partitioned dictionary.
//!
//! A test vector is coded against every training column at once; each class
//! is then scored by how well its own coefficients alone reconstruct the
//! signal. The sparsity concentration index (SCI) measures how much of the
//! code's ℓ1 mass sits in a single class and drives rejection of
//! out-of-library objects.

use nalgebra::DVector;

use crate::dictionary::{ClassLabel, Dictionary};
use crate::error::{Error, Result};
use crate::l1solver::{HomotopySolver, SolverOptions, SparseCode};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    /// `‖y − A·δ_j(x)‖₂` for each class, in dictionary class order.
    pub residuals: Vec<f64>,
    pub predicted: ClassLabel,
    pub sci: f64,
    pub rejected: bool,
    pub code: SparseCode,
}

impl ClassificationResult {
    /// Index of the predicted class in dictionary class order.
    pub fn predicted_index(&self) -> usize {
        argmin(&self.residuals)
    }
}

/// Rejects a classification when its SCI falls below `kappa`. A zero code
/// has SCI 0 and is therefore always rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RejectionPolicy {
    kappa: f64,
}

impl RejectionPolicy {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::invalid(format!(
                "kappa must lie in (0, 1), got {kappa}"
            )));
        }
        Ok(Self { kappa })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn rejects(&self, sci: f64) -> bool {
        sci < self.kappa
    }
}

fn check_dim(dict: &Dictionary, y: &DVector<f64>) -> Result<()> {
    if y.len() != dict.dim() {
        return Err(Error::invalid(format!(
            "feature vector has length {}, dictionary expects {}",
            y.len(),
            dict.dim()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("feature vector contains non-finite values"));
    }
    Ok(())
}

/// Lowest index wins ties.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Per-class residuals `‖y − A·δ_j(x)‖₂`.
pub fn class_residuals(dict: &Dictionary, y: &DVector<f64>, x: &DVector<f64>) -> Result<Vec<f64>> {
    check_dim(dict, y)?;
    if x.len() != dict.len() {
        return Err(Error::invalid(format!(
            "coefficient vector has length {}, dictionary has {} columns",
            x.len(),
            dict.len()
        )));
    }
    let atoms = dict.atoms();
    Ok(dict
        .class_ranges()
        .iter()
        .map(|range| {
            let mut r = y.clone();
            for j in range.clone() {
                if x[j] != 0.0 {
                    r.axpy(-x[j], &atoms.column(j), 1.0);
                }
            }
            r.norm()
        })
        .collect())
}

/// Sparsity concentration index `(k·max_i ‖δ_i(x)‖₁/‖x‖₁ − 1)/(k − 1)`,
/// defined as 0 for the zero vector.
pub fn sci(dict: &Dictionary, x: &DVector<f64>) -> f64 {
    let total: f64 = x.iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let k = dict.class_count() as f64;
    let max_mass = dict
        .class_ranges()
        .iter()
        .map(|r| {
            x.rows(r.start, r.len())
                .iter()
                .map(|v| v.abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    ((k * max_mass / total - 1.0) / (k - 1.0)).clamp(0.0, 1.0)
}

/// Codes `y` against the whole dictionary and picks the class with the
/// smallest residual. No rejection is applied.
pub fn classify(
    dict: &Dictionary,
    y: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<ClassificationResult> {
    check_dim(dict, y)?;
    let solver = HomotopySolver::with_gram(dict.atoms(), dict.gram())?;
    let code = solver.solve(y, opts).map_err(|e| match e {
        Error::Numerical(msg) => Error::Numerical(format!("sparse coding failed: {msg}")),
        other => other,
    })?;
    let residuals = class_residuals(dict, y, &code.x)?;
    let predicted = dict.classes()[argmin(&residuals)];
    let sci = sci(dict, &code.x);
    Ok(ClassificationResult {
        residuals,
        predicted,
        sci,
        rejected: false,
        code,
    })
}

/// As [`classify`], flagging the result as rejected when its SCI is below
/// the policy threshold. The argmin label is kept either way.
pub fn classify_with_rejection(
    dict: &Dictionary,
    y: &DVector<f64>,
    opts: &SolverOptions,
    policy: RejectionPolicy,
) -> Result<ClassificationResult> {
    let mut result = classify(dict, y, opts)?;
    result.rejected = policy.rejects(result.sci);
    Ok(result)
}

/// Label of the column with the largest inner product with `y`.
pub fn nearest_neighbor_baseline(dict: &Dictionary, y: &DVector<f64>) -> Result<ClassLabel> {
    check_dim(dict, y)?;
    let scores = dict.atoms().tr_mul(y);
    let mut best = 0;
    for j in 1..scores.len() {
        if scores[j] > scores[best] {
            best = j;
        }
    }
    Ok(dict.labels()[best])
}
