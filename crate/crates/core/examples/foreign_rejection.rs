//! Shows how the SCI threshold separates main-class chips from foreign ones.

use nalgebra::DVector;
use sparse_atr::harness::harness_solver_options;
use sparse_atr::{
    build_dictionary, classify, generate_chip, vectorize, FeatureDim, RejectionPolicy, ShapeClass,
};

fn main() -> sparse_atr::Result<()> {
    let dim = FeatureDim::default();
    let training: Vec<_> = ShapeClass::ALL
        .into_iter()
        .filter(|c| c.is_main())
        .flat_map(|c| (0..45).map(move |i| (c, i)))
        .map(|(c, i)| Ok((generate_chip(c, i, (64, 64))?, c)))
        .collect::<sparse_atr::Result<_>>()?;
    let dict = build_dictionary(&training, dim)?;
    let opts = harness_solver_options();

    let mut scores: Vec<(ShapeClass, f64)> = Vec::new();
    for class in ShapeClass::ALL {
        for seed in 200..210 {
            let y = DVector::from_vec(vectorize(&generate_chip(class, seed, (64, 64))?, dim)?);
            scores.push((class, classify(&dict, &y, &opts)?.sci));
        }
    }
    for class in ShapeClass::ALL {
        let s: Vec<f64> = scores
            .iter()
            .filter(|(c, _)| *c == class)
            .map(|(_, s)| *s)
            .collect();
        println!(
            "{:<9} mean sci {:.3}",
            class.name(),
            s.iter().sum::<f64>() / s.len() as f64
        );
    }
    for kappa in [0.05, 0.15, 0.25, 0.4] {
        let policy = RejectionPolicy::new(kappa)?;
        let accepted = |main: bool| {
            scores
                .iter()
                .filter(|(c, s)| c.is_main() == main && !policy.rejects(*s))
                .count()
        };
        println!(
            "kappa {kappa:.2}: main accepted {:>2}/40, foreign accepted {:>2}/20",
            accepted(true),
            accepted(false)
        );
    }
    Ok(())
}
