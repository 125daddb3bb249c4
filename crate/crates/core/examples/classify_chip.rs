//! Builds a dictionary from synthetic training chips and classifies held-out
//! chips, comparing against the nearest-neighbor baseline.

use nalgebra::DVector;
use sparse_atr::harness::harness_solver_options;
use sparse_atr::{
    build_dictionary, classify, generate_chip, nearest_neighbor_baseline, vectorize, FeatureDim,
    ShapeClass,
};

fn main() -> sparse_atr::Result<()> {
    let dim = FeatureDim::default();
    let mains: Vec<ShapeClass> = ShapeClass::ALL
        .into_iter()
        .filter(|c| c.is_main())
        .collect();

    let training: Vec<_> = mains
        .iter()
        .flat_map(|&c| (0..20).map(move |i| (c, i)))
        .map(|(c, i)| Ok((generate_chip(c, i, (64, 64))?, c)))
        .collect::<sparse_atr::Result<_>>()?;
    let dict = build_dictionary(&training, dim)?;
    println!("dictionary: {} atoms of dim {}", dict.len(), dict.dim());

    let opts = harness_solver_options();
    let (mut src_hits, mut nn_hits, mut total) = (0, 0, 0);
    for &class in &mains {
        for seed in 100..110 {
            let y = DVector::from_vec(vectorize(&generate_chip(class, seed, (64, 64))?, dim)?);
            let result = classify(&dict, &y, &opts)?;
            let nn = nearest_neighbor_baseline(&dict, &y)?;
            src_hits += usize::from(result.predicted.shape() == Some(class));
            nn_hits += usize::from(nn.shape() == Some(class));
            total += 1;
            if seed == 100 {
                let residuals: Vec<String> =
                    result.residuals.iter().map(|r| format!("{r:.3}")).collect();
                println!(
                    "{:<9} -> {:<9} sci {:.3} residuals [{}]",
                    class.name(),
                    result.predicted.to_string(),
                    result.sci,
                    residuals.join(", ")
                );
            }
        }
    }
    println!("SRC {src_hits}/{total}, nearest neighbor {nn_hits}/{total}");
    Ok(())
}
