//! Runs a reduced version of every sweep and writes CSVs plus gnuplot
//! scripts.
//!
//! ```text
//! cargo run --release --example experiment_sweeps -- [out_dir] [trials]
//! ```

use std::path::PathBuf;

use sparse_atr::harness::{emit_plot_scripts, run_experiment, ExperimentConfig, ExperimentKind};

fn main() -> sparse_atr::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("sparse-atr-results"));
    let trials = args.next().and_then(|t| t.parse().ok()).unwrap_or(5);

    for kind in ExperimentKind::ALL {
        let mut cfg = ExperimentConfig::new(kind);
        cfg.trials = trials;
        cfg.output_dir = out.clone();
        let outcome = run_experiment(&cfg)?;
        println!("{kind}");
        for row in &outcome.accuracy {
            let baseline = row
                .baseline
                .map(|b| format!("  nearest neighbor {:.3}", b.mean))
                .unwrap_or_default();
            println!(
                "  {:>6}: {:.3} ± {:.3}{baseline}",
                row.sweep_value, row.accuracy.mean, row.accuracy.std_error
            );
        }
        for row in outcome.sci_table.iter().filter(|r| r.train_per_class == 45) {
            println!("  sci {:<9} {:.3}", row.group.to_string(), row.mean);
        }
    }
    for script in emit_plot_scripts(&out)? {
        println!("plot script {}", script.display());
    }
    Ok(())
}
