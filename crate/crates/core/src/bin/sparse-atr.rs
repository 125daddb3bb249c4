use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use sparse_atr::harness::{
    emit_plot_scripts, harness_solver_options, run_experiment, ExperimentConfig, ExperimentKind,
};
use sparse_atr::{
    build_dictionary, classify, classify_with_rejection, generate_chip, nearest_neighbor_baseline,
    read_pgm, vectorize, write_pgm, Dictionary, Error, FeatureDim, HomotopySolver, RejectionPolicy,
    Result, ShapeClass, SolverOptions, Tolerance,
};

#[derive(Parser)]
#[command(
    name = "sparse-atr",
    version,
    about = "Sparse-representation target classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render synthetic chips as PGM files plus a manifest.
    Generate(GenerateArgs),
    /// Sparse-code one signal over a dictionary and print the code.
    Solve(SolveArgs),
    /// Classify one chip against a saved dictionary.
    Classify(ClassifyArgs),
    /// Run a sweep: training-size, noise, blur or sci.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct StopArgs {
    /// Residual target, `rel:v` (times ‖y‖) or `abs:v`.
    #[arg(long)]
    epsilon: Option<Tolerance>,
    /// Path floor, `rel:v` (times λ₀) or `abs:v`.
    #[arg(long)]
    lambda_min: Option<Tolerance>,
    #[arg(long)]
    max_breakpoints: Option<usize>,
}

impl StopArgs {
    fn apply(&self, mut opts: SolverOptions) -> Result<SolverOptions> {
        if let Some(e) = self.epsilon {
            opts.epsilon = e;
        }
        if let Some(l) = self.lambda_min {
            opts.lambda_min = l;
        }
        if self.max_breakpoints.is_some() {
            opts.max_breakpoints = self.max_breakpoints;
        }
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, short, default_value = "chips")]
    out: PathBuf,
    /// Comma-separated classes; defaults to all six.
    #[arg(long, value_delimiter = ',')]
    classes: Vec<ShapeClass>,
    /// Chips per class; defaults to each class's reference pool size.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value = "64x64")]
    size: FeatureDim,
    /// Offset added to the chip index to form its pose seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also build a dictionary from the generated main-class chips.
    #[arg(long)]
    dictionary: Option<PathBuf>,
    /// Chips per class that go into the dictionary (default: all).
    #[arg(long)]
    train_per_class: Option<usize>,
    #[arg(long, default_value = "16x16")]
    features: FeatureDim,
}

#[derive(Args)]
struct SolveArgs {
    /// Saved dictionary container.
    #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
    dictionary: Option<PathBuf>,
    /// Dense matrix as CSV, one row per signal dimension.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Signal as a PGM chip or a list of numbers.
    #[arg(long)]
    signal: PathBuf,
    /// Feature grid used when the signal is a PGM chip.
    #[arg(long, default_value = "16x16")]
    features: FeatureDim,
    #[command(flatten)]
    stop: StopArgs,
    /// Print every breakpoint of the path.
    #[arg(long)]
    path: bool,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    dictionary: PathBuf,
    #[arg(long)]
    chip: PathBuf,
    #[arg(long, default_value = "16x16")]
    features: FeatureDim,
    /// Reject codes whose SCI falls below this threshold.
    #[arg(long)]
    kappa: Option<f64>,
    /// Also report the nearest-neighbor baseline.
    #[arg(long)]
    baseline: bool,
    #[command(flatten)]
    stop: StopArgs,
}

#[derive(Args)]
struct ExperimentArgs {
    name: ExperimentKind,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run trials on the current thread.
    #[arg(long)]
    serial: bool,
    /// Write gnuplot scripts next to the CSVs.
    #[arg(long)]
    plots: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Classify(a) => classify_chip(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let classes = if a.classes.is_empty() {
        ShapeClass::ALL.to_vec()
    } else {
        a.classes
    };
    std::fs::create_dir_all(&a.out)?;
    let mut manifest = csv::Writer::from_path(a.out.join("manifest.csv"))?;
    manifest.write_record(["file", "class", "pose_seed", "width", "height"])?;
    let mut training = Vec::new();
    for class in classes {
        let count = a.count.unwrap_or_else(|| class.reference_pool_size());
        for i in 0..count {
            let seed = a.seed + i as u64;
            let chip = generate_chip(class, seed, (a.size.width, a.size.height))?;
            let file = format!("{}_{i:03}.pgm", class.name());
            std::fs::write(a.out.join(&file), write_pgm(&chip)?)?;
            manifest.write_record([
                file,
                class.name().to_string(),
                seed.to_string(),
                chip.width().to_string(),
                chip.height().to_string(),
            ])?;
            if class.is_main() && a.train_per_class.is_none_or(|n| i < n) {
                training.push((chip, class));
            }
        }
    }
    manifest.flush()?;
    println!("wrote chips and manifest.csv to {}", a.out.display());

    if let Some(path) = a.dictionary {
        let dict = build_dictionary(&training, a.features)?;
        dict.save(&path)?;
        println!(
            "wrote dictionary {} ({} atoms, {} classes, dim {})",
            path.display(),
            dict.len(),
            dict.class_count(),
            dict.dim()
        );
    }
    Ok(())
}

fn require(path: &Path) -> Result<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingFiles(vec![path.to_path_buf()]))
    }
}

fn read_numbers(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(require(path)?)?;
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split([',', ' ', '\t']))
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Data(format!("{}: not a number: {t:?}", path.display())))
        })
        .collect()
}

fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(require(path)?)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in reader.records() {
        let row = rec?
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Data(format!("{}: not a number: {v:?}", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Data(format!(
            "{}: expected a non-empty rectangular matrix",
            path.display()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn read_signal(path: &Path, features: FeatureDim) -> Result<DVector<f64>> {
    let values = if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
    {
        vectorize(&read_pgm(&std::fs::read(require(path)?)?)?, features)?
    } else {
        read_numbers(path)?
    };
    Ok(DVector::from_vec(values))
}

fn solve(a: SolveArgs) -> Result<()> {
    let opts = a.stop.apply(SolverOptions::default())?;
    let y = read_signal(&a.signal, a.features)?;
    let code = match (&a.dictionary, &a.matrix) {
        (Some(p), _) => {
            let dict = Dictionary::load(require(p)?)?;
            HomotopySolver::with_gram(dict.atoms(), dict.gram())?.solve(&y, &opts)?
        }
        (None, Some(p)) => HomotopySolver::new(&read_matrix(p)?)?.solve(&y, &opts)?,
        (None, None) => unreachable!("clap requires one source"),
    };

    let mut out = std::io::stdout().lock();
    writeln!(out, "status        {:?}", code.status)?;
    writeln!(out, "lambda_max    {:.6e}", code.lambda_max)?;
    writeln!(out, "lambda_final  {:.6e}", code.lambda_final)?;
    writeln!(out, "residual_norm {:.6e}", code.residual_norm)?;
    writeln!(out, "l1_norm       {:.6e}", code.l1_norm())?;
    writeln!(out, "breakpoints   {}", code.iterations)?;
    writeln!(out, "active        {}", code.active_set.len())?;
    for &j in &code.active_set {
        writeln!(out, "  x[{j}] = {:+.6e}", code.x[j])?;
    }
    if a.path {
        writeln!(out, "path:")?;
        for bp in &code.path {
            writeln!(
                out,
                "  lambda {:.6e}  {:?}  residual {:.6e}  active {}",
                bp.lambda, bp.event, bp.residual_norm, bp.active_len
            )?;
        }
    }
    Ok(())
}

fn classify_chip(a: ClassifyArgs) -> Result<()> {
    let opts = a.stop.apply(harness_solver_options())?;
    let dict = Dictionary::load(require(&a.dictionary)?)?;
    let y = read_signal(&a.chip, a.features)?;
    let result = match a.kappa {
        Some(k) => classify_with_rejection(&dict, &y, &opts, RejectionPolicy::new(k)?)?,
        None => classify(&dict, &y, &opts)?,
    };

    let mut out = std::io::stdout().lock();
    writeln!(out, "predicted {}", result.predicted)?;
    writeln!(out, "sci       {:.4}", result.sci)?;
    if a.kappa.is_some() {
        writeln!(out, "rejected  {}", result.rejected)?;
    }
    for (class, r) in dict.classes().iter().zip(&result.residuals) {
        writeln!(out, "  residual {:<10} {r:.6}", class.to_string())?;
    }
    if a.baseline {
        writeln!(out, "baseline  {}", nearest_neighbor_baseline(&dict, &y)?)?;
    }
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::from_file(require(path)?, Some(a.name))?,
        None => ExperimentConfig::new(a.name),
    };
    if let Some(dir) = a.output_dir {
        cfg.output_dir = dir;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    if a.serial {
        cfg.parallel = false;
    }
    cfg.validate()?;

    let outcome = run_experiment(&cfg)?;
    for row in &outcome.accuracy {
        print!(
            "{:>8}  accuracy {:.4} ± {:.4}",
            row.sweep_value, row.accuracy.mean, row.accuracy.std_error
        );
        if let Some(b) = row.baseline {
            print!("  baseline {:.4} ± {:.4}", b.mean, b.std_error);
        }
        println!();
    }
    for row in &outcome.sci_table {
        println!(
            "train {:>3}  {:<10} sci {:.3} (std {:.3}, n={})",
            row.train_per_class, row.group, row.mean, row.std, row.count
        );
    }
    for row in &outcome.kappa_table {
        println!(
            "train {:>3}  kappa {:.2}  foreign accepted {:>3}/{:<3} main accepted {:>4}/{:<4}",
            row.train_per_class,
            row.kappa,
            row.foreign_accepted,
            row.foreign_accepted + row.foreign_rejected,
            row.main_accepted,
            row.main_accepted + row.main_rejected
        );
    }
    let mut files = outcome.files;
    if a.plots {
        files.extend(emit_plot_scripts(&cfg.output_dir)?);
    }
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
