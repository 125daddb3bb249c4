use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imaging::FeatureDim;
use crate::l1solver::{SolverOptions, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentKind {
    TrainingSize,
    Noise,
    Blur,
    SciThreshold,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::TrainingSize,
        ExperimentKind::Noise,
        ExperimentKind::Blur,
        ExperimentKind::SciThreshold,
    ];

    /// Name used on the command line and in config files.
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::TrainingSize => "training-size",
            ExperimentKind::Noise => "noise",
            ExperimentKind::Blur => "blur",
            ExperimentKind::SciThreshold => "sci",
        }
    }

    /// Prefix of every output file of this experiment.
    pub fn file_stem(self) -> &'static str {
        match self {
            ExperimentKind::TrainingSize => "training_size",
            ExperimentKind::Noise => "noise",
            ExperimentKind::Blur => "blur",
            ExperimentKind::SciThreshold => "sci",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| !matches!(c, '-' | '_'))
            .collect();
        match key.as_str() {
            "trainingsize" | "training" => Ok(ExperimentKind::TrainingSize),
            "noise" => Ok(ExperimentKind::Noise),
            "blur" => Ok(ExperimentKind::Blur),
            "sci" | "scithreshold" => Ok(ExperimentKind::SciThreshold),
            _ => Err(Error::Config(format!(
                "unknown experiment {s:?} (expected training-size, noise, blur or sci)"
            ))),
        }
    }
}

/// Everything needed to run one sweep reproducibly.
///
/// Text form is one `key = value` per line with `#` comments; lists are
/// comma-separated. Keys match the field names, with the solver options
/// flattened (`epsilon`, `lambda_min`, `max_breakpoints`, `kkt_tol`).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub trials: usize,
    /// Sweep axis of the training-size experiment; a single value for noise
    /// and blur; the dictionary sizes compared by the SCI experiment.
    pub train_per_class: Vec<usize>,
    pub test_per_class: usize,
    /// Foreign-class tests per class (SCI experiment only).
    pub foreign_test_per_class: usize,
    pub noise_variances: Vec<f64>,
    pub blur_intensities: Vec<f64>,
    pub kappas: Vec<f64>,
    pub feature_dim: FeatureDim,
    pub chip_size: (usize, usize),
    pub solver: SolverOptions,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Apply the sweep's corruption to training chips as well as tests.
    pub corrupt_training: bool,
    pub parallel: bool,
    /// Fill the `runtime_ms` record column. Off by default because timings
    /// make outputs differ between runs.
    pub record_timing: bool,
}

/// Solver settings used by the sweeps: stop at 20% relative residual or at
/// 2% of `λ₀`, whichever comes first, so codes stay sparse under noise.
pub fn harness_solver_options() -> SolverOptions {
    SolverOptions {
        epsilon: Tolerance::Relative(0.2),
        lambda_min: Tolerance::Relative(0.02),
        ..SolverOptions::default()
    }
}

impl ExperimentConfig {
    /// Defaults for `kind`.
    pub fn new(kind: ExperimentKind) -> Self {
        let (train_per_class, test_per_class) = match kind {
            ExperimentKind::TrainingSize => ((1..=9).map(|i| 5 * i).collect(), 10),
            ExperimentKind::Noise | ExperimentKind::Blur => (vec![25], 10),
            ExperimentKind::SciThreshold => (vec![25, 35, 45], 20),
        };
        Self {
            experiment: kind,
            trials: 20,
            train_per_class,
            test_per_class,
            foreign_test_per_class: 10,
            noise_variances: vec![0.0, 0.01, 0.025, 0.05, 0.1, 0.2],
            blur_intensities: vec![0.0, 1.0, 2.0, 3.0, 4.0, 6.0],
            kappas: vec![0.05, 0.15, 0.25],
            feature_dim: FeatureDim::default(),
            chip_size: (64, 64),
            solver: harness_solver_options(),
            master_seed: 1,
            output_dir: PathBuf::from("results"),
            corrupt_training: false,
            parallel: true,
            record_timing: false,
        }
    }

    /// Parses the text form. `kind` overrides the file's `experiment` key;
    /// without either the experiment is an error.
    pub fn parse(text: &str, kind: Option<ExperimentKind>) -> Result<Self> {
        let mut entries: Vec<(usize, &str, &str)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let key = key.trim();
            if entries.iter().any(|(_, k, _)| *k == key) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {key:?}",
                    i + 1
                )));
            }
            entries.push((i + 1, key, value.trim()));
        }

        let from_file = entries
            .iter()
            .find(|(_, k, _)| *k == "experiment")
            .map(|(_, _, v)| v.parse::<ExperimentKind>())
            .transpose()?;
        let kind = kind
            .or(from_file)
            .ok_or_else(|| Error::Config("no experiment given".into()))?;

        let mut cfg = Self::new(kind);
        for (line, key, value) in entries {
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {line}: {key}: {}", plain(e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>, kind: Option<ExperimentKind>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, kind)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => {}
            "trials" => self.trials = parse_num(value)?,
            "train_per_class" => self.train_per_class = parse_list(value)?,
            "test_per_class" => self.test_per_class = parse_num(value)?,
            "foreign_test_per_class" => self.foreign_test_per_class = parse_num(value)?,
            "noise_variances" => self.noise_variances = parse_list(value)?,
            "blur_intensities" => self.blur_intensities = parse_list(value)?,
            "kappas" => self.kappas = parse_list(value)?,
            "feature_dim" => self.feature_dim = value.parse()?,
            "chip_size" => {
                let dim: FeatureDim = value.parse()?;
                self.chip_size = (dim.width, dim.height);
            }
            "epsilon" => self.solver.epsilon = value.parse()?,
            "lambda_min" => self.solver.lambda_min = value.parse()?,
            "max_breakpoints" => {
                self.solver.max_breakpoints = match value {
                    "auto" => None,
                    v => Some(parse_num(v)?),
                }
            }
            "kkt_tol" => self.solver.kkt_tol = parse_num(value)?,
            "master_seed" => self.master_seed = parse_num(value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "corrupt_training" => self.corrupt_training = parse_bool(value)?,
            "parallel" => self.parallel = parse_bool(value)?,
            "record_timing" => self.record_timing = parse_bool(value)?,
            _ => return Err(Error::invalid("unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.train_per_class.is_empty() || self.train_per_class.contains(&0) {
            return fail("train_per_class must be a non-empty list of positive counts".into());
        }
        if self.test_per_class == 0 {
            return fail("test_per_class must be at least 1".into());
        }
        let (cw, ch) = self.chip_size;
        if cw < 16 || ch < 16 {
            return fail(format!("chip_size must be at least 16x16, got {cw}x{ch}"));
        }
        let fd = self.feature_dim;
        if fd.width < 4 || fd.height < 4 || fd.width > cw || fd.height > ch {
            return fail(format!(
                "feature_dim {fd} must be at least 4x4 and fit in the chip"
            ));
        }
        self.solver
            .validate()
            .map_err(|e| Error::Config(plain(e)))?;

        let non_negative = |name: &str, values: &[f64]| {
            if values.is_empty() {
                return fail(format!("{name} must not be empty"));
            }
            if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return fail(format!("{name} entries must be finite and >= 0, got {v}"));
            }
            Ok(())
        };
        match self.experiment {
            ExperimentKind::TrainingSize => {}
            ExperimentKind::Noise | ExperimentKind::Blur => {
                if self.train_per_class.len() != 1 {
                    return fail(format!(
                        "{} uses a single train_per_class value",
                        self.experiment
                    ));
                }
                if self.experiment == ExperimentKind::Noise {
                    non_negative("noise_variances", &self.noise_variances)?;
                } else {
                    non_negative("blur_intensities", &self.blur_intensities)?;
                }
            }
            ExperimentKind::SciThreshold => {
                if self.kappas.is_empty() {
                    return fail("kappas must not be empty".into());
                }
                if let Some(k) = self.kappas.iter().find(|k| !(**k > 0.0 && **k < 1.0)) {
                    return fail(format!("kappas must lie in (0, 1), got {k}"));
                }
                if self.foreign_test_per_class == 0 {
                    return fail("foreign_test_per_class must be at least 1".into());
                }
            }
        }
        Ok(())
    }

    /// Seed of trial `t`: `master_seed XOR t`.
    pub fn trial_seed(&self, t: usize) -> u64 {
        self.master_seed ^ t as u64
    }

    /// Text form accepted by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let sizes = self
            .train_per_class
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        let breakpoints = self
            .solver
            .max_breakpoints
            .map_or("auto".to_string(), |b| b.to_string());
        format!(
            "experiment = {}\n\
             trials = {}\n\
             train_per_class = {sizes}\n\
             test_per_class = {}\n\
             foreign_test_per_class = {}\n\
             noise_variances = {}\n\
             blur_intensities = {}\n\
             kappas = {}\n\
             feature_dim = {}\n\
             chip_size = {}x{}\n\
             epsilon = {}\n\
             lambda_min = {}\n\
             max_breakpoints = {breakpoints}\n\
             kkt_tol = {}\n\
             master_seed = {}\n\
             output_dir = {}\n\
             corrupt_training = {}\n\
             parallel = {}\n\
             record_timing = {}\n",
            self.experiment,
            self.trials,
            self.test_per_class,
            self.foreign_test_per_class,
            list(&self.noise_variances),
            list(&self.blur_intensities),
            list(&self.kappas),
            self.feature_dim,
            self.chip_size.0,
            self.chip_size.1,
            self.solver.epsilon,
            self.solver.lambda_min,
            self.solver.kkt_tol,
            self.master_seed,
            self.output_dir.display(),
            self.corrupt_training,
            self.parallel,
            self.record_timing,
        )
    }
}

/// Error text without the variant prefix, for re-wrapping as a config error.
fn plain(e: Error) -> String {
    match e {
        Error::InvalidArgument(m) | Error::Config(m) => m,
        other => other.to_string(),
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad number {s:?}")))
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(parse_num)
        .collect()
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::invalid(format!("bad boolean {s:?}"))),
    }
}
