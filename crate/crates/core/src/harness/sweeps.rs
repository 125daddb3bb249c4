use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classifier::{classify, nearest_neighbor_baseline};
use crate::dictionary::{
    sample_split, sample_without_replacement, ClassLabel, DataSplit, Dictionary,
};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, ExperimentKind};
use crate::harness::records::{
    csv_writer, mean_std, write_records, ConfusionMatrix, MeanSe, TrialRecord,
};
use crate::imaging::{generate_chip, vectorize, CorruptionSpec, FeatureDim, ImageChip, ShapeClass};

/// A pool chip and its clean feature vector.
#[derive(Debug, Clone)]
pub struct Sample {
    pub chip: ImageChip,
    pub features: Vec<f64>,
}

pub type Pool = BTreeMap<ClassLabel, Vec<Sample>>;

/// Renders `class.reference_pool_size()` chips per class, chip `i` using
/// pose seed `i`.
pub fn generate_pool(
    classes: &[ShapeClass],
    chip_size: (usize, usize),
    feature_dim: FeatureDim,
    parallel: bool,
) -> Result<Pool> {
    let jobs: Vec<(ShapeClass, u64)> = classes
        .iter()
        .flat_map(|&c| (0..c.reference_pool_size() as u64).map(move |i| (c, i)))
        .collect();
    let samples = run_jobs(parallel, &jobs, |&(class, i)| {
        let chip = generate_chip(class, i, chip_size)?;
        let features = vectorize(&chip, feature_dim)?;
        Ok((class, Sample { chip, features }))
    })?;
    let mut pool = Pool::new();
    for (class, sample) in samples {
        pool.entry(ClassLabel::from(class))
            .or_default()
            .push(sample);
    }
    Ok(pool)
}

/// Order-preserving map, on the rayon pool when `parallel`.
fn run_jobs<J, R, F>(parallel: bool, jobs: &[J], f: F) -> Result<Vec<R>>
where
    J: Sync,
    R: Send,
    F: Fn(&J) -> Result<R> + Sync + Send,
{
    if parallel {
        jobs.par_iter().map(f).collect()
    } else {
        jobs.iter().map(f).collect()
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a parent seed and an index.
fn child_seed(parent: u64, index: u64) -> u64 {
    splitmix(parent ^ splitmix(index))
}

/// Noise variance and blur intensity applied at one sweep point.
#[derive(Debug, Clone, Copy)]
struct Corruption {
    noise: f64,
    blur: f64,
}

impl Corruption {
    const NONE: Corruption = Corruption {
        noise: 0.0,
        blur: 0.0,
    };

    fn features(&self, sample: &Sample, fd: FeatureDim, seed: u64) -> Result<Vec<f64>> {
        if self.noise == 0.0 && self.blur == 0.0 {
            return Ok(sample.features.clone());
        }
        let chip = CorruptionSpec::new(self.noise, self.blur, seed)?.apply(&sample.chip)?;
        vectorize(&chip, fd)
    }
}

fn build_dict(
    cfg: &ExperimentConfig,
    split: &DataSplit,
    pool: &Pool,
    corruption: Corruption,
    seed: u64,
) -> Result<Dictionary> {
    let corruption = if cfg.corrupt_training {
        corruption
    } else {
        Corruption::NONE
    };
    let columns = split
        .train_items(pool)
        .into_iter()
        .enumerate()
        .map(|(i, (s, label))| {
            Ok((
                corruption.features(s, cfg.feature_dim, child_seed(seed, i as u64))?,
                label,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Dictionary::from_columns(columns)
}

struct Scored {
    predicted: ClassLabel,
    residuals: Vec<f64>,
    sci: f64,
    baseline: Option<ClassLabel>,
    runtime_ms: Option<f64>,
}

fn score(
    cfg: &ExperimentConfig,
    dict: &Dictionary,
    features: Vec<f64>,
    with_baseline: bool,
) -> Result<Scored> {
    let y = DVector::from_vec(features);
    let start = Instant::now();
    let result = classify(dict, &y, &cfg.solver)?;
    let runtime_ms = cfg
        .record_timing
        .then(|| start.elapsed().as_secs_f64() * 1e3);
    let baseline = if with_baseline {
        Some(nearest_neighbor_baseline(dict, &y)?)
    } else {
        None
    };
    Ok(Scored {
        predicted: result.predicted,
        residuals: result.residuals,
        sci: result.sci,
        baseline,
        runtime_ms,
    })
}

fn record(
    kind: ExperimentKind,
    trial: usize,
    sweep_value: f64,
    sample: usize,
    truth: ClassLabel,
    s: &Scored,
) -> TrialRecord {
    TrialRecord {
        experiment: kind,
        trial,
        sweep_value,
        kappa: None,
        sample,
        true_class: truth,
        predicted: s.predicted,
        baseline: s.baseline,
        residuals: s.residuals.clone(),
        sci: s.sci,
        rejected: None,
        runtime_ms: s.runtime_ms,
    }
}

/// Accuracy row of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub sweep_value: f64,
    pub accuracy: MeanSe,
    /// Nearest-neighbor accuracy (blur experiment).
    pub baseline: Option<MeanSe>,
    /// `10·log10(P/σ²)` with `P` the mean clean test-chip power (noise
    /// experiment).
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccuracyRow {
    pub sweep_value: f64,
    pub class: ClassLabel,
    pub accuracy: MeanSe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SciGroup {
    Class(ClassLabel),
    /// All dictionary-class tests pooled.
    Main,
    /// All foreign-class tests pooled.
    Foreign,
}

impl std::fmt::Display for SciGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SciGroup::Class(c) => write!(f, "{c}"),
            SciGroup::Main => f.write_str("main"),
            SciGroup::Foreign => f.write_str("foreign"),
        }
    }
}

/// SCI statistics over all trials' tests of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct SciRow {
    pub train_per_class: usize,
    pub group: SciGroup,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

/// Rejection outcome at one threshold. Accuracies cover main-class tests:
/// `reject_as_error` counts a rejection as a miss, `reject_excluded` scores
/// accepted tests only.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaRow {
    pub train_per_class: usize,
    pub kappa: f64,
    pub main_accepted: usize,
    pub main_rejected: usize,
    pub foreign_accepted: usize,
    pub foreign_rejected: usize,
    pub reject_as_error: MeanSe,
    pub reject_excluded: MeanSe,
}

/// In-memory results of one sweep, alongside the files written for it.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    /// Dictionary classes, the order of every residual vector.
    pub classes: Vec<ClassLabel>,
    /// Ordered by sweep value, trial, sample, then κ.
    pub records: Vec<TrialRecord>,
    pub accuracy: Vec<AccuracyRow>,
    pub per_class: Vec<ClassAccuracyRow>,
    pub confusion: Vec<(f64, ConfusionMatrix)>,
    pub sci_table: Vec<SciRow>,
    pub kappa_table: Vec<KappaRow>,
    pub files: Vec<PathBuf>,
}

impl ExperimentOutcome {
    fn new(config: &ExperimentConfig, classes: Vec<ClassLabel>) -> Self {
        Self {
            config: config.clone(),
            classes,
            records: Vec::new(),
            accuracy: Vec::new(),
            per_class: Vec::new(),
            confusion: Vec::new(),
            sci_table: Vec::new(),
            kappa_table: Vec::new(),
            files: Vec::new(),
        }
    }
}

/// Records of one trial at one sweep point.
struct Cell {
    records: Vec<TrialRecord>,
    /// Mean clean power of the trial's test chips.
    test_power: f64,
}

fn fraction(hits: usize, total: usize) -> f64 {
    if total == 0 {
        f64::NAN
    } else {
        hits as f64 / total as f64
    }
}

fn accuracy_of<'a>(records: impl IntoIterator<Item = &'a TrialRecord>) -> f64 {
    let (mut hits, mut total) = (0, 0);
    for r in records {
        total += 1;
        hits += usize::from(r.predicted == r.true_class);
    }
    fraction(hits, total)
}

fn main_classes() -> Vec<ClassLabel> {
    ShapeClass::MAIN.iter().map(|&c| c.into()).collect()
}

fn main_pool(cfg: &ExperimentConfig) -> Result<Pool> {
    generate_pool(
        &ShapeClass::MAIN,
        cfg.chip_size,
        cfg.feature_dim,
        cfg.parallel,
    )
}

/// Checks the pool can supply every requested split before any work starts.
fn check_pool(pool: &Pool, needed: usize) -> Result<()> {
    for (label, items) in pool {
        if items.len() < needed {
            return Err(Error::invalid(format!(
                "class {label} has {} synthetic samples, split needs {needed}",
                items.len()
            )));
        }
    }
    Ok(())
}

/// Accuracy versus training samples per class on clean tests.
pub fn run_training_size_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let kind = ExperimentKind::TrainingSize;
    let pool = main_pool(cfg)?;
    let classes = main_classes();
    let max_size = *cfg
        .train_per_class
        .iter()
        .max()
        .expect("validated non-empty");
    check_pool(&pool, max_size + cfg.test_per_class)?;

    let jobs: Vec<(usize, usize)> = (0..cfg.train_per_class.len())
        .flat_map(|si| (0..cfg.trials).map(move |t| (si, t)))
        .collect();
    let cells = run_jobs(cfg.parallel, &jobs, |&(si, t)| {
        let size = cfg.train_per_class[si];
        let seed = cfg.trial_seed(t);
        let split = sample_split(&pool, size, cfg.test_per_class, seed)?;
        let dict = build_dict(cfg, &split, &pool, Corruption::NONE, seed)?;
        let records = split
            .test_items(&pool)
            .into_iter()
            .enumerate()
            .map(|(i, (s, truth))| {
                let scored = score(cfg, &dict, s.features.clone(), false)?;
                Ok(record(kind, t, size as f64, i, truth, &scored))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Cell {
            records,
            test_power: 0.0,
        })
    })?;

    let mut out = ExperimentOutcome::new(cfg, classes.clone());
    for (si, chunk) in cells.chunks(cfg.trials).enumerate() {
        let size = cfg.train_per_class[si] as f64;
        let per_trial: Vec<f64> = chunk.iter().map(|c| accuracy_of(&c.records)).collect();
        out.accuracy.push(AccuracyRow {
            sweep_value: size,
            accuracy: MeanSe::of(&per_trial),
            baseline: None,
            snr_db: None,
        });
        for &class in &classes {
            let per_trial: Vec<f64> = chunk
                .iter()
                .map(|c| accuracy_of(c.records.iter().filter(|r| r.true_class == class)))
                .collect();
            out.per_class.push(ClassAccuracyRow {
                sweep_value: size,
                class,
                accuracy: MeanSe::of(&per_trial),
            });
        }
    }
    out.records = cells.into_iter().flat_map(|c| c.records).collect();
    write_outputs(&mut out)?;
    Ok(out)
}

/// Accuracy versus Gaussian noise variance on test chips.
pub fn run_noise_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let values = cfg.noise_variances.clone();
    run_corruption_sweep(cfg, ExperimentKind::Noise, &values, |v| Corruption {
        noise: v,
        blur: 0.0,
    })
}

/// Accuracy versus Gaussian blur intensity on test chips, with the
/// nearest-neighbor baseline alongside.
pub fn run_blur_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let values = cfg.blur_intensities.clone();
    run_corruption_sweep(cfg, ExperimentKind::Blur, &values, |v| Corruption {
        noise: 0.0,
        blur: v,
    })
}

fn run_corruption_sweep(
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    values: &[f64],
    corruption: impl Fn(f64) -> Corruption + Sync + Send,
) -> Result<ExperimentOutcome> {
    if values.is_empty() {
        return Err(Error::Config(format!(
            "{kind} sweep needs at least one value"
        )));
    }
    let pool = main_pool(cfg)?;
    let classes = main_classes();
    let size = cfg.train_per_class[0];
    check_pool(&pool, size + cfg.test_per_class)?;
    let with_baseline = kind == ExperimentKind::Blur;

    // one split per trial, shared by every sweep point so curves are paired
    let trials: Vec<usize> = (0..cfg.trials).collect();
    let per_trial = run_jobs(cfg.parallel, &trials, |&t| {
        let seed = cfg.trial_seed(t);
        let split = sample_split(&pool, size, cfg.test_per_class, seed)?;
        let tests = split.test_items(&pool);
        let test_power =
            tests.iter().map(|(s, _)| s.chip.mean_power()).sum::<f64>() / tests.len() as f64;
        let clean_dict = build_dict(cfg, &split, &pool, Corruption::NONE, seed)?;
        values
            .iter()
            .enumerate()
            .map(|(vi, &v)| {
                let c = corruption(v);
                let point_seed = child_seed(seed, vi as u64);
                let dict = if cfg.corrupt_training {
                    build_dict(cfg, &split, &pool, c, child_seed(point_seed, u64::MAX))?
                } else {
                    clean_dict.clone()
                };
                let records = tests
                    .iter()
                    .enumerate()
                    .map(|(i, (s, truth))| {
                        let features =
                            c.features(s, cfg.feature_dim, child_seed(point_seed, i as u64))?;
                        let scored = score(cfg, &dict, features, with_baseline)?;
                        Ok(record(kind, t, v, i, *truth, &scored))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Cell {
                    records,
                    test_power,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut out = ExperimentOutcome::new(cfg, classes.clone());
    for (vi, &v) in values.iter().enumerate() {
        let cells: Vec<&Cell> = per_trial.iter().map(|cells| &cells[vi]).collect();
        let acc: Vec<f64> = cells.iter().map(|c| accuracy_of(&c.records)).collect();
        let baseline = with_baseline.then(|| {
            let nn: Vec<f64> = cells
                .iter()
                .map(|c| {
                    let hits = c
                        .records
                        .iter()
                        .filter(|r| r.baseline == Some(r.true_class))
                        .count();
                    fraction(hits, c.records.len())
                })
                .collect();
            MeanSe::of(&nn)
        });
        let snr_db = (kind == ExperimentKind::Noise).then(|| {
            let power = cells.iter().map(|c| c.test_power).sum::<f64>() / cells.len() as f64;
            10.0 * (power / v).log10()
        });
        out.accuracy.push(AccuracyRow {
            sweep_value: v,
            accuracy: MeanSe::of(&acc),
            baseline,
            snr_db,
        });
    }

    for v in confusion_points(kind, values) {
        let vi = values
            .iter()
            .position(|&x| x == v)
            .expect("point from grid");
        let mut cm = ConfusionMatrix::new(&classes);
        for cells in &per_trial {
            for r in &cells[vi].records {
                cm.record(r.true_class, r.predicted)?;
            }
        }
        out.confusion.push((v, cm));
    }

    for vi in 0..values.len() {
        for cells in &per_trial {
            out.records.extend(cells[vi].records.iter().cloned());
        }
    }
    write_outputs(&mut out)?;
    Ok(out)
}

/// Sweep points that get a confusion matrix: the lowest nonzero and the
/// highest noise variance; the middle and highest nonzero blur intensity.
fn confusion_points(kind: ExperimentKind, values: &[f64]) -> Vec<f64> {
    let mut nonzero: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
    nonzero.sort_by(f64::total_cmp);
    nonzero.dedup();
    let Some(&high) = nonzero.last() else {
        return Vec::new();
    };
    let first = match kind {
        ExperimentKind::Blur => nonzero[(nonzero.len() - 1) / 2],
        _ => nonzero[0],
    };
    if first == high {
        vec![high]
    } else {
        vec![first, high]
    }
}

/// SCI statistics and κ-rejection counts for dictionaries of the main
/// classes, tested on held-out main-class chips and on foreign chips.
pub fn run_sci_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let kind = ExperimentKind::SciThreshold;
    let pool = main_pool(cfg)?;
    let foreign = generate_pool(
        &ShapeClass::FOREIGN,
        cfg.chip_size,
        cfg.feature_dim,
        cfg.parallel,
    )?;
    let classes = main_classes();
    let max_size = *cfg
        .train_per_class
        .iter()
        .max()
        .expect("validated non-empty");
    check_pool(&pool, max_size + cfg.test_per_class)?;
    check_pool(&foreign, cfg.foreign_test_per_class)?;

    let jobs: Vec<(usize, usize)> = (0..cfg.train_per_class.len())
        .flat_map(|si| (0..cfg.trials).map(move |t| (si, t)))
        .collect();
    // per job: one (truth, scored) per test sample
    let scored = run_jobs(cfg.parallel, &jobs, |&(si, t)| {
        let size = cfg.train_per_class[si];
        let seed = cfg.trial_seed(t);
        let split = sample_split(&pool, size, cfg.test_per_class, seed)?;
        let dict = build_dict(cfg, &split, &pool, Corruption::NONE, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, 0xF0_2E_16_4E));
        let mut tests: Vec<(&Sample, ClassLabel)> = split.test_items(&pool);
        for (label, items) in &foreign {
            for i in sample_without_replacement(items.len(), cfg.foreign_test_per_class, &mut rng)?
            {
                tests.push((&items[i], *label));
            }
        }
        tests
            .into_iter()
            .map(|(s, truth)| Ok((truth, score(cfg, &dict, s.features.clone(), false)?)))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut out = ExperimentOutcome::new(cfg, classes.clone());
    let is_main = |c: ClassLabel| classes.contains(&c);
    for (job, results) in jobs.iter().zip(&scored) {
        let (si, t) = *job;
        let size = cfg.train_per_class[si] as f64;
        for (i, (truth, s)) in results.iter().enumerate() {
            for &kappa in &cfg.kappas {
                let mut r = record(kind, t, size, i, *truth, s);
                r.kappa = Some(kappa);
                r.rejected = Some(s.sci < kappa);
                out.records.push(r);
            }
        }
    }

    for (si, chunk) in scored.chunks(cfg.trials).enumerate() {
        let size = cfg.train_per_class[si];
        let per_trial: Vec<f64> = chunk
            .iter()
            .map(|tests| {
                let hits = tests
                    .iter()
                    .filter(|(truth, s)| is_main(*truth) && s.predicted == *truth)
                    .count();
                fraction(
                    hits,
                    tests.iter().filter(|(truth, _)| is_main(*truth)).count(),
                )
            })
            .collect();
        out.accuracy.push(AccuracyRow {
            sweep_value: size as f64,
            accuracy: MeanSe::of(&per_trial),
            baseline: None,
            snr_db: None,
        });

        let all: Vec<&(ClassLabel, Scored)> = chunk.iter().flatten().collect();
        let mut groups: Vec<SciGroup> = classes.iter().map(|&c| SciGroup::Class(c)).collect();
        groups.extend(foreign.keys().map(|&c| SciGroup::Class(c)));
        groups.extend([SciGroup::Main, SciGroup::Foreign]);
        for group in groups {
            let values: Vec<f64> = all
                .iter()
                .filter(|(truth, _)| match group {
                    SciGroup::Class(c) => *truth == c,
                    SciGroup::Main => is_main(*truth),
                    SciGroup::Foreign => !is_main(*truth),
                })
                .map(|(_, s)| s.sci)
                .collect();
            let (mean, std) = mean_std(&values);
            out.sci_table.push(SciRow {
                train_per_class: size,
                group,
                count: values.len(),
                mean,
                std,
            });
        }

        for &kappa in &cfg.kappas {
            let mut row = KappaRow {
                train_per_class: size,
                kappa,
                main_accepted: 0,
                main_rejected: 0,
                foreign_accepted: 0,
                foreign_rejected: 0,
                reject_as_error: MeanSe::of(&[]),
                reject_excluded: MeanSe::of(&[]),
            };
            let mut as_error = Vec::new();
            let mut excluded = Vec::new();
            for tests in chunk {
                let (mut main_total, mut accepted, mut accepted_hits) = (0, 0, 0);
                for (truth, s) in tests {
                    let accept = s.sci >= kappa;
                    if is_main(*truth) {
                        main_total += 1;
                        if accept {
                            row.main_accepted += 1;
                            accepted += 1;
                            accepted_hits += usize::from(s.predicted == *truth);
                        } else {
                            row.main_rejected += 1;
                        }
                    } else if accept {
                        row.foreign_accepted += 1;
                    } else {
                        row.foreign_rejected += 1;
                    }
                }
                as_error.push(fraction(accepted_hits, main_total));
                if accepted > 0 {
                    excluded.push(fraction(accepted_hits, accepted));
                }
            }
            row.reject_as_error = MeanSe::of(&as_error);
            row.reject_excluded = MeanSe::of(&excluded);
            out.kappa_table.push(row);
        }
    }
    write_outputs(&mut out)?;
    Ok(out)
}

/// Runs the experiment selected by `cfg.experiment`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::TrainingSize => run_training_size_sweep(cfg),
        ExperimentKind::Noise => run_noise_sweep(cfg),
        ExperimentKind::Blur => run_blur_sweep(cfg),
        ExperimentKind::SciThreshold => run_sci_sweep(cfg),
    }
}

const SE_NOTE: &str = "std_error = sample std of per-trial accuracy / sqrt(trials)";

fn write_outputs(out: &mut ExperimentOutcome) -> Result<()> {
    let cfg = &out.config;
    let kind = cfg.experiment;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    let stem = kind.file_stem();
    let path = |suffix: &str| dir.join(format!("{stem}_{suffix}"));
    let mut files = Vec::new();

    let config_path = path("config.txt");
    std::fs::write(&config_path, cfg.to_text())?;
    files.push(config_path);

    let records_path = path("records.csv");
    write_records(&records_path, &out.classes, &out.records)?;
    files.push(records_path);

    let accuracy_path = path("accuracy.csv");
    let mut w = csv_writer(&accuracy_path, &format!("{kind} accuracy"), SE_NOTE)?;
    let axis = match kind {
        ExperimentKind::TrainingSize | ExperimentKind::SciThreshold => "train_per_class",
        ExperimentKind::Noise => "noise_variance",
        ExperimentKind::Blur => "blur_intensity",
    };
    let mut header = vec![axis];
    if kind == ExperimentKind::Noise {
        header.push("snr_db");
    }
    header.extend(["trials", "mean_accuracy", "std_error"]);
    if kind == ExperimentKind::Blur {
        header.extend(["baseline_mean_accuracy", "baseline_std_error"]);
    }
    w.write_record(&header)?;
    for row in &out.accuracy {
        let mut rec = vec![row.sweep_value.to_string()];
        if let Some(snr) = row.snr_db {
            rec.push(snr.to_string());
        }
        rec.extend([
            row.accuracy.n.to_string(),
            row.accuracy.mean.to_string(),
            row.accuracy.std_error.to_string(),
        ]);
        if let Some(b) = row.baseline {
            rec.extend([b.mean.to_string(), b.std_error.to_string()]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    files.push(accuracy_path);

    if !out.per_class.is_empty() {
        let p = path("per_class.csv");
        let mut w = csv_writer(&p, "per-class accuracy", SE_NOTE)?;
        w.write_record(["train_per_class", "class", "mean_accuracy", "std_error"])?;
        for row in &out.per_class {
            w.write_record([
                row.sweep_value.to_string(),
                row.class.to_string(),
                row.accuracy.mean.to_string(),
                row.accuracy.std_error.to_string(),
            ])?;
        }
        w.flush()?;
        files.push(p);
    }

    for (v, cm) in &out.confusion {
        let p = path(&format!("confusion_{v}.csv"));
        cm.write_csv(&p)?;
        files.push(p);
    }

    if !out.sci_table.is_empty() {
        let p = path("table.csv");
        let mut w = csv_writer(
            &p,
            "sci table",
            "std_sci = sample std over all tests of all trials",
        )?;
        w.write_record(["train_per_class", "group", "count", "mean_sci", "std_sci"])?;
        for row in &out.sci_table {
            w.write_record([
                row.train_per_class.to_string(),
                row.group.to_string(),
                row.count.to_string(),
                row.mean.to_string(),
                row.std.to_string(),
            ])?;
        }
        w.flush()?;
        files.push(p);
    }

    if !out.kappa_table.is_empty() {
        let p = path("kappa.csv");
        let mut w = csv_writer(
            &p,
            "kappa rejection",
            "accuracies over main-class tests; reject_as_error counts rejections as misses, \
             reject_excluded scores accepted tests only",
        )?;
        w.write_record([
            "train_per_class",
            "kappa",
            "main_accepted",
            "main_rejected",
            "foreign_accepted",
            "foreign_rejected",
            "accuracy_reject_as_error",
            "std_error_reject_as_error",
            "accuracy_reject_excluded",
            "std_error_reject_excluded",
        ])?;
        for row in &out.kappa_table {
            w.write_record([
                row.train_per_class.to_string(),
                row.kappa.to_string(),
                row.main_accepted.to_string(),
                row.main_rejected.to_string(),
                row.foreign_accepted.to_string(),
                row.foreign_rejected.to_string(),
                row.reject_as_error.mean.to_string(),
                row.reject_as_error.std_error.to_string(),
                row.reject_excluded.mean.to_string(),
                row.reject_excluded.std_error.to_string(),
            ])?;
        }
        w.flush()?;
        files.push(p);
    }

    out.files = files;
    Ok(())
}
