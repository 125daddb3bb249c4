use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dictionary::ClassLabel;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentKind;

/// Version written into the header comment of every CSV.
pub const SCHEMA_VERSION: u32 = 1;

/// Outcome of classifying one test sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub experiment: ExperimentKind,
    pub trial: usize,
    /// Training size, noise variance, or blur intensity depending on the
    /// experiment.
    pub sweep_value: f64,
    /// Threshold this record was scored against (SCI experiment only).
    pub kappa: Option<f64>,
    /// Position of the sample in the trial's test list.
    pub sample: usize,
    pub true_class: ClassLabel,
    pub predicted: ClassLabel,
    /// Nearest-neighbor prediction (blur experiment only).
    pub baseline: Option<ClassLabel>,
    /// One residual per dictionary class, in class order.
    pub residuals: Vec<f64>,
    pub sci: f64,
    pub rejected: Option<bool>,
    pub runtime_ms: Option<f64>,
}

const FIXED_COLUMNS: [&str; 11] = [
    "experiment",
    "trial",
    "sweep_value",
    "kappa",
    "sample",
    "true_class",
    "predicted",
    "baseline",
    "sci",
    "rejected",
    "runtime_ms",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Opens `path` and writes the versioned header comment line.
pub(crate) fn csv_writer(
    path: &Path,
    what: &str,
    note: &str,
) -> Result<csv::Writer<BufWriter<File>>> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "# sparse-atr {what} v{SCHEMA_VERSION}")?;
    if !note.is_empty() {
        write!(out, "; {note}")?;
    }
    writeln!(out)?;
    Ok(csv::Writer::from_writer(out))
}

/// Writes one row per record. Floats use the shortest representation that
/// parses back to the same value.
pub fn write_records(
    path: impl AsRef<Path>,
    classes: &[ClassLabel],
    records: &[TrialRecord],
) -> Result<()> {
    let mut w = csv_writer(path.as_ref(), "records", "")?;
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(classes.iter().map(|c| format!("residual_{c}")));
    w.write_record(&header)?;
    for r in records {
        if r.residuals.len() != classes.len() {
            return Err(Error::invalid(format!(
                "record has {} residuals, expected {}",
                r.residuals.len(),
                classes.len()
            )));
        }
        let mut row = vec![
            r.experiment.name().to_string(),
            r.trial.to_string(),
            r.sweep_value.to_string(),
            opt(r.kappa),
            r.sample.to_string(),
            r.true_class.to_string(),
            r.predicted.to_string(),
            opt(r.baseline),
            r.sci.to_string(),
            opt(r.rejected),
            opt(r.runtime_ms),
        ];
        row.extend(r.residuals.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a records file back, returning the residual classes and records.
/// Fails if any stored prediction is not the argmin of its residuals.
pub fn read_records(path: impl AsRef<Path>) -> Result<(Vec<ClassLabel>, Vec<TrialRecord>)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path.as_ref())?;
    let header = reader.headers()?.clone();
    if header.len() < FIXED_COLUMNS.len() || header.iter().zip(FIXED_COLUMNS).any(|(a, b)| a != b) {
        return Err(Error::Data(
            "records header does not match the schema".into(),
        ));
    }
    let classes = header
        .iter()
        .skip(FIXED_COLUMNS.len())
        .map(|h| {
            h.strip_prefix("residual_")
                .ok_or_else(|| Error::Data(format!("unexpected column {h:?}")))?
                .parse::<ClassLabel>()
                .map_err(|e| Error::Data(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 1;
        let field = |k: usize| row.get(k).unwrap_or("");
        let bad = |k: usize| {
            Error::Data(format!(
                "record {line}: bad {} {:?}",
                FIXED_COLUMNS[k],
                field(k)
            ))
        };
        let num = |k: usize| field(k).parse::<f64>().map_err(|_| bad(k));
        let opt_num = |k: usize| match field(k) {
            "" => Ok(None),
            s => s.parse::<f64>().map(Some).map_err(|_| bad(k)),
        };
        let label = |k: usize| field(k).parse::<ClassLabel>().map_err(|_| bad(k));

        let residuals = (0..classes.len())
            .map(|c| {
                field(FIXED_COLUMNS.len() + c)
                    .parse::<f64>()
                    .map_err(|_| Error::Data(format!("record {line}: bad residual")))
            })
            .collect::<Result<Vec<_>>>()?;
        let record = TrialRecord {
            experiment: field(0).parse().map_err(|_| bad(0))?,
            trial: field(1).parse().map_err(|_| bad(1))?,
            sweep_value: num(2)?,
            kappa: opt_num(3)?,
            sample: field(4).parse().map_err(|_| bad(4))?,
            true_class: label(5)?,
            predicted: label(6)?,
            baseline: match field(7) {
                "" => None,
                _ => Some(label(7)?),
            },
            sci: num(8)?,
            rejected: match field(9) {
                "" => None,
                "true" => Some(true),
                "false" => Some(false),
                _ => return Err(bad(9)),
            },
            runtime_ms: opt_num(10)?,
            residuals,
        };
        let best = argmin(&record.residuals);
        if classes.get(best) != Some(&record.predicted) {
            return Err(Error::Data(format!(
                "record {line}: predicted {} but smallest residual belongs to {}",
                record.predicted,
                classes
                    .get(best)
                    .map_or("nothing".into(), |c| c.to_string())
            )));
        }
        records.push(record);
    }
    Ok((classes, records))
}

pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Mean and standard error of per-trial values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    /// Sample standard deviation over `√n`; zero for a single value.
    pub std_error: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error, n }
    }
}

/// Mean and sample standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let m = MeanSe::of(values);
    (m.mean, m.std_error * (m.n as f64).sqrt())
}

/// Counts indexed `[predicted][true]`: columns are the true class, rows the
/// assigned class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<ClassLabel>,
    counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(classes: &[ClassLabel]) -> Self {
        let k = classes.len();
        Self {
            classes: classes.to_vec(),
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn classes(&self) -> &[ClassLabel] {
        &self.classes
    }

    pub fn record(&mut self, truth: ClassLabel, predicted: ClassLabel) -> Result<()> {
        let idx = |c: ClassLabel| {
            self.classes
                .iter()
                .position(|&x| x == c)
                .ok_or_else(|| Error::invalid(format!("class {c} not in confusion matrix")))
        };
        let (t, p) = (idx(truth)?, idx(predicted)?);
        self.counts[p][t] += 1;
        Ok(())
    }

    pub fn count(&self, predicted: usize, truth: usize) -> usize {
        self.counts[predicted][truth]
    }

    pub fn column_total(&self, truth: usize) -> usize {
        self.counts.iter().map(|row| row[truth]).sum()
    }

    /// Percentages per true-class column; an empty column stays all zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        let k = self.classes.len();
        let totals: Vec<usize> = (0..k).map(|t| self.column_total(t)).collect();
        (0..k)
            .map(|p| {
                (0..k)
                    .map(|t| match totals[t] {
                        0 => 0.0,
                        n => 100.0 * self.counts[p][t] as f64 / n as f64,
                    })
                    .collect()
            })
            .collect()
    }

    /// Percent table with one `count` row of raw column totals at the end.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv_writer(
            path.as_ref(),
            "confusion",
            "columns = true class, rows = predicted class, percent of column",
        )?;
        let mut header = vec!["predicted".to_string()];
        header.extend(self.classes.iter().map(|c| c.to_string()));
        w.write_record(&header)?;
        for (p, row) in self.normalized().iter().enumerate() {
            let mut out = vec![self.classes[p].to_string()];
            out.extend(row.iter().map(f64::to_string));
            w.write_record(&out)?;
        }
        let mut totals = vec!["count".to_string()];
        totals.extend((0..self.classes.len()).map(|t| self.column_total(t).to_string()));
        w.write_record(&totals)?;
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record(trial: usize, predicted: u8, residuals: Vec<f64>) -> TrialRecord {
        TrialRecord {
            experiment: ExperimentKind::SciThreshold,
            trial,
            sweep_value: 0.1 + 0.2,
            kappa: Some(0.15),
            sample: 3,
            true_class: ClassLabel(4),
            predicted: ClassLabel(predicted),
            baseline: None,
            residuals,
            sci: 1.0 / 3.0,
            rejected: Some(false),
            runtime_ms: None,
        }
    }

    #[test]
    fn records_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let classes: Vec<ClassLabel> = (0..4).map(ClassLabel).collect();
        let mut recs = vec![
            sample_record(0, 1, vec![0.9, 0.123456789012345, 0.7, 1.0]),
            sample_record(1, 0, vec![1e-300, 0.5, 0.5, 0.5]),
        ];
        recs[1].experiment = ExperimentKind::Blur;
        recs[1].kappa = None;
        recs[1].rejected = None;
        recs[1].baseline = Some(ClassLabel(2));
        recs[1].runtime_ms = Some(1.25);
        write_records(&path, &classes, &recs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# sparse-atr records v1\n"));
        assert!(text.contains("residual_block,residual_cone,residual_cylinder,residual_sphere"));
        let (back_classes, back) = read_records(&path).unwrap();
        assert_eq!(back_classes, classes);
        assert_eq!(back, recs);
    }

    #[test]
    fn read_rejects_inconsistent_argmin() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let classes: Vec<ClassLabel> = (0..4).map(ClassLabel).collect();
        write_records(
            &path,
            &classes,
            &[sample_record(0, 2, vec![0.9, 0.1, 0.7, 1.0])],
        )
        .unwrap();
        assert!(matches!(read_records(&path), Err(Error::Data(_))));
    }

    #[test]
    fn mean_and_standard_error() {
        let m = MeanSe::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        // sample std = sqrt(5/3)
        assert!((m.std_error - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(MeanSe::of(&[0.7]).std_error, 0.0);
    }

    #[test]
    fn confusion_columns_sum_to_100() {
        let classes: Vec<ClassLabel> = (0..3).map(ClassLabel).collect();
        let mut cm = ConfusionMatrix::new(&classes);
        for (t, p) in [(0, 0), (0, 0), (0, 1), (1, 1), (2, 0), (2, 2), (2, 2)] {
            cm.record(ClassLabel(t), ClassLabel(p)).unwrap();
        }
        assert_eq!(cm.column_total(0), 3);
        assert_eq!(cm.column_total(2), 3);
        let norm = cm.normalized();
        for t in 0..3 {
            let s: f64 = norm.iter().map(|row| row[t]).sum();
            assert!((s - 100.0).abs() < 1e-9);
        }
        assert!(cm.record(ClassLabel(7), ClassLabel(0)).is_err());
    }
}
