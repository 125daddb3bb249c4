use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentKind;

fn required(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::SciThreshold => &["accuracy.csv", "kappa.csv"],
        _ => &["accuracy.csv"],
    }
}

const PREAMBLE: &str = "\
# sparse-atr plot script v1; run with gnuplot from this directory
set datafile separator ','
set datafile commentschars '#'
set key autotitle columnhead
set terminal pngcairo size 800,600
set grid
";

fn script(kind: ExperimentKind, dir: &Path) -> Result<String> {
    let stem = kind.file_stem();
    let mut s = String::from(PREAMBLE);
    s += &format!(
        "set output '{stem}_accuracy.png'\nset ylabel 'classification rate'\nset yrange [0:1.05]\n"
    );
    let data = format!("'{stem}_accuracy.csv'");
    match kind {
        ExperimentKind::TrainingSize => {
            s += "set xlabel 'training samples per class'\n";
            s += &format!("plot {data} using 1:3:4 with yerrorlines title 'SRC'\n");
        }
        ExperimentKind::Noise => {
            s += "set xlabel 'noise variance'\n";
            s += &format!("plot {data} using 1:4:5 with yerrorlines title 'SRC'\n");
        }
        ExperimentKind::Blur => {
            s += "set xlabel 'blur intensity'\n";
            s += &format!(
                "plot {data} using 1:3:4 with yerrorlines title 'SRC', \\\n     \
                 {data} using 1:5:6 with yerrorlines title 'nearest neighbor'\n"
            );
        }
        ExperimentKind::SciThreshold => {
            s += "set xlabel 'training samples per class'\n";
            s += &format!("plot {data} using 1:3:4 with yerrorlines title 'SRC, no rejection'\n\n");
            // one curve per dictionary size, versus κ
            let sizes = kappa_sizes(&dir.join(format!("{stem}_kappa.csv")))?;
            let kappa = format!("'{stem}_kappa.csv'");
            s += &format!("set output '{stem}_kappa.png'\nset xlabel 'kappa'\n");
            let curves: Vec<String> = sizes
                .iter()
                .flat_map(|n| {
                    [
                        format!(
                            "{kappa} using ($1=={n} ? $2 : 1/0):7:8 with yerrorlines \
                             title '{n}/class, reject = error'"
                        ),
                        format!(
                            "{kappa} using ($1=={n} ? $2 : 1/0):9:10 with yerrorlines \
                             title '{n}/class, reject excluded'"
                        ),
                    ]
                })
                .collect();
            s += &format!("plot {}\n", curves.join(", \\\n     "));
        }
    }
    Ok(s)
}

fn kappa_sizes(path: &Path) -> Result<BTreeSet<u64>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut sizes = BTreeSet::new();
    for row in reader.records() {
        let row = row?;
        let n = row
            .get(0)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Data(format!("bad train_per_class in {}", path.display())))?;
        sizes.insert(n);
    }
    Ok(sizes)
}

/// Writes a gnuplot script next to the summary CSVs of every experiment
/// found in `dir`. Scripts name their inputs by relative path.
///
/// An experiment counts as present when any of its output files exists;
/// a present experiment with a missing summary, or a directory with no
/// experiment at all, is an error listing the absent files.
pub fn emit_plot_scripts(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let present = |kind: ExperimentKind| {
        let prefix = format!("{}_", kind.file_stem());
        std::fs::read_dir(dir).ok().is_some_and(|entries| {
            entries
                .flatten()
                .any(|e| e.file_name().to_string_lossy().starts_with(&prefix))
        })
    };

    let mut missing = Vec::new();
    let mut found = Vec::new();
    for kind in ExperimentKind::ALL {
        let paths: Vec<PathBuf> = required(kind)
            .iter()
            .map(|f| dir.join(format!("{}_{f}", kind.file_stem())))
            .collect();
        if present(kind) {
            let absent: Vec<PathBuf> = paths.into_iter().filter(|p| !p.is_file()).collect();
            if absent.is_empty() {
                found.push(kind);
            } else {
                missing.extend(absent);
            }
        }
    }
    if found.is_empty() && missing.is_empty() {
        missing = ExperimentKind::ALL
            .iter()
            .map(|k| dir.join(format!("{}_accuracy.csv", k.file_stem())))
            .collect();
    }
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }

    found
        .into_iter()
        .map(|kind| {
            let path = dir.join(format!("{}.gp", kind.file_stem()));
            std::fs::write(&path, script(kind, dir)?)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dir_lists_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        match emit_plot_scripts(dir.path()) {
            Err(Error::MissingFiles(files)) => assert_eq!(files.len(), 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            emit_plot_scripts(dir.path().join("nope")),
            Err(Error::MissingFiles(_))
        ));
    }

    #[test]
    fn partial_experiment_is_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("sci_accuracy.csv"), "x\n").unwrap();
        match emit_plot_scripts(dir.path()) {
            Err(Error::MissingFiles(files)) => {
                assert_eq!(files, vec![dir.path().join("sci_kappa.csv")]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scripts_use_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("noise_accuracy.csv"),
            "# v\nnoise_variance\n",
        )
        .unwrap();
        let scripts = emit_plot_scripts(dir.path()).unwrap();
        assert_eq!(scripts, vec![dir.path().join("noise.gp")]);
        let text = std::fs::read_to_string(&scripts[0]).unwrap();
        assert!(text.contains("'noise_accuracy.csv'"));
        assert!(!text.contains(&dir.path().display().to_string()));
        assert!(!text.contains("'/"));
    }
}
