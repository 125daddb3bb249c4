//! Class-partitioned dictionaries of vectorized training chips.
//!
//! A [`Dictionary`] holds `A = [A_1 A_2 ... A_k]`: unit-norm columns grouped
//! contiguously by class label, in ascending label order. It is immutable once
//! built and caches its Gram matrix `AᵀA` so many solves can share it.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{vectorize, FeatureDim, ImageChip, ShapeClass};

/// Maximum deviation of a stored column norm from 1.
pub const COLUMN_NORM_TOL: f64 = 1e-10;

const MAGIC: &[u8; 4] = b"SRCD";
const FORMAT_VERSION: u32 = 1;

/// Class identifier attached to every dictionary column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassLabel(pub u8);

impl ClassLabel {
    pub fn shape(self) -> Option<ShapeClass> {
        ShapeClass::from_index(self.0)
    }
}

impl From<ShapeClass> for ClassLabel {
    fn from(c: ShapeClass) -> Self {
        ClassLabel(c.index())
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shape() {
            Some(c) => write!(f, "{c}"),
            None => write!(f, "class{}", self.0),
        }
    }
}

/// Accepts a shape name, `classN`, or a bare index.
impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(shape) = s.parse::<ShapeClass>() {
            return Ok(shape.into());
        }
        s.strip_prefix("class")
            .unwrap_or(s)
            .parse::<u8>()
            .map(ClassLabel)
            .map_err(|_| Error::invalid(format!("unknown class label {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
    labels: Vec<ClassLabel>,
    classes: Vec<ClassLabel>,
    ranges: Vec<Range<usize>>,
    gram: DMatrix<f64>,
}

impl Dictionary {
    /// Builds a dictionary from raw feature columns.
    ///
    /// Columns are scaled to unit norm and stably grouped by label.
    pub fn from_columns(columns: Vec<(Vec<f64>, ClassLabel)>) -> Result<Self> {
        let d = match columns.first() {
            Some((c, _)) => c.len(),
            None => return Err(Error::invalid("dictionary needs at least one column")),
        };
        if d == 0 {
            return Err(Error::invalid("dictionary columns must be non-empty"));
        }
        let mut columns = columns;
        for (i, (col, _)) in columns.iter_mut().enumerate() {
            if col.len() != d {
                return Err(Error::invalid(format!(
                    "column {i} has length {}, expected {d}",
                    col.len()
                )));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("column {i} has non-finite entries")));
            }
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::invalid(format!("column {i} is all zeros")));
            }
            col.iter_mut().for_each(|v| *v /= norm);
        }
        // stable: input order is kept within a class
        columns.sort_by_key(|(_, label)| *label);

        let labels: Vec<ClassLabel> = columns.iter().map(|(_, l)| *l).collect();
        let atoms = DMatrix::from_fn(d, columns.len(), |r, c| columns[c].0[r]);
        Self::from_parts(atoms, labels)
    }

    /// Assembles a dictionary from already-normalized, class-sorted parts.
    fn from_parts(atoms: DMatrix<f64>, labels: Vec<ClassLabel>) -> Result<Self> {
        let mut classes = Vec::new();
        let mut ranges: Vec<Range<usize>> = Vec::new();
        for (j, &label) in labels.iter().enumerate() {
            match classes.last() {
                Some(&last) if last == label => ranges.last_mut().unwrap().end = j + 1,
                Some(&last) if last > label => {
                    return Err(Error::invalid(
                        "dictionary columns are not grouped by class",
                    ))
                }
                _ => {
                    classes.push(label);
                    ranges.push(j..j + 1);
                }
            }
        }
        if classes.len() < 2 {
            return Err(Error::invalid(format!(
                "dictionary needs at least 2 classes, got {}",
                classes.len()
            )));
        }
        let gram = atoms.transpose() * &atoms;
        Ok(Self {
            atoms,
            labels,
            classes,
            ranges,
            gram,
        })
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    /// Number of atoms `N`.
    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of classes `k`.
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[ClassLabel] {
        &self.classes
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Position of `label` in [`classes`](Self::classes).
    pub fn class_index(&self, label: ClassLabel) -> Option<usize> {
        self.classes.binary_search(&label).ok()
    }

    pub fn class_range(&self, label: ClassLabel) -> Option<Range<usize>> {
        self.class_index(label).map(|i| self.ranges[i].clone())
    }

    /// Column ranges, one per class, in class order.
    pub fn class_ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    /// Serializes to the `SRCD` container.
    ///
    /// Layout (little endian): magic `SRCD`, version u32, d u32, N u32, k u32,
    /// k per-class column counts u32, then the d×N atoms column-major as f64,
    /// then one label byte per column.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (d, n, k) = (self.dim(), self.len(), self.class_count());
        let mut out = Vec::with_capacity(20 + 4 * k + 8 * d * n + n);
        out.extend_from_slice(MAGIC);
        for v in [FORMAT_VERSION, d as u32, n as u32, k as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for r in &self.ranges {
            out.extend_from_slice(&(r.len() as u32).to_le_bytes());
        }
        for v in self.atoms.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend(self.labels.iter().map(|l| l.0));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize, what: &str| -> Result<(usize, &[u8])> {
            let start = pos;
            let end = start
                .checked_add(n)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| Error::parse(start, format!("truncated {what}")))?;
            pos = end;
            Ok((start, &bytes[start..end]))
        };
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap()) as usize;

        let (_, magic) = take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::parse(0, "missing SRCD magic"));
        }
        let (at, version) = take(4, "version")?;
        if u32_at(version) as u32 != FORMAT_VERSION {
            return Err(Error::parse(
                at,
                format!("unsupported version {}", u32_at(version)),
            ));
        }
        let d = u32_at(take(4, "dimension")?.1);
        let n = u32_at(take(4, "column count")?.1);
        let (k_at, k) = take(4, "class count").map(|(a, s)| (a, u32_at(s)))?;
        if d == 0 || n == 0 || k < 2 {
            return Err(Error::parse(k_at, format!("bad header d={d} N={n} k={k}")));
        }
        let mut counts = Vec::with_capacity(k);
        for _ in 0..k {
            counts.push(u32_at(take(4, "class counts")?.1));
        }
        let (atoms_at, raw) = take(
            d.checked_mul(n)
                .and_then(|m| m.checked_mul(8))
                .ok_or_else(|| Error::parse(k_at, "dimensions overflow"))?,
            "atoms",
        )?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (labels_at, raw_labels) = take(n, "labels")?;
        if pos != bytes.len() {
            return Err(Error::parse(pos, "trailing bytes after labels"));
        }

        let labels: Vec<ClassLabel> = raw_labels.iter().map(|&b| ClassLabel(b)).collect();
        let atoms = DMatrix::from_column_slice(d, n, &values);
        for (j, col) in atoms.column_iter().enumerate() {
            if (col.norm() - 1.0).abs() > COLUMN_NORM_TOL {
                return Err(Error::parse(
                    atoms_at + 8 * d * j,
                    format!("column {j} is not unit norm"),
                ));
            }
        }
        let dict =
            Self::from_parts(atoms, labels).map_err(|e| Error::parse(labels_at, e.to_string()))?;
        let stored: Vec<usize> = dict.ranges.iter().map(|r| r.len()).collect();
        if stored != counts {
            return Err(Error::parse(
                labels_at,
                format!("class counts {counts:?} disagree with labels {stored:?}"),
            ));
        }
        Ok(dict)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Vectorizes each training chip and stacks the results by class.
pub fn build_dictionary(
    training: &[(ImageChip, ShapeClass)],
    feature_dim: FeatureDim,
) -> Result<Dictionary> {
    let Some((first, _)) = training.first() else {
        return Err(Error::invalid("no training chips"));
    };
    let size = (first.width(), first.height());
    let columns = training
        .iter()
        .enumerate()
        .map(|(i, (chip, class))| {
            if (chip.width(), chip.height()) != size {
                return Err(Error::invalid(format!(
                    "training chip {i} is {}x{}, expected {}x{}",
                    chip.width(),
                    chip.height(),
                    size.0,
                    size.1
                )));
            }
            Ok((vectorize(chip, feature_dim)?, ClassLabel::from(*class)))
        })
        .collect::<Result<Vec<_>>>()?;
    Dictionary::from_columns(columns)
}

/// Keeps the coefficients of class `class` and zeros the rest.
pub fn delta(dict: &Dictionary, x: &DVector<f64>, class: ClassLabel) -> Result<DVector<f64>> {
    if x.len() != dict.len() {
        return Err(Error::invalid(format!(
            "coefficient vector has length {}, dictionary has {} atoms",
            x.len(),
            dict.len()
        )));
    }
    let range = dict
        .class_range(class)
        .ok_or_else(|| Error::invalid(format!("class {class} not in dictionary")))?;
    let mut out = DVector::zeros(x.len());
    out.rows_mut(range.start, range.len())
        .copy_from(&x.rows(range.start, range.len()));
    Ok(out)
}

/// Per-class train/test indices into a sample pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    pub train: BTreeMap<ClassLabel, Vec<usize>>,
    pub test: BTreeMap<ClassLabel, Vec<usize>>,
    pub seed: u64,
}

impl DataSplit {
    /// Resolves indices against the pool, yielding `(item, label)` pairs in
    /// class order.
    pub fn train_items<'a, T>(
        &self,
        pool: &'a BTreeMap<ClassLabel, Vec<T>>,
    ) -> Vec<(&'a T, ClassLabel)> {
        resolve(&self.train, pool)
    }

    pub fn test_items<'a, T>(
        &self,
        pool: &'a BTreeMap<ClassLabel, Vec<T>>,
    ) -> Vec<(&'a T, ClassLabel)> {
        resolve(&self.test, pool)
    }
}

fn resolve<'a, T>(
    picks: &BTreeMap<ClassLabel, Vec<usize>>,
    pool: &'a BTreeMap<ClassLabel, Vec<T>>,
) -> Vec<(&'a T, ClassLabel)> {
    picks
        .iter()
        .flat_map(|(label, idx)| idx.iter().map(move |&i| (&pool[label][i], *label)))
        .collect()
}

/// Uniformly samples `count` distinct indices from `0..len`.
pub fn sample_without_replacement(
    len: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if count > len {
        return Err(Error::invalid(format!(
            "cannot draw {count} of {len} samples"
        )));
    }
    Ok(rand::seq::index::sample(rng, len, count).into_vec())
}

/// Draws `train_per_class + test_per_class` distinct samples per class and
/// splits them into train and test.
pub fn sample_split<T>(
    pool: &BTreeMap<ClassLabel, Vec<T>>,
    train_per_class: usize,
    test_per_class: usize,
    seed: u64,
) -> Result<DataSplit> {
    if train_per_class == 0 {
        return Err(Error::invalid("train_per_class must be at least 1"));
    }
    if pool.is_empty() {
        return Err(Error::invalid("empty sample pool"));
    }
    let needed = train_per_class + test_per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = BTreeMap::new();
    let mut test = BTreeMap::new();
    for (label, items) in pool {
        if items.len() < needed {
            return Err(Error::invalid(format!(
                "class {label} has {} samples, split needs {needed}",
                items.len()
            )));
        }
        let mut picks = sample_without_replacement(items.len(), needed, &mut rng)?;
        let test_part = picks.split_off(train_per_class);
        train.insert(*label, picks);
        test.insert(*label, test_part);
    }
    Ok(DataSplit { train, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::generate_chip;
    use rand::Rng;

    fn random_columns(
        rng: &mut ChaCha8Rng,
        d: usize,
        per_class: &[(u8, usize)],
    ) -> Vec<(Vec<f64>, ClassLabel)> {
        per_class
            .iter()
            .flat_map(|&(label, n)| (0..n).map(move |_| label))
            .map(|label| {
                let col: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                (col, ClassLabel(label))
            })
            .collect()
    }

    fn four_class_dict(per_class: usize) -> Dictionary {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec: Vec<(u8, usize)> = (0..4).map(|c| (c, per_class)).collect();
        Dictionary::from_columns(random_columns(&mut rng, 12, &spec)).unwrap()
    }

    #[test]
    fn hundred_atom_dictionary() {
        let training: Vec<(ImageChip, ShapeClass)> = ShapeClass::MAIN
            .iter()
            .flat_map(|&c| (0..25).map(move |s| (generate_chip(c, s, (32, 32)).unwrap(), c)))
            .collect();
        let dict = build_dictionary(&training, FeatureDim::new(16, 16)).unwrap();
        assert_eq!((dict.dim(), dict.len(), dict.class_count()), (256, 100, 4));
        for r in dict.class_ranges() {
            assert_eq!(r.len(), 25);
        }
    }

    #[test]
    fn minimal_dictionary() {
        let dict = Dictionary::from_columns(vec![
            (vec![3.0, 4.0], ClassLabel(1)),
            (vec![0.0, -2.0], ClassLabel(0)),
        ])
        .unwrap();
        assert_eq!(dict.len(), 2);
        for col in dict.atoms().column_iter() {
            assert!((col.norm() - 1.0).abs() < COLUMN_NORM_TOL);
        }
        assert_eq!(dict.labels(), &[ClassLabel(0), ClassLabel(1)]);
    }

    #[test]
    fn columns_grouped_stably() {
        let cols = vec![
            (vec![1.0, 0.0], ClassLabel(2)),
            (vec![0.0, 1.0], ClassLabel(0)),
            (vec![1.0, 1.0], ClassLabel(2)),
            (vec![1.0, -1.0], ClassLabel(0)),
        ];
        let dict = Dictionary::from_columns(cols).unwrap();
        assert_eq!(dict.class_range(ClassLabel(0)), Some(0..2));
        assert_eq!(dict.class_range(ClassLabel(2)), Some(2..4));
        assert!(dict.atoms()[(0, 0)].abs() < 1e-15);
        assert!((dict.atoms()[(0, 2)] - 1.0).abs() < 1e-15);
        assert!(dict.atoms()[(1, 3)] > 0.0);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let single = vec![
            (vec![1.0, 0.0], ClassLabel(0)),
            (vec![0.0, 1.0], ClassLabel(0)),
        ];
        assert!(Dictionary::from_columns(single).is_err());
        assert!(Dictionary::from_columns(vec![]).is_err());
        let zero = vec![
            (vec![0.0, 0.0], ClassLabel(0)),
            (vec![0.0, 1.0], ClassLabel(1)),
        ];
        assert!(Dictionary::from_columns(zero).is_err());
        let ragged = vec![(vec![1.0], ClassLabel(0)), (vec![0.0, 1.0], ClassLabel(1))];
        assert!(Dictionary::from_columns(ragged).is_err());

        let a = generate_chip(ShapeClass::Block, 0, (32, 32)).unwrap();
        let b = generate_chip(ShapeClass::Cone, 0, (32, 16)).unwrap();
        let err = build_dictionary(
            &[(a, ShapeClass::Block), (b, ShapeClass::Cone)],
            FeatureDim::new(8, 8),
        );
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn delta_masks_one_block() {
        let dict = four_class_dict(25);
        let x = DVector::from_element(100, 1.0);
        let masked = delta(&dict, &x, ClassLabel(2)).unwrap();
        for (i, v) in masked.iter().enumerate() {
            let expected = if (50..75).contains(&i) { 1.0 } else { 0.0 };
            assert_eq!(*v, expected);
        }
        let zero = DVector::zeros(100);
        assert_eq!(delta(&dict, &zero, ClassLabel(1)).unwrap(), zero);
    }

    #[test]
    fn delta_errors() {
        let dict = four_class_dict(3);
        assert!(delta(&dict, &DVector::zeros(11), ClassLabel(0)).is_err());
        assert!(delta(&dict, &DVector::zeros(12), ClassLabel(9)).is_err());
    }

    #[test]
    fn delta_mass_sums_to_l1() {
        let dict = four_class_dict(7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x: DVector<f64> = DVector::from_fn(28, |_, _| rng.random_range(-2.0..2.0));
            // direct summation over the raw vector
            let l1: f64 = x.iter().map(|v| v.abs()).sum();
            let by_class: f64 = dict
                .classes()
                .iter()
                .map(|&c| {
                    delta(&dict, &x, c)
                        .unwrap()
                        .iter()
                        .map(|v| v.abs())
                        .sum::<f64>()
                })
                .sum();
            assert!((l1 - by_class).abs() < 1e-12);
        }
    }

    #[test]
    fn split_shapes_and_disjointness() {
        let pool: BTreeMap<ClassLabel, Vec<u32>> =
            (0..4).map(|c| (ClassLabel(c), (0..66).collect())).collect();
        let split = sample_split(&pool, 25, 10, 9).unwrap();
        for label in pool.keys() {
            let train = &split.train[label];
            let test = &split.test[label];
            assert_eq!((train.len(), test.len()), (25, 10));
            assert!(train.iter().all(|i| !test.contains(i)));
        }
        assert_eq!(split.train_items(&pool).len(), 100);
        assert_eq!(split.test_items(&pool).len(), 40);
    }

    #[test]
    fn reference_pool_supports_twenty_per_class() {
        let pool: BTreeMap<ClassLabel, Vec<usize>> = ShapeClass::MAIN
            .iter()
            .map(|&c| (ClassLabel::from(c), (0..c.reference_pool_size()).collect()))
            .collect();
        let split = sample_split(&pool, 20, 10, 0).unwrap();
        assert_eq!(split.train.values().map(Vec::len).sum::<usize>(), 80);
    }

    #[test]
    fn split_errors() {
        let pool: BTreeMap<ClassLabel, Vec<u32>> =
            [(ClassLabel(0), vec![0; 66]), (ClassLabel(3), vec![0; 20])]
                .into_iter()
                .collect();
        assert!(sample_split(&pool, 0, 10, 1).is_err());
        match sample_split(&pool, 15, 10, 1) {
            Err(Error::InvalidArgument(msg)) => assert!(msg.contains("sphere"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn split_is_deterministic() {
        let pool: BTreeMap<ClassLabel, Vec<u32>> =
            (0..4).map(|c| (ClassLabel(c), (0..40).collect())).collect();
        assert_eq!(
            sample_split(&pool, 5, 5, 77).unwrap(),
            sample_split(&pool, 5, 5, 77).unwrap()
        );
        assert_ne!(
            sample_split(&pool, 5, 5, 77).unwrap(),
            sample_split(&pool, 5, 5, 78).unwrap()
        );
    }

    #[test]
    fn container_round_trip_is_bit_exact() {
        let dict = four_class_dict(5);
        let bytes = dict.to_bytes();
        assert_eq!(&bytes[..4], b"SRCD");
        let back = Dictionary::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert!(back
            .atoms()
            .iter()
            .zip(dict.atoms().iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.labels(), dict.labels());
    }

    #[test]
    fn container_rejects_corruption() {
        let bytes = four_class_dict(2).to_bytes();
        assert!(matches!(
            Dictionary::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Parse { .. })
        ));
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            Dictionary::from_bytes(&bad_magic),
            Err(Error::Parse { offset: 0, .. })
        ));
        let mut bad_label = bytes.clone();
        let n = bad_label.len();
        bad_label[n - 1] = 0; // class 3 column relabelled as class 0
        assert!(Dictionary::from_bytes(&bad_label).is_err());
        let mut bad_value = bytes;
        bad_value[40] ^= 0x40;
        assert!(Dictionary::from_bytes(&bad_value).is_err());
    }
}
