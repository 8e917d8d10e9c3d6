//! Labeled signal datasets: CSV ingestion, standardization and the
//! nominal-class split used to build the multilevel filter.
//!
//! Rows are samples and columns are feature coordinates everywhere. The CSV
//! layout is a header `label,f1,...,fp` followed by one sample per line.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to per-feature standard deviations.
pub const STD_FLOOR: f64 = 1e-12;

/// Class tag. `A` is the nominal class, `B` the anomalous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    A,
    B,
}

impl ClassLabel {
    /// `-1` for the nominal class, `+1` for the anomalous class.
    pub fn sign(self) -> f64 {
        match self {
            ClassLabel::A => -1.0,
            ClassLabel::B => 1.0,
        }
    }
}

/// Dense row-major matrix of real-valued signals, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    values: Vec<f64>,
    sample_count: usize,
    feature_count: usize,
}

impl SignalMatrix {
    /// Builds a matrix from row-major storage.
    pub fn from_row_major(values: Vec<f64>, sample_count: usize, feature_count: usize) -> Result<Self> {
        if feature_count == 0 {
            return Err(Error::Empty("signals need at least one feature".into()));
        }
        if values.len() != sample_count * feature_count {
            return Err(Error::DimensionMismatch {
                expected: sample_count * feature_count,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                line: pos / feature_count + 1,
                column: pos % feature_count + 1,
            });
        }
        Ok(Self {
            values,
            sample_count,
            feature_count,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let feature_count = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * feature_count);
        for row in rows {
            if row.len() != feature_count {
                return Err(Error::DimensionMismatch {
                    expected: feature_count,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_row_major(values, rows.len(), feature_count)
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.feature_count..(i + 1) * self.feature_count]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.feature_count)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> SignalMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.feature_count);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        SignalMatrix {
            values,
            sample_count: indices.len(),
            feature_count: self.feature_count,
        }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &SignalMatrix) -> Result<SignalMatrix> {
        if other.feature_count != self.feature_count {
            return Err(Error::DimensionMismatch {
                expected: self.feature_count,
                found: other.feature_count,
            });
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(SignalMatrix {
            values,
            sample_count: self.sample_count + other.sample_count,
            feature_count: self.feature_count,
        })
    }

    /// Per-column sample mean.
    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.feature_count];
        for row in self.rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        let n = self.sample_count.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// Signals plus one class tag per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub signals: SignalMatrix,
    pub labels: Vec<ClassLabel>,
}

impl LabeledDataset {
    pub fn new(signals: SignalMatrix, labels: Vec<ClassLabel>) -> Result<Self> {
        if labels.len() != signals.sample_count() {
            return Err(Error::DimensionMismatch {
                expected: signals.sample_count(),
                found: labels.len(),
            });
        }
        Ok(Self { signals, labels })
    }

    pub fn indices_of(&self, class: ClassLabel) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, class: ClassLabel) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }
}

/// Maps raw label strings in a file to the two classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTokens {
    pub class_a: String,
    pub class_b: String,
}

impl Default for LabelTokens {
    fn default() -> Self {
        Self {
            class_a: "A".into(),
            class_b: "B".into(),
        }
    }
}

impl LabelTokens {
    pub fn new(class_a: impl Into<String>, class_b: impl Into<String>) -> Self {
        Self {
            class_a: class_a.into(),
            class_b: class_b.into(),
        }
    }

    fn parse(&self, token: &str, line: usize) -> Result<ClassLabel> {
        let token = token.trim();
        if token == self.class_a {
            Ok(ClassLabel::A)
        } else if token == self.class_b {
            Ok(ClassLabel::B)
        } else {
            Err(Error::UnknownLabel {
                line,
                token: token.to_string(),
            })
        }
    }

    fn token(&self, label: ClassLabel) -> &str {
        match label {
            ClassLabel::A => &self.class_a,
            ClassLabel::B => &self.class_b,
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, tokens: &LabelTokens) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), tokens)
}

/// Parses a `label,f1,...,fp` CSV stream.
pub fn read_dataset<R: Read>(reader: R, tokens: &LabelTokens) -> Result<LabeledDataset> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = csv.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Header("expected `label` followed by at least one feature column".into()));
    }
    if !header[0].eq_ignore_ascii_case("label") {
        return Err(Error::Header(format!("first column must be `label`, found {:?}", &header[0])));
    }
    let p = header.len() - 1;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (idx, record) in csv.records().enumerate() {
        let record = record?;
        // header is line 1
        let line = idx + 2;
        if record.len() != p + 1 {
            return Err(Error::RaggedRow {
                line,
                expected: p + 1,
                found: record.len(),
            });
        }
        labels.push(tokens.parse(&record[0], line)?);
        for (j, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                line,
                column: j + 2,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { line, column: j + 2 });
            }
            values.push(v);
        }
    }
    let n = labels.len();
    let signals = SignalMatrix::from_row_major(values, n, p)?;
    LabeledDataset::new(signals, labels)
}

/// Writes a dataset in the same CSV layout `read_dataset` accepts. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_dataset<W: Write>(writer: W, dataset: &LabeledDataset, tokens: &LabelTokens) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let p = dataset.signals.feature_count();
    let mut header = Vec::with_capacity(p + 1);
    header.push("label".to_string());
    header.extend((1..=p).map(|j| format!("f{j}")));
    csv.write_record(&header)?;
    let mut record = Vec::with_capacity(p + 1);
    for (row, &label) in dataset.signals.rows().zip(&dataset.labels) {
        record.clear();
        record.push(tokens.token(label).to_string());
        record.extend(row.iter().map(|v| v.to_string()));
        csv.write_record(&record)?;
    }
    csv.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

/// Per-feature location and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl StandardizationStats {
    /// Mean 0, stddev 1: applying these is a no-op.
    pub fn identity(p: usize) -> Self {
        Self {
            mean: vec![0.0; p],
            stddev: vec![1.0; p],
        }
    }
}

pub fn fit_standardizer(signals: &SignalMatrix) -> Result<StandardizationStats> {
    fit_standardizer_with_floor(signals, STD_FLOOR)
}

/// Sample mean and sample standard deviation (divisor N-1) per column, with
/// the deviation floored at `floor`.
pub fn fit_standardizer_with_floor(signals: &SignalMatrix, floor: f64) -> Result<StandardizationStats> {
    let n = signals.sample_count();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, found: n });
    }
    if !(floor > 0.0) {
        return Err(Error::InvalidParameter(format!("stddev floor must be positive, got {floor}")));
    }
    let mean = signals.column_means();
    let mut var = vec![0.0; signals.feature_count()];
    for row in signals.rows() {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = x - m;
            *v += d * d;
        }
    }
    let stddev = var
        .into_iter()
        .map(|v| (v / (n - 1) as f64).sqrt().max(floor))
        .collect();
    Ok(StandardizationStats { mean, stddev })
}

pub fn apply_standardizer(signals: &SignalMatrix, stats: &StandardizationStats) -> Result<SignalMatrix> {
    let p = signals.feature_count();
    if stats.mean.len() != p || stats.stddev.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: stats.mean.len().min(stats.stddev.len()),
        });
    }
    let mut values = Vec::with_capacity(signals.as_slice().len());
    for row in signals.rows() {
        values.extend(
            row.iter()
                .zip(&stats.mean)
                .zip(&stats.stddev)
                .map(|((x, m), s)| (x - m) / s),
        );
    }
    SignalMatrix::from_row_major(values, signals.sample_count(), p)
}

/// Partition of a dataset into the filter-training nominal samples, the
/// remaining nominal samples and the anomalous class. Index vectors refer to
/// rows of the source dataset.
#[derive(Debug, Clone)]
pub struct NominalSplit {
    pub filter_set: SignalMatrix,
    pub heldout_a: SignalMatrix,
    pub class_b: SignalMatrix,
    pub filter_rows: Vec<usize>,
    pub heldout_rows: Vec<usize>,
    pub class_b_rows: Vec<usize>,
}

/// Chooses `n_filter` class-A samples for the filter.
///
/// With `seed = None` the first `n_filter` class-A rows (file order) are
/// used; otherwise a seeded shuffle picks them. Selected and remaining rows
/// keep their file order.
pub fn split_nominal(dataset: &LabeledDataset, n_filter: usize, seed: Option<u64>) -> Result<NominalSplit> {
    let mut a_rows = dataset.indices_of(ClassLabel::A);
    let class_b_rows = dataset.indices_of(ClassLabel::B);
    if a_rows.is_empty() {
        return Err(Error::InvalidSplit("no class-A samples".into()));
    }
    if class_b_rows.is_empty() {
        return Err(Error::InvalidSplit("no class-B samples".into()));
    }
    if n_filter >= a_rows.len() {
        return Err(Error::InvalidSplit(format!(
            "n_filter = {n_filter} must be smaller than the {} class-A samples",
            a_rows.len()
        )));
    }
    if let Some(seed) = seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        a_rows.shuffle(&mut rng);
    }
    let mut filter_rows = a_rows[..n_filter].to_vec();
    let mut heldout_rows = a_rows[n_filter..].to_vec();
    filter_rows.sort_unstable();
    heldout_rows.sort_unstable();
    let s = &dataset.signals;
    Ok(NominalSplit {
        filter_set: s.select_rows(&filter_rows),
        heldout_a: s.select_rows(&heldout_rows),
        class_b: s.select_rows(&class_b_rows),
        filter_rows,
        heldout_rows,
        class_b_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn parse(text: &str) -> Result<LabeledDataset> {
        read_dataset(text.as_bytes(), &LabelTokens::default())
    }

    #[test]
    fn loads_small_csv() {
        let ds = parse("label,f1,f2,f3\nA,1,2,3\nA,4,5,6\nB,7,8,9\nB,1.5,-2e-3,0\n").unwrap();
        assert_eq!(ds.signals.sample_count(), 4);
        assert_eq!(ds.signals.feature_count(), 3);
        assert_eq!(ds.labels, vec![ClassLabel::A, ClassLabel::A, ClassLabel::B, ClassLabel::B]);
        assert_eq!(ds.signals.row(3), &[1.5, -2e-3, 0.0]);
    }

    #[test]
    fn custom_tokens() {
        let tokens = LabelTokens::new("tumour", "normal");
        let ds = read_dataset("label,g1\ntumour,1\nnormal,2\n".as_bytes(), &tokens).unwrap();
        assert_eq!(ds.labels, vec![ClassLabel::A, ClassLabel::B]);
        let err = read_dataset("label,g1\ntumour,1\nA,2\n".as_bytes(), &tokens).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { line: 3, .. }));
    }

    #[test]
    fn rejects_nan_cell() {
        let err = parse("label,f1,f2\nA,1,NaN\n").unwrap_err();
        assert!(matches!(err, Error::NonFinite { line: 2, column: 3 }), "{err}");
        let err = parse("label,f1\nA,inf\n").unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn rejects_ragged_and_non_numeric() {
        assert!(matches!(
            parse("label,f1,f2\nA,1,2\nB,3\n").unwrap_err(),
            Error::RaggedRow { line: 3, expected: 3, found: 2 }
        ));
        assert!(matches!(
            parse("label,f1\nA,abc\n").unwrap_err(),
            Error::NonNumeric { line: 2, column: 2, .. }
        ));
        assert!(matches!(parse("name,f1\nA,1\n").unwrap_err(), Error::Header(_)));
    }

    #[test]
    fn missing_file() {
        let err = load_dataset("/nonexistent/data.csv", &LabelTokens::default()).unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
        assert!(err.is_validation());
    }

    #[test]
    fn write_read_round_trip() {
        let rows = vec![vec![0.1, 1.0 / 3.0, -7.25e-12], vec![1e300, -0.0, 2.5]];
        let ds = LabeledDataset::new(SignalMatrix::from_rows(&rows).unwrap(), vec![ClassLabel::B, ClassLabel::A]).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds, &LabelTokens::default()).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn two_point_standardizer() {
        let s = SignalMatrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let stats = fit_standardizer(&s).unwrap();
        assert_eq!(stats.mean, vec![1.0, 1.0]);
        assert_abs_diff_eq!(stats.stddev[0], 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(stats.stddev[1], 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn constant_column_is_floored() {
        let s = SignalMatrix::from_rows(&[vec![3.0, 1.0], vec![3.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let stats = fit_standardizer(&s).unwrap();
        assert_eq!(stats.stddev[0], STD_FLOOR);
        let z = apply_standardizer(&s, &stats).unwrap();
        assert!(z.rows().all(|r| r[0] == 0.0));
    }

    #[test]
    fn standardizer_needs_two_samples() {
        let s = SignalMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(fit_standardizer(&s), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn standardizer_matches_columnwise_oracle() {
        let rows = vec![
            vec![0.3, -1.2, 4.0, 2.2],
            vec![1.7, 0.4, 3.1, -0.5],
            vec![-0.9, 2.8, 5.5, 1.1],
            vec![2.4, -0.7, 2.9, 0.0],
            vec![0.6, 1.9, 4.4, -2.3],
        ];
        let stats = fit_standardizer(&SignalMatrix::from_rows(&rows).unwrap()).unwrap();
        for j in 0..4 {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / 5.0;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
            assert_abs_diff_eq!(stats.mean[j], mean, epsilon = 1e-14);
            assert_abs_diff_eq!(stats.stddev[j], var.sqrt(), epsilon = 1e-14);
        }
    }

    #[test]
    fn identity_stats_and_heldout_row() {
        let s = SignalMatrix::from_rows(&[vec![1.0, -2.0, 3.5]]).unwrap();
        let out = apply_standardizer(&s, &StandardizationStats::identity(3)).unwrap();
        assert_eq!(out, s);

        let stats = StandardizationStats {
            mean: vec![0.5, 1.0, -1.0],
            stddev: vec![2.0, 0.25, 4.0],
        };
        let out = apply_standardizer(&s, &stats).unwrap();
        let expected = [(1.0 - 0.5) / 2.0, (-2.0 - 1.0) / 0.25, (3.5 + 1.0) / 4.0];
        for (o, e) in out.row(0).iter().zip(expected) {
            assert_abs_diff_eq!(*o, e, epsilon = 1e-15);
        }
        assert!(matches!(
            apply_standardizer(&s, &StandardizationStats::identity(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn labeled(n_a: usize, n_b: usize) -> LabeledDataset {
        let rows: Vec<Vec<f64>> = (0..n_a + n_b).map(|i| vec![i as f64]).collect();
        let mut labels = vec![ClassLabel::A; n_a];
        labels.extend(vec![ClassLabel::B; n_b]);
        LabeledDataset::new(SignalMatrix::from_rows(&rows).unwrap(), labels).unwrap()
    }

    #[test]
    fn gcm_shaped_split() {
        let ds = labeled(190, 90);
        let split = split_nominal(&ds, 100, Some(7)).unwrap();
        assert_eq!(split.filter_set.sample_count(), 100);
        assert_eq!(split.heldout_a.sample_count(), 90);
        assert_eq!(split.class_b.sample_count(), 90);
    }

    #[test]
    fn split_boundary_and_determinism() {
        let ds = labeled(10, 3);
        assert!(matches!(split_nominal(&ds, 10, None), Err(Error::InvalidSplit(_))));
        let a = split_nominal(&ds, 4, Some(99)).unwrap();
        let b = split_nominal(&ds, 4, Some(99)).unwrap();
        assert_eq!(a.filter_rows, b.filter_rows);
        let first = split_nominal(&ds, 4, None).unwrap();
        assert_eq!(first.filter_rows, vec![0, 1, 2, 3]);
        assert!(matches!(split_nominal(&labeled(5, 0), 2, None), Err(Error::InvalidSplit(_))));
    }
}
