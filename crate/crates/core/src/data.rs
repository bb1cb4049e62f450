//! Dataset representation, file-format parsing, synthetic data generation,
//! normalization, and deterministic stratified fold construction.
//!
//! All types here are immutable after construction; every operation is a
//! pure function of its inputs (randomized ones take an explicit seed).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use thiserror::Error;

use crate::rng::{derive_seed, SplitMix64};

/// Errors raised while reading dataset text.
#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("empty input")]
    EmptyInput,
    #[error("line {line}: malformed token `{token}`")]
    MalformedToken { line: usize, token: String },
    #[error("line {line}: feature index {index} does not increase")]
    NonIncreasingIndex { line: usize, index: usize },
    #[error("line {line}: non-finite feature value")]
    NonFiniteValue { line: usize },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: more than two distinct labels (`{label}`)")]
    TooManyLabels { line: usize, label: String },
    #[error("line {line}: non-numeric feature `{token}`")]
    NonNumericFeature { line: usize, token: String },
}

/// Errors raised by dataset construction and argument validation.
#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{0}")]
    InvalidArgument(String),
}

/// Dense binary-classification dataset.
///
/// Rows of `features` align with `labels` and `ids`; ids are stable sample
/// identifiers (`0..n` at load time) preserved under [`Dataset::subset`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    class_names: [String; 2],
    ids: Vec<u64>,
}

impl Dataset {
    /// Builds a dataset with fresh ids `0..n`, validating every invariant:
    /// matching lengths, labels in `{0, 1}`, finite features.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_names: [String; 2],
    ) -> Result<Self, DataError> {
        let ids = (0..features.nrows() as u64).collect();
        Self::with_ids(features, labels, class_names, ids)
    }

    /// As [`Dataset::new`] but keeping caller-supplied ids (must be unique).
    pub fn with_ids(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_names: [String; 2],
        ids: Vec<u64>,
    ) -> Result<Self, DataError> {
        if labels.len() != features.nrows() {
            return Err(DataError::DimensionMismatch {
                expected: features.nrows(),
                actual: labels.len(),
            });
        }
        if ids.len() != features.nrows() {
            return Err(DataError::DimensionMismatch {
                expected: features.nrows(),
                actual: ids.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(DataError::InvalidArgument(format!(
                "label {bad} is not a binary class index"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DataError::InvalidArgument(
                "features contain non-finite values".into(),
            ));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(DataError::InvalidArgument("duplicate sample ids".into()));
        }
        Ok(Dataset {
            features,
            labels,
            class_names,
            ids,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn feature_row(&self, row: usize) -> ArrayView1<'_, f64> {
        self.features.row(row)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, row: usize) -> usize {
        self.labels[row]
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn class_names(&self) -> &[String; 2] {
        &self.class_names
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - ones, ones]
    }

    pub fn both_classes_present(&self) -> bool {
        let [c0, c1] = self.class_counts();
        c0 > 0 && c1 > 0
    }

    /// New dataset holding the given row positions, preserving ids.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut features = Array2::zeros((rows.len(), self.n_features()));
        let mut labels = Vec::with_capacity(rows.len());
        let mut ids = Vec::with_capacity(rows.len());
        for (out, &r) in rows.iter().enumerate() {
            features.row_mut(out).assign(&self.features.row(r));
            labels.push(self.labels[r]);
            ids.push(self.ids[r]);
        }
        Dataset {
            features,
            labels,
            class_names: self.class_names.clone(),
            ids,
        }
    }

    /// Same features and ids under a new labelling (used to train the
    /// easy/hard discriminator).
    pub fn relabelled(&self, labels: Vec<usize>, class_names: [String; 2]) -> Result<Dataset, DataError> {
        Dataset::with_ids(self.features.clone(), labels, class_names, self.ids.clone())
    }
}

/// Which field of a delimited row carries the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelColumn {
    First,
    Last,
}

fn finite(v: f64, line: usize) -> Result<f64, ParseError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ParseError::NonFiniteValue { line })
    }
}

/// Parses LIBSVM sparse text: `<label> <index>:<value> ...` per line,
/// 1-based strictly increasing indices. Any positive label maps to class 1,
/// the rest to class 0. Absent indices are 0.0 and the dimension is the
/// largest index seen anywhere in the file.
pub fn parse_libsvm(text: &str) -> Result<Dataset, ParseError> {
    let mut rows: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
    let mut max_index = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut tokens = raw.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a first token");
        let label_val: f64 = label_tok.parse().map_err(|_| ParseError::MalformedToken {
            line,
            token: label_tok.to_string(),
        })?;
        if !label_val.is_finite() {
            return Err(ParseError::MalformedToken {
                line,
                token: label_tok.to_string(),
            });
        }
        let label = usize::from(label_val > 0.0);
        let mut entries = Vec::new();
        let mut prev_index = 0usize;
        for tok in tokens {
            let (idx_str, val_str) = tok.split_once(':').ok_or_else(|| ParseError::MalformedToken {
                line,
                token: tok.to_string(),
            })?;
            let index: usize = idx_str.parse().map_err(|_| ParseError::MalformedToken {
                line,
                token: tok.to_string(),
            })?;
            if index == 0 {
                return Err(ParseError::MalformedToken {
                    line,
                    token: tok.to_string(),
                });
            }
            let value: f64 = val_str.parse().map_err(|_| ParseError::MalformedToken {
                line,
                token: tok.to_string(),
            })?;
            let value = finite(value, line)?;
            if index <= prev_index {
                return Err(ParseError::NonIncreasingIndex { line, index });
            }
            prev_index = index;
            max_index = max_index.max(index);
            entries.push((index, value));
        }
        rows.push((label, entries));
    }
    if rows.is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let n = rows.len();
    let mut features = Array2::zeros((n, max_index));
    let mut labels = Vec::with_capacity(n);
    for (r, (label, entries)) in rows.into_iter().enumerate() {
        labels.push(label);
        for (index, value) in entries {
            features[(r, index - 1)] = value;
        }
    }
    Ok(Dataset::new(features, labels, ["-1".into(), "+1".into()])
        .expect("parser output satisfies dataset invariants"))
}

/// Writes a dataset as dense LIBSVM text (every index emitted, so parsing
/// it back reproduces the dimension and the exact float values).
pub fn write_libsvm(ds: &Dataset) -> String {
    let mut out = String::new();
    for row in 0..ds.n_samples() {
        out.push_str(if ds.label(row) == 1 { "+1" } else { "-1" });
        for (j, v) in ds.feature_row(row).iter().enumerate() {
            out.push_str(&format!(" {}:{}", j + 1, v));
        }
        out.push('\n');
    }
    out
}

/// Parses delimiter-separated rows with the label in the first or last
/// field. Lines starting with `@` or `%` are metadata and skipped (enough
/// to read KEEL data sections). Class names are the sorted distinct label
/// strings, mapped to `{0, 1}` in sorted order.
pub fn parse_delimited(
    text: &str,
    delimiter: char,
    label_column: LabelColumn,
) -> Result<Dataset, ParseError> {
    let mut raw_rows: Vec<(usize, Vec<f64>, String)> = Vec::new();
    let mut distinct: Vec<String> = Vec::new();
    let mut expected_fields: Option<usize> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('@') || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(delimiter).map(str::trim).collect();
        match expected_fields {
            None => {
                if fields.len() < 2 {
                    return Err(ParseError::MalformedToken {
                        line,
                        token: trimmed.to_string(),
                    });
                }
                expected_fields = Some(fields.len());
            }
            Some(expected) if fields.len() != expected => {
                return Err(ParseError::RaggedRow {
                    line,
                    expected,
                    found: fields.len(),
                });
            }
            Some(_) => {}
        }
        let (label_str, feature_fields) = match label_column {
            LabelColumn::First => (fields[0], &fields[1..]),
            LabelColumn::Last => (fields[fields.len() - 1], &fields[..fields.len() - 1]),
        };
        if !distinct.iter().any(|l| l == label_str) {
            if distinct.len() == 2 {
                return Err(ParseError::TooManyLabels {
                    line,
                    label: label_str.to_string(),
                });
            }
            distinct.push(label_str.to_string());
        }
        let mut values = Vec::with_capacity(feature_fields.len());
        for tok in feature_fields {
            let v: f64 = tok.parse().map_err(|_| ParseError::NonNumericFeature {
                line,
                token: tok.to_string(),
            })?;
            if !v.is_finite() {
                return Err(ParseError::NonFiniteValue { line });
            }
            values.push(v);
        }
        raw_rows.push((line, values, label_str.to_string()));
    }
    if raw_rows.is_empty() {
        return Err(ParseError::EmptyInput);
    }
    distinct.sort();
    let class_names: [String; 2] = match distinct.len() {
        1 => [distinct[0].clone(), "?".into()],
        2 => [distinct[0].clone(), distinct[1].clone()],
        _ => unreachable!("more than two labels rejected above"),
    };
    let d = raw_rows[0].1.len();
    let n = raw_rows.len();
    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for (r, (_, values, label_str)) in raw_rows.into_iter().enumerate() {
        for (c, v) in values.into_iter().enumerate() {
            features[(r, c)] = v;
        }
        labels.push(usize::from(label_str == class_names[1]));
    }
    Ok(Dataset::new(features, labels, class_names)
        .expect("parser output satisfies dataset invariants"))
}

const SPIRAL_STREAM: u64 = 0x73_70_69_72; // "spir"

/// Generates the two-spirals benchmark: class 0 on the arc
/// `(r cos phi, r sin phi)` and class 1 on its point reflection, with
/// `t = i / (n/2 - 1)`, `r = 0.2 + 1.8 t`, `phi = 4 pi t`, plus independent
/// per-coordinate Gaussian noise of the given variance.
///
/// The radius spans 0.2 to 2.0 so the 0.45 gap between adjacent arms
/// dominates noise at the benchmark variances (0.02-0.06): the classes stay
/// locally separable while no linear rule can follow the winding.
pub fn generate_two_spirals(n: usize, noise_variance: f64, seed: u64) -> Result<Dataset, DataError> {
    if n < 4 || n % 2 != 0 {
        return Err(DataError::InvalidArgument(format!(
            "two-spirals size must be even and at least 4, got {n}"
        )));
    }
    if !noise_variance.is_finite() || noise_variance < 0.0 {
        return Err(DataError::InvalidArgument(format!(
            "noise variance must be a finite non-negative number, got {noise_variance}"
        )));
    }
    let half = n / 2;
    let sd = noise_variance.sqrt();
    let mut rng = SplitMix64::new(derive_seed(seed, SPIRAL_STREAM));
    let mut features = Array2::zeros((n, 2));
    let mut labels = vec![0usize; n];
    let mut arc = Vec::with_capacity(half);
    for i in 0..half {
        let t = i as f64 / (half - 1) as f64;
        let r = 0.2 + 1.8 * t;
        let phi = 4.0 * std::f64::consts::PI * t;
        arc.push((r * phi.cos(), r * phi.sin()));
    }
    for (i, &(x, y)) in arc.iter().enumerate() {
        let (nx, ny) = rng.next_normal_pair();
        features[(i, 0)] = x + sd * nx;
        features[(i, 1)] = y + sd * ny;
    }
    for (i, &(x, y)) in arc.iter().enumerate() {
        let (nx, ny) = rng.next_normal_pair();
        features[(half + i, 0)] = -x + sd * nx;
        features[(half + i, 1)] = -y + sd * ny;
        labels[half + i] = 1;
    }
    Dataset::new(features, labels, ["C1".into(), "C2".into()])
}

/// Assignment of each sample to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    assignments: Vec<usize>,
    seed: u64,
    stratified: bool,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// False when some class had fewer than `k` members and the plan fell
    /// back to unstratified assignment.
    pub fn stratified(&self) -> bool {
        self.stratified
    }

    /// Row positions held out by fold `fold`.
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    /// Row positions remaining when fold `fold` is held out.
    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Deterministic stratified k-fold assignment: per-class shuffle driven by
/// the seed, then round-robin dealing, so per-fold class counts differ from
/// `n_c / k` by less than one. Falls back to unstratified dealing when a
/// present class has fewer than `k` members.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    let n = labels.len();
    if k < 2 {
        return Err(DataError::InvalidArgument(format!(
            "fold count must be at least 2, got {k}"
        )));
    }
    if k > n {
        return Err(DataError::InvalidArgument(format!(
            "fold count {k} exceeds sample count {n}"
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(DataError::InvalidArgument(format!(
            "label {bad} is not a binary class index"
        )));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let stratified = by_class.iter().all(|c| c.is_empty() || c.len() >= k);
    let mut rng = SplitMix64::new(seed);
    let mut assignments = vec![0usize; n];
    if stratified {
        for class_rows in by_class.iter_mut() {
            rng.shuffle(class_rows);
            for (j, &row) in class_rows.iter().enumerate() {
                assignments[row] = j % k;
            }
        }
    } else {
        let mut rows: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut rows);
        for (j, &row) in rows.iter().enumerate() {
            assignments[row] = j % k;
        }
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
        stratified,
    })
}

/// Per-column z-score transform fitted on training data.
///
/// Constant columns store a standard deviation of 1 so they transform to
/// exactly zero instead of dividing by zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    means: Vec<f64>,
    stddevs: Vec<f64>,
}

impl Normalizer {
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stddevs(&self) -> &[f64] {
        &self.stddevs
    }

    pub fn from_parts(means: Vec<f64>, stddevs: Vec<f64>) -> Result<Self, DataError> {
        if means.len() != stddevs.len() {
            return Err(DataError::DimensionMismatch {
                expected: means.len(),
                actual: stddevs.len(),
            });
        }
        Ok(Normalizer { means, stddevs })
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset, DataError> {
        if ds.n_features() != self.means.len() {
            return Err(DataError::DimensionMismatch {
                expected: self.means.len(),
                actual: ds.n_features(),
            });
        }
        let mut features = ds.features.clone();
        for mut row in features.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.stddevs[j];
            }
        }
        Ok(Dataset {
            features,
            labels: ds.labels.clone(),
            class_names: ds.class_names.clone(),
            ids: ds.ids.clone(),
        })
    }

    pub fn apply_row(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>, DataError> {
        if x.len() != self.means.len() {
            return Err(DataError::DimensionMismatch {
                expected: self.means.len(),
                actual: x.len(),
            });
        }
        Ok(Array1::from_iter(
            x.iter()
                .enumerate()
                .map(|(j, v)| (v - self.means[j]) / self.stddevs[j]),
        ))
    }
}

/// Fits a z-score normalizer (population standard deviation).
pub fn normalize_fit(ds: &Dataset) -> Result<Normalizer, DataError> {
    let n = ds.n_samples();
    if n == 0 {
        return Err(DataError::EmptyDataset);
    }
    let d = ds.n_features();
    let mut means = vec![0.0; d];
    let mut stddevs = vec![0.0; d];
    for j in 0..d {
        let col = ds.features.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        means[j] = mean;
        stddevs[j] = if var == 0.0 { 1.0 } else { var.sqrt() };
    }
    Ok(Normalizer { means, stddevs })
}

/// Empirical class frequencies `(p0, p1)` with `p0 + p1 == 1` exactly.
pub fn class_priors(ds: &Dataset) -> Result<(f64, f64), DataError> {
    let n = ds.n_samples();
    if n == 0 {
        return Err(DataError::EmptyDataset);
    }
    let [c0, _] = ds.class_counts();
    let p0 = c0 as f64 / n as f64;
    Ok((p0, 1.0 - p0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn libsvm_minimal_parse() {
        let ds = parse_libsvm("1 1:0.5 2:-1.0\n-1 2:3.0").unwrap();
        assert_eq!(ds.n_samples(), 2);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.labels(), &[1, 0]);
        assert_eq!(ds.feature_row(0).to_vec(), vec![0.5, -1.0]);
        assert_eq!(ds.feature_row(1).to_vec(), vec![0.0, 3.0]);
        assert_eq!(ds.ids(), &[0, 1]);
    }

    #[test]
    fn libsvm_empty_input() {
        assert_eq!(parse_libsvm("").unwrap_err(), ParseError::EmptyInput);
        assert_eq!(parse_libsvm("\n  \n").unwrap_err(), ParseError::EmptyInput);
    }

    #[test]
    fn libsvm_malformed_token_reports_line() {
        let err = parse_libsvm("1 1:0.5\n-1 oops\n").unwrap_err();
        assert_eq!(
            err,
            ParseError::MalformedToken {
                line: 2,
                token: "oops".into()
            }
        );
    }

    #[test]
    fn libsvm_rejects_non_increasing_indices() {
        let err = parse_libsvm("1 2:1.0 2:2.0").unwrap_err();
        assert_eq!(err, ParseError::NonIncreasingIndex { line: 1, index: 2 });
        let err = parse_libsvm("1 3:1.0 2:2.0").unwrap_err();
        assert_eq!(err, ParseError::NonIncreasingIndex { line: 1, index: 2 });
    }

    #[test]
    fn libsvm_rejects_non_finite_values() {
        let err = parse_libsvm("1 1:nan").unwrap_err();
        assert_eq!(err, ParseError::NonFiniteValue { line: 1 });
        let err = parse_libsvm("1 1:inf").unwrap_err();
        assert_eq!(err, ParseError::NonFiniteValue { line: 1 });
    }

    #[test]
    fn libsvm_rejects_zero_index() {
        let err = parse_libsvm("1 0:1.0").unwrap_err();
        assert!(matches!(err, ParseError::MalformedToken { line: 1, .. }));
    }

    #[test]
    fn libsvm_label_mapping() {
        let ds = parse_libsvm("+1 1:1\n2 1:1\n0 1:1\n-1 1:1\n-3.5 1:1").unwrap();
        assert_eq!(ds.labels(), &[1, 1, 0, 0, 0]);
    }

    #[test]
    fn libsvm_round_trip_is_exact() {
        let text = "1 1:0.5 2:-1.25e-3\n-1 1:0 2:3.0\n+1 1:-0 2:1e-300\n";
        let ds = parse_libsvm(text).unwrap();
        let written = write_libsvm(&ds);
        let ds2 = parse_libsvm(&written).unwrap();
        assert_eq!(ds.labels(), ds2.labels());
        assert_eq!(ds.class_names(), ds2.class_names());
        assert_eq!(ds.n_features(), ds2.n_features());
        for r in 0..ds.n_samples() {
            for (a, b) in ds.feature_row(r).iter().zip(ds2.feature_row(r).iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        // Fixed point of write after one round trip.
        assert_eq!(written, write_libsvm(&ds2));
    }

    #[test]
    fn delimited_minimal_parse() {
        let ds = parse_delimited("@relation t\n1.0,2.0,yes\n3.0,4.0,no", ',', LabelColumn::Last).unwrap();
        assert_eq!(ds.n_samples(), 2);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.class_names(), &["no".to_string(), "yes".to_string()]);
        assert_eq!(ds.labels(), &[1, 0]);
    }

    #[test]
    fn delimited_ragged_row() {
        let err = parse_delimited("1,2\n3", ',', LabelColumn::Last).unwrap_err();
        assert_eq!(
            err,
            ParseError::RaggedRow {
                line: 2,
                expected: 2,
                found: 1
            }
        );
    }

    #[test]
    fn delimited_too_many_labels() {
        let err = parse_delimited("1,a\n2,b\n3,c", ',', LabelColumn::Last).unwrap_err();
        assert_eq!(
            err,
            ParseError::TooManyLabels {
                line: 3,
                label: "c".into()
            }
        );
    }

    #[test]
    fn delimited_non_numeric_feature() {
        let err = parse_delimited("x,1\n2,1", ',', LabelColumn::Last).unwrap_err();
        assert_eq!(
            err,
            ParseError::NonNumericFeature {
                line: 1,
                token: "x".into()
            }
        );
    }

    #[test]
    fn delimited_label_first_and_metadata_skip() {
        let text = "% comment\n@data\nyes 1.0 2.0\nno 3.0 4.0\n";
        let ds = parse_delimited(text, ' ', LabelColumn::First).unwrap();
        assert_eq!(ds.labels(), &[1, 0]);
        assert_eq!(ds.feature_row(0).to_vec(), vec![1.0, 2.0]);
    }

    #[test]
    fn spirals_endpoints_noise_free() {
        let ds = generate_two_spirals(4, 0.0, 123).unwrap();
        assert_eq!(ds.labels(), &[0, 0, 1, 1]);
        // t = 0 sits at the inner radius on the positive x axis; t = 1 has
        // completed two full turns back onto it at the outer radius.
        let p0 = ds.feature_row(0);
        assert!((p0[0] - 0.2).abs() < 1e-12 && p0[1].abs() < 1e-12);
        let p1 = ds.feature_row(1);
        assert!((p1[0] - 2.0).abs() < 1e-12 && p1[1].abs() < 1e-12);
        for i in 0..2 {
            let a = ds.feature_row(i);
            let b = ds.feature_row(2 + i);
            assert!((a[0] + b[0]).abs() < 1e-12);
            assert!((a[1] + b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn spirals_deterministic_bitwise() {
        let a = generate_two_spirals(200, 0.02, 7).unwrap();
        let b = generate_two_spirals(200, 0.02, 7).unwrap();
        for (x, y) in a.features().iter().zip(b.features().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn spirals_rejects_bad_sizes() {
        assert!(generate_two_spirals(3, 0.0, 1).is_err());
        assert!(generate_two_spirals(5, 0.0, 1).is_err());
        assert!(generate_two_spirals(2, 0.0, 1).is_err());
        assert!(generate_two_spirals(10, -0.1, 1).is_err());
    }

    #[test]
    fn kfold_two_by_two() {
        let plan = stratified_kfold(&[0, 0, 1, 1], 2, 9).unwrap();
        for fold in 0..2 {
            let rows = plan.test_rows(fold);
            assert_eq!(rows.len(), 2);
            let zeros = rows.iter().filter(|&&r| r < 2).count();
            assert_eq!(zeros, 1, "each fold holds one sample of each class");
        }
    }

    #[test]
    fn kfold_balanced_sixty() {
        let labels: Vec<usize> = [vec![0; 30], vec![1; 30]].concat();
        let plan = stratified_kfold(&labels, 10, 42).unwrap();
        assert!(plan.stratified());
        for fold in 0..10 {
            let rows = plan.test_rows(fold);
            assert_eq!(rows.len(), 6);
            let c1 = rows.iter().filter(|&&r| labels[r] == 1).count();
            assert_eq!(c1, 3);
        }
    }

    #[test]
    fn kfold_unstratified_fallback() {
        let labels: Vec<usize> = [vec![0; 9], vec![1]].concat();
        let plan = stratified_kfold(&labels, 5, 3).unwrap();
        assert!(!plan.stratified());
        for fold in 0..5 {
            assert_eq!(plan.test_rows(fold).len(), 2);
        }
    }

    #[test]
    fn kfold_argument_errors() {
        assert!(stratified_kfold(&[0, 1], 1, 0).is_err());
        assert!(stratified_kfold(&[0, 1], 3, 0).is_err());
    }

    #[test]
    fn kfold_deterministic() {
        let labels: Vec<usize> = (0..37).map(|i| i % 2).collect();
        let a = stratified_kfold(&labels, 5, 11).unwrap();
        let b = stratified_kfold(&labels, 5, 11).unwrap();
        assert_eq!(a, b);
    }

    fn dataset_from_rows(rows: &[(Vec<f64>, usize)]) -> Dataset {
        let d = rows[0].0.len();
        let mut features = Array2::zeros((rows.len(), d));
        let mut labels = Vec::new();
        for (r, (vals, label)) in rows.iter().enumerate() {
            for (c, v) in vals.iter().enumerate() {
                features[(r, c)] = *v;
            }
            labels.push(*label);
        }
        Dataset::new(features, labels, ["C1".into(), "C2".into()]).unwrap()
    }

    #[test]
    fn normalize_constant_column() {
        let ds = dataset_from_rows(&[(vec![1.0], 0), (vec![1.0], 1), (vec![1.0], 0)]);
        let norm = normalize_fit(&ds).unwrap();
        assert_eq!(norm.stddevs(), &[1.0]);
        let out = norm.apply(&ds).unwrap();
        assert!(out.features().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_two_point_column() {
        let ds = dataset_from_rows(&[(vec![0.0], 0), (vec![2.0], 1)]);
        let norm = normalize_fit(&ds).unwrap();
        let out = norm.apply(&ds).unwrap();
        assert_eq!(out.feature_row(0)[0], -1.0);
        assert_eq!(out.feature_row(1)[0], 1.0);
    }

    #[test]
    fn normalize_dimension_mismatch() {
        let train = dataset_from_rows(&[(vec![0.0, 1.0], 0), (vec![2.0, 3.0], 1)]);
        let test = dataset_from_rows(&[(vec![0.0], 0)]);
        let norm = normalize_fit(&train).unwrap();
        assert!(matches!(
            norm.apply(&test),
            Err(DataError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn normalize_fit_then_transform_moments() {
        let ds = generate_two_spirals(100, 0.05, 5).unwrap();
        let norm = normalize_fit(&ds).unwrap();
        let out = norm.apply(&ds).unwrap();
        for j in 0..out.n_features() {
            let col = out.features().column(j).to_owned();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() <= 1e-9, "column {j} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() <= 1e-9, "column {j} std {}", var.sqrt());
        }
    }

    #[test]
    fn priors_examples() {
        let ds = dataset_from_rows(&[(vec![0.0], 0), (vec![0.0], 0), (vec![0.0], 1), (vec![0.0], 1)]);
        assert_eq!(class_priors(&ds).unwrap(), (0.5, 0.5));
        let ds = dataset_from_rows(&[(vec![0.0], 0), (vec![0.0], 0), (vec![0.0], 0), (vec![0.0], 1)]);
        assert_eq!(class_priors(&ds).unwrap(), (0.75, 0.25));
        let balanced: Vec<(Vec<f64>, usize)> =
            (0..60).map(|i| (vec![i as f64], usize::from(i >= 30))).collect();
        assert_eq!(class_priors(&dataset_from_rows(&balanced)).unwrap(), (0.5, 0.5));
    }

    #[test]
    fn priors_sum_to_one_exactly() {
        let rows: Vec<(Vec<f64>, usize)> =
            (0..7).map(|i| (vec![i as f64], usize::from(i < 3))).collect();
        let (p0, p1) = class_priors(&dataset_from_rows(&rows)).unwrap();
        assert_eq!(p0 + p1, 1.0);
    }

    #[test]
    fn subset_preserves_ids() {
        let ds = dataset_from_rows(&[(vec![0.0], 0), (vec![1.0], 1), (vec![2.0], 0)]);
        let sub = ds.subset(&[2, 0]);
        assert_eq!(sub.ids(), &[2, 0]);
        assert_eq!(sub.labels(), &[0, 0]);
        assert_eq!(sub.feature_row(0)[0], 2.0);
    }

    #[test]
    fn dataset_rejects_invalid_construction() {
        let f = Array2::zeros((2, 1));
        assert!(Dataset::new(f.clone(), vec![0], ["a".into(), "b".into()]).is_err());
        assert!(Dataset::new(f.clone(), vec![0, 2], ["a".into(), "b".into()]).is_err());
        let mut bad = f.clone();
        bad[(0, 0)] = f64::NAN;
        assert!(Dataset::new(bad, vec![0, 1], ["a".into(), "b".into()]).is_err());
        assert!(Dataset::with_ids(f, vec![0, 1], ["a".into(), "b".into()], vec![3, 3]).is_err());
    }
}
