//! Tabular dataset ingestion, summary statistics and train/test splitting.
//!
//! Datasets are dense row-major matrices of finite `f64` values with a binary
//! label per row. CSV input is comma separated with a header row; quoting is
//! not interpreted beyond what the `csv` reader does by default.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature matrix with binary labels and named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    feature_names: Vec<String>,
    values: Vec<f64>,
    labels: Vec<u8>,
}

impl TabularDataset {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        let n_features = feature_names.len();
        if rows.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let mut values = Vec::with_capacity(rows.len() * n_features);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has {} values, expected {n_features}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(feature_names, values, labels)
    }

    pub fn from_flat(
        feature_names: Vec<String>,
        values: Vec<f64>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        validate_names(&feature_names)?;
        if feature_names.is_empty() {
            return Err(Error::InvalidDataset("no feature columns".into()));
        }
        if values.len() != labels.len() * feature_names.len() {
            return Err(Error::InvalidDataset(format!(
                "{} values do not form {} rows of {} features",
                values.len(),
                labels.len(),
                feature_names.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite value at row {}, feature {}",
                pos / feature_names.len(),
                pos % feature_names.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidDataset(format!("label {bad} is not 0 or 1")));
        }
        Ok(Self {
            feature_names,
            values,
            labels,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.n_features();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n_features())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - ones, ones]
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.n_features());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            feature_names: self.feature_names.clone(),
            values,
            labels,
        }
    }

    /// Seeded subsample of at most `k` rows without replacement, kept in
    /// original row order. Returns a clone when `k >= n_rows`.
    pub fn sample_rows(&self, k: usize, seed: u64) -> Self {
        if k >= self.n_rows() {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, self.n_rows(), k).into_vec();
        picked.sort_unstable();
        self.subset(&picked)
    }
}

fn validate_names(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for (i, name) in names.iter().enumerate() {
        if name.is_empty() {
            return Err(Error::EmptyColumnName(i));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateColumn(name.clone()));
        }
    }
    Ok(())
}

/// Reads a CSV file, splitting off `label_column` as the binary target.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<TabularDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column)
}

pub fn read_csv<R: Read>(reader: R, label_column: &str) -> Result<TabularDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::MissingHeader);
    }
    let columns: Vec<String> = header.iter().map(str::to_string).collect();
    validate_names(&columns)?;
    let label_pos = columns
        .iter()
        .position(|c| c == label_column)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_string()))?;
    let feature_names: Vec<String> = columns
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_pos)
        .map(|(_, c)| c.clone())
        .collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        // header is row 1; fall back to a counter when the reader has no position
        let row = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(labels.len() + 2);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != columns.len() {
            return Err(Error::RaggedRow {
                row,
                expected: columns.len(),
                found: record.len(),
            });
        }
        for (i, cell) in record.iter().enumerate() {
            if i == label_pos {
                labels.push(parse_label(cell).ok_or_else(|| Error::InvalidLabel {
                    row,
                    column: columns[i].clone(),
                    value: cell.to_string(),
                })?);
            } else {
                let v = cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::InvalidCell {
                        row,
                        column: columns[i].clone(),
                        value: cell.to_string(),
                    })?;
                values.push(v);
            }
        }
    }
    TabularDataset::from_flat(feature_names, values, labels)
}

fn parse_label(cell: &str) -> Option<u8> {
    let v = cell.parse::<f64>().ok()?;
    if v == 0.0 {
        Some(0)
    } else if v == 1.0 {
        Some(1)
    } else {
        None
    }
}

/// Five-number summary plus mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FeatureSummary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        // summing in sorted order keeps the result independent of row order
        let mean = sorted.iter().sum::<f64>() / n;
        let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let min = sorted[0];
        let max = sorted[sorted.len() - 1];
        Ok(Self {
            mean,
            std: if min == max { 0.0 } else { var.sqrt() },
            min,
            q1: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q3: quantile_sorted(&sorted, 0.75),
            max,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub feature_names: Vec<String>,
    pub features: Vec<FeatureSummary>,
}

impl FeatureStats {
    pub fn get(&self, name: &str) -> Option<&FeatureSummary> {
        let i = self.feature_names.iter().position(|n| n == name)?;
        self.features.get(i)
    }
}

pub fn compute_stats(data: &TabularDataset) -> Result<FeatureStats> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let features = (0..data.n_features())
        .map(|j| FeatureSummary::of(&data.column(j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureStats {
        feature_names: data.feature_names().to_vec(),
        features,
    })
}

/// Quantile of ascending `sorted` by linear interpolation between the
/// closest ranks (position `q * (n - 1)`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.3,
            seed: 42,
            stratified: true,
        }
    }
}

/// Train/test partition. Index vectors refer to rows of the input dataset and
/// are ascending, so each partition keeps the original row order.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: TabularDataset,
    pub test: TabularDataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

pub fn split(data: &TabularDataset, spec: &SplitSpec) -> Result<Split> {
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::InvalidSplit(format!(
            "need at least 2 rows, got {n}"
        )));
    }
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::InvalidSplit(format!(
            "test_fraction {} is not in (0, 1)",
            spec.test_fraction
        )));
    }
    let n_test = (n as f64 * spec.test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::InvalidSplit(format!(
            "test_fraction {} leaves an empty partition for {n} rows",
            spec.test_fraction
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut test_indices = if spec.stratified {
        let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (i, &l) in data.labels().iter().enumerate() {
            by_class[l as usize].push(i);
        }
        let quotas = stratified_quotas([by_class[0].len(), by_class[1].len()], n_test);
        let mut picked = Vec::with_capacity(n_test);
        for (members, quota) in by_class.iter_mut().zip(quotas) {
            members.shuffle(&mut rng);
            picked.extend_from_slice(&members[..quota]);
        }
        picked
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all.truncate(n_test);
        all
    };
    test_indices.sort_unstable();

    let mut in_test = vec![false; n];
    for &i in &test_indices {
        in_test[i] = true;
    }
    let train_indices: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
    Ok(Split {
        train: data.subset(&train_indices),
        test: data.subset(&test_indices),
        train_indices,
        test_indices,
    })
}

/// Per-class test counts summing to `n_test`: floor of the proportional share
/// with the remainder going to the larger fractional part (class 0 on ties),
/// then clamped so every class with at least two rows lands on both sides of
/// the split whenever that is feasible.
fn stratified_quotas(counts: [usize; 2], n_test: usize) -> [usize; 2] {
    let n = counts[0] + counts[1];
    let exact0 = counts[0] as f64 * n_test as f64 / n as f64;
    let exact1 = counts[1] as f64 * n_test as f64 / n as f64;
    let mut q0 = exact0.floor() as usize;
    let q1 = exact1.floor() as usize;
    if q0 + q1 < n_test && exact1.fract() <= exact0.fract() {
        q0 += 1;
    }

    let bounds = |c: usize| {
        if counts[c] >= 2 {
            (1, counts[c] - 1)
        } else {
            (0, counts[c])
        }
    };
    let (lo0, hi0) = bounds(0);
    let (lo1, hi1) = bounds(1);
    let lower = lo0.max(n_test.saturating_sub(hi1));
    let upper = hi0.min(n_test.saturating_sub(lo1));
    if lower <= upper {
        q0 = q0.clamp(lower, upper);
    }
    [q0, n_test - q0]
}
