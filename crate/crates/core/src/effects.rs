//! Partial dependence, individual conditional expectation and first-order
//! accumulated local effects.
//!
//! Every average runs over rows in index order so that the PDP and the mean
//! of the ICE curves agree bit for bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{quantile_sorted, TabularDataset};
use crate::error::{Error, Result};
use crate::model::{check_class, Classifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridStrategy {
    /// Evenly spaced over `[min, max]`.
    Uniform,
    /// Empirical quantiles at evenly spaced probabilities. Repeated values
    /// are kept so every grid has exactly `resolution` points.
    Quantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub features: Vec<usize>,
    pub resolution: usize,
    pub strategy: GridStrategy,
}

impl GridSpec {
    pub fn one(feature: usize, resolution: usize, strategy: GridStrategy) -> Self {
        Self {
            features: vec![feature],
            resolution,
            strategy,
        }
    }

    pub fn two(a: usize, b: usize, resolution: usize, strategy: GridStrategy) -> Self {
        Self {
            features: vec![a, b],
            resolution,
            strategy,
        }
    }

    fn validate(&self, n_features: usize, arity: usize) -> Result<()> {
        if self.features.len() != arity {
            return Err(Error::InvalidArgument(format!(
                "grid has {} features, expected {arity}",
                self.features.len()
            )));
        }
        if self.resolution < 2 {
            return Err(Error::InvalidArgument(
                "grid resolution must be at least 2".into(),
            ));
        }
        if arity == 2 && self.features[0] == self.features[1] {
            return Err(Error::InvalidArgument(
                "2-D grid needs two distinct features".into(),
            ));
        }
        for &f in &self.features {
            if f >= n_features {
                return Err(Error::FeatureIndex {
                    index: f,
                    n_features,
                });
            }
        }
        Ok(())
    }
}

/// Grid over `column` with `resolution` points.
pub fn grid_values(column: &[f64], resolution: usize, strategy: GridStrategy) -> Vec<f64> {
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let last = (resolution - 1) as f64;
    (0..resolution)
        .map(|k| {
            let t = k as f64 / last;
            match strategy {
                GridStrategy::Uniform if k + 1 == resolution => hi,
                GridStrategy::Uniform => lo + t * (hi - lo),
                GridStrategy::Quantile => quantile_sorted(&sorted, t),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpCurve {
    pub feature: usize,
    pub feature_name: String,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub n_background: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IceBundle {
    pub feature: usize,
    pub feature_name: String,
    pub grid: Vec<f64>,
    /// One curve per background row, in row order.
    pub curves: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpSurface {
    pub features: [usize; 2],
    pub feature_names: [String; 2],
    pub grid_a: Vec<f64>,
    pub grid_b: Vec<f64>,
    /// `values[i][k]` is the estimate at `(grid_a[i], grid_b[k])`.
    pub values: Vec<Vec<f64>>,
    pub n_background: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AleCurve {
    pub feature: usize,
    pub feature_name: String,
    /// Bin edges, strictly increasing.
    pub edges: Vec<f64>,
    /// Centered accumulated effect at each edge.
    pub values: Vec<f64>,
    /// Rows per bin; `counts.len() == edges.len() - 1`.
    pub counts: Vec<usize>,
    /// Bins with no rows, which contribute zero effect.
    pub empty_bins: Vec<usize>,
}

impl AleCurve {
    /// Linear interpolation of the curve at `x`, clamped to the edge range.
    pub fn interpolate(&self, x: f64) -> f64 {
        interpolate(&self.edges, &self.values, x)
    }
}

fn interpolate(edges: &[f64], values: &[f64], x: f64) -> f64 {
    let k = bin_of(edges, x);
    let (lo, hi) = (edges[k], edges[k + 1]);
    let t = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
    values[k] + t * (values[k + 1] - values[k])
}

/// Bin index for `x` given strictly increasing edges; the first bin includes
/// its lower edge and values on an interior edge go to the lower bin.
fn bin_of(edges: &[f64], x: f64) -> usize {
    let nb = edges.len() - 1;
    edges[1..nb].partition_point(|&e| e < x)
}

fn check_inputs<M: Classifier + ?Sized>(
    model: &M,
    data: &TabularDataset,
    class_index: usize,
) -> Result<()> {
    check_class(class_index)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if model.n_features() != data.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            found: data.n_features(),
        });
    }
    Ok(())
}

/// Model output for every background row with `feature` set to `value`.
fn column_sweep<M: Classifier + ?Sized>(
    model: &M,
    background: &TabularDataset,
    feature: usize,
    value: f64,
    class_index: usize,
) -> Vec<f64> {
    let mut buf = vec![0.0; background.n_features()];
    background
        .rows()
        .map(|row| {
            buf.copy_from_slice(row);
            buf[feature] = value;
            model.proba(&buf)[class_index]
        })
        .collect()
}

fn mean_in_order(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    sum / n as f64
}

/// PDP of one feature on an explicit grid.
pub fn pdp_on_grid<M: Classifier + ?Sized>(
    model: &M,
    background: &TabularDataset,
    feature: usize,
    grid: &[f64],
    class_index: usize,
) -> Result<PdpCurve> {
    check_inputs(model, background, class_index)?;
    if feature >= background.n_features() {
        return Err(Error::FeatureIndex {
            index: feature,
            n_features: background.n_features(),
        });
    }
    let n = background.n_rows();
    let values = grid
        .par_iter()
        .map(|&g| {
            mean_in_order(
                column_sweep(model, background, feature, g, class_index).into_iter(),
                n,
            )
        })
        .collect();
    Ok(PdpCurve {
        feature,
        feature_name: background.feature_names()[feature].clone(),
        grid: grid.to_vec(),
        values,
        n_background: n,
    })
}

pub fn pdp<M: Classifier + ?Sized>(
    model: &M,
    background: &TabularDataset,
    grid: &GridSpec,
    class_index: usize,
) -> Result<PdpCurve> {
    grid.validate(background.n_features(), 1)?;
    check_inputs(model, background, class_index)?;
    let feature = grid.features[0];
    let values = grid_values(&background.column(feature), grid.resolution, grid.strategy);
    pdp_on_grid(model, background, feature, &values, class_index)
}

pub fn ice<M: Classifier + ?Sized>(
    model: &M,
    background: &TabularDataset,
    grid: &GridSpec,
    class_index: usize,
) -> Result<IceBundle> {
    grid.validate(background.n_features(), 1)?;
    check_inputs(model, background, class_index)?;
    let feature = grid.features[0];
    let values = grid_values(&background.column(feature), grid.resolution, grid.strategy);
    let n = background.n_rows();
    // by_grid[g][r], then transposed to one curve per row
    let by_grid: Vec<Vec<f64>> = values
        .par_iter()
        .map(|&g| column_sweep(model, background, feature, g, class_index))
        .collect();
    let mean = by_grid
        .iter()
        .map(|col| mean_in_order(col.iter().copied(), n))
        .collect();
    let curves = (0..n)
        .map(|r| by_grid.iter().map(|col| col[r]).collect())
        .collect();
    Ok(IceBundle {
        feature,
        feature_name: background.feature_names()[feature].clone(),
        grid: values,
        curves,
        mean,
    })
}

pub fn pdp_2d<M: Classifier + ?Sized>(
    model: &M,
    background: &TabularDataset,
    grid: &GridSpec,
    class_index: usize,
) -> Result<PdpSurface> {
    grid.validate(background.n_features(), 2)?;
    check_inputs(model, background, class_index)?;
    let (a, b) = (grid.features[0], grid.features[1]);
    let grid_a = grid_values(&background.column(a), grid.resolution, grid.strategy);
    let grid_b = grid_values(&background.column(b), grid.resolution, grid.strategy);
    let n = background.n_rows();
    let values = grid_a
        .par_iter()
        .map(|&ga| {
            let mut buf = vec![0.0; background.n_features()];
            grid_b
                .iter()
                .map(|&gb| {
                    let outputs = background.rows().map(|row| {
                        buf.copy_from_slice(row);
                        buf[a] = ga;
                        buf[b] = gb;
                        model.proba(&buf)[class_index]
                    });
                    mean_in_order(outputs, n)
                })
                .collect()
        })
        .collect();
    let names = background.feature_names();
    Ok(PdpSurface {
        features: [a, b],
        feature_names: [names[a].clone(), names[b].clone()],
        grid_a,
        grid_b,
        values,
        n_background: n,
    })
}

/// First-order ALE over `n_bins` quantile bins. Coinciding quantiles are
/// merged, so the curve may have fewer bins than requested.
pub fn ale<M: Classifier + ?Sized>(
    model: &M,
    data: &TabularDataset,
    feature: usize,
    n_bins: usize,
    class_index: usize,
) -> Result<AleCurve> {
    check_inputs(model, data, class_index)?;
    if feature >= data.n_features() {
        return Err(Error::FeatureIndex {
            index: feature,
            n_features: data.n_features(),
        });
    }
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be at least 1".into()));
    }
    let name = data.feature_names()[feature].clone();
    let column = data.column(feature);
    let mut sorted = column.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::ConstantFeature(name));
    }
    let mut edges: Vec<f64> = (0..=n_bins)
        .map(|k| quantile_sorted(&sorted, k as f64 / n_bins as f64))
        .collect();
    edges.dedup();
    let nb = edges.len() - 1;

    let bins: Vec<usize> = column.iter().map(|&x| bin_of(&edges, x)).collect();
    let mut counts = vec![0usize; nb];
    for &k in &bins {
        counts[k] += 1;
    }
    let diffs: Vec<f64> = data
        .rows()
        .zip(&bins)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(row, &k)| {
            let mut buf = row.to_vec();
            buf[feature] = edges[k + 1];
            let hi = model.proba(&buf)[class_index];
            buf[feature] = edges[k];
            hi - model.proba(&buf)[class_index]
        })
        .collect();
    let mut sums = vec![0.0; nb];
    for (&k, d) in bins.iter().zip(&diffs) {
        sums[k] += d;
    }

    let mut accumulated = vec![0.0; nb + 1];
    let mut empty_bins = Vec::new();
    for k in 0..nb {
        let effect = if counts[k] == 0 {
            empty_bins.push(k);
            0.0
        } else {
            sums[k] / counts[k] as f64
        };
        accumulated[k + 1] = accumulated[k] + effect;
    }
    let offset = mean_in_order(
        column.iter().map(|&x| interpolate(&edges, &accumulated, x)),
        column.len(),
    );
    let values = accumulated.iter().map(|v| v - offset).collect();
    Ok(AleCurve {
        feature,
        feature_name: name,
        edges,
        values,
        counts,
        empty_bins,
    })
}
