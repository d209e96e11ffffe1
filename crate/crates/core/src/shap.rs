//! Shapley-value attribution of a classifier's class probability.
//!
//! The value of a coalition `S` is the interventional expectation
//! `v(S) = mean_b f(x_S, b_rest)` over background rows `b`. Attributions are
//! computed exactly by enumerating all `2^M` coalitions, or approximately by
//! a Shapley-kernel weighted least-squares fit over sampled coalitions.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::model::{check_class, check_instance, Classifier};

/// Exact enumeration evaluates `2^M` coalitions.
pub const MAX_EXACT_FEATURES: usize = 20;
/// Sampled coalitions are stored as `u64` masks.
pub const MAX_SAMPLED_FEATURES: usize = 64;

/// One explanation target: an instance, the reference distribution it is
/// compared against, and which class probability is attributed.
#[derive(Debug, Clone, Copy)]
pub struct AttributionRequest<'a> {
    pub instance: &'a [f64],
    pub background: &'a TabularDataset,
    pub class_index: usize,
}

impl<'a> AttributionRequest<'a> {
    pub fn new(
        instance: &'a [f64],
        background: &'a TabularDataset,
        class_index: usize,
    ) -> Result<Self> {
        if background.is_empty() {
            return Err(Error::EmptyDataset);
        }
        check_instance(background.n_features(), instance)?;
        check_class(class_index)?;
        Ok(Self {
            instance,
            background,
            class_index,
        })
    }

    fn n_features(&self) -> usize {
        self.instance.len()
    }

    fn check_model<M: Classifier + ?Sized>(&self, model: &M) -> Result<()> {
        if model.n_features() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: model.n_features(),
                found: self.n_features(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapMethod {
    Exact,
    Sampled,
}

impl ShapMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ShapMethod::Exact => "exact",
            ShapMethod::Sampled => "sampled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyExplanation {
    pub method: ShapMethod,
    pub class_index: usize,
    /// Mean model output over the background, `v(empty)`.
    pub base_value: f64,
    /// Model output for the instance, `v(all)`.
    pub prediction: f64,
    pub feature_names: Vec<String>,
    pub instance: Vec<f64>,
    pub attributions: Vec<f64>,
}

impl ShapleyExplanation {
    /// `base_value + sum(attributions) - prediction`.
    pub fn efficiency_residual(&self) -> f64 {
        self.base_value + self.attributions.iter().sum::<f64>() - self.prediction
    }

    pub fn attribution(&self, feature: &str) -> Option<f64> {
        let i = self.feature_names.iter().position(|n| n == feature)?;
        Some(self.attributions[i])
    }

    pub fn to_json(&self) -> Value {
        let named = |values: &[f64]| {
            let map: Map<String, Value> = self
                .feature_names
                .iter()
                .zip(values)
                .map(|(n, v)| (n.clone(), json!(v)))
                .collect();
            Value::Object(map)
        };
        json!({
            "method": self.method.as_str(),
            "class_index": self.class_index,
            "base_value": self.base_value,
            "prediction": self.prediction,
            "instance": named(&self.instance),
            "attributions": named(&self.attributions),
        })
    }
}

fn mask_of(coalition: &[usize], n_features: usize) -> Result<u64> {
    let mut mask = 0u64;
    for &i in coalition {
        if i >= n_features || i >= MAX_SAMPLED_FEATURES {
            return Err(Error::FeatureIndex {
                index: i,
                n_features,
            });
        }
        mask |= 1 << i;
    }
    Ok(mask)
}

fn compose(instance: &[f64], background: &[f64], mask: u64, out: &mut [f64]) {
    for (j, slot) in out.iter_mut().enumerate() {
        *slot = if mask >> j & 1 == 1 {
            instance[j]
        } else {
            background[j]
        };
    }
}

fn masked_value<M: Classifier + ?Sized>(
    model: &M,
    instance: &[f64],
    background: &TabularDataset,
    class_index: usize,
    mask: u64,
) -> f64 {
    let mut row = vec![0.0; instance.len()];
    let mut sum = 0.0;
    for b in background.rows() {
        compose(instance, b, mask, &mut row);
        sum += model.proba(&row)[class_index];
    }
    sum / background.n_rows() as f64
}

/// `v(S)`: the mean class probability over background rows with the features
/// in `coalition` taken from the instance.
pub fn coalition_value<M: Classifier + ?Sized>(
    model: &M,
    req: &AttributionRequest<'_>,
    coalition: &[usize],
) -> Result<f64> {
    req.check_model(model)?;
    let mask = mask_of(coalition, req.n_features())?;
    Ok(masked_value(
        model,
        req.instance,
        req.background,
        req.class_index,
        mask,
    ))
}

/// `v(S)` for all `2^M` coalitions by evaluating every composed row.
pub fn composed_coalition_table<M: Classifier + ?Sized>(
    model: &M,
    instance: &[f64],
    background: &TabularDataset,
    class_index: usize,
) -> Vec<f64> {
    let m = instance.len();
    (0..1u64 << m)
        .map(|mask| masked_value(model, instance, background, class_index, mask))
        .collect()
}

/// Shapley weight `|S|! (M-|S|-1)! / M!` for each coalition size `|S|`.
fn shapley_weights(m: usize) -> Vec<f64> {
    // 1 / (M * C(M-1, s)), building the binomials incrementally
    let mut weights = Vec::with_capacity(m);
    let mut binom = 1.0f64;
    for s in 0..m {
        weights.push(1.0 / (m as f64 * binom));
        binom = binom * (m - 1 - s) as f64 / (s + 1) as f64;
    }
    weights
}

/// Exact Shapley values by full coalition enumeration.
pub fn exact_shapley<M: Classifier + ?Sized>(
    model: &M,
    req: &AttributionRequest<'_>,
) -> Result<ShapleyExplanation> {
    req.check_model(model)?;
    let m = req.n_features();
    if m > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures {
            n_features: m,
            limit: MAX_EXACT_FEATURES,
        });
    }
    let table = model.coalition_table(req.instance, req.background, req.class_index);
    let attributions = shapley_from_table(&table, m);
    Ok(ShapleyExplanation {
        method: ShapMethod::Exact,
        class_index: req.class_index,
        base_value: table[0],
        prediction: model.proba(req.instance)[req.class_index],
        feature_names: req.background.feature_names().to_vec(),
        instance: req.instance.to_vec(),
        attributions,
    })
}

/// `phi_i = sum_{S not containing i} w(|S|) (v(S + i) - v(S))`.
pub fn shapley_from_table(table: &[f64], m: usize) -> Vec<f64> {
    let weights = shapley_weights(m);
    let full = table.len() - 1;
    let mut phi = vec![0.0; m];
    for s in 0..full {
        let w = weights[s.count_ones() as usize];
        for (i, p) in phi.iter_mut().enumerate() {
            if s >> i & 1 == 0 {
                *p += w * (table[s | 1 << i] - table[s]);
            }
        }
    }
    phi
}

/// Kernel-weighted least-squares Shapley estimate.
///
/// When `n_coalitions >= 2^M` every proper non-empty coalition is used once
/// with its Shapley kernel weight `(M-1) / (C(M,s) s (M-s))`, which reproduces
/// the exact values. Otherwise coalitions are drawn in complementary pairs
/// from the normalised kernel (size `s` with probability proportional to
/// `1/(s(M-s))`, then a uniform subset of that size), each draw carrying unit
/// weight. The fit is constrained to pass through `v(empty)` and `v(all)`.
pub fn sampled_shapley<M: Classifier + ?Sized>(
    model: &M,
    req: &AttributionRequest<'_>,
    n_coalitions: usize,
    seed: u64,
) -> Result<ShapleyExplanation> {
    req.check_model(model)?;
    let m = req.n_features();
    if m > MAX_SAMPLED_FEATURES {
        return Err(Error::TooManyFeatures {
            n_features: m,
            limit: MAX_SAMPLED_FEATURES,
        });
    }
    if n_coalitions < m + 2 {
        return Err(Error::InvalidArgument(format!(
            "n_coalitions {n_coalitions} is below M + 2 = {}",
            m + 2
        )));
    }

    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut value = |mask: u64| {
        *cache.entry(mask).or_insert_with(|| {
            masked_value(model, req.instance, req.background, req.class_index, mask)
        })
    };
    let full = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
    let empty_value = value(0);
    let full_value = value(full);

    let samples = coalition_sample(m, n_coalitions, seed);
    let observations: Vec<(u64, f64, f64)> = samples
        .into_iter()
        .map(|(mask, w)| (mask, w, value(mask)))
        .collect();
    let attributions = constrained_wls(m, &observations, empty_value, full_value)?;

    Ok(ShapleyExplanation {
        method: ShapMethod::Sampled,
        class_index: req.class_index,
        base_value: empty_value,
        prediction: full_value,
        feature_names: req.background.feature_names().to_vec(),
        instance: req.instance.to_vec(),
        attributions,
    })
}

/// Shapley kernel weight of a coalition of size `s` among `m` features.
pub fn shapley_kernel(m: usize, s: usize) -> f64 {
    if s == 0 || s == m {
        return f64::INFINITY;
    }
    let mut binom = 1.0f64;
    for k in 0..s {
        binom = binom * (m - k) as f64 / (k + 1) as f64;
    }
    (m - 1) as f64 / (binom * s as f64 * (m - s) as f64)
}

/// Weighted coalition masks (excluding the empty and full coalitions).
fn coalition_sample(m: usize, n_coalitions: usize, seed: u64) -> Vec<(u64, f64)> {
    if m < 2 {
        return Vec::new();
    }
    let enumerate_all = m < 63 && n_coalitions as u128 >= 1u128 << m;
    if enumerate_all {
        return (1..(1u64 << m) - 1)
            .map(|mask| (mask, shapley_kernel(m, mask.count_ones() as usize)))
            .collect();
    }

    let size_weights: Vec<f64> = (1..m).map(|s| 1.0 / (s as f64 * (m - s) as f64)).collect();
    let total: f64 = size_weights.iter().sum();
    let full = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: HashMap<u64, f64> = HashMap::new();
    let mut order = Vec::new();
    let mut drawn = 0;
    while drawn < n_coalitions {
        let mut u = rng.random::<f64>() * total;
        let mut size = m - 1;
        for (k, w) in size_weights.iter().enumerate() {
            if u < *w {
                size = k + 1;
                break;
            }
            u -= w;
        }
        let mut mask = 0u64;
        for j in index::sample(&mut rng, m, size) {
            mask |= 1 << j;
        }
        for z in [mask, full & !mask] {
            if drawn == n_coalitions {
                break;
            }
            let c = counts.entry(z).or_insert_with(|| {
                order.push(z);
                0.0
            });
            *c += 1.0;
            drawn += 1;
        }
    }
    order.into_iter().map(|z| (z, counts[&z])).collect()
}

/// Solves `min sum_z w_z (v(z) - v0 - z.phi)^2` subject to
/// `sum(phi) = v_full - v0` by eliminating the last coefficient.
fn constrained_wls(m: usize, obs: &[(u64, f64, f64)], v0: f64, v_full: f64) -> Result<Vec<f64>> {
    let delta = v_full - v0;
    if m == 1 {
        return Ok(vec![delta]);
    }
    let k = m - 1;
    let last = m - 1;
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    let mut row = vec![0.0; k];
    for &(mask, w, v) in obs {
        let z_last = (mask >> last & 1) as f64;
        for (i, r) in row.iter_mut().enumerate() {
            *r = (mask >> i & 1) as f64 - z_last;
        }
        let target = v - v0 - z_last * delta;
        for i in 0..k {
            if row[i] == 0.0 {
                continue;
            }
            rhs[i] += w * row[i] * target;
            for j in 0..k {
                gram[(i, j)] += w * row[i] * row[j];
            }
        }
    }
    let solution = gram.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let mut phi: Vec<f64> = solution.iter().copied().collect();
    let rest: f64 = phi.iter().sum();
    phi.push(delta - rest);
    Ok(phi)
}

/// Mean absolute attribution per feature, most important first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub entries: Vec<(String, f64)>,
}

impl GlobalImportance {
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == feature)
    }
}

pub fn global_importance(explanations: &[ShapleyExplanation]) -> Result<GlobalImportance> {
    let first = explanations.first().ok_or(Error::EmptyDataset)?;
    let m = first.attributions.len();
    let mut sums = vec![0.0; m];
    for e in explanations {
        if e.attributions.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: e.attributions.len(),
            });
        }
        for (s, a) in sums.iter_mut().zip(&e.attributions) {
            *s += a.abs();
        }
    }
    let n = explanations.len() as f64;
    let mut entries: Vec<(String, f64)> = first
        .feature_names
        .iter()
        .cloned()
        .zip(sums.into_iter().map(|s| s / n))
        .collect();
    // stable sort keeps feature order among ties
    entries.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(GlobalImportance { entries })
}

/// One beeswarm point: an attribution and where its feature value sits in the
/// background distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryPoint {
    pub feature: String,
    pub shap: f64,
    pub value: f64,
    pub percentile: f64,
}

/// Fraction of `sorted` values that are `<= v`.
fn empirical_cdf(sorted: &[f64], v: f64) -> f64 {
    sorted.partition_point(|&x| x <= v) as f64 / sorted.len() as f64
}

/// One point per (explanation, feature), in explanation-major order.
pub fn summary_points(
    explanations: &[ShapleyExplanation],
    background: &TabularDataset,
) -> Result<Vec<SummaryPoint>> {
    if background.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let columns: Vec<Vec<f64>> = (0..background.n_features())
        .map(|j| {
            let mut c = background.column(j);
            c.sort_by(f64::total_cmp);
            c
        })
        .collect();
    let mut points = Vec::with_capacity(explanations.len() * background.n_features());
    for e in explanations {
        if e.attributions.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: columns.len(),
                found: e.attributions.len(),
            });
        }
        for (j, column) in columns.iter().enumerate() {
            points.push(SummaryPoint {
                feature: e.feature_names[j].clone(),
                shap: e.attributions[j],
                value: e.instance[j],
                percentile: empirical_cdf(column, e.instance[j]),
            });
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceSeries {
    pub feature: String,
    /// `(raw feature value, attribution)`, ascending by value.
    pub points: Vec<(f64, f64)>,
}

impl DependenceSeries {
    /// Mean attribution over points whose value satisfies `pred`.
    pub fn mean_where(&self, pred: impl Fn(f64) -> bool) -> Option<f64> {
        let selected: Vec<f64> = self
            .points
            .iter()
            .filter(|p| pred(p.0))
            .map(|p| p.1)
            .collect();
        (!selected.is_empty()).then(|| selected.iter().sum::<f64>() / selected.len() as f64)
    }
}

pub fn dependence_series(
    explanations: &[ShapleyExplanation],
    feature: &str,
) -> Result<DependenceSeries> {
    let mut points = Vec::with_capacity(explanations.len());
    for e in explanations {
        let j = e
            .feature_names
            .iter()
            .position(|n| n == feature)
            .ok_or_else(|| Error::UnknownFeature(feature.to_string()))?;
        points.push((e.instance[j], e.attributions[j]));
    }
    if explanations.is_empty() {
        return Err(Error::EmptyDataset);
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(DependenceSeries {
        feature: feature.to_string(),
        points,
    })
}
