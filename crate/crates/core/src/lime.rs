//! Local surrogate explanations over quartile-discretized features.
//!
//! Each feature is cut at its training quartiles. Perturbations pick a bin
//! per feature uniformly and draw an observed training value from that bin;
//! the interpretable representation records, per feature, whether the draw
//! landed in the explained instance's bin. A kernel-weighted ridge regression
//! of the black-box probability on those bits yields one weight per rule.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{compute_stats, FeatureStats, TabularDataset};
use crate::error::{Error, Result};
use crate::model::{check_class, check_instance, Classifier};

/// Quartile bin edges per feature. Repeated quartiles collapse into a single
/// edge; a constant feature has no edges and a single bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub feature_names: Vec<String>,
    pub edges: Vec<Vec<f64>>,
}

pub fn build_discretizer(stats: &FeatureStats) -> Discretizer {
    let edges = stats
        .features
        .iter()
        .map(|s| {
            if s.min == s.max {
                return Vec::new();
            }
            let mut e = vec![s.q1, s.median, s.q3];
            e.dedup();
            e
        })
        .collect();
    Discretizer {
        feature_names: stats.feature_names.clone(),
        edges,
    }
}

impl Discretizer {
    pub fn n_features(&self) -> usize {
        self.edges.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.edges[feature].len() + 1
    }

    /// Index of the first bin whose upper edge is `>= value`.
    pub fn bin(&self, feature: usize, value: f64) -> usize {
        self.edges[feature].partition_point(|&e| e < value)
    }

    /// Human-readable rule for `bin`, thresholds to two decimals.
    pub fn rule(&self, feature: usize, bin: usize, value: f64) -> String {
        let name = &self.feature_names[feature];
        let edges = &self.edges[feature];
        if edges.is_empty() {
            return format!("{name} <= {value:.2}");
        }
        if bin == 0 {
            format!("{name} <= {:.2}", edges[0])
        } else if bin == edges.len() {
            format!("{name} > {:.2}", edges[bin - 1])
        } else {
            format!("{:.2} < {name} <= {:.2}", edges[bin - 1], edges[bin])
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSample {
    /// `bits[j]` is true when feature `j` falls in the instance's bin.
    pub bits: Vec<bool>,
    pub values: Vec<f64>,
    pub weight: f64,
}

/// Default kernel width `0.75 * sqrt(M)`.
pub fn default_kernel_width(n_features: usize) -> f64 {
    0.75 * (n_features as f64).sqrt()
}

/// `exp(-d^2 / width^2)` where `d` is the number of zero bits.
pub fn kernel_weight_with_width(bits: &[bool], width: f64) -> f64 {
    let d = bits.iter().filter(|b| !**b).count() as f64;
    (-(d * d) / (width * width)).exp()
}

pub fn kernel_weight(bits: &[bool]) -> f64 {
    kernel_weight_with_width(bits, default_kernel_width(bits.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimeParams {
    pub n_samples: usize,
    /// Number of rules reported.
    pub n_rules: usize,
    /// `None` means `0.75 * sqrt(M)`.
    pub kernel_width: Option<f64>,
    pub ridge_lambda: f64,
    pub seed: u64,
}

impl Default for LimeParams {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            n_rules: 8,
            kernel_width: None,
            ridge_lambda: 1.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeRule {
    pub feature: String,
    pub rule: String,
    /// The explained instance's value for this feature.
    pub value: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeExplanation {
    pub class_index: usize,
    /// Black-box probability of `class_index` at the instance.
    pub probability: f64,
    pub intercept: f64,
    /// Kernel-weighted R^2 of the surrogate on the perturbation set.
    pub r2: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Sorted by absolute weight, largest first.
    pub rules: Vec<LimeRule>,
}

impl LimeExplanation {
    pub fn rule_for(&self, feature: &str) -> Option<&LimeRule> {
        self.rules.iter().find(|r| r.feature == feature)
    }

    pub fn to_json(&self) -> Value {
        let rules: Vec<Value> = self
            .rules
            .iter()
            .map(|r| json!({"feature": r.feature, "rule": r.rule, "value": r.value, "weight": r.weight}))
            .collect();
        json!({
            "class_index": self.class_index,
            "probability": self.probability,
            "intercept": self.intercept,
            "r2": self.r2,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "rules": rules,
        })
    }
}

/// Explainer state derived from the training data: quartile discretizer and
/// the observed training values of each bin.
#[derive(Debug, Clone)]
pub struct TabularLime {
    discretizer: Discretizer,
    bin_values: Vec<Vec<Vec<f64>>>,
}

impl TabularLime {
    pub fn new(train: &TabularDataset) -> Result<Self> {
        let stats = compute_stats(train)?;
        Ok(Self::with_stats(train, &stats))
    }

    pub fn with_stats(train: &TabularDataset, stats: &FeatureStats) -> Self {
        let discretizer = build_discretizer(stats);
        let bin_values = (0..train.n_features())
            .map(|j| {
                let mut bins = vec![Vec::new(); discretizer.n_bins(j)];
                for row in train.rows() {
                    bins[discretizer.bin(j, row[j])].push(row[j]);
                }
                bins
            })
            .collect();
        Self {
            discretizer,
            bin_values,
        }
    }

    pub fn discretizer(&self) -> &Discretizer {
        &self.discretizer
    }

    fn n_features(&self) -> usize {
        self.discretizer.n_features()
    }

    /// `n` perturbations around `instance`; the first is the instance itself.
    pub fn sample_perturbations(
        &self,
        instance: &[f64],
        n: usize,
        seed: u64,
        kernel_width: f64,
    ) -> Result<Vec<PerturbationSample>> {
        let m = self.n_features();
        check_instance(m, instance)?;
        if n < m + 2 {
            return Err(Error::InvalidArgument(format!(
                "n_samples {n} is below M + 2 = {}",
                m + 2
            )));
        }
        let own_bins: Vec<usize> = (0..m)
            .map(|j| self.discretizer.bin(j, instance[j]))
            .collect();
        let occupied: Vec<Vec<usize>> = self
            .bin_values
            .iter()
            .map(|bins| (0..bins.len()).filter(|&b| !bins[b].is_empty()).collect())
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::with_capacity(n);
        samples.push(PerturbationSample {
            bits: vec![true; m],
            values: instance.to_vec(),
            weight: 1.0,
        });
        for _ in 1..n {
            let mut values = Vec::with_capacity(m);
            let mut bits = Vec::with_capacity(m);
            for j in 0..m {
                let bin = occupied[j][rng.random_range(0..occupied[j].len())];
                let pool = &self.bin_values[j][bin];
                values.push(pool[rng.random_range(0..pool.len())]);
                bits.push(bin == own_bins[j]);
            }
            let weight = kernel_weight_with_width(&bits, kernel_width);
            samples.push(PerturbationSample {
                bits,
                values,
                weight,
            });
        }
        Ok(samples)
    }

    pub fn explain<M: Classifier + ?Sized>(
        &self,
        model: &M,
        instance: &[f64],
        class_index: usize,
        params: &LimeParams,
    ) -> Result<LimeExplanation> {
        check_class(class_index)?;
        let m = self.n_features();
        if model.n_features() != m {
            return Err(Error::DimensionMismatch {
                expected: model.n_features(),
                found: m,
            });
        }
        if params.n_rules > m {
            return Err(Error::InvalidArgument(format!(
                "n_rules {} exceeds {m} features",
                params.n_rules
            )));
        }
        let width = params
            .kernel_width
            .unwrap_or_else(|| default_kernel_width(m));
        let samples = self.sample_perturbations(instance, params.n_samples, params.seed, width)?;
        let targets: Vec<f64> = samples
            .par_iter()
            .map(|s| model.proba(&s.values)[class_index])
            .collect();
        let fit = weighted_ridge(&samples, &targets, params.ridge_lambda)?;

        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            fit.coefficients[b]
                .abs()
                .total_cmp(&fit.coefficients[a].abs())
        });
        let rules = order
            .into_iter()
            .take(params.n_rules)
            .map(|j| {
                let bin = self.discretizer.bin(j, instance[j]);
                LimeRule {
                    feature: self.discretizer.feature_names[j].clone(),
                    rule: self.discretizer.rule(j, bin, instance[j]),
                    value: instance[j],
                    weight: fit.coefficients[j],
                }
            })
            .collect();

        Ok(LimeExplanation {
            class_index,
            probability: targets[0],
            intercept: fit.intercept,
            r2: fit.r2,
            n_samples: params.n_samples,
            seed: params.seed,
            rules,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub r2: f64,
}

/// Weighted ridge regression of `targets` on the samples' bits with an
/// unpenalised intercept, solved on weighted-centered data.
pub fn weighted_ridge(
    samples: &[PerturbationSample],
    targets: &[f64],
    lambda: f64,
) -> Result<RidgeFit> {
    let m = samples.first().map_or(0, |s| s.bits.len());
    let total_w: f64 = samples.iter().map(|s| s.weight).sum();
    let x_mean: Vec<f64> = (0..m)
        .map(|j| {
            samples
                .iter()
                .map(|s| s.weight * f64::from(u8::from(s.bits[j])))
                .sum::<f64>()
                / total_w
        })
        .collect();
    let y_mean = samples
        .iter()
        .zip(targets)
        .map(|(s, y)| s.weight * y)
        .sum::<f64>()
        / total_w;

    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    let mut centered = vec![0.0; m];
    for (s, &y) in samples.iter().zip(targets) {
        for (j, c) in centered.iter_mut().enumerate() {
            *c = f64::from(u8::from(s.bits[j])) - x_mean[j];
        }
        let yc = y - y_mean;
        for i in 0..m {
            rhs[i] += s.weight * centered[i] * yc;
            for j in i..m {
                gram[(i, j)] += s.weight * centered[i] * centered[j];
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
        gram[(i, i)] += lambda;
    }
    let beta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram.lu().solve(&rhs).ok_or(Error::SingularSystem)?,
    };
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean
        - coefficients
            .iter()
            .zip(&x_mean)
            .map(|(b, x)| b * x)
            .sum::<f64>();

    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (s, &y) in samples.iter().zip(targets) {
        let pred = intercept
            + s.bits
                .iter()
                .zip(&coefficients)
                .filter(|(b, _)| **b)
                .map(|(_, c)| c)
                .sum::<f64>();
        ss_res += s.weight * (y - pred) * (y - pred);
        ss_tot += s.weight * (y - y_mean) * (y - y_mean);
    }
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= f64::EPSILON {
        1.0
    } else {
        0.0
    };
    Ok(RidgeFit {
        intercept,
        coefficients,
        r2,
    })
}
