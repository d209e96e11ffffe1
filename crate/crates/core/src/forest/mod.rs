//! Random forest binary classifier built from CART trees.
//!
//! Each tree draws its randomness (bootstrap rows, candidate features) from
//! its own ChaCha stream keyed by `(seed, tree index)`, so a fitted forest is
//! identical whether trees are grown sequentially or in parallel.

mod report;
mod tree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::model::{check_instance, Classifier};

pub use report::{evaluate, ClassMetrics, ClassificationReport, ConfusionMatrix};
pub use tree::TreeNode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` means `ceil(sqrt(M))`, resolved at fit time.
    pub max_features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            max_features_per_split: None,
            bootstrap: true,
            seed: 42,
        }
    }
}

impl ForestParams {
    fn resolve(&self, n_features: usize) -> Result<Self> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParams("n_trees must be positive".into()));
        }
        if self.max_depth == Some(0) {
            return Err(Error::InvalidParams("max_depth must be positive".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidParams(
                "min_samples_leaf must be positive".into(),
            ));
        }
        let max_features = self
            .max_features_per_split
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize);
        if max_features == 0 || max_features > n_features {
            return Err(Error::InvalidParams(format!(
                "max_features_per_split {max_features} not in 1..={n_features}"
            )));
        }
        Ok(Self {
            max_features_per_split: Some(max_features),
            ..*self
        })
    }
}

/// A trained forest. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub feature_names: Vec<String>,
    pub trees: Vec<TreeNode>,
}

pub fn fit(train: &TabularDataset, params: &ForestParams) -> Result<ForestModel> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let [n0, n1] = train.class_counts();
    if n0 == 0 || n1 == 0 {
        return Err(Error::SingleClass);
    }
    let params = params.resolve(train.n_features())?;
    let columns: Vec<Vec<f64>> = (0..train.n_features()).map(|j| train.column(j)).collect();
    let labels = train.labels();
    let config = tree::TreeConfig {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: params.max_features_per_split.unwrap_or(1),
    };
    let n = train.n_rows();

    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(params.seed, t);
            let mut samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            tree::grow(&columns, labels, &mut samples, &config, &mut rng)
        })
        .collect();

    Ok(ForestModel {
        params,
        feature_names: train.feature_names().to_vec(),
        trees,
    })
}

fn tree_rng(seed: u64, tree_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree_index as u64);
    rng
}

impl ForestModel {
    /// Assembles a forest from explicit trees, validating feature indices and
    /// leaf distributions.
    pub fn from_trees(feature_names: Vec<String>, trees: Vec<TreeNode>) -> Result<Self> {
        let params = ForestParams {
            n_trees: trees.len(),
            max_features_per_split: Some(feature_names.len().max(1)),
            bootstrap: false,
            ..ForestParams::default()
        };
        let model = Self {
            params,
            feature_names,
            trees,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::InvalidParams("forest has no trees".into()));
        }
        for t in &self.trees {
            t.validate(self.feature_names.len())?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s)?;
        model.validate()?;
        Ok(model)
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict_proba(&self, instance: &[f64]) -> Result<[f64; 2]> {
        check_instance(self.n_features(), instance)?;
        Ok(self.proba(instance))
    }

    /// Argmax of [`ForestModel::predict_proba`]; an exact tie goes to class 0.
    pub fn predict_label(&self, instance: &[f64]) -> Result<u8> {
        Ok(label_of(self.predict_proba(instance)?))
    }
}

pub(crate) fn label_of(p: [f64; 2]) -> u8 {
    u8::from(p[1] > p[0])
}

impl Classifier for ForestModel {
    fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn proba(&self, row: &[f64]) -> [f64; 2] {
        let mut sum = [0.0, 0.0];
        for t in &self.trees {
            let p = t.predict(row);
            sum[0] += p[0];
            sum[1] += p[1];
        }
        let k = self.trees.len() as f64;
        [sum[0] / k, sum[1] / k]
    }

    /// Walks each tree once per background row, carrying the set of
    /// coalitions that reach each node. A split on feature `j` where the
    /// instance and the background row disagree sends coalitions containing
    /// `j` along the instance's branch and the rest along the background
    /// row's branch; every leaf then adds its value to exactly the
    /// coalitions consistent with the path.
    fn coalition_table(
        &self,
        instance: &[f64],
        background: &TabularDataset,
        class_index: usize,
    ) -> Vec<f64> {
        let m = self.n_features();
        assert!(
            m <= crate::shap::MAX_EXACT_FEATURES,
            "coalition table over {m} features"
        );
        let full: u32 = (1u32 << m) - 1;
        let mut table = vec![0.0; 1usize << m];
        for tree in &self.trees {
            for row in background.rows() {
                let mut walk = CoalitionWalk {
                    instance,
                    background: row,
                    class_index,
                    full,
                    table: &mut table,
                };
                walk.visit(tree, 0, 0);
            }
        }
        let scale = (self.trees.len() * background.n_rows()) as f64;
        for v in &mut table {
            *v /= scale;
        }
        table
    }
}

struct CoalitionWalk<'a> {
    instance: &'a [f64],
    background: &'a [f64],
    class_index: usize,
    full: u32,
    table: &'a mut [f64],
}

impl CoalitionWalk<'_> {
    fn visit(&mut self, node: &TreeNode, present: u32, absent: u32) {
        match node {
            TreeNode::Leaf { probabilities } => {
                let value = probabilities[self.class_index];
                let free = self.full & !(present | absent);
                let mut sub = free;
                loop {
                    self.table[(present | sub) as usize] += value;
                    if sub == 0 {
                        break;
                    }
                    sub = (sub - 1) & free;
                }
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let bit = 1u32 << feature;
                let x_left = self.instance[*feature] <= *threshold;
                let b_left = self.background[*feature] <= *threshold;
                let side = |go_left: bool| if go_left { left } else { right };
                if present & bit != 0 {
                    self.visit(side(x_left), present, absent);
                } else if absent & bit != 0 || x_left == b_left {
                    self.visit(side(b_left), present, absent);
                } else {
                    self.visit(side(x_left), present | bit, absent);
                    self.visit(side(b_left), present, absent | bit);
                }
            }
        }
    }
}
