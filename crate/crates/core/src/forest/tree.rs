//! CART classification trees with Gini impurity splits.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A node of a binary decision tree. Rows with `x[feature] <= threshold`
/// go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        #[serde(rename = "feature_index")]
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        #[serde(rename = "class_probabilities")]
        probabilities: [f64; 2],
    },
}

impl TreeNode {
    pub fn leaf(p1: f64) -> Self {
        TreeNode::Leaf {
            probabilities: [1.0 - p1, p1],
        }
    }

    pub fn split(feature: usize, threshold: f64, left: TreeNode, right: TreeNode) -> Self {
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn predict(&self, row: &[f64]) -> &[f64; 2] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { probabilities } => return probabilities,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Whether any split in the tree tests `feature`.
    pub fn uses_feature(&self, feature: usize) -> bool {
        match self {
            TreeNode::Leaf { .. } => false,
            TreeNode::Split {
                feature: f,
                left,
                right,
                ..
            } => *f == feature || left.uses_feature(feature) || right.uses_feature(feature),
        }
    }

    pub(crate) fn validate(&self, n_features: usize) -> Result<()> {
        match self {
            TreeNode::Leaf {
                probabilities: [p0, p1],
            } => {
                let ok = *p0 >= 0.0 && *p1 >= 0.0 && ((p0 + p1) - 1.0).abs() <= 1e-12;
                if ok {
                    Ok(())
                } else {
                    Err(Error::InvalidParams(format!(
                        "leaf probabilities ({p0}, {p1}) are not a distribution"
                    )))
                }
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if *feature >= n_features {
                    return Err(Error::FeatureIndex {
                        index: *feature,
                        n_features,
                    });
                }
                if !threshold.is_finite() {
                    return Err(Error::InvalidParams("non-finite split threshold".into()));
                }
                left.validate(n_features)?;
                right.validate(n_features)
            }
        }
    }
}

pub(crate) struct TreeConfig {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: usize,
}

/// Grows one tree over `samples` (row indices into `columns`, repeats allowed
/// for bootstrap draws).
pub(crate) fn grow<R: Rng>(
    columns: &[Vec<f64>],
    labels: &[u8],
    samples: &mut [usize],
    config: &TreeConfig,
    rng: &mut R,
) -> TreeNode {
    let mut features: Vec<usize> = (0..columns.len()).collect();
    let mut scratch = Vec::with_capacity(samples.len());
    grow_node(
        columns,
        labels,
        samples,
        0,
        config,
        rng,
        &mut features,
        &mut scratch,
    )
}

#[derive(Clone, Copy)]
struct Candidate {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        self.score > other.score
            || (self.score == other.score
                && (self.feature, self.threshold) < (other.feature, other.threshold))
    }
}

#[allow(clippy::too_many_arguments)]
fn grow_node<R: Rng>(
    columns: &[Vec<f64>],
    labels: &[u8],
    samples: &mut [usize],
    depth: usize,
    config: &TreeConfig,
    rng: &mut R,
    features: &mut Vec<usize>,
    scratch: &mut Vec<(f64, u8)>,
) -> TreeNode {
    let n = samples.len();
    let n1 = samples.iter().filter(|&&i| labels[i] == 1).count();
    let leaf = TreeNode::Leaf {
        probabilities: [(n - n1) as f64 / n as f64, n1 as f64 / n as f64],
    };
    let depth_ok = config.max_depth.is_none_or(|d| depth < d);
    if n1 == 0 || n1 == n || !depth_ok || n < 2 * config.min_samples_leaf {
        return leaf;
    }

    // Draw candidate features in random order; features constant within the
    // node are skipped without counting towards max_features.
    features.shuffle(rng);
    let mut best: Option<Candidate> = None;
    let mut visited = 0;
    for &feature in features.iter() {
        if visited == config.max_features {
            break;
        }
        let column = &columns[feature];
        scratch.clear();
        scratch.extend(samples.iter().map(|&i| (column[i], labels[i])));
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        if scratch[0].0 == scratch[n - 1].0 {
            continue;
        }
        visited += 1;
        if let Some(c) = best_threshold(scratch, n1, config.min_samples_leaf, feature) {
            if best.is_none_or(|b| c.beats(&b)) {
                best = Some(c);
            }
        }
    }

    let Some(best) = best else {
        return leaf;
    };
    let column = &columns[best.feature];
    let mut split_at = 0;
    for k in 0..n {
        if column[samples[k]] <= best.threshold {
            samples.swap(k, split_at);
            split_at += 1;
        }
    }
    let (left, right) = samples.split_at_mut(split_at);
    let left = grow_node(
        columns,
        labels,
        left,
        depth + 1,
        config,
        rng,
        features,
        scratch,
    );
    let right = grow_node(
        columns,
        labels,
        right,
        depth + 1,
        config,
        rng,
        features,
        scratch,
    );
    TreeNode::split(best.feature, best.threshold, left, right)
}

/// Best midpoint threshold on sorted `(value, label)` pairs, maximising
/// `sum_c n_lc^2 / n_l + sum_c n_rc^2 / n_r` (equivalent to minimising the
/// weighted Gini impurity of the children). Lowest threshold wins ties.
fn best_threshold(
    sorted: &[(f64, u8)],
    total_ones: usize,
    min_leaf: usize,
    feature: usize,
) -> Option<Candidate> {
    let n = sorted.len();
    let mut best: Option<Candidate> = None;
    let mut left_ones = 0usize;
    for k in 0..n - 1 {
        left_ones += sorted[k].1 as usize;
        let (lo, hi) = (sorted[k].0, sorted[k + 1].0);
        if lo == hi {
            continue;
        }
        let n_left = k + 1;
        let n_right = n - n_left;
        if n_left < min_leaf || n_right < min_leaf {
            continue;
        }
        let left_zeros = n_left - left_ones;
        let right_ones = total_ones - left_ones;
        let right_zeros = n_right - right_ones;
        let sq = |a: usize, b: usize| (a * a + b * b) as f64;
        let score = sq(left_zeros, left_ones) / n_left as f64
            + sq(right_zeros, right_ones) / n_right as f64;
        if best.is_none_or(|b| score > b.score) {
            best = Some(Candidate {
                score,
                feature,
                threshold: midpoint(lo, hi),
            });
        }
    }
    best
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grow_all(rows: &[[f64; 2]], labels: &[u8], max_depth: Option<usize>) -> TreeNode {
        let columns = vec![
            rows.iter().map(|r| r[0]).collect::<Vec<_>>(),
            rows.iter().map(|r| r[1]).collect::<Vec<_>>(),
        ];
        let mut samples: Vec<usize> = (0..rows.len()).collect();
        let config = TreeConfig {
            max_depth,
            min_samples_leaf: 1,
            max_features: 2,
        };
        grow(
            &columns,
            labels,
            &mut samples,
            &config,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
    }

    #[test]
    fn pure_node_is_a_leaf() {
        let t = grow_all(&[[0.0, 0.0], [1.0, 1.0]], &[1, 1], None);
        assert_eq!(t, TreeNode::leaf(1.0));
    }

    #[test]
    fn threshold_is_midpoint() {
        let t = grow_all(
            &[[0.0, 5.0], [1.0, 5.0], [3.0, 5.0], [4.0, 5.0]],
            &[0, 0, 1, 1],
            None,
        );
        match t {
            TreeNode::Split {
                feature, threshold, ..
            } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 2.0);
            }
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn tie_prefers_lowest_feature() {
        // both features separate the classes perfectly
        let t = grow_all(
            &[[0.0, 10.0], [1.0, 11.0], [2.0, 12.0], [3.0, 13.0]],
            &[0, 0, 1, 1],
            None,
        );
        match t {
            TreeNode::Split { feature, .. } => assert_eq!(feature, 0),
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn fits_xor_with_depth_two() {
        let rows = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let labels = [0, 1, 1, 0];
        let t = grow_all(&rows, &labels, None);
        for (r, &l) in rows.iter().zip(&labels) {
            assert_eq!(t.predict(r)[1], l as f64);
        }
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn depth_limit_respected() {
        let rows = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let t = grow_all(&rows, &[0, 1, 1, 0], Some(1));
        assert!(t.depth() <= 1);
    }

    #[test]
    fn json_shape() {
        let t = TreeNode::split(1, 0.5, TreeNode::leaf(0.25), TreeNode::leaf(1.0));
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(
            s,
            r#"{"feature_index":1,"threshold":0.5,"left":{"class_probabilities":[0.75,0.25]},"right":{"class_probabilities":[0.0,1.0]}}"#
        );
        let back: TreeNode = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }
}
