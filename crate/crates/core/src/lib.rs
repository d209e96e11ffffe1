//! Random forest classification on tabular data with model-agnostic
//! explanations: exact and sampled Shapley values, LIME surrogates, partial
//! dependence, ICE and ALE curves.

pub mod data;
pub mod effects;
pub mod error;
pub mod forest;
pub mod lime;
pub mod model;
pub mod seeds;
pub mod shap;

pub use data::{
    compute_stats, load_csv, read_csv, split, FeatureStats, FeatureSummary, Split, SplitSpec,
    TabularDataset,
};
pub use error::{Error, Result};
pub use forest::{evaluate, fit, ClassificationReport, ForestModel, ForestParams, TreeNode};
pub use model::{Classifier, FnClassifier};
pub use seeds::RunSeeds;
