//! Run configuration: a flat TOML file, overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use tabxai_core::effects::GridStrategy;
use tabxai_core::lime::LimeParams;
use tabxai_core::{ForestParams, SplitSpec};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub label: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub test_fraction: Option<f64>,
    pub stratified: Option<bool>,
    pub n_trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub max_features: Option<usize>,
    pub bootstrap: Option<bool>,
    pub class_index: Option<usize>,
    pub shap_background: Option<usize>,
    pub shap_coalitions: Option<usize>,
    pub lime_samples: Option<usize>,
    pub lime_rules: Option<usize>,
    pub lime_kernel_width: Option<f64>,
    pub lime_lambda: Option<f64>,
    pub pdp_background: Option<usize>,
    pub grid_resolution: Option<usize>,
    pub grid_strategy: Option<GridStrategy>,
    pub ale_bins: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| CliError::new("E_CONFIG", format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub label: String,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub test_fraction: f64,
    pub stratified: bool,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub class_index: usize,
    pub shap_background: usize,
    pub shap_coalitions: usize,
    pub lime_samples: usize,
    /// `None` reports a rule for every feature.
    pub lime_rules: Option<usize>,
    pub lime_kernel_width: Option<f64>,
    pub lime_lambda: f64,
    pub pdp_background: usize,
    pub grid_resolution: usize,
    pub grid_strategy: GridStrategy,
    pub ale_bins: usize,
}

impl RunConfig {
    /// Fills unset keys with defaults. `file` has already been overlaid with
    /// any command-line flags.
    pub fn resolve(file: FileConfig) -> CliResult<Self> {
        let forest = ForestParams::default();
        let split = SplitSpec::default();
        let lime = LimeParams::default();
        let data = file.data.ok_or_else(|| {
            CliError::new(
                "E_CONFIG",
                "no data file given (use --data or `data` in the config)",
            )
        })?;
        let cfg = Self {
            data,
            label: file.label.unwrap_or_else(|| "Outcome".into()),
            seed: file.seed.unwrap_or(42),
            out: file.out.unwrap_or_else(|| PathBuf::from("out")),
            threads: file.threads,
            test_fraction: file.test_fraction.unwrap_or(split.test_fraction),
            stratified: file.stratified.unwrap_or(split.stratified),
            n_trees: file.n_trees.unwrap_or(forest.n_trees),
            max_depth: file.max_depth.or(forest.max_depth),
            min_samples_leaf: file.min_samples_leaf.unwrap_or(forest.min_samples_leaf),
            max_features: file.max_features.or(forest.max_features_per_split),
            bootstrap: file.bootstrap.unwrap_or(forest.bootstrap),
            class_index: file.class_index.unwrap_or(1),
            shap_background: file.shap_background.unwrap_or(100),
            shap_coalitions: file.shap_coalitions.unwrap_or(2000),
            lime_samples: file.lime_samples.unwrap_or(lime.n_samples),
            lime_rules: file.lime_rules,
            lime_kernel_width: file.lime_kernel_width.or(lime.kernel_width),
            lime_lambda: file.lime_lambda.unwrap_or(lime.ridge_lambda),
            pdp_background: file.pdp_background.unwrap_or(200),
            grid_resolution: file.grid_resolution.unwrap_or(20),
            grid_strategy: file.grid_strategy.unwrap_or(GridStrategy::Quantile),
            ale_bins: file.ale_bins.unwrap_or(10),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |msg: &str| Err(CliError::new("E_CONFIG", msg));
        if self.class_index > 1 {
            return bad("class_index must be 0 or 1");
        }
        if self.shap_background == 0 || self.pdp_background == 0 {
            return bad("background sizes must be positive");
        }
        if self.threads == Some(0) {
            return bad("threads must be positive");
        }
        if self.grid_resolution < 2 {
            return bad("grid_resolution must be at least 2");
        }
        if self.ale_bins == 0 {
            return bad("ale_bins must be positive");
        }
        if self.lime_lambda < 0.0 || self.lime_kernel_width.is_some_and(|w| w <= 0.0) {
            return bad("lime_lambda must be >= 0 and lime_kernel_width > 0");
        }
        Ok(())
    }

    pub fn split_spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            test_fraction: self.test_fraction,
            seed,
            stratified: self.stratified,
        }
    }

    pub fn forest_params(&self, seed: u64) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            max_features_per_split: self.max_features,
            bootstrap: self.bootstrap,
            seed,
        }
    }

    pub fn lime_params(&self, n_features: usize, seed: u64) -> LimeParams {
        LimeParams {
            n_samples: self.lime_samples,
            n_rules: self.lime_rules.unwrap_or(n_features),
            kernel_width: self.lime_kernel_width,
            ridge_lambda: self.lime_lambda,
            seed,
        }
    }

    /// SHA-256 over the canonical JSON of every setting that affects results.
    /// The data file enters by content hash, not path; the output directory
    /// and thread count are left out.
    pub fn hash(&self, data_sha256: &str) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        let map = value.as_object_mut().expect("config is an object");
        map.remove("out");
        map.remove("threads");
        map.remove("data");
        map.insert("data_sha256".into(), Value::String(data_sha256.to_string()));
        let canonical = serde_json::to_string(&value).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
