//! The train, explain and effects stages shared by the subcommands.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};
use tabxai_core::effects::{ale, ice, pdp, pdp_2d, GridSpec};
use tabxai_core::lime::TabularLime;
use tabxai_core::shap::{
    dependence_series, exact_shapley, global_importance, sampled_shapley, summary_points,
    AttributionRequest, ShapleyExplanation,
};
use tabxai_core::{
    evaluate, fit, load_csv, split, Error as CoreError, ForestModel, RunSeeds, Split,
    TabularDataset,
};

use crate::config::{sha256_file, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{file_stem, OutDir};

pub struct Context {
    pub cfg: RunConfig,
    pub seeds: RunSeeds,
    pub split: Split,
    pub out: OutDir,
}

impl Context {
    pub fn prepare(cfg: RunConfig, timestamps: bool) -> CliResult<Self> {
        let data_hash = sha256_file(&cfg.data)?;
        let config_hash = cfg.hash(&data_hash);
        let seeds = RunSeeds::from_master(cfg.seed);
        let data = load_csv(&cfg.data, &cfg.label)?;
        let split = split(&data, &cfg.split_spec(seeds.split))?;

        let mut provenance = json!({
            "config_hash": config_hash,
            "data_sha256": data_hash,
            "master_seed": cfg.seed,
            "seeds": seeds,
            "tool_version": env!("CARGO_PKG_VERSION"),
        });
        if timestamps {
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            provenance["generated_unix"] = json!(now);
        }
        let out = OutDir::create(&cfg.out, config_hash, provenance)?;
        Ok(Self {
            cfg,
            seeds,
            split,
            out,
        })
    }

    fn feature_names(&self) -> &[String] {
        self.split.train.feature_names()
    }
}

fn float(v: f64) -> String {
    format!("{v}")
}

pub fn train(ctx: &Context) -> CliResult<ForestModel> {
    let model = fit(&ctx.split.train, &ctx.cfg.forest_params(ctx.seeds.forest))?;
    let report = evaluate(&model, &ctx.split.test)?;
    ctx.out.write_json(
        "model.json",
        json!({"config_hash": ctx.out.config_hash(), "model": serde_json::to_value(&model).expect("model serializes")}),
    )?;
    ctx.out.write_json(
        "report.json",
        json!({
            "config_hash": ctx.out.config_hash(),
            "n_train": ctx.split.train.n_rows(),
            "n_test": ctx.split.test.n_rows(),
            "report": report.to_json(),
        }),
    )?;
    print!("{report}");
    Ok(model)
}

/// Loads a model written by `train` and checks it against the data columns.
pub fn load_model(ctx: &Context, path: &Path) -> CliResult<ForestModel> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::new("E_MODEL", format!("{}: {e}", path.display())))?;
    let body = value.get_mut("model").map(Value::take).ok_or_else(|| {
        CliError::new("E_MODEL", format!("{}: no `model` object", path.display()))
    })?;
    let model = ForestModel::from_json(&body.to_string())
        .map_err(|e| CliError::new("E_MODEL", format!("{}: {e}", path.display())))?;
    if model.feature_names != ctx.feature_names() {
        return Err(CliError::new(
            "E_MODEL",
            format!(
                "model features {:?} do not match data features {:?}",
                model.feature_names,
                ctx.feature_names()
            ),
        ));
    }
    Ok(model)
}

pub enum Selector {
    Row(usize),
    Values(Vec<f64>),
}

impl Selector {
    fn resolve(&self, test: &TabularDataset) -> CliResult<(Vec<f64>, Value)> {
        match self {
            Selector::Row(i) => {
                if *i >= test.n_rows() {
                    return Err(CliError::new(
                        "E_ARG",
                        format!("row {i} out of range for {} test rows", test.n_rows()),
                    ));
                }
                Ok((test.row(*i).to_vec(), json!({"test_row": i})))
            }
            Selector::Values(v) => {
                if v.len() != test.n_features() {
                    return Err(CliError::new(
                        "E_ARG",
                        format!(
                            "instance has {} values, expected {}",
                            v.len(),
                            test.n_features()
                        ),
                    ));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(CliError::new("E_ARG", "instance values must be finite"));
                }
                Ok((v.clone(), json!({"inline": true})))
            }
        }
    }
}

pub fn explain(ctx: &Context, model: &ForestModel, selector: &Selector) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let (instance, selected) = selector.resolve(&ctx.split.test)?;
    let background = ctx
        .split
        .train
        .sample_rows(cfg.shap_background, ctx.seeds.background);
    let req = AttributionRequest::new(&instance, &background, cfg.class_index)?;

    let exact = exact_shapley(model, &req)?;
    let residual = exact.efficiency_residual();
    let mut body = exact.to_json();
    body["efficiency_residual"] = json!(residual);
    body["efficiency_ok"] = json!(residual.abs() < 1e-9);
    body["instance_selector"] = selected.clone();
    body["n_background"] = json!(background.n_rows());
    ctx.out.write_json("shap_exact.json", body)?;

    let sampled = sampled_shapley(model, &req, cfg.shap_coalitions, ctx.seeds.shap)?;
    let mut body = sampled.to_json();
    body["n_coalitions"] = json!(cfg.shap_coalitions);
    body["seed"] = json!(ctx.seeds.shap);
    body["instance_selector"] = selected.clone();
    body["n_background"] = json!(background.n_rows());
    ctx.out.write_json("shap_sampled.json", body)?;

    let lime = TabularLime::new(&ctx.split.train)?;
    let explanation = lime.explain(
        model,
        &instance,
        cfg.class_index,
        &cfg.lime_params(instance.len(), ctx.seeds.lime),
    )?;
    let mut body = explanation.to_json();
    body["instance_selector"] = selected;
    ctx.out.write_json("lime.json", body)?;

    println!(
        "explained instance: p(class {}) = {:.4}, efficiency residual {:.3e}",
        cfg.class_index, exact.prediction, residual
    );
    Ok(())
}

/// Exact Shapley values for every test row; writes importance, summary and
/// dependence files and returns features ordered by importance.
pub fn explain_global(ctx: &Context, model: &ForestModel) -> CliResult<Vec<String>> {
    let cfg = &ctx.cfg;
    let background = ctx
        .split
        .train
        .sample_rows(cfg.shap_background, ctx.seeds.background);
    let test = &ctx.split.test;
    let explanations = (0..test.n_rows())
        .into_par_iter()
        .map(|i| {
            let req = AttributionRequest::new(test.row(i), &background, cfg.class_index)?;
            exact_shapley(model, &req)
        })
        .collect::<Result<Vec<ShapleyExplanation>, _>>()?;

    let importance = global_importance(&explanations)?;
    let rows: Vec<Vec<String>> = importance
        .entries
        .iter()
        .map(|(name, v)| vec![name.clone(), float(*v)])
        .collect();
    ctx.out
        .write_csv("importance.csv", &["feature", "importance"], &rows)?;

    let points = summary_points(&explanations, &ctx.split.train)?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                p.feature.clone(),
                float(p.shap),
                float(p.value),
                float(p.percentile),
            ]
        })
        .collect();
    ctx.out.write_csv(
        "summary.csv",
        &["feature", "shap", "value", "percentile"],
        &rows,
    )?;

    for name in ctx.feature_names() {
        let series = dependence_series(&explanations, name)?;
        let rows: Vec<Vec<String>> = series
            .points
            .iter()
            .map(|(v, s)| vec![float(*v), float(*s)])
            .collect();
        ctx.out.write_csv(
            &format!("dependence_{}.csv", file_stem(name)),
            &["value", "shap"],
            &rows,
        )?;
    }

    println!("global importance over {} test rows:", test.n_rows());
    for (name, v) in &importance.entries {
        println!("  {name:<28} {v:.4}");
    }
    Ok(importance.entries.into_iter().map(|(n, _)| n).collect())
}

pub fn effects(
    ctx: &Context,
    model: &ForestModel,
    features: &[String],
    pairs: &[(String, String)],
) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let train = &ctx.split.train;
    let background = train.sample_rows(cfg.pdp_background, ctx.seeds.effects);
    let index = |name: &str| train.feature_index(name).map_err(CliError::from);

    for name in features {
        let j = index(name)?;
        let stem = file_stem(name);
        let spec = GridSpec::one(j, cfg.grid_resolution, cfg.grid_strategy);

        let curve = pdp(model, &background, &spec, cfg.class_index)?;
        let rows: Vec<Vec<String>> = curve
            .grid
            .iter()
            .zip(&curve.values)
            .map(|(g, v)| vec![float(*g), float(*v)])
            .collect();
        ctx.out
            .write_csv(&format!("pdp_{stem}.csv"), &["grid_value", "pdp"], &rows)?;

        let bundle = ice(model, &background, &spec, cfg.class_index)?;
        let mut rows = Vec::with_capacity(bundle.grid.len() * bundle.curves.len());
        for (k, g) in bundle.grid.iter().enumerate() {
            for (r, c) in bundle.curves.iter().enumerate() {
                rows.push(vec![float(*g), r.to_string(), float(c[k])]);
            }
        }
        ctx.out.write_csv(
            &format!("ice_{stem}.csv"),
            &["grid_value", "row_index", "ice"],
            &rows,
        )?;

        let curve = match ale(model, train, j, cfg.ale_bins, cfg.class_index) {
            Ok(curve) => curve,
            Err(CoreError::ConstantFeature(_)) => {
                eprintln!("note: `{name}` is constant in the training split; no ALE written");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        // count on each edge is the size of the bin ending there
        let rows: Vec<Vec<String>> = curve
            .edges
            .iter()
            .zip(&curve.values)
            .enumerate()
            .map(|(k, (e, v))| {
                let count = if k == 0 { 0 } else { curve.counts[k - 1] };
                vec![float(*e), float(*v), count.to_string()]
            })
            .collect();
        ctx.out.write_csv(
            &format!("ale_{stem}.csv"),
            &["bin_edge", "ale", "count"],
            &rows,
        )?;
    }

    for (a, b) in pairs {
        let spec = GridSpec::two(index(a)?, index(b)?, cfg.grid_resolution, cfg.grid_strategy);
        let surface = pdp_2d(model, &background, &spec, cfg.class_index)?;
        let mut rows = Vec::new();
        for (i, ga) in surface.grid_a.iter().enumerate() {
            for (k, gb) in surface.grid_b.iter().enumerate() {
                rows.push(vec![float(*ga), float(*gb), float(surface.values[i][k])]);
            }
        }
        let name = format!("pdp2d_{}_{}.csv", file_stem(a), file_stem(b));
        ctx.out
            .write_csv(&name, &["grid_a", "grid_b", "pdp"], &rows)?;
    }
    println!(
        "effects written for {} feature(s) and {} pair(s)",
        features.len(),
        pairs.len()
    );
    Ok(())
}
