use std::sync::OnceLock;

use proptest::prelude::*;
use tabxai_core::{
    evaluate, fit, load_csv, split, Classifier, ForestModel, ForestParams, SplitSpec,
};

const PIMA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/diabetes.csv");

fn pima_forest() -> &'static ForestModel {
    static MODEL: OnceLock<ForestModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let ds = load_csv(PIMA, "Outcome").unwrap();
        let sp = split(&ds, &SplitSpec::default()).unwrap();
        fit(&sp.train, &ForestParams::default()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn probabilities_are_distributions(x in prop::collection::vec(-50.0f64..900.0, 8)) {
        let p = pima_forest().predict_proba(&x).unwrap();
        prop_assert!((0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]));
        prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn pima_default_run() {
    let ds = load_csv(PIMA, "Outcome").unwrap();
    let sp = split(&ds, &SplitSpec::default()).unwrap();
    let report = evaluate(pima_forest(), &sp.test).unwrap();
    assert_eq!(report.total_support, 230);
    assert!(
        (0.65..=0.85).contains(&report.accuracy),
        "{}",
        report.accuracy
    );
}

#[test]
fn json_round_trip_preserves_predictions() {
    let model = pima_forest();
    let back = ForestModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(&back, model);
    let ds = load_csv(PIMA, "Outcome").unwrap();
    for row in ds.rows().take(50) {
        assert_eq!(back.proba(row), model.proba(row));
    }
}

#[test]
fn refit_is_identical() {
    let ds = load_csv(PIMA, "Outcome").unwrap();
    let sp = split(&ds, &SplitSpec::default()).unwrap();
    let again = fit(&sp.train, &ForestParams::default()).unwrap();
    assert_eq!(again.to_json().unwrap(), pima_forest().to_json().unwrap());
}
