use std::path::{Path, PathBuf};

use ensemblekit::metrics::{compute_auc, evaluate};
use ensemblekit::predictions::load_prediction_set;
use ensemblekit::PredictionSet;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

#[test]
fn perfect_fixture_scores_two() {
    let set: PredictionSet = load_prediction_set(fixture("perfect.csv"), "perfect").unwrap();
    let r = evaluate(&set, 10).unwrap();
    assert_eq!((r.auc, r.f1, r.ece, r.overall), (1.0, 1.0, 0.0, 2.0));
}

#[test]
fn binormal_fixtures_track_theoretical_auc() {
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("binormal/manifest.json")).unwrap())
            .unwrap();
    for m in manifest["models"].as_array().unwrap() {
        let theory = m["theoretical_auc"].as_f64().unwrap();
        let set: PredictionSet = load_prediction_set(
            fixture(&format!("binormal/{}", m["file"].as_str().unwrap())),
            "m",
        )
        .unwrap();
        let auc = compute_auc(&set.probs(), &set.labels()).unwrap();
        // 300 per class: standard error of the empirical AUC is below 0.02
        assert!(
            (auc - theory).abs() < 0.06,
            "{}: {auc} vs {theory}",
            m["name"]
        );
    }
}

#[test]
fn malformed_fixture_names_row() {
    let err = load_prediction_set::<f64>(fixture("malformed.csv"), "bad").unwrap_err();
    assert!(err.to_string().contains("row 3"), "{err}");
}
