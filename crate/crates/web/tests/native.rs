use serde_json::Value;
use sparse_sysid_web::{compare_estimators_json, hankel_spectrum_json, horizon_sweep_json};

fn small() -> &'static str {
    r#"{"n": 10, "m": 3, "p": 3, "horizon": 5, "horizons": [2, 3, 4, 5, 6], "samples": [10, 30, 60], "trials": 3, "seed": 7}"#
}

#[test]
fn comparison_has_one_point_per_sample_size() {
    let out: Value = serde_json::from_str(&compare_estimators_json(small()).unwrap()).unwrap();
    assert_eq!(out["tp"], 15);
    let curves = out["curves"].as_array().unwrap();
    assert_eq!(curves.len(), 2);
    for c in curves {
        assert_eq!(c["x"].as_array().unwrap().len(), 3);
        assert!(c["y"].as_array().unwrap().iter().all(|v| v.as_f64().unwrap().is_finite()));
    }
    assert_eq!(compare_estimators_json(small()).unwrap(), compare_estimators_json(small()).unwrap());
}

#[test]
fn sweep_covers_every_horizon() {
    let out: Value = serde_json::from_str(&horizon_sweep_json(small()).unwrap()).unwrap();
    assert_eq!(out["samples"], 60);
    assert_eq!(out["curve"]["x"].as_array().unwrap().len(), 5);
    assert!(out["pattern"]["shape"].is_string());
}

#[test]
fn spectrum_lists_three_curves() {
    let out: Value = serde_json::from_str(&hankel_spectrum_json(small()).unwrap()).unwrap();
    let curves = out["curves"].as_array().unwrap();
    assert_eq!(curves.iter().map(|c| c["label"].as_str().unwrap()).collect::<Vec<_>>(), ["true", "lasso", "ls"]);
    let truth: Vec<f64> = curves[0]["y"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(truth.windows(2).all(|w| w[0] >= w[1]));
    assert!(out["lambda"].as_f64().unwrap() > 0.0);
}

#[test]
fn defaults_and_errors() {
    assert!(compare_estimators_json("").is_ok());
    assert!(compare_estimators_json("{not json").unwrap_err().contains("bad parameters"));
    assert!(horizon_sweep_json(r#"{"samples": []}"#).is_err());
}
