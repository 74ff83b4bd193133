use feec::experiments::{run, ExperimentConfig, ExperimentId};

fn scratch(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("feec-test-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn ids_round_trip() {
    for id in ExperimentId::ALL {
        assert_eq!(id.as_str().parse::<ExperimentId>().unwrap(), id);
    }
    assert!("fig99".parse::<ExperimentId>().is_err());
}

#[test]
fn config_rejects_unknown_fields() {
    assert!(ExperimentConfig::from_json(r#"{"id": "fig1-1d-primal", "colour": 3}"#).is_err());
    let c = ExperimentConfig::from_json(&format!(r#"{{"id": "{}", "levels": 3}}"#, ExperimentId::Fig2MixedStability.as_str())).unwrap();
    assert_eq!(c.levels(), 3);
}

#[test]
fn one_dimensional_pairs_write_outputs() {
    let dir = scratch("fig2");
    let mut config = ExperimentConfig::new(ExperimentId::Fig2MixedStability);
    config.out = Some(dir.clone());
    let report = run(&config).unwrap();
    assert!(report.passed(), "{}", report.summary());
    let verdict: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["pass"], serde_json::Value::Bool(true));
    let names: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert!(names.iter().any(|n| n.ends_with(".csv")));
    assert!(names.iter().any(|n| n.ends_with(".dat")));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn primal_poisson_passes() {
    let report = run(&ExperimentConfig::new(ExperimentId::Fig1Primal)).unwrap();
    assert!(report.passed(), "{}", report.summary());
}

#[test]
fn rates_need_three_levels() {
    let mut config = ExperimentConfig::new(ExperimentId::RatesHodge);
    config.levels = Some(2);
    assert!(run(&config).is_err());
}
