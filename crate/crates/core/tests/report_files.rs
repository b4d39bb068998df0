use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;
use tracesim::config::load_scenario_with_overrides;
use tracesim::report::{emit_report, REPORT_SCHEMA};
use tracesim::{run, RunOptions, ScenarioConfig};

fn scenario(name: &str, overrides: &[(&str, &str)]) -> ScenarioConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    let text = fs::read_to_string(path).unwrap();
    let o: Vec<(String, String)> = overrides.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    load_scenario_with_overrides(&text, &o).unwrap()
}

fn short(name: &str, extra: &[(&str, &str)]) -> ScenarioConfig {
    let mut o = vec![("n_agents", "80"), ("duration_days", "4"), ("epidemic.incubation_days", "1"), ("epidemic.test_delay_days", "1")];
    o.extend_from_slice(extra);
    scenario(name, &o)
}

fn emit(cfg: &ScenarioConfig) -> (tempfile::TempDir, Value) {
    let out = run(cfg, RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&out, RunOptions::default(), dir.path()).unwrap();
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    (dir, report)
}

fn validator() -> jsonschema::Validator {
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

#[test]
fn every_gallery_report_validates_against_schema() {
    let v = validator();
    let cases = [
        short("baseline.cfg", &[]),
        short("baseline_centralised.cfg", &[]),
        short("sniffer_grid.cfg", &[("world_width_m", "500"), ("world_height_m", "500")]),
        short("relay_attack.cfg", &[]),
        short("relay_attack.cfg", &[("protocol", "centralised")]),
        short("sybil.cfg", &[]),
        short("sybil.cfg", &[("protocol", "centralised")]),
        ScenarioConfig { n_agents: 0, duration_days: 1, ..ScenarioConfig::default() },
    ];
    for cfg in &cases {
        let (_dir, report) = emit(cfg);
        let errors: Vec<String> = v.iter_errors(&report).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{:?} {:?}: {errors:?}", cfg.protocol, cfg.attack.kind);
    }
}

#[test]
fn schema_rejects_a_report_missing_metrics() {
    let (_dir, mut report) = emit(&short("baseline.cfg", &[]));
    report.as_object_mut().unwrap().remove("metrics");
    assert!(!validator().is_valid(&report));
}

#[test]
fn notification_counts_recompute_from_csv() {
    let (dir, report) = emit(&short("relay_attack.cfg", &[]));
    let mut rdr = csv::Reader::from_path(dir.path().join("notifications.csv")).unwrap();
    let mut by_cause: BTreeMap<String, u64> = BTreeMap::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        *by_cause.entry(rec[4].to_string()).or_default() += 1;
        rows += 1;
    }
    assert!(rows > 0);
    assert_eq!(report["metrics"]["notification_count"], rows);
    let reported: BTreeMap<String, u64> =
        serde_json::from_value(report["metrics"]["notifications"]["by_cause"].clone()).unwrap();
    assert_eq!(reported, by_cause);
}

#[test]
fn timeseries_has_one_row_per_tick_and_conserves_agents() {
    let cfg = short("baseline.cfg", &[("epidemic.recovery", "false")]);
    let (dir, _) = emit(&cfg);
    let mut rdr = csv::Reader::from_path(dir.path().join("timeseries.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["tick", "S", "E", "I", "diagnosed_cum", "quarantined"]);
    let rows: Vec<Vec<u64>> =
        rdr.records().map(|r| r.unwrap().iter().map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len() as u64, cfg.n_ticks());
    // without recovery nobody leaves S+E+I
    for r in &rows {
        assert_eq!(r[1] + r[2] + r[3], cfg.n_agents as u64);
    }
}
