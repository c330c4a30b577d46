use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

const SYNTH: &str = r#"{
    "synth": {
        "train": {"n_patients": 20, "dims": [32, 32, 32], "lesion_count": [1, 1]},
        "test": {"n_patients": 14, "id_prefix": "T", "dims": [32, 32, 32], "lesion_count": [1, 1]}
    },
    "site_scopes": ["all"],
    "aggregations": ["largest"],
    "metrics": ["CRS"],
    "algorithms": ["fscore", "gini"],
    "regimes": ["predictive", "fully_robust"],
    "models": ["LR"],
    "perturbation": {"n_replicates": 3},
    "out": "out"
}"#;

fn radrobust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radrobust")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_produces_report_and_reuses_the_cache() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), SYNTH);
    let o = radrobust(&["run", "--config", &cfg, "--jobs", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = std::fs::read_to_string(d.path().join("out/report/report.csv")).unwrap();
    assert!(report.starts_with("metric,site_scope,aggregation,region,model,algorithm,regime,train_auc"));
    assert_eq!(report.lines().count(), 1 + 1 + 2 * 2);
    assert!(d.path().join("out/report/summary.md").is_file());

    let again = radrobust(&["run", "--config", &cfg]);
    assert!(again.status.success());
    let text = String::from_utf8_lossy(&again.stdout);
    assert_eq!(text.matches("up to date").count(), 6, "{text}");
}

#[test]
fn stage_subcommands_compose() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), SYNTH);
    for stage in ["gen-synth", "extract", "profile"] {
        let o = radrobust(&[stage, "--config", &cfg]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let profile = std::fs::read_to_string(d.path().join("out/profile/robustness.csv")).unwrap();
    assert!(profile.starts_with("feature,icc,ci_lo,ci_hi,category\n"));
    let icc: HashMap<String, f64> = profile
        .lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap().to_string(), f.next().unwrap().parse().unwrap())
        })
        .collect();

    let o = radrobust(&["select", "--config", &cfg, "--regime", "fully_robust"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sel = std::fs::read_to_string(d.path().join("out/select/selections.csv")).unwrap();
    let mut rows = 0;
    for rec in csv_rows(&sel) {
        assert_eq!(rec["regime"], "fully_robust");
        if rec["status"].is_empty() {
            for f in rec["selected"].split(';') {
                assert!(icc[f] > 0.8, "{f} {}", icc[f]);
            }
        }
        rows += 1;
    }
    assert_eq!(rows, 2);
}

fn csv_rows(text: &str) -> Vec<HashMap<String, String>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .map(|l| header.iter().map(|h| h.to_string()).zip(l.split(',').map(str::to_string)).collect())
        .collect()
}

#[test]
fn missing_upstream_artifact_is_a_data_error_naming_the_producer() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), SYNTH);
    let o = radrobust(&["profile", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("run `extract` first"), "{}", stderr(&o));
    let o = radrobust(&["extract", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("run `gen-synth` first"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_with_2() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("nope.json");
    let o = radrobust(&["run", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let cfg = write_config(d.path(), r#"{"synth": {}, "regions": ["rim"], "aggregations": ["merged"]}"#);
    let o = radrobust(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("largest"), "{}", stderr(&o));

    let cfg = write_config(d.path(), r#"{"synth": {}, "regions": ["rim"], "metrics": ["DiaR"]}"#);
    assert_eq!(radrobust(&["run", "--config", &cfg]).status.code(), Some(2));

    let cfg = write_config(d.path(), "{ not json");
    assert_eq!(radrobust(&["run", "--config", &cfg]).status.code(), Some(2));

    let o = radrobust(&["select", "--config", &cfg, "--regime", "greedy"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unreadable_cohort_is_a_data_error() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("m.csv"), "patient_id,timepoint,volume_path,mask_path,crs,recist,sld_mm\nP1,pre,a.mvol,a.mmask,3,,\n").unwrap();
    let cfg = write_config(d.path(), r#"{"train": "m.csv", "test": "m.csv"}"#);
    let o = radrobust(&["extract", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
