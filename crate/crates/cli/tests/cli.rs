use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use emlab_cli::{emit_report, run_experiment, CliError, ExperimentConfig, ExperimentId};
use emlab_core::geometry::DomainSpec;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_emlab"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn small_cdc() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ExperimentId::CdcSweep);
    c.domain = Some(DomainSpec::unit_cube(1.0 / 16.0));
    c.scales = Some(vec![0.5]);
    c.params.sample = Some("stride:200".parse().unwrap());
    c
}

#[test]
fn cdc_sweep_writes_table_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_cdc());
    let out = dir.path().join("out");
    let status = bin().args(["cdc_sweep", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let csv = fs::read_to_string(out.join("cdc_table.csv")).unwrap();
    assert!(csv.starts_with("x_id,r,cap_num,cap_den,ratio\n"));
    assert!(csv.lines().count() > 1);
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["pass"], true);
    for a in run["artifacts"].as_array().unwrap() {
        assert!(out.join(a.as_str().unwrap()).is_file());
    }
    assert!(run["rows"].as_array().unwrap().iter().all(|r| r["source"].as_str().is_some_and(|s| !s.is_empty())));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(ExperimentId::NormEquivalence);
    cfg.domain = Some(DomainSpec::unit_cube(1.0 / 8.0));
    cfg.params.plan = Some(emlab_core::norms::SamplingPlan::Stratified { seed: 0, anchors: 16 });
    let path = write_config(dir.path(), &cfg);
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let s = bin().args(["norm_equivalence", "--seed", "11", "--config"]).arg(&path).arg("--out").arg(&out).status().unwrap();
        assert!(s.success());
        outputs.push(out);
    }
    for name in ["equivalence.csv", "plotdata/ratios.csv"] {
        let a = fs::read(outputs[0].join(name)).unwrap();
        let b = fs::read(outputs[1].join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(outputs[0].join("run.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 11);
}

#[test]
fn wellposed_on_cube_passes() {
    let mut cfg = ExperimentConfig::new(ExperimentId::Wellposed);
    cfg.domain = Some(DomainSpec::unit_cube(1.0 / 32.0));
    cfg.params.alpha = Some(0.4);
    let rep = run_experiment(&cfg).unwrap();
    assert!(rep.pass, "{}", rep.summary());
    let slack = rep.rows.iter().find(|r| r.name == "lower_bound_slack").unwrap();
    assert!(slack.value >= -1e-6);
    assert!(rep.rows.iter().any(|r| r.name == "trace_recovery" && r.pass));
}

#[test]
fn illposed_constant_data_coincide() {
    let mut cfg = ExperimentConfig::new(ExperimentId::Illposed);
    cfg.domain = Some(DomainSpec::exterior_of_ball(1.0, 4.0, 0.25));
    cfg.params.data = Some(emlab_cli::config::DataKind::Constant);
    let rep = run_experiment(&cfg).unwrap();
    let gap = rep.rows.iter().find(|r| r.name == "identity_residual").unwrap();
    assert_eq!(gap.value, 0.0);
    let sep = rep.rows.iter().find(|r| r.name == "separation").unwrap();
    assert_eq!(sep.note.as_deref(), Some("solutions coincide"));
    assert!(sep.pass);
}

#[test]
fn unknown_experiment_is_rejected() {
    let out = bin().arg("no_such_experiment").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown experiment"));
    let cfg = ExperimentConfig { experiment: "bogus".into(), ..ExperimentConfig::new(ExperimentId::CdcSweep) };
    assert!(matches!(run_experiment(&cfg), Err(CliError::UnknownExperiment(_))));
}

#[test]
fn failing_tolerance_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_cdc());
    let out = dir.path().join("out");
    let s = bin()
        .args(["cdc_sweep", "--tol", "inf_ratio_min=2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(s.status.code(), Some(1));
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["pass"], false);
    let bad = bin().args(["cdc_sweep", "--tol", "nonsense=1", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn module_errors_become_failure_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_cdc();
    cfg.scales = Some(vec![0.01]);
    let mut rep = run_experiment(&cfg).unwrap();
    assert!(!rep.pass);
    let row = rep.rows.iter().find(|r| r.name == "error").unwrap();
    assert!(row.note.is_some());
    let files = emit_report(&mut rep, dir.path()).unwrap();
    assert_eq!(files, vec![dir.path().join("run.json")]);
}

#[test]
fn list_names_every_experiment() {
    let out = bin().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ExperimentId::ALL {
        assert!(text.contains(id.as_str()));
    }
}

#[test]
fn shipped_configs_validate() {
    let mut seen = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let p = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&p).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        seen += 1;
    }
    assert!(seen >= 7);
}

#[test]
fn growth_suite_from_shipped_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::load(&configs_dir().join("growth_suite.json")).unwrap();
    cfg.output = Some(dir.path().to_path_buf());
    let mut rep = run_experiment(&cfg).unwrap();
    assert!(rep.pass, "{}", rep.summary());
    let q = rep.rows.iter().find(|r| r.name == "q_alpha_at_1").unwrap();
    assert!((q.value - 5.0).abs() < 1e-6);
    let files = emit_report(&mut rep, dir.path()).unwrap();
    assert!(files.iter().any(|f| f.ends_with("plotdata/q_alpha.csv")));
}
