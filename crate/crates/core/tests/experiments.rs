use std::fs;
use std::path::Path;

use gdstab_core::bounds::Verdict;
use gdstab_core::data::{Dataset, Sample};
use gdstab_core::experiments::{self, expand_sweep, ExperimentConfig, RunStatus, Scenario, SweepSpec};
use gdstab_core::model::{ActivationSpec, InitLaw, OutputMode, ShallowNet};
use gdstab_core::optimize::{gd_train, GDConfig};

fn small_train() -> ExperimentConfig {
    ExperimentConfig::from_json(
        r#"{
            "scenario": "train",
            "data_spec": {
                "input_law": "uniform_sphere",
                "target": { "kind": "teacher_logistic" },
                "noise_law": "none",
                "c_x": 1.0,
                "c_y": 1.0
            },
            "net": { "d": 3, "m": 12, "init": { "law": "gaussian", "nu": 1.0 } },
            "gd": { "eta": 1.0, "t_max": 30, "record_every": 3 },
            "eta_fraction": 0.9,
            "n": 8,
            "replicates": 3,
            "master_seed": 11
        }"#,
    )
    .unwrap()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn unknown_keys_are_rejected() {
    let mut v: serde_json::Value = serde_json::from_str(&small_train().to_json()).unwrap();
    v["gd"]["etta"] = 0.1.into();
    assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    let mut v: serde_json::Value = serde_json::from_str(&small_train().to_json()).unwrap();
    v["replicate"] = 2.into();
    assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
}

#[test]
fn scenario_requirements_checked_before_compute() {
    let mut c = small_train();
    c.data_spec = None;
    assert!(c.validate().is_err());
    let mut c = small_train();
    c.scenario = Scenario::Consistency;
    assert!(c.validate().is_err(), "consistency without alpha, grid or noise");
    let mut c = small_train();
    c.scenario = Scenario::Fig1;
    c.data_spec = None;
    c.net.d = 10;
    assert!(c.validate().is_err(), "fig1 without m_grid");
    c.m_grid = vec![10];
    c.validate().unwrap();
    assert_eq!(c.data_law().unwrap(), gdstab_core::data::fig1_spec(c.data_seed()));
    let mut c = small_train();
    c.net.activation = "relu".into();
    assert!(c.validate().is_err());
}

#[test]
fn train_holds_and_writes_columns() {
    let a = experiments::run(&small_train()).unwrap();
    assert_eq!(a.manifest.status, RunStatus::Ok);
    assert!(a.reports.iter().all(|r| r.holds()), "{:?}", a.reports);
    let t = a.table("trajectory").unwrap();
    assert_eq!(t.header, ["t", "risk", "path_norm", "grad_norm"]);
    assert_eq!(t.column("t").unwrap(), [0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0, 24.0, 27.0, 30.0]);
    assert_eq!(a.table("train_summary").unwrap().rows.len(), 3);
    for k in ["c_0", "rho", "epsilon", "b", "b_tilde", "eta", "eta_limit"] {
        assert!(a.manifest.constants.contains_key(k), "{k}");
    }
    let eta = a.manifest.constants["eta"];
    assert!((eta - 0.9 * a.manifest.constants["eta_limit"]).abs() < 1e-15);
}

#[test]
fn interpolated_at_init_stays_flat() {
    let net = ShallowNet::init(3, 8, ActivationSpec::sigmoid(), InitLaw::Gaussian { nu: 1.0 }, OutputMode::Alternating, 4).unwrap();
    let data = Dataset::new(
        [vec![0.6, 0.0, 0.8], vec![0.0, -1.0, 0.0], vec![0.3, 0.3, 0.3]]
            .into_iter()
            .map(|x| Sample { y: net.forward(&x).unwrap(), x })
            .collect(),
    );
    let tr = gd_train(&net, &data, &GDConfig::new(1.0, 20)).unwrap();
    assert!(tr.risks.iter().all(|&r| r == 0.0));
    assert!(tr.points.iter().all(|p| p.path_norm == 0.0));
    assert_eq!(tr.final_net.weights(), net.weights());
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_train();
    c.output_dir = Some(dir.path().join("first"));
    experiments::run(&c).unwrap();
    let mut again = experiments::load_config(&dir.path().join("first/manifest.json")).unwrap();
    again.output_dir = Some(dir.path().join("second"));
    experiments::run(&again).unwrap();
    let a = csv_files(&dir.path().join("first"));
    let b = csv_files(&dir.path().join("second"));
    assert_eq!(a.len(), 2);
    assert_eq!(a, b);
}

#[test]
fn failing_run_still_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_train();
    c.eta_fraction = Some(3.0);
    c.output_dir = Some(dir.path().to_path_buf());
    let err = experiments::run(&c).unwrap_err();
    assert_eq!(experiments::failure_kind(&err), "config");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "failed");
    assert!(m["cause"].as_str().unwrap().contains("step"), "{}", m["cause"]);
}

#[test]
fn empty_sweep_gives_empty_index() {
    let dir = tempfile::tempdir().unwrap();
    let (index, arts) = experiments::sweep(&[], Some(dir.path())).unwrap();
    assert!(index.entries.is_empty() && arts.is_empty());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("index.json")).unwrap()).unwrap();
    assert_eq!(v["entries"].as_array().unwrap().len(), 0);
}

#[test]
fn distinct_seeds_give_distinct_artifacts_with_one_schema() {
    let mut a = small_train();
    let mut b = small_train();
    a.master_seed = 1;
    b.master_seed = 2;
    let (index, arts) = experiments::sweep(&[a, b], None).unwrap();
    assert!(index.entries.iter().all(|e| e.status == RunStatus::Ok));
    let (x, y) = (arts[0].as_ref().unwrap(), arts[1].as_ref().unwrap());
    let names = |r: &experiments::RunArtifact| r.tables.iter().map(|t| (t.name.clone(), t.header.clone())).collect::<Vec<_>>();
    assert_eq!(names(x), names(y));
    assert_ne!(x.table("trajectory").unwrap().rows, y.table("trajectory").unwrap().rows);
}

#[test]
fn sweep_isolates_failures() {
    let ok = small_train();
    let mut bad = small_train();
    bad.eta_fraction = Some(5.0);
    let (index, arts) = experiments::sweep(&[bad, ok], None).unwrap();
    assert_eq!(index.entries[0].status, RunStatus::Failed);
    assert!(index.entries[0].cause.is_some());
    assert_eq!(index.entries[1].status, RunStatus::Ok);
    assert!(arts[0].is_none() && arts[1].is_some());
}

#[test]
fn alpha_sweep_expands_to_three_runs() {
    let mut c = ExperimentConfig::from_json(
        r#"{
            "scenario": "sweep",
            "data_spec": {
                "input_law": "uniform_sphere",
                "target": { "kind": "teacher_logistic" },
                "noise_sigma": 0.3,
                "noise_law": "uniform_bounded",
                "c_x": 1.0,
                "c_y": 1.6
            },
            "net": { "d": 3, "m": 20, "init": { "law": "gaussian", "nu": 1.0 } },
            "gd": { "eta": 0.5, "t_max": 1 },
            "n_grid": [10, 20],
            "replicates": 2,
            "override_width": true,
            "audit": { "test_size": 200 },
            "sweep": { "base_scenario": "consistency", "alphas": [0.25, 0.5, 0.75] }
        }"#,
    )
    .unwrap();
    c.validate().unwrap();
    let configs = expand_sweep(&c).unwrap();
    assert_eq!(configs.len(), 3);
    assert!(configs.iter().all(|k| k.scenario == Scenario::Consistency && k.sweep.is_none()));
    let dir = tempfile::tempdir().unwrap();
    let (index, _) = experiments::sweep(&configs, Some(dir.path())).unwrap();
    assert_eq!(index.entries.len(), 3);
    assert!(index.entries.iter().all(|e| e.status == RunStatus::Ok), "{index:?}");
    assert_eq!(index.entries.iter().map(|e| e.alpha.unwrap()).collect::<Vec<_>>(), [0.25, 0.5, 0.75]);
    for k in 0..3 {
        assert!(dir.path().join(format!("run-{k:03}/manifest.json")).exists());
    }
    c.sweep = Some(SweepSpec { base_scenario: Scenario::Sweep, alphas: vec![], seeds: vec![], m_values: vec![] });
    assert!(c.validate().is_err());
}

#[test]
fn consistency_below_width_is_rejected_unless_overridden() {
    let mut c = ExperimentConfig::from_json(
        r#"{
            "scenario": "consistency",
            "data_spec": {
                "input_law": "uniform_sphere",
                "target": { "kind": "teacher_logistic" },
                "noise_sigma": 0.3,
                "noise_law": "uniform_bounded",
                "c_x": 1.0,
                "c_y": 1.6
            },
            "net": { "d": 3, "m": 20, "init": { "law": "gaussian", "nu": 1.0 } },
            "gd": { "eta": 0.5, "t_max": 1 },
            "alpha": 0.5,
            "n_grid": [10, 40],
            "replicates": 3,
            "audit": { "test_size": 500 }
        }"#,
    )
    .unwrap();
    assert!(experiments::run(&c).is_err());
    c.auto_width = true;
    let a = experiments::run(&c).unwrap();
    let m = a.manifest.constants["m"];
    assert!(m >= a.manifest.constants["width_min"]);
    assert_eq!(a.table("consistency").unwrap().column("T").unwrap(), [4.0, 7.0]);
    let rep = a.report("excess risk non-increasing in n").unwrap();
    assert_ne!(rep.verdict, Verdict::VoidPrecondition);
}

#[test]
fn small_stability_and_fig1_runs() {
    let mut c = small_train();
    c.scenario = Scenario::StabilityAudit;
    c.eta_fraction = None;
    c.gd = GDConfig::new(0.5, 5);
    c.auto_width = true;
    c.audit.test_size = 500;
    let a = experiments::run(&c).unwrap();
    let names: Vec<&str> = a.reports.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["on-average parameter stability", "generalisation gap"]);
    assert!(a.reports.iter().all(|r| r.holds()), "{:?}", a.reports);
    assert_eq!(a.table("stability").unwrap().rows.len(), 6);

    let mut f = small_train();
    f.scenario = Scenario::Fig1;
    f.data_spec = None;
    f.net.d = 10;
    f.m_grid = vec![20, 80];
    f.replicates = 2;
    f.gd = GDConfig::new(1.0, 15);
    let a = experiments::run(&f).unwrap();
    let probes = a.table("probes").unwrap();
    assert_eq!(probes.rows.len(), 2 * 2 * 16);
    assert_eq!(probes.column("min_over_t").unwrap().iter().filter(|&&v| v == 1.0).count(), 4);
    assert_eq!(a.table("fig1_summary").unwrap().rows.len(), 2);
}
