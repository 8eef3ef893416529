//! Experiment configs, scenario dispatch and run artifacts.
//!
//! A run writes `manifest.json`, one CSV per table and `reports.json` into
//! its output directory. Every random draw derives from `master_seed`, and
//! CSV cells use the shortest round-trip formatting, so re-running the
//! config stored in a manifest reproduces the CSVs byte for byte.

mod config;
mod scenarios;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{expand_sweep, AuditOptions, AuditPart, DataConfig, ExperimentConfig, NetConfig, Scenario, SweepSpec, TargetConfig};

use crate::bounds::BoundReport;
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

/// A named CSV table. Cells are kept as text so that writing is lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    /// Parsed values of one column; non-numeric cells become NaN.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j].parse().unwrap_or(f64::NAN)).collect())
    }

    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(self.file_name()))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip text of a float.
pub fn cell(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
    /// The config as given, after command-line overrides. Running it again
    /// reproduces this run.
    pub config: ExperimentConfig,
    pub seeds: BTreeMap<String, u64>,
    /// Realised constants (`C0`, `rho`, `epsilon`, `b`, `b_tilde`, ...).
    pub constants: BTreeMap<String, f64>,
    pub versions: BTreeMap<String, String>,
    /// Rayon worker threads. Results do not depend on it.
    pub workers: usize,
    pub wall_time_s: f64,
    pub tables: Vec<String>,
    pub violations: usize,
}

#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub manifest: Manifest,
    pub tables: Vec<Table>,
    pub reports: Vec<BoundReport>,
    /// Where the artifact was written, if anywhere.
    pub dir: Option<PathBuf>,
}

impl RunArtifact {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn report(&self, name: &str) -> Option<&BoundReport> {
        self.reports.iter().find(|r| r.name == name)
    }

    pub fn violations(&self) -> usize {
        self.reports.iter().filter(|r| r.verdict.is_violation()).count()
    }
}

/// What a scenario hands back to [`run`].
#[derive(Debug, Default)]
struct ScenarioOutput {
    tables: Vec<Table>,
    reports: Vec<BoundReport>,
    constants: BTreeMap<String, f64>,
    seeds: BTreeMap<String, u64>,
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("gdstab-core".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("manifest".to_string(), MANIFEST_VERSION.to_string()),
    ])
}

/// Runs one config. Sweeps go through [`sweep`].
///
/// When `output_dir` is set the artifact is written there; a failing run
/// still writes its manifest with `status = failed` and the cause.
pub fn run(config: &ExperimentConfig) -> Result<RunArtifact> {
    let start = Instant::now();
    let outcome = config.validate().and_then(|()| match config.scenario {
        Scenario::Train => scenarios::train(config),
        Scenario::StabilityAudit => scenarios::stability_audit(config),
        Scenario::Fig1 => scenarios::fig1(config),
        Scenario::BoundsAudit => scenarios::bounds_audit(config),
        Scenario::NtkCompare => scenarios::ntk_compare(config),
        Scenario::Consistency => scenarios::consistency(config),
        Scenario::Sweep => Err(Error::Config("sweep configs run through sweep()".into())),
    });
    let wall = start.elapsed().as_secs_f64();
    let (out, failure) = match outcome {
        Ok(o) => (o, None),
        Err(e) => (ScenarioOutput::default(), Some(e)),
    };
    let mut seeds = out.seeds;
    seeds.insert("master_seed".into(), config.master_seed);
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        status: if failure.is_some() { RunStatus::Failed } else { RunStatus::Ok },
        cause: failure.as_ref().map(|e| e.to_string()),
        config: config.clone(),
        seeds,
        constants: out.constants,
        versions: versions(),
        workers: rayon::current_num_threads(),
        wall_time_s: wall,
        tables: out.tables.iter().map(Table::file_name).collect(),
        violations: out.reports.iter().filter(|r| r.verdict.is_violation()).count(),
    };
    let artifact = RunArtifact {
        manifest,
        tables: out.tables,
        reports: out.reports,
        dir: config.output_dir.clone(),
    };
    if let Some(dir) = &config.output_dir {
        write_artifact(&artifact, dir)?;
    }
    match failure {
        None => Ok(artifact),
        Some(e) => Err(e),
    }
}

fn write_artifact(a: &RunArtifact, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for t in &a.tables {
        t.write_csv(dir)?;
    }
    fs::write(dir.join("reports.json"), serde_json::to_string_pretty(&a.reports)?)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&a.manifest)?)?;
    Ok(())
}

/// Realised constants (`C0`, `rho`, `epsilon`, `b`, `b_tilde`, width, step
/// limit, ...) of a config without running it.
pub fn constants(config: &ExperimentConfig) -> Result<BTreeMap<String, f64>> {
    config.validate()?;
    if config.scenario == Scenario::Sweep {
        return Err(Error::Config("constants are per run; expand the sweep first".into()));
    }
    scenarios::constants(config)
}

/// Reads an experiment config, or the config stored in a manifest.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    config_from_text(&text)
}

/// Parses either a config document or a manifest (recognised by its
/// `manifest_version` key).
pub fn config_from_text(text: &str) -> Result<ExperimentConfig> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    match value.get("manifest_version") {
        Some(_) => {
            let cfg = value
                .get("config")
                .cloned()
                .ok_or_else(|| Error::Config("manifest has no config".into()))?;
            serde_json::from_value(cfg).map_err(|e| Error::Config(e.to_string()))
        }
        None => ExperimentConfig::from_json(text),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub index: usize,
    pub scenario: Scenario,
    pub master_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub m: usize,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
    /// Kind of the failure: `config`, `numeric` or `other`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure_kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub violations: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepIndex {
    pub entries: Vec<SweepEntry>,
}

/// Runs independent configs concurrently. Run `k` writes into
/// `out/run-k` when `out` is given, and `out/index.json` lists all runs. A
/// failing run is recorded in the index and does not stop the others.
pub fn sweep(configs: &[ExperimentConfig], out: Option<&Path>) -> Result<(SweepIndex, Vec<Option<RunArtifact>>)> {
    let results: Vec<(SweepEntry, Option<RunArtifact>)> = configs
        .par_iter()
        .enumerate()
        .map(|(k, c)| {
            let mut c = c.clone();
            c.output_dir = out.map(|o| o.join(format!("run-{k:03}")));
            let r = run(&c);
            let entry = SweepEntry {
                index: k,
                scenario: c.scenario,
                master_seed: c.master_seed,
                alpha: c.alpha,
                m: c.net.m,
                status: if r.is_ok() { RunStatus::Ok } else { RunStatus::Failed },
                cause: r.as_ref().err().map(|e| e.to_string()),
                failure_kind: r.as_ref().err().map(|e| failure_kind(e).to_string()),
                dir: c.output_dir.clone(),
                violations: r.as_ref().map_or(0, RunArtifact::violations),
            };
            (entry, r.ok())
        })
        .collect();
    let (entries, artifacts): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let index = SweepIndex { entries };
    if let Some(o) = out {
        fs::create_dir_all(o)?;
        fs::write(o.join("index.json"), serde_json::to_string_pretty(&index)?)?;
    }
    Ok((index, artifacts))
}

pub fn failure_kind(e: &Error) -> &'static str {
    if e.is_numeric() {
        "numeric"
    } else if matches!(
        e,
        Error::Config(_) | Error::InvalidSpec(_) | Error::UnknownActivation(_) | Error::DimensionMismatch { .. } | Error::Json(_)
    ) {
        "config"
    } else {
        "other"
    }
}
