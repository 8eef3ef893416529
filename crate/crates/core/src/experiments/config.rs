use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{fig1_spec, DataSpec, InputLaw, NoiseLaw, TargetFunction};
use crate::error::{Error, Result};
use crate::model::{ActivationSpec, InitLaw, OutputMode};
use crate::optimize::GDConfig;
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Train,
    StabilityAudit,
    Fig1,
    BoundsAudit,
    NtkCompare,
    Consistency,
    Sweep,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::StabilityAudit => "stability_audit",
            Self::Fig1 => "fig1",
            Self::BoundsAudit => "bounds_audit",
            Self::NtkCompare => "ntk_compare",
            Self::Consistency => "consistency",
            Self::Sweep => "sweep",
        }
    }
}

/// Target of the data law. A missing `w_star` is drawn from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    TeacherLogistic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        w_star: Option<Vec<f64>>,
    },
    Linear {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        w_star: Option<Vec<f64>>,
    },
}

/// Data law without dimension and seed; those come from `net.d` and the
/// master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub input_law: InputLaw,
    pub target: TargetConfig,
    #[serde(default)]
    pub noise_sigma: f64,
    pub noise_law: NoiseLaw,
    pub c_x: f64,
    pub c_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub d: usize,
    pub m: usize,
    #[serde(default = "default_activation")]
    pub activation: String,
    pub init: InitLaw,
    #[serde(default)]
    pub u_mode: OutputMode,
}

fn default_activation() -> String {
    "sigmoid".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditPart {
    Derivatives,
    Spectral,
    OptError,
}

/// Knobs of the individual audits. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditOptions {
    /// Test-set size for population risks.
    pub test_size: usize,
    pub stability_z: f64,
    pub gap_z: f64,
    pub descent_tol: f64,
    pub path_tol: f64,

    pub parts: Vec<AuditPart>,
    pub derivative_instances: usize,
    pub fd_step: f64,
    pub fd_rel_tol: f64,
    pub symmetry_tol: f64,
    pub hvp_tol: f64,
    /// Largest `dm` of a derivative instance.
    pub derivative_max_dm: usize,
    pub spectral_trials: usize,
    pub spectral_d: usize,
    pub spectral_m: usize,
    pub spectral_n: usize,
    pub spectral_gd_steps: usize,
    pub spectral_max_displacement: f64,
    /// Redraws per trial when `L_S(W~) <= C0^2` fails.
    pub spectral_attempts: usize,
    pub oracle_restarts: usize,
    pub oracle_eta: f64,
    pub oracle_iters: usize,
    /// Constant of the combined risk bound; `b` when absent.
    pub corollary_c: Option<f64>,

    pub mc_samples: usize,
    pub delta: f64,
    pub frequency_slack: f64,
    pub redraws: usize,
    pub taylor_probes: usize,
    pub taylor_max_radius: f64,
    pub chain_rel_tol: f64,
    pub linear_residual_tol: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            test_size: 10_000,
            stability_z: 3.0,
            gap_z: 2.0,
            descent_tol: 1e-12,
            path_tol: 1e-9,
            parts: vec![AuditPart::Derivatives, AuditPart::Spectral, AuditPart::OptError],
            derivative_instances: 100,
            fd_step: 1e-5,
            fd_rel_tol: 1e-5,
            symmetry_tol: 1e-10,
            hvp_tol: 1e-9,
            derivative_max_dm: 200,
            spectral_trials: 100,
            spectral_d: 5,
            spectral_m: 20,
            spectral_n: 10,
            spectral_gd_steps: 20,
            spectral_max_displacement: 3.0,
            spectral_attempts: 20,
            oracle_restarts: 3,
            oracle_eta: 1.0,
            oracle_iters: 300,
            corollary_c: None,
            mc_samples: 100_000,
            delta: 0.1,
            frequency_slack: 0.05,
            redraws: 200,
            taylor_probes: 1000,
            taylor_max_radius: 3.0,
            chain_rel_tol: 1e-8,
            linear_residual_tol: 1e-10,
        }
    }
}

/// Cartesian product of variations over a base scenario. Empty lists leave
/// the base value alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base_scenario: Scenario,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub m_values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Optional for `fig1`, which defaults to the figure's data law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_spec: Option<DataConfig>,
    pub net: NetConfig,
    pub gd: GDConfig,
    #[serde(default = "one")]
    pub replicates: usize,
    /// Training-set size.
    #[serde(default)]
    pub n: usize,
    /// Early-stopping exponent, `T = ⌈n^α⌉`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_grid: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub m_grid: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub master_seed: u64,
    /// Replaces `gd.eta` by this fraction of `1/(2ρ)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_fraction: Option<f64>,
    #[serde(default)]
    pub override_eta_limit: bool,
    /// Raise `m` to the sufficient width for the horizon used.
    #[serde(default)]
    pub auto_width: bool,
    /// Accept `m` below the sufficient width.
    #[serde(default)]
    pub override_width: bool,
    #[serde(default)]
    pub audit: AuditOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn activation(&self) -> Result<ActivationSpec> {
        ActivationSpec::by_name(&self.net.activation)
    }

    /// Seed of the data law (teacher and base draw).
    pub fn data_seed(&self) -> u64 {
        seeds::derive_seed(self.master_seed, &[seeds::tag::INPUTS])
    }

    /// Resolved data law, teacher drawn when not given.
    pub fn data_law(&self) -> Result<DataSpec> {
        let seed = self.data_seed();
        let d = self.net.d;
        let Some(dc) = &self.data_spec else {
            if self.scenario == Scenario::Fig1 {
                let spec = fig1_spec(seed);
                if spec.d != d {
                    return Err(Error::Config(format!("fig1 data law has d = {}, net.d = {d}", spec.d)));
                }
                return Ok(spec);
            }
            return Err(Error::Config(format!("scenario {} needs data_spec", self.scenario.as_str())));
        };
        let draw = |w: &Option<Vec<f64>>| match w {
            Some(w) => w.clone(),
            None => match TargetFunction::random_teacher(d, seed) {
                TargetFunction::TeacherLogistic { w_star } => w_star,
                _ => unreachable!(),
            },
        };
        let target = match &dc.target {
            TargetConfig::TeacherLogistic { w_star } => TargetFunction::TeacherLogistic { w_star: draw(w_star) },
            TargetConfig::Linear { w_star } => TargetFunction::Linear { w_star: draw(w_star) },
        };
        let spec = DataSpec {
            d,
            input_law: dc.input_law,
            target,
            noise_sigma: dc.noise_sigma,
            noise_law: dc.noise_law,
            c_x: dc.c_x,
            c_y: dc.c_y,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Scenario-specific checks; runs before any compute.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.net.d == 0 || self.net.m == 0 {
            return bad("net.d and net.m must be positive".into());
        }
        self.activation()?;
        if let InitLaw::Gaussian { nu } = self.net.init {
            if !(nu > 0.0 && nu.is_finite()) {
                return bad(format!("init nu must be positive, got {nu}"));
            }
        }
        if self.scenario != Scenario::Sweep {
            self.gd.validate()?;
            self.data_law()?;
        }
        if let Some(f) = self.eta_fraction {
            if !(f > 0.0 && f.is_finite()) {
                return bad(format!("eta_fraction must be positive, got {f}"));
            }
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        let needs_n = matches!(
            self.scenario,
            Scenario::Train | Scenario::StabilityAudit | Scenario::Fig1 | Scenario::NtkCompare
        ) || (self.scenario == Scenario::BoundsAudit && self.audit.parts.contains(&AuditPart::OptError));
        if needs_n && self.n == 0 {
            return bad(format!("scenario {} needs n >= 1", self.scenario.as_str()));
        }
        match self.scenario {
            Scenario::StabilityAudit if self.n < 2 => return bad("stability_audit needs n >= 2".into()),
            Scenario::Fig1 => {
                if self.m_grid.is_empty() {
                    return bad("fig1 needs a non-empty m_grid".into());
                }
                if self.activation()?.name() != "sigmoid" {
                    return bad("fig1 uses the sigmoid activation".into());
                }
            }
            Scenario::Consistency => {
                let Some(a) = self.alpha else {
                    return bad("consistency needs alpha".into());
                };
                if !(a > 0.0 && a.is_finite()) {
                    return bad(format!("alpha must be positive, got {a}"));
                }
                if self.n_grid.is_empty() || self.n_grid.contains(&0) {
                    return bad("consistency needs a non-empty n_grid of positive sizes".into());
                }
                if self.data_spec.as_ref().is_none_or(|d| d.noise_sigma == 0.0) {
                    return bad("consistency needs noisy labels".into());
                }
            }
            Scenario::NtkCompare => {
                if !matches!(self.net.init, InitLaw::Gaussian { .. }) {
                    return bad("ntk_compare needs a Gaussian initialisation".into());
                }
                if self.audit.taylor_probes == 0 || self.audit.redraws == 0 {
                    return bad("ntk_compare needs taylor_probes and redraws >= 1".into());
                }
            }
            Scenario::BoundsAudit => {
                if self.audit.parts.is_empty() {
                    return bad("bounds_audit needs at least one part".into());
                }
                if self.audit.parts.contains(&AuditPart::Spectral) && self.audit.spectral_trials == 0 {
                    return bad("spectral part needs spectral_trials >= 1".into());
                }
            }
            Scenario::Sweep => {
                let Some(sw) = &self.sweep else {
                    return bad("sweep needs a sweep section".into());
                };
                if sw.base_scenario == Scenario::Sweep {
                    return bad("sweeps cannot nest".into());
                }
                for c in expand_sweep(self)? {
                    c.validate()?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Concrete configs of a sweep, in a fixed order (alpha, then seed, then m).
pub fn expand_sweep(config: &ExperimentConfig) -> Result<Vec<ExperimentConfig>> {
    let sw = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep needs a sweep section".into()))?;
    let alphas: Vec<Option<f64>> = if sw.alphas.is_empty() { vec![config.alpha] } else { sw.alphas.iter().map(|&a| Some(a)).collect() };
    let seeds: Vec<u64> = if sw.seeds.is_empty() { vec![config.master_seed] } else { sw.seeds.clone() };
    let ms: Vec<usize> = if sw.m_values.is_empty() { vec![config.net.m] } else { sw.m_values.clone() };
    let mut out = Vec::new();
    for &alpha in &alphas {
        for &seed in &seeds {
            for &m in &ms {
                let mut c = config.clone();
                c.scenario = sw.base_scenario;
                c.sweep = None;
                c.alpha = alpha;
                c.master_seed = seed;
                c.net.m = m;
                c.output_dir = None;
                out.push(c);
            }
        }
    }
    Ok(out)
}
