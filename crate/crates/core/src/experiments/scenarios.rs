use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{AuditPart, ExperimentConfig};
use super::{cell, ScenarioOutput, Table};
use crate::bounds::{self, spectral_audit, BoundConstants, BoundReport, SpectralAuditConfig};
use crate::data::{fresh_sample, sample_dataset, sample_keyed, DataSpec, Dataset, Sample, TargetFunction};
use crate::error::{Error, Result};
use crate::model::{ActivationSpec, InitLaw, OutputMode, ProblemConstants, ShallowNet};
use crate::ntk::{self, GramKind, LinearTarget};
use crate::numerics::{dot, norm};
use crate::optimize::{gd_train, pinv_linear_solution, solve_oracle, step_size_limit, GDConfig, OracleObjective};
use crate::seeds::{self, tag};
use crate::stability::{self, mean_and_std_err, population_risk, replacement_sweep, GenGapEstimate};

/// Floor for `C0` when the network interpolates the sample at init.
const MIN_C0: f64 = 1e-12;

/// Extra stream keys for the audit parts that draw their own instances.
mod part {
    pub const DERIVATIVES: u64 = 1;
    pub const SPECTRAL: u64 = 2;
    pub const TAYLOR: u64 = 3;
    pub const FIG1_INDEX: u64 = 4;
}

fn max_sample_loss(net: &ShallowNet, data: &Dataset) -> Result<f64> {
    data.samples().iter().try_fold(0f64, |acc, s| Ok(acc.max(net.sample_loss(s)?)))
}

fn problem_for(spec: &DataSpec, c0: f64) -> Result<ProblemConstants> {
    ProblemConstants::new(spec.c_x, spec.c_y, c0.max(MIN_C0))
}

fn init_net(cfg: &ExperimentConfig, d: usize, m: usize, act: &ActivationSpec, seed: u64) -> Result<ShallowNet> {
    ShallowNet::init(d, m, act.clone(), cfg.net.init, cfg.net.u_mode, seed)
}

fn replicate_spec(spec: &DataSpec, keys: &[u64]) -> DataSpec {
    spec.with_seed(seeds::derive_seed(spec.seed, keys))
}

fn resolve_eta(cfg: &ExperimentConfig, limit: f64) -> f64 {
    cfg.eta_fraction.map_or(cfg.gd.eta, |f| f * limit)
}

fn gd_with_eta(cfg: &ExperimentConfig, eta: f64) -> GDConfig {
    GDConfig { eta, ..cfg.gd }
}

fn insert_constants(map: &mut BTreeMap<String, f64>, c: &BoundConstants, p: &ProblemConstants) {
    for (k, v) in [
        ("rho", c.rho),
        ("epsilon", c.epsilon),
        ("epsilon_tilde", c.epsilon_tilde),
        ("b", c.b),
        ("b_tilde", c.b_tilde),
        ("width_min", c.width_min),
        ("c_0", p.c_0),
        ("c_x", p.c_x),
        ("c_y", p.c_y),
    ] {
        map.insert(k.into(), v);
    }
}

/// `⌈n^α⌉`, with exact powers kept exact.
pub(super) fn horizon(n: usize, alpha: f64) -> usize {
    let v = (n as f64).powf(alpha);
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        v.ceil() as usize
    }
}

fn gaussian_direction(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let r = norm(&v);
        if r > 0.0 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

fn shifted(net: &ShallowNet, dir: &[f64], h: f64) -> Result<ShallowNet> {
    net.with_weights(net.weights().iter().zip(dir).map(|(a, b)| a + h * b).collect())
}

// ---------------------------------------------------------------- train

struct TrainRun {
    eta: f64,
    c_0: f64,
    risk0: f64,
    final_risk: f64,
    max_increase: f64,
    max_path_excess: f64,
    rows: Vec<Vec<String>>,
    constants: Option<(BoundConstants, ProblemConstants, f64)>,
}

pub(super) fn train(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    let spec = cfg.data_law()?;
    let act = cfg.activation()?;
    let bnds = act.bounds();
    let runs: Vec<Result<TrainRun>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let data = sample_dataset(&replicate_spec(&spec, &[tag::REPLICATE, r as u64]), cfg.n)?;
            let net0 = init_net(cfg, cfg.net.d, cfg.net.m, &act, seeds::derive_seed(cfg.master_seed, &[tag::INIT, r as u64]))?;
            let problem = problem_for(&spec, max_sample_loss(&net0, &data)?)?;
            let limit = step_size_limit(&problem, &bnds, cfg.net.m);
            let gd = gd_with_eta(cfg, resolve_eta(cfg, limit));
            gd.check_step_size(limit, cfg.override_eta_limit)?;
            let tr = gd_train(&net0, &data, &gd)?;
            let risk0 = tr.risks[0];
            let worst_or_zero = |v: f64| if v == f64::NEG_INFINITY { 0.0 } else { v };
            let max_increase = worst_or_zero(tr.risks.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max));
            let max_path_excess = worst_or_zero(
                tr.points
                    .iter()
                    .filter(|p| p.t >= 1)
                    .map(|p| p.path_norm - (2.0 * gd.eta * p.t as f64 * risk0).sqrt())
                    .fold(f64::NEG_INFINITY, f64::max),
            );
            let rows = if r == 0 {
                tr.points
                    .iter()
                    .map(|p| vec![p.t.to_string(), cell(p.risk), cell(p.path_norm), cell(p.grad_norm)])
                    .collect()
            } else {
                Vec::new()
            };
            Ok(TrainRun {
                eta: gd.eta,
                c_0: problem.c_0,
                risk0,
                final_risk: *tr.risks.last().expect("T + 1 risks"),
                max_increase,
                max_path_excess,
                rows,
                constants: (r == 0).then(|| (bounds::compute_constants(&problem, &bnds, cfg.net.m, gd.eta, gd.t_max), problem, limit)),
            })
        })
        .collect();
    let mut out = ScenarioOutput::default();
    let mut traj = Table::new("trajectory", &["t", "risk", "path_norm", "grad_norm"]);
    let mut summary = Table::new(
        "train_summary",
        &["replicate", "eta", "c_0", "initial_risk", "final_risk", "max_increase", "max_path_excess"],
    );
    let (mut inc, mut path) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (r, run) in runs.into_iter().enumerate() {
        let run = run?;
        inc = inc.max(run.max_increase);
        path = path.max(run.max_path_excess);
        summary.push(vec![
            r.to_string(),
            cell(run.eta),
            cell(run.c_0),
            cell(run.risk0),
            cell(run.final_risk),
            cell(run.max_increase),
            cell(run.max_path_excess),
        ]);
        for row in run.rows {
            traj.push(row);
        }
        if let Some((c, p, limit)) = run.constants {
            insert_constants(&mut out.constants, &c, &p);
            out.constants.insert("eta".into(), run.eta);
            out.constants.insert("eta_limit".into(), limit);
        }
    }
    let runs_n = cfg.replicates as f64;
    out.reports.push(
        BoundReport::deterministic_with_tol(
            "risk non-increasing",
            inc,
            0.0,
            cfg.audit.descent_tol,
            "descent lemma for eta <= 1/(2 rho): L_S(W_{t+1}) <= L_S(W_t); worst step increase over runs",
        )
        .detail("runs", runs_n),
    );
    out.reports.push(
        BoundReport::deterministic_with_tol(
            "path norm",
            path,
            0.0,
            cfg.audit.path_tol,
            "|W_t - W_0|_F <= sqrt(2 eta t L_S(W_0)); worst excess over recorded t and runs",
        )
        .detail("runs", runs_n),
    );
    out.tables.push(traj);
    out.tables.push(summary);
    out.seeds.insert("data".into(), spec.seed);
    Ok(out)
}

// ---------------------------------------------------------------- stability

struct StabilityReplicate {
    records: Vec<(usize, f64, f64)>,
    measured: f64,
    grad_sq_sum: f64,
    risks: Vec<f64>,
    train_risk: f64,
    test_risk: f64,
}

/// Width requirement for horizon `eta_t`, raising `m` when `auto_width` is
/// set. Returns the net, the problem constants and `(m, width)`.
fn resolve_width(
    cfg: &ExperimentConfig,
    act: &ActivationSpec,
    spec: &DataSpec,
    datasets: &[&Dataset],
    init_seed: u64,
    horizon_steps: usize,
) -> Result<(ShallowNet, ProblemConstants, f64, f64)> {
    let bnds = act.bounds();
    let mut m = cfg.net.m;
    for _ in 0..8 {
        let net0 = init_net(cfg, cfg.net.d, m, act, init_seed)?;
        let mut c0 = 0f64;
        for data in datasets {
            c0 = c0.max(max_sample_loss(&net0, data)?);
        }
        let problem = problem_for(spec, c0)?;
        let limit = step_size_limit(&problem, &bnds, m);
        let eta = resolve_eta(cfg, limit);
        let width = bounds::width_min(&problem, &bnds, eta * horizon_steps as f64);
        if !cfg.auto_width || m as f64 >= width {
            return Ok((net0, problem, eta, width));
        }
        m = width.ceil() as usize;
    }
    Err(Error::Config("automatic width did not settle within 8 rounds".into()))
}

pub(super) fn stability_audit(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    let spec = cfg.data_law()?;
    let act = cfg.activation()?;
    let bnds = act.bounds();
    let (n, t_max, reps) = (cfg.n, cfg.gd.t_max, cfg.replicates);
    if t_max == 0 {
        return Err(Error::Config("stability_audit needs gd.t_max >= 1".into()));
    }
    let specs: Vec<DataSpec> = (0..reps).map(|r| replicate_spec(&spec, &[tag::REPLICATE, r as u64])).collect();
    let datasets = specs.iter().map(|s| sample_dataset(s, n)).collect::<Result<Vec<_>>>()?;
    let init_seed = seeds::derive_seed(cfg.master_seed, &[tag::INIT]);
    let (net0, problem, eta, width) = resolve_width(cfg, &act, &spec, &datasets.iter().collect::<Vec<_>>(), init_seed, t_max)?;
    let m = net0.m();
    let limit = step_size_limit(&problem, &bnds, m);
    let gd = GDConfig { record_every: 1, ..gd_with_eta(cfg, eta) };
    gd.check_step_size(limit, cfg.override_eta_limit)?;

    let mut reps_out = Vec::with_capacity(reps);
    for (r, (s, data)) in specs.iter().zip(&datasets).enumerate() {
        let fresh = (0..n).map(|i| fresh_sample(s, i, r as u64)).collect::<Result<Vec<Sample>>>()?;
        let sw = replacement_sweep(&net0, data, &fresh, &gd)?;
        let at_t = sw
            .records
            .iter()
            .find(|rec| rec.t == t_max)
            .ok_or(Error::MissingSnapshot(t_max))?
            .avg_sq_frobenius;
        let orig = &sw.original;
        reps_out.push(StabilityReplicate {
            records: sw.records.iter().map(|rec| (rec.t, rec.avg_sq_frobenius, rec.avg_sq_operator)).collect(),
            measured: at_t,
            grad_sq_sum: orig.sample_grad_sq_means[..t_max].iter().sum(),
            risks: orig.risks[..t_max].to_vec(),
            train_risk: orig.risks[t_max],
            test_risk: population_risk(&orig.final_net, s, cfg.audit.test_size, &[r as u64])?,
        });
    }

    let k = reps as f64;
    let mut stab_table = Table::new("stability", &["t", "avg_sq_fro", "avg_sq_op"]);
    for (j, &(t, _, _)) in reps_out[0].records.iter().enumerate() {
        let fro = reps_out.iter().map(|x| x.records[j].1).sum::<f64>() / k;
        let op = reps_out.iter().map(|x| x.records[j].2).sum::<f64>() / k;
        stab_table.push(vec![t.to_string(), cell(fro), cell(op)]);
    }
    let mut gap_table = Table::new("gen_gap", &["replicate", "train_risk", "test_risk", "gap", "stability_at_t"]);
    for (r, x) in reps_out.iter().enumerate() {
        gap_table.push(vec![r.to_string(), cell(x.train_risk), cell(x.test_risk), cell(x.test_risk - x.train_risk), cell(x.measured)]);
    }

    let measured: Vec<f64> = reps_out.iter().map(|x| x.measured).collect();
    let (stab_mean, stab_se) = mean_and_std_err(&measured);
    let grad_sq = reps_out.iter().map(|x| x.grad_sq_sum).sum::<f64>() / k;
    let eps = bounds::epsilon(&problem, &bnds, m, eta * t_max as f64);
    let in_regime = |rep: BoundReport| {
        rep.precondition("eta <= 1/(2 rho)", eta <= limit)
            .precondition("m >= width_min", m as f64 >= width)
            .detail("m", m as f64)
            .detail("width_min", width)
    };
    let mut out = ScenarioOutput::default();
    out.reports.push(in_regime(stability::stability_bound_audit(
        stab_mean,
        stab_se,
        grad_sq,
        eta,
        t_max - 1,
        n,
        eps,
        cfg.audit.stability_z,
    )));
    let gaps: Vec<f64> = reps_out.iter().map(|x| x.test_risk - x.train_risk).collect();
    let (gap_mean, gap_se) = mean_and_std_err(&gaps);
    let est = GenGapEstimate {
        gap_mean,
        gap_std_err: gap_se,
        replicates: reps,
        test_size: cfg.audit.test_size,
    };
    let mean_risks: Vec<f64> = (0..t_max).map(|j| reps_out.iter().map(|x| x.risks[j]).sum::<f64>() / k).collect();
    let b = bounds::gen_gap_b(&problem, &bnds);
    out.reports.push(in_regime(stability::gen_gap_audit(&est, &mean_risks, eta, n, b, cfg.audit.gap_z)));

    insert_constants(&mut out.constants, &bounds::compute_constants(&problem, &bnds, m, eta, t_max), &problem);
    out.constants.insert("eta".into(), eta);
    out.constants.insert("eta_limit".into(), limit);
    out.constants.insert("m".into(), m as f64);
    out.tables.push(stab_table);
    out.tables.push(gap_table);
    out.seeds.insert("data".into(), spec.seed);
    out.seeds.insert("init".into(), init_seed);
    Ok(out)
}

// ---------------------------------------------------------------- fig1

struct Fig1Run {
    m: usize,
    rep: usize,
    rows: Vec<Vec<String>>,
    min_inner: f64,
    min_normalised: f64,
    max_ratio: f64,
    lemma_failures: usize,
    steps: usize,
    width: f64,
}

pub(super) fn fig1(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    let spec = cfg.data_law()?;
    let act = cfg.activation()?;
    let data = sample_dataset(&spec, cfg.n)?;
    let jobs: Vec<(usize, usize)> = cfg.m_grid.iter().flat_map(|&m| (0..cfg.replicates).map(move |r| (m, r))).collect();
    let runs: Vec<Result<Fig1Run>> = jobs
        .par_iter()
        .map(|&(m, rep)| {
            let net0 = init_net(cfg, cfg.net.d, m, &act, seeds::derive_seed(cfg.master_seed, &[tag::INIT, m as u64, rep as u64]))?;
            let problem = problem_for(&spec, max_sample_loss(&net0, &data)?)?;
            let i = seeds::stream(cfg.master_seed, &[tag::PROBE, part::FIG1_INDEX, m as u64, rep as u64]).random_range(0..data.len());
            let gd = cfg.gd;
            let probes = stability::probe_pair_lockstep(&net0, &data, i, fresh_sample(&spec, i, rep as u64)?, &gd, &problem)?;
            let live = || probes.iter().filter(|p| p.t >= 1 && !p.degenerate);
            let argmin = live().min_by(|a, b| a.inner_product.total_cmp(&b.inner_product)).map(|p| p.t);
            let min_inner = live().map(|p| p.inner_product).fold(f64::INFINITY, f64::min);
            let min_normalised = live().map(|p| p.inner_product / p.param_distance_sq).fold(f64::INFINITY, f64::min);
            let max_ratio = live().map(|p| p.expansiveness_ratio).fold(0f64, f64::max);
            let lemma_failures = probes.iter().filter(|p| p.t >= 1 && !p.lemma_holds()).count();
            let rows = probes
                .iter()
                .map(|p| {
                    vec![
                        m.to_string(),
                        rep.to_string(),
                        p.t.to_string(),
                        cell(p.inner_product),
                        cell(p.rhs_coercive),
                        cell(p.rhs_slack),
                        cell(p.expansiveness_ratio),
                        u8::from(Some(p.t) == argmin).to_string(),
                    ]
                })
                .collect();
            Ok(Fig1Run {
                m,
                rep,
                rows,
                min_inner,
                min_normalised,
                max_ratio,
                lemma_failures,
                steps: gd.t_max,
                width: bounds::width_min(&problem, &act.bounds(), gd.eta * gd.t_max as f64),
            })
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let mut probe_table = Table::new(
        "probes",
        &["m", "rep", "t", "inner_product", "rhs_coercive", "rhs_slack", "expansiveness_ratio", "min_over_t"],
    );
    let mut per_rep = Table::new("fig1_runs", &["m", "rep", "min_inner_product", "min_normalised_inner_product", "max_expansiveness_ratio"]);
    for run in &runs {
        for row in &run.rows {
            probe_table.push(row.clone());
        }
        per_rep.push(vec![run.m.to_string(), run.rep.to_string(), cell(run.min_inner), cell(run.min_normalised), cell(run.max_ratio)]);
    }
    let mut summary = Table::new(
        "fig1_summary",
        &["m", "mean_min_inner_product", "std_err", "worst_min_inner_product", "negative_part", "worst_normalised", "max_expansiveness_ratio"],
    );
    // negative part of the worst minimum, per m in grid order
    let mut neg = Vec::new();
    let mut lemma_failures = 0;
    let mut lemma_steps = 0;
    let mut below_width = false;
    for &m in &cfg.m_grid {
        let group: Vec<&Fig1Run> = runs.iter().filter(|r| r.m == m).collect();
        let mins: Vec<f64> = group.iter().map(|r| r.min_inner).collect();
        let (mean, se) = mean_and_std_err(&mins);
        let worst = mins.iter().copied().fold(f64::INFINITY, f64::min);
        let worst_norm = group.iter().map(|r| r.min_normalised).fold(f64::INFINITY, f64::min);
        let ratio = group.iter().map(|r| r.max_ratio).fold(0f64, f64::max);
        let neg_part = (-worst).max(0.0);
        neg.push((m, neg_part));
        for r in &group {
            lemma_failures += r.lemma_failures;
            lemma_steps += r.steps;
            below_width |= (m as f64) < r.width;
        }
        summary.push(vec![m.to_string(), cell(mean), cell(se), cell(worst), cell(neg_part), cell(worst_norm), cell(ratio)]);
    }

    let mut out = ScenarioOutput::default();
    let (m0, neg0) = neg[0];
    let k_fit = neg0 * (m0 as f64).sqrt();
    let scaled = neg.iter().map(|&(m, v)| v * (m as f64).sqrt()).fold(0f64, f64::max);
    out.reports.push(
        BoundReport::deterministic(
            "min inner product >= -K/sqrt(m)",
            scaled,
            k_fit,
            "almost co-coercivity, inner product of GD differences >= -K/sqrt(m); K fitted at the smallest m, max over m of sqrt(m) * negative part",
        )
        .detail("k_fitted", k_fit),
    );
    let rise = neg.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::NEG_INFINITY, f64::max);
    out.reports.push(BoundReport::deterministic(
        "negative part non-increasing in m",
        if neg.len() < 2 { 0.0 } else { rise },
        0.0,
        "almost co-coercivity, negative part of the minimum inner product shrinks with the width",
    ));
    out.reports.push(
        BoundReport::deterministic(
            "co-coercivity lemma failure rate",
            lemma_failures as f64 / lemma_steps.max(1) as f64,
            0.0,
            "almost co-coercivity lemma inner >= 2 eta (1 - eta rho / 2) |dG|^2 - eps |dW - eta dG|^2, steps t >= 1",
        )
        .precondition("m >= width_min", !below_width),
    );
    out.tables.push(probe_table);
    out.tables.push(per_rep);
    out.tables.push(summary);
    out.seeds.insert("data".into(), spec.seed);
    Ok(out)
}

// ---------------------------------------------------------------- bounds audit

pub(super) fn bounds_audit(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    let mut out = ScenarioOutput::default();
    for p in &cfg.audit.parts {
        match p {
            AuditPart::Derivatives => derivative_checks(cfg, &mut out)?,
            AuditPart::Spectral => spectral_trials(cfg, &mut out)?,
            AuditPart::OptError => opt_error_runs(cfg, &mut out)?,
        }
    }
    Ok(out)
}

/// Random instance with inputs in the unit ball and labels in `[-1, 1]`.
fn derivative_instance(cfg: &ExperimentConfig, act: &ActivationSpec, k: usize) -> Result<(ShallowNet, Dataset, Vec<f64>)> {
    let mut rng = seeds::stream(cfg.master_seed, &[tag::PROBE, part::DERIVATIVES, k as u64]);
    let d = rng.random_range(1..=10usize);
    let m = rng.random_range(1..=100usize);
    let n = rng.random_range(1..=10usize);
    let net = ShallowNet::init(d, m, act.clone(), InitLaw::Gaussian { nu: 1.0 }, OutputMode::Random, rng.random())?;
    let samples = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = norm(&x).max(1.0);
            Sample {
                x: x.iter().map(|v| v / r).collect(),
                y: rng.random_range(-1.0..1.0),
            }
        })
        .collect();
    let dir = gaussian_direction(&mut rng, d * m);
    Ok((net, Dataset::new(samples), dir))
}

fn derivative_checks(cfg: &ExperimentConfig, out: &mut ScenarioOutput) -> Result<()> {
    let act = cfg.activation()?;
    let a = &cfg.audit;
    let h = a.fd_step;
    let rows: Vec<Result<(usize, usize, usize, f64, Option<(f64, f64)>)>> = (0..a.derivative_instances)
        .into_par_iter()
        .map(|k| {
            let (net, data, v) = derivative_instance(cfg, &act, k)?;
            let analytic = dot(&net.grad_empirical_risk(&data)?, &v);
            let fd = (shifted(&net, &v, h)?.empirical_risk(&data)? - shifted(&net, &v, -h)?.empirical_risk(&data)?) / (2.0 * h);
            let rel = (fd - analytic).abs() / analytic.abs().max(1e-8);
            let hess = if net.dm() <= a.derivative_max_dm {
                let dense = net.dense_hessian(&data)?;
                let hv = net.hessian_vector_product(&data, &v)?;
                let dv = dense.matvec(&v);
                let diff = hv.iter().zip(&dv).map(|(x, y)| (x - y).abs()).fold(0f64, f64::max);
                Some((dense.max_asymmetry(), diff / norm(&dv).max(1.0)))
            } else {
                None
            };
            Ok((net.d(), net.m(), data.len(), rel, hess))
        })
        .collect();
    let mut table = Table::new("derivatives", &["instance", "d", "m", "n", "grad_rel_err", "hessian_asymmetry", "hvp_err"]);
    let (mut worst_rel, mut worst_sym, mut worst_hvp, mut hess_count) = (0f64, 0f64, 0f64, 0usize);
    for (k, r) in rows.into_iter().enumerate() {
        let (d, m, n, rel, hess) = r?;
        worst_rel = worst_rel.max(rel);
        let (sym, hvp) = match hess {
            Some((s, e)) => {
                worst_sym = worst_sym.max(s);
                worst_hvp = worst_hvp.max(e);
                hess_count += 1;
                (cell(s), cell(e))
            }
            None => (String::new(), String::new()),
        };
        table.push(vec![k.to_string(), d.to_string(), m.to_string(), n.to_string(), cell(rel), sym, hvp]);
    }
    let instances = a.derivative_instances as f64;
    out.reports.push(
        BoundReport::deterministic_with_tol(
            "gradient finite differences",
            worst_rel,
            a.fd_rel_tol,
            0.0,
            "central directional differences of L_S against the analytic gradient, worst relative error",
        )
        .detail("instances", instances)
        .detail("step", a.fd_step),
    );
    out.reports.push(
        BoundReport::deterministic_with_tol("hessian symmetry", worst_sym, a.symmetry_tol, 0.0, "max |H_ij - H_ji| of the dense Hessian")
            .detail("instances", hess_count as f64),
    );
    out.reports.push(
        BoundReport::deterministic_with_tol(
            "hessian-vector product",
            worst_hvp,
            a.hvp_tol,
            0.0,
            "max |Hv - H v| / max(1, |H v|) between the matrix-free product and the dense Hessian",
        )
        .detail("instances", hess_count as f64),
    );
    out.tables.push(table);
    Ok(())
}

struct SpectralTrial {
    attempts: usize,
    report: Option<(BoundReport, BoundReport)>,
}

fn spectral_trials(cfg: &ExperimentConfig, out: &mut ScenarioOutput) -> Result<()> {
    let act = cfg.activation()?;
    let a = &cfg.audit;
    let base = cfg.data_law()?;
    let (d, m) = (a.spectral_d, a.spectral_m);
    let trials: Vec<Result<SpectralTrial>> = (0..a.spectral_trials)
        .into_par_iter()
        .map(|k| {
            for attempt in 0..a.spectral_attempts.max(1) {
                let seed = seeds::derive_seed(cfg.master_seed, &[tag::PROBE, part::SPECTRAL, k as u64, attempt as u64]);
                let spec = DataSpec {
                    d,
                    target: TargetFunction::random_teacher(d, seed),
                    seed,
                    ..base.clone()
                };
                let data = sample_dataset(&spec, a.spectral_n)?;
                let net0 = init_net(cfg, d, m, &act, seed)?;
                let problem = problem_for(&spec, max_sample_loss(&net0, &data)?)?;
                let limit = step_size_limit(&problem, &act.bounds(), m);
                let w_tilde = gd_train(&net0, &data, &GDConfig::new(0.9 * limit, a.spectral_gd_steps))?.final_net;
                if w_tilde.empirical_risk(&data)? > problem.c_0 * problem.c_0 {
                    continue;
                }
                let mut rng = seeds::stream(seed, &[tag::PERTURB]);
                let radius = rng.random_range(0.0..a.spectral_max_displacement);
                let dir = gaussian_direction(&mut rng, d * m);
                let w = shifted(&w_tilde, &dir, radius)?;
                let scfg = SpectralAuditConfig { seed, ..Default::default() };
                let pair = spectral_audit(&w, &w_tilde, &data, &problem, &scfg)?;
                return Ok(SpectralTrial { attempts: attempt + 1, report: Some(pair) });
            }
            Ok(SpectralTrial { attempts: a.spectral_attempts, report: None })
        })
        .collect();
    let mut table = Table::new(
        "spectral",
        &["trial", "attempts", "lambda_max", "rho", "lambda_min_segment", "curvature_floor", "displacement", "smooth_verdict", "curvature_verdict"],
    );
    let (mut smooth_ratio, mut curv_ratio) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let (mut smooth_bad, mut curv_bad, mut void) = (0usize, 0usize, 0usize);
    for (k, t) in trials.into_iter().enumerate() {
        let t = t?;
        match t.report {
            Some((s, c)) => {
                smooth_ratio = smooth_ratio.max(s.measured / s.bound);
                curv_ratio = curv_ratio.max(c.measured / c.bound);
                smooth_bad += usize::from(!s.holds());
                curv_bad += usize::from(!c.holds());
                table.push(vec![
                    k.to_string(),
                    t.attempts.to_string(),
                    cell(s.measured),
                    cell(s.bound),
                    cell(-c.measured),
                    cell(-c.bound),
                    cell(c.details["displacement"]),
                    s.verdict.as_str().into(),
                    c.verdict.as_str().into(),
                ]);
            }
            None => {
                void += 1;
                table.push(vec![k.to_string(), t.attempts.to_string(), String::new(), String::new(), String::new(), String::new(), String::new(), "void_precondition".into(), "void_precondition".into()]);
            }
        }
    }
    let trials_f = a.spectral_trials as f64;
    out.reports.push(
        BoundReport::deterministic("hessian lambda_max <= rho", smooth_ratio, 1.0, "smoothness constant rho = C_x^2 (B'^2 + B'' B_phi + B'' C_y / sqrt m); worst lambda_max / rho over trials")
            .detail("trials", trials_f)
            .detail("trials_not_holding", smooth_bad as f64)
            .precondition("some trial reached L_S(W~) <= C0^2", void < a.spectral_trials),
    );
    out.reports.push(
        BoundReport::deterministic(
            "segment lambda_min >= curvature floor",
            curv_ratio,
            1.0,
            "curvature floor C_x^2 B'' (B' C_x + C0) / sqrt m * max(1, |W - W~|); worst (-lambda_min) / |floor| over trials",
        )
        .detail("trials", trials_f)
        .detail("trials_not_holding", curv_bad as f64)
        .detail("void_trials", void as f64)
        .precondition("some trial reached L_S(W~) <= C0^2", void < a.spectral_trials),
    );
    out.tables.push(table);
    Ok(())
}

struct OptRun {
    avg_risk: f64,
    rhs: f64,
    oracle: f64,
    pinv_bracket: f64,
    gd_bracket: f64,
    test_risk: f64,
    restart: usize,
    components: [f64; 4],
    constants: (BoundConstants, ProblemConstants, f64),
}

fn opt_error_runs(cfg: &ExperimentConfig, out: &mut ScenarioOutput) -> Result<()> {
    let spec = cfg.data_law()?;
    let act = cfg.activation()?;
    let bnds = act.bounds();
    let a = &cfg.audit;
    let (n, m) = (cfg.n, cfg.net.m);
    let runs: Vec<Result<OptRun>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let rs = replicate_spec(&spec, &[tag::REPLICATE, r as u64]);
            let data = sample_dataset(&rs, n)?;
            let seed = seeds::derive_seed(cfg.master_seed, &[tag::INIT, r as u64]);
            let net0 = init_net(cfg, cfg.net.d, m, &act, seed)?;
            let problem = problem_for(&spec, max_sample_loss(&net0, &data)?)?;
            let limit = step_size_limit(&problem, &bnds, m);
            let gd = gd_with_eta(cfg, resolve_eta(cfg, limit));
            gd.check_step_size(limit, cfg.override_eta_limit)?;
            let tr = gd_train(&net0, &data, &gd)?;
            let eta_t = gd.eta * gd.t_max as f64;
            let (pinv, _) = pinv_linear_solution(&net0, &data)?;
            let solver = GDConfig::new(a.oracle_eta, a.oracle_iters);
            let oracle = solve_oracle(&net0, &data, eta_t, &problem, &solver, a.oracle_restarts, seed)?;
            let objective = OracleObjective::new(&net0, &data, eta_t, &problem)?;
            let rhs = bounds::opt_error_rhs(&oracle, &objective, &[&pinv, &tr.final_net])?;
            let c = oracle.components;
            Ok(OptRun {
                avg_risk: tr.averaged_risk(),
                rhs,
                oracle: oracle.value,
                pinv_bracket: objective.bracket(&pinv)?.value(),
                gd_bracket: objective.bracket(&tr.final_net)?.value(),
                test_risk: population_risk(&tr.final_net, &rs, a.test_size, &[r as u64])?,
                restart: oracle.restart,
                components: [c.risk, c.quad, c.cubic, c.tail],
                constants: (bounds::compute_constants(&problem, &bnds, m, gd.eta, gd.t_max), problem, gd.eta),
            })
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(
        "opt_error",
        &[
            "run", "avg_risk", "opt_error_rhs", "oracle_value", "pinv_bracket", "gd_final_bracket", "oracle_risk", "oracle_quad", "oracle_cubic", "oracle_tail",
            "winning_restart", "test_risk",
        ],
    );
    for (r, x) in runs.iter().enumerate() {
        let [risk, quad, cubic, tail] = x.components;
        table.push(vec![
            r.to_string(),
            cell(x.avg_risk),
            cell(x.rhs),
            cell(x.oracle),
            cell(x.pinv_bracket),
            cell(x.gd_bracket),
            cell(risk),
            cell(quad),
            cell(cubic),
            cell(tail),
            x.restart.to_string(),
            cell(x.test_risk),
        ]);
    }
    let (c0, p0, eta) = &runs[0].constants;
    insert_constants(&mut out.constants, c0, p0);
    out.constants.insert("eta".into(), *eta);
    let eta_t = eta * cfg.gd.t_max as f64;
    let worst = |f: &dyn Fn(&OptRun) -> f64| runs.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let count = |f: &dyn Fn(&OptRun) -> bool| runs.iter().filter(|x| f(x)).count() as f64;
    out.reports.push(
        BoundReport::deterministic(
            "optimisation error",
            worst(&|x| x.avg_risk / x.rhs),
            1.0,
            "optimisation error (1/T) sum_{j=0}^T L_S(W_j) <= min_W [L_S(W) + |W - W0|^2/(eta T) + b~ |W - W0|^3/sqrt m] + b~ C0 (eta T)^1.5/sqrt m; worst ratio over runs, candidates include W^pinv and the GD end point",
        )
        .detail("runs", runs.len() as f64)
        .detail("runs_above", count(&|x| x.avg_risk > x.rhs)),
    );
    out.reports.push(
        BoundReport::deterministic(
            "oracle value <= bracket at W^pinv",
            worst(&|x| x.oracle / x.pinv_bracket),
            1.0,
            "optimisation-error bracket minimised numerically against its value at the minimum-norm interpolant; worst ratio over runs",
        )
        .detail("runs_above", count(&|x| x.oracle > x.pinv_bracket))
        .precondition("eta T = n", (eta_t - n as f64).abs() <= 1e-9 * n as f64),
    );
    let tests: Vec<f64> = runs.iter().map(|x| x.test_risk).collect();
    let (test_mean, test_se) = mean_and_std_err(&tests);
    let mean_oracle = runs.iter().map(|x| x.oracle).sum::<f64>() / runs.len() as f64;
    let c = a.corollary_c.unwrap_or(c0.b);
    out.reports.push(
        BoundReport::monte_carlo(
            "population risk <= combined bound",
            test_mean,
            test_se,
            bounds::corollary_risk_rhs(mean_oracle, *eta, cfg.gd.t_max, n, c),
            a.gap_z,
            "combined risk bound E L(W_T) <= (1 + C (eta T/n)(1 + eta T/n)) E[oracle]; C = b unless configured",
        )
        .detail("c", c)
        .detail("mean_oracle", mean_oracle),
    );
    out.tables.push(table);
    out.seeds.insert("data".into(), spec.seed);
    Ok(())
}

// ---------------------------------------------------------------- ntk

pub(super) fn ntk_compare(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    let spec = cfg.data_law()?;
    let act = cfg.activation()?;
    let bnds = act.bounds();
    let a = &cfg.audit;
    let (n, m) = (cfg.n, cfg.net.m);
    let InitLaw::Gaussian { nu } = cfg.net.init else {
        return Err(Error::Config("ntk_compare needs a Gaussian initialisation".into()));
    };
    let data = sample_dataset(&spec, n)?;
    let init_seed = seeds::derive_seed(cfg.master_seed, &[tag::INIT]);
    let net0 = init_net(cfg, cfg.net.d, m, &act, init_seed)?;
    let mut out = ScenarioOutput::default();

    let (pinv, _) = pinv_linear_solution(&net0, &data)?;
    let delta: Vec<f64> = pinv.weights().iter().zip(net0.weights()).map(|(x, y)| x - y).collect();
    let dist2 = dot(&delta, &delta);
    let k_hat = ntk::empirical_gram(&net0, &data)?;
    let y = data.labels();
    let y0 = data.samples().iter().map(|s| net0.forward(&s.x)).collect::<Result<Vec<_>>>()?;
    let emp = ntk::ntk_oracle_quantity(&y, &y0, &k_hat, GramKind::Empirical)?;
    let rel = (dist2 - emp.quad_form).abs() / dist2.max(f64::MIN_POSITIVE);
    out.reports.push(
        BoundReport::deterministic_with_tol(
            "pinv distance equals NTK quadratic form",
            rel,
            a.chain_rel_tol,
            0.0,
            "|W^pinv - W0|_F^2 = <y - y0, (n K^)^-1 (y - y0)>; relative difference",
        )
        .detail("distance_sq", dist2)
        .detail("quad_form", emp.quad_form),
    );
    let lin = ntk::linearized_risk(&net0, &pinv, &data, LinearTarget::Residual)?;
    out.reports.push(BoundReport::deterministic_with_tol(
        "linearised residual risk at W^pinv",
        lin,
        a.linear_residual_tol,
        0.0,
        "the minimum-norm interpolant fits the linearised model: 1/2 sum_i (y_i - y0_i - f^lin(x_i))^2",
    ));

    // Taylor remainder on random probes
    let probes: Vec<Result<(f64, f64, f64, BoundReport)>> = (0..a.taylor_probes)
        .into_par_iter()
        .map(|p| {
            let mut rng = seeds::stream(cfg.master_seed, &[tag::PROBE, part::TAYLOR, p as u64]);
            let radius = rng.random_range(0.0..a.taylor_max_radius);
            let dir = gaussian_direction(&mut rng, net0.dm());
            let cand = shifted(&net0, &dir, radius)?;
            let x = sample_keyed(&spec, 1, tag::PROBE, &[part::TAYLOR, p as u64])?.remove(0).x;
            let rep = ntk::taylor_error_audit(&net0, &cand, &x)?;
            Ok((radius, norm(&x), rep.measured, rep))
        })
        .collect();
    let mut taylor = Table::new("taylor", &["probe", "radius", "x_norm", "error", "bound"]);
    let (mut worst, mut bad, mut pre_ok) = (f64::NEG_INFINITY, 0usize, true);
    for (p, r) in probes.into_iter().enumerate() {
        let (radius, xn, err, rep) = r?;
        worst = worst.max(err / rep.bound);
        bad += usize::from(!rep.holds() && rep.verdict != crate::bounds::Verdict::VoidPrecondition);
        pre_ok &= rep.preconditions.values().all(|&v| v);
        taylor.push(vec![p.to_string(), cell(radius), cell(xn), cell(err), cell(rep.bound)]);
    }
    out.reports.push(
        BoundReport::deterministic(
            "linearisation error",
            worst,
            1.0,
            "NTK Taylor remainder B'' |x| |W - W0|^2 / (2 sqrt m); worst error / bound over probes",
        )
        .detail("probes", a.taylor_probes as f64)
        .detail("probes_above", bad as f64)
        .precondition("|x| <= 1", pre_ok),
    );

    // grams
    let expected = ntk::expected_gram(&data, &act, nu, a.mc_samples, seeds::derive_seed(cfg.master_seed, &[tag::GRAM_MC]))?;
    out.reports.push(ntk::gram_concentration_audit(&k_hat, &expected.k, m, a.delta, bnds.b_phi_prime)?);
    out.reports.push(ntk::gram_concentration_frequency(
        &data,
        &act,
        nu,
        m,
        &expected,
        a.delta,
        a.frequency_slack,
        a.redraws,
        seeds::derive_seed(cfg.master_seed, &[tag::REDRAW]),
    )?);
    let exp_q = ntk::ntk_oracle_quantity(&y, &y0, &expected.k, GramKind::Expected)?;

    // oracle against its relaxation
    let problem = problem_for(&spec, max_sample_loss(&net0, &data)?)?;
    let eta_t = cfg.gd.eta * cfg.gd.t_max as f64;
    let solver = GDConfig::new(a.oracle_eta, a.oracle_iters);
    let oracle = solve_oracle(&net0, &data, eta_t, &problem, &solver, a.oracle_restarts, init_seed)?;
    let objective = OracleObjective::new(&net0, &data, eta_t, &problem)?;
    let at_pinv = objective.bracket(&pinv)?;
    out.reports.push(
        BoundReport::deterministic(
            "oracle value <= bracket at W^pinv",
            oracle.value,
            at_pinv.value(),
            "optimisation-error bracket minimised numerically against its value at the minimum-norm interpolant",
        )
        .detail("pinv_quad", at_pinv.quad)
        .detail("pinv_cubic", at_pinv.cubic)
        .detail("tail", at_pinv.tail)
        .detail("quad_form_empirical", emp.quad_form)
        .detail("quad_form_expected", exp_q.quad_form)
        .precondition("eta T = n", (eta_t - n as f64).abs() <= 1e-9 * n as f64),
    );

    let mut summary = Table::new("ntk_summary", &["quantity", "value"]);
    for (k, v) in [
        ("distance_sq", dist2),
        ("quad_form_empirical", emp.quad_form),
        ("quad_form_expected", exp_q.quad_form),
        ("lambda_min_k_hat", emp.lambda_min_k),
        ("lambda_min_k_expected", exp_q.lambda_min_k),
        ("n_lambda_min_k_hat", n as f64 * emp.lambda_min_k),
        ("n_lambda_min_k_expected", n as f64 * exp_q.lambda_min_k),
        ("linearised_residual_risk", lin),
        ("oracle_value", oracle.value),
        ("pinv_bracket", at_pinv.value()),
        ("pinv_risk", at_pinv.risk),
        ("concentration_rhs", ntk::concentration_rhs(n, m, a.delta, bnds.b_phi_prime)),
    ] {
        summary.push(vec![k.into(), cell(v)]);
    }
    let gram_table = |name: &str, k: &crate::numerics::DenseMatrix| {
        let header: Vec<String> = (0..n).map(|j| format!("k{j}")).collect();
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut t = Table::new(name, &header_refs);
        for i in 0..n {
            t.push(k.row(i).iter().map(|&v| cell(v)).collect());
        }
        t
    };
    out.tables.push(summary);
    out.tables.push(gram_table("gram_empirical", &k_hat));
    out.tables.push(gram_table("gram_expected", &expected.k));
    out.tables.push(taylor);
    insert_constants(&mut out.constants, &bounds::compute_constants(&problem, &bnds, m, cfg.gd.eta, cfg.gd.t_max), &problem);
    out.seeds.insert("data".into(), spec.seed);
    out.seeds.insert("init".into(), init_seed);
    Ok(out)
}

// ---------------------------------------------------------------- consistency

pub(super) fn consistency(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    let spec = cfg.data_law()?;
    let act = cfg.activation()?;
    let bnds = act.bounds();
    let alpha = cfg.alpha.ok_or_else(|| Error::Config("consistency needs alpha".into()))?;
    let sigma2 = spec.noise_sigma * spec.noise_sigma;
    let n_max = *cfg.n_grid.iter().max().expect("validated non-empty");
    let t_of = |n: usize| horizon(n, alpha);
    let reps = cfg.replicates;
    let data_for = |n: usize, r: usize| -> Result<(DataSpec, Dataset)> {
        let s = replicate_spec(&spec, &[tag::REPLICATE, n as u64, r as u64]);
        let d = sample_dataset(&s, n)?;
        Ok((s, d))
    };
    let init_seed = seeds::derive_seed(cfg.master_seed, &[tag::INIT]);
    let (_, largest) = data_for(n_max, 0)?;
    let (net0, problem, eta, width) = resolve_width(cfg, &act, &spec, &[&largest], init_seed, t_of(n_max))?;
    let m = net0.m();
    if (m as f64) < width && !cfg.override_width {
        return Err(Error::Config(format!(
            "m = {m} is below the width requirement {width:.1} for the largest n; set auto_width or override_width"
        )));
    }
    let limit = step_size_limit(&problem, &bnds, m);

    let jobs: Vec<(usize, usize)> = cfg.n_grid.iter().flat_map(|&n| (0..reps).map(move |r| (n, r))).collect();
    let runs: Vec<Result<(f64, f64)>> = jobs
        .par_iter()
        .map(|&(n, r)| {
            let (s, data) = data_for(n, r)?;
            let gd = GDConfig { t_max: t_of(n), ..gd_with_eta(cfg, eta) };
            gd.check_step_size(limit, cfg.override_eta_limit)?;
            let tr = gd_train(&net0, &data, &gd)?;
            let test = population_risk(&tr.final_net, &s, cfg.audit.test_size, &[n as u64, r as u64])?;
            Ok((*tr.risks.last().expect("T + 1 risks"), test))
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let mut per_run = Table::new("consistency_runs", &["n", "T", "replicate", "train_risk", "test_risk"]);
    for (&(n, r), &(train, test)) in jobs.iter().zip(&runs) {
        per_run.push(vec![n.to_string(), t_of(n).to_string(), r.to_string(), cell(train), cell(test)]);
    }
    let mut summary = Table::new(
        "consistency",
        &["n", "T", "mean_test_risk", "std_err", "excess_over_half_sigma2", "excess_over_sigma2"],
    );
    let mut stats = Vec::new();
    for (g, &n) in cfg.n_grid.iter().enumerate() {
        let tests: Vec<f64> = runs[g * reps..(g + 1) * reps].iter().map(|x| x.1).collect();
        let (mean, se) = mean_and_std_err(&tests);
        stats.push((mean, se));
        summary.push(vec![n.to_string(), t_of(n).to_string(), cell(mean), cell(se), cell(mean - sigma2 / 2.0), cell(mean - sigma2)]);
    }

    let mut out = ScenarioOutput::default();
    let z = cfg.audit.gap_z;
    let positivity = |floor: f64| stats.iter().map(|&(mean, se)| -(mean - floor - z * se)).fold(f64::NEG_INFINITY, f64::max);
    out.reports.push(BoundReport::deterministic(
        "excess risk positive",
        positivity(sigma2 / 2.0),
        0.0,
        "early-stopped GD with T = n^alpha is consistent: excess risk E L(W_T) - sigma^2/2 over the noise floor of the half-squared loss stays positive at 2 standard errors",
    ));
    out.reports.push(BoundReport::deterministic(
        "excess risk over sigma^2 positive",
        positivity(sigma2),
        0.0,
        "excess risk measured against sigma^2 as literally stated, positive at 2 standard errors",
    ));
    let rise = stats
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) - z * (w[0].1 * w[0].1 + w[1].1 * w[1].1).sqrt())
        .fold(f64::NEG_INFINITY, f64::max);
    out.reports.push(
        BoundReport::deterministic(
            "excess risk non-increasing in n",
            if stats.len() < 2 { 0.0 } else { rise },
            0.0,
            "early-stopped GD with T = n^alpha is consistent: mean risk does not rise between consecutive n beyond 2 pooled standard errors",
        )
        .detail("m", m as f64)
        .detail("width_min_largest_n", width)
        .precondition("m >= width_min for the largest n", m as f64 >= width || cfg.override_width),
    );
    insert_constants(&mut out.constants, &bounds::compute_constants(&problem, &bnds, m, eta, t_of(n_max)), &problem);
    out.constants.insert("eta".into(), eta);
    out.constants.insert("eta_limit".into(), limit);
    out.constants.insert("m".into(), m as f64);
    out.constants.insert("sigma2".into(), sigma2);
    out.tables.push(per_run);
    out.tables.push(summary);
    out.seeds.insert("data".into(), spec.seed);
    out.seeds.insert("init".into(), init_seed);
    Ok(out)
}

// ---------------------------------------------------------------- constants

/// Realised constants of a config at its first replicate: `C0` from the
/// initial network on the training draw, and the bound constants at the
/// step size and horizon the scenario would use.
pub(super) fn constants(cfg: &ExperimentConfig) -> Result<BTreeMap<String, f64>> {
    let spec = cfg.data_law()?;
    let act = cfg.activation()?;
    let bnds = act.bounds();
    let (n, m, steps, data_spec, init_seed) = match cfg.scenario {
        super::Scenario::Consistency => {
            let n = *cfg.n_grid.iter().max().ok_or_else(|| Error::Config("consistency needs n_grid".into()))?;
            let alpha = cfg.alpha.ok_or_else(|| Error::Config("consistency needs alpha".into()))?;
            (n, cfg.net.m, horizon(n, alpha), replicate_spec(&spec, &[tag::REPLICATE, n as u64, 0]), seeds::derive_seed(cfg.master_seed, &[tag::INIT]))
        }
        super::Scenario::Fig1 => {
            let m = *cfg.m_grid.first().ok_or_else(|| Error::Config("fig1 needs m_grid".into()))?;
            (cfg.n, m, cfg.gd.t_max, spec.clone(), seeds::derive_seed(cfg.master_seed, &[tag::INIT, m as u64, 0]))
        }
        super::Scenario::StabilityAudit | super::Scenario::NtkCompare => {
            let s = if cfg.scenario == super::Scenario::NtkCompare { spec.clone() } else { replicate_spec(&spec, &[tag::REPLICATE, 0]) };
            (cfg.n, cfg.net.m, cfg.gd.t_max, s, seeds::derive_seed(cfg.master_seed, &[tag::INIT]))
        }
        _ => (cfg.n.max(1), cfg.net.m, cfg.gd.t_max, replicate_spec(&spec, &[tag::REPLICATE, 0]), seeds::derive_seed(cfg.master_seed, &[tag::INIT, 0])),
    };
    let data = sample_dataset(&data_spec, n)?;
    let net0 = init_net(cfg, cfg.net.d, m, &act, init_seed)?;
    let problem = problem_for(&spec, max_sample_loss(&net0, &data)?)?;
    let limit = step_size_limit(&problem, &bnds, m);
    let eta = resolve_eta(cfg, limit);
    let mut map = BTreeMap::new();
    insert_constants(&mut map, &bounds::compute_constants(&problem, &bnds, m, eta, steps), &problem);
    for (k, v) in [
        ("eta", eta),
        ("eta_limit", limit),
        ("eta_t", eta * steps as f64),
        ("m", m as f64),
        ("n", n as f64),
        ("t", steps as f64),
        ("b_phi", bnds.b_phi),
        ("b_phi_prime", bnds.b_phi_prime),
        ("b_phi_double_prime", bnds.b_phi_double_prime),
    ] {
        map.insert(k.into(), v);
    }
    Ok(map)
}
