//! Replace-one training pairs, on-average parameter stability, Monte-Carlo
//! generalisation gaps and the almost-co-coercivity probe.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, BoundReport};
use crate::data::{sample_keyed, DataSpec, Dataset, Sample};
use crate::error::{Error, Result};
use crate::model::{flat_to_matrix, ProblemConstants, ShallowNet};
use crate::numerics::{axpy, dot, spectral_norm};
use crate::optimize::{gd_train, GDConfig, GdRun, Trajectory};
use crate::seeds;

/// Training runs on `S` and on `S^(i)` from the same `W₀` and config.
pub fn paired_trajectories(net0: &ShallowNet, data: &Dataset, i: usize, fresh: Sample, config: &GDConfig) -> Result<(Trajectory, Trajectory)> {
    let replaced = data.replace_one(i, fresh)?;
    Ok((gd_train(net0, data, config)?, gd_train(net0, &replaced, config)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub t: usize,
    /// `(1/n) Σ_i ‖W_t - W_t^(i)‖²_F`
    pub avg_sq_frobenius: f64,
    /// Same with the spectral norm of the `d × m` difference.
    pub avg_sq_operator: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_index: Option<Vec<f64>>,
}

/// Squared Frobenius and operator norms of `a - b` as `d × m` matrices.
fn sq_distances(a: &[f64], b: &[f64], d: usize, m: usize) -> Result<(f64, f64)> {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let fro = dot(&diff, &diff);
    if fro == 0.0 {
        return Ok((0.0, 0.0));
    }
    let op = spectral_norm(&flat_to_matrix(&diff, d, m), d.min(m), 0)?;
    Ok((fro, (op * op).min(fro)))
}

/// Per recorded `t`, averages over the pairs of the squared parameter
/// distances. Every pair must share the config, `W₀` and stored parameters.
pub fn parameter_stability(pairs: &[(&Trajectory, &Trajectory)], per_index: bool) -> Result<Vec<StabilityRecord>> {
    let Some(&(first, _)) = pairs.first() else {
        return Ok(Vec::new());
    };
    let (d, m) = (first.final_net.d(), first.final_net.m());
    let times: Vec<usize> = first.points.iter().filter(|p| p.parameters.is_some()).map(|p| p.t).collect();
    for (a, b) in pairs {
        if a.config != first.config || b.config != first.config {
            return Err(Error::MismatchedPairs("pairs were trained with different configs".into()));
        }
        if a.parameters_at(0)? != first.parameters_at(0)? || b.parameters_at(0)? != first.parameters_at(0)? {
            return Err(Error::MismatchedPairs("pairs start from different W0".into()));
        }
    }
    let n = pairs.len() as f64;
    times
        .iter()
        .map(|&t| {
            let mut fro = Vec::with_capacity(pairs.len());
            let mut op_sum = 0.0;
            for (a, b) in pairs {
                let (f, o) = sq_distances(a.parameters_at(t)?, b.parameters_at(t)?, d, m)?;
                fro.push(f);
                op_sum += o;
            }
            Ok(StabilityRecord {
                t,
                avg_sq_frobenius: fro.iter().sum::<f64>() / n,
                avg_sq_operator: op_sum / n,
                per_index: per_index.then_some(fro),
            })
        })
        .collect()
}

/// Stability of one dataset draw against all `n` replacements, without
/// keeping the replaced runs in memory.
#[derive(Debug, Clone)]
pub struct ReplacementSweep {
    pub original: Trajectory,
    pub records: Vec<StabilityRecord>,
    /// `ℓ(W_T^(i), z̃_i)` per index.
    pub fresh_losses_final: Vec<f64>,
    /// `ℓ(W_T, z_i)` per index.
    pub own_losses_final: Vec<f64>,
}

/// Trains on `S` and on every `S^(i)` (with `fresh[i]`), and records the
/// averaged squared distances at each recorded step.
pub fn replacement_sweep(net0: &ShallowNet, data: &Dataset, fresh: &[Sample], config: &GDConfig) -> Result<ReplacementSweep> {
    if fresh.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: fresh.len(),
            context: "replacement samples",
        });
    }
    let cfg = GDConfig { store_parameters: true, snapshot_every: config.record_every, ..*config };
    let original = gd_train(net0, data, &cfg)?;
    let (d, m) = (net0.d(), net0.m());
    let per_i: Vec<Result<(Vec<(usize, f64, f64)>, f64)>> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let replaced = data.replace_one(i, fresh[i].clone())?;
            let tr = gd_train(net0, &replaced, &cfg)?;
            let dists = original
                .points
                .iter()
                .filter(|p| p.parameters.is_some())
                .map(|p| {
                    let (f, o) = sq_distances(original.parameters_at(p.t)?, tr.parameters_at(p.t)?, d, m)?;
                    Ok((p.t, f, o))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((dists, tr.final_net.sample_loss(&fresh[i])?))
        })
        .collect();
    let n = data.len() as f64;
    let mut records: Vec<StabilityRecord> = Vec::new();
    let mut fresh_losses_final = Vec::with_capacity(data.len());
    for r in per_i {
        let (dists, loss) = r?;
        fresh_losses_final.push(loss);
        if records.is_empty() {
            records = dists
                .iter()
                .map(|&(t, _, _)| StabilityRecord { t, avg_sq_frobenius: 0.0, avg_sq_operator: 0.0, per_index: Some(Vec::new()) })
                .collect();
        }
        for (rec, (_, f, o)) in records.iter_mut().zip(dists) {
            rec.avg_sq_frobenius += f / n;
            rec.avg_sq_operator += o / n;
            rec.per_index.as_mut().expect("initialised above").push(f);
        }
    }
    let own_losses_final = data
        .samples()
        .iter()
        .map(|s| original.final_net.sample_loss(s))
        .collect::<Result<_>>()?;
    Ok(ReplacementSweep {
        original,
        records,
        fresh_losses_final,
        own_losses_final,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenGapEstimate {
    pub gap_mean: f64,
    pub gap_std_err: f64,
    pub replicates: usize,
    pub test_size: usize,
}

/// Mean loss of `net` on `test_size` fresh samples keyed by `keys`.
pub fn population_risk(net: &ShallowNet, spec: &DataSpec, test_size: usize, keys: &[u64]) -> Result<f64> {
    let test = Dataset::new(sample_keyed(spec, test_size, seeds::tag::TEST_SET, keys)?);
    net.empirical_risk(&test)
}

/// `L(W) - L_S(W)` with `L` estimated on `replicates` independent test sets.
pub fn gen_gap_estimate(net: &ShallowNet, spec: &DataSpec, train_risk: f64, test_size: usize, replicates: usize, seed: u64) -> Result<GenGapEstimate> {
    if replicates < 2 || test_size == 0 {
        return Err(Error::Config("gap estimate needs at least two replicates and a non-empty test set".into()));
    }
    let gaps = (0..replicates)
        .map(|r| Ok(population_risk(net, spec, test_size, &[seed, r as u64])? - train_risk))
        .collect::<Result<Vec<f64>>>()?;
    let (mean, se) = mean_and_std_err(&gaps);
    Ok(GenGapEstimate {
        gap_mean: mean,
        gap_std_err: se,
        replicates,
        test_size,
    })
}

/// Sample mean and `std / √len`.
pub fn mean_and_std_err(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CocoercivityProbe {
    pub t: usize,
    /// `⟨ΔW, Δ∇⟩` with gradients of `L_{S\i}` (n-normalised).
    pub inner_product: f64,
    /// `2η(1 - ηρ/2) ‖Δ∇‖²`
    pub rhs_coercive: f64,
    /// `ε ‖ΔW - ηΔ∇‖²`
    pub rhs_slack: f64,
    /// `‖ΔW - ηΔ∇‖² / ‖ΔW‖²`
    pub expansiveness_ratio: f64,
    /// `‖ΔW‖²`
    pub param_distance_sq: f64,
    /// `ΔW = 0`; the ratio is then reported as 1.
    pub degenerate: bool,
}

impl CocoercivityProbe {
    /// `inner ≥ coercive - slack`
    pub fn lemma_holds(&self) -> bool {
        self.inner_product >= self.rhs_coercive - self.rhs_slack
    }
}

/// Probe from a parameter difference and a gradient difference.
pub fn probe_from_differences(t: usize, dw: &[f64], dg: &[f64], eta: f64, rho: f64, epsilon: f64) -> CocoercivityProbe {
    let dw2 = dot(dw, dw);
    let mut moved = dw.to_vec();
    axpy(-eta, dg, &mut moved);
    let moved2 = dot(&moved, &moved);
    let degenerate = dw2 == 0.0;
    CocoercivityProbe {
        t,
        inner_product: dot(dw, dg),
        rhs_coercive: 2.0 * eta * (1.0 - eta * rho / 2.0) * dot(dg, dg),
        rhs_slack: epsilon * moved2,
        expansiveness_ratio: if degenerate { 1.0 } else { moved2 / dw2 },
        param_distance_sq: dw2,
        degenerate,
    }
}

/// `∇L_S(W) - (1/n) ∇ℓ(W, z)`: the n-normalised remove-one gradient when
/// `full_grad` is the gradient over a tuple containing `z`.
fn remove_one_grad(net: &ShallowNet, full_grad: &[f64], z: &Sample, n: usize) -> Result<Vec<f64>> {
    let mut g = full_grad.to_vec();
    axpy(-1.0 / n as f64, &net.grad_sample(z)?, &mut g);
    Ok(g)
}

/// Probe at step `t` for `W_t` (trained on `S`) and `W_t^(i)`, with
/// gradients of `L_{S\i}` normalised by `n`, `ρ` and `ε` at horizon `ηt`.
#[allow(clippy::too_many_arguments)]
pub fn cocoercivity_probe(
    t: usize,
    w_t: &ShallowNet,
    w_t_i: &ShallowNet,
    data: &Dataset,
    i: usize,
    eta: f64,
    problem: &ProblemConstants,
) -> Result<CocoercivityProbe> {
    let n = data.len();
    let z = data.samples().get(i).ok_or(Error::IndexOutOfRange { index: i, len: n })?;
    let ga = remove_one_grad(w_t, &w_t.grad_empirical_risk(data)?, z, n)?;
    let gb = remove_one_grad(w_t_i, &w_t_i.grad_empirical_risk(data)?, z, n)?;
    let dw: Vec<f64> = w_t.weights().iter().zip(w_t_i.weights()).map(|(a, b)| a - b).collect();
    let dg: Vec<f64> = ga.iter().zip(&gb).map(|(a, b)| a - b).collect();
    let act = w_t.activation().bounds();
    let m = w_t.m();
    Ok(probe_from_differences(
        t,
        &dw,
        &dg,
        eta,
        bounds::rho(problem, &act, m),
        bounds::epsilon(problem, &act, m, eta * t as f64),
    ))
}

/// Runs GD on `S` and `S^(i)` in lockstep and probes at every step
/// `0..=T`, so that no parameters need to be stored.
pub fn probe_pair_lockstep(net0: &ShallowNet, data: &Dataset, i: usize, fresh: Sample, config: &GDConfig, problem: &ProblemConstants) -> Result<Vec<CocoercivityProbe>> {
    config.validate()?;
    let n = data.len();
    let z = data.samples().get(i).ok_or(Error::IndexOutOfRange { index: i, len: n })?.clone();
    let replaced = data.replace_one(i, fresh.clone())?;
    let mut a = GdRun::new(net0, data, config.eta)?;
    let mut b = GdRun::new(net0, &replaced, config.eta)?;
    let act = net0.activation().bounds();
    let m = net0.m();
    let rho = bounds::rho(problem, &act, m);
    let mut out = Vec::with_capacity(config.t_max + 1);
    for t in 0..=config.t_max {
        let ga = remove_one_grad(a.net(), &a.eval().grad, &z, n)?;
        let gb = remove_one_grad(b.net(), &b.eval().grad, &fresh, n)?;
        let dw: Vec<f64> = a.net().weights().iter().zip(b.net().weights()).map(|(x, y)| x - y).collect();
        let dg: Vec<f64> = ga.iter().zip(&gb).map(|(x, y)| x - y).collect();
        let eps = bounds::epsilon(problem, &act, m, config.eta * t as f64);
        out.push(probe_from_differences(t, &dw, &dg, config.eta, rho, eps));
        if t < config.t_max {
            a.advance()?;
            b.advance()?;
        }
    }
    Ok(out)
}

/// Stability measured at `t + 1` against both forms of the constant times
/// `(1/n) Σ_i Σ_{j=0}^{t} ‖∇ℓ(W_j, z_i)‖²`; the looser form is the bound.
/// `measured` and `grad_sq_sum` are replicate means.
#[allow(clippy::too_many_arguments)]
pub fn stability_bound_audit(
    measured: f64,
    measured_std_err: f64,
    grad_sq_sum: f64,
    eta: f64,
    t: usize,
    n: usize,
    epsilon: f64,
    z: f64,
) -> BoundReport {
    let displayed = bounds::stability_factor_displayed(eta, t, n, epsilon);
    let rederived = bounds::stability_factor_rederived(eta, t, n, epsilon);
    let bound = displayed.max(rederived) * grad_sq_sum;
    BoundReport::monte_carlo(
        "on-average parameter stability",
        measured,
        measured_std_err,
        bound,
        z,
        "on-average l2 stability, constant max(8e t, 8(1+t)(1+1/t)^t) eta^2/n^2 (1-2 eta eps)^-t, remove-one risk normalised by n",
    )
    .detail("factor_displayed", displayed)
    .detail("factor_rederived", rederived)
    .detail("grad_sq_sum", grad_sq_sum)
    .detail("epsilon", epsilon)
    .detail("t", t as f64)
    .precondition("2 eta eps < 1", 2.0 * eta * epsilon < 1.0)
}

/// Gap of the final iterate `W_{t+1}` against `b(η/n + η²t/n²) Σ_{j=0}^t L_S(W_j)`
/// with replicate-mean risks.
pub fn gen_gap_audit(gap: &GenGapEstimate, mean_risks: &[f64], eta: f64, n: usize, b: f64, z: f64) -> BoundReport {
    let rhs = bounds::gen_gap_rhs(mean_risks, eta, n, b);
    BoundReport::monte_carlo(
        "generalisation gap",
        gap.gap_mean,
        gap.gap_std_err,
        rhs,
        z,
        "generalisation gap b (eta/n + eta^2 t/n^2) sum_{j<=t} L_S(W_j), b = 16 e^3 C_x^1.5 B'^2 (1 + C_x^1.5 B'^2)",
    )
    .detail("b", b)
    .detail("t", (mean_risks.len() - 1) as f64)
    .detail("replicates", gap.replicates as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{fresh_sample, sample_dataset, InputLaw, NoiseLaw, TargetFunction};
    use crate::model::{ActivationSpec, InitLaw, OutputMode};

    fn spec(seed: u64) -> DataSpec {
        DataSpec {
            d: 3,
            input_law: InputLaw::UniformSphere,
            target: TargetFunction::random_teacher(3, seed),
            noise_sigma: 0.0,
            noise_law: NoiseLaw::None,
            c_x: 1.0,
            c_y: 1.0,
            seed,
        }
    }

    fn net(m: usize, seed: u64) -> ShallowNet {
        ShallowNet::init(3, m, ActivationSpec::sigmoid(), InitLaw::Gaussian { nu: 1.0 }, OutputMode::Alternating, seed).unwrap()
    }

    fn stored(eta: f64, t: usize) -> GDConfig {
        GDConfig { store_parameters: true, ..GDConfig::new(eta, t) }
    }

    #[test]
    fn identical_replacement_gives_identical_runs() {
        let data = sample_dataset(&spec(1), 6).unwrap();
        let w0 = net(8, 1);
        let (a, b) = paired_trajectories(&w0, &data, 2, data.samples()[2].clone(), &stored(0.5, 10)).unwrap();
        assert_eq!(a.final_net, b.final_net);
        let recs = parameter_stability(&[(&a, &b)], true).unwrap();
        assert!(recs.iter().all(|r| r.avg_sq_frobenius == 0.0 && r.avg_sq_operator == 0.0));
    }

    #[test]
    fn single_pair_and_norm_ordering() {
        let s = spec(2);
        let data = sample_dataset(&s, 6).unwrap();
        let w0 = net(8, 2);
        let fresh = fresh_sample(&s, 1, 0).unwrap();
        let (a, b) = paired_trajectories(&w0, &data, 1, fresh, &stored(0.5, 10)).unwrap();
        let recs = parameter_stability(&[(&a, &b)], true).unwrap();
        assert_eq!(recs[0].avg_sq_frobenius, 0.0);
        for r in &recs {
            assert!(r.avg_sq_operator <= r.avg_sq_frobenius + 1e-12);
            let pa = a.parameters_at(r.t).unwrap();
            let pb = b.parameters_at(r.t).unwrap();
            let direct: f64 = pa.iter().zip(pb).map(|(x, y)| (x - y).powi(2)).sum();
            assert_eq!(r.avg_sq_frobenius, direct);
        }
        // swapping roles gives the same record
        let swapped = parameter_stability(&[(&b, &a)], false).unwrap();
        assert_eq!(swapped[3].avg_sq_frobenius, recs[3].avg_sq_frobenius);
    }

    #[test]
    fn mismatched_configs_rejected() {
        let data = sample_dataset(&spec(3), 4).unwrap();
        let w0 = net(4, 3);
        let a = gd_train(&w0, &data, &stored(0.5, 5)).unwrap();
        let b = gd_train(&w0, &data, &stored(0.25, 5)).unwrap();
        assert!(matches!(parameter_stability(&[(&a, &b)], false), Err(Error::MismatchedPairs(_))));
    }

    #[test]
    fn sweep_matches_explicit_pairs() {
        let s = spec(4);
        let data = sample_dataset(&s, 5).unwrap();
        let w0 = net(6, 4);
        let fresh: Vec<Sample> = (0..5).map(|i| fresh_sample(&s, i, 0).unwrap()).collect();
        let cfg = GDConfig { record_every: 2, ..GDConfig::new(0.7, 8) };
        let sweep = replacement_sweep(&w0, &data, &fresh, &cfg).unwrap();
        let runs: Vec<(Trajectory, Trajectory)> = (0..5)
            .map(|i| paired_trajectories(&w0, &data, i, fresh[i].clone(), &GDConfig { store_parameters: true, snapshot_every: 2, ..cfg }).unwrap())
            .collect();
        let refs: Vec<(&Trajectory, &Trajectory)> = runs.iter().map(|(a, b)| (a, b)).collect();
        let recs = parameter_stability(&refs, false).unwrap();
        assert_eq!(recs.len(), sweep.records.len());
        for (a, b) in recs.iter().zip(&sweep.records) {
            assert_eq!(a.t, b.t);
            assert!((a.avg_sq_frobenius - b.avg_sq_frobenius).abs() <= 1e-15 * (1.0 + a.avg_sq_frobenius));
        }
    }

    #[test]
    fn probe_degenerate_and_linear_convexity() {
        let data = sample_dataset(&spec(5), 6).unwrap();
        let w0 = net(5, 5);
        let p = ProblemConstants::new(1.0, 1.0, 1.0).unwrap();
        let probe = cocoercivity_probe(0, &w0, &w0, &data, 0, 0.5, &p).unwrap();
        assert!(probe.degenerate && probe.inner_product == 0.0 && probe.expansiveness_ratio == 1.0);

        let lin0 = ShallowNet::new(3, 5, ActivationSpec::identity(), w0.weights().to_vec(), w0.signs().to_vec()).unwrap();
        let s = spec(5);
        for i in 0..6 {
            let probes = probe_pair_lockstep(&lin0, &data, i, fresh_sample(&s, i, 0).unwrap(), &GDConfig::new(0.3, 20), &p).unwrap();
            assert!(probes.iter().all(|q| q.inner_product >= -1e-15));
        }
    }

    #[test]
    fn lockstep_probe_matches_stored_pairs() {
        let s = spec(6);
        let data = sample_dataset(&s, 6).unwrap();
        let w0 = net(7, 6);
        let p = ProblemConstants::new(1.0, 1.0, 1.0).unwrap();
        let fresh = fresh_sample(&s, 3, 0).unwrap();
        let cfg = stored(0.8, 6);
        let lock = probe_pair_lockstep(&w0, &data, 3, fresh.clone(), &cfg, &p).unwrap();
        let (a, b) = paired_trajectories(&w0, &data, 3, fresh, &cfg).unwrap();
        for t in [2, 6] {
            let na = w0.with_weights(a.parameters_at(t).unwrap().to_vec()).unwrap();
            let nb = w0.with_weights(b.parameters_at(t).unwrap().to_vec()).unwrap();
            let direct = cocoercivity_probe(t, &na, &nb, &data, 3, 0.8, &p).unwrap();
            assert!((direct.inner_product - lock[t].inner_product).abs() < 1e-14);
            assert!((direct.rhs_slack - lock[t].rhs_slack).abs() < 1e-14);
        }
    }

    #[test]
    fn gap_estimates() {
        // constant predictor with symmetric targets: gap shrinks to zero
        let s = DataSpec {
            target: TargetFunction::Linear { w_star: vec![0.5, 0.0, 0.0] },
            ..spec(7)
        };
        let zero = ShallowNet::init(3, 4, ActivationSpec::tanh(), InitLaw::Zero, OutputMode::Alternating, 0).unwrap();
        // E[(x_1/2)²]/2 on the sphere of R^3 is 1/24
        let est = gen_gap_estimate(&zero, &s, 1.0 / 24.0, 4000, 10, 11).unwrap();
        assert!(est.gap_mean.abs() <= 3.0 * est.gap_std_err, "{est:?}");
        let other = gen_gap_estimate(&zero, &s, 1.0 / 24.0, 4000, 10, 12).unwrap();
        let pooled = (est.gap_std_err.powi(2) + other.gap_std_err.powi(2)).sqrt();
        assert!((est.gap_mean - other.gap_mean).abs() <= 6.0 * pooled);
    }

    #[test]
    fn stability_audit_forms() {
        let r = stability_bound_audit(0.0, 0.0, 0.0, 0.5, 10, 30, 0.01, 3.0);
        assert!(r.holds());
        let r1 = stability_bound_audit(0.0, 0.0, 1.0, 0.5, 10, 30, 0.01, 3.0);
        let r2 = stability_bound_audit(0.0, 0.0, 1.0, 0.5, 11, 30, 0.01, 3.0);
        assert!(r2.bound > r1.bound);
        assert_eq!(r1.bound, r1.details["factor_rederived"]);
        let void = stability_bound_audit(0.0, 0.0, 1.0, 1.0, 10, 30, 0.6, 3.0);
        assert_eq!(void.verdict, bounds::Verdict::VoidPrecondition);
    }
}
