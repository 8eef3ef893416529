//! Full-batch gradient descent, the regularised oracle minimisation and the
//! minimal-norm interpolant of the linearised model.

mod oracle;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use oracle::{solve_oracle, solve_oracle_from, OracleComponents, OracleObjective, OracleResult};

use crate::bounds;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ActivationBounds, BatchEval, ProblemConstants, ShallowNet};
use crate::numerics::{axpy, norm, psd_solve};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GDConfig {
    pub eta: f64,
    /// Number of steps `T`.
    pub t_max: usize,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub store_parameters: bool,
    /// Stride for stored parameters; `0` means `record_every`.
    #[serde(default)]
    pub snapshot_every: usize,
}

fn one() -> usize {
    1
}

/// Parameter snapshots are dropped above this size unless forced.
pub const SNAPSHOT_DM_LIMIT: usize = 100_000;

impl GDConfig {
    pub fn new(eta: f64, t_max: usize) -> Self {
        Self {
            eta,
            t_max,
            record_every: 1,
            store_parameters: false,
            snapshot_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive and finite, got {}", self.eta)));
        }
        if self.t_max < 1 || self.record_every < 1 {
            return Err(Error::Config("t_max and record_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Rejects `eta` above `limit` unless `allow_override`.
    pub fn check_step_size(&self, limit: f64, allow_override: bool) -> Result<()> {
        if self.eta > limit && !allow_override {
            return Err(Error::Config(format!(
                "eta = {} exceeds the step-size limit 1/(2 rho) = {limit}; pass the override flag for exploratory runs",
                self.eta
            )));
        }
        Ok(())
    }

    fn snapshot_stride(&self) -> usize {
        if self.snapshot_every == 0 {
            self.record_every
        } else {
            self.snapshot_every
        }
    }
}

/// `1/(2ρ)`
pub fn step_size_limit(problem: &ProblemConstants, act: &ActivationBounds, m: usize) -> f64 {
    1.0 / (2.0 * bounds::rho(problem, act, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: usize,
    pub risk: f64,
    /// `‖W_t - W₀‖_F`
    pub path_norm: f64,
    pub grad_norm: f64,
    /// `(1/n) Σ_i ‖∇ℓ(W_t, z_i)‖²`
    pub sample_grad_sq_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameters: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<TracePoint>,
    /// `L_S(W_t)` for every `t = 0..=T`, regardless of the recording stride.
    pub risks: Vec<f64>,
    /// `(1/n) Σ_i ‖∇ℓ(W_t, z_i)‖²` for every `t = 0..=T`.
    pub sample_grad_sq_means: Vec<f64>,
    pub final_net: ShallowNet,
    pub config: GDConfig,
}

impl Trajectory {
    /// `(1/T) Σ_{j=0}^{T} L_S(W_j)`; note the `T + 1` terms.
    pub fn averaged_risk(&self) -> f64 {
        self.risks.iter().sum::<f64>() / self.config.t_max as f64
    }

    pub fn parameters_at(&self, t: usize) -> Result<&[f64]> {
        self.points
            .iter()
            .find(|p| p.t == t)
            .and_then(|p| p.parameters.as_deref())
            .ok_or(Error::MissingSnapshot(t))
    }

    /// Columns `t,risk,path_norm,grad_norm`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "risk", "path_norm", "grad_norm"])?;
        for p in &self.points {
            w.write_record([p.t.to_string(), p.risk.to_string(), p.path_norm.to_string(), p.grad_norm.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A single GD run advanced one step at a time, so that several runs can be
/// stepped in lockstep and inspected between steps.
#[derive(Debug, Clone)]
pub struct GdRun<'a> {
    w0: Vec<f64>,
    net: ShallowNet,
    data: &'a Dataset,
    eta: f64,
    t: usize,
    eval: BatchEval,
}

impl<'a> GdRun<'a> {
    pub fn new(net0: &ShallowNet, data: &'a Dataset, eta: f64) -> Result<Self> {
        let eval = net0.evaluate(data)?;
        if !eval.risk.is_finite() {
            return Err(Error::Divergence { step: 0 });
        }
        Ok(Self {
            w0: net0.weights().to_vec(),
            net: net0.clone(),
            data,
            eta,
            t: 0,
            eval,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn net(&self) -> &ShallowNet {
        &self.net
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    /// Risk, gradient and per-sample quantities at the current iterate.
    pub fn eval(&self) -> &BatchEval {
        &self.eval
    }

    pub fn path_norm(&self) -> f64 {
        let s: f64 = self.net.weights().iter().zip(&self.w0).map(|(a, b)| (a - b) * (a - b)).sum();
        s.sqrt()
    }

    /// `W_{t+1} = W_t - η ∇L_S(W_t)`
    pub fn advance(&mut self) -> Result<()> {
        let step = -self.eta;
        let grad = std::mem::take(&mut self.eval.grad);
        axpy(step, &grad, self.net.weights_mut());
        self.t += 1;
        if self.net.weights().iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: self.t });
        }
        self.eval = self.net.evaluate(self.data)?;
        if !self.eval.risk.is_finite() {
            return Err(Error::Divergence { step: self.t });
        }
        Ok(())
    }

    fn trace_point(&self, store: bool) -> TracePoint {
        TracePoint {
            t: self.t,
            risk: self.eval.risk,
            path_norm: self.path_norm(),
            grad_norm: norm(&self.eval.grad),
            sample_grad_sq_mean: mean(&self.eval.sample_grad_sq),
            parameters: store.then(|| self.net.weights().to_vec()),
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Records trace points for a run that is advanced externally.
#[derive(Debug, Clone)]
pub struct TrajectoryRecorder {
    config: GDConfig,
    store: bool,
    points: Vec<TracePoint>,
    risks: Vec<f64>,
    sample_grad_sq_means: Vec<f64>,
}

impl TrajectoryRecorder {
    pub fn new(config: GDConfig, dm: usize) -> Self {
        Self {
            config,
            store: config.store_parameters && dm <= SNAPSHOT_DM_LIMIT,
            points: Vec::new(),
            risks: Vec::with_capacity(config.t_max + 1),
            sample_grad_sq_means: Vec::with_capacity(config.t_max + 1),
        }
    }

    pub fn observe(&mut self, run: &GdRun<'_>) {
        let t = run.t();
        self.risks.push(run.eval.risk);
        self.sample_grad_sq_means.push(mean(&run.eval.sample_grad_sq));
        if t.is_multiple_of(self.config.record_every) || t == self.config.t_max {
            let store = self.store && (t.is_multiple_of(self.config.snapshot_stride()) || t == self.config.t_max);
            self.points.push(run.trace_point(store));
        } else if self.store && t.is_multiple_of(self.config.snapshot_stride()) {
            self.points.push(run.trace_point(true));
        }
    }

    pub fn finish(self, final_net: ShallowNet) -> Trajectory {
        Trajectory {
            points: self.points,
            risks: self.risks,
            sample_grad_sq_means: self.sample_grad_sq_means,
            final_net,
            config: self.config,
        }
    }
}

/// Runs `config.t_max` full-batch steps from `net0`.
pub fn gd_train(net0: &ShallowNet, data: &Dataset, config: &GDConfig) -> Result<Trajectory> {
    config.validate()?;
    let mut run = GdRun::new(net0, data, config.eta)?;
    let mut rec = TrajectoryRecorder::new(*config, net0.dm());
    rec.observe(&run);
    for _ in 0..config.t_max {
        run.advance()?;
        rec.observe(&run);
    }
    Ok(rec.finish(run.net))
}

/// NTK features at `W₀`, one column per sample, as `n` vectors of length `dm`.
pub(crate) fn feature_columns(net0: &ShallowNet, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    data.samples().iter().map(|s| net0.ntk_feature(&s.x)).collect()
}

/// `W^pinv = W₀ + Φ₀ α` with `α = (n K̂)⁻¹ (y - ŷ₀)`.
pub fn pinv_linear_solution(net0: &ShallowNet, data: &Dataset) -> Result<(ShallowNet, Vec<f64>)> {
    let phi = feature_columns(net0, data)?;
    let n = data.len();
    let gram = crate::numerics::DenseMatrix::from_fn(n, n, |i, j| crate::numerics::dot(&phi[i], &phi[j]));
    let residual: Vec<f64> = data
        .samples()
        .iter()
        .map(|s| Ok(s.y - net0.forward(&s.x)?))
        .collect::<Result<_>>()?;
    let alpha = if residual.iter().all(|&r| r == 0.0) {
        vec![0.0; n]
    } else {
        psd_solve(&gram, &residual)?
    };
    let mut w = net0.weights().to_vec();
    for (a, col) in alpha.iter().zip(&phi) {
        axpy(*a, col, &mut w);
    }
    Ok((net0.with_weights(w)?, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_dataset, DataSpec, InputLaw, NoiseLaw, Sample, TargetFunction};
    use crate::model::{ActivationSpec, InitLaw, OutputMode};

    fn instance(n: usize, d: usize, m: usize, seed: u64) -> (ShallowNet, Dataset, ProblemConstants) {
        let spec = DataSpec {
            d,
            input_law: InputLaw::UniformSphere,
            target: TargetFunction::random_teacher(d, seed),
            noise_sigma: 0.0,
            noise_law: NoiseLaw::None,
            c_x: 1.0,
            c_y: 1.0,
            seed,
        };
        let data = sample_dataset(&spec, n).unwrap();
        let net = ShallowNet::init(d, m, ActivationSpec::sigmoid(), InitLaw::Gaussian { nu: 1.0 }, OutputMode::Alternating, seed).unwrap();
        let c0 = data.samples().iter().map(|s| net.sample_loss(s).unwrap()).fold(0.0, f64::max);
        (net, data, ProblemConstants::new(1.0, 1.0, c0).unwrap())
    }

    #[test]
    fn averaged_risk_sums_t_plus_one_terms_over_t() {
        let (net, data, _) = instance(6, 3, 10, 8);
        let tr = gd_train(&net, &data, &GDConfig::new(0.5, 4)).unwrap();
        assert_eq!(tr.risks.len(), 5);
        let by_hand = (tr.risks[0] + tr.risks[1] + tr.risks[2] + tr.risks[3] + tr.risks[4]) / 4.0;
        assert!((tr.averaged_risk() - by_hand).abs() < 1e-15);
    }

    #[test]
    fn step_size_limit_plug_in() {
        let p = ProblemConstants::new(1.0, 1.0, 1.0).unwrap();
        let lim = step_size_limit(&p, &ActivationSpec::sigmoid().bounds(), 100);
        assert!((lim - 2.9700).abs() < 1e-3);
    }

    #[test]
    fn fixed_point_when_interpolated() {
        let net = ShallowNet::init(2, 3, ActivationSpec::tanh(), InitLaw::Gaussian { nu: 1.0 }, OutputMode::Alternating, 4).unwrap();
        let samples = [vec![0.3, 0.4], vec![-0.5, 0.1]]
            .into_iter()
            .map(|x| Sample { y: net.forward(&x).unwrap(), x })
            .collect();
        let data = Dataset::new(samples);
        let tr = gd_train(&net, &data, &GDConfig::new(0.5, 5)).unwrap();
        assert_eq!(tr.final_net.weights(), net.weights());
        assert!(tr.points.iter().all(|p| p.path_norm == 0.0));
    }

    #[test]
    fn one_step_matches_hand_formula() {
        let act = ActivationSpec::sigmoid();
        let (w0, x, y, eta) = (0.3, 0.8, 0.9, 0.7);
        let net = ShallowNet::new(1, 1, act.clone(), vec![w0], vec![1]).unwrap();
        let data = Dataset::new(vec![Sample { x: vec![x], y }]);
        let tr = gd_train(&net, &data, &GDConfig::new(eta, 1)).unwrap();
        let f = act.phi(w0 * x);
        let expected = w0 - eta * act.phi_prime(w0 * x) * (f - y) * x;
        assert!((tr.final_net.weights()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn descent_and_path_norm_below_limit() {
        for seed in 0..10 {
            let (net, data, p) = instance(15, 4, 20, seed);
            let eta = 0.9 * step_size_limit(&p, &net.activation().bounds(), 20);
            let tr = gd_train(&net, &data, &GDConfig::new(eta, 40)).unwrap();
            for w in tr.risks.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            for pt in &tr.points {
                assert!(pt.path_norm <= (2.0 * eta * pt.t as f64 * tr.risks[0]).sqrt() + 1e-9);
            }
            let min = tr.risks.iter().copied().fold(f64::INFINITY, f64::min);
            assert_eq!(min, *tr.risks.last().unwrap());
        }
    }

    #[test]
    fn recording_stride_and_snapshots() {
        let (net, data, _) = instance(5, 3, 4, 2);
        let cfg = GDConfig {
            record_every: 3,
            store_parameters: true,
            snapshot_every: 5,
            ..GDConfig::new(0.5, 10)
        };
        let tr = gd_train(&net, &data, &cfg).unwrap();
        let ts: Vec<usize> = tr.points.iter().map(|p| p.t).collect();
        assert_eq!(ts, vec![0, 3, 5, 6, 9, 10]);
        assert_eq!(tr.risks.len(), 11);
        assert!(tr.parameters_at(5).is_ok());
        assert!(tr.parameters_at(3).is_err());
        assert_eq!(tr.parameters_at(10).unwrap(), tr.final_net.weights());
        assert_eq!(tr.points[0].path_norm, 0.0);
    }

    #[test]
    fn divergence_reports_step() {
        let (_, data, _) = instance(5, 3, 4, 2);
        let net = ShallowNet::init(3, 4, ActivationSpec::identity(), InitLaw::Gaussian { nu: 1.0 }, OutputMode::Alternating, 2).unwrap();
        let err = gd_train(&net, &data, &GDConfig::new(1e200, 3)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn pinv_scalar_closed_form_and_interpolation() {
        let (net, data, _) = instance(1, 3, 5, 7);
        let (pinv, alpha) = pinv_linear_solution(&net, &data).unwrap();
        let s = &data.samples()[0];
        let phi = net.ntk_feature(&s.x).unwrap();
        let k11 = crate::numerics::dot(&phi, &phi);
        let r = s.y - net.forward(&s.x).unwrap();
        assert!((alpha[0] - r / k11).abs() < 1e-12 * (1.0 + alpha[0].abs()));
        let d2: f64 = pinv.weights().iter().zip(net.weights()).map(|(a, b)| (a - b).powi(2)).sum();
        assert!((d2 - r * r / k11).abs() < 1e-10 * d2.max(1e-300));

        let (net, data, _) = instance(6, 3, 20, 8);
        let (pinv, _) = pinv_linear_solution(&net, &data).unwrap();
        for s in data.samples() {
            let phi = net.ntk_feature(&s.x).unwrap();
            let delta: Vec<f64> = pinv.weights().iter().zip(net.weights()).map(|(a, b)| a - b).collect();
            let lin = crate::numerics::dot(&phi, &delta);
            assert!((lin - (s.y - net.forward(&s.x).unwrap())).abs() < 1e-8);
        }
    }
}
