use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{gd_train, GDConfig, TracePoint, Trajectory};
use crate::bounds::b_tilde;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ProblemConstants, ShallowNet};
use crate::numerics::{axpy, norm};
use crate::seeds;

/// Std of the Gaussian perturbation used for the second restart.
pub const PERTURB_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleComponents {
    pub risk: f64,
    /// `‖W - W₀‖² / (ηt)`
    pub quad: f64,
    /// `b̃ ‖W - W₀‖³ / √m`
    pub cubic: f64,
    /// `b̃ C₀ (ηt)^{3/2} / √m`
    pub tail: f64,
}

impl OracleComponents {
    pub fn value(&self) -> f64 {
        self.risk + self.quad + self.cubic + self.tail
    }
}

/// `L_S(W) + ‖W - W₀‖²/(ηt) + b̃‖W - W₀‖³/√m + b̃ C₀ (ηt)^{3/2}/√m`
#[derive(Debug, Clone)]
pub struct OracleObjective<'a> {
    net0: &'a ShallowNet,
    data: &'a Dataset,
    eta_t: f64,
    b_tilde: f64,
    c_0: f64,
}

impl<'a> OracleObjective<'a> {
    pub fn new(net0: &'a ShallowNet, data: &'a Dataset, eta_t: f64, problem: &ProblemConstants) -> Result<Self> {
        if !(eta_t > 0.0 && eta_t.is_finite()) {
            return Err(Error::Config(format!("eta * t must be positive, got {eta_t}")));
        }
        Ok(Self {
            net0,
            data,
            eta_t,
            b_tilde: b_tilde(problem, &net0.activation().bounds()),
            c_0: problem.c_0,
        })
    }

    pub fn eta_t(&self) -> f64 {
        self.eta_t
    }

    pub fn b_tilde(&self) -> f64 {
        self.b_tilde
    }

    fn sqrt_m(&self) -> f64 {
        (self.net0.m() as f64).sqrt()
    }

    pub fn tail(&self) -> f64 {
        self.b_tilde * self.c_0 * self.eta_t.powf(1.5) / self.sqrt_m()
    }

    fn delta(&self, candidate: &ShallowNet) -> Result<Vec<f64>> {
        if candidate.dm() != self.net0.dm() || candidate.signs() != self.net0.signs() {
            return Err(Error::MismatchedPairs("oracle candidate differs from W0 in shape or output layer".into()));
        }
        Ok(candidate.weights().iter().zip(self.net0.weights()).map(|(a, b)| a - b).collect())
    }

    fn components_with(&self, risk: f64, dist: f64) -> OracleComponents {
        OracleComponents {
            risk,
            quad: dist * dist / self.eta_t,
            cubic: self.b_tilde * dist.powi(3) / self.sqrt_m(),
            tail: self.tail(),
        }
    }

    /// The bracket evaluated at `candidate`.
    pub fn bracket(&self, candidate: &ShallowNet) -> Result<OracleComponents> {
        let dist = norm(&self.delta(candidate)?);
        Ok(self.components_with(candidate.empirical_risk(self.data)?, dist))
    }

    /// Value and gradient of the bracket (without the constant tail).
    fn value_and_grad(&self, candidate: &ShallowNet) -> Result<(OracleComponents, Vec<f64>)> {
        let delta = self.delta(candidate)?;
        let dist = norm(&delta);
        let eval = candidate.evaluate(self.data)?;
        let mut g = eval.grad;
        axpy(2.0 / self.eta_t + 3.0 * self.b_tilde * dist / self.sqrt_m(), &delta, &mut g);
        Ok((self.components_with(eval.risk, dist), g))
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub value: f64,
    pub argmin_net: ShallowNet,
    pub components: OracleComponents,
    /// Descent trace of the winning restart; `risk` holds `L_S`.
    pub solver_trace: Trajectory,
    pub restart: usize,
}

/// Minimises the bracket by gradient descent from `W₀`, a perturbation of
/// `W₀`, and the final iterate of plain GD on `L_S` with `solver`'s step and
/// horizon; further restarts add more perturbations.
pub fn solve_oracle(
    net0: &ShallowNet,
    data: &Dataset,
    eta_t: f64,
    problem: &ProblemConstants,
    solver: &GDConfig,
    restarts: usize,
    seed: u64,
) -> Result<OracleResult> {
    let objective = OracleObjective::new(net0, data, eta_t, problem)?;
    let restarts = restarts.max(1);
    let mut starts = vec![net0.clone()];
    let perturbed = |r: usize| -> Result<ShallowNet> {
        let normal = Normal::new(0.0, PERTURB_STD).expect("positive std");
        let mut rng = seeds::stream(seed, &[seeds::tag::PERTURB, r as u64]);
        let w: Vec<f64> = net0.weights().iter().map(|v| v + normal.sample(&mut rng)).collect();
        net0.with_weights(w)
    };
    if restarts >= 2 {
        starts.push(perturbed(1)?);
    }
    if restarts >= 3 {
        starts.push(gd_train(net0, data, &GDConfig::new(solver.eta, solver.t_max))?.final_net);
    }
    for r in 3..restarts {
        starts.push(perturbed(r)?);
    }
    solve_oracle_from(&objective, &starts, solver)
}

/// Descends the bracket from each start with step halving on increase and
/// keeps the best end point.
pub fn solve_oracle_from(objective: &OracleObjective<'_>, starts: &[ShallowNet], solver: &GDConfig) -> Result<OracleResult> {
    solver.validate()?;
    let mut best: Option<OracleResult> = None;
    for (restart, start) in starts.iter().enumerate() {
        let res = descend(objective, start, solver, restart)?;
        if best.as_ref().is_none_or(|b| res.value < b.value) {
            best = Some(res);
        }
    }
    best.ok_or_else(|| Error::Config("oracle solver needs at least one start".into()))
}

fn descend(obj: &OracleObjective<'_>, start: &ShallowNet, solver: &GDConfig, restart: usize) -> Result<OracleResult> {
    let mut net = start.clone();
    let (mut comp, mut grad) = obj.value_and_grad(&net)?;
    if !comp.value().is_finite() {
        return Err(Error::SolverDivergence { restart, iteration: 0 });
    }
    let mut step = solver.eta;
    let mut points = Vec::new();
    let mut risks = vec![comp.risk];
    let point = |t: usize, c: &OracleComponents, g: &[f64]| TracePoint {
        t,
        risk: c.risk,
        path_norm: (c.quad * obj.eta_t).sqrt(),
        grad_norm: norm(g),
        sample_grad_sq_mean: f64::NAN,
        parameters: None,
    };
    points.push(point(0, &comp, &grad));
    let mut iters = 0;
    'outer: for it in 1..=solver.t_max {
        loop {
            let mut w = net.weights().to_vec();
            axpy(-step, &grad, &mut w);
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::SolverDivergence { restart, iteration: it });
            }
            let trial = net.with_weights(w)?;
            let (c, g) = obj.value_and_grad(&trial)?;
            if !c.value().is_finite() {
                return Err(Error::SolverDivergence { restart, iteration: it });
            }
            if c.value() <= comp.value() {
                net = trial;
                comp = c;
                grad = g;
                break;
            }
            step *= 0.5;
            if step < solver.eta * 1e-12 {
                break 'outer;
            }
        }
        iters = it;
        risks.push(comp.risk);
        if it % solver.record_every == 0 {
            points.push(point(it, &comp, &grad));
        }
    }
    if points.last().is_none_or(|p| p.t != iters) {
        points.push(point(iters, &comp, &grad));
    }
    let mut config = *solver;
    config.t_max = iters;
    Ok(OracleResult {
        value: comp.value(),
        components: comp,
        solver_trace: Trajectory {
            points,
            risks,
            sample_grad_sq_means: Vec::new(),
            final_net: net.clone(),
            config,
        },
        argmin_net: net,
        restart,
    })
}
