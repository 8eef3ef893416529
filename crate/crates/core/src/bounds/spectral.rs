use serde::{Deserialize, Serialize};

use super::{curvature_floor, curvature_floor_headline, rho, BoundReport};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ProblemConstants, ShallowNet};
use crate::numerics::{self, norm, SymmetricSpectrum, DEFAULT_DENSE_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralAuditConfig {
    /// Points of the uniform `α` grid on `[0, 1]`.
    pub grid_points: usize,
    /// Golden-section steps around the grid minimiser.
    pub refine_steps: usize,
    pub dense_cap: usize,
    pub lanczos_iters: usize,
    pub seed: u64,
}

impl Default for SpectralAuditConfig {
    fn default() -> Self {
        Self {
            grid_points: 11,
            refine_steps: 12,
            dense_cap: DEFAULT_DENSE_CAP,
            lanczos_iters: 100,
            seed: 0,
        }
    }
}

fn spectrum(net: &ShallowNet, data: &Dataset, cfg: &SpectralAuditConfig) -> Result<SymmetricSpectrum> {
    let dm = net.dm();
    if dm <= cfg.dense_cap {
        numerics::dense_extreme_eigs_capped(&net.dense_hessian_capped(data, cfg.dense_cap)?, cfg.dense_cap)
    } else {
        let apply = |v: &[f64], out: &mut [f64]| {
            let hv = net.hessian_vector_product(data, v).expect("shape fixed by construction");
            out.copy_from_slice(&hv);
        };
        numerics::lanczos_extreme_eigs(&apply, dm, cfg.lanczos_iters.min(dm).max(2), cfg.seed)
    }
}

fn point_on_segment(w_tilde: &ShallowNet, w: &ShallowNet, alpha: f64) -> Result<ShallowNet> {
    let p: Vec<f64> = w_tilde
        .weights()
        .iter()
        .zip(w.weights())
        .map(|(a, b)| a + alpha * (b - a))
        .collect();
    w_tilde.with_weights(p)
}

/// Checks `λ_max(∇²L_S(W)) ≤ ρ` and
/// `min_{α∈[0,1]} λ_min(∇²L_S(W̃ + α(W - W̃))) ≥ curvature_floor`.
///
/// The curvature report stores `-min λ_min` against `|floor|`.
/// The curvature check requires `L_S(W̃) ≤ C₀²` and is void otherwise.
pub fn spectral_audit(
    w: &ShallowNet,
    w_tilde: &ShallowNet,
    data: &Dataset,
    problem: &ProblemConstants,
    cfg: &SpectralAuditConfig,
) -> Result<(BoundReport, BoundReport)> {
    if w.dm() != w_tilde.dm() || w.signs() != w_tilde.signs() {
        return Err(Error::MismatchedPairs("segment endpoints differ in shape or output layer".into()));
    }
    if cfg.grid_points < 1 {
        return Err(Error::InvalidSpec("spectral audit needs at least one grid point".into()));
    }
    let bounds = w.activation().bounds();
    let m = w.m();
    let diff: Vec<f64> = w.weights().iter().zip(w_tilde.weights()).map(|(a, b)| a - b).collect();
    let displacement = norm(&diff);
    let risk_tilde = w_tilde.empirical_risk(data)?;
    let pre_ok = risk_tilde <= problem.c_0 * problem.c_0;

    let at_w = spectrum(w, data, cfg)?;
    let rho_v = rho(problem, &bounds, m);
    let smooth = BoundReport::deterministic("hessian lambda_max <= rho", at_w.lambda_max, rho_v, "smoothness constant rho = C_x^2 (B'^2 + B'' B_phi + B'' C_y / sqrt m)")
        .detail("rho", rho_v)
        .detail("lambda_min_at_w", at_w.lambda_min);

    let lambda_min_at = |alpha: f64| -> Result<f64> { Ok(spectrum(&point_on_segment(w_tilde, w, alpha)?, data, cfg)?.lambda_min) };
    let (mut best_alpha, mut best) = (0.0, f64::INFINITY);
    if displacement == 0.0 {
        best = at_w.lambda_min;
    } else {
        let g = cfg.grid_points;
        let step = if g == 1 { 0.0 } else { 1.0 / (g - 1) as f64 };
        let mut grid = Vec::with_capacity(g);
        for j in 0..g {
            let a = j as f64 * step;
            let v = if j + 1 == g { at_w.lambda_min } else { lambda_min_at(a)? };
            grid.push(v);
            if v < best {
                best = v;
                best_alpha = a;
            }
        }
        if g > 1 && cfg.refine_steps > 0 {
            let (lo, hi) = ((best_alpha - step).max(0.0), (best_alpha + step).min(1.0));
            let (a, v) = golden_min(&lambda_min_at, lo, hi, cfg.refine_steps)?;
            if v < best {
                best = v;
                best_alpha = a;
            }
        }
    }
    let floor = curvature_floor(problem, &bounds, m, displacement);
    let headline = curvature_floor_headline(problem, &bounds, m, displacement);
    let curv = BoundReport::deterministic(
        "segment -lambda_min <= |curvature floor|",
        -best,
        -floor,
        "curvature floor C_x^2 B'' (B' C_x + C0) / sqrt m * max(1, |W - W~|), C0 = realised max sample loss at init",
    )
    .detail("lambda_min", best)
    .detail("argmin_alpha", best_alpha)
    .detail("displacement", displacement)
    .detail("floor_without_cx2", headline)
    .detail("risk_at_w_tilde", risk_tilde)
    .precondition("L_S(W~) <= C0^2", pre_ok);
    Ok((smooth, curv))
}

fn golden_min(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, steps: usize) -> Result<(f64, f64)> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..steps {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}
