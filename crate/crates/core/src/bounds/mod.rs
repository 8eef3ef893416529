//! Closed-form constants and right-hand sides of the stability,
//! generalisation and optimisation-error bounds, and the report type that
//! compares them with measurements.

mod report;
mod spectral;

use serde::{Deserialize, Serialize};

pub use report::{format_table, BoundReport, Verdict, DETERMINISTIC_TOL};
pub use spectral::{spectral_audit, SpectralAuditConfig};

use crate::model::{ActivationBounds, ProblemConstants};
use crate::optimize::{OracleComponents, OracleObjective, OracleResult};
use crate::model::ShallowNet;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// Smoothness: `λ_max(∇²L_S) ≤ ρ`.
    pub rho: f64,
    /// Co-coercivity slack.
    pub epsilon: f64,
    /// Segment curvature slack with `L_S(W₀), L_{S^(i)}(W₀)` replaced by `C₀`.
    pub epsilon_tilde: f64,
    /// Generalisation-gap constant.
    pub b: f64,
    /// Optimisation-error curvature constant.
    pub b_tilde: f64,
    /// Smallest width for which the generalisation-gap bound applies.
    pub width_min: f64,
}

/// `ρ = C_x² (B'² + B'' B_φ + B'' C_y / √m)`
pub fn rho(p: &ProblemConstants, a: &ActivationBounds, m: usize) -> f64 {
    p.c_x.powi(2)
        * (a.b_phi_prime.powi(2) + a.b_phi_double_prime * a.b_phi + a.b_phi_double_prime * p.c_y / (m as f64).sqrt())
}

/// `ε = 2 (C_x² √C₀ B'' / √m)(4 B' C_x √(ηt) + √2)`
pub fn epsilon(p: &ProblemConstants, a: &ActivationBounds, m: usize, eta_t: f64) -> f64 {
    2.0 * (p.c_x.powi(2) * p.c_0.sqrt() * a.b_phi_double_prime / (m as f64).sqrt())
        * (4.0 * a.b_phi_prime * p.c_x * eta_t.sqrt() + 2f64.sqrt())
}

/// Segment curvature slack from measured initial risks on `S` and `S^(i)`:
/// `(C_x² B''/√m)(4 B' C_x √(ηs)(√L_S + √L_{S^(i)}) + √(2 L_{S^(i)}) + √(2 L_S))`.
pub fn epsilon_tilde(p: &ProblemConstants, a: &ActivationBounds, m: usize, eta_s: f64, risk0: f64, risk0_replaced: f64) -> f64 {
    let (r, ri) = (risk0.sqrt(), risk0_replaced.sqrt());
    p.c_x.powi(2) * a.b_phi_double_prime / (m as f64).sqrt()
        * (4.0 * a.b_phi_prime * p.c_x * eta_s.sqrt() * (r + ri) + 2f64.sqrt() * (r + ri))
}

/// `144 (ηt)² C_x⁴ C₀² B''² (4 B' C_x √(ηt) + √2)²`
pub fn width_min(p: &ProblemConstants, a: &ActivationBounds, eta_t: f64) -> f64 {
    144.0
        * eta_t.powi(2)
        * p.c_x.powi(4)
        * p.c_0.powi(2)
        * a.b_phi_double_prime.powi(2)
        * (4.0 * a.b_phi_prime * p.c_x * eta_t.sqrt() + 2f64.sqrt()).powi(2)
}

/// `b = 16 e³ C_x^{3/2} B'² (1 + C_x^{3/2} B'²)`
pub fn gen_gap_b(p: &ProblemConstants, a: &ActivationBounds) -> f64 {
    let k = p.c_x.powf(1.5) * a.b_phi_prime.powi(2);
    16.0 * std::f64::consts::E.powi(3) * k * (1.0 + k)
}

/// `b̃ = C_x² B'' (B' C_x + C₀)`
pub fn b_tilde(p: &ProblemConstants, a: &ActivationBounds) -> f64 {
    p.c_x.powi(2) * a.b_phi_double_prime * (a.b_phi_prime * p.c_x + p.c_0)
}

pub fn compute_constants(p: &ProblemConstants, a: &ActivationBounds, m: usize, eta: f64, t: usize) -> BoundConstants {
    let eta_t = eta * t as f64;
    BoundConstants {
        rho: rho(p, a, m),
        epsilon: epsilon(p, a, m, eta_t),
        epsilon_tilde: epsilon_tilde(p, a, m, eta_t, p.c_0, p.c_0),
        b: gen_gap_b(p, a),
        b_tilde: b_tilde(p, a),
        width_min: width_min(p, a, eta_t),
    }
}

/// Most negative Hessian eigenvalue allowed along a segment of length
/// `displacement`: `-(C_x² B''(B' C_x + C₀)/√m) · max(1, displacement)`.
pub fn curvature_floor(p: &ProblemConstants, a: &ActivationBounds, m: usize, displacement: f64) -> f64 {
    -b_tilde(p, a) / (m as f64).sqrt() * displacement.max(1.0)
}

/// The same floor without the `C_x²` factor, as it appears in the headline
/// statement. Equal to [`curvature_floor`] when `C_x = 1`.
pub fn curvature_floor_headline(p: &ProblemConstants, a: &ActivationBounds, m: usize, displacement: f64) -> f64 {
    -a.b_phi_double_prime * (a.b_phi_prime * p.c_x + p.c_0) / (m as f64).sqrt() * displacement.max(1.0)
}

/// `b (η/n + η² t/n²) Σ_{j=0}^{t} L_S(W_j)` with `t = risks.len() - 1`.
pub fn gen_gap_rhs(risks: &[f64], eta: f64, n: usize, b: f64) -> f64 {
    assert!(!risks.is_empty(), "need at least L_S(W_0)");
    let t = (risks.len() - 1) as f64;
    let n = n as f64;
    b * (eta / n + eta * eta * t / (n * n)) * risks.iter().sum::<f64>()
}

/// Stability constant as displayed: `8e η² t / n² · (1 - 2ηε)^{-t}`.
/// Infinite when `2ηε ≥ 1`.
pub fn stability_factor_displayed(eta: f64, t: usize, n: usize, eps: f64) -> f64 {
    if 2.0 * eta * eps >= 1.0 {
        return f64::INFINITY;
    }
    let (t, n) = (t as f64, n as f64);
    8.0 * std::f64::consts::E * eta * eta * t / (n * n) * (1.0 / (1.0 - 2.0 * eta * eps)).powf(t)
}

/// Stability constant from unrolling the recursion with `p = 1/t`:
/// `8 (1 + t)(1 + 1/t)^t η²/n² · (1 - 2ηε)^{-t}`. Never smaller than the
/// displayed form since `(1 + 1/t)^{t+1} ≥ e`.
pub fn stability_factor_rederived(eta: f64, t: usize, n: usize, eps: f64) -> f64 {
    if 2.0 * eta * eps >= 1.0 {
        return f64::INFINITY;
    }
    let (tf, n) = (t as f64, n as f64);
    let young = if t == 0 { 1.0 } else { (1.0 + 1.0 / tf).powf(tf) };
    8.0 * (1.0 + tf) * young * eta * eta / (n * n) * (1.0 / (1.0 - 2.0 * eta * eps)).powf(tf)
}

/// Best of the solver's value and the bracket at each candidate.
pub fn opt_error_rhs(oracle: &OracleResult, objective: &OracleObjective, candidates: &[&ShallowNet]) -> Result<f64> {
    let mut best = oracle.value;
    for c in candidates {
        best = best.min(objective.bracket(c)?.value());
    }
    Ok(best)
}

/// Bracket value at a single candidate.
pub fn opt_error_at(objective: &OracleObjective, candidate: &ShallowNet) -> Result<OracleComponents> {
    objective.bracket(candidate)
}

/// `(1 + C (ηT/n)(1 + ηT/n)) · oracle`
pub fn corollary_risk_rhs(oracle_value: f64, eta: f64, t: usize, n: usize, c: f64) -> f64 {
    let r = eta * t as f64 / n as f64;
    (1.0 + c * r * (1.0 + r)) * oracle_value
}

/// `C (ηT/n)(1 + ηT/n) · oracle`
pub fn corollary_gap_rhs(oracle_value: f64, eta: f64, t: usize, n: usize, c: f64) -> f64 {
    let r = eta * t as f64 / n as f64;
    c * r * (1.0 + r) * oracle_value
}
