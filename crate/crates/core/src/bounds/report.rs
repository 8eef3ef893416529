use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Absolute tolerance for deterministic comparisons.
pub const DETERMINISTIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    /// Exceeds the bound by less than the numerical tolerance, or by fewer
    /// than `z` standard errors for a Monte-Carlo mean.
    HoldsAtMcTolerance,
    VoidPrecondition,
    Violated,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::HoldsAtMcTolerance => "holds_at_mc_tolerance",
            Verdict::VoidPrecondition => "void_precondition",
            Verdict::Violated => "violated",
        }
    }

    pub fn is_violation(self) -> bool {
        self == Verdict::Violated
    }
}

/// A measured quantity against an upper bound. Lower bounds are stored
/// negated so that `measured ≤ bound` is always the claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    /// `bound - measured`
    pub slack: f64,
    pub verdict: Verdict,
    /// Standard error of `measured` when it is a Monte-Carlo mean.
    pub std_err: Option<f64>,
    pub preconditions: BTreeMap<String, bool>,
    /// Which statement the bound comes from and how its constants were set.
    pub provenance: String,
    /// Constants and alternative forms that went into `bound`.
    pub details: BTreeMap<String, f64>,
}

impl BoundReport {
    /// Deterministic comparison with [`DETERMINISTIC_TOL`].
    pub fn deterministic(name: impl Into<String>, measured: f64, bound: f64, provenance: impl Into<String>) -> Self {
        Self::deterministic_with_tol(name, measured, bound, DETERMINISTIC_TOL, provenance)
    }

    /// Deterministic comparison with an explicit absolute tolerance.
    pub fn deterministic_with_tol(name: impl Into<String>, measured: f64, bound: f64, tol: f64, provenance: impl Into<String>) -> Self {
        let verdict = if measured <= bound {
            Verdict::Holds
        } else if measured <= bound + tol {
            Verdict::HoldsAtMcTolerance
        } else {
            Verdict::Violated
        };
        Self::with_verdict(name, measured, bound, verdict, None, provenance)
    }

    /// Monte-Carlo comparison: holds if the mean is below the bound, holds at
    /// tolerance if `mean - z·se` is, violated otherwise.
    pub fn monte_carlo(name: impl Into<String>, mean: f64, std_err: f64, bound: f64, z: f64, provenance: impl Into<String>) -> Self {
        let verdict = if mean <= bound {
            Verdict::Holds
        } else if mean - z * std_err <= bound {
            Verdict::HoldsAtMcTolerance
        } else {
            Verdict::Violated
        };
        Self::with_verdict(name, mean, bound, verdict, Some(std_err), provenance)
    }

    fn with_verdict(
        name: impl Into<String>,
        measured: f64,
        bound: f64,
        verdict: Verdict,
        std_err: Option<f64>,
        provenance: impl Into<String>,
    ) -> Self {
        let verdict = if measured.is_nan() || bound.is_nan() { Verdict::Violated } else { verdict };
        Self {
            name: name.into(),
            measured,
            bound,
            slack: bound - measured,
            verdict,
            std_err,
            preconditions: BTreeMap::new(),
            provenance: provenance.into(),
            details: BTreeMap::new(),
        }
    }

    /// Records a precondition; a failing one voids the verdict.
    pub fn precondition(mut self, name: impl Into<String>, ok: bool) -> Self {
        self.preconditions.insert(name.into(), ok);
        if !ok {
            self.verdict = Verdict::VoidPrecondition;
        }
        self
    }

    pub fn detail(mut self, key: impl Into<String>, value: f64) -> Self {
        self.details.insert(key.into(), value);
        self
    }

    pub fn holds(&self) -> bool {
        matches!(self.verdict, Verdict::Holds | Verdict::HoldsAtMcTolerance)
    }
}

/// Fixed-width table for terminal output.
pub fn format_table(reports: &[BoundReport]) -> String {
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>13}  {:>13}  {:>13}  verdict", "name", "measured", "bound", "slack");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>13.6e}  {:>13.6e}  {:>13.6e}  {}",
            r.name,
            r.measured,
            r.bound,
            r.slack,
            r.verdict.as_str()
        );
    }
    out
}
