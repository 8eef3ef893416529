use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sup-norm bounds of an activation and its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationBounds {
    pub b_phi: f64,
    pub b_phi_prime: f64,
    pub b_phi_double_prime: f64,
}

/// Grid on which bounds are certified.
pub const CERT_RANGE: (f64, f64) = (-50.0, 50.0);
pub const CERT_POINTS: usize = 100_000;

type ScalarFn = fn(f64) -> f64;

/// A twice-differentiable activation with certified derivative bounds.
#[derive(Clone)]
pub struct ActivationSpec {
    name: String,
    phi: ScalarFn,
    phi_prime: ScalarFn,
    phi_double_prime: ScalarFn,
    /// `(φ, φ')` sharing work; must agree bitwise with the separate maps.
    fused: Option<fn(f64) -> (f64, f64)>,
    bounds: ActivationBounds,
}

impl fmt::Debug for ActivationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ActivationSpec")
            .field("name", &self.name)
            .field("bounds", &self.bounds)
            .finish()
    }
}

impl PartialEq for ActivationSpec {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.bounds == other.bounds
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sigmoid_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

fn sigmoid_double_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s) * (1.0 - 2.0 * s)
}

fn sigmoid_fused(x: f64) -> (f64, f64) {
    let s = sigmoid(x);
    (s, s * (1.0 - s))
}

fn tanh_fused(x: f64) -> (f64, f64) {
    let t = x.tanh();
    (t, 1.0 - t * t)
}

fn tanh_prime(x: f64) -> f64 {
    let t = x.tanh();
    1.0 - t * t
}

fn tanh_double_prime(x: f64) -> f64 {
    let t = x.tanh();
    -2.0 * t * (1.0 - t * t)
}

impl ActivationSpec {
    pub fn sigmoid() -> Self {
        static BOUNDS: OnceLock<ActivationBounds> = OnceLock::new();
        let bounds = *BOUNDS.get_or_init(|| certify(sigmoid, sigmoid_prime, sigmoid_double_prime));
        Self {
            name: "sigmoid".into(),
            phi: sigmoid,
            phi_prime: sigmoid_prime,
            phi_double_prime: sigmoid_double_prime,
            fused: Some(sigmoid_fused),
            bounds,
        }
    }

    pub fn tanh() -> Self {
        static BOUNDS: OnceLock<ActivationBounds> = OnceLock::new();
        let bounds = *BOUNDS.get_or_init(|| certify(f64::tanh, tanh_prime, tanh_double_prime));
        Self {
            name: "tanh".into(),
            phi: f64::tanh,
            phi_prime: tanh_prime,
            phi_double_prime: tanh_double_prime,
            fused: Some(tanh_fused),
            bounds,
        }
    }

    /// `φ(z) = z`. Unbounded, so `b_phi` is infinite; useful as a convex
    /// (linear-model) stand-in.
    pub fn identity() -> Self {
        Self {
            name: "identity".into(),
            phi: |z| z,
            phi_prime: |_| 1.0,
            phi_double_prime: |_| 0.0,
            fused: None,
            bounds: ActivationBounds {
                b_phi: f64::INFINITY,
                b_phi_prime: 1.0,
                b_phi_double_prime: 0.0,
            },
        }
    }

    /// A user-supplied activation; bounds are certified on the grid.
    pub fn custom(name: &str, phi: ScalarFn, phi_prime: ScalarFn, phi_double_prime: ScalarFn) -> Self {
        Self {
            name: name.into(),
            phi,
            phi_prime,
            phi_double_prime,
            fused: None,
            bounds: certify(phi, phi_prime, phi_double_prime),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "sigmoid" => Ok(Self::sigmoid()),
            "tanh" => Ok(Self::tanh()),
            "identity" | "linear" => Ok(Self::identity()),
            other => Err(Error::UnknownActivation(other.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bounds(&self) -> ActivationBounds {
        self.bounds
    }

    #[inline]
    pub fn phi(&self, z: f64) -> f64 {
        (self.phi)(z)
    }

    #[inline]
    pub fn phi_prime(&self, z: f64) -> f64 {
        (self.phi_prime)(z)
    }

    #[inline]
    pub fn phi_double_prime(&self, z: f64) -> f64 {
        (self.phi_double_prime)(z)
    }

    /// `(φ(z), φ'(z))`
    #[inline]
    pub fn phi_with_prime(&self, z: f64) -> (f64, f64) {
        match self.fused {
            Some(f) => f(z),
            None => ((self.phi)(z), (self.phi_prime)(z)),
        }
    }
}

/// Maximises `|f|` on the certification grid, then refines the best cell by
/// golden-section search.
pub fn sup_abs(f: ScalarFn) -> f64 {
    let (lo, hi) = CERT_RANGE;
    let h = (hi - lo) / (CERT_POINTS - 1) as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..CERT_POINTS {
        let v = f(lo + i as f64 * h).abs();
        if v > best.1 {
            best = (i, v);
        }
    }
    let i = best.0;
    let a = lo + i.saturating_sub(1) as f64 * h;
    let b = lo + (i + 1).min(CERT_POINTS - 1) as f64 * h;
    best.1.max(golden_max(|x| f(x).abs(), a, b))
}

fn golden_max(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-14 {
            break;
        }
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - ratio * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + ratio * (b - a);
            gd = g(d);
        }
    }
    gc.max(gd)
}

fn certify(phi: ScalarFn, phi_prime: ScalarFn, phi_double_prime: ScalarFn) -> ActivationBounds {
    ActivationBounds {
        b_phi: sup_abs(phi),
        b_phi_prime: sup_abs(phi_prime),
        b_phi_double_prime: sup_abs(phi_double_prime),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_bounds() {
        let b = ActivationSpec::sigmoid().bounds();
        // sup |φ| on the grid is σ(50), one to double precision
        assert!((b.b_phi - 1.0).abs() < 1e-15);
        assert!((b.b_phi_prime - 0.25).abs() < 1e-15);
        // closed form 1/(6√3)
        assert!((b.b_phi_double_prime - 1.0 / (6.0 * 3f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn tanh_bounds() {
        let b = ActivationSpec::tanh().bounds();
        assert!((b.b_phi - 1.0).abs() < 1e-15);
        assert!((b.b_phi_prime - 1.0).abs() < 1e-12);
        // closed form 4/(3√3)
        assert!((b.b_phi_double_prime - 4.0 / (3.0 * 3f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn grid_bounds_and_finite_differences() {
        for act in [ActivationSpec::sigmoid(), ActivationSpec::tanh()] {
            let b = act.bounds();
            let (lo, hi) = CERT_RANGE;
            let h = (hi - lo) / (CERT_POINTS - 1) as f64;
            for i in 0..CERT_POINTS {
                let z = lo + i as f64 * h;
                assert!(act.phi(z).abs() <= b.b_phi);
                assert!(act.phi_prime(z).abs() <= b.b_phi_prime);
                assert!(act.phi_double_prime(z).abs() <= b.b_phi_double_prime);
                let fd = (act.phi(z + 1e-4) - act.phi(z - 1e-4)) / 2e-4;
                assert!((fd - act.phi_prime(z)).abs() < 1e-6, "{} at {z}", act.name());
            }
        }
    }

    #[test]
    fn fused_matches_separate_bitwise() {
        for act in [ActivationSpec::sigmoid(), ActivationSpec::tanh(), ActivationSpec::identity()] {
            for i in -400..=400 {
                let z = i as f64 * 0.0731;
                let (p, dp) = act.phi_with_prime(z);
                assert_eq!(p.to_bits(), act.phi(z).to_bits());
                assert_eq!(dp.to_bits(), act.phi_prime(z).to_bits());
            }
        }
    }

    #[test]
    fn custom_matches_builtin() {
        let c = ActivationSpec::custom("sig", sigmoid, sigmoid_prime, sigmoid_double_prime);
        assert_eq!(c.bounds(), ActivationSpec::sigmoid().bounds());
        assert!(ActivationSpec::by_name("relu").is_err());
        assert_eq!(ActivationSpec::by_name("tanh").unwrap().name(), "tanh");
    }
}
