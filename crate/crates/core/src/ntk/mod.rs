//! Neural-tangent-kernel quantities at initialisation: features, empirical
//! and expected gram matrices, the linearised model and the kernel oracle.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::BoundReport;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ActivationSpec, ShallowNet};
use crate::numerics::{dense_extreme_eigs, dot, norm, psd_solve, spectral_norm, DenseMatrix};
use crate::optimize::feature_columns;
use crate::seeds;

/// MC draws per parallel chunk in [`expected_gram`].
const MC_CHUNK: usize = 1024;

/// `Φ₀`, shape `dm × n`; column `i` is the NTK feature of `x_i`.
pub fn feature_matrix(net0: &ShallowNet, data: &Dataset) -> Result<DenseMatrix> {
    let cols = feature_columns(net0, data)?;
    Ok(DenseMatrix::from_fn(net0.dm(), data.len(), |r, i| cols[i][r]))
}

/// `K̂ = Φ₀ᵀ Φ₀ / n`
pub fn empirical_gram(net0: &ShallowNet, data: &Dataset) -> Result<DenseMatrix> {
    let cols = feature_columns(net0, data)?;
    let n = data.len();
    let k = DenseMatrix::from_fn(n, n, |i, j| dot(&cols[i], &cols[j]) / n as f64);
    Ok(k.symmetrized())
}

/// `K̂` from the factorised form `(1/n)⟨x_i,x_j⟩ (1/m) Σ_k φ'(⟨x_i,w_k⟩) φ'(⟨x_j,w_k⟩)`
/// with `weights` column-major `d × m`. Independent of the output signs.
pub fn gram_from_weights(data: &Dataset, act: &ActivationSpec, weights: &[f64], m: usize) -> DenseMatrix {
    let n = data.len();
    let d = data.dim();
    let a: Vec<Vec<f64>> = data
        .samples()
        .iter()
        .map(|s| (0..m).map(|k| act.phi_prime(dot(&weights[k * d..(k + 1) * d], &s.x))).collect())
        .collect();
    let k = DenseMatrix::from_fn(n, n, |i, j| {
        let xs = &data.samples();
        dot(&xs[i].x, &xs[j].x) * dot(&a[i], &a[j]) / (n as f64 * m as f64)
    });
    k.symmetrized()
}

/// Monte-Carlo estimate of `K = E[K̂]` over `w ~ N(0, ν² I)`.
#[derive(Debug, Clone)]
pub struct ExpectedGram {
    pub k: DenseMatrix,
    /// Per-entry standard error.
    pub std_err: DenseMatrix,
    pub mc_samples: usize,
}

pub fn expected_gram(data: &Dataset, act: &ActivationSpec, nu: f64, mc_samples: usize, seed: u64) -> Result<ExpectedGram> {
    if mc_samples < 2 {
        return Err(Error::Config("expected gram needs at least two Monte-Carlo samples".into()));
    }
    let normal = Normal::new(0.0, nu).map_err(|e| Error::Config(format!("init std: {e}")))?;
    let n = data.len();
    let d = data.dim();
    let chunks = mc_samples.div_ceil(MC_CHUNK);
    // per chunk: sums and sums of squares of φ'(⟨x_i,w⟩)φ'(⟨x_j,w⟩), upper triangle
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seeds::stream(seed, &[seeds::tag::GRAM_MC, c as u64]);
            let count = MC_CHUNK.min(mc_samples - c * MC_CHUNK);
            let mut s1 = vec![0.0; n * n];
            let mut s2 = vec![0.0; n * n];
            let mut w = vec![0.0; d];
            let mut a = vec![0.0; n];
            for _ in 0..count {
                w.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
                for (ai, s) in a.iter_mut().zip(data.samples()) {
                    *ai = act.phi_prime(dot(&w, &s.x));
                }
                for i in 0..n {
                    for j in i..n {
                        let v = a[i] * a[j];
                        s1[i * n + j] += v;
                        s2[i * n + j] += v * v;
                    }
                }
            }
            (s1, s2)
        })
        .collect();
    let mut s1 = vec![0.0; n * n];
    let mut s2 = vec![0.0; n * n];
    for (p1, p2) in partials {
        s1.iter_mut().zip(&p1).for_each(|(a, b)| *a += b);
        s2.iter_mut().zip(&p2).for_each(|(a, b)| *a += b);
    }
    let r = mc_samples as f64;
    let mut k = DenseMatrix::zeros(n, n);
    let mut se = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mean = s1[i * n + j] / r;
            let var = ((s2[i * n + j] / r - mean * mean) * r / (r - 1.0)).max(0.0);
            let g = dot(&data.samples()[i].x, &data.samples()[j].x) / n as f64;
            k[(i, j)] = g * mean;
            k[(j, i)] = g * mean;
            se[(i, j)] = g.abs() * (var / r).sqrt();
            se[(j, i)] = se[(i, j)];
        }
    }
    Ok(ExpectedGram { k, std_err: se, mc_samples })
}

#[derive(Debug, Clone)]
pub struct GramPair {
    pub k_hat: DenseMatrix,
    pub k_expected: DenseMatrix,
    pub mc_samples: usize,
    /// Initialisation law the expectation is taken over.
    pub spec: String,
}

/// `B' √(ln(2n/δ) / (2m))`
pub fn concentration_rhs(n: usize, m: usize, delta: f64, b_phi_prime: f64) -> f64 {
    b_phi_prime * ((2.0 * n as f64 / delta).ln() / (2.0 * m as f64)).sqrt()
}

/// Compares `‖K̂ - K‖₂` with `B' √(ln(2n/δ)/(2m))`. The Frobenius norm of the
/// difference is reported alongside.
pub fn gram_concentration_audit(k_hat: &DenseMatrix, k_expected: &DenseMatrix, m: usize, delta: f64, b_phi_prime: f64) -> Result<BoundReport> {
    if k_hat.rows() != k_expected.rows() || k_hat.cols() != k_expected.cols() {
        return Err(Error::DimensionMismatch {
            expected: k_hat.rows(),
            got: k_expected.rows(),
            context: "gram pair",
        });
    }
    let diff = k_hat.sub(k_expected);
    let n = k_hat.rows();
    let spec = spectral_norm(&diff, n, 0)?;
    let rhs = concentration_rhs(n, m, delta, b_phi_prime);
    Ok(BoundReport::deterministic("gram concentration ||K^ - K||_2", spec, rhs, "NTK gram concentration B' sqrt(ln(2n/delta) / (2m))")
        .detail("frobenius", diff.frobenius_norm())
        .detail("delta", delta)
        .detail("m", m as f64))
}

/// Redraws `W₀` `redraws` times and reports how often the concentration
/// bound fails, against `δ + slack`.
#[allow(clippy::too_many_arguments)]
pub fn gram_concentration_frequency(
    data: &Dataset,
    act: &ActivationSpec,
    nu: f64,
    m: usize,
    k_expected: &ExpectedGram,
    delta: f64,
    slack: f64,
    redraws: usize,
    seed: u64,
) -> Result<BoundReport> {
    let normal = Normal::new(0.0, nu).map_err(|e| Error::Config(format!("init std: {e}")))?;
    let d = data.dim();
    let bp = act.bounds().b_phi_prime;
    let outcomes: Vec<Result<(bool, f64)>> = (0..redraws)
        .into_par_iter()
        .map(|r| {
            let mut rng = seeds::stream(seed, &[seeds::tag::REDRAW, r as u64]);
            let w: Vec<f64> = (0..d * m).map(|_| normal.sample(&mut rng)).collect();
            let k_hat = gram_from_weights(data, act, &w, m);
            let rep = gram_concentration_audit(&k_hat, &k_expected.k, m, delta, bp)?;
            Ok((rep.measured > rep.bound, rep.measured))
        })
        .collect();
    let mut fails = 0usize;
    let mut worst = 0f64;
    for o in outcomes {
        let (f, v) = o?;
        fails += f as usize;
        worst = worst.max(v);
    }
    let freq = fails as f64 / redraws as f64;
    let mc_se_max = k_expected.std_err.as_slice().iter().copied().fold(0.0, f64::max);
    Ok(BoundReport::deterministic("gram concentration violation frequency", freq, delta + slack, "NTK gram concentration, frequency over redraws of W0 against delta + slack")
        .detail("redraws", redraws as f64)
        .detail("worst_spectral_gap", worst)
        .detail("rhs", concentration_rhs(data.len(), m, delta, bp))
        .detail("expected_gram_max_std_err", mc_se_max))
}

/// Which targets the linearised model is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearTarget {
    /// `y_i`
    Raw,
    /// `y_i - f_{W₀}(x_i)`
    Residual,
}

/// `f^lin_W(x) = Σ_k u_k φ'(⟨x, W₀_k⟩) ⟨W_k - W₀_k, x⟩`
pub fn linearized_output(net0: &ShallowNet, candidate: &ShallowNet, x: &[f64]) -> Result<f64> {
    let delta = delta(net0, candidate)?;
    Ok(dot(&net0.ntk_feature(x)?, &delta))
}

fn delta(net0: &ShallowNet, candidate: &ShallowNet) -> Result<Vec<f64>> {
    if net0.dm() != candidate.dm() || net0.signs() != candidate.signs() {
        return Err(Error::MismatchedPairs("linearisation point and candidate differ".into()));
    }
    Ok(candidate.weights().iter().zip(net0.weights()).map(|(a, b)| a - b).collect())
}

/// `½ Σ_i (target_i - f^lin_W(x_i))²`
pub fn linearized_risk(net0: &ShallowNet, candidate: &ShallowNet, data: &Dataset, target: LinearTarget) -> Result<f64> {
    let delta = delta(net0, candidate)?;
    let mut total = 0.0;
    for s in data.samples() {
        let base = match target {
            LinearTarget::Raw => s.y,
            LinearTarget::Residual => s.y - net0.forward(&s.x)?,
        };
        let r = base - dot(&net0.ntk_feature(&s.x)?, &delta);
        total += 0.5 * r * r;
    }
    Ok(total)
}

/// `|f_W(x) - f_{W₀}(x) - f^lin_W(x)|` against `B'' ‖x‖ ‖W - W₀‖² / (2√m)`.
pub fn taylor_error_audit(net0: &ShallowNet, candidate: &ShallowNet, x: &[f64]) -> Result<BoundReport> {
    let delta = delta(net0, candidate)?;
    let err = (candidate.forward(x)? - net0.forward(x)? - dot(&net0.ntk_feature(x)?, &delta)).abs();
    let bpp = net0.activation().bounds().b_phi_double_prime;
    let dist2 = dot(&delta, &delta);
    let xn = norm(x);
    let sqrt_m = (net0.m() as f64).sqrt();
    let bound = bpp * xn / (2.0 * sqrt_m) * dist2;
    Ok(BoundReport::deterministic("linearisation error", err, bound, "NTK Taylor remainder B'' |x| |W - W0|^2 / (2 sqrt m)")
        .detail("x_norm", xn)
        .detail("bound_with_x_norm_squared", bpp * xn * xn / (2.0 * sqrt_m) * dist2)
        .precondition("|x| <= 1", xn <= 1.0 + 1e-12))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramKind {
    Empirical,
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NtkOracleResult {
    /// `⟨r, (nK)⁻¹ r⟩` with `r = y - ŷ₀`.
    pub quad_form: f64,
    pub lambda_min_k: f64,
    pub used_matrix: GramKind,
    /// Set when `n λ_min(K) < 1`.
    pub small_eigenvalue: bool,
}

/// `⟨y - ŷ₀, (nK)⁻¹ (y - ŷ₀)⟩`
pub fn ntk_oracle_quantity(y: &[f64], y_hat0: &[f64], gram: &DenseMatrix, used_matrix: GramKind) -> Result<NtkOracleResult> {
    let n = y.len();
    if y_hat0.len() != n || gram.rows() != n || gram.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: gram.rows(),
            context: "oracle quantity operands",
        });
    }
    let r: Vec<f64> = y.iter().zip(y_hat0).map(|(a, b)| a - b).collect();
    let lambda_min_k = dense_extreme_eigs(gram)?.lambda_min;
    let nk = gram.scaled(n as f64);
    let quad_form = if r.iter().all(|&v| v == 0.0) { 0.0 } else { dot(&r, &psd_solve(&nk, &r)?) };
    let ceiling = dot(&r, &r) / (n as f64 * lambda_min_k);
    assert!(quad_form >= 0.0 && quad_form <= ceiling * (1.0 + 1e-8) + 1e-300, "quadratic form outside [0, |r|^2/(n lambda_min)]");
    Ok(NtkOracleResult {
        quad_form,
        lambda_min_k,
        used_matrix,
        small_eigenvalue: n as f64 * lambda_min_k < 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_dataset, DataSpec, InputLaw, NoiseLaw, Sample, TargetFunction};
    use crate::model::{InitLaw, OutputMode};
    use crate::optimize::pinv_linear_solution;

    fn instance(n: usize, m: usize, seed: u64) -> (ShallowNet, Dataset) {
        let spec = DataSpec {
            d: 4,
            input_law: InputLaw::UniformSphere,
            target: TargetFunction::random_teacher(4, seed),
            noise_sigma: 0.0,
            noise_law: NoiseLaw::None,
            c_x: 1.0,
            c_y: 1.0,
            seed,
        };
        let data = sample_dataset(&spec, n).unwrap();
        let net = ShallowNet::init(4, m, ActivationSpec::sigmoid(), InitLaw::Gaussian { nu: 1.0 }, OutputMode::Random, seed).unwrap();
        (net, data)
    }

    #[test]
    fn gram_identity_and_factorised_form() {
        let (net, data) = instance(7, 30, 1);
        let phi = feature_matrix(&net, &data).unwrap();
        let k = empirical_gram(&net, &data).unwrap();
        let prod = phi.transpose().matmul(&phi).scaled(1.0 / 7.0);
        assert!(k.sub(&prod).max_abs() < 1e-10);
        let k2 = gram_from_weights(&data, net.activation(), net.weights(), 30);
        assert!(k.sub(&k2).max_abs() < 1e-10);
        assert!(dense_extreme_eigs(&k).unwrap().lambda_min >= -1e-10);
    }

    #[test]
    fn orthogonal_inputs_give_diagonal_gram() {
        let data = Dataset::new(vec![
            Sample { x: vec![1.0, 0.0, 0.0], y: 0.0 },
            Sample { x: vec![0.0, 1.0, 0.0], y: 0.0 },
        ]);
        let net = ShallowNet::init(3, 10, ActivationSpec::tanh(), InitLaw::Gaussian { nu: 1.0 }, OutputMode::Alternating, 2).unwrap();
        let k = empirical_gram(&net, &data).unwrap();
        assert_eq!(k[(0, 1)], 0.0);
        let e = expected_gram(&data, &ActivationSpec::tanh(), 1.0, 100, 3).unwrap();
        assert_eq!(e.k[(0, 1)], 0.0);
    }

    #[test]
    fn expected_gram_constant_derivative() {
        let (_, data) = instance(5, 1, 2);
        let lin = ActivationSpec::identity();
        let e = expected_gram(&data, &lin, 1.0, 50, 9).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let g = dot(&data.samples()[i].x, &data.samples()[j].x) / 5.0;
                assert!((e.k[(i, j)] - g).abs() < 1e-15);
                assert_eq!(e.std_err[(i, j)], 0.0);
            }
        }
        let again = expected_gram(&data, &ActivationSpec::sigmoid(), 1.0, 3000, 9).unwrap();
        let twice = expected_gram(&data, &ActivationSpec::sigmoid(), 1.0, 3000, 9).unwrap();
        assert_eq!(again.k, twice.k);
    }

    #[test]
    fn linearized_risk_variants() {
        let (net, data) = instance(6, 20, 3);
        let raw = linearized_risk(&net, &net, &data, LinearTarget::Raw).unwrap();
        assert!((raw - 0.5 * data.labels().iter().map(|y| y * y).sum::<f64>()).abs() < 1e-14);
        let (pinv, _) = pinv_linear_solution(&net, &data).unwrap();
        assert!(linearized_risk(&net, &pinv, &data, LinearTarget::Residual).unwrap() <= 1e-10);
        let zero = Dataset::new(data.samples().iter().map(|s| Sample { x: s.x.clone(), y: 0.0 }).collect());
        let doubled: Vec<f64> = pinv.weights().iter().zip(net.weights()).map(|(p, w)| w + 2.0 * (p - w)).collect();
        let r1 = linearized_risk(&net, &pinv, &zero, LinearTarget::Raw).unwrap();
        let r2 = linearized_risk(&net, &net.with_weights(doubled).unwrap(), &zero, LinearTarget::Raw).unwrap();
        assert!((r2 - 4.0 * r1).abs() < 1e-10 * r2);
    }

    #[test]
    fn taylor_error_trivial_cases() {
        let (net, data) = instance(3, 20, 4);
        let x = &data.samples()[0].x;
        let rep = taylor_error_audit(&net, &net, x).unwrap();
        assert_eq!((rep.measured, rep.bound), (0.0, 0.0));
        let lin = ShallowNet::new(4, 20, ActivationSpec::identity(), net.weights().to_vec(), net.signs().to_vec()).unwrap();
        let moved = lin.with_weights(lin.weights().iter().map(|v| v + 0.3).collect()).unwrap();
        assert!(taylor_error_audit(&lin, &moved, x).unwrap().measured <= 1e-12);
    }

    #[test]
    fn oracle_quantity_matches_pinv_norm() {
        let (net, data) = instance(8, 40, 5);
        let (pinv, _) = pinv_linear_solution(&net, &data).unwrap();
        let y = data.labels();
        let y0: Vec<f64> = data.samples().iter().map(|s| net.forward(&s.x).unwrap()).collect();
        let k = empirical_gram(&net, &data).unwrap();
        let q = ntk_oracle_quantity(&y, &y0, &k, GramKind::Empirical).unwrap();
        let d2: f64 = pinv.weights().iter().zip(net.weights()).map(|(a, b)| (a - b).powi(2)).sum();
        assert!((q.quad_form - d2).abs() <= 1e-8 * d2);
        assert_eq!(ntk_oracle_quantity(&y, &y, &k, GramKind::Empirical).unwrap().quad_form, 0.0);
    }

    #[test]
    fn concentration_rhs_and_identity_case() {
        let (net, data) = instance(5, 50, 6);
        let k = empirical_gram(&net, &data).unwrap();
        let rep = gram_concentration_audit(&k, &k, 50, 0.1, 0.25).unwrap();
        assert_eq!(rep.measured, 0.0);
        assert!(rep.holds());
        assert!(concentration_rhs(5, 50, 1.0, 0.25) < concentration_rhs(5, 50, 0.1, 0.25));
        assert!((concentration_rhs(5, 50, 1.0, 0.25) - 0.25 * (10f64.ln() / 100.0).sqrt()).abs() < 1e-15);
    }
}
