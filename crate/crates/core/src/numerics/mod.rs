//! Dense and matrix-free linear algebra: extreme eigenvalues, spectral norms
//! and symmetric positive-definite solves.
//!
//! Everything here is a pure function of its inputs. Randomised routines
//! (Lanczos start vectors, symmetry probes) take explicit seeds.

mod eigen;
mod lanczos;
mod matrix;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use eigen::{symmetric_eigenvalues, tridiagonal_ql};
pub use matrix::{axpy, dot, norm, DenseMatrix};

use crate::error::{Error, Result};
use crate::seeds;

/// Largest dimension handled by the dense eigen path.
pub const DEFAULT_DENSE_CAP: usize = 2000;
/// Elementwise asymmetry tolerated by [`dense_extreme_eigs`].
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted by [`psd_solve`].
pub const DEFAULT_PSD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMethod {
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetricSpectrum {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub method: SpectrumMethod,
    pub iterations: usize,
}

pub fn dense_extreme_eigs(matrix: &DenseMatrix) -> Result<SymmetricSpectrum> {
    dense_extreme_eigs_capped(matrix, DEFAULT_DENSE_CAP)
}

pub fn dense_extreme_eigs_capped(matrix: &DenseMatrix, cap: usize) -> Result<SymmetricSpectrum> {
    if !matrix.is_square() {
        return Err(Error::DimensionMismatch {
            expected: matrix.rows(),
            got: matrix.cols(),
            context: "square matrix",
        });
    }
    let n = matrix.rows();
    if n > cap {
        return Err(Error::DenseCapExceeded { dim: n, cap });
    }
    if !matrix.is_finite() {
        return Err(Error::NonFinite("matrix entry"));
    }
    let max_asymmetry = matrix.max_asymmetry();
    if max_asymmetry > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { max_asymmetry });
    }
    let ev = symmetric_eigenvalues(&matrix.symmetrized())?;
    Ok(SymmetricSpectrum {
        lambda_min: ev.first().copied().unwrap_or(0.0),
        lambda_max: ev.last().copied().unwrap_or(0.0),
        method: SpectrumMethod::Dense,
        iterations: n,
    })
}

/// Extreme Ritz values of a symmetric linear map given only its action.
///
/// `apply(v, out)` must write `A v` into `out` (which arrives zeroed).
/// Linearity and symmetry are probed on three random pairs first.
pub fn lanczos_extreme_eigs(
    apply: &dyn Fn(&[f64], &mut [f64]),
    dim: usize,
    iters: usize,
    seed: u64,
) -> Result<SymmetricSpectrum> {
    assert!(iters >= 2, "Lanczos needs at least two iterations");
    probe_symmetry(apply, dim, seed)?;
    let out = lanczos::lanczos(apply, dim, iters, seed)?;
    Ok(SymmetricSpectrum {
        lambda_min: out.lambda_min,
        lambda_max: out.lambda_max,
        method: SpectrumMethod::Lanczos,
        iterations: out.iterations,
    })
}

fn probe_symmetry(apply: &dyn Fn(&[f64], &mut [f64]), dim: usize, seed: u64) -> Result<()> {
    let mut rng = seeds::stream(seed, &[seeds::tag::PROBE, 0x5e]);
    let mut av = vec![0.0; dim];
    let mut aw = vec![0.0; dim];
    for _ in 0..3 {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        av.iter_mut().for_each(|x| *x = 0.0);
        aw.iter_mut().for_each(|x| *x = 0.0);
        apply(&v, &mut av);
        apply(&w, &mut aw);
        let lhs = dot(&av, &w);
        let rhs = dot(&v, &aw);
        if !lhs.is_finite() || !rhs.is_finite() {
            return Err(Error::NonFinite("linear map output"));
        }
        let scale = norm(&av) * norm(&w) + norm(&v) * norm(&aw);
        if (lhs - rhs).abs() > 1e-8 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::SymmetryProbe { lhs, rhs });
        }
    }
    Ok(())
}

/// Largest singular value, via Lanczos on the smaller Gram map.
///
/// With `iters >= min(rows, cols)` the Krylov space is exhausted and the
/// result is exact up to rounding. Never exceeds the Frobenius norm.
pub fn spectral_norm(matrix: &DenseMatrix, iters: usize, seed: u64) -> Result<f64> {
    if !matrix.is_finite() {
        return Err(Error::NonFinite("matrix entry"));
    }
    let fro = matrix.frobenius_norm();
    let (rows, cols) = (matrix.rows(), matrix.cols());
    if fro == 0.0 {
        return Ok(0.0);
    }
    if rows.min(cols) == 1 {
        return Ok(fro);
    }
    let lam = if rows <= cols {
        // M Mᵀ on R^rows
        let apply = |v: &[f64], out: &mut [f64]| {
            let t = matrix.tr_matvec(v);
            out.copy_from_slice(&matrix.matvec(&t));
        };
        lanczos::lanczos(&apply, rows, iters.max(2), seed)?.lambda_max
    } else {
        let apply = |v: &[f64], out: &mut [f64]| {
            let t = matrix.matvec(v);
            out.copy_from_slice(&matrix.tr_matvec(&t));
        };
        lanczos::lanczos(&apply, cols, iters.max(2), seed)?.lambda_max
    };
    let sigma = lam.max(0.0).sqrt();
    debug_assert!(sigma <= fro * (1.0 + 1e-10), "spectral norm {sigma} above Frobenius {fro}");
    Ok(sigma.min(fro))
}

/// Cholesky factor `L` (lower, row-major) of an SPD matrix, or `None` if a
/// pivot is not strictly positive.
fn cholesky(a: &DenseMatrix) -> Option<DenseMatrix> {
    let n = a.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut s = a[(j, j)];
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        if s <= 0.0 || !s.is_finite() {
            return None;
        }
        let ljj = s.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

pub fn psd_solve(matrix: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    psd_solve_with_floor(matrix, rhs, DEFAULT_PSD_FLOOR)
}

pub fn psd_solve_with_floor(matrix: &DenseMatrix, rhs: &[f64], floor: f64) -> Result<Vec<f64>> {
    let n = matrix.rows();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rhs.len(),
            context: "psd_solve right-hand side",
        });
    }
    let spectrum = dense_extreme_eigs(matrix)?;
    if spectrum.lambda_min <= floor {
        return Err(Error::BelowFloor {
            lambda_min: spectrum.lambda_min,
            floor,
        });
    }
    let sym = matrix.symmetrized();
    let l = cholesky(&sym).ok_or(Error::BelowFloor {
        lambda_min: spectrum.lambda_min,
        floor,
    })?;
    // forward then backward substitution
    let mut z = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[(i, k)] * z[k]).sum();
        z[i] = (rhs[i] - s) / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| l[(k, i)] * x[k]).sum();
        x[i] = (z[i] - s) / l[(i, i)];
    }
    // one step of iterative refinement keeps the residual at rounding level
    let r: Vec<f64> = sym.matvec(&x).iter().zip(rhs).map(|(ax, b)| b - ax).collect();
    let mut dz = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[(i, k)] * dz[k]).sum();
        dz[i] = (r[i] - s) / l[(i, i)];
    }
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| l[(k, i)] * dz[k]).sum();
        dz[i] = (dz[i] - s) / l[(i, i)];
    }
    x.iter_mut().zip(&dz).for_each(|(xi, di)| *xi += di);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        let s = dense_extreme_eigs(&DenseMatrix::identity(2)).unwrap();
        assert_eq!((s.lambda_min, s.lambda_max), (1.0, 1.0));
        let s = dense_extreme_eigs(&DenseMatrix::from_diag(&[-3.0, 0.0, 5.0])).unwrap();
        assert_eq!((s.lambda_min, s.lambda_max), (-3.0, 5.0));
        assert_eq!(s.method, SpectrumMethod::Dense);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let mut m = DenseMatrix::identity(3);
        m[(0, 1)] = 1e-6;
        match dense_extreme_eigs(&m) {
            Err(Error::NotSymmetric { max_asymmetry }) => assert!((max_asymmetry - 1e-6).abs() < 1e-20),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_above_cap() {
        let m = DenseMatrix::identity(5);
        assert!(matches!(
            dense_extreme_eigs_capped(&m, 4),
            Err(Error::DenseCapExceeded { dim: 5, cap: 4 })
        ));
    }

    #[test]
    fn lanczos_identity_and_zero() {
        let id = |v: &[f64], out: &mut [f64]| out.copy_from_slice(v);
        let s = lanczos_extreme_eigs(&id, 100, 20, 3).unwrap();
        assert!((s.lambda_min - 1.0).abs() < 1e-10 && (s.lambda_max - 1.0).abs() < 1e-10);
        assert_eq!(s.iterations, 1);

        let zero = |_: &[f64], _: &mut [f64]| {};
        let s = lanczos_extreme_eigs(&zero, 50, 10, 3).unwrap();
        assert_eq!((s.lambda_min, s.lambda_max), (0.0, 0.0));
    }

    #[test]
    fn lanczos_rejects_nonsymmetric_map() {
        // upper shift operator
        let shift = |v: &[f64], out: &mut [f64]| {
            let n = v.len();
            out[..n - 1].copy_from_slice(&v[1..]);
        };
        assert!(matches!(
            lanczos_extreme_eigs(&shift, 10, 5, 1),
            Err(Error::SymmetryProbe { .. })
        ));
    }

    #[test]
    fn spectral_norm_trivial_cases() {
        assert_eq!(spectral_norm(&DenseMatrix::zeros(3, 4), 10, 0).unwrap(), 0.0);
        let a = [1.0, -2.0, 0.5];
        let b = [3.0, 0.0, 1.0, -1.0, 2.0];
        let m = DenseMatrix::from_fn(3, 5, |i, j| a[i] * b[j]);
        let expected = norm(&a) * norm(&b);
        let got = spectral_norm(&m, 10, 0).unwrap();
        assert!((got - expected).abs() < 1e-8 * expected);
        assert!((m.frobenius_norm() - got).abs() < 1e-8 * expected);
    }

    #[test]
    fn psd_solve_small_cases() {
        let x = psd_solve(&DenseMatrix::identity(3), &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(x, vec![1.0, 0.0, 0.0]);
        let x = psd_solve(&DenseMatrix::from_diag(&[2.0, 4.0]), &[2.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn psd_solve_rejects_singular() {
        let m = DenseMatrix::from_diag(&[1.0, 0.0]);
        assert!(matches!(psd_solve(&m, &[1.0, 1.0]), Err(Error::BelowFloor { .. })));
    }
}
