//! Symmetric eigenvalues: Householder reduction to tridiagonal form followed
//! by the implicit QL iteration (eigenvalues only).

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

const MAX_QL_SWEEPS: usize = 60;

/// All eigenvalues of a symmetric matrix in ascending order.
///
/// Only the lower triangle is read.
pub fn symmetric_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    assert!(a.is_square());
    let n = a.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut work: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let (mut diag, mut off) = householder_tridiagonal(&mut work);
    tridiagonal_ql(&mut diag, &mut off)?;
    diag.sort_by(f64::total_cmp);
    Ok(diag)
}

/// Reduces `a` in place; returns (diagonal, subdiagonal) where
/// `sub[i]` couples entries `i` and `i + 1` and `sub[n-1] = 0`.
fn householder_tridiagonal(a: &mut [Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = a.len();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = a[i][..=l].iter().map(|v| v.abs()).sum();
            if scale == 0.0 {
                e[i] = a[i][l];
            } else {
                for k in 0..=l {
                    a[i][k] /= scale;
                    h += a[i][k] * a[i][k];
                }
                let f = a[i][l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[i][l] = f - g;
                let mut f = 0.0;
                for j in 0..=l {
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a[j][k] * a[i][k];
                    }
                    for k in (j + 1)..=l {
                        g += a[k][j] * a[i][k];
                    }
                    e[j] = g / h;
                    f += e[j] * a[i][j];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = a[i][j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[j][k] -= f * e[k] + g * a[i][k];
                    }
                }
            }
        } else {
            e[i] = a[i][l];
        }
        d[i] = h;
    }
    for i in 0..n {
        d[i] = a[i][i];
    }
    // shift so that e[i] couples i and i+1
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    (d, e)
}

/// Implicit QL on a symmetric tridiagonal matrix. On return `d` holds the
/// eigenvalues (unsorted) and `e` is destroyed.
pub fn tridiagonal_ql(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    debug_assert_eq!(e.len(), n);
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut mm = l;
            while mm + 1 < n {
                let dd = d[mm].abs() + d[mm + 1].abs();
                if e[mm].abs() <= f64::EPSILON * dd {
                    break;
                }
                mm += 1;
            }
            if mm == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_SWEEPS {
                return Err(Error::NoConvergence);
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[mm] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = mm;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[mm] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[mm] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_and_two_by_two() {
        let ev = symmetric_eigenvalues(&DenseMatrix::from_diag(&[5.0, -3.0, 0.0])).unwrap();
        assert_eq!(ev, vec![-3.0, 0.0, 5.0]);
        // [[2,1],[1,2]] -> 1, 3
        let m = DenseMatrix::from_row_major(2, 2, vec![2.0, 1.0, 1.0, 2.0]);
        let ev = symmetric_eigenvalues(&m).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn tridiagonal_toeplitz_closed_form() {
        // tridiag(-1, 2, -1) of size n has eigenvalues 2 - 2cos(k pi/(n+1))
        let n = 12;
        let mut d = vec![2.0; n];
        let mut e = vec![-1.0; n];
        tridiagonal_ql(&mut d, &mut e).unwrap();
        d.sort_by(f64::total_cmp);
        for (k, v) in d.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-12, "{v} vs {exact}");
        }
    }

    #[test]
    fn trace_is_preserved() {
        let m = DenseMatrix::from_fn(9, 9, |i, j| ((i * 7 + j * 3) % 5) as f64 + if i == j { 1.0 } else { 0.0 });
        let m = m.symmetrized();
        let ev = symmetric_eigenvalues(&m).unwrap();
        let trace: f64 = (0..9).map(|i| m[(i, i)]).sum();
        assert!((ev.iter().sum::<f64>() - trace).abs() < 1e-10);
    }
}
