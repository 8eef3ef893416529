use rand::Rng;
use rand_distr::StandardNormal;

use super::eigen::tridiagonal_ql;
use super::matrix::{axpy, dot, norm};
use crate::error::Result;
use crate::seeds;

/// Outcome of a Lanczos run: Ritz extremes and the Krylov dimension reached.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LanczosOutcome {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub iterations: usize,
}

/// Lanczos with full (twice-iterated Gram-Schmidt) reorthogonalisation.
///
/// Stops early when the residual norm vanishes relative to the running
/// spectral scale; the Krylov space is then invariant and the Ritz values
/// are exact.
pub(crate) fn lanczos(
    apply: &dyn Fn(&[f64], &mut [f64]),
    dim: usize,
    iters: usize,
    seed: u64,
) -> Result<LanczosOutcome> {
    let iters = iters.min(dim).max(1);
    let mut rng = seeds::stream(seed, &[seeds::tag::PROBE, 0x1a]);
    let mut q: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let q_norm = norm(&q);
    q.iter_mut().for_each(|v| *v /= q_norm);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(iters);
    let mut alphas = Vec::with_capacity(iters);
    let mut betas: Vec<f64> = Vec::with_capacity(iters);
    let mut w = vec![0.0; dim];
    let mut scale = 0.0f64;

    for j in 0..iters {
        w.iter_mut().for_each(|v| *v = 0.0);
        apply(&q, &mut w);
        let alpha = dot(&q, &w);
        axpy(-alpha, &q, &mut w);
        if let Some(prev) = basis.last() {
            axpy(-betas[j - 1], prev, &mut w);
        }
        basis.push(q.clone());
        alphas.push(alpha);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                axpy(-c, b, &mut w);
            }
        }
        let beta = norm(&w);
        scale = scale.max(alpha.abs()).max(beta);
        if j + 1 == iters || beta <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        betas.push(beta);
        q.iter_mut().zip(&w).for_each(|(qi, wi)| *qi = wi / beta);
    }

    let k = alphas.len();
    let mut d = alphas;
    let mut e = betas;
    e.resize(k, 0.0);
    tridiagonal_ql(&mut d, &mut e)?;
    let lambda_min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let lambda_max = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(LanczosOutcome {
        lambda_min,
        lambda_max,
        iterations: k,
    })
}
