//! The shallow predictor `f_W(x) = Σ_k u_k φ(⟨W_k, x⟩)` with a fixed output
//! layer `u_k = ±1/√m`, its squared loss, gradient, Hessian action and NTK
//! features.
//!
//! `W` is stored column-major as a `d × m` matrix: neuron `k` occupies
//! `w[k*d .. (k+1)*d]`. Gradients, Hessian-vector products and NTK features
//! use the same layout, so a parameter vector of length `dm` has block `k`
//! equal to column `k`.

mod activation;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use activation::{sup_abs, ActivationBounds, ActivationSpec, CERT_POINTS, CERT_RANGE};

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, DenseMatrix, DEFAULT_DENSE_CAP};
use crate::seeds;

/// Samples per work unit in batched evaluations. Partial sums are combined in
/// chunk order, so results do not depend on the number of worker threads.
const CHUNK: usize = 32;

/// Input radius, label bound and almost-sure loss bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub c_x: f64,
    pub c_y: f64,
    pub c_0: f64,
}

impl ProblemConstants {
    pub fn new(c_x: f64, c_y: f64, c_0: f64) -> Result<Self> {
        for (name, v) in [("c_x", c_x), ("c_y", c_y), ("c_0", c_0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidSpec(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(Self { c_x, c_y, c_0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitLaw {
    Zero,
    /// i.i.d. `N(0, nu²)` entries.
    Gaussian { nu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// `+, -, +, -, ...`
    #[default]
    Alternating,
    /// Independent uniform signs.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShallowNet {
    d: usize,
    m: usize,
    w: Vec<f64>,
    signs: Vec<i8>,
    scale: f64,
    activation: ActivationSpec,
}

/// Risk, gradient and per-sample quantities from one pass over a dataset.
#[derive(Debug, Clone)]
pub struct BatchEval {
    pub risk: f64,
    pub grad: Vec<f64>,
    /// `f(x_i) - y_i`
    pub residuals: Vec<f64>,
    /// `‖∇ℓ(W, z_i)‖²_F`
    pub sample_grad_sq: Vec<f64>,
}

/// Serialised network. `w` is row-major `d × m`, i.e. `w[i*m + k] = W_{ik}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSnapshot {
    pub d: usize,
    pub m: usize,
    pub u_signs: Vec<i8>,
    pub w: Vec<f64>,
    pub activation: String,
}

impl ShallowNet {
    pub fn new(d: usize, m: usize, activation: ActivationSpec, w: Vec<f64>, signs: Vec<i8>) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::InvalidSpec(format!("network needs d, m >= 1 (got d={d}, m={m})")));
        }
        if w.len() != d * m {
            return Err(Error::DimensionMismatch {
                expected: d * m,
                got: w.len(),
                context: "hidden-layer weights",
            });
        }
        if signs.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: signs.len(),
                context: "output-layer signs",
            });
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidSpec("output signs must be +1 or -1".into()));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("hidden-layer weights"));
        }
        Ok(Self {
            d,
            m,
            w,
            signs,
            scale: 1.0 / (m as f64).sqrt(),
            activation,
        })
    }

    /// Draws `W₀` from `law` and the output signs per `mode`, each from its own
    /// stream of `seed`.
    pub fn init(d: usize, m: usize, activation: ActivationSpec, law: InitLaw, mode: OutputMode, seed: u64) -> Result<Self> {
        let w = match law {
            InitLaw::Zero => vec![0.0; d * m],
            InitLaw::Gaussian { nu } => {
                let normal = Normal::new(0.0, nu)
                    .map_err(|e| Error::InvalidSpec(format!("gaussian init: {e}")))?;
                let mut rng = seeds::stream(seed, &[seeds::tag::INIT]);
                (0..d * m).map(|_| normal.sample(&mut rng)).collect()
            }
        };
        let signs = match mode {
            OutputMode::Alternating => (0..m).map(|k| if k % 2 == 0 { 1 } else { -1 }).collect(),
            OutputMode::Random => {
                let mut rng = seeds::stream(seed, &[seeds::tag::OUTPUT_SIGNS]);
                (0..m).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
            }
        };
        Self::new(d, m, activation, w, signs)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dm(&self) -> usize {
        self.d * self.m
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    /// `u_k = sign_k / √m`
    #[inline]
    pub fn u(&self, k: usize) -> f64 {
        self.signs[k] as f64 * self.scale
    }

    pub fn activation(&self) -> &ActivationSpec {
        &self.activation
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.w[k * self.d..(k + 1) * self.d]
    }

    /// Same output layer and activation, new hidden weights.
    pub fn with_weights(&self, w: Vec<f64>) -> Result<Self> {
        Self::new(self.d, self.m, self.activation.clone(), w, self.signs.clone())
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    /// `W` as a `d × m` matrix.
    pub fn weight_matrix(&self) -> DenseMatrix {
        flat_to_matrix(&self.w, self.d, self.m)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
                context: "input vector",
            });
        }
        Ok(())
    }

    fn check_params(&self, v: &[f64], context: &'static str) -> Result<()> {
        if v.len() != self.dm() {
            return Err(Error::DimensionMismatch {
                expected: self.dm(),
                got: v.len(),
                context,
            });
        }
        Ok(())
    }

    #[inline]
    fn preactivation(&self, k: usize, x: &[f64]) -> f64 {
        dot(self.column(k), x)
    }

    fn forward_unchecked(&self, x: &[f64]) -> f64 {
        let f: f64 = (0..self.m)
            .map(|k| self.u(k) * self.activation.phi(self.preactivation(k, x)))
            .sum();
        debug_assert!(
            f.abs() <= (self.m as f64).sqrt() * self.activation.bounds().b_phi * (1.0 + 1e-12),
            "forward output exceeds sqrt(m) * b_phi"
        );
        f
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    /// `½ (f(x) - y)²`
    pub fn sample_loss(&self, sample: &Sample) -> Result<f64> {
        let r = self.forward(&sample.x)? - sample.y;
        Ok(0.5 * r * r)
    }

    /// `(1/2n) Σ (f(x_i) - y_i)²`
    pub fn empirical_risk(&self, data: &Dataset) -> Result<f64> {
        check_nonempty(data)?;
        self.check_input(&data.samples()[0].x)?;
        let partials: Vec<f64> = data
            .samples()
            .par_chunks(CHUNK)
            .map(|chunk| {
                chunk
                    .iter()
                    .map(|s| {
                        let r = self.forward_unchecked(&s.x) - s.y;
                        0.5 * r * r
                    })
                    .sum::<f64>()
            })
            .collect();
        Ok(partials.iter().sum::<f64>() / data.len() as f64)
    }

    /// Accumulates `scale · (f(x) - y) · ∇f(x)` into `grad`; returns the residual
    /// and `‖∇ℓ‖²`.
    fn accumulate_sample_grad(&self, s: &Sample, scale: f64, grad: &mut [f64]) -> (f64, f64) {
        let act = &self.activation;
        let vals: Vec<(f64, f64)> = (0..self.m).map(|k| act.phi_with_prime(self.preactivation(k, &s.x))).collect();
        let f: f64 = vals.iter().enumerate().map(|(k, &(p, _))| self.u(k) * p).sum();
        let r = f - s.y;
        let mut fsq = 0.0;
        for (k, &(_, dp)) in vals.iter().enumerate() {
            let c = self.u(k) * dp;
            fsq += c * c;
            axpy(scale * r * c, &s.x, &mut grad[k * self.d..(k + 1) * self.d]);
        }
        let gsq = r * r * fsq * dot(&s.x, &s.x);
        debug_assert!(
            gsq <= (r * r * dot(&s.x, &s.x) * act.bounds().b_phi_prime.powi(2)) * (1.0 + 1e-10) + 1e-300,
            "sample gradient exceeds ‖x‖ B' |f - y|"
        );
        (r, gsq)
    }

    /// `∇_W ℓ(W, z)`; column `k` is `u_k φ'(⟨W_k,x⟩)(f(x) - y) x`.
    pub fn grad_sample(&self, sample: &Sample) -> Result<Vec<f64>> {
        self.check_input(&sample.x)?;
        let mut g = vec![0.0; self.dm()];
        self.accumulate_sample_grad(sample, 1.0, &mut g);
        Ok(g)
    }

    pub fn grad_empirical_risk(&self, data: &Dataset) -> Result<Vec<f64>> {
        Ok(self.evaluate(data)?.grad)
    }

    /// Risk, gradient, residuals and per-sample gradient norms in one pass.
    pub fn evaluate(&self, data: &Dataset) -> Result<BatchEval> {
        check_nonempty(data)?;
        self.check_input(&data.samples()[0].x)?;
        let n = data.len() as f64;
        let dm = self.dm();
        let partials: Vec<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> = data
            .samples()
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut grad = vec![0.0; dm];
                let mut risk = 0.0;
                let mut res = Vec::with_capacity(chunk.len());
                let mut gsq = Vec::with_capacity(chunk.len());
                for s in chunk {
                    let (r, g2) = self.accumulate_sample_grad(s, 1.0 / n, &mut grad);
                    risk += 0.5 * r * r;
                    res.push(r);
                    gsq.push(g2);
                }
                (risk, grad, res, gsq)
            })
            .collect();
        let mut out = BatchEval {
            risk: 0.0,
            grad: vec![0.0; dm],
            residuals: Vec::with_capacity(data.len()),
            sample_grad_sq: Vec::with_capacity(data.len()),
        };
        for (risk, grad, res, gsq) in partials {
            out.risk += risk;
            axpy(1.0, &grad, &mut out.grad);
            out.residuals.extend(res);
            out.sample_grad_sq.extend(gsq);
        }
        out.risk /= n;
        Ok(out)
    }

    /// `∇²L_S(W) v` without forming the `dm × dm` matrix.
    pub fn hessian_vector_product(&self, data: &Dataset, v: &[f64]) -> Result<Vec<f64>> {
        check_nonempty(data)?;
        self.check_input(&data.samples()[0].x)?;
        self.check_params(v, "hessian direction")?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("hessian direction"));
        }
        let n = data.len() as f64;
        let (d, dm) = (self.d, self.dm());
        let act = &self.activation;
        let partials: Vec<Vec<f64>> = data
            .samples()
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut out = vec![0.0; dm];
                let mut feat = vec![0.0; dm];
                for s in chunk {
                    let z: Vec<f64> = (0..self.m).map(|k| self.preactivation(k, &s.x)).collect();
                    let f: f64 = z.iter().enumerate().map(|(k, &zk)| self.u(k) * act.phi(zk)).sum();
                    let r = f - s.y;
                    for (k, &zk) in z.iter().enumerate() {
                        let blk = &mut feat[k * d..(k + 1) * d];
                        blk.copy_from_slice(&s.x);
                        let c = self.u(k) * act.phi_prime(zk);
                        blk.iter_mut().for_each(|b| *b *= c);
                    }
                    let gv = dot(&feat, v);
                    axpy(gv / n, &feat, &mut out);
                    for (k, &zk) in z.iter().enumerate() {
                        let c = r * self.u(k) * act.phi_double_prime(zk);
                        if c != 0.0 {
                            let xv = dot(&s.x, &v[k * d..(k + 1) * d]);
                            axpy(c * xv / n, &s.x, &mut out[k * d..(k + 1) * d]);
                        }
                    }
                }
                out
            })
            .collect();
        let mut out = vec![0.0; dm];
        for p in partials {
            axpy(1.0, &p, &mut out);
        }
        Ok(out)
    }

    pub fn dense_hessian(&self, data: &Dataset) -> Result<DenseMatrix> {
        self.dense_hessian_capped(data, DEFAULT_DENSE_CAP)
    }

    pub fn dense_hessian_capped(&self, data: &Dataset, cap: usize) -> Result<DenseMatrix> {
        check_nonempty(data)?;
        self.check_input(&data.samples()[0].x)?;
        let (d, dm) = (self.d, self.dm());
        if dm > cap {
            return Err(Error::DenseCapExceeded { dim: dm, cap });
        }
        let n = data.len() as f64;
        let act = &self.activation;
        let mut h = DenseMatrix::zeros(dm, dm);
        for s in data.samples() {
            let feat = self.ntk_feature(&s.x)?;
            let r = self.forward_unchecked(&s.x) - s.y;
            for a in 0..dm {
                if feat[a] == 0.0 {
                    continue;
                }
                let fa = feat[a] / n;
                for b in 0..dm {
                    h[(a, b)] += fa * feat[b];
                }
            }
            for k in 0..self.m {
                let c = r * self.u(k) * act.phi_double_prime(self.preactivation(k, &s.x)) / n;
                for i in 0..d {
                    for j in 0..d {
                        h[(k * d + i, k * d + j)] += c * s.x[i] * s.x[j];
                    }
                }
            }
        }
        Ok(h)
    }

    /// `∇_W f_W(x)`; block `k` is `u_k φ'(⟨W_k, x⟩) x`.
    pub fn ntk_feature(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut out = vec![0.0; self.dm()];
        for k in 0..self.m {
            let c = self.u(k) * self.activation.phi_prime(self.preactivation(k, x));
            for (o, xi) in out[k * self.d..(k + 1) * self.d].iter_mut().zip(x) {
                *o = c * xi;
            }
        }
        Ok(out)
    }

    pub fn snapshot(&self) -> NetSnapshot {
        let mut w = vec![0.0; self.dm()];
        for k in 0..self.m {
            for i in 0..self.d {
                w[i * self.m + k] = self.w[k * self.d + i];
            }
        }
        NetSnapshot {
            d: self.d,
            m: self.m,
            u_signs: self.signs.clone(),
            w,
            activation: self.activation.name().to_string(),
        }
    }

    pub fn from_snapshot(snap: &NetSnapshot) -> Result<Self> {
        let (d, m) = (snap.d, snap.m);
        if snap.w.len() != d * m {
            return Err(Error::DimensionMismatch {
                expected: d * m,
                got: snap.w.len(),
                context: "snapshot weights",
            });
        }
        let mut w = vec![0.0; d * m];
        for k in 0..m {
            for i in 0..d {
                w[k * d + i] = snap.w[i * m + k];
            }
        }
        Self::new(d, m, ActivationSpec::by_name(&snap.activation)?, w, snap.u_signs.clone())
    }
}

fn check_nonempty(data: &Dataset) -> Result<()> {
    if data.is_empty() {
        Err(Error::EmptyDataset)
    } else {
        Ok(())
    }
}

/// Column-major flat parameters to a `d × m` matrix.
pub fn flat_to_matrix(w: &[f64], d: usize, m: usize) -> DenseMatrix {
    assert_eq!(w.len(), d * m);
    DenseMatrix::from_fn(d, m, |i, k| w[k * d + i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{dense_extreme_eigs, norm};
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn sample(x: Vec<f64>, y: f64) -> Sample {
        Sample { x, y }
    }

    fn random_instance(d: usize, m: usize, n: usize, seed: u64) -> (ShallowNet, Dataset) {
        let net = ShallowNet::init(d, m, ActivationSpec::sigmoid(), InitLaw::Gaussian { nu: 1.0 }, OutputMode::Random, seed)
            .unwrap();
        let mut rng = seeds::stream(seed, &[99]);
        let samples = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
                sample(x, rng.random_range(-1.0..1.0))
            })
            .collect();
        (net, Dataset::new(samples))
    }

    #[test]
    fn zero_weight_forward() {
        let net = ShallowNet::new(3, 4, ActivationSpec::sigmoid(), vec![0.0; 12], vec![1; 4]).unwrap();
        assert_eq!(net.forward(&[0.3, -1.0, 2.0]).unwrap(), 1.0);
        let net = ShallowNet::new(2, 1, ActivationSpec::sigmoid(), vec![0.0; 2], vec![1]).unwrap();
        assert_eq!(net.forward(&[1.0, 1.0]).unwrap(), 0.5);
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn forward_matches_naive_double_loop() {
        let (net, data) = random_instance(6, 17, 5, 3);
        for s in data.samples() {
            let mut f = 0.0;
            for k in 0..net.m() {
                let mut z = 0.0;
                for i in 0..net.d() {
                    z += net.weight_matrix()[(i, k)] * s.x[i];
                }
                f += net.signs()[k] as f64 / (net.m() as f64).sqrt() * (1.0 / (1.0 + (-z).exp()));
            }
            assert!((net.forward(&s.x).unwrap() - f).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_and_risk_basics() {
        let net = ShallowNet::new(1, 1, ActivationSpec::sigmoid(), vec![0.0], vec![1]).unwrap();
        assert_eq!(net.sample_loss(&sample(vec![2.0], 0.5)).unwrap(), 0.0);
        let net4 = ShallowNet::new(1, 4, ActivationSpec::sigmoid(), vec![0.0; 4], vec![1; 4]).unwrap();
        assert_eq!(net4.sample_loss(&sample(vec![1.0], 0.0)).unwrap(), 0.5);
        let single = Dataset::new(vec![sample(vec![1.0], 0.2)]);
        assert_eq!(net.empirical_risk(&single).unwrap(), net.sample_loss(&single.samples()[0]).unwrap());
        assert!(matches!(net.empirical_risk(&Dataset::new(vec![])), Err(Error::EmptyDataset)));
    }

    #[test]
    fn risk_matches_reversed_accumulation() {
        let (net, data) = random_instance(5, 30, 20, 8);
        let mut acc = 0.0;
        for s in data.samples().iter().rev() {
            let r = net.forward(&s.x).unwrap() - s.y;
            acc += 0.5 * r * r;
        }
        assert!((net.empirical_risk(&data).unwrap() - acc / 20.0).abs() < 1e-12);
        assert!((net.evaluate(&data).unwrap().risk - acc / 20.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_zero_cases() {
        let (net, _) = random_instance(3, 5, 1, 1);
        let x = vec![0.1, 0.2, -0.3];
        let y = net.forward(&x).unwrap();
        assert!(net.grad_sample(&sample(x, y)).unwrap().iter().all(|&g| g == 0.0));
        assert!(net.grad_sample(&sample(vec![0.0; 3], 0.7)).unwrap().iter().all(|&g| g == 0.0));
        assert!(net.ntk_feature(&[0.0; 3]).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_sample_gradient_matches_grad_sample() {
        let (net, data) = random_instance(4, 9, 1, 2);
        let g1 = net.grad_sample(&data.samples()[0]).unwrap();
        let g2 = net.grad_empirical_risk(&data).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn one_dimensional_hessian_by_hand() {
        let (w, x, y) = (0.7, 0.9, -0.4);
        let net = ShallowNet::new(1, 1, ActivationSpec::sigmoid(), vec![w], vec![1]).unwrap();
        let data = Dataset::new(vec![sample(vec![x], y)]);
        let h = net.dense_hessian(&data).unwrap();
        let s = 1.0 / (1.0 + (-w * x).exp());
        let (p1, p2) = (s * (1.0 - s), s * (1.0 - s) * (1.0 - 2.0 * s));
        let expected = x * x * p1 * p1 + x * x * p2 * (s - y);
        assert!((h[(0, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn interpolated_hessian_is_gauss_newton() {
        let (net, data) = random_instance(3, 4, 6, 4);
        let labels: Vec<Sample> = data
            .samples()
            .iter()
            .map(|s| sample(s.x.clone(), net.forward(&s.x).unwrap()))
            .collect();
        let data = Dataset::new(labels);
        let h = net.dense_hessian(&data).unwrap();
        assert!(dense_extreme_eigs(&h).unwrap().lambda_min >= -1e-10);
    }

    #[test]
    fn hvp_zero_direction() {
        let (net, data) = random_instance(3, 4, 6, 4);
        let out = net.hessian_vector_product(&data, &[0.0; 12]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        assert!(net.hessian_vector_product(&data, &[0.0; 11]).is_err());
    }

    #[test]
    fn feature_is_gradient_over_residual() {
        let (net, data) = random_instance(4, 6, 3, 6);
        for s in data.samples() {
            let g = net.grad_sample(s).unwrap();
            let r = net.forward(&s.x).unwrap() - s.y;
            let feat = net.ntk_feature(&s.x).unwrap();
            for (a, b) in g.iter().zip(&feat) {
                assert!((a / r - b).abs() < 1e-12);
            }
            assert!(norm(&feat) <= norm(&s.x) * 0.25 + 1e-15);
        }
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let (net, _) = random_instance(3, 7, 1, 12);
        let json = serde_json::to_string(&net.snapshot()).unwrap();
        let back: NetSnapshot = serde_json::from_str(&json).unwrap();
        let net2 = ShallowNet::from_snapshot(&back).unwrap();
        assert_eq!(net, net2);
        assert_eq!(net.snapshot().w[1], net.weights()[3]);
    }

    #[test]
    fn alternating_signs_and_zero_init() {
        let net = ShallowNet::init(2, 5, ActivationSpec::tanh(), InitLaw::Zero, OutputMode::Alternating, 0).unwrap();
        assert_eq!(net.signs(), &[1, -1, 1, -1, 1]);
        assert!(net.weights().iter().all(|&w| w == 0.0));
        assert_eq!(net.u(1), -1.0 / 5f64.sqrt());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn forward_bounded_and_gradient_bound(seed in 0u64..10_000, m in 1usize..40, d in 1usize..8) {
            let (net, data) = random_instance(d, m, 3, seed);
            let b = net.activation().bounds();
            for s in data.samples() {
                let f = net.forward(&s.x).unwrap();
                prop_assert!(f.abs() <= (m as f64).sqrt() * b.b_phi);
                let g = net.grad_sample(s).unwrap();
                let loss = net.sample_loss(s).unwrap();
                let bound = 2.0 * s.x.iter().map(|v| v * v).sum::<f64>() * b.b_phi_prime.powi(2) * loss;
                prop_assert!(g.iter().map(|v| v * v).sum::<f64>() <= bound * (1.0 + 1e-12) + 1e-300);
            }
        }
    }
}
