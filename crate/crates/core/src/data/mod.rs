//! Synthetic datasets and the replace-one / remove-one tuple constructions.

mod io;

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use io::{read_csv, write_csv, DatasetSidecar};

use crate::error::{Error, Result};
use crate::model::ShallowNet;
use crate::numerics::norm;
use crate::seeds::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

/// An ordered training tuple. Index `i` in the replace-one and remove-one
/// constructions refers to this order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    samples: Vec<Sample>,
    spec_id: String,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self {
            samples,
            spec_id: String::new(),
        }
    }

    pub fn with_id(samples: Vec<Sample>, spec_id: impl Into<String>) -> Self {
        Self {
            samples,
            spec_id: spec_id.into(),
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn spec_id(&self) -> &str {
        &self.spec_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Input dimension, or 0 when empty.
    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.len())
    }

    pub fn labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.y).collect()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange { index: i, len: self.len() });
        }
        Ok(())
    }

    /// `S^{(i)}`: a copy with sample `i` swapped for `fresh`.
    pub fn replace_one(&self, i: usize, fresh: Sample) -> Result<Dataset> {
        self.check_index(i)?;
        let mut samples = self.samples.clone();
        samples[i] = fresh;
        Ok(Dataset::with_id(samples, format!("{}/replace{i}", self.spec_id)))
    }

    /// `S^{\i}`: a copy without sample `i`.
    pub fn remove_one(&self, i: usize) -> Result<Dataset> {
        self.check_index(i)?;
        if self.len() == 1 {
            return Err(Error::SingletonRemoval);
        }
        let mut samples = self.samples.clone();
        samples.remove(i);
        Ok(Dataset::with_id(samples, format!("{}/remove{i}", self.spec_id)))
    }

    /// Inverse of [`Dataset::remove_one`]: a copy with `sample` at position `i`.
    pub fn insert(&self, i: usize, sample: Sample) -> Result<Dataset> {
        if i > self.len() {
            return Err(Error::IndexOutOfRange { index: i, len: self.len() + 1 });
        }
        let mut samples = self.samples.clone();
        samples.insert(i, sample);
        let id = self
            .spec_id
            .strip_suffix(&format!("/remove{i}"))
            .map_or_else(|| format!("{}/insert{i}", self.spec_id), str::to_string);
        Ok(Dataset::with_id(samples, id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputLaw {
    UniformSphere,
    UniformBall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLaw {
    None,
    /// Uniform on `[-√3σ, √3σ]`: zero mean, variance `σ²`, bounded.
    UniformBounded,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetFunction {
    /// `x ↦ e^{⟨w*,x⟩} / (1 + e^{⟨w*,x⟩})`
    TeacherLogistic { w_star: Vec<f64> },
    /// `x ↦ ⟨w*, x⟩`
    Linear { w_star: Vec<f64> },
    /// Programmatic targets; not serialisable.
    #[serde(skip)]
    Custom { name: String, f: fn(&[f64]) -> f64 },
}

impl fmt::Debug for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TeacherLogistic { w_star } => f.debug_struct("TeacherLogistic").field("w_star", w_star).finish(),
            Self::Linear { w_star } => f.debug_struct("Linear").field("w_star", w_star).finish(),
            Self::Custom { name, .. } => f.debug_struct("Custom").field("name", name).finish(),
        }
    }
}

impl PartialEq for TargetFunction {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::TeacherLogistic { w_star: a }, Self::TeacherLogistic { w_star: b }) => a == b,
            (Self::Linear { w_star: a }, Self::Linear { w_star: b }) => a == b,
            (Self::Custom { name: a, .. }, Self::Custom { name: b, .. }) => a == b,
            _ => false,
        }
    }
}

impl TargetFunction {
    /// Logistic teacher with `w* ~ N(0, I_d)` drawn from `seed`.
    pub fn random_teacher(d: usize, seed: u64) -> Self {
        let mut rng = seeds::stream(seed, &[seeds::tag::TEACHER]);
        let w_star = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        Self::TeacherLogistic { w_star }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::TeacherLogistic { w_star } => {
                let z: f64 = w_star.iter().zip(x).map(|(a, b)| a * b).sum();
                1.0 / (1.0 + (-z).exp())
            }
            Self::Linear { w_star } => w_star.iter().zip(x).map(|(a, b)| a * b).sum(),
            Self::Custom { f, .. } => f(x),
        }
    }

    fn w_star_len(&self) -> Option<usize> {
        match self {
            Self::TeacherLogistic { w_star } | Self::Linear { w_star } => Some(w_star.len()),
            Self::Custom { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub d: usize,
    pub input_law: InputLaw,
    pub target: TargetFunction,
    #[serde(default)]
    pub noise_sigma: f64,
    pub noise_law: NoiseLaw,
    pub c_x: f64,
    pub c_y: f64,
    pub seed: u64,
}

impl DataSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidSpec("d must be at least 1".into()));
        }
        if !(self.c_x > 0.0 && self.c_x.is_finite()) || !(self.c_y > 0.0 && self.c_y.is_finite()) {
            return Err(Error::InvalidSpec("c_x and c_y must be positive and finite".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidSpec(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        match (self.noise_law, self.noise_sigma == 0.0) {
            (NoiseLaw::None, false) => {
                return Err(Error::InvalidSpec("noise_law none requires noise_sigma = 0".into()))
            }
            (NoiseLaw::UniformBounded, true) => {
                return Err(Error::InvalidSpec("noise_law uniform_bounded requires noise_sigma > 0".into()))
            }
            _ => {}
        }
        if let Some(len) = self.target.w_star_len() {
            if len != self.d {
                return Err(Error::DimensionMismatch {
                    expected: self.d,
                    got: len,
                    context: "teacher weights",
                });
            }
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Noiseless target at `x`.
    pub fn target_value(&self, x: &[f64]) -> f64 {
        self.target.eval(x)
    }

    fn draw_input(&self, rng: &mut StreamRng) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.d).map(|_| rng.sample(StandardNormal)).collect();
        let mut r = norm(&x);
        while r == 0.0 {
            x = (0..self.d).map(|_| rng.sample(StandardNormal)).collect();
            r = norm(&x);
        }
        let radius = match self.input_law {
            InputLaw::UniformSphere => self.c_x,
            InputLaw::UniformBall => self.c_x * rng.random::<f64>().powf(1.0 / self.d as f64),
        };
        x.iter_mut().for_each(|v| *v *= radius / r);
        x
    }

    fn draw_noise(&self, rng: &mut StreamRng) -> f64 {
        match self.noise_law {
            NoiseLaw::None => 0.0,
            NoiseLaw::UniformBounded => {
                let a = 3f64.sqrt() * self.noise_sigma;
                rng.random_range(-a..=a)
            }
        }
    }

    fn draw(&self, n: usize, inputs: &mut StreamRng, noise: &mut StreamRng, offset: usize) -> Result<Vec<Sample>> {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let x = self.draw_input(inputs);
            let y = self.target.eval(&x) + self.draw_noise(noise);
            if !(y.abs() <= self.c_y) {
                return Err(Error::LabelBound {
                    index: offset + i,
                    value: y,
                    bound: self.c_y,
                });
            }
            out.push(Sample { x, y });
        }
        Ok(out)
    }
}

/// `n` i.i.d. samples. Inputs and label noise come from separate streams of
/// `spec.seed`.
pub fn sample_dataset(spec: &DataSpec, n: usize) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut inputs = seeds::stream(spec.seed, &[seeds::tag::INPUTS]);
    let mut noise = seeds::stream(spec.seed, &[seeds::tag::NOISE]);
    let samples = spec.draw(n, &mut inputs, &mut noise, 0)?;
    Ok(Dataset::with_id(samples, format!("seed{}-n{n}", spec.seed)))
}

/// `n` samples from an auxiliary stream keyed by `(tag, keys...)`, independent
/// of the training draw. Used for replace-one samples and test sets.
pub fn sample_keyed(spec: &DataSpec, n: usize, tag: u64, keys: &[u64]) -> Result<Vec<Sample>> {
    spec.validate()?;
    let mut full = vec![tag];
    full.extend_from_slice(keys);
    let mut inputs = seeds::stream(spec.seed, &full);
    full.push(seeds::tag::NOISE);
    let mut noise = seeds::stream(spec.seed, &full);
    spec.draw(n, &mut inputs, &mut noise, 0)
}

/// Replacement sample for index `i` in replicate `replicate`.
pub fn fresh_sample(spec: &DataSpec, i: usize, replicate: u64) -> Result<Sample> {
    Ok(sample_keyed(spec, 1, seeds::tag::FRESH, &[i as u64, replicate])?.remove(0))
}

/// Inputs uniform on the unit sphere of R^10, logistic teacher with a
/// standard-Gaussian `w*` drawn once from `seed`, no label noise.
pub fn fig1_spec(seed: u64) -> DataSpec {
    let d = 10;
    DataSpec {
        d,
        input_law: InputLaw::UniformSphere,
        target: TargetFunction::random_teacher(d, seed),
        noise_sigma: 0.0,
        noise_law: NoiseLaw::None,
        c_x: 1.0,
        c_y: 1.0,
        seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalNormalisation {
    /// Divide by the original `n`, so `L_{S\i} = L_S - ℓ(z_i)/n`.
    FullN,
    /// Divide by `n - 1`: the empirical risk of the shorter tuple.
    ReducedN,
}

/// Empirical risk of `S^{\i}` under the chosen normalisation.
pub fn remove_one_risk(net: &ShallowNet, data: &Dataset, i: usize, norm: RemovalNormalisation) -> Result<f64> {
    let reduced = data.remove_one(i)?;
    let risk = net.empirical_risk(&reduced)?;
    Ok(match norm {
        RemovalNormalisation::ReducedN => risk,
        RemovalNormalisation::FullN => risk * (data.len() - 1) as f64 / data.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActivationSpec, InitLaw, OutputMode};

    fn spec(noise: f64) -> DataSpec {
        DataSpec {
            d: 4,
            input_law: InputLaw::UniformBall,
            target: TargetFunction::Linear { w_star: vec![0.5, -0.5, 0.25, 0.0] },
            noise_sigma: noise,
            noise_law: if noise > 0.0 { NoiseLaw::UniformBounded } else { NoiseLaw::None },
            c_x: 1.0,
            c_y: 2.0,
            seed: 17,
        }
    }

    #[test]
    fn zero_teacher_labels() {
        let mut s = spec(0.0);
        s.target = TargetFunction::Linear { w_star: vec![0.0; 4] };
        assert!(sample_dataset(&s, 10).unwrap().samples().iter().all(|z| z.y == 0.0));
        s.target = TargetFunction::TeacherLogistic { w_star: vec![0.0; 4] };
        assert!(sample_dataset(&s, 10).unwrap().samples().iter().all(|z| z.y == 0.5));
    }

    #[test]
    fn determinism_and_norms() {
        let a = sample_dataset(&spec(0.1), 50).unwrap();
        let b = sample_dataset(&spec(0.1), 50).unwrap();
        assert_eq!(a, b);
        assert!(a.samples().iter().all(|z| norm(&z.x) <= 1.0 + 1e-12));
        let mut s = spec(0.0);
        s.input_law = InputLaw::UniformSphere;
        s.c_x = 2.5;
        for z in sample_dataset(&s, 100).unwrap().samples() {
            assert!((norm(&z.x) - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn label_bound_is_enforced() {
        let mut s = spec(0.0);
        s.c_y = 0.01;
        match sample_dataset(&s, 100) {
            Err(Error::LabelBound { index, .. }) => assert!(index < 100),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(0.0);
        s.noise_sigma = 0.2;
        assert!(s.validate().is_err());
        let mut s = spec(0.2);
        s.noise_law = NoiseLaw::None;
        assert!(s.validate().is_err());
        let mut s = spec(0.0);
        s.target = TargetFunction::Linear { w_star: vec![1.0] };
        assert!(s.validate().is_err());
    }

    #[test]
    fn uniform_noise_moments() {
        let sigma = 0.3;
        let s = spec(sigma);
        let mut rng = seeds::stream(5, &[1]);
        let draws: Vec<f64> = (0..100_000).map(|_| s.draw_noise(&mut rng)).collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 3.0 * sigma / n.sqrt());
        assert!((var - sigma * sigma).abs() <= 0.05 * sigma * sigma);
        assert!(draws.iter().all(|e| e.abs() <= 3f64.sqrt() * sigma));
    }

    #[test]
    fn replace_and_remove() {
        let data = sample_dataset(&spec(0.0), 2).unwrap();
        let before = data.clone();
        let same = data.replace_one(1, data.samples()[1].clone()).unwrap();
        assert_eq!(same.samples(), data.samples());
        let fresh = fresh_sample(&spec(0.0), 1, 0).unwrap();
        let swapped = data.replace_one(1, fresh.clone()).unwrap();
        assert_eq!(swapped.samples()[0], data.samples()[0]);
        assert_eq!(swapped.samples()[1], fresh);
        let back = swapped.replace_one(1, data.samples()[1].clone()).unwrap();
        assert_eq!(back.samples(), data.samples());
        assert!(data.replace_one(2, fresh).is_err());

        let removed = data.remove_one(0).unwrap();
        assert_eq!(removed.samples(), &data.samples()[1..]);
        let restored = removed.insert(0, data.samples()[0].clone()).unwrap();
        assert_eq!(restored, data);
        assert!(matches!(removed.remove_one(0), Err(Error::SingletonRemoval)));
        assert_eq!(data, before);
    }

    #[test]
    fn removal_identity() {
        let s = spec(0.1);
        let data = sample_dataset(&s, 12).unwrap();
        let net = ShallowNet::init(4, 8, ActivationSpec::tanh(), InitLaw::Gaussian { nu: 1.0 }, OutputMode::Random, 3)
            .unwrap();
        let n = data.len() as f64;
        let full = net.empirical_risk(&data).unwrap();
        for i in 0..data.len() {
            let reduced = remove_one_risk(&net, &data, i, RemovalNormalisation::ReducedN).unwrap();
            let loss = net.sample_loss(&data.samples()[i]).unwrap();
            assert!((reduced * (n - 1.0) + loss - full * n).abs() < 1e-10);
            let full_n = remove_one_risk(&net, &data, i, RemovalNormalisation::FullN).unwrap();
            assert!((full_n - (full - loss / n)).abs() < 1e-12);
        }
    }

    #[test]
    fn fig1_defaults() {
        let a = fig1_spec(4);
        assert_eq!(a.d, 10);
        assert_eq!(a, fig1_spec(4));
        assert_ne!(a.target, fig1_spec(5).target);
        for z in sample_dataset(&a, 200).unwrap().samples() {
            assert!(z.y > 0.0 && z.y < 1.0);
        }
    }
}
