//! Seeded synthetic datasets.

use std::path::PathBuf;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Result, SmdError};
use crate::linalg::{Matrix, Vector};
use crate::models::{Model, ModelSpec};

/// How to obtain the training data for a configured model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// Standard normal inputs, `w_true ~ N(0, I)`, Gaussian noise.
    GaussianLinear {
        n: usize,
        #[serde(default)]
        noise_std: f64,
    },
    /// Standard normal inputs with a positive truth, for the positive orthant.
    PositiveLinear {
        n: usize,
        #[serde(default)]
        noise_std: f64,
    },
    /// `k`-sparse truth and noiseless labels.
    CompressedSensing { n: usize, k: usize },
    /// A nonlinear teacher `y = f(x, w_true) + v` with `w_true ~ N(0, scale²/m)`.
    Teacher {
        n: usize,
        #[serde(default)]
        noise_std: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Csv {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sidecar: Option<PathBuf>,
    },
}

fn one() -> f64 {
    1.0
}

impl DataSpec {
    pub fn generate(&self, model: &Model, seed: u64) -> Result<Dataset> {
        let linear_dim = || match model.spec() {
            ModelSpec::Linear { dim } => Ok(*dim),
            _ => Err(SmdError::Input(format!("{} data needs a linear model", self.name()))),
        };
        match self {
            DataSpec::GaussianLinear { n, noise_std } => gaussian_linear(*n, linear_dim()?, *noise_std, seed),
            DataSpec::PositiveLinear { n, noise_std } => positive_linear(*n, linear_dim()?, *noise_std, seed),
            DataSpec::CompressedSensing { n, k } => generate_cs_instance(*n, linear_dim()?, *k, seed),
            DataSpec::Teacher { n, noise_std, scale } => teacher(model, *n, *noise_std, *scale, seed),
            DataSpec::Csv { path, sidecar } => Dataset::load(path, sidecar.as_deref()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DataSpec::GaussianLinear { .. } => "gaussian_linear",
            DataSpec::PositiveLinear { .. } => "positive_linear",
            DataSpec::CompressedSensing { .. } => "compressed_sensing",
            DataSpec::Teacher { .. } => "teacher",
            DataSpec::Csv { .. } => "csv",
        }
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Matrix {
    Matrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
}

fn with_noise(
    x: &Matrix,
    w: Vector,
    noise_std: f64,
    rng: &mut ChaCha8Rng,
    generator: &str,
    seed: u64,
) -> Result<Dataset> {
    let v: Vec<f64> = (0..x.nrows())
        .map(|_| noise_std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let y = x * &w + Vector::from_column_slice(&v);
    Ok(Dataset::from_design(x, &y)?
        .with_truth(w, Some(v))
        .with_meta(generator, Some(seed)))
}

pub fn gaussian_linear(n: usize, m: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_matrix(&mut rng, n, m);
    let w = Vector::from_fn(m, |_, _| rng.sample(StandardNormal));
    with_noise(&x, w, noise_std, &mut rng, "gaussian_linear", seed)
}

pub fn positive_linear(n: usize, m: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_matrix(&mut rng, n, m);
    let w = Vector::from_fn(m, |_, _| rng.random_range(0.2..2.0));
    with_noise(&x, w, noise_std, &mut rng, "positive_linear", seed)
}

/// Gaussian design and a `k`-sparse truth with random support and entries
/// `±U[0.5, 1.5]`; labels are noiseless.
pub fn generate_cs_instance(n: usize, m: usize, k: usize, seed: u64) -> Result<Dataset> {
    if k > m || n >= m {
        return Err(SmdError::Input(format!(
            "compressed sensing needs k <= m and n < m, got n={n} m={m} k={k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_matrix(&mut rng, n, m);
    let mut w = Vector::zeros(m);
    for j in sample(&mut rng, m, k) {
        let mag = rng.random_range(0.5..1.5);
        w[j] = if rng.random_bool(0.5) { mag } else { -mag };
    }
    let y = &x * &w;
    Ok(Dataset::from_design(&x, &y)?
        .with_truth(w, Some(vec![0.0; n]))
        .with_meta("compressed_sensing", Some(seed)))
}

/// A random-feature model `f = aᵀ tanh(Bw)` with `h` alternating-sign
/// readouts `±1/√h`.
pub fn random_feature_model(m: usize, h: usize) -> Result<Model> {
    let a = 1.0 / (h as f64).sqrt();
    Model::new(ModelSpec::RandomFeature {
        dim: m,
        readout: (0..h).map(|k| if k % 2 == 0 { a } else { -a }).collect(),
    })
}

/// Standard normal inputs (for random features, a standard normal `B` per
/// sample) and a teacher drawn from `N(0, scale²/m)`.
pub fn teacher(model: &Model, n: usize, noise_std: f64, scale: f64, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, m) = (model.input_dim(), model.param_dim());
    let inputs: Vec<Vector> = (0..n)
        .map(|_| Vector::from_fn(d, |_, _| rng.sample(StandardNormal)))
        .collect();
    let sd = scale / (m as f64).sqrt();
    let w = Vector::from_fn(m, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
    let v: Vec<f64> = (0..n)
        .map(|_| noise_std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let labels = inputs
        .iter()
        .zip(&v)
        .map(|(x, vi)| Ok(model.predict(x, &w)? + vi))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(inputs, labels)?
        .with_truth(w, Some(v))
        .with_meta("teacher", Some(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cs_instance_shape_and_determinism() {
        let d = generate_cs_instance(50, 100, 10, 3).unwrap();
        assert_eq!((d.len(), d.input_dim()), (50, 100));
        let w = d.w_true.clone().unwrap();
        assert_eq!(w.iter().filter(|v| **v != 0.0).count(), 10);
        assert!(w.iter().all(|v| *v == 0.0 || (0.5..1.5).contains(&v.abs())));
        d.validate(&Model::linear(100)).unwrap();
        let again = generate_cs_instance(50, 100, 10, 3).unwrap();
        assert_eq!(again.labels(), d.labels());
        assert_eq!(again.inputs(), d.inputs());
        let empty = generate_cs_instance(5, 8, 0, 1).unwrap();
        assert!(empty.labels().iter().all(|y| *y == 0.0));
        assert!(generate_cs_instance(8, 8, 1, 1).is_err());
        assert!(generate_cs_instance(4, 8, 9, 1).is_err());
    }

    #[test]
    fn generators_are_consistent_with_truth() {
        gaussian_linear(5, 9, 0.1, 1).unwrap().validate(&Model::linear(9)).unwrap();
        let p = positive_linear(5, 9, 0.0, 1).unwrap();
        assert!(p.w_true.as_ref().unwrap().iter().all(|v| *v > 0.0));
        let rf = random_feature_model(20, 3).unwrap();
        let t = teacher(&rf, 4, 0.05, 1.0, 2).unwrap();
        assert_eq!(t.input_dim(), 60);
        t.validate(&rf).unwrap();
    }

    #[test]
    fn spec_generation_checks_model_kind() {
        let rf = random_feature_model(20, 3).unwrap();
        let spec = DataSpec::GaussianLinear { n: 3, noise_std: 0.0 };
        assert!(spec.generate(&rf, 0).is_err());
        assert_eq!(spec.generate(&Model::linear(4), 0).unwrap().len(), 3);
    }
}
