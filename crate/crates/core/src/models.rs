//! Prediction functions `f(x, w)` with parameter gradients and Hessians.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Result, SmdError};
use crate::linalg::{Matrix, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `f = xᵀw`, with `x, w ∈ R^dim`.
    Linear { dim: usize },
    /// `f = aᵀ tanh(B w)`. The input `x` carries `B` (len(a) × dim, row-major);
    /// the readout `a` is fixed by the model.
    RandomFeature { dim: usize, readout: Vec<f64> },
    /// `f = Σ_j c_j tanh(xᵀu_j)` with `w = (c_1..c_h, u_1, .., u_h)`.
    ShallowSmooth { input_dim: usize, hidden: usize },
}

#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
}

fn sech2(z: f64) -> f64 {
    let t = z.tanh();
    1.0 - t * t
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        match &spec {
            ModelSpec::Linear { dim } if *dim == 0 => {
                return Err(SmdError::Input("linear model needs dim > 0".into()))
            }
            ModelSpec::RandomFeature { dim, readout } if *dim == 0 || readout.is_empty() => {
                return Err(SmdError::Input("random-feature model needs dim > 0 and a readout".into()))
            }
            ModelSpec::ShallowSmooth { input_dim, hidden } if *input_dim == 0 || *hidden == 0 => {
                return Err(SmdError::Input("shallow model needs positive sizes".into()))
            }
            _ => {}
        }
        Ok(Self { spec })
    }

    pub fn linear(dim: usize) -> Self {
        Self::new(ModelSpec::Linear { dim }).expect("dim > 0")
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.spec, ModelSpec::Linear { .. })
    }

    pub fn name(&self) -> &'static str {
        match self.spec {
            ModelSpec::Linear { .. } => "linear",
            ModelSpec::RandomFeature { .. } => "random_feature",
            ModelSpec::ShallowSmooth { .. } => "shallow_smooth",
        }
    }

    /// Number of parameters `m`.
    pub fn param_dim(&self) -> usize {
        match &self.spec {
            ModelSpec::Linear { dim } | ModelSpec::RandomFeature { dim, .. } => *dim,
            ModelSpec::ShallowSmooth { input_dim, hidden } => hidden * (1 + input_dim),
        }
    }

    /// Length of one input vector `x`.
    pub fn input_dim(&self) -> usize {
        match &self.spec {
            ModelSpec::Linear { dim } => *dim,
            ModelSpec::RandomFeature { dim, readout } => dim * readout.len(),
            ModelSpec::ShallowSmooth { input_dim, .. } => *input_dim,
        }
    }

    fn check(&self, x: &Vector, w: &Vector) -> Result<()> {
        check_dim("model input", self.input_dim(), x.len())?;
        check_dim("model parameters", self.param_dim(), w.len())
    }

    pub fn predict(&self, x: &Vector, w: &Vector) -> Result<f64> {
        self.check(x, w)?;
        Ok(match &self.spec {
            ModelSpec::Linear { .. } => x.dot(w),
            ModelSpec::RandomFeature { dim, readout } => readout
                .iter()
                .enumerate()
                .map(|(k, a)| a * row_dot(x, k, *dim, w).tanh())
                .sum(),
            ModelSpec::ShallowSmooth { input_dim, hidden } => (0..*hidden)
                .map(|j| w[j] * hidden_pre(x, w, j, *input_dim, *hidden).tanh())
                .sum(),
        })
    }

    /// `∇_w f(x, w)`.
    pub fn param_gradient(&self, x: &Vector, w: &Vector) -> Result<Vector> {
        self.check(x, w)?;
        Ok(match &self.spec {
            ModelSpec::Linear { .. } => x.clone(),
            ModelSpec::RandomFeature { dim, readout } => {
                let mut g = Vector::zeros(*dim);
                for (k, a) in readout.iter().enumerate() {
                    let coef = a * sech2(row_dot(x, k, *dim, w));
                    for j in 0..*dim {
                        g[j] += coef * x[k * dim + j];
                    }
                }
                g
            }
            ModelSpec::ShallowSmooth { input_dim, hidden } => {
                let (d, h) = (*input_dim, *hidden);
                let mut g = Vector::zeros(self.param_dim());
                for j in 0..h {
                    let z = hidden_pre(x, w, j, d, h);
                    g[j] = z.tanh();
                    let coef = w[j] * sech2(z);
                    for t in 0..d {
                        g[h + j * d + t] = coef * x[t];
                    }
                }
                g
            }
        })
    }

    /// `∇²_w f(x, w)`.
    pub fn param_hessian(&self, x: &Vector, w: &Vector) -> Result<Matrix> {
        self.check(x, w)?;
        let m = self.param_dim();
        Ok(match &self.spec {
            ModelSpec::Linear { .. } => Matrix::zeros(m, m),
            ModelSpec::RandomFeature { dim, readout } => {
                let mut hess = Matrix::zeros(m, m);
                for (k, a) in readout.iter().enumerate() {
                    let z = row_dot(x, k, *dim, w);
                    let coef = a * (-2.0 * z.tanh() * sech2(z));
                    let b = Vector::from_fn(*dim, |j, _| x[k * dim + j]);
                    hess += coef * &b * b.transpose();
                }
                hess
            }
            ModelSpec::ShallowSmooth { input_dim, hidden } => {
                let (d, h) = (*input_dim, *hidden);
                let mut hess = Matrix::zeros(m, m);
                for j in 0..h {
                    let z = hidden_pre(x, w, j, d, h);
                    let s2 = sech2(z);
                    let off = h + j * d;
                    for t in 0..d {
                        hess[(j, off + t)] = s2 * x[t];
                        hess[(off + t, j)] = s2 * x[t];
                        for r in 0..d {
                            hess[(off + t, off + r)] = w[j] * (-2.0 * z.tanh() * s2) * x[t] * x[r];
                        }
                    }
                }
                hess
            }
        })
    }
}

fn row_dot(x: &Vector, k: usize, dim: usize, w: &Vector) -> f64 {
    (0..dim).map(|j| x[k * dim + j] * w[j]).sum()
}

fn hidden_pre(x: &Vector, w: &Vector, j: usize, d: usize, h: usize) -> f64 {
    let off = h + j * d;
    (0..d).map(|t| x[t] * w[off + t]).sum()
}

/// `y_i − f(x_i, w)` for every sample.
pub fn membership_residual(model: &Model, data: &Dataset, w: &Vector) -> Result<Vector> {
    let mut r = Vector::zeros(data.len());
    for (i, (x, y)) in data.samples().enumerate() {
        r[i] = y - model.predict(x, w)?;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_models(rng: &mut ChaCha8Rng) -> Vec<Model> {
        vec![
            Model::linear(4),
            Model::new(ModelSpec::RandomFeature {
                dim: 5,
                readout: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
            })
            .unwrap(),
            Model::new(ModelSpec::ShallowSmooth { input_dim: 3, hidden: 2 }).unwrap(),
        ]
    }

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vector {
        Vector::from_fn(n, |_, _| rng.random_range(-1.5..1.5))
    }

    #[test]
    fn linear_examples() {
        let m = Model::linear(2);
        let x = Vector::from_vec(vec![1.0, 2.0]);
        let w = Vector::from_vec(vec![3.0, 4.0]);
        assert_eq!(m.predict(&x, &w).unwrap(), 11.0);
        assert_eq!(m.predict(&x, &Vector::zeros(2)).unwrap(), 0.0);
        assert_eq!(m.param_gradient(&x, &w).unwrap(), x);
        assert!(matches!(
            m.predict(&Vector::zeros(3), &w),
            Err(SmdError::Dimension { .. })
        ));
    }

    #[test]
    fn shallow_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = Model::new(ModelSpec::ShallowSmooth { input_dim: 3, hidden: 4 }).unwrap();
        for _ in 0..20 {
            let x = rand_vec(3, &mut rng);
            let w = rand_vec(16, &mut rng);
            // straight-line duplicate evaluator
            let mut direct = 0.0;
            for j in 0..4 {
                let u = [w[4 + 3 * j], w[5 + 3 * j], w[6 + 3 * j]];
                direct += w[j] * (x[0] * u[0] + x[1] * u[1] + x[2] * u[2]).tanh();
            }
            assert!((model.predict(&x, &w).unwrap() - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn random_feature_gradient_at_origin_is_btranspose_a() {
        let a = vec![0.5, -1.0];
        let model = Model::new(ModelSpec::RandomFeature { dim: 3, readout: a.clone() }).unwrap();
        let x = Vector::from_vec(vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0]);
        let g = model.param_gradient(&x, &Vector::zeros(3)).unwrap();
        let expect = [0.5 * 1.0 - 1.0 * -1.0, 0.5 * 2.0, 0.5 * 3.0 - 4.0];
        for j in 0..3 {
            assert!((g[j] - expect[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn gradients_and_hessians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-5;
        for _ in 0..20 {
            for model in random_models(&mut rng) {
                let x = rand_vec(model.input_dim(), &mut rng);
                let w = rand_vec(model.param_dim(), &mut rng);
                let g = model.param_gradient(&x, &w).unwrap();
                let fd = Vector::from_fn(w.len(), |j, _| {
                    let mut a = w.clone();
                    let mut b = w.clone();
                    a[j] += h;
                    b[j] -= h;
                    (model.predict(&x, &a).unwrap() - model.predict(&x, &b).unwrap()) / (2.0 * h)
                });
                assert!(max_abs(&(&fd - &g)) <= 1e-6 * max_abs(&g).max(1.0), "{}", model.name());
                let hess = model.param_hessian(&x, &w).unwrap();
                let hfd = Matrix::from_fn(w.len(), w.len(), |i, j| {
                    let mut a = w.clone();
                    let mut b = w.clone();
                    a[j] += h;
                    b[j] -= h;
                    (model.param_gradient(&x, &a).unwrap()[i]
                        - model.param_gradient(&x, &b).unwrap()[i])
                        / (2.0 * h)
                });
                assert!((&hfd - &hess).amax() <= 1e-6 * hess.amax().max(1.0), "{}", model.name());
                assert!((&hess - hess.transpose()).amax() < 1e-14);
            }
        }
    }
}
