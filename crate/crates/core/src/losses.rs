//! Residual losses `l(z)` and the per-sample quantities they induce.
//!
//! For a sample `(x, y)` the per-sample loss is `L(w) = l(y − f(x, w))`, and the
//! loss divergence is `D_L(w, w') = L(w) − L(w') − ∇L(w')ᵀ(w − w')`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{Matrix, Vector};
use crate::models::Model;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Loss {
    /// `½ z²`
    Square,
    /// `½ z²` for `|z| ≤ δ`, `δ(|z| − ½δ)` beyond.
    Huber { delta: f64 },
    /// `¼ z⁴`
    Quartic,
    /// `log cosh z`
    LogCosh,
}

impl Loss {
    pub fn name(&self) -> &'static str {
        match self {
            Loss::Square => "square",
            Loss::Huber { .. } => "huber",
            Loss::Quartic => "quartic",
            Loss::LogCosh => "log_cosh",
        }
    }

    pub fn is_convex(&self) -> bool {
        true
    }

    pub fn is_quasiconvex(&self) -> bool {
        true
    }

    pub fn value(&self, z: f64) -> f64 {
        match *self {
            Loss::Square => 0.5 * z * z,
            Loss::Huber { delta } => {
                if z.abs() <= delta {
                    0.5 * z * z
                } else {
                    delta * (z.abs() - 0.5 * delta)
                }
            }
            Loss::Quartic => 0.25 * z.powi(4),
            Loss::LogCosh => {
                // log cosh z = |z| + log(1 + e^{−2|z|}) − log 2
                let a = z.abs();
                a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
            }
        }
    }

    pub fn deriv(&self, z: f64) -> f64 {
        match *self {
            Loss::Square => z,
            Loss::Huber { delta } => z.clamp(-delta, delta),
            Loss::Quartic => z.powi(3),
            Loss::LogCosh => z.tanh(),
        }
    }

    pub fn second_deriv(&self, z: f64) -> f64 {
        match *self {
            Loss::Square => 1.0,
            Loss::Huber { delta } => {
                if z.abs() <= delta {
                    1.0
                } else {
                    0.0
                }
            }
            Loss::Quartic => 3.0 * z * z,
            Loss::LogCosh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }

    /// `L(w) = l(y − f(x, w))`
    pub fn sample_loss(&self, model: &Model, x: &Vector, y: f64, w: &Vector) -> Result<f64> {
        Ok(self.value(y - model.predict(x, w)?))
    }

    /// `∇L(w) = −l'(y − f(x, w)) ∇_w f(x, w)`
    pub fn sample_loss_grad(&self, model: &Model, x: &Vector, y: f64, w: &Vector) -> Result<Vector> {
        let e = y - model.predict(x, w)?;
        Ok(model.param_gradient(x, w)? * (-self.deriv(e)))
    }

    /// `∇²L(w) = l''(e) ∇f ∇fᵀ − l'(e) ∇²f`
    pub fn sample_loss_hessian(&self, model: &Model, x: &Vector, y: f64, w: &Vector) -> Result<Matrix> {
        let e = y - model.predict(x, w)?;
        let g = model.param_gradient(x, w)?;
        let mut h = self.second_deriv(e) * &g * g.transpose();
        if !model.is_linear() {
            h -= self.deriv(e) * model.param_hessian(x, w)?;
        }
        Ok(h)
    }

    /// `D_L(w, wp)`; can be negative for nonlinear models.
    pub fn loss_bregman(
        &self,
        model: &Model,
        x: &Vector,
        y: f64,
        w: &Vector,
        wp: &Vector,
    ) -> Result<f64> {
        let lw = self.sample_loss(model, x, y, w)?;
        let lp = self.sample_loss(model, x, y, wp)?;
        let g = self.sample_loss_grad(model, x, y, wp)?;
        Ok(lw - lp - g.dot(&(w - wp)))
    }
}
