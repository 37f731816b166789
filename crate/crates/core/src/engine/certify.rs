//! Step-size certification: is `ψ − η L_i` convex for every sample?

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trace::RunTrace;
use crate::dataset::Dataset;
use crate::error::Result;
use crate::linalg::{min_eigen, Vector};
use crate::losses::Loss;
use crate::models::Model;
use crate::potentials::{Domain, Potential};

/// A point where `∇²ψ − η∇²L_i` has a negative eigenvalue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<f64>,
    pub sample: usize,
    pub eta: f64,
    pub min_eigenvalue: f64,
    /// Eigenvector of the negative eigenvalue: a direction of non-convexity.
    pub direction: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum StepCertificate {
    /// Linear model, square loss, globally α-strongly convex ψ and `η ≤ α / max‖x_i‖²`.
    ClosedForm { bound: f64 },
    /// Smallest eigenvalue of `∇²ψ − η∇²L_i` over all checked points was `margin ≥ 0`.
    Sampled { margin: f64, points: usize },
    Rejected {
        reason: String,
        witness: Option<Witness>,
    },
}

impl StepCertificate {
    pub fn is_certified(&self) -> bool {
        !matches!(self, StepCertificate::Rejected { .. })
    }
}

#[derive(Clone, Debug)]
pub struct CertifyOptions {
    pub samples: usize,
    pub box_half_width: f64,
    pub seed: u64,
    /// Extra points checked in addition to the random box samples.
    pub extra_points: Vec<Vector>,
    /// Eigenvalues above `-tolerance` count as nonnegative.
    pub tolerance: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            samples: 64,
            box_half_width: 3.0,
            seed: 0x5eed,
            extra_points: Vec::new(),
            tolerance: 1e-12,
        }
    }
}

fn box_points(potential: &Potential, m: usize, opts: &CertifyOptions) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let h = opts.box_half_width;
    (0..opts.samples)
        .map(|_| match potential.domain() {
            Domain::Euclidean => Vector::from_fn(m, |_, _| rng.random_range(-h..h)),
            Domain::PositiveOrthant => Vector::from_fn(m, |_, _| rng.random_range(1e-3..h)),
        })
        .collect()
}

fn closed_form_bound(potential: &Potential, loss: Loss, model: &Model, data: &Dataset) -> Option<f64> {
    if !(model.is_linear() && loss == Loss::Square) {
        return None;
    }
    let alpha = potential.alpha().global()?;
    let max_sq = data.inputs().iter().map(|x| x.norm_squared()).fold(0.0, f64::max);
    Some(if max_sq > 0.0 { alpha / max_sq } else { f64::INFINITY })
}

struct Scan {
    margin: f64,
    points: usize,
    worst: Option<Witness>,
}

impl Scan {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            points: 0,
            worst: None,
        }
    }

    fn check(
        &mut self,
        potential: &Potential,
        loss: Loss,
        model: &Model,
        data: &Dataset,
        point: &Vector,
        sample: usize,
        eta: f64,
    ) -> Result<()> {
        let h_psi = potential.hessian(point)?;
        if h_psi.iter().any(|v| !v.is_finite()) {
            // infinitely curved potential at this point
            return Ok(());
        }
        let h_loss = loss.sample_loss_hessian(model, data.input(sample), data.label(sample), point)?;
        let (lmin, dir) = min_eigen(&(h_psi - eta * h_loss));
        self.points += 1;
        if lmin < self.margin {
            self.margin = lmin;
            self.worst = Some(Witness {
                point: point.iter().copied().collect(),
                sample,
                eta,
                min_eigenvalue: lmin,
                direction: dir.iter().copied().collect(),
            });
        }
        Ok(())
    }

    fn finish(self, tol: f64) -> StepCertificate {
        if self.margin >= -tol {
            StepCertificate::Sampled {
                margin: self.margin,
                points: self.points,
            }
        } else {
            StepCertificate::Rejected {
                reason: format!("ψ − ηL_i has curvature {:e} < 0", self.margin),
                witness: self.worst,
            }
        }
    }
}

/// Certify a constant step size for every sample of `data`.
pub fn certify_step_size(
    potential: &Potential,
    loss: Loss,
    model: &Model,
    data: &Dataset,
    eta: f64,
    opts: &CertifyOptions,
) -> Result<StepCertificate> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Ok(StepCertificate::Rejected {
            reason: format!("step size must be positive, got {eta}"),
            witness: None,
        });
    }
    if let Some(bound) = closed_form_bound(potential, loss, model, data) {
        if eta <= bound {
            return Ok(StepCertificate::ClosedForm { bound });
        }
    }
    let mut scan = Scan::new();
    let mut pts = box_points(potential, model.param_dim(), opts);
    pts.extend(opts.extra_points.iter().cloned());
    for p in &pts {
        for i in 0..data.len() {
            scan.check(potential, loss, model, data, p, i, eta)?;
        }
    }
    Ok(scan.finish(opts.tolerance))
}

/// Certify the step sizes a trace actually used: each distinct `(η_i, sample)`
/// pair at the box samples, and each step at its own endpoints and midpoint.
pub fn certify_trace(
    potential: &Potential,
    loss: Loss,
    model: &Model,
    data: &Dataset,
    trace: &RunTrace,
    opts: &CertifyOptions,
) -> Result<StepCertificate> {
    if let Some(r) = trace.steps.iter().find(|r| !(r.eta > 0.0 && r.eta.is_finite())) {
        return Ok(StepCertificate::Rejected {
            reason: format!("step {} has non-positive step size", r.step),
            witness: None,
        });
    }
    if let Some(bound) = closed_form_bound(potential, loss, model, data) {
        if trace.steps.iter().all(|r| r.eta <= bound) {
            return Ok(StepCertificate::ClosedForm { bound });
        }
    }
    let mut pairs = HashSet::new();
    let distinct: Vec<(f64, usize)> = trace
        .steps
        .iter()
        .filter(|r| pairs.insert((r.eta.to_bits(), r.sample)))
        .map(|r| (r.eta, r.sample))
        .collect();
    let mut scan = Scan::new();
    let mut pts = box_points(potential, model.param_dim(), opts);
    pts.extend(opts.extra_points.iter().cloned());
    for p in &pts {
        for &(eta, i) in &distinct {
            scan.check(potential, loss, model, data, p, i, eta)?;
        }
    }
    if trace.is_complete() {
        for (k, r) in trace.steps.iter().enumerate() {
            let a = trace.iterate(k);
            let b = trace.iterate(k + 1);
            let mid = 0.5 * (a + b);
            for p in [a, b, &mid] {
                scan.check(potential, loss, model, data, p, r.sample, r.eta)?;
            }
        }
    }
    Ok(scan.finish(opts.tolerance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn data() -> Dataset {
        let x = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.5, -1.0, 1.0]);
        Dataset::from_design(&x, &Vector::from_vec(vec![1.0, -1.0])).unwrap()
    }

    #[test]
    fn theorem_one_bound_is_closed_form() {
        let d = data();
        let max_sq = 5.0;
        let cert = certify_step_size(
            &Potential::squared_l2(),
            Loss::Square,
            &Model::linear(3),
            &d,
            1.0 / max_sq,
            &CertifyOptions::default(),
        )
        .unwrap();
        assert_eq!(cert, StepCertificate::ClosedForm { bound: 0.2 });
    }

    #[test]
    fn zero_step_is_rejected() {
        let cert = certify_step_size(
            &Potential::squared_l2(),
            Loss::Square,
            &Model::linear(3),
            &data(),
            0.0,
            &CertifyOptions::default(),
        )
        .unwrap();
        assert!(!cert.is_certified());
    }

    #[test]
    fn large_step_rejected_with_witness_along_x() {
        let d = data();
        // min ‖x_i‖² = 2.25; eigenvalue of I − η x xᵀ along x is 1 − η‖x‖²
        let eta = 3.0 / 2.25;
        let cert = certify_step_size(
            &Potential::squared_l2(),
            Loss::Square,
            &Model::linear(3),
            &d,
            eta,
            &CertifyOptions::default(),
        )
        .unwrap();
        match cert {
            StepCertificate::Rejected { witness: Some(w), .. } => {
                let x = d.input(w.sample);
                assert!((w.min_eigenvalue - (1.0 - eta * x.norm_squared())).abs() < 1e-12);
                let dir = Vector::from_vec(w.direction.clone());
                assert!((dir.dot(x).abs() - x.norm()).abs() < 1e-10);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn entropy_small_step_is_sampled() {
        let cert = certify_step_size(
            &Potential::negative_entropy(),
            Loss::Square,
            &Model::linear(3),
            &data(),
            0.05,
            &CertifyOptions::default(),
        )
        .unwrap();
        assert!(matches!(cert, StepCertificate::Sampled { margin, points } if margin > 0.0 && points == 128));
    }
}
