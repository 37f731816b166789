use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::Vector;
use crate::losses::Loss;
use crate::models::Model;
use crate::dataset::Dataset;
use crate::potentials::Potential;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxSteps,
    ResidualTol,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::MaxSteps => "max_steps",
            Termination::ResidualTol => "residual_tol",
        }
    }
}

/// Scalars recorded for one SMD step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step index `i`.
    pub step: usize,
    pub sample: usize,
    pub eta: f64,
    /// `e_i = y_i − f(x_i, w_{i-1})`
    pub innovation: f64,
    /// `e_{p,i} = f(x_i, w_true) − f(x_i, w_{i-1})`, when the truth is known.
    pub pred_error: Option<f64>,
    /// `max_j |y_j − f(x_j, w_i)|`, recorded at full-pass boundaries.
    pub max_residual: Option<f64>,
    /// Relative per-step identity residual, filled in by the auditor.
    pub identity_residual: Option<f64>,
}

/// The full SMD trajectory.
#[derive(Clone, Debug)]
pub struct RunTrace {
    /// `w_0..w_T` when iterates are kept, otherwise just `w_0` and `w_T`.
    pub iterates: Vec<Vector>,
    /// Dual iterates `∇ψ(w_{i-1}) − η_i ∇L_i(w_{i-1})`, aligned with `iterates`.
    pub duals: Vec<Vector>,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
    /// `max_j |y_j − f(x_j, w_0)|`
    pub initial_max_residual: f64,
    /// Max residual over the dataset at the last full-pass check.
    pub final_max_residual: f64,
    complete: bool,
}

impl RunTrace {
    pub(crate) fn new(w0: Vector, theta0: Vector, complete: bool) -> Self {
        Self {
            iterates: vec![w0],
            duals: vec![theta0],
            steps: Vec::new(),
            termination: Termination::MaxSteps,
            initial_max_residual: f64::NAN,
            final_max_residual: f64::NAN,
            complete,
        }
    }

    pub(crate) fn push(&mut self, w: Vector, theta: Vector, rec: StepRecord) {
        if self.complete || self.iterates.len() == 1 {
            self.iterates.push(w);
            self.duals.push(theta);
        } else {
            *self.iterates.last_mut().unwrap() = w;
            *self.duals.last_mut().unwrap() = theta;
        }
        self.steps.push(rec);
    }

    /// Number of steps taken, `T`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Whether every iterate is stored (required for auditing).
    pub fn is_complete(&self) -> bool {
        self.complete || self.steps.len() <= 1
    }

    pub fn w0(&self) -> &Vector {
        &self.iterates[0]
    }

    pub fn final_w(&self) -> &Vector {
        self.iterates.last().unwrap()
    }

    /// `w_i` for `i` in `0..=T`; panics if iterates were not kept.
    pub fn iterate(&self, i: usize) -> &Vector {
        assert!(self.is_complete(), "trace does not keep intermediate iterates");
        &self.iterates[i]
    }

    /// Largest `|∇ψ(w_i) − (∇ψ(w_{i-1}) − η_i ∇L_i(w_{i-1}))|` over all steps and coordinates.
    pub fn dual_consistency_error(
        &self,
        potential: &Potential,
        loss: Loss,
        model: &Model,
        data: &Dataset,
    ) -> Result<f64> {
        let mut worst = 0.0_f64;
        for (k, rec) in self.steps.iter().enumerate() {
            let prev = self.iterate(k);
            let next = self.iterate(k + 1);
            let g = loss.sample_loss_grad(model, data.input(rec.sample), data.label(rec.sample), prev)?;
            let expect = potential.grad(prev)? - rec.eta * g;
            worst = worst.max((potential.grad(next)? - expect).amax());
        }
        Ok(worst)
    }

    /// One row per step; row 0 stands for `w_0` and carries only its residual.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record([
            "step",
            "sample",
            "eta",
            "innovation",
            "pred_error",
            "max_residual",
            "identity_residual",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let r0 = Some(self.initial_max_residual).filter(|r| r.is_finite());
        wtr.write_record(["0", "", "", "", "", &opt(r0), ""])?;
        for r in &self.steps {
            wtr.write_record([
                r.step.to_string(),
                r.sample.to_string(),
                format!("{:e}", r.eta),
                format!("{:e}", r.innovation),
                opt(r.pred_error),
                opt(r.max_residual),
                opt(r.identity_residual),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// `step,w_1,..,w_m` for every stored iterate (`w_0` and `w_T` only when
    /// intermediate iterates were dropped).
    pub fn write_iterates_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let m = self.w0().len();
        let mut header = vec!["step".to_string()];
        header.extend((1..=m).map(|j| format!("w_{j}")));
        wtr.write_record(&header)?;
        let last = self.iterates.len() - 1;
        for (k, w) in self.iterates.iter().enumerate() {
            let step = if k == last { self.len() } else { k };
            let mut row = vec![step.to_string()];
            row.extend(w.iter().map(|v| format!("{v:e}")));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
