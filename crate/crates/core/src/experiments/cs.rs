//! Sparse recovery with a componentwise q-norm potential close to ℓ1.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::artifacts::write_json;
use super::generators::generate_cs_instance;
use crate::config::{ExperimentConfig, Scenario};
use crate::engine::{initial_point, InitSpec, Problem, RunConfig, StepSchedule};
use crate::error::{Result, SmdError};
use crate::linalg::Vector;
use crate::losses::Loss;
use crate::models::{Model, ModelSpec};
use crate::potentials::{Potential, PotentialSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsConfig {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub eta: f64,
    pub q: f64,
    /// `w_0` entries are `±init_scale` with random signs.
    pub init_scale: f64,
    pub init_seed: u64,
    pub max_steps: usize,
    /// Stop once a full pass leaves every residual below this.
    pub residual_tol: f64,
    pub seed: u64,
    pub threshold: f64,
    pub recovery_tol: f64,
    pub record_every: usize,
}

impl Default for CsConfig {
    fn default() -> Self {
        Self {
            n: 50,
            m: 100,
            k: 10,
            eta: 0.001,
            q: 1.1,
            init_scale: 1e-6,
            init_seed: 0,
            max_steps: 200_000,
            residual_tol: 1e-6,
            seed: 0,
            threshold: 1e-3,
            recovery_tol: 1e-2,
            record_every: 100,
        }
    }
}

impl CsConfig {
    /// Read the sizes, step, potential and init from a `cs_demo` experiment config.
    pub fn from_experiment(cfg: &ExperimentConfig) -> Result<Self> {
        if cfg.scenario != Scenario::CsDemo {
            return Err(SmdError::Config("scenario must be `cs_demo`".into()));
        }
        let mut out = Self {
            seed: cfg.seed,
            max_steps: cfg.stop.max_steps,
            residual_tol: cfg.stop.residual_tol,
            threshold: cfg.tolerances.support_threshold,
            recovery_tol: cfg.tolerances.recovery,
            ..Self::default()
        };
        match &cfg.data {
            super::DataSpec::CompressedSensing { n, k } => {
                out.n = *n;
                out.k = *k;
            }
            _ => return Err(SmdError::Config("field `data`: cs_demo needs compressed_sensing data".into())),
        }
        match &cfg.model {
            ModelSpec::Linear { dim } => out.m = *dim,
            _ => return Err(SmdError::Config("field `model`: cs_demo needs a linear model".into())),
        }
        match &cfg.potential {
            PotentialSpec::QnormComponentwise { q } => out.q = *q,
            _ => return Err(SmdError::Config("field `potential`: cs_demo needs qnorm_componentwise".into())),
        }
        match &cfg.schedule {
            StepSchedule::Constant { eta } => out.eta = *eta,
            _ => return Err(SmdError::Config("field `schedule`: cs_demo needs a constant step".into())),
        }
        if let InitSpec::NearZero { scale, seed } = &cfg.init {
            out.init_scale = *scale;
            out.init_seed = *seed;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    /// `(1/2n) ‖Xw − y‖²`
    pub loss: f64,
    /// `‖w − w_true‖ / ‖w_true‖`
    pub error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CsReport {
    pub config: CsConfig,
    pub steps: usize,
    pub termination: String,
    pub final_rel_error: f64,
    pub final_loss: f64,
    pub support_recovered: bool,
    /// First recorded step with correct support and error within tolerance.
    pub recovered_at: Option<usize>,
    pub wall_time_s: f64,
    pub final_w: Vec<f64>,
    pub curve: Vec<CurvePoint>,
}

impl CsReport {
    pub fn success(&self) -> bool {
        self.support_recovered && self.final_rel_error <= self.config.recovery_tol
    }

    /// `cs_curve.csv` with columns `step,loss,error`.
    pub fn write_curve_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(["step", "loss", "error"])?;
        for p in &self.curve {
            wtr.write_record([p.step.to_string(), format!("{:e}", p.loss), format!("{:e}", p.error)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn rel_error(w: &Vector, truth: &Vector) -> f64 {
    let nt = truth.norm();
    let d = (w - truth).norm();
    if nt > 0.0 {
        d / nt
    } else {
        d
    }
}

fn support(w: &Vector, threshold: f64) -> Vec<bool> {
    w.iter().map(|v| v.abs() > threshold).collect()
}

/// Generate an instance, run SMD and record the loss and error curves.
pub fn run_cs_demo(cfg: &CsConfig) -> Result<CsReport> {
    let data = generate_cs_instance(cfg.n, cfg.m, cfg.k, cfg.seed)?;
    let truth = data.w_true.clone().expect("generator records the truth");
    let potential = Potential::qnorm_componentwise(cfg.q)?;
    let model = Model::linear(cfg.m);
    let w0 = initial_point(
        &InitSpec::NearZero {
            scale: cfg.init_scale,
            seed: cfg.init_seed,
        },
        &potential,
        cfg.m,
    )?;
    let run = RunConfig::new(StepSchedule::constant(cfg.eta), w0.clone())
        .max_steps(cfg.max_steps)
        .residual_tol(cfg.residual_tol)
        .keep_iterates(false);
    let x = data.design_matrix();
    let y = data.label_vector();
    let true_support = support(&truth, cfg.threshold);
    let every = cfg.record_every.max(1);
    let loss_at = |w: &Vector| (&x * w - &y).norm_squared() / (2.0 * cfg.n as f64);
    let ok = |w: &Vector| support(w, cfg.threshold) == true_support && rel_error(w, &truth) <= cfg.recovery_tol;

    let mut curve = vec![CurvePoint {
        step: 0,
        loss: loss_at(&w0),
        error: rel_error(&w0, &truth),
    }];
    let mut recovered_at = ok(&w0).then_some(0);
    let start = Instant::now();
    let problem = Problem::new(&potential, Loss::Square, &model, &data);
    let trace = problem.run_observed(&run, |rec, w| {
        if rec.step % every == 0 {
            let error = rel_error(w, &truth);
            curve.push(CurvePoint {
                step: rec.step,
                loss: loss_at(w),
                error,
            });
            if recovered_at.is_none() && ok(w) {
                recovered_at = Some(rec.step);
            }
        }
    })?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let w = trace.final_w();
    if curve.last().map(|p| p.step) != Some(trace.len()) {
        curve.push(CurvePoint {
            step: trace.len(),
            loss: loss_at(w),
            error: rel_error(w, &truth),
        });
    }
    Ok(CsReport {
        config: cfg.clone(),
        steps: trace.len(),
        termination: trace.termination.as_str().into(),
        final_rel_error: rel_error(w, &truth),
        final_loss: loss_at(w),
        support_recovered: support(w, cfg.threshold) == true_support,
        recovered_at,
        wall_time_s,
        final_w: w.iter().copied().collect(),
        curve,
    })
}

/// Write `cs_curve.csv` and `report.json` into `dir`.
pub fn write_cs_artifacts(report: &CsReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    report.write_curve_csv(&dir.join("cs_curve.csv"))?;
    write_json(&dir.join("report.json"), report)
}
