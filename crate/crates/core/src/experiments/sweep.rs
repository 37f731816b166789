//! Implicit regularization: the SMD limit against the Bregman projection,
//! over potentials and initializations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generators::{gaussian_linear, positive_linear, DataSpec};
use crate::config::ExperimentConfig;
use crate::engine::{initial_point, InitSpec, Problem, RunConfig, StepSchedule, Termination};
use crate::error::{Result, SmdError};
use crate::linalg::{min_eigen, rel_err, Vector};
use crate::losses::Loss;
use crate::models::{Model, ModelSpec};
use crate::oracles::{bregman_project, ProjectOptions};
use crate::potentials::{Domain, Potential, PotentialSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub potentials: Vec<PotentialSpec>,
    pub inits: Vec<InitSpec>,
    /// `η = eta_factor · α_local / max‖x_i‖²`.
    pub eta_factor: f64,
    /// Fixed step size for every cell instead of the curvature rule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub max_steps: usize,
    pub residual_tol: f64,
    pub tolerance: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n: 10,
            m: 30,
            seed: 0,
            potentials: vec![
                PotentialSpec::SquaredL2,
                PotentialSpec::QnormComponentwise { q: 1.5 },
                PotentialSpec::QnormSquared { q: 1.5 },
                PotentialSpec::NegativeEntropy,
            ],
            inits: vec![
                InitSpec::PotentialMinimizer,
                InitSpec::Gaussian { scale: 0.5, seed: 1 },
            ],
            eta_factor: 0.5,
            eta: None,
            max_steps: 2_000_000,
            residual_tol: 1e-11,
            tolerance: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub potential: String,
    pub init: InitSpec,
    pub eta: f64,
    pub steps: usize,
    pub converged: bool,
    pub oracle_converged: bool,
    /// `‖w_∞ − w_star‖ / ‖w_star‖`; `None` when either side did not converge.
    pub rel_error: Option<f64>,
    pub within_tolerance: bool,
}

impl SweepConfig {
    /// Sizes, seed, stopping rule and tolerance from an experiment config.
    /// With `single`, the grid is just the configured potential and init.
    pub fn from_experiment(cfg: &ExperimentConfig, single: bool) -> Result<Self> {
        let n = match &cfg.data {
            DataSpec::GaussianLinear { n, .. } | DataSpec::PositiveLinear { n, .. } => *n,
            _ => return Err(SmdError::Config("field `data`: the sweep needs gaussian_linear data".into())),
        };
        let m = match &cfg.model {
            ModelSpec::Linear { dim } => *dim,
            _ => return Err(SmdError::Config("field `model`: the sweep needs a linear model".into())),
        };
        let mut out = Self {
            n,
            m,
            seed: cfg.seed,
            max_steps: cfg.stop.max_steps,
            residual_tol: cfg.stop.residual_tol,
            tolerance: cfg.tolerances.projection,
            ..Self::default()
        };
        if single {
            out.potentials = vec![cfg.potential.clone()];
            out.inits = vec![cfg.init.clone()];
        }
        Ok(out)
    }
}

/// Smallest Hessian eigenvalue over the given points, ignoring infinite curvature.
fn local_alpha(potential: &Potential, points: &[&Vector]) -> Result<f64> {
    let mut a = f64::INFINITY;
    for p in points {
        let h = potential.hessian(p)?;
        let h = h.map(|v| if v.is_finite() { v } else { 1e300 });
        a = a.min(min_eigen(&h).0);
    }
    Ok(a)
}

fn cell(cfg: &SweepConfig, spec: &PotentialSpec, init: &InitSpec) -> Result<SweepCell> {
    let potential = Potential::new(spec.clone())?;
    let data = match potential.domain() {
        Domain::Euclidean => gaussian_linear(cfg.n, cfg.m, 0.0, cfg.seed)?,
        Domain::PositiveOrthant => positive_linear(cfg.n, cfg.m, 0.0, cfg.seed)?,
    };
    let model = Model::linear(cfg.m);
    let w0 = initial_point(init, &potential, cfg.m)?;
    let x = data.design_matrix();
    let y = data.label_vector();
    let oracle = bregman_project(&potential, &x, &y, &w0, &ProjectOptions::default())?;
    let max_sq = data.inputs().iter().map(|x| x.norm_squared()).fold(0.0, f64::max);
    let alpha = match potential.alpha().global() {
        Some(a) => a,
        None => local_alpha(&potential, &[&w0, &oracle.w_star])?,
    };
    let eta = cfg.eta.unwrap_or(cfg.eta_factor * alpha / max_sq);
    let run = RunConfig::new(StepSchedule::constant(eta), w0)
        .max_steps(cfg.max_steps)
        .residual_tol(cfg.residual_tol)
        .keep_iterates(false);
    let trace = Problem::new(&potential, Loss::Square, &model, &data).run(&run)?;
    let converged = trace.termination == Termination::ResidualTol;
    let rel_error = (converged && oracle.converged).then(|| rel_err(trace.final_w(), &oracle.w_star));
    Ok(SweepCell {
        potential: potential.name(),
        init: init.clone(),
        eta,
        steps: trace.len(),
        converged,
        oracle_converged: oracle.converged,
        within_tolerance: rel_error.is_some_and(|e| e <= cfg.tolerance),
        rel_error,
    })
}

/// One cell per (potential, initialization), run in parallel.
pub fn run_implicit_reg_sweep(cfg: &SweepConfig) -> Result<Vec<SweepCell>> {
    let jobs: Vec<(&PotentialSpec, &InitSpec)> = cfg
        .potentials
        .iter()
        .flat_map(|p| cfg.inits.iter().map(move |i| (p, i)))
        .collect();
    jobs.into_par_iter().map(|(p, i)| cell(cfg, p, i)).collect()
}
