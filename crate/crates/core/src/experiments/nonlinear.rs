//! Local behaviour on nonlinear over-parameterized models: SMD from `w_0`
//! against the closest interpolating point `w_* = argmin_{w∈W} D_ψ(w, w_0)`.
//!
//! `w_*` is approximated by minimizing `D_ψ(w, w_0) + ρ Σ (y_i − f(x_i, w))²`
//! for an increasing sequence of `ρ`, so it is exact only up to the last
//! penalty's bias.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generators::{random_feature_model, teacher, DataSpec};
use crate::config::ExperimentConfig;
use crate::dataset::Dataset;
use crate::engine::{initial_point, InitSpec, Problem, RunConfig, StepSchedule, Termination};
use crate::error::{Result, SmdError};
use crate::linalg::{Matrix, Vector};
use crate::losses::Loss;
use crate::models::{membership_residual, Model, ModelSpec};
use crate::potentials::{Potential, PotentialSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearModel {
    Linear,
    RandomFeature,
    ShallowSmooth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearConfig {
    pub model: NonlinearModel,
    pub potential: PotentialSpec,
    pub n: usize,
    pub m: usize,
    /// Random-feature width, or hidden units of the shallow model.
    pub hidden: usize,
    pub seeds: Vec<u64>,
    /// `η = eta_factor / max_i ‖∇f_i(w_0)‖²`.
    pub eta_factor: f64,
    pub max_steps: usize,
    pub residual_tol: f64,
    /// `w_0, w_true ~ N(0, scale²/m)`.
    pub init_scale: f64,
    pub teacher_scale: f64,
    /// Parameter counts for the distance-scaling table.
    pub scaling_ms: Vec<usize>,
    pub rhos: Vec<f64>,
}

impl Default for NonlinearConfig {
    fn default() -> Self {
        Self {
            model: NonlinearModel::RandomFeature,
            potential: PotentialSpec::SquaredL2,
            n: 10,
            m: 200,
            hidden: 3,
            seeds: (0..10).collect(),
            eta_factor: 0.5,
            max_steps: 200_000,
            residual_tol: 1e-9,
            init_scale: 1.0,
            teacher_scale: 1.0,
            scaling_ms: vec![20, 50, 100, 200],
            rhos: vec![1e2, 1e4, 1e6, 1e8, 1e10],
        }
    }
}

impl NonlinearConfig {
    /// Model, sizes, potential and stopping rule from an experiment config;
    /// seeds are `seed..seed+10`. A Gaussian init sets the entry scale of `w_0`.
    pub fn from_experiment(cfg: &ExperimentConfig) -> Result<Self> {
        let (model, m, hidden) = match &cfg.model {
            ModelSpec::Linear { dim } => (NonlinearModel::Linear, *dim, 1),
            ModelSpec::RandomFeature { dim, readout } => (NonlinearModel::RandomFeature, *dim, readout.len()),
            ModelSpec::ShallowSmooth { input_dim, hidden } => {
                (NonlinearModel::ShallowSmooth, hidden * (input_dim + 1), *hidden)
            }
        };
        let (n, teacher_scale) = match &cfg.data {
            DataSpec::Teacher { n, scale, .. } => (*n, *scale),
            DataSpec::GaussianLinear { n, .. } if model == NonlinearModel::Linear => (*n, 1.0),
            _ => return Err(SmdError::Config("field `data`: nonlinear_local needs teacher data".into())),
        };
        let mut out = Self {
            model,
            potential: cfg.potential.clone(),
            n,
            m,
            hidden,
            seeds: (cfg.seed..cfg.seed + 10).collect(),
            max_steps: cfg.stop.max_steps,
            residual_tol: cfg.stop.residual_tol,
            teacher_scale,
            scaling_ms: [2, 5, 10, 20].iter().map(|k| k * n).collect(),
            ..Self::default()
        };
        if let InitSpec::Gaussian { scale, .. } = cfg.init {
            out.init_scale = scale * (m as f64).sqrt();
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySolution {
    #[serde(with = "crate::linalg::plain")]
    pub w: Vector,
    pub rho: f64,
    /// `max_i |y_i − f(x_i, w)|`
    pub residual: f64,
    pub iterations: usize,
}

fn penalty_value(potential: &Potential, model: &Model, data: &Dataset, w0: &Vector, w: &Vector, rho: f64) -> Result<f64> {
    Ok(potential.bregman(w, w0)? + rho * membership_residual(model, data, w)?.norm_squared())
}

/// Penalized approximation of `argmin_{w∈W} D_ψ(w, w_0)` by Gauss-Newton,
/// warm-started through the increasing `rhos`.
pub fn approximate_w_star(
    potential: &Potential,
    model: &Model,
    data: &Dataset,
    w0: &Vector,
    rhos: &[f64],
) -> Result<PenaltySolution> {
    if rhos.is_empty() {
        return Err(SmdError::Input("need at least one penalty weight".into()));
    }
    let g0 = potential.grad(w0)?;
    let m = w0.len();
    let mut w = w0.clone();
    let mut iterations = 0;
    for &rho in rhos {
        for _ in 0..100 {
            iterations += 1;
            let r = membership_residual(model, data, &w)?;
            let mut jac = Matrix::zeros(data.len(), m);
            for (i, x) in data.inputs().iter().enumerate() {
                jac.set_row(i, &model.param_gradient(x, &w)?.transpose());
            }
            let grad = potential.grad(&w)? - &g0 - 2.0 * rho * jac.transpose() * &r;
            let h = potential.hessian(&w)? + 2.0 * rho * jac.transpose() * &jac;
            let step = h
                .cholesky()
                .ok_or_else(|| SmdError::Numeric("penalty Hessian is not positive definite".into()))?
                .solve(&(-&grad));
            let f = penalty_value(potential, model, data, w0, &w, rho)?;
            let slope = grad.dot(&step);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let cand = &w + t * &step;
                if let Ok(fc) = penalty_value(potential, model, data, w0, &cand, rho) {
                    if fc <= f + 1e-4 * t * slope {
                        w = cand;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted || t * step.norm() <= 1e-14 * (1.0 + w.norm()) {
                break;
            }
        }
    }
    let residual = membership_residual(model, data, &w)?.amax();
    Ok(PenaltySolution {
        w,
        rho: *rhos.last().unwrap(),
        residual,
        iterations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearRun {
    pub seed: u64,
    pub m: usize,
    pub eta: f64,
    pub steps: usize,
    pub converged: bool,
    pub final_residual: f64,
    /// `‖w_∞ − w_*‖ / ‖w_0 − w_*‖`
    pub contraction: f64,
    /// `‖w_* − w_0‖²`
    pub dist_sq: f64,
    pub penalty_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub m: usize,
    pub n_over_m: f64,
    pub median_dist_sq: f64,
    pub dist_sq: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearReport {
    pub config: NonlinearConfig,
    pub runs: Vec<NonlinearRun>,
    pub contraction_below_one: usize,
    pub scaling: Vec<ScalingRow>,
    /// Median `‖w_* − w_0‖²` strictly decreases along `scaling_ms`.
    pub monotone: bool,
}

struct Instance {
    potential: Potential,
    model: Model,
    data: Dataset,
    w0: Vector,
    w_star: PenaltySolution,
}

fn instance(cfg: &NonlinearConfig, m: usize, seed: u64) -> Result<Instance> {
    let potential = Potential::new(cfg.potential.clone())?;
    let model = match cfg.model {
        NonlinearModel::Linear => Model::linear(m),
        NonlinearModel::RandomFeature => random_feature_model(m, cfg.hidden)?,
        NonlinearModel::ShallowSmooth => {
            let d = (m / cfg.hidden).saturating_sub(1).max(1);
            Model::new(ModelSpec::ShallowSmooth {
                input_dim: d,
                hidden: cfg.hidden,
            })?
        }
    };
    let pm = model.param_dim();
    let data = teacher(&model, cfg.n, 0.0, cfg.teacher_scale, seed)?;
    let w0 = initial_point(
        &InitSpec::Gaussian {
            scale: cfg.init_scale / (pm as f64).sqrt(),
            seed: seed.wrapping_add(0x9e37_79b9),
        },
        &potential,
        pm,
    )?;
    let w_star = approximate_w_star(&potential, &model, &data, &w0, &cfg.rhos)?;
    Ok(Instance {
        potential,
        model,
        data,
        w0,
        w_star,
    })
}

fn one_run(cfg: &NonlinearConfig, seed: u64) -> Result<NonlinearRun> {
    let inst = instance(cfg, cfg.m, seed)?;
    let max_g = inst
        .data
        .inputs()
        .iter()
        .map(|x| inst.model.param_gradient(x, &inst.w0).map(|g| g.norm_squared()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let eta = cfg.eta_factor / max_g.max(f64::MIN_POSITIVE);
    let run = RunConfig::new(StepSchedule::constant(eta), inst.w0.clone())
        .max_steps(cfg.max_steps)
        .residual_tol(cfg.residual_tol)
        .keep_iterates(false);
    let trace = Problem::new(&inst.potential, Loss::Square, &inst.model, &inst.data).run(&run)?;
    let ws = &inst.w_star.w;
    let base = (&inst.w0 - ws).norm();
    Ok(NonlinearRun {
        seed,
        m: inst.model.param_dim(),
        eta,
        steps: trace.len(),
        converged: trace.termination == Termination::ResidualTol,
        final_residual: trace.final_max_residual,
        contraction: if base > 0.0 { (trace.final_w() - ws).norm() / base } else { 0.0 },
        dist_sq: base * base,
        penalty_residual: inst.w_star.residual,
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

pub fn run_nonlinear_local(cfg: &NonlinearConfig) -> Result<NonlinearReport> {
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&s| one_run(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let contraction_below_one = runs.iter().filter(|r| r.contraction < 1.0).count();
    let scaling = cfg
        .scaling_ms
        .iter()
        .map(|&m| {
            let dist_sq = cfg
                .seeds
                .par_iter()
                .map(|&s| instance(cfg, m, s).map(|i| (&i.w_star.w - &i.w0).norm_squared()))
                .collect::<Result<Vec<_>>>()?;
            let pm = match cfg.model {
                NonlinearModel::ShallowSmooth => cfg.hidden * (1 + (m / cfg.hidden).saturating_sub(1).max(1)),
                _ => m,
            };
            Ok(ScalingRow {
                m: pm,
                n_over_m: cfg.n as f64 / pm as f64,
                median_dist_sq: median(&mut dist_sq.clone()),
                dist_sq,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone = scaling.windows(2).all(|w| w[1].median_dist_sq < w[0].median_dist_sq);
    Ok(NonlinearReport {
        config: cfg.clone(),
        runs,
        contraction_below_one,
        scaling,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_penalty_matches_projection() {
        let cfg = NonlinearConfig {
            model: NonlinearModel::Linear,
            n: 4,
            m: 12,
            ..NonlinearConfig::default()
        };
        let inst = instance(&cfg, 12, 3).unwrap();
        let x = inst.data.design_matrix();
        let y = inst.data.label_vector();
        let exact = crate::oracles::bregman_project(
            &inst.potential,
            &x,
            &y,
            &inst.w0,
            &crate::oracles::ProjectOptions::default(),
        )
        .unwrap();
        assert!((&inst.w_star.w - &exact.w_star).amax() < 1e-8);
    }

    #[test]
    fn linear_smoke_case_contracts_fully() {
        let cfg = NonlinearConfig {
            model: NonlinearModel::Linear,
            n: 4,
            m: 20,
            seeds: vec![1],
            scaling_ms: vec![],
            ..NonlinearConfig::default()
        };
        let rep = run_nonlinear_local(&cfg).unwrap();
        assert!(rep.runs[0].converged);
        assert!(rep.runs[0].contraction < 1e-6, "{}", rep.runs[0].contraction);
    }

    #[test]
    fn random_feature_penalty_interpolates() {
        let cfg = NonlinearConfig {
            n: 5,
            m: 60,
            ..NonlinearConfig::default()
        };
        let inst = instance(&cfg, 60, 2).unwrap();
        assert!(inst.w_star.residual < 1e-7, "{}", inst.w_star.residual);
    }
}
