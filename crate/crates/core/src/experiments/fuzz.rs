//! Randomized audits over potentials × losses × models × schedules.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generators::{gaussian_linear, positive_linear, random_feature_model, teacher};
use super::random_point;
use crate::auditor::{consistent_noise, construct_adversary, minimax_ratio, telescoped_identity};
use crate::config::ExperimentConfig;
use crate::dataset::Dataset;
use crate::engine::{CertifyOptions, InitSpec, Problem, RunConfig, SampleOrder, StepSchedule};
use crate::error::Result;
use crate::linalg::{min_eigen, Matrix};
use crate::losses::Loss;
use crate::models::{Model, ModelSpec};
use crate::potentials::{Domain, Potential};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuzzOptions {
    pub trials: usize,
    pub seed: u64,
    /// Steps per run.
    pub steps: usize,
    /// Random consistent pairs scored per certified run.
    pub pairs: usize,
    pub identity_tol: f64,
    pub ratio_slack: f64,
    pub adversary_tol: f64,
    pub energy_tol: f64,
}

impl Default for FuzzOptions {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 0,
            steps: 200,
            pairs: 20,
            identity_tol: 1e-9,
            ratio_slack: 1e-10,
            adversary_tol: 1e-8,
            energy_tol: 1e-12,
        }
    }
}

impl FuzzOptions {
    /// Seed, trial count, run length and tolerances from an experiment config.
    pub fn from_experiment(cfg: &ExperimentConfig) -> Self {
        Self {
            trials: cfg.trials.unwrap_or(100),
            seed: cfg.seed,
            steps: cfg.stop.max_steps,
            identity_tol: cfg.tolerances.identity,
            ratio_slack: cfg.tolerances.ratio,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzTrial {
    pub index: usize,
    pub potential: String,
    pub loss: String,
    pub model: String,
    pub schedule: String,
    pub steps: usize,
    pub max_identity_residual: f64,
    pub max_telescoping_gap: f64,
    /// Agreement of the squared-norm special form, for SGD trials.
    pub sgd_agreement: Option<f64>,
    pub certified: bool,
    pub min_energy: f64,
    pub max_ratio: Option<f64>,
    pub adversary_ratio: Option<f64>,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub options: FuzzOptions,
    pub trials: Vec<FuzzTrial>,
    pub max_identity_residual: f64,
    pub certified: usize,
    pub failures: Vec<String>,
    pub elapsed_s: f64,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn random_spd(rng: &mut ChaCha8Rng, m: usize) -> Matrix {
    let a = Matrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() / m as f64 + Matrix::identity(m, m) * 0.5
}

struct TrialSetup {
    potential: Potential,
    loss: Loss,
    model: Model,
    data: Dataset,
    run: RunConfig,
    schedule: &'static str,
}

fn draw(index: usize, opts: &FuzzOptions) -> Result<TrialSetup> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(1_000_003).wrapping_add(index as u64));
    let model = match (index / 20) % 3 {
        0 => Model::linear(rng.random_range(3..=8)),
        1 => random_feature_model(rng.random_range(3..=6), rng.random_range(2..=3))?,
        _ => Model::new(ModelSpec::ShallowSmooth {
            input_dim: rng.random_range(2..=3),
            hidden: 2,
        })?,
    };
    let m = model.param_dim();
    let potential = match index % 5 {
        0 => Potential::squared_l2(),
        1 => Potential::quadratic(&random_spd(&mut rng, m))?,
        2 => Potential::negative_entropy(),
        3 => Potential::qnorm_componentwise(rng.random_range(1.3..2.0))?,
        _ => Potential::qnorm_squared(rng.random_range(1.3..2.0))?,
    };
    let loss = match (index / 5) % 4 {
        0 => Loss::Square,
        1 => Loss::Huber {
            delta: rng.random_range(0.2..1.0),
        },
        2 => Loss::Quartic,
        _ => Loss::LogCosh,
    };
    let n = rng.random_range(2..=4);
    let data_seed = rng.random();
    let data = match (model.is_linear(), potential.domain()) {
        (true, Domain::PositiveOrthant) => positive_linear(n, m, 0.1, data_seed)?,
        (true, Domain::Euclidean) => gaussian_linear(n, m, 0.1, data_seed)?,
        (false, _) => teacher(&model, n, 0.1, 1.0, data_seed)?,
    };
    let w0 = crate::engine::initial_point(
        &InitSpec::Gaussian {
            scale: 0.3,
            seed: rng.random(),
        },
        &potential,
        m,
    )?;

    // scale the step to the local curvature of ψ and of the loss at w0
    let mut alpha = f64::INFINITY;
    for p in std::iter::once(&w0).chain(data.w_true.iter()) {
        if let Ok(h) = potential.hessian(p) {
            alpha = alpha.min(min_eigen(&h.map(|v| if v.is_finite() { v } else { 1.0 })).0);
        }
    }
    let alpha = alpha.max(1e-6);
    let mut gmax = 0.0_f64;
    let mut lmax = 1.0_f64;
    for (x, y) in data.samples() {
        gmax = gmax.max(model.param_gradient(x, &w0)?.norm_squared());
        lmax = lmax.max(loss.second_deriv(y - model.predict(x, &w0)?));
    }
    let base = rng.random_range(0.05..0.5) * alpha / (gmax.max(1e-12) * lmax);
    let (schedule, name) = match index % 3 {
        0 => (StepSchedule::constant(base), "constant"),
        1 => (
            StepSchedule::Sequence {
                etas: (0..opts.steps).map(|_| base * rng.random_range(0.3..1.0)).collect(),
            },
            "sequence",
        ),
        _ => (
            StepSchedule::AdaptiveProp2ii {
                safety: rng.random_range(0.3..0.9),
                alpha: Some(alpha),
            },
            "adaptive",
        ),
    };
    let order = match rng.random_range(0..3) {
        0 => SampleOrder::Cyclic,
        1 => SampleOrder::Shuffled { seed: rng.random() },
        _ => SampleOrder::Uniform { seed: rng.random() },
    };
    let run = RunConfig::new(schedule, w0)
        .order(order)
        .max_steps(opts.steps)
        .residual_tol(0.0);
    Ok(TrialSetup {
        potential,
        loss,
        model,
        data,
        run,
        schedule: name,
    })
}

fn trial(index: usize, opts: &FuzzOptions) -> FuzzTrial {
    let mut out = FuzzTrial {
        index,
        potential: String::new(),
        loss: String::new(),
        model: String::new(),
        schedule: String::new(),
        steps: 0,
        max_identity_residual: 0.0,
        max_telescoping_gap: 0.0,
        sgd_agreement: None,
        certified: false,
        min_energy: f64::INFINITY,
        max_ratio: None,
        adversary_ratio: None,
        failures: Vec::new(),
    };
    if let Err(e) = audit_trial(index, opts, &mut out) {
        out.failures.push(format!("error: {e}"));
    }
    out
}

fn audit_trial(index: usize, opts: &FuzzOptions, out: &mut FuzzTrial) -> Result<()> {
    let s = draw(index, opts)?;
    out.potential = s.potential.name();
    out.loss = s.loss.name().into();
    out.model = s.model.name().into();
    out.schedule = s.schedule.into();
    let problem = Problem::new(&s.potential, s.loss, &s.model, &s.data);
    let trace = problem.run(&s.run)?;
    out.steps = trace.len();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (index as u64).rotate_left(32));
    let truth = s.data.w_true.clone().expect("generators record the truth");
    let mut refs = Vec::new();
    if s.potential.check_domain(&truth).is_ok() {
        refs.push(truth.clone());
    }
    for _ in 0..2 {
        refs.push(random_point(&s.potential, &truth, 0.5, &mut rng));
    }
    for w in &refs {
        let v = consistent_noise(&problem, &trace, w)?;
        let rep = telescoped_identity(&problem, &trace, w, &v)?;
        out.max_identity_residual = out.max_identity_residual.max(rep.max_residual());
        out.max_telescoping_gap = out.max_telescoping_gap.max(rep.telescoping_gap);
        out.min_energy = out.min_energy.min(rep.min_energy);
        if let Some(sgd) = &rep.sgd {
            out.sgd_agreement = Some(out.sgd_agreement.unwrap_or(0.0).max(sgd.agreement).max(sgd.residual));
        }
    }
    if out.max_identity_residual > opts.identity_tol {
        out.failures.push(format!("identity residual {:e}", out.max_identity_residual));
    }

    let cert = problem.certify_trace(&trace, &CertifyOptions::default())?;
    out.certified = cert.is_certified();
    if !out.certified || trace.is_empty() {
        return Ok(());
    }
    if out.min_energy < -opts.energy_tol {
        out.failures.push(format!("certified run has E_i = {:e}", out.min_energy));
    }
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..opts.pairs {
        let w = random_point(&s.potential, &truth, 0.5, &mut rng);
        let v = consistent_noise(&problem, &trace, &w)?;
        worst = worst.max(minimax_ratio(&problem, &trace, &w, &v, &cert)?.ratio);
    }
    out.max_ratio = Some(worst);
    if worst > 1.0 + opts.ratio_slack {
        out.failures.push(format!("certified run has ratio {worst}"));
    }
    if trace.final_w() != trace.w0() {
        let adv = construct_adversary(&problem, &trace)?;
        let r = minimax_ratio(&problem, &trace, &adv.w, &adv.v, &cert)?.ratio;
        out.adversary_ratio = Some(r);
        if (r - 1.0).abs() > opts.adversary_tol {
            out.failures.push(format!("adversary ratio {r} ({:?})", adv.branch));
        }
    }
    Ok(())
}

/// Run `opts.trials` independent audits in parallel; results are in trial order.
pub fn identity_fuzz(opts: &FuzzOptions) -> FuzzReport {
    let start = Instant::now();
    let trials: Vec<FuzzTrial> = (0..opts.trials).into_par_iter().map(|i| trial(i, opts)).collect();
    let failures = trials
        .iter()
        .flat_map(|t| t.failures.iter().map(move |f| format!("trial {}: {f}", t.index)))
        .collect();
    FuzzReport {
        max_identity_residual: trials.iter().map(|t| t.max_identity_residual).fold(0.0, f64::max),
        certified: trials.iter().filter(|t| t.certified).count(),
        trials,
        failures,
        elapsed_s: start.elapsed().as_secs_f64(),
        options: opts.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_fuzz_passes_and_is_deterministic() {
        let opts = FuzzOptions {
            trials: 12,
            steps: 40,
            ..FuzzOptions::default()
        };
        let a = identity_fuzz(&opts);
        assert!(a.passed(), "{:?}", a.failures);
        let b = identity_fuzz(&opts);
        assert_eq!(a.trials, b.trials);
    }
}
