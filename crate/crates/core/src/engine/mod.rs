//! The stochastic mirror descent iteration
//! `∇ψ(w_i) = ∇ψ(w_{i-1}) − η_i ∇L_i(w_{i-1})`.

mod certify;
mod trace;

pub use certify::{certify_step_size, certify_trace, CertifyOptions, StepCertificate, Witness};
pub use trace::{RunTrace, StepRecord, Termination};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Result, SmdError};
use crate::linalg::Vector;
use crate::losses::Loss;
use crate::models::Model;
use crate::potentials::{Domain, Potential};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant { eta: f64 },
    /// One step size per step; running past the end is an error.
    Sequence { etas: Vec<f64> },
    /// `η_i = safety · α|e_i| / (‖∇f_i‖² |l'(e_i)|)`. For linear models
    /// `∇f_i = x_i`. `alpha` defaults to the potential's global constant.
    AdaptiveProp2ii {
        safety: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
    },
}

impl StepSchedule {
    pub fn constant(eta: f64) -> Self {
        StepSchedule::Constant { eta }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |e: f64| !(e > 0.0 && e.is_finite());
        match self {
            StepSchedule::Constant { eta } if bad(*eta) => {
                Err(SmdError::Input(format!("step size must be positive, got {eta}")))
            }
            StepSchedule::Sequence { etas } => match etas.iter().position(|&e| bad(e)) {
                Some(i) => Err(SmdError::Input(format!("step size {i} is not positive"))),
                None => Ok(()),
            },
            StepSchedule::AdaptiveProp2ii { safety, alpha } => {
                if !(*safety > 0.0 && *safety <= 1.0) {
                    return Err(SmdError::Input(format!("safety factor must be in (0,1], got {safety}")));
                }
                if let Some(a) = alpha {
                    if bad(*a) {
                        return Err(SmdError::Input(format!("alpha must be positive, got {a}")));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleOrder {
    /// `1, 2, .., n, 1, 2, ..`
    #[default]
    Cyclic,
    /// A fresh random permutation every pass.
    Shuffled { seed: u64 },
    /// Uniform sampling with replacement.
    Uniform { seed: u64 },
}

struct OrderIter {
    order: SampleOrder,
    n: usize,
    rng: ChaCha8Rng,
    perm: Vec<usize>,
    pos: usize,
}

impl OrderIter {
    fn new(order: SampleOrder, n: usize) -> Self {
        let seed = match order {
            SampleOrder::Cyclic => 0,
            SampleOrder::Shuffled { seed } | SampleOrder::Uniform { seed } => seed,
        };
        Self {
            order,
            n,
            rng: ChaCha8Rng::seed_from_u64(seed),
            perm: (0..n).collect(),
            pos: n,
        }
    }

    fn next_index(&mut self) -> usize {
        match self.order {
            SampleOrder::Cyclic => {
                let i = self.pos % self.n;
                self.pos += 1;
                i
            }
            SampleOrder::Shuffled { .. } => {
                if self.pos == self.n {
                    self.perm.shuffle(&mut self.rng);
                    self.pos = 0;
                }
                self.pos += 1;
                self.perm[self.pos - 1]
            }
            SampleOrder::Uniform { .. } => self.rng.random_range(0..self.n),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopRule {
    pub max_steps: usize,
    pub residual_tol: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_steps: 100_000,
            residual_tol: 1e-9,
        }
    }
}

/// Named initialization presets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// Zero for R^m potentials, all-ones for negative entropy.
    #[default]
    Default,
    /// `argmin ψ`.
    PotentialMinimizer,
    /// Entries `scale · (±1)` with random signs.
    NearZero { scale: f64, seed: u64 },
    /// Entries drawn from `N(0, scale²)` (absolute value for the positive orthant).
    Gaussian { scale: f64, seed: u64 },
    Explicit { w: Vec<f64> },
}

pub fn initial_point(init: &InitSpec, potential: &Potential, m: usize) -> Result<Vector> {
    let w = match init {
        InitSpec::Default => match potential.domain() {
            Domain::Euclidean => Vector::zeros(m),
            Domain::PositiveOrthant => Vector::from_element(m, 1.0),
        },
        InitSpec::PotentialMinimizer => potential.minimizer(m),
        InitSpec::NearZero { scale, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let positive = potential.domain() == Domain::PositiveOrthant;
            Vector::from_fn(m, |_, _| {
                if positive || rng.random_bool(0.5) {
                    *scale
                } else {
                    -*scale
                }
            })
        }
        InitSpec::Gaussian { scale, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let positive = potential.domain() == Domain::PositiveOrthant;
            Vector::from_fn(m, |_, _| {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                if positive {
                    scale * z.abs()
                } else {
                    scale * z
                }
            })
        }
        InitSpec::Explicit { w } => {
            check_dim("initial point", m, w.len())?;
            Vector::from_column_slice(w)
        }
    };
    potential.check_domain(&w)?;
    Ok(w)
}

/// Per-step admissible step size for the quasi-convex convergence case:
/// `α|e| / (‖x‖² |l'(e)|)` with `e = y − xᵀw_prev`. Returns `+∞` when the
/// residual (or the loss slope) vanishes.
pub fn prop2ii_eta_bound(alpha: f64, loss: Loss, x: &Vector, y: f64, w_prev: &Vector) -> Result<f64> {
    check_dim("prop2ii bound", x.len(), w_prev.len())?;
    if !(alpha > 0.0) {
        return Err(SmdError::Precondition(format!("alpha must be positive, got {alpha}")));
    }
    Ok(eta_bound(alpha, loss, y - x.dot(w_prev), x.norm_squared()))
}

fn eta_bound(alpha: f64, loss: Loss, e: f64, grad_sq: f64) -> f64 {
    let slope = loss.deriv(e).abs();
    if e == 0.0 || slope == 0.0 || grad_sq == 0.0 {
        f64::INFINITY
    } else {
        alpha * e.abs() / (grad_sq * slope)
    }
}

/// One SMD step; returns `(w_next, dual_next)`.
pub fn smd_step_with_dual(
    potential: &Potential,
    loss: Loss,
    model: &Model,
    x: &Vector,
    y: f64,
    w_prev: &Vector,
    eta: f64,
) -> Result<(Vector, Vector)> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(SmdError::Precondition(format!("step size must be positive, got {eta}")));
    }
    let g = loss.sample_loss_grad(model, x, y, w_prev)?;
    let theta = potential.grad(w_prev)? - eta * g;
    let w = potential.inverse_grad(&theta)?;
    Ok((w, theta))
}

/// `w_next = (∇ψ)⁻¹(∇ψ(w_prev) − η ∇L(w_prev))`.
pub fn smd_step(
    potential: &Potential,
    loss: Loss,
    model: &Model,
    x: &Vector,
    y: f64,
    w_prev: &Vector,
    eta: f64,
) -> Result<Vector> {
    smd_step_with_dual(potential, loss, model, x, y, w_prev, eta).map(|(w, _)| w)
}

/// The fixed ingredients of one SMD problem.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    pub potential: &'a Potential,
    pub loss: Loss,
    pub model: &'a Model,
    pub data: &'a Dataset,
}

impl<'a> Problem<'a> {
    pub fn new(potential: &'a Potential, loss: Loss, model: &'a Model, data: &'a Dataset) -> Self {
        Self {
            potential,
            loss,
            model,
            data,
        }
    }

    pub fn run(&self, cfg: &RunConfig) -> Result<RunTrace> {
        run(self.potential, self.loss, self.model, self.data, cfg)
    }

    pub fn run_observed<F: FnMut(&StepRecord, &Vector)>(&self, cfg: &RunConfig, observe: F) -> Result<RunTrace> {
        run_observed(self.potential, self.loss, self.model, self.data, cfg, observe)
    }

    pub fn certify_trace(&self, trace: &RunTrace, opts: &CertifyOptions) -> Result<StepCertificate> {
        certify_trace(self.potential, self.loss, self.model, self.data, trace, opts)
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub schedule: StepSchedule,
    pub order: SampleOrder,
    pub stop: StopRule,
    pub w0: Vector,
    /// Store every iterate (needed by the auditor); otherwise only endpoints.
    pub keep_iterates: bool,
}

impl RunConfig {
    pub fn new(schedule: StepSchedule, w0: Vector) -> Self {
        Self {
            schedule,
            order: SampleOrder::Cyclic,
            stop: StopRule::default(),
            w0,
            keep_iterates: true,
        }
    }

    pub fn max_steps(mut self, n: usize) -> Self {
        self.stop.max_steps = n;
        self
    }

    pub fn residual_tol(mut self, tol: f64) -> Self {
        self.stop.residual_tol = tol;
        self
    }

    pub fn order(mut self, order: SampleOrder) -> Self {
        self.order = order;
        self
    }

    pub fn keep_iterates(mut self, keep: bool) -> Self {
        self.keep_iterates = keep;
        self
    }
}

fn max_residual(model: &Model, data: &Dataset, w: &Vector) -> Result<f64> {
    let mut worst = 0.0_f64;
    for (x, y) in data.samples() {
        worst = worst.max((y - model.predict(x, w)?).abs());
    }
    Ok(worst)
}

/// Run SMD until `max_steps` or until a full-pass max residual reaches `residual_tol`.
pub fn run(
    potential: &Potential,
    loss: Loss,
    model: &Model,
    data: &Dataset,
    cfg: &RunConfig,
) -> Result<RunTrace> {
    run_observed(potential, loss, model, data, cfg, |_, _| {})
}

/// [`run`], calling `observe(record, w_i)` after every step.
pub fn run_observed<F>(
    potential: &Potential,
    loss: Loss,
    model: &Model,
    data: &Dataset,
    cfg: &RunConfig,
    mut observe: F,
) -> Result<RunTrace>
where
    F: FnMut(&StepRecord, &Vector),
{
    cfg.schedule.validate()?;
    data.validate(model)?;
    check_dim("initial point", model.param_dim(), cfg.w0.len())?;
    let theta0 = potential.grad(&cfg.w0)?;
    let mut trace = RunTrace::new(cfg.w0.clone(), theta0, cfg.keep_iterates);
    let n = data.len();

    let alpha = match &cfg.schedule {
        StepSchedule::AdaptiveProp2ii { alpha, .. } => Some(alpha.or(potential.alpha().global()).ok_or_else(|| {
            SmdError::Precondition(format!(
                "adaptive schedule needs a strong-convexity constant; {} has no global one",
                potential.name()
            ))
        })?),
        _ => None,
    };

    let r0 = max_residual(model, data, &cfg.w0)?;
    trace.initial_max_residual = r0;
    trace.final_max_residual = r0;
    if cfg.stop.max_steps == 0 {
        trace.termination = Termination::MaxSteps;
        return Ok(trace);
    }
    if r0 <= cfg.stop.residual_tol || n == 0 {
        trace.termination = Termination::ResidualTol;
        return Ok(trace);
    }

    let mut order = OrderIter::new(cfg.order, n);
    let mut w = cfg.w0.clone();
    for step in 1..=cfg.stop.max_steps {
        let wrap = |e: SmdError| SmdError::Step { step, source: Box::new(e) };
        let idx = order.next_index();
        let (x, y) = (data.input(idx), data.label(idx));
        let f_prev = model.predict(x, &w).map_err(wrap)?;
        let innovation = y - f_prev;
        let eta = match &cfg.schedule {
            StepSchedule::Constant { eta } => *eta,
            StepSchedule::Sequence { etas } => *etas.get(step - 1).ok_or_else(|| {
                wrap(SmdError::Input(format!("step-size sequence has only {} entries", etas.len())))
            })?,
            StepSchedule::AdaptiveProp2ii { safety, .. } => {
                let a = alpha.expect("set above");
                let gsq = model.param_gradient(x, &w).map_err(wrap)?.norm_squared();
                let bound = eta_bound(a, loss, innovation, gsq);
                if bound.is_finite() {
                    safety * bound
                } else {
                    // zero-gradient step; any η leaves w unchanged
                    safety * a / gsq.max(1.0)
                }
            }
        };
        let pred_error = match &data.w_true {
            Some(wt) => Some(model.predict(x, wt).map_err(wrap)? - f_prev),
            None => None,
        };
        let (w_next, theta) = smd_step_with_dual(potential, loss, model, x, y, &w, eta).map_err(wrap)?;
        w = w_next;
        let mut rec = StepRecord {
            step,
            sample: idx,
            eta,
            innovation,
            pred_error,
            max_residual: None,
            identity_residual: None,
        };
        let pass_end = step % n == 0;
        if pass_end {
            rec.max_residual = Some(max_residual(model, data, &w).map_err(wrap)?);
        }
        observe(&rec, &w);
        trace.push(w.clone(), theta, rec);
        if pass_end {
            let r = trace.steps.last().unwrap().max_residual.unwrap();
            trace.final_max_residual = r;
            if r <= cfg.stop.residual_tol {
                trace.termination = Termination::ResidualTol;
                return Ok(trace);
            }
        }
    }
    trace.final_max_residual = max_residual(model, data, &w)?;
    trace.termination = Termination::MaxSteps;
    Ok(trace)
}
