//! Exact accounting of an SMD run against a reference pair `(w, v)`.
//!
//! For every step, with `l(v_i)` the reference noise loss,
//!
//! ```text
//! D_ψ(w, w_{i-1}) + η_i l(v_i) = D_ψ(w, w_i) + E_i + η_i D_{L_i}(w, w_{i-1})
//! E_i = D_ψ(w_i, w_{i-1}) − η_i D_{L_i}(w_i, w_{i-1}) + η_i L_i(w_i)
//! ```
//!
//! and summing gives the telescoped form. Dropping the nonnegative `E_i`
//! bounds the minimax ratio by one.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{Problem, RunTrace, StepCertificate};
use crate::error::{Result, SmdError};
use crate::linalg::Vector;
use crate::losses::Loss;
use crate::models::ModelSpec;
use crate::potentials::{Domain, PotentialSpec};

/// Labels must match `f(x_i, w) + v_i` to this (relative) tolerance.
pub const CONSISTENCY_TOL: f64 = 1e-10;
/// Ratios up to `1 + RATIO_SLACK` count as at most one.
pub const RATIO_SLACK: f64 = 1e-10;

fn scale(x: f64) -> f64 {
    x.abs().max(1.0)
}

fn require_complete(trace: &RunTrace) -> Result<()> {
    if trace.is_complete() {
        Ok(())
    } else {
        Err(SmdError::Precondition(
            "auditing needs every iterate; run with keep_iterates".into(),
        ))
    }
}

/// `v_i = y_{s_i} − f(x_{s_i}, w)` along the trace, the noise that makes `(w, v)`
/// consistent with the data.
pub fn consistent_noise(problem: &Problem, trace: &RunTrace, w: &Vector) -> Result<Vec<f64>> {
    trace
        .steps
        .iter()
        .map(|r| Ok(problem.data.label(r.sample) - problem.model.predict(problem.data.input(r.sample), w)?))
        .collect()
}

/// Both sides of the per-step identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepIdentity {
    pub step: usize,
    pub sample: usize,
    pub eta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_residual: f64,
    /// `|lhs − rhs| / max(1, |lhs|)`
    pub rel_residual: f64,
    /// The energy term `E_i`.
    pub energy: f64,
    /// `D_{L_i}(w, w_{i-1})`
    pub loss_divergence: f64,
}

struct StepParts {
    d_prev: f64,
    d_next: f64,
    eta_lv: f64,
    energy: f64,
    dl_ref: f64,
}

fn step_parts(problem: &Problem, trace: &RunTrace, k: usize, w: &Vector, v: f64) -> Result<StepParts> {
    let Problem {
        potential,
        loss,
        model,
        data,
    } = *problem;
    let r = &trace.steps[k];
    let (x, y) = (data.input(r.sample), data.label(r.sample));
    let gap = (y - model.predict(x, w)? - v).abs();
    if gap > CONSISTENCY_TOL * scale(y) {
        return Err(SmdError::Precondition(format!(
            "step {}: label differs from f(x, w) + v by {gap:e}",
            r.step
        )));
    }
    let prev = trace.iterate(k);
    let next = trace.iterate(k + 1);
    let eta = r.eta;
    let energy = potential.bregman(next, prev)? - eta * loss.loss_bregman(model, x, y, next, prev)?
        + eta * loss.sample_loss(model, x, y, next)?;
    Ok(StepParts {
        d_prev: potential.bregman(w, prev)?,
        d_next: potential.bregman(w, next)?,
        eta_lv: eta * loss.value(v),
        energy,
        dl_ref: loss.loss_bregman(model, x, y, w, prev)?,
    })
}

/// Residual of the identity at step `step` (1-based) for the reference pair
/// `(w, v)`, where `v` is the noise on that step's sample.
pub fn step_identity_residual(
    problem: &Problem,
    trace: &RunTrace,
    step: usize,
    w: &Vector,
    v: f64,
) -> Result<StepIdentity> {
    require_complete(trace)?;
    if step == 0 || step > trace.len() {
        return Err(SmdError::Input(format!("step {step} outside 1..={}", trace.len())));
    }
    let k = step - 1;
    let p = step_parts(problem, trace, k, w, v)?;
    Ok(make_step(&trace.steps[k], &p))
}

fn make_step(r: &crate::engine::StepRecord, p: &StepParts) -> StepIdentity {
    let lhs = p.d_prev + p.eta_lv;
    let rhs = p.d_next + p.energy + r.eta * p.dl_ref;
    let abs = (lhs - rhs).abs();
    StepIdentity {
        step: r.step,
        sample: r.sample,
        eta: r.eta,
        lhs,
        rhs,
        abs_residual: abs,
        rel_residual: abs / scale(lhs),
        energy: p.energy,
        loss_divergence: p.dl_ref,
    }
}

/// The squared-norm / square-loss form
/// `‖w−w_0‖² + Σ η_i v_i² = ‖w−w_T‖² + Σ η_i(1 − η_i‖x_i‖²)e_i² + Σ η_i e_{p,i}²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Relative gap between this form and twice the general identity.
    pub agreement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub steps: Vec<StepIdentity>,
    /// `D_ψ(w, w_0) + Σ η_i l(v_i)`
    pub lhs: f64,
    /// `D_ψ(w, w_T) + Σ E_i + Σ η_i D_{L_i}(w, w_{i-1})`
    pub rhs: f64,
    /// `|lhs − rhs| / max(1, |lhs|)`
    pub telescoped_residual: f64,
    /// `|(lhs − rhs) − Σ(lhs_i − rhs_i)| / max(1, Σ|lhs_i|)`, which vanishes
    /// up to rounding.
    pub telescoping_gap: f64,
    pub max_step_residual: f64,
    pub min_energy: f64,
    pub min_loss_divergence: f64,
    pub sgd: Option<SgdCheck>,
}

impl IdentityReport {
    /// Largest relative residual of any step or the telescoped sum.
    pub fn max_residual(&self) -> f64 {
        self.max_step_residual.max(self.telescoped_residual)
    }

    pub fn energies(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.energy).collect()
    }

    /// Fill `identity_residual` on each step record.
    pub fn attach(&self, trace: &mut RunTrace) {
        for (rec, s) in trace.steps.iter_mut().zip(&self.steps) {
            rec.identity_residual = Some(s.rel_residual);
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record([
            "step",
            "sample",
            "eta",
            "lhs",
            "rhs",
            "abs_residual",
            "rel_residual",
            "energy",
            "loss_divergence",
        ])?;
        for s in &self.steps {
            wtr.write_record([
                s.step.to_string(),
                s.sample.to_string(),
                format!("{:e}", s.eta),
                format!("{:e}", s.lhs),
                format!("{:e}", s.rhs),
                format!("{:e}", s.abs_residual),
                format!("{:e}", s.rel_residual),
                format!("{:e}", s.energy),
                format!("{:e}", s.loss_divergence),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn is_sgd(problem: &Problem) -> bool {
    matches!(problem.potential.spec(), PotentialSpec::SquaredL2)
        && matches!(problem.model.spec(), ModelSpec::Linear { .. })
        && problem.loss == Loss::Square
}

/// Check the identity at every step and summed over the run, for the
/// reference pair `(w, v)` with one `v_i` per step.
pub fn telescoped_identity(problem: &Problem, trace: &RunTrace, w: &Vector, v: &[f64]) -> Result<IdentityReport> {
    require_complete(trace)?;
    if v.len() != trace.len() {
        return Err(SmdError::Dimension {
            context: "reference noise per step",
            expected: trace.len(),
            got: v.len(),
        });
    }
    let potential = problem.potential;
    let mut steps = Vec::with_capacity(trace.len());
    let mut sum_eta_lv = 0.0;
    let mut sum_energy = 0.0;
    let mut sum_eta_dl = 0.0;
    let mut sum_diff = 0.0;
    let mut sum_abs_lhs = 0.0;
    for k in 0..trace.len() {
        let p = step_parts(problem, trace, k, w, v[k])?;
        let s = make_step(&trace.steps[k], &p);
        sum_eta_lv += p.eta_lv;
        sum_energy += p.energy;
        sum_eta_dl += s.eta * p.dl_ref;
        sum_diff += s.lhs - s.rhs;
        sum_abs_lhs += s.lhs.abs();
        steps.push(s);
    }
    let lhs = potential.bregman(w, trace.w0())? + sum_eta_lv;
    let rhs = potential.bregman(w, trace.final_w())? + sum_energy + sum_eta_dl;
    let sgd = if is_sgd(problem) {
        Some(sgd_check(problem, trace, w, v, rhs)?)
    } else {
        None
    };
    Ok(IdentityReport {
        lhs,
        rhs,
        telescoped_residual: (lhs - rhs).abs() / scale(lhs),
        telescoping_gap: ((lhs - rhs) - sum_diff).abs() / scale(sum_abs_lhs),
        max_step_residual: steps.iter().map(|s| s.rel_residual).fold(0.0, f64::max),
        min_energy: steps.iter().map(|s| s.energy).fold(f64::INFINITY, f64::min),
        min_loss_divergence: steps.iter().map(|s| s.loss_divergence).fold(f64::INFINITY, f64::min),
        steps,
        sgd,
    })
}

fn sgd_check(problem: &Problem, trace: &RunTrace, w: &Vector, v: &[f64], general_rhs: f64) -> Result<SgdCheck> {
    let data = problem.data;
    let mut lhs = (w - trace.w0()).norm_squared();
    let mut rhs = (w - trace.final_w()).norm_squared();
    for (k, r) in trace.steps.iter().enumerate() {
        let x = data.input(r.sample);
        let prev = trace.iterate(k);
        let e = data.label(r.sample) - x.dot(prev);
        let ep = x.dot(w) - x.dot(prev);
        lhs += r.eta * v[k] * v[k];
        rhs += r.eta * (1.0 - r.eta * x.norm_squared()) * e * e + r.eta * ep * ep;
    }
    Ok(SgdCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs() / scale(lhs),
        agreement: (0.5 * rhs - general_rhs).abs() / scale(general_rhs),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum MinimaxVerdict {
    /// Ratio at most one on a run whose step sizes are certified.
    Certified,
    /// Ratio above one; the reference pair is the witness.
    Violated { w: Vec<f64>, v: Vec<f64> },
    /// Ratio at most one but without a step-size certificate.
    Unverified { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimaxCertificate {
    pub ratio: f64,
    /// `D_ψ(w, w_T)`
    pub final_divergence: f64,
    /// `Σ η_i D_{L_i}(w, w_{i-1})` under the implied labels.
    pub loss_divergence_sum: f64,
    /// `D_ψ(w, w_0)`
    pub initial_divergence: f64,
    /// `Σ η_i l(v_i)`
    pub noise_sum: f64,
    /// Whether the implied labels `f(x_i, w) + v_i` equal the data labels.
    pub consistent: bool,
    pub verdict: MinimaxVerdict,
}

/// `[D_ψ(w, w_T) + Σ η_i D_{L_i}(w, w_{i-1})] / [D_ψ(w, w_0) + Σ η_i l(v_i)]`.
///
/// `D_{L_i}` uses the labels `f(x_i, w) + v_i` implied by the pair, so any
/// `(w, v)` can be scored against the same trajectory.
pub fn minimax_ratio(
    problem: &Problem,
    trace: &RunTrace,
    w: &Vector,
    v: &[f64],
    certificate: &StepCertificate,
) -> Result<MinimaxCertificate> {
    require_complete(trace)?;
    if v.len() != trace.len() {
        return Err(SmdError::Dimension {
            context: "reference noise per step",
            expected: trace.len(),
            got: v.len(),
        });
    }
    let Problem {
        potential,
        loss,
        model,
        data,
    } = *problem;
    let mut loss_divergence_sum = 0.0;
    let mut noise_sum = 0.0;
    let mut consistent = true;
    for (k, r) in trace.steps.iter().enumerate() {
        let x = data.input(r.sample);
        let y = model.predict(x, w)? + v[k];
        consistent &= (y - data.label(r.sample)).abs() <= CONSISTENCY_TOL * scale(y);
        loss_divergence_sum += r.eta * loss.loss_bregman(model, x, y, w, trace.iterate(k))?;
        noise_sum += r.eta * loss.value(v[k]);
    }
    let final_divergence = potential.bregman(w, trace.final_w())?;
    let initial_divergence = potential.bregman(w, trace.w0())?;
    let den = initial_divergence + noise_sum;
    if !(den > 0.0) {
        return Err(SmdError::Degenerate(format!(
            "minimax denominator is {den:e}; the reference pair carries no disturbance"
        )));
    }
    let ratio = (final_divergence + loss_divergence_sum) / den;
    let verdict = if ratio > 1.0 + RATIO_SLACK {
        MinimaxVerdict::Violated {
            w: w.iter().copied().collect(),
            v: v.to_vec(),
        }
    } else if !certificate.is_certified() {
        MinimaxVerdict::Unverified {
            reason: "step sizes are not certified".into(),
        }
    } else {
        MinimaxVerdict::Certified
    };
    Ok(MinimaxCertificate {
        ratio,
        final_divergence,
        loss_divergence_sum,
        initial_divergence,
        noise_sum,
        consistent,
        verdict,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryBranch {
    /// Minimum-norm point of the equal-divergence hyperplane.
    MinNorm,
    /// Hyperplane point on the segment `w_T → w_0`, used when the
    /// minimum-norm point leaves the positive orthant.
    Segment,
    /// `‖∇ψ(w_T) − ∇ψ(w_0)‖` vanished; a fixed perturbation of `w_0`.
    Degenerate,
}

/// A reference pair achieving ratio one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adversary {
    #[serde(with = "crate::linalg::plain")]
    pub w: Vector,
    /// `v_i = f(x_i, w_{i-1}) − f(x_i, w)`, one per step.
    pub v: Vec<f64>,
    pub branch: AdversaryBranch,
}

/// Pick `ŵ` with `D_ψ(ŵ, w_T) = D_ψ(ŵ, w_0)` and the noise that makes every
/// iterate interpolate its implied label. Then each update is a zero step in
/// the loss, `D_{L_i}(ŵ, w_{i-1}) = l(v_i)`, and numerator equals denominator.
pub fn construct_adversary(problem: &Problem, trace: &RunTrace) -> Result<Adversary> {
    require_complete(trace)?;
    let potential = problem.potential;
    let (w0, wt) = (trace.w0(), trace.final_w());
    let g0 = potential.grad(w0)?;
    let gt = potential.grad(wt)?;
    let a = &gt - &g0;
    let b = -potential.value(wt)? + potential.value(w0)? + gt.dot(wt) - g0.dot(w0);
    let an = a.norm_squared();
    let (w, branch) = if an.sqrt() <= 1e-12 {
        let mut w = w0.clone();
        if !w.is_empty() {
            w[0] += 1e-3;
        }
        (w, AdversaryBranch::Degenerate)
    } else {
        let w = &a * (b / an);
        if potential.domain() == Domain::PositiveOrthant && w.iter().any(|&c| !(c > 0.0)) {
            // aᵀw − b changes sign between w_T and w_0 (it equals ±D_ψ of the pair)
            let den = a.dot(&(w0 - wt));
            let t = (b - a.dot(wt)) / den;
            (wt + t * (w0 - wt), AdversaryBranch::Segment)
        } else {
            (w, AdversaryBranch::MinNorm)
        }
    };
    potential.check_domain(&w)?;
    let v = trace
        .steps
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let x = problem.data.input(r.sample);
            Ok(problem.model.predict(x, trace.iterate(k))? - problem.model.predict(x, &w)?)
        })
        .collect::<Result<_>>()?;
    Ok(Adversary { w, v, branch })
}
