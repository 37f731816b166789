//! Reproducible scenarios built from an [`ExperimentConfig`].

mod artifacts;
mod cs;
mod fuzz;
pub mod generators;
mod nonlinear;
mod sweep;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use artifacts::{write_json, Manifest, Seeds};
pub use cs::{run_cs_demo, write_cs_artifacts, CsConfig, CsReport, CurvePoint};
pub use fuzz::{identity_fuzz, FuzzOptions, FuzzReport, FuzzTrial};
pub use generators::{generate_cs_instance, DataSpec};
pub use nonlinear::{approximate_w_star, run_nonlinear_local, NonlinearConfig, NonlinearReport, NonlinearRun, ScalingRow};
pub use sweep::{run_implicit_reg_sweep, SweepCell, SweepConfig};

use crate::auditor::{
    consistent_noise, construct_adversary, minimax_ratio, telescoped_identity, AdversaryBranch, IdentityReport,
};
use crate::config::ExperimentConfig;
use crate::dataset::Dataset;
use crate::engine::{initial_point, CertifyOptions, Problem, RunConfig, RunTrace, StepCertificate};
use crate::error::Result;
use crate::linalg::Vector;
use crate::losses::Loss;
use crate::models::Model;
use crate::oracles::{bregman_project, ProjectOptions, ProjectionResult};
use crate::potentials::{Domain, Potential};

/// Everything needed to run one configured SMD problem.
pub struct Setup {
    pub potential: Potential,
    pub loss: Loss,
    pub model: Model,
    pub data: Dataset,
    pub run: RunConfig,
}

impl Setup {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let potential = cfg.build_potential()?;
        let model = cfg.build_model()?;
        let data = cfg.data.generate(&model, cfg.seed)?;
        let w0 = initial_point(&cfg.init, &potential, model.param_dim())?;
        let mut run = RunConfig::new(cfg.schedule.clone(), w0)
            .order(cfg.order)
            .keep_iterates(cfg.keep_iterates);
        run.stop = cfg.stop;
        Ok(Self {
            potential,
            loss: cfg.loss,
            model,
            data,
            run,
        })
    }

    pub fn problem(&self) -> Problem<'_> {
        Problem::new(&self.potential, self.loss, &self.model, &self.data)
    }

    /// Bregman projection of `w_0` onto the interpolation set, for linear models.
    pub fn project(&self) -> Result<Option<ProjectionResult>> {
        if !self.model.is_linear() {
            return Ok(None);
        }
        let x = self.data.design_matrix();
        let y = self.data.label_vector();
        bregman_project(&self.potential, &x, &y, &self.run.w0, &ProjectOptions::default()).map(Some)
    }
}

/// A random point of the potential's domain near `center`.
pub(crate) fn random_point(potential: &Potential, center: &Vector, spread: f64, rng: &mut ChaCha8Rng) -> Vector {
    center.map(|c| {
        let z: f64 = rng.sample(StandardNormal);
        match potential.domain() {
            Domain::Euclidean => c + spread * z,
            Domain::PositiveOrthant => c.abs().max(1e-3) * (spread * z).exp(),
        }
    })
}

/// Ratio statistics of one audited run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimaxSummary {
    pub certified: bool,
    pub certificate: StepCertificate,
    pub min_energy: f64,
    /// Largest ratio over the random consistent pairs.
    pub max_ratio: Option<f64>,
    pub adversary_ratio: Option<f64>,
    pub adversary_branch: Option<AdversaryBranch>,
}

/// Certify the trace and score `pairs` random consistent reference pairs and
/// the constructed adversary.
pub fn minimax_summary(
    problem: &Problem,
    trace: &RunTrace,
    identity: &IdentityReport,
    pairs: usize,
    seed: u64,
) -> Result<MinimaxSummary> {
    let certificate = problem.certify_trace(trace, &CertifyOptions::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = problem.data.w_true.clone().unwrap_or_else(|| trace.w0().clone());
    let mut max_ratio: Option<f64> = None;
    if !trace.is_empty() {
        for _ in 0..pairs {
            let w = random_point(problem.potential, &center, 0.5, &mut rng);
            let v = consistent_noise(problem, trace, &w)?;
            let r = minimax_ratio(problem, trace, &w, &v, &certificate)?.ratio;
            max_ratio = Some(max_ratio.map_or(r, |m| m.max(r)));
        }
    }
    let (adversary_ratio, adversary_branch) = if trace.is_empty() {
        (None, None)
    } else {
        let adv = construct_adversary(problem, trace)?;
        match minimax_ratio(problem, trace, &adv.w, &adv.v, &certificate) {
            Ok(mc) => (Some(mc.ratio), Some(adv.branch)),
            Err(crate::error::SmdError::Degenerate(_)) => (None, Some(adv.branch)),
            Err(e) => return Err(e),
        }
    };
    Ok(MinimaxSummary {
        certified: certificate.is_certified(),
        certificate,
        min_energy: identity.min_energy,
        max_ratio,
        adversary_ratio,
        adversary_branch,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub termination: String,
    pub steps: usize,
    pub final_max_residual: f64,
    pub final_w: Vec<f64>,
}

impl RunSummary {
    pub fn of(trace: &RunTrace) -> Self {
        Self {
            termination: trace.termination.as_str().into(),
            steps: trace.len(),
            final_max_residual: trace.final_max_residual,
            final_w: trace.final_w().iter().copied().collect(),
        }
    }
}

/// Result of `run` / `audit` on a single configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub config_hash: String,
    pub run: RunSummary,
    pub identity_max_residual: Option<f64>,
    pub sgd_residual: Option<f64>,
    pub minimax: Option<MinimaxSummary>,
    /// `‖w_T − w_star‖ / ‖w_star‖` against the Bregman projection.
    pub projection_rel_error: Option<f64>,
    pub failures: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Run a configuration, audit the identity against `w_true` (or `w_0`), and,
/// with `minimax`, score the ratio. Writes `trace.csv`, `iterates.csv`,
/// `identity.csv`, `report.json` and `manifest.json` when `out` is given.
pub fn run_and_audit(cfg: &ExperimentConfig, minimax: bool, out: Option<&Path>) -> Result<AuditReport> {
    let setup = Setup::from_config(cfg)?;
    let problem = setup.problem();
    let mut trace = problem.run(&setup.run)?;
    let tol = &cfg.tolerances;
    let mut failures = Vec::new();

    let mut identity = None;
    if trace.is_complete() {
        let w_ref = setup.data.w_true.clone().unwrap_or_else(|| trace.w0().clone());
        let v = consistent_noise(&problem, &trace, &w_ref)?;
        let rep = telescoped_identity(&problem, &trace, &w_ref, &v)?;
        rep.attach(&mut trace);
        if rep.max_residual() > tol.identity {
            failures.push(format!("identity residual {:e} exceeds {:e}", rep.max_residual(), tol.identity));
        }
        identity = Some(rep);
    }

    let mm = match (&identity, minimax) {
        (Some(rep), true) => {
            let s = minimax_summary(&problem, &trace, rep, 20, cfg.seed)?;
            if s.certified {
                if s.min_energy < -1e-12 {
                    failures.push(format!("certified run has E_i = {:e} < 0", s.min_energy));
                }
                if let Some(r) = s.max_ratio.filter(|r| *r > 1.0 + tol.ratio) {
                    failures.push(format!("certified run has minimax ratio {r}"));
                }
                if let Some(r) = s.adversary_ratio.filter(|r| (r - 1.0).abs() > 1e-8) {
                    failures.push(format!("adversary ratio {r} differs from 1"));
                }
            }
            Some(s)
        }
        _ => None,
    };

    let projection_rel_error = match setup.project()? {
        Some(p) if p.converged && trace.termination == crate::engine::Termination::ResidualTol => {
            Some(crate::linalg::rel_err(trace.final_w(), &p.w_star))
        }
        _ => None,
    };

    let report = AuditReport {
        config_hash: cfg.hash()?,
        run: RunSummary::of(&trace),
        identity_max_residual: identity.as_ref().map(|r| r.max_residual()),
        sgd_residual: identity.as_ref().and_then(|r| r.sgd.as_ref().map(|s| s.residual)),
        minimax: mm,
        projection_rel_error,
        failures,
    };

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let mut files = vec!["trace.csv".to_string(), "iterates.csv".to_string(), "report.json".to_string()];
        trace.write_csv(&dir.join("trace.csv"))?;
        trace.write_iterates_csv(&dir.join("iterates.csv"))?;
        if let Some(rep) = &identity {
            rep.write_csv(&dir.join("identity.csv"))?;
            files.push("identity.csv".into());
        }
        write_json(&dir.join("report.json"), &report)?;
        Manifest::new(cfg, Some(&trace), files)?.write(dir)?;
    }
    Ok(report)
}
