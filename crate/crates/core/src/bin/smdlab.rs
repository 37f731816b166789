use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use smdlab::auditor::{construct_adversary, minimax_ratio};
use smdlab::config::{ExperimentConfig, Overrides, Scenario};
use smdlab::engine::CertifyOptions;
use smdlab::error::{Result, SmdError};
use smdlab::experiments::{
    identity_fuzz, run_and_audit, run_cs_demo, run_implicit_reg_sweep, run_nonlinear_local, write_cs_artifacts,
    write_json, CsConfig, FuzzOptions, Manifest, NonlinearConfig, Setup, SweepConfig,
};

#[derive(Parser)]
#[command(name = "smdlab", version, about = "Stochastic mirror descent runs, audits and oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured scenario.
    Run(Common),
    /// Run one configuration and audit the identity and the minimax ratio.
    Audit(Common),
    /// Build the worst-case reference pair for a run and score it.
    Adversary(Common),
    /// Bregman projection of w_0 onto the interpolation set (linear models).
    Project(Common),
    /// Sparse recovery with a q-norm potential.
    CsDemo(Common),
    /// SMD limits against the projection oracle over potentials × inits.
    Sweep(Common),
    /// Randomized identity and minimax audits.
    Fuzz(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML experiment configuration; the scenario preset when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Constant step size.
    #[arg(long)]
    eta: Option<f64>,
    /// Maximum number of SMD steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// squared_l2, negative_entropy, qnorm_componentwise or qnorm_squared.
    #[arg(long)]
    potential: Option<String>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            eta: self.eta,
            steps: self.steps,
            out: self.out.clone(),
            potential: self.potential.clone(),
            q: self.q,
            trials: self.trials,
        }
    }

    fn load(&self, preset: Scenario) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::preset(preset),
        };
        cfg.apply(&self.overrides())?;
        Ok(cfg)
    }
}

/// What a command produced: a JSON summary and any invariant failures.
struct Outcome {
    out_dir: PathBuf,
    config_hash: String,
    summary: serde_json::Value,
    failures: Vec<String>,
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| Path::new("out").join(&cfg.name))
}

fn finish(cfg: &ExperimentConfig, summary: impl Serialize, failures: Vec<String>) -> Result<Outcome> {
    Ok(Outcome {
        out_dir: out_dir(cfg),
        config_hash: cfg.hash()?,
        summary: serde_json::to_value(summary)?,
        failures,
    })
}

fn cmd_single(cfg: &ExperimentConfig, minimax: bool) -> Result<Outcome> {
    let dir = out_dir(cfg);
    let report = run_and_audit(cfg, minimax, Some(&dir))?;
    let failures = report.failures.clone();
    finish(cfg, report, failures)
}

fn cmd_adversary(cfg: &ExperimentConfig) -> Result<Outcome> {
    let setup = Setup::from_config(cfg)?;
    let problem = setup.problem();
    let trace = problem.run(&setup.run)?;
    if trace.is_empty() || trace.final_w() == trace.w0() {
        return Err(SmdError::Degenerate("the run never moved away from w_0".into()));
    }
    let cert = problem.certify_trace(&trace, &CertifyOptions::default())?;
    let adv = construct_adversary(&problem, &trace)?;
    let mc = minimax_ratio(&problem, &trace, &adv.w, &adv.v, &cert)?;
    let mut failures = Vec::new();
    if cert.is_certified() && (mc.ratio - 1.0).abs() > 1e-8 {
        failures.push(format!("adversary ratio {} differs from 1", mc.ratio));
    }
    let dir = out_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    let body = json!({
        "branch": adv.branch,
        "w": adv.w.as_slice(),
        "v": adv.v,
        "certificate": mc,
    });
    write_json(&dir.join("adversary.json"), &body)?;
    trace.write_csv(&dir.join("trace.csv"))?;
    Manifest::new(cfg, Some(&trace), vec!["adversary.json".into(), "trace.csv".into()])?.write(&dir)?;
    finish(cfg, json!({ "branch": adv.branch, "ratio": mc.ratio, "certified": cert.is_certified() }), failures)
}

fn cmd_project(cfg: &ExperimentConfig) -> Result<Outcome> {
    let setup = Setup::from_config(cfg)?;
    let proj = setup
        .project()?
        .ok_or_else(|| SmdError::Config("field `model`: projection needs a linear model".into()))?;
    let mut failures = Vec::new();
    if !proj.converged {
        failures.push(format!("projection did not converge, residual {:e}", proj.residual));
    }
    let dir = out_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    write_json(&dir.join("projection.json"), &proj)?;
    Manifest::new(cfg, None, vec!["projection.json".into()])?.write(&dir)?;
    finish(cfg, proj, failures)
}

fn cmd_cs(cfg: &ExperimentConfig) -> Result<Outcome> {
    let report = run_cs_demo(&CsConfig::from_experiment(cfg)?)?;
    let dir = out_dir(cfg);
    write_cs_artifacts(&report, &dir)?;
    Manifest::new(cfg, None, vec!["cs_curve.csv".into(), "report.json".into()])?.write(&dir)?;
    let mut failures = Vec::new();
    if !report.success() {
        failures.push(format!(
            "sparse signal not recovered: support {}, relative error {:e} after {} steps",
            report.support_recovered, report.final_rel_error, report.steps
        ));
    }
    let summary = json!({
        "steps": report.steps,
        "termination": report.termination,
        "final_rel_error": report.final_rel_error,
        "final_loss": report.final_loss,
        "support_recovered": report.support_recovered,
        "recovered_at": report.recovered_at,
        "wall_time_s": report.wall_time_s,
    });
    finish(cfg, summary, failures)
}

fn cmd_sweep(cfg: &ExperimentConfig, c: &Common, from_file: bool) -> Result<Outcome> {
    let single = from_file || c.potential.is_some();
    let mut sweep = SweepConfig::from_experiment(cfg, single)?;
    if !from_file {
        sweep.inits = SweepConfig::default().inits;
    }
    sweep.eta = c.eta;
    let cells = run_implicit_reg_sweep(&sweep)?;
    let failures: Vec<String> = cells
        .iter()
        .filter(|c| c.converged && c.oracle_converged && !c.within_tolerance)
        .map(|c| format!("{} from {:?}: relative error {:?}", c.potential, c.init, c.rel_error))
        .collect();
    let dir = out_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    let mut wtr = csv::Writer::from_path(dir.join("sweep.csv")).map_err(SmdError::from)?;
    wtr.write_record(["potential", "init", "eta", "steps", "converged", "oracle_converged", "rel_error"])
        .map_err(SmdError::from)?;
    for c in &cells {
        wtr.write_record([
            c.potential.clone(),
            serde_json::to_string(&c.init)?,
            format!("{:e}", c.eta),
            c.steps.to_string(),
            c.converged.to_string(),
            c.oracle_converged.to_string(),
            c.rel_error.map(|e| format!("{e:e}")).unwrap_or_default(),
        ])
        .map_err(SmdError::from)?;
    }
    wtr.flush()?;
    write_json(&dir.join("report.json"), &json!({ "config": sweep, "cells": cells }))?;
    Manifest::new(cfg, None, vec!["sweep.csv".into(), "report.json".into()])?.write(&dir)?;
    finish(cfg, &cells, failures)
}

fn cmd_nonlinear(cfg: &ExperimentConfig) -> Result<Outcome> {
    let report = run_nonlinear_local(&NonlinearConfig::from_experiment(cfg)?)?;
    let dir = out_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    write_json(&dir.join("report.json"), &report)?;
    Manifest::new(cfg, None, vec!["report.json".into()])?.write(&dir)?;
    let summary = json!({
        "contraction_below_one": report.contraction_below_one,
        "seeds": report.runs.len(),
        "monotone": report.monotone,
        "median_dist_sq": report.scaling.iter().map(|r| (r.m, r.median_dist_sq)).collect::<Vec<_>>(),
    });
    // exploratory: outcomes are data, not invariants
    finish(cfg, summary, Vec::new())
}

fn cmd_fuzz(cfg: &ExperimentConfig) -> Result<Outcome> {
    let report = identity_fuzz(&FuzzOptions::from_experiment(cfg));
    let dir = out_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    write_json(&dir.join("report.json"), &report)?;
    Manifest::new(cfg, None, vec!["report.json".into()])?.write(&dir)?;
    let summary = json!({
        "trials": report.trials.len(),
        "certified": report.certified,
        "max_identity_residual": report.max_identity_residual,
        "elapsed_s": report.elapsed_s,
    });
    finish(cfg, summary, report.failures)
}

fn dispatch(command: &Command) -> Result<Outcome> {
    match command {
        Command::Run(c) => {
            let cfg = c.load(Scenario::OverparamLinear)?;
            match cfg.scenario {
                Scenario::CsDemo => cmd_cs(&cfg),
                Scenario::ImplicitRegSweep => cmd_sweep(&cfg, c, false),
                Scenario::NonlinearLocal => cmd_nonlinear(&cfg),
                Scenario::IdentityFuzz => cmd_fuzz(&cfg),
                Scenario::OverparamLinear => cmd_single(&cfg, false),
                Scenario::MinimaxAudit => cmd_single(&cfg, true),
            }
        }
        Command::Audit(c) => cmd_single(&c.load(Scenario::MinimaxAudit)?, true),
        Command::Adversary(c) => cmd_adversary(&c.load(Scenario::MinimaxAudit)?),
        Command::Project(c) => cmd_project(&c.load(Scenario::OverparamLinear)?),
        Command::CsDemo(c) => cmd_cs(&c.load(Scenario::CsDemo)?),
        Command::Sweep(c) => cmd_sweep(&c.load(Scenario::ImplicitRegSweep)?, c, c.config.is_some()),
        Command::Fuzz(c) => cmd_fuzz(&c.load(Scenario::IdentityFuzz)?),
    }
}

fn name(command: &Command) -> &'static str {
    match command {
        Command::Run(_) => "run",
        Command::Audit(_) => "audit",
        Command::Adversary(_) => "adversary",
        Command::Project(_) => "project",
        Command::CsDemo(_) => "cs-demo",
        Command::Sweep(_) => "sweep",
        Command::Fuzz(_) => "fuzz",
    }
}

fn print_json(v: &serde_json::Value) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v).unwrap_or_else(|_| v.to_string());
    // a closed pipe is not an error worth reporting
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match dispatch(&cli.command) {
        Ok(o) => o,
        Err(e @ SmdError::Config(_)) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            print_json(&json!({ "command": name(&cli.command), "error": e.to_string() }));
            return ExitCode::FAILURE;
        }
    };
    if outcome.failures.is_empty() {
        print_json(&outcome.summary);
        return ExitCode::SUCCESS;
    }
    let record = json!({
        "command": name(&cli.command),
        "config_hash": outcome.config_hash,
        "failures": outcome.failures,
        "summary": outcome.summary,
    });
    if std::fs::create_dir_all(&outcome.out_dir).is_ok() {
        if let Err(e) = write_json(&outcome.out_dir.join("failure.json"), &record) {
            eprintln!("warning: could not write failure.json: {e}");
        }
    }
    print_json(&record);
    ExitCode::FAILURE
}
