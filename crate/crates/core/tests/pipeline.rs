use smdlab::auditor::{consistent_noise, telescoped_identity};
use smdlab::config::{ExperimentConfig, Scenario};
use smdlab::dataset::Dataset;
use smdlab::experiments::generators::gaussian_linear;
use smdlab::experiments::{run_and_audit, Manifest, Setup};
use smdlab::linalg::Vector;
use smdlab::oracles::{bregman_project, ProjectOptions, ProjectionResult};
use smdlab::potentials::Potential;

const SHALLOW: &str = r#"
scenario = "minimax_audit"
seed = 11

[potential]
kind = "qnorm_componentwise"
q = 1.7

[loss]
kind = "quartic"

[model]
kind = "shallow_smooth"
input_dim = 2
hidden = 3

[data]
kind = "teacher"
n = 4
noise_std = 0.05

[schedule]
kind = "sequence"
etas = [0.01, 0.02, 0.005, 0.01, 0.01, 0.015, 0.01, 0.003]

[stop]
max_steps = 8
residual_tol = 0.0

[init]
kind = "gaussian"
scale = 0.4
seed = 5
"#;

#[test]
fn nonlinear_config_audits_cleanly() {
    let cfg = ExperimentConfig::from_toml_str(SHALLOW).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rep = run_and_audit(&cfg, true, Some(dir.path())).unwrap();
    assert_eq!(rep.run.steps, 8);
    assert!(rep.identity_max_residual.unwrap() <= 1e-9);
    assert!(rep.passed(), "{:?}", rep.failures);

    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.config_hash, cfg.hash().unwrap());
    assert_eq!(manifest.seeds.data, 11);
    assert_eq!(manifest.seeds.init, Some(5));
    assert_eq!(manifest.final_w.unwrap(), rep.run.final_w);

    let identity = std::fs::read_to_string(dir.path().join("identity.csv")).unwrap();
    assert_eq!(identity.lines().count(), 9);
}

#[test]
fn csv_dataset_feeds_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = gaussian_linear(5, 12, 0.0, 8).unwrap();
    let (csv, side) = (dir.path().join("d.csv"), dir.path().join("d.json"));
    data.save(&csv, &side).unwrap();

    let text = format!(
        r#"
scenario = "overparam_linear"

[potential]
kind = "squared_l2"

[loss]
kind = "square"

[model]
kind = "linear"
dim = 12

[data]
kind = "csv"
path = "{}"
sidecar = "{}"

[schedule]
kind = "constant"
eta = 0.02

[stop]
max_steps = 100000
residual_tol = 1e-10
"#,
        csv.display(),
        side.display()
    );
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    let setup = Setup::from_config(&cfg).unwrap();
    assert_eq!(setup.data.labels(), data.labels());
    let rep = run_and_audit(&cfg, false, None).unwrap();
    assert_eq!(rep.run.termination, "residual_tol");
    assert!(rep.projection_rel_error.unwrap() < 1e-8);
    assert!(rep.sgd_residual.unwrap() < 1e-10);
}

#[test]
fn identity_holds_for_any_consistent_pair() {
    let cfg = ExperimentConfig::preset(Scenario::MinimaxAudit);
    let setup = Setup::from_config(&cfg).unwrap();
    let problem = setup.problem();
    let trace = problem.run(&setup.run).unwrap();
    for shift in [0.0, 0.3, -1.0, 4.0] {
        let w = setup.data.w_true.clone().unwrap().add_scalar(shift);
        let v = consistent_noise(&problem, &trace, &w).unwrap();
        let rep = telescoped_identity(&problem, &trace, &w, &v).unwrap();
        assert!(rep.max_residual() <= 1e-9, "shift {shift}: {}", rep.max_residual());
    }
}

#[test]
fn projection_round_trips_through_json() {
    let data = gaussian_linear(3, 7, 0.0, 1).unwrap();
    let p = Potential::qnorm_squared(1.4).unwrap();
    let w0 = Vector::from_element(7, 0.2);
    let r = bregman_project(&p, &data.design_matrix(), &data.label_vector(), &w0, &ProjectOptions::default()).unwrap();
    let back: ProjectionResult = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back, r);
    let check = Dataset::from_design(&data.design_matrix(), &data.label_vector()).unwrap();
    let fit = check.design_matrix() * &r.w_star - check.label_vector();
    assert!(fit.amax() < 1e-9);
}
