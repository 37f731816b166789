//! TOML experiment configuration.
//!
//! Top-level keys hold scalars; every component (`potential`, `loss`, `model`,
//! `data`, `schedule`, `order`, `stop`, `init`, `tolerances`) is a one-level
//! table, tagged with `kind` where it has variants:
//!
//! ```toml
//! scenario = "cs_demo"
//! seed = 1
//!
//! [potential]
//! kind = "qnorm_componentwise"
//! q = 1.1
//!
//! [loss]
//! kind = "square"
//!
//! [model]
//! kind = "linear"
//! dim = 100
//!
//! [data]
//! kind = "compressed_sensing"
//! n = 50
//! k = 10
//!
//! [schedule]
//! kind = "constant"
//! eta = 0.001
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{InitSpec, SampleOrder, StepSchedule, StopRule};
use crate::error::{Result, SmdError};
use crate::experiments::DataSpec;
use crate::losses::Loss;
use crate::models::{Model, ModelSpec};
use crate::potentials::{Potential, PotentialSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    CsDemo,
    OverparamLinear,
    ImplicitRegSweep,
    NonlinearLocal,
    IdentityFuzz,
    MinimaxAudit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative identity residual.
    pub identity: f64,
    /// Slack on `ratio <= 1`.
    pub ratio: f64,
    /// Relative distance to the oracle solution.
    pub projection: f64,
    /// Entries below this magnitude count as zero for support recovery.
    pub support_threshold: f64,
    /// Relative recovery error for compressed sensing.
    pub recovery: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-9,
            ratio: 1e-10,
            projection: 1e-4,
            support_threshold: 1e-3,
            recovery: 1e-2,
        }
    }
}

fn default_name() -> String {
    "run".into()
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub scenario: Scenario,
    /// Seed for the data generator.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Store every iterate (needed for auditing).
    #[serde(default = "default_true")]
    pub keep_iterates: bool,
    pub potential: PotentialSpec,
    pub loss: Loss,
    pub model: ModelSpec,
    pub data: DataSpec,
    pub schedule: StepSchedule,
    #[serde(default)]
    pub order: SampleOrder,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Number of randomized trials, for `identity_fuzz`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
}

impl ExperimentConfig {
    /// The built-in configuration of a scenario (the files under `configs/`).
    pub fn preset(scenario: Scenario) -> Self {
        let text = match scenario {
            Scenario::CsDemo => include_str!("../configs/cs_demo.toml"),
            Scenario::OverparamLinear => include_str!("../configs/overparam_linear.toml"),
            Scenario::ImplicitRegSweep => include_str!("../configs/implicit_reg_sweep.toml"),
            Scenario::NonlinearLocal => include_str!("../configs/nonlinear_local.toml"),
            Scenario::IdentityFuzz => include_str!("../configs/identity_fuzz.toml"),
            Scenario::MinimaxAudit => include_str!("../configs/minimax_audit.toml"),
        };
        Self::from_toml_str(text).expect("built-in presets are valid")
    }

    /// Parse and validate; errors carry the TOML line or the offending field.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| SmdError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            SmdError::Config(msg) => SmdError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SmdError::Config(e.to_string()))
    }

    /// Lowercase hex SHA-256 of the canonical TOML form, ignoring `out_dir`.
    pub fn hash(&self) -> Result<String> {
        let content = Self {
            out_dir: None,
            ..self.clone()
        };
        let digest = Sha256::digest(content.to_toml_string()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: SmdError| SmdError::Config(format!("field `{name}`: {e}"));
        let potential = Potential::new(self.potential.clone()).map_err(|e| field("potential", e))?;
        let model = Model::new(self.model.clone()).map_err(|e| field("model", e))?;
        if let Some(d) = potential.fixed_dim() {
            if d != model.param_dim() {
                return Err(SmdError::Config(format!(
                    "field `potential`: dimension {d} does not match the model's {} parameters",
                    model.param_dim()
                )));
            }
        }
        if let Loss::Huber { delta } = self.loss {
            if !(delta > 0.0) {
                return Err(SmdError::Config(format!("field `loss.delta`: must be positive, got {delta}")));
            }
        }
        self.schedule.validate().map_err(|e| field("schedule", e))?;
        if self.stop.residual_tol < 0.0 {
            return Err(SmdError::Config("field `stop.residual_tol`: must be nonnegative".into()));
        }
        if let InitSpec::Explicit { w } = &self.init {
            if w.len() != model.param_dim() {
                return Err(SmdError::Config(format!(
                    "field `init.w`: expected {} entries, got {}",
                    model.param_dim(),
                    w.len()
                )));
            }
        }
        Ok(())
    }

    /// Apply command-line overrides, then re-validate.
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(steps) = o.steps {
            self.stop.max_steps = steps;
        }
        if let Some(eta) = o.eta {
            self.schedule = StepSchedule::Constant { eta };
        }
        if let Some(out) = &o.out {
            self.out_dir = Some(out.clone());
        }
        if let Some(t) = o.trials {
            self.trials = Some(t);
        }
        if let Some(kind) = &o.potential {
            let q = o.q.or(match self.potential {
                PotentialSpec::QnormComponentwise { q } | PotentialSpec::QnormSquared { q } => Some(q),
                _ => None,
            });
            self.potential = potential_by_name(kind, q)?;
        } else if let Some(q) = o.q {
            match &mut self.potential {
                PotentialSpec::QnormComponentwise { q: old } | PotentialSpec::QnormSquared { q: old } => *old = q,
                _ => return Err(SmdError::Config("field `potential.q`: the potential has no q parameter".into())),
            }
        }
        self.validate()
    }

    pub fn build_potential(&self) -> Result<Potential> {
        Potential::new(self.potential.clone())
    }

    pub fn build_model(&self) -> Result<Model> {
        Model::new(self.model.clone())
    }
}

/// Flag overrides applied on top of a configuration file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub eta: Option<f64>,
    pub steps: Option<usize>,
    pub out: Option<PathBuf>,
    pub potential: Option<String>,
    pub q: Option<f64>,
    pub trials: Option<usize>,
}

/// `squared_l2`, `negative_entropy`, `qnorm_componentwise` or `qnorm_squared`.
pub fn potential_by_name(kind: &str, q: Option<f64>) -> Result<PotentialSpec> {
    let need_q = || q.ok_or_else(|| SmdError::Config(format!("field `potential`: `{kind}` needs a q")));
    Ok(match kind {
        "squared_l2" => PotentialSpec::SquaredL2,
        "negative_entropy" => PotentialSpec::NegativeEntropy,
        "qnorm_componentwise" => PotentialSpec::QnormComponentwise { q: need_q()? },
        "qnorm_squared" => PotentialSpec::QnormSquared { q: need_q()? },
        other => return Err(SmdError::Config(format!("field `potential`: unknown kind `{other}`"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CS: &str = r#"
scenario = "cs_demo"
seed = 7

[potential]
kind = "qnorm_componentwise"
q = 1.1

[loss]
kind = "square"

[model]
kind = "linear"
dim = 100

[data]
kind = "compressed_sensing"
n = 50
k = 10

[schedule]
kind = "constant"
eta = 0.001

[init]
kind = "near_zero"
scale = 1e-6
seed = 3
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(CS).unwrap();
        assert_eq!(cfg.scenario, Scenario::CsDemo);
        assert_eq!(cfg.potential, PotentialSpec::QnormComponentwise { q: 1.1 });
        assert_eq!(cfg.order, SampleOrder::Cyclic);
        assert_eq!(cfg.stop, StopRule::default());
        assert_eq!(cfg.tolerances, Tolerances::default());
        assert!(cfg.keep_iterates);
    }

    #[test]
    fn round_trips_losslessly() {
        let mut cfg = ExperimentConfig::from_toml_str(CS).unwrap();
        cfg.schedule = StepSchedule::Sequence {
            etas: vec![0.1, 1.0 / 3.0, std::f64::consts::PI * 1e-7],
        };
        cfg.tolerances.identity = 1.0 / 7.0;
        cfg.out_dir = Some("out/x".into());
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
        assert_eq!(cfg.hash().unwrap().len(), 64);
    }

    #[test]
    fn presets_parse() {
        for s in [
            Scenario::CsDemo,
            Scenario::OverparamLinear,
            Scenario::ImplicitRegSweep,
            Scenario::NonlinearLocal,
            Scenario::IdentityFuzz,
            Scenario::MinimaxAudit,
        ] {
            assert_eq!(ExperimentConfig::preset(s).scenario, s);
        }
    }

    #[test]
    fn overrides_apply_and_validate() {
        let mut cfg = ExperimentConfig::from_toml_str(CS).unwrap();
        let o = Overrides {
            seed: Some(3),
            eta: Some(0.5),
            q: Some(1.3),
            ..Overrides::default()
        };
        cfg.apply(&o).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.schedule, StepSchedule::constant(0.5));
        assert_eq!(cfg.potential, PotentialSpec::QnormComponentwise { q: 1.3 });

        let o = Overrides {
            potential: Some("qnorm_squared".into()),
            ..Overrides::default()
        };
        cfg.apply(&o).unwrap();
        assert_eq!(cfg.potential, PotentialSpec::QnormSquared { q: 1.3 });

        let o = Overrides {
            potential: Some("l1".into()),
            ..Overrides::default()
        };
        assert!(cfg.apply(&o).unwrap_err().to_string().contains("`potential`"));
        let o = Overrides {
            eta: Some(-1.0),
            ..Overrides::default()
        };
        assert!(cfg.apply(&o).is_err());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = ExperimentConfig::from_toml_str(CS).unwrap();
        let mut b = a.clone();
        b.seed += 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        let mut c = a.clone();
        c.out_dir = Some("elsewhere".into());
        assert_eq!(a.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn syntax_errors_report_line() {
        let bad = CS.replace("q = 1.1", "q = = 1.1");
        let msg = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(msg.contains("line 7"), "{msg}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let bad = CS.replace("q = 1.1", "q = 2.5");
        let msg = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(msg.contains("`potential`"), "{msg}");
        let bad = CS.replace("eta = 0.001", "eta = -1.0");
        let msg = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(msg.contains("`schedule`"), "{msg}");
        let bad = CS.replace("seed = 7", "seed = 7\ncolour = 1");
        let msg = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(msg.contains("colour"), "{msg}");
    }
}
