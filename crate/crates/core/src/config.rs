//! Run configuration: a TOML file with nested sections, rejected keys,
//! and full validation before anything runs.

use crate::error::{Error, Result};
use crate::model::{ClaimLaw, ModelParams, State, WaitingLaw};
use crate::solver::PsiSpec;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub waiting: WaitingSection,
    pub claims: ClaimSection,
    pub grid: GridSection,
    #[serde(default)]
    pub psi: PsiSection,
    #[serde(default)]
    pub maximizer: crate::pide::MaximizerOptions,
    #[serde(default)]
    pub schedule: ScheduleSection,
    pub sim: SimSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub premium: f64,
    pub interest: f64,
    pub drift: f64,
    pub volatility: f64,
    pub discount: f64,
    pub max_dividend: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WaitingSection {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    Tabulated {
        #[serde(default)]
        nodes: Vec<f64>,
        #[serde(default)]
        values: Vec<f64>,
        /// Two-column CSV (node, value) alternative to inline tables.
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClaimSection {
    Exponential { mean: f64 },
    Tabulated {
        #[serde(default)]
        nodes: Vec<f64>,
        #[serde(default)]
        cdf: Vec<f64>,
        csv: Option<PathBuf>,
    },
    PointMassZero {},
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_s: usize,
    pub n_x: usize,
    pub n_w: usize,
    pub delta: f64,
    pub eps_n: f64,
    /// Surplus truncation; when absent the default rule extends the
    /// largest query point by five mean claims plus the drifted premium
    /// over the horizon.
    pub x_max: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PsiSection {
    #[serde(flatten)]
    pub spec: PsiSpec,
    /// Validation margin used as the solve gate; defaults to
    /// `0.85 * max_dividend`.
    pub k2: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    /// `(eps_n, delta)` levels for the refinement study.
    pub eps_delta: Vec<(f64, f64)>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection { eps_delta: vec![(0.1, 0.1), (0.05, 0.05), (0.025, 0.025)] }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub record_paths: bool,
    /// Start state `(s, x, w)`.
    pub start: (f64, f64, f64),
    #[serde(default)]
    pub policy: PolicySelection,
}

fn default_seed() -> u64 {
    20_240_817
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(untagged)]
pub enum PolicySelection {
    /// Follow the policy artifact extracted from a solved field.
    #[default]
    Extracted,
    /// Constant control.
    Constant { gamma: f64, a: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// Scheme-error budget added to Monte Carlo tolerances.
    pub tol_scheme: f64,
    /// Slack of the suboptimality sweep.
    pub subopt_tol: f64,
    /// Slack of the distance-barrier sandwich.
    pub sandwich_slack: f64,
    /// Check selection; empty means the full set.
    pub checks: Vec<String>,
    /// Monte Carlo paths per heuristic in the suboptimality sweep.
    pub heuristic_paths: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            tol_scheme: 0.1,
            subopt_tol: 0.05,
            sandwich_slack: 0.1,
            checks: Vec::new(),
            heuristic_paths: 10_000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

/// Fully validated runtime bundle assembled from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Instance {
    pub params: ModelParams,
    pub waiting: WaitingLaw,
    pub claims: ClaimLaw,
    pub psi_spec: PsiSpec,
    pub maximizer: crate::pide::MaximizerOptions,
    pub k2: f64,
    pub grid: GridSection,
    pub x_max: f64,
    pub schedule: Vec<(f64, f64)>,
    pub sim: SimSection,
    pub verify: VerifySection,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Validates every section and resolves file-backed laws.
    pub fn build(&self, base_dir: &Path) -> Result<Instance> {
        let m = &self.model;
        let params = ModelParams {
            premium: m.premium,
            interest: m.interest,
            drift: m.drift,
            volatility: m.volatility,
            discount: m.discount,
            max_dividend: m.max_dividend,
            horizon: m.horizon,
        };
        params.validate()?;

        let waiting = match &self.waiting {
            WaitingSection::Exponential { rate } => WaitingLaw::Exponential { rate: *rate },
            WaitingSection::Erlang { shape, rate } => {
                WaitingLaw::Erlang { shape: *shape, rate: *rate }
            }
            WaitingSection::Tabulated { nodes, values, csv } => {
                let (nodes, values) = match csv {
                    Some(p) => crate::io::read_two_column_csv(&base_dir.join(p))?,
                    None => (nodes.clone(), values.clone()),
                };
                let law = WaitingLaw::tabulated(nodes, values)?;
                // the collar and the samplers need the hazard up to one
                // unit past the horizon
                if let WaitingLaw::Tabulated { nodes, .. } = &law {
                    if *nodes.last().unwrap() < params.horizon + 1.0 - 1e-9 {
                        return Err(Error::Config(format!(
                            "tabulated intensity must cover [0, horizon + 1] = [0, {}]",
                            params.horizon + 1.0
                        )));
                    }
                }
                law
            }
        };
        waiting.validate()?;

        let claims = match &self.claims {
            ClaimSection::Exponential { mean } => ClaimLaw::Exponential { mean: *mean },
            ClaimSection::Tabulated { nodes, cdf, csv } => {
                let (nodes, cdf) = match csv {
                    Some(p) => crate::io::read_two_column_csv(&base_dir.join(p))?,
                    None => (nodes.clone(), cdf.clone()),
                };
                ClaimLaw::tabulated(nodes, cdf)?
            }
            ClaimSection::PointMassZero {} => ClaimLaw::point_mass_zero(),
        };
        claims.validate()?;

        let sim = self.sim.clone();
        let start = State::new(sim.start.0, sim.start.1, sim.start.2);
        if !start.in_physical_domain(params.horizon) {
            return Err(Error::Config(format!(
                "start state ({}, {}, {}) outside the physical domain",
                start.s, start.x, start.w
            )));
        }
        if sim.n_paths == 0 {
            return Err(Error::Config("sim.n_paths must be at least 1".into()));
        }
        if !(sim.dt > 0.0) {
            return Err(Error::Config("sim.dt must be positive".into()));
        }

        let x_max = self
            .grid
            .x_max
            .unwrap_or_else(|| crate::solver::Grid::default_x_max(&params, &claims, start.x));
        // constructability check with the configured resolution
        crate::solver::Grid::new(
            params.horizon,
            self.grid.delta,
            self.grid.eps_n,
            x_max,
            self.grid.n_s,
            self.grid.n_x,
            self.grid.n_w,
        )?;

        let k2 = self.psi.k2.unwrap_or(0.85 * params.max_dividend);
        if !(k2 > 0.0 && k2 < params.max_dividend) {
            return Err(Error::Config(format!(
                "psi.k2 must lie strictly between 0 and max_dividend, got {k2}"
            )));
        }
        if self.schedule.eps_delta.len() < 2 {
            return Err(Error::Config("schedule.eps_delta needs at least two levels".into()));
        }
        for (eps, delta) in &self.schedule.eps_delta {
            if !(*eps > 0.0 && *delta > 0.0 && *delta < 1.0) {
                return Err(Error::Config(format!("bad schedule level ({eps}, {delta})")));
            }
        }

        if !(self.maximizer.x_tol >= 0.0
            && self.maximizer.curv_tol >= 0.0
            && self.maximizer.tie_tol >= 0.0)
        {
            return Err(Error::Config("maximizer tolerances must be nonnegative".into()));
        }
        Ok(Instance {
            params,
            waiting,
            claims,
            psi_spec: self.psi.spec.clone(),
            maximizer: self.maximizer.clone(),
            k2,
            grid: self.grid.clone(),
            x_max,
            schedule: self.schedule.eps_delta.clone(),
            sim,
            verify: self.verify.clone(),
            out_dir: self.output.dir.clone(),
        })
    }
}

impl Instance {
    pub fn start_state(&self) -> State {
        State::new(self.sim.start.0, self.sim.start.1, self.sim.start.2)
    }

    pub fn make_grid(&self) -> Result<crate::solver::Grid> {
        crate::solver::Grid::new(
            self.params.horizon,
            self.grid.delta,
            self.grid.eps_n,
            self.x_max,
            self.grid.n_s,
            self.grid.n_x,
            self.grid.n_w,
        )
    }
}

/// The reference configuration shipped with the crate; the verification
/// harness and the acceptance suite run against it.
pub const REFERENCE_CONFIG: &str = r#"# Reference instance
[model]
premium = 1.5
interest = 0.03
drift = 0.08
volatility = 0.3
discount = 0.05
max_dividend = 2.0
horizon = 1.0

[waiting]
kind = "exponential"
rate = 1.0

[claims]
kind = "exponential"
mean = 1.0

[grid]
n_s = 40
n_x = 60
n_w = 40
delta = 0.05
eps_n = 0.05

[schedule]
eps_delta = [[0.1, 0.1], [0.05, 0.05], [0.025, 0.025]]

[sim]
dt = 1e-3
n_paths = 20000
seed = 20240817
start = [0.0, 2.0, 0.0]
"#;

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Instance> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.build(Path::new("."))
    }

    #[test]
    fn reference_config_builds() {
        let inst = parse(REFERENCE_CONFIG).unwrap();
        assert_eq!(inst.params.max_dividend, 2.0);
        assert!((inst.x_max - (2.0 + 5.0 + (1.5 + 0.16))).abs() < 1e-12);
        assert_eq!(inst.schedule.len(), 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = REFERENCE_CONFIG.replace("premium = 1.5", "premium = 1.5\nbogus_key = 1");
        let err = toml::from_str::<RunConfig>(&bad).unwrap_err().to_string();
        assert!(err.contains("bogus_key"), "{err}");
    }

    #[test]
    fn config_errors_carry_line_information() {
        let bad = REFERENCE_CONFIG.replace("rate = 1.0", "rate = \"fast\"");
        let err = toml::from_str::<RunConfig>(&bad).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn zero_paths_rejected() {
        let bad = REFERENCE_CONFIG.replace("n_paths = 20000", "n_paths = 0");
        assert!(parse(&bad).is_err());
    }

    #[test]
    fn start_outside_domain_rejected() {
        let bad = REFERENCE_CONFIG.replace("start = [0.0, 2.0, 0.0]", "start = [0.0, 2.0, 0.5]");
        assert!(parse(&bad).is_err());
    }

    #[test]
    fn point_mass_claims_parse() {
        let text = REFERENCE_CONFIG.replace(
            "[claims]\nkind = \"exponential\"\nmean = 1.0",
            "[claims]\nkind = \"point_mass_zero\"",
        );
        let inst = parse(&text).unwrap();
        assert_eq!(inst.claims, ClaimLaw::point_mass_zero());
    }

    #[test]
    fn constant_policy_selection_parses() {
        let text = REFERENCE_CONFIG.replace(
            "start = [0.0, 2.0, 0.0]",
            "start = [0.0, 2.0, 0.0]\npolicy = { gamma = 0.5, a = 1.5 }",
        );
        let inst = parse(&text).unwrap();
        match inst.sim.policy {
            PolicySelection::Constant { gamma, a } => {
                assert_eq!(gamma, 0.5);
                assert_eq!(a, 1.5);
            }
            _ => panic!("expected constant policy"),
        }
    }

    #[test]
    fn maximizer_tolerances_configurable() {
        let text = REFERENCE_CONFIG.replace(
            "[waiting]",
            "[maximizer]\nx_tol = 1e-8\ncurv_tol = 1e-8\ntie_tol = 0.0\n\n[waiting]",
        );
        let inst = parse(&text).unwrap();
        assert_eq!(inst.maximizer.tie_tol, 0.0);
        assert_eq!(inst.maximizer.x_tol, 1e-8);
        let bad = text.replace("tie_tol = 0.0", "tie_tol = -1.0");
        assert!(parse(&bad).is_err());
    }

    #[test]
    fn tabulated_waiting_must_cover_collar() {
        let text = REFERENCE_CONFIG.replace(
            "[waiting]\nkind = \"exponential\"\nrate = 1.0",
            "[waiting]\nkind = \"tabulated\"\nnodes = [0.0, 1.0]\nvalues = [1.0, 2.0]",
        );
        assert!(parse(&text).is_err());
        let ok = REFERENCE_CONFIG.replace(
            "[waiting]\nkind = \"exponential\"\nrate = 1.0",
            "[waiting]\nkind = \"tabulated\"\nnodes = [0.0, 2.0]\nvalues = [1.0, 2.0]",
        );
        assert!(parse(&ok).is_ok());
    }
}
