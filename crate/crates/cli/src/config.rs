//! Experiment configuration: one TOML file per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use staticnoise::generator::TimeGrid;
use staticnoise::models::{BoseHubbardModel, LatticeModel, ModelBundle, QubitModel};
use staticnoise::ode::Stepper;
use staticnoise::rates::GammaMode;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MasterEquation,
    MonteCarlo,
    Both,
}

impl Method {
    pub fn master_equation(self) -> bool {
        matches!(self, Method::MasterEquation | Method::Both)
    }

    pub fn monte_carlo(self) -> bool {
        matches!(self, Method::MonteCarlo | Method::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Qubit(QubitModel),
    Lattice(LatticeModel),
    BoseHubbard(BoseHubbardModel),
}

impl ModelConfig {
    pub fn build(&self) -> staticnoise::Result<ModelBundle> {
        match self {
            ModelConfig::Qubit(m) => m.build(),
            ModelConfig::Lattice(m) => m.build(),
            ModelConfig::BoseHubbard(m) => m.build(),
        }
    }

    /// `(t_max, dt)` used when the config has no `[time]` section.
    pub fn default_grid(&self) -> (f64, f64) {
        match self {
            ModelConfig::Qubit(_) => (5.0, 0.01),
            ModelConfig::Lattice(_) => (4.0, 0.01),
            ModelConfig::BoseHubbard(_) => (30.0, 0.02),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_max: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Coherence,
    Purity,
    /// Root fidelity between the two methods; needs `method = "both"`.
    Fidelity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// One-based `(j, k)` pairs of `ρ̄_jk` written to the trajectory CSV.
    #[serde(default = "default_elements")]
    pub elements: Vec<[usize; 2]>,
    /// Defaults to every observable the method can produce.
    pub observables: Option<Vec<Observable>>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: None, elements: default_elements(), observables: None }
    }
}

fn default_elements() -> Vec<[usize; 2]> {
    vec![[1, 2]]
}

fn default_observables(method: Method) -> Vec<Observable> {
    let mut obs = vec![Observable::Coherence, Observable::Purity];
    if method == Method::Both {
        obs.push(Observable::Fidelity);
    }
    obs
}

fn default_seed() -> u64 {
    1
}

/// As written by the user; optional fields fall back to model defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub method: Method,
    pub gamma_mode: Option<GammaMode>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub n_real: Option<usize>,
    pub model: ModelConfig,
    pub time: Option<TimeConfig>,
    pub solver: Option<Stepper>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Config with every default filled in; echoed into the run metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub name: String,
    pub method: Method,
    pub gamma_mode: GammaMode,
    pub seed: u64,
    pub n_real: Option<usize>,
    pub model: ModelConfig,
    pub time: TimeConfig,
    pub solver: Stepper,
    pub output: OutputConfig,
}

pub struct Prepared {
    pub config: ResolvedConfig,
    pub bundle: ModelBundle,
    pub grid: TimeGrid,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Checks invariants, builds the model and fills defaults.
    pub fn prepare(self) -> Result<Prepared, CliError> {
        let bundle = self.model.build()?;
        let (t_max, dt) = self.model.default_grid();
        let time = self.time.unwrap_or(TimeConfig { t_max, dt });
        let solver = self.solver.unwrap_or_default();
        let grid = TimeGrid::uniform(time.t_max, time.dt, solver)?;
        if self.method.monte_carlo() {
            match self.n_real {
                None => return Err(CliError::Config("method with Monte Carlo requires `n_real`".into())),
                Some(0) => return Err(CliError::Config("`n_real` must be positive".into())),
                Some(_) => {}
            }
        }
        let d = bundle.ensemble.dim();
        for &[j, k] in &self.output.elements {
            if j == 0 || k == 0 || j > d || k > d {
                return Err(CliError::Config(format!("element ({j}, {k}) outside 1..={d}")));
            }
        }
        let mut output = self.output;
        let observables = output.observables.take().unwrap_or_else(|| default_observables(self.method));
        if observables.contains(&Observable::Fidelity) && self.method != Method::Both {
            return Err(CliError::Config("observable `fidelity` requires method = \"both\"".into()));
        }
        output.observables = Some(observables);
        let config = ResolvedConfig {
            gamma_mode: self.gamma_mode.unwrap_or(bundle.gamma_mode),
            name: self.name,
            method: self.method,
            seed: self.seed,
            n_real: self.n_real,
            model: self.model,
            time,
            solver,
            output,
        };
        Ok(Prepared { config, bundle, grid })
    }
}

pub struct Bundled {
    pub name: &'static str,
    pub summary: &'static str,
    pub text: &'static str,
}

pub const BUNDLED: &[Bundled] = &[
    Bundled { name: "qubit", summary: "noisy qubit, ME and MC coherence", text: include_str!("../configs/qubit.toml") },
    Bundled {
        name: "lattice_x0",
        summary: "tilted lattice, uniform coupling",
        text: include_str!("../configs/lattice_x0.toml"),
    },
    Bundled {
        name: "lattice_x1",
        summary: "tilted lattice, 1/|j-k| coupling",
        text: include_str!("../configs/lattice_x1.toml"),
    },
    Bundled {
        name: "lattice_x3",
        summary: "tilted lattice, 1/|j-k|^3 coupling",
        text: include_str!("../configs/lattice_x3.toml"),
    },
    Bundled {
        name: "lattice_nn",
        summary: "tilted lattice, nearest-neighbour coupling",
        text: include_str!("../configs/lattice_nn.toml"),
    },
    Bundled {
        name: "lattice_none",
        summary: "tilted lattice, no coupling",
        text: include_str!("../configs/lattice_none.toml"),
    },
    Bundled {
        name: "lattice_x0_mc",
        summary: "tilted lattice, uniform coupling, ME against MC",
        text: include_str!("../configs/lattice_x0_mc.toml"),
    },
    Bundled {
        name: "lattice_x1_mc",
        summary: "tilted lattice, 1/|j-k| coupling, ME against MC",
        text: include_str!("../configs/lattice_x1_mc.toml"),
    },
    Bundled {
        name: "bosons",
        summary: "Bose-Hubbard double well, three bosons",
        text: include_str!("../configs/bosons.toml"),
    },
];

pub fn bundled(name: &str) -> Result<&'static Bundled, CliError> {
    BUNDLED.iter().find(|b| b.name == name).ok_or_else(|| CliError::Config(format!("no bundled config named `{name}`")))
}
