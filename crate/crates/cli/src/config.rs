use std::path::{Path, PathBuf};

use conjpair::fields::{Axis, DEFAULT_BOUND};
use conjpair::verify::ConvergenceCase;
use conjpair::{Domain, GammaSpec, SolverConfig, WSpec};
use serde::Deserialize;

use crate::CliError;

/// One run, parsed from TOML. Unknown keys anywhere are rejected.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `cube` or `ball`; required by every command that builds a mesh.
    pub domain: Option<Domain>,
    #[serde(default = "default_level")]
    pub level: usize,
    /// Seed of the perturbation in the default starting vector.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output directory, relative to the config file.
    pub out: Option<PathBuf>,
    #[serde(default = "default_w")]
    pub w: WSpec,
    #[serde(default = "default_gamma")]
    pub gamma: GammaSpec,
    #[serde(default = "default_bound")]
    pub gamma_bound: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub v0: V0Spec,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub dtn: DtnSection,
    #[serde(default)]
    pub convergence: ConvergenceSection,
    pub check_cr: Option<CheckCrSection>,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_level() -> usize {
    4
}

fn default_seed() -> u64 {
    42
}

fn default_w() -> WSpec {
    WSpec::Coordinate {
        axis: Axis::X3,
        offset: 0.0,
    }
}

fn default_gamma() -> GammaSpec {
    GammaSpec::Constant { value: 1.0 }
}

fn default_bound() -> f64 {
    DEFAULT_BOUND
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum V0Spec {
    /// Nodal `x₂` plus a seeded perturbation.
    #[default]
    PerturbedX2,
    /// The field `w` itself, which never couples; exercises the restart path.
    SameAsW,
    Field {
        field: WSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// VTK file with point scalars for `u`, `v` and optionally `w`.
    pub fields: Option<PathBuf>,
    pub u_name: String,
    pub v_name: String,
    /// When the file lacks this array, `w` is sampled from the `w` spec.
    pub w_name: String,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            fields: None,
            u_name: "u".into(),
            v_name: "v".into(),
            w_name: "w".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedGamma {
    pub name: String,
    pub gamma: GammaSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedW {
    pub name: String,
    pub w: WSpec,
}

/// Empty lists fall back to the top-level `gamma` and `w`.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtnSection {
    pub gammas: Vec<NamedGamma>,
    pub ws: Vec<NamedW>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    pub case: ConvergenceCase,
    pub levels: Vec<usize>,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            case: ConvergenceCase::QuadraticPair,
            levels: vec![4, 8, 16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckCrSection {
    /// Row-major.
    pub matrix: [[f64; 3]; 3],
    pub alpha: [f64; 3],
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::parse(&text, &base)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.level == 0 {
            return Err(CliError::Config("level must be at least 1".into()));
        }
        if !(self.gamma_bound > 0.0 && self.gamma_bound <= 1.0) {
            return Err(CliError::Config("gamma_bound must lie in (0, 1]".into()));
        }
        self.solver
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let ok_name = |s: &str| {
            !s.is_empty()
                && s.chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        };
        for n in self
            .dtn
            .gammas
            .iter()
            .map(|g| &g.name)
            .chain(self.dtn.ws.iter().map(|w| &w.name))
        {
            if !ok_name(n) {
                return Err(CliError::Config(format!(
                    "name {n:?} must be non-empty ASCII letters, digits, '_' or '-'"
                )));
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<Domain, CliError> {
        self.domain
            .ok_or_else(|| CliError::Config("missing required key `domain`".into()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}
