use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shepard_hjb::experiments::{DynamicsMeshSpec, FeedbackCostSpec, PdeSpec, RandomMeshSpec, TunerChoice};
use shepard_hjb::feedback::Noise;
use shepard_hjb::problems::{
    advection_problem, heat_problem, AdvectionParams, ControlProblem, Eikonal, HeatParams, StateSpec,
    DEFAULT_TARGET_RADIUS,
};
use shepard_hjb::tuner::ParameterRange;
use shepard_hjb::MeshRecipe;

use crate::exit::CliError;

pub const ENV_OUT: &str = "SHEPARD_HJB_OUT";
pub const ENV_THREADS: &str = "SHEPARD_HJB_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub repeats: usize,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub mesh: Option<MeshRecipe>,
    /// Existing mesh CSV used when no recipe is given.
    #[serde(default)]
    pub mesh_file: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub tuner: Option<TunerBlock>,
    #[serde(default)]
    pub simulate: Option<SimulateBlock>,
    #[serde(default)]
    pub table: TableBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    Eikonal {
        #[serde(default = "sixteen")]
        controls: usize,
        #[serde(default = "target_radius")]
        target_radius: f64,
    },
    Heat {
        #[serde(default)]
        params: HeatParams,
    },
    Advection {
        #[serde(default)]
        params: AdvectionParams,
    },
}

fn sixteen() -> usize {
    16
}

fn target_radius() -> f64 {
    DEFAULT_TARGET_RADIUS
}

impl ProblemConfig {
    pub fn build(&self) -> Result<Box<dyn ControlProblem>, CliError> {
        Ok(match self {
            ProblemConfig::Eikonal {
                controls,
                target_radius,
            } => {
                if *controls == 0 || !(*target_radius >= 0.0) {
                    return Err(CliError::Input("eikonal needs controls >= 1 and a non-negative target radius".into()));
                }
                Box::new(Eikonal::new(*controls, *target_radius))
            }
            ProblemConfig::Heat { params } => Box::new(heat_problem(params)?),
            ProblemConfig::Advection { params } => Box::new(advection_problem(params)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    /// Time step; the estimated fill distance when absent.
    pub dt: Option<f64>,
    pub vi_tolerance: Option<f64>,
    pub max_sweeps: Option<usize>,
    pub pin_target: Option<bool>,
    /// Samples for the fill-distance estimate.
    pub fill_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunerBlock {
    pub range: ParameterRange,
    #[serde(default)]
    pub method: TunerChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub starts: Vec<StateSpec>,
    /// Final time; long enough for a 1% discount tail when absent.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Simulation step; the solve step when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub noise: Option<Noise>,
    /// Equispaced feedback controls over the problem's control range.
    #[serde(default)]
    pub feedback_controls: Option<usize>,
    #[serde(default)]
    pub uncontrolled: bool,
    /// Step indices whose full state is written out.
    #[serde(default)]
    pub snapshots: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TableBlock {
    /// Node counts of the random-mesh table; one row each.
    pub example1_sizes: Option<Vec<usize>>,
    pub example1: Option<RandomMeshSpec>,
    /// One dynamics recipe per row.
    pub example2: Option<Vec<DynamicsMeshSpec>>,
    pub example2_gradient: Option<Vec<DynamicsMeshSpec>>,
    pub feedback_costs: Option<FeedbackCostSpec>,
    pub pde: Option<PdeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))?;
        if cfg.repeats == 0 {
            return Err(CliError::Input("repeats must be at least 1".into()));
        }
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical JSON form. The output directory is left
    /// out so relocated reruns hash alike.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }
}

/// Flag, then environment, then config, then `out`.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(ENV_OUT).map(PathBuf::from))
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(ENV_THREADS) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::Input(format!("{ENV_THREADS}={v:?} is not a thread count"))),
        Err(_) => Ok(None),
    }
}
