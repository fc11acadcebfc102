//! Experiment configuration (TOML) and named presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::conditional::FcfWeight;
use crate::epidemic::{SeirsParams, SisParams, SubpopParams, TestObsParams};
use crate::factored::{DEFAULT_PROJECTION_SAMPLES, DEFAULT_SOLVER_EPS};
use crate::filter::{JitterSchedule, Resampling};
use crate::lorenz::LorenzParams;

/// Where the contact network comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSource {
    /// Whitespace-separated edge list.
    EdgeList { path: PathBuf },
    /// Manifest of edge-list snapshots with their start steps.
    Dynamic { manifest: PathBuf },
    /// Seeded preferential-attachment graph.
    Synthetic { nodes: usize, m: usize, seed: u64 },
    /// Zachary's karate club (34 nodes), bundled.
    Karate,
}

/// State model, true parameters and observation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// SEIRS labels with testing observations.
    Seirs {
        params: SeirsParams,
        obs: TestObsParams,
    },
    /// SIS labels with testing observations; filtering starts once more
    /// than `threshold` positive tests are seen in one step.
    Sis {
        params: SisParams,
        obs: TestObsParams,
        threshold: usize,
    },
    /// Simplex-labelled SEIRS with Dir(K·) transitions and Dir(C·)
    /// observations present with probability `alpha`.
    SeirsDirichlet {
        params: SeirsParams,
        k: f64,
        c: f64,
        alpha: f64,
    },
    /// Subpopulation network of `subpop_size` individuals per node with
    /// counts of `m` tests present with probability `alpha`.
    Subpop {
        params: SeirsParams,
        sub: SubpopParams,
        subpop_size: u32,
        m: u32,
        alpha: f64,
    },
    /// Stochastic Lorenz system observed every `obs_stride` steps.
    Lorenz { params: LorenzParams },
}

impl ModelSpec {
    /// Names of the unknown parameters, in particle-vector order.
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            ModelSpec::Seirs { .. }
            | ModelSpec::SeirsDirichlet { .. }
            | ModelSpec::Subpop { .. } => &["beta", "sigma", "gamma", "rho"],
            ModelSpec::Sis { .. } => &["beta", "gamma"],
            ModelSpec::Lorenz { .. } => &["theta1", "theta2", "theta3", "theta4"],
        }
    }

    /// True parameter vector.
    pub fn true_params(&self) -> Vec<f64> {
        match self {
            ModelSpec::Seirs { params, .. }
            | ModelSpec::SeirsDirichlet { params, .. }
            | ModelSpec::Subpop { params, .. } => params.to_array().to_vec(),
            ModelSpec::Sis { params, .. } => vec![params.beta, params.gamma],
            ModelSpec::Lorenz { params } => params.theta.to_vec(),
        }
    }
}

fn default_clusters() -> Option<Vec<Vec<usize>>> {
    None
}

fn default_samples() -> usize {
    DEFAULT_PROJECTION_SAMPLES
}

fn default_eps() -> f64 {
    DEFAULT_SOLVER_EPS
}

/// Filter selection. `clusters` defaults to singletons (fully factored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterSpec {
    /// Exact joint filter (small L only).
    Exact,
    /// Bootstrap particle filter on the joint labels.
    Particle { n: usize },
    /// Exact factored filter; closed form when fully factored SEIRS.
    Factored {
        #[serde(default = "default_clusters")]
        clusters: Option<Vec<Vec<usize>>>,
    },
    /// Factored particle filter with `n` particles per cluster.
    FactoredParticle {
        n: usize,
        #[serde(default = "default_clusters")]
        clusters: Option<Vec<Vec<usize>>>,
    },
    /// Fully factored Dirichlet variational filter.
    FactoredVariational {
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    /// Fully factored conditional filter with `n` parameter particles.
    FactoredConditional {
        n: usize,
        jitter: JitterSchedule,
        weight: FcfWeight,
    },
    /// Factored conditional particle filter: `n` parameter particles with
    /// `m` state particles per cluster; weights use `weight_samples` draws.
    FactoredConditionalParticle {
        n: usize,
        m: usize,
        jitter: JitterSchedule,
        weight_samples: usize,
        #[serde(default = "default_clusters")]
        clusters: Option<Vec<Vec<usize>>>,
    },
    /// Factored conditional variational filter (subpopulation counts).
    FactoredConditionalVariational { n: usize, jitter: JitterSchedule },
    /// Conditional particle filter: `n` parameter particles with `m` joint
    /// state particles each.
    ConditionalParticle {
        n: usize,
        m: usize,
        jitter: JitterSchedule,
        weight_samples: usize,
    },
}

fn default_max_attempts() -> usize {
    50
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub runs: usize,
    pub steps: usize,
    /// Re-draw seeds for runs whose epidemic dies out (or, for SIS, never
    /// crosses the start threshold).
    #[serde(default)]
    pub die_out_filter: bool,
    /// Seeds tried per run before it is reported as not surviving.
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
    #[serde(default)]
    pub resampling: Resampling,
    /// Contact network; required by every epidemic model.
    #[serde(default)]
    pub network: Option<NetworkSource>,
    pub model: ModelSpec,
    pub filter: FilterSpec,
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(s).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| bad(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.runs == 0 || self.steps == 0 || self.max_attempts == 0 {
            return Err(bad("runs, steps and max_attempts must be at least 1"));
        }
        if self.network.is_none() && !matches!(self.model, ModelSpec::Lorenz { .. }) {
            return Err(bad("epidemic models need a [network] table"));
        }
        let dim = self.model.param_names().len();
        let check_jitter = |j: &JitterSchedule| {
            if j.diag.len() != dim
                || j.diag.iter().any(|v| !(*v >= 0.0))
                || !(j.b >= 0.0)
                || !(j.a >= 0.0)
            {
                return Err(bad(format!(
                    "jitter needs {dim} nonnegative diagonal entries and a, b >= 0"
                )));
            }
            Ok(())
        };
        let counts = |xs: &[usize]| {
            if xs.contains(&0) {
                return Err(bad("particle and sample counts must be at least 1"));
            }
            Ok(())
        };
        use FilterSpec as F;
        use ModelSpec as M;
        match (&self.model, &self.filter) {
            (M::Seirs { .. } | M::Sis { .. }, F::Exact | F::Factored { .. }) => Ok(()),
            (
                M::Seirs { .. } | M::Sis { .. },
                F::Particle { n } | F::FactoredParticle { n, .. },
            ) => counts(&[*n]),
            (M::SeirsDirichlet { .. }, F::FactoredVariational { samples, eps }) => {
                counts(&[*samples])?;
                if !(*eps > 0.0) {
                    return Err(bad("eps must be positive"));
                }
                Ok(())
            }
            (M::Seirs { .. }, F::FactoredConditional { n, jitter, weight }) => {
                if let FcfWeight::MonteCarlo { samples } = weight {
                    counts(&[*samples])?;
                }
                counts(&[*n])?;
                check_jitter(jitter)
            }
            (
                M::Seirs { .. } | M::Sis { .. },
                F::FactoredConditionalParticle {
                    n,
                    m,
                    jitter,
                    weight_samples,
                    ..
                },
            )
            | (
                M::Seirs { .. } | M::Sis { .. } | M::Lorenz { .. },
                F::ConditionalParticle {
                    n,
                    m,
                    jitter,
                    weight_samples,
                },
            ) => {
                counts(&[*n, *m, *weight_samples])?;
                check_jitter(jitter)
            }
            (M::Subpop { .. }, F::FactoredConditionalVariational { n, jitter }) => {
                counts(&[*n])?;
                check_jitter(jitter)
            }
            (m, f) => Err(bad(format!(
                "filter {} cannot run model {}",
                kind_name(f),
                model_name(m)
            ))),
        }
    }
}

fn kind_name(f: &FilterSpec) -> &'static str {
    match f {
        FilterSpec::Exact => "exact",
        FilterSpec::Particle { .. } => "particle",
        FilterSpec::Factored { .. } => "factored",
        FilterSpec::FactoredParticle { .. } => "factored_particle",
        FilterSpec::FactoredVariational { .. } => "factored_variational",
        FilterSpec::FactoredConditional { .. } => "factored_conditional",
        FilterSpec::FactoredConditionalParticle { .. } => "factored_conditional_particle",
        FilterSpec::FactoredConditionalVariational { .. } => "factored_conditional_variational",
        FilterSpec::ConditionalParticle { .. } => "conditional_particle",
    }
}

fn model_name(m: &ModelSpec) -> &'static str {
    match m {
        ModelSpec::Seirs { .. } => "seirs",
        ModelSpec::Sis { .. } => "sis",
        ModelSpec::SeirsDirichlet { .. } => "seirs_dirichlet",
        ModelSpec::Subpop { .. } => "subpop",
        ModelSpec::Lorenz { .. } => "lorenz",
    }
}

/// Names accepted by [`preset`].
pub const PRESET_NAMES: &[&str] = &[
    "seirs-covid",
    "seirs-flu",
    "seirs-dirichlet",
    "subpop",
    "lorenz-baseline",
    "lorenz-adaptive",
    "sis-karate",
];

/// Node count of the flight-network-sized synthetic graph.
pub const DESK_NETWORK_NODES: usize = 2905;

fn desk_network() -> NetworkSource {
    NetworkSource::Synthetic {
        nodes: DESK_NETWORK_NODES,
        m: 5,
        seed: 2905,
    }
}

/// Epidemic jitter max(1e-4·0.996ⁿ, 9e-6) · diag(1, 1, 1, 0.09).
pub fn seirs_jitter() -> JitterSchedule {
    JitterSchedule::adaptive(1e-4, 9e-6, 0.996, vec![1.0, 1.0, 1.0, 0.09])
}

/// Lorenz base covariance N^{-3/2} diag(60, 60, 10, 1).
pub fn lorenz_base_diag(n: usize) -> Vec<f64> {
    let s = (n as f64).powf(-1.5);
    [60.0, 60.0, 10.0, 1.0].iter().map(|d| d * s).collect()
}

/// A named experiment setup.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let base = |name: &str, runs, steps, network, model, filter| ExperimentConfig {
        name: name.to_string(),
        seed: 1,
        runs,
        steps,
        die_out_filter: true,
        max_attempts: default_max_attempts(),
        resampling: Resampling::Multinomial,
        network: Some(network),
        model,
        filter,
    };
    let cfg = match name {
        "seirs-covid" => base(
            name,
            100,
            600,
            desk_network(),
            ModelSpec::Seirs {
                params: SeirsParams::covid(),
                obs: TestObsParams::setup(0.1, 0.1),
            },
            FilterSpec::Factored { clusters: None },
        ),
        "seirs-flu" => base(
            name,
            20,
            600,
            desk_network(),
            ModelSpec::Seirs {
                params: SeirsParams::flu(),
                obs: TestObsParams::setup(0.1, 0.3),
            },
            FilterSpec::FactoredConditional {
                n: 300,
                jitter: seirs_jitter(),
                weight: FcfWeight::Factored,
            },
        ),
        "seirs-dirichlet" => base(
            name,
            10,
            600,
            desk_network(),
            ModelSpec::SeirsDirichlet {
                params: SeirsParams::covid(),
                k: 10.0,
                c: 10.0,
                alpha: 0.5,
            },
            FilterSpec::FactoredVariational {
                samples: DEFAULT_PROJECTION_SAMPLES,
                eps: DEFAULT_SOLVER_EPS,
            },
        ),
        "subpop" => base(
            name,
            10,
            600,
            desk_network(),
            ModelSpec::Subpop {
                params: SeirsParams::covid(),
                sub: SubpopParams {
                    kappa1: 0.2,
                    kappa2: 0.1,
                    k: 3.0,
                },
                subpop_size: 10,
                m: 5,
                alpha: 0.7,
            },
            FilterSpec::FactoredConditionalVariational {
                n: 300,
                jitter: seirs_jitter(),
            },
        ),
        "lorenz-baseline" | "lorenz-adaptive" => {
            let diag = lorenz_base_diag(300);
            let jitter = if name == "lorenz-baseline" {
                JitterSchedule::constant(diag)
            } else {
                JitterSchedule::adaptive(25.0, 0.01, 0.996, diag)
            };
            let mut c = base(
                name,
                10,
                100_000,
                NetworkSource::Karate,
                ModelSpec::Lorenz {
                    params: LorenzParams::default(),
                },
                FilterSpec::ConditionalParticle {
                    n: 300,
                    m: 300,
                    jitter,
                    weight_samples: 300,
                },
            );
            c.die_out_filter = false;
            c.network = None;
            c
        }
        "sis-karate" => base(
            name,
            20,
            600,
            NetworkSource::Karate,
            ModelSpec::Sis {
                params: SisParams {
                    beta: 0.2,
                    gamma: 0.1,
                },
                obs: TestObsParams::sis(0.1, 0.9, 0.1, 0.1),
                threshold: 3,
            },
            FilterSpec::ConditionalParticle {
                n: 300,
                m: 300,
                jitter: JitterSchedule::adaptive(1e-4, 9e-6, 0.996, vec![1.0, 1.0]),
                weight_samples: 100,
            },
        ),
        _ => return None,
    };
    Some(cfg)
}
