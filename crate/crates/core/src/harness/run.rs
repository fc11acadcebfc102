//! Experiment driver: simulate the ground truth and run the selected filter
//! in lockstep, recording error series.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, FilterSpec, ModelSpec, NetworkSource};
use super::init::{
    initial_belief_seirs, sis_initialization, uniform_params, LORENZ_PARAM_BOX, SEIRS_PARAM_BOX,
    SIS_PARAM_BOX, SIS_PRIOR,
};
use super::metrics::{
    lorenz_param_error, lorenz_state_error, param_error_and_estimate, state_error_categorical,
    state_error_categorical_mixture, state_error_dirichlet, state_error_particles,
};
use super::HarnessError;
use crate::conditional::{
    factored_conditional_particle_step, factored_nested_ln_weight, fcf_step, fcvf_step, FcfModel,
    NodeBeliefs,
};
use crate::epidemic::{
    population_properties, simulate_epidemic_with, Compartment, GlobalState, LabelModel, NodeObs,
    ObsSpaceSpec, SeirsParams, SisParams, StateModel, TestObsParams, TestOutcome, Trajectory,
};
use crate::factored::{
    dirichlet_factored_variational_step, factored_filter_step, factored_particle_filter_step,
    label_ln_likelihood, sample_label_transition, seirs_factored_step, DirichletFilterSpec,
    EpidemicNodeModel, FactoredBelief, FactoredParticleFamily, ForwardKl, ProductSpaceModel,
};
use crate::filter::{
    conditional_particle_filter_step, identity_param_step, nested_mc_ln_weight, parameter_pf_step,
    standard_filter_step, standard_particle_filter_step, ConditionalParticleModel, DenseBelief,
    JitterSchedule, ParamDomain, ParamFilterSpec, Resampling,
};
use crate::graph::{
    load_edge_list, load_edge_list_path, preferential_attachment, ContactNetwork, DynamicNetwork,
    Partition,
};
use crate::lorenz::{
    lorenz_obs_ln_density_unchecked, lorenz_transition_sample, simulate_lorenz, LorenzParams,
    LorenzState, Y_STAR,
};
use crate::prob::{normal, stream, tags, Stream, StreamFactory};

const KARATE_EDGES: &str = include_str!("../../../../fixtures/karate.edges");

/// Below this E+I mass on every node a simplex-labelled epidemic counts as extinct.
pub const SIMPLEX_DIE_OUT_MASS: f64 = 1e-4;

/// Static or time-varying contact network.
#[derive(Debug, Clone)]
pub enum Networks {
    Static(ContactNetwork),
    Dynamic(DynamicNetwork),
}

impl Networks {
    pub fn load(src: &NetworkSource) -> Result<Self, HarnessError> {
        Ok(match src {
            NetworkSource::EdgeList { path } => Networks::Static(load_edge_list_path(path)?),
            NetworkSource::Dynamic { manifest } => {
                Networks::Dynamic(DynamicNetwork::load_manifest(manifest)?)
            }
            NetworkSource::Synthetic { nodes, m, seed } => {
                if *m == 0 || nodes <= m {
                    return Err(HarnessError::Config(format!(
                        "synthetic graph needs nodes > m >= 1, got {nodes}, {m}"
                    )));
                }
                Networks::Static(preferential_attachment(*nodes, *m, *seed))
            }
            NetworkSource::Karate => Networks::Static(load_edge_list(KARATE_EDGES.as_bytes())?),
        })
    }

    /// Network in force at step `n`.
    pub fn at(&self, n: usize) -> &ContactNetwork {
        match self {
            Networks::Static(net) => net,
            Networks::Dynamic(d) => d.snapshot_at(n),
        }
    }
}

/// One row of a run's series.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub state_error: f64,
    pub estimates: Vec<f64>,
    pub param_errors: Vec<f64>,
    /// Ground-truth S, E, I, R fractions (zeros for Lorenz).
    pub population: [f64; 4],
    pub wall_secs: f64,
}

/// Outcome of one run after die-out filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run: usize,
    /// Seed of the retained attempt.
    pub seed: u64,
    pub attempts: usize,
    /// False when every attempt died out; `records` is then empty.
    pub survived: bool,
    /// True when the filter never started (SIS threshold not crossed).
    pub inconclusive: bool,
    pub records: Vec<StepRecord>,
}

/// Mean over runs of every series at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRecord {
    pub step: usize,
    pub runs: usize,
    pub state_error: f64,
    pub estimates: Vec<f64>,
    pub param_errors: Vec<f64>,
    pub population: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub param_names: Vec<String>,
    pub runs: Vec<RunResult>,
    pub aggregate: Vec<AggregateRecord>,
}

/// Seed of attempt `attempt` of run `run`.
pub fn derive_seed(seed: u64, run: usize, attempt: usize) -> u64 {
    stream(seed, &[0x5EED, run as u64, attempt as u64]).random()
}

/// Run every configured run (in parallel) and aggregate.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let nets = match &cfg.network {
        Some(src) => Some(prepare_networks(cfg, Networks::load(src)?)?),
        None => None,
    };
    let runs: Vec<RunResult> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| run_single(cfg, nets.as_ref(), r))
        .collect::<Result<_, _>>()?;
    let aggregate = aggregate(&runs);
    Ok(ExperimentOutput {
        config: cfg.clone(),
        param_names: cfg
            .model
            .param_names()
            .iter()
            .map(|s| s.to_string())
            .collect(),
        runs,
        aggregate,
    })
}

/// Run `run_experiment` and write the CSV files into `out`.
pub fn run_and_write(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentOutput, HarnessError> {
    let output = run_experiment(cfg)?;
    super::output::write_experiment(out, &output)?;
    Ok(output)
}

fn prepare_networks(cfg: &ExperimentConfig, nets: Networks) -> Result<Networks, HarnessError> {
    match (&cfg.model, nets) {
        (ModelSpec::Subpop { subpop_size, .. }, Networks::Static(net)) => {
            let l = net.len();
            Ok(Networks::Static(
                net.with_subpop_sizes(vec![*subpop_size; l])?,
            ))
        }
        (ModelSpec::Subpop { .. }, Networks::Dynamic(_)) => Err(HarnessError::Config(
            "the subpopulation model needs a static network".into(),
        )),
        (_, nets) => Ok(nets),
    }
}

/// One run, re-drawing seeds while the epidemic dies out (when enabled).
pub fn run_single(
    cfg: &ExperimentConfig,
    nets: Option<&Networks>,
    run: usize,
) -> Result<RunResult, HarnessError> {
    if let ModelSpec::Lorenz { params } = &cfg.model {
        let seed = derive_seed(cfg.seed, run, 0);
        let records = run_lorenz(cfg, params, seed)?;
        return Ok(RunResult {
            run,
            seed,
            attempts: 1,
            survived: true,
            inconclusive: false,
            records,
        });
    }
    let nets = nets.ok_or_else(|| HarnessError::Config("epidemic models need a network".into()))?;
    let (sm, obs) = state_model(&cfg.model);
    let mut last_seed = 0;
    let mut inconclusive = false;
    for attempt in 0..cfg.max_attempts {
        let seed = derive_seed(cfg.seed, run, attempt);
        last_seed = seed;
        let f = StreamFactory::new(seed);
        let traj = simulate_epidemic_with(&sm, &obs, |n| nets.at(n), cfg.steps, &f)?;
        if cfg.die_out_filter && died_out(&traj) {
            log::debug!("run {run} attempt {attempt}: epidemic died out");
            continue;
        }
        match filter_epidemic(cfg, nets, &traj, &f)? {
            Some(records) => {
                return Ok(RunResult {
                    run,
                    seed,
                    attempts: attempt + 1,
                    survived: true,
                    inconclusive: false,
                    records,
                });
            }
            None if cfg.die_out_filter => inconclusive = true,
            None => {
                return Ok(RunResult {
                    run,
                    seed,
                    attempts: attempt + 1,
                    survived: true,
                    inconclusive: true,
                    records: vec![],
                });
            }
        }
    }
    log::warn!(
        "run {run}: no surviving epidemic in {} attempts",
        cfg.max_attempts
    );
    Ok(RunResult {
        run,
        seed: last_seed,
        attempts: cfg.max_attempts,
        survived: false,
        inconclusive,
        records: vec![],
    })
}

/// A simulated trajectory of either system.
#[derive(Debug, Clone)]
pub enum GroundTruth {
    Epidemic(Trajectory),
    Lorenz(crate::lorenz::LorenzTrajectory),
}

/// Simulate the configured model once from `seed` without filtering.
pub fn simulate_ground_truth(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<GroundTruth, HarnessError> {
    cfg.validate()?;
    let f = StreamFactory::new(seed);
    if let ModelSpec::Lorenz { params } = &cfg.model {
        return Ok(GroundTruth::Lorenz(simulate_lorenz(params, cfg.steps, &f)));
    }
    let src = cfg
        .network
        .as_ref()
        .ok_or_else(|| HarnessError::Config("epidemic models need a network".into()))?;
    let nets = prepare_networks(cfg, Networks::load(src)?)?;
    let (sm, obs) = state_model(&cfg.model);
    Ok(GroundTruth::Epidemic(simulate_epidemic_with(
        &sm,
        &obs,
        |n| nets.at(n),
        cfg.steps,
        &f,
    )?))
}

fn state_model(m: &ModelSpec) -> (StateModel, ObsSpaceSpec) {
    match *m {
        ModelSpec::Seirs { params, obs } => (
            StateModel::Labels(LabelModel::Seirs(params)),
            ObsSpaceSpec::Test3(obs),
        ),
        ModelSpec::Sis { params, obs, .. } => (
            StateModel::Labels(LabelModel::Sis(params)),
            ObsSpaceSpec::Test3(obs),
        ),
        ModelSpec::SeirsDirichlet {
            params,
            k,
            c,
            alpha,
        } => (
            StateModel::Dirichlet { params, k },
            ObsSpaceSpec::SimplexDir { c, alpha },
        ),
        ModelSpec::Subpop {
            params,
            sub,
            m,
            alpha,
            ..
        } => (
            StateModel::Subpop { params, sub },
            ObsSpaceSpec::Counts { m, alpha },
        ),
        ModelSpec::Lorenz { .. } => unreachable!("Lorenz runs do not simulate epidemics"),
    }
}

/// True when some state has no E or I mass left.
pub fn died_out(traj: &Trajectory) -> bool {
    traj.states.iter().any(|s| match s {
        GlobalState::Labels(v) => v
            .iter()
            .all(|c| !matches!(c, Compartment::E | Compartment::I)),
        GlobalState::Simplex(v) => v.iter().all(|y| y[1] + y[2] < SIMPLEX_DIE_OUT_MASS),
    })
}

fn outcomes(row: &[NodeObs]) -> Result<Vec<TestOutcome>, HarnessError> {
    row.iter()
        .map(|o| match o {
            NodeObs::Test(t) => Ok(*t),
            other => Err(HarnessError::Config(format!(
                "expected a test outcome, got {other:?}"
            ))),
        })
        .collect()
}

fn truth_labels(traj: &Trajectory, n: usize, lm: &LabelModel) -> Vec<usize> {
    traj.states[n]
        .labels()
        .expect("label model")
        .iter()
        .map(|&c| lm.label_index(c))
        .collect()
}

fn label_model_at(m: &ModelSpec, x: &[f64]) -> LabelModel {
    match m {
        ModelSpec::Sis { .. } => LabelModel::Sis(SisParams {
            beta: x[0],
            gamma: x[1],
        }),
        _ => LabelModel::Seirs(SeirsParams::from_array(x)),
    }
}

fn param_box(m: &ModelSpec) -> (Vec<f64>, Vec<f64>) {
    match m {
        ModelSpec::Sis { .. } => (SIS_PARAM_BOX.0.to_vec(), SIS_PARAM_BOX.1.to_vec()),
        ModelSpec::Lorenz { .. } => (LORENZ_PARAM_BOX.0.to_vec(), LORENZ_PARAM_BOX.1.to_vec()),
        _ => (SEIRS_PARAM_BOX.0.to_vec(), SEIRS_PARAM_BOX.1.to_vec()),
    }
}

fn param_spec(
    cfg: &ExperimentConfig,
    jitter: &JitterSchedule,
    domain: ParamDomain,
) -> ParamFilterSpec {
    ParamFilterSpec {
        schedule: jitter.clone(),
        domain,
        scheme: cfg.resampling,
    }
}

/// Pointer-distinct payloads with their multiplicities, in first-seen order.
fn distinct<T>(payloads: &[Arc<T>]) -> Vec<(&T, usize)> {
    let mut out: Vec<(&T, usize)> = Vec::new();
    let mut seen: BTreeMap<*const T, usize> = BTreeMap::new();
    for p in payloads {
        let key = Arc::as_ptr(p);
        match seen.get(&key) {
            Some(&i) => out[i].1 += 1,
            None => {
                seen.insert(key, out.len());
                out.push((p.as_ref(), 1));
            }
        }
    }
    out
}

/// Records the per-step series of one run.
struct Recorder<'a> {
    truth_params: Vec<f64>,
    pops: Vec<[f64; 4]>,
    records: Vec<StepRecord>,
    lorenz: bool,
    _cfg: &'a ExperimentConfig,
}

impl<'a> Recorder<'a> {
    fn new(cfg: &'a ExperimentConfig, pops: Vec<[f64; 4]>) -> Self {
        Self {
            truth_params: cfg.model.true_params(),
            pops,
            records: Vec::with_capacity(cfg.steps),
            lorenz: matches!(cfg.model, ModelSpec::Lorenz { .. }),
            _cfg: cfg,
        }
    }

    fn push(
        &mut self,
        step: usize,
        state_error: f64,
        params: Option<&[Vec<f64>]>,
        t0: Instant,
    ) -> Result<(), HarnessError> {
        let (estimates, param_errors) = match params {
            None => (vec![], vec![]),
            Some(ps) => {
                let pairs = if self.lorenz {
                    lorenz_param_error(ps, &self.truth_params)?
                } else {
                    param_error_and_estimate(ps, &self.truth_params)?
                };
                pairs.into_iter().unzip()
            }
        };
        self.records.push(StepRecord {
            step,
            state_error,
            estimates,
            param_errors,
            population: self.pops.get(step).copied().unwrap_or([0.0; 4]),
            wall_secs: t0.elapsed().as_secs_f64(),
        });
        Ok(())
    }
}

/// Start step and per-node label beliefs for label models.
fn label_start(
    m: &ModelSpec,
    traj: &Trajectory,
    net0: &ContactNetwork,
) -> Option<(usize, Vec<Vec<f64>>)> {
    match m {
        ModelSpec::Sis { obs, threshold, .. } => {
            let (n, b) = sis_initialization(&traj.obs, *threshold, SIS_PRIOR, obs)?;
            Some((n, b.into_iter().map(|v| v.to_vec()).collect()))
        }
        _ => Some((
            0,
            initial_belief_seirs(net0, traj.patient_zero)
                .into_iter()
                .map(|v| v.to_vec())
                .collect(),
        )),
    }
}

fn test_obs_params(m: &ModelSpec) -> TestObsParams {
    match m {
        ModelSpec::Seirs { obs, .. } | ModelSpec::Sis { obs, .. } => *obs,
        _ => unreachable!("only label models use the testing observations"),
    }
}

fn true_label_model(m: &ModelSpec) -> LabelModel {
    label_model_at(m, &m.true_params())
}

fn partition_or_singletons(
    clusters: &Option<Vec<Vec<usize>>>,
    l: usize,
) -> Result<Partition, HarnessError> {
    match clusters {
        None => Ok(Partition::singleton(l)),
        Some(c) => Partition::new(c.clone(), l).map_err(|e| HarnessError::Config(e.to_string())),
    }
}

/// Run the configured filter against `traj`. `None` means the filter never
/// started (SIS threshold not crossed).
fn filter_epidemic(
    cfg: &ExperimentConfig,
    nets: &Networks,
    traj: &Trajectory,
    f: &StreamFactory,
) -> Result<Option<Vec<StepRecord>>, HarnessError> {
    let mut rec = Recorder::new(cfg, population_properties(traj));
    let model = &cfg.model;
    let l = nets.at(0).len();
    let mut init_rng = f.stream(&[tags::INIT]);
    match &cfg.filter {
        FilterSpec::Exact => {
            let Some((start, marg)) = label_start(model, traj, nets.at(0)) else {
                return Ok(None);
            };
            let lm = true_label_model(model);
            let obs = test_obs_params(model);
            let mut q = FactoredBelief::from_node_marginals(Partition::single_cluster(l), &marg)?;
            for n in start + 1..=cfg.steps {
                let t0 = Instant::now();
                let nm = EpidemicNodeModel {
                    model: lm,
                    obs,
                    net: nets.at(n),
                };
                let ps = ProductSpaceModel::new(&nm)?;
                let o = outcomes(&traj.obs[n])?;
                let post = standard_filter_step(
                    &ps,
                    &DenseBelief {
                        p: std::mem::take(&mut q.beliefs[0]),
                    },
                    Some(&o[..]),
                )?;
                q.beliefs[0] = post.p;
                let err = state_error_categorical(
                    &truth_labels(traj, n, &lm),
                    &q.node_marginals(lm.num_labels()),
                )?;
                rec.push(n, err, None, t0)?;
            }
        }
        FilterSpec::Particle { n: count } => {
            let Some((start, marg)) = label_start(model, traj, nets.at(0)) else {
                return Ok(None);
            };
            let lm = true_label_model(model);
            let obs = test_obs_params(model);
            let mut pf = FactoredParticleFamily::sample_from_marginals(
                Partition::single_cluster(l),
                &marg,
                *count,
                &mut init_rng,
            )
            .families
            .remove(0);
            for n in start + 1..=cfg.steps {
                let t0 = Instant::now();
                let nm = EpidemicNodeModel {
                    model: lm,
                    obs,
                    net: nets.at(n),
                };
                let ps = ProductSpaceModel::for_particles(&nm);
                let o = outcomes(&traj.obs[n])?;
                let mut rng = f.stream(&[tags::STATE_FILTER, n as u64]);
                pf = standard_particle_filter_step(
                    &ps,
                    &pf,
                    Some(&o[..]),
                    cfg.resampling,
                    &mut rng,
                )?;
                rec.push(
                    n,
                    state_error_particles(&truth_labels(traj, n, &lm), &pf)?,
                    None,
                    t0,
                )?;
            }
        }
        FilterSpec::Factored { clusters } => {
            let Some((start, marg)) = label_start(model, traj, nets.at(0)) else {
                return Ok(None);
            };
            let lm = true_label_model(model);
            let obs = test_obs_params(model);
            match (clusters, lm) {
                (None, LabelModel::Seirs(p)) => {
                    let mut q: Vec<[f64; 4]> =
                        marg.iter().map(|v| [v[0], v[1], v[2], v[3]]).collect();
                    for n in start + 1..=cfg.steps {
                        let t0 = Instant::now();
                        let o = outcomes(&traj.obs[n])?;
                        q = seirs_factored_step(&p, &obs, nets.at(n), &q, Some(&o))?.0;
                        rec.push(
                            n,
                            state_error_categorical(&truth_labels(traj, n, &lm), &q)?,
                            None,
                            t0,
                        )?;
                    }
                }
                _ => {
                    let part = partition_or_singletons(clusters, l)?;
                    let mut q = FactoredBelief::from_node_marginals(part, &marg)?;
                    for n in start + 1..=cfg.steps {
                        let t0 = Instant::now();
                        let nm = EpidemicNodeModel {
                            model: lm,
                            obs,
                            net: nets.at(n),
                        };
                        let o = outcomes(&traj.obs[n])?;
                        q = factored_filter_step(&nm, &q, Some(&o[..]))?;
                        let err = state_error_categorical(
                            &truth_labels(traj, n, &lm),
                            &q.node_marginals(lm.num_labels()),
                        )?;
                        rec.push(n, err, None, t0)?;
                    }
                }
            }
        }
        FilterSpec::FactoredParticle { n: count, clusters } => {
            let Some((start, marg)) = label_start(model, traj, nets.at(0)) else {
                return Ok(None);
            };
            let lm = true_label_model(model);
            let obs = test_obs_params(model);
            let part = partition_or_singletons(clusters, l)?;
            let mut fam =
                FactoredParticleFamily::sample_from_marginals(part, &marg, *count, &mut init_rng);
            for n in start + 1..=cfg.steps {
                let t0 = Instant::now();
                let nm = EpidemicNodeModel {
                    model: lm,
                    obs,
                    net: nets.at(n),
                };
                let o = outcomes(&traj.obs[n])?;
                let rng_for = |c: usize| f.stream(&[tags::STATE_FILTER, n as u64, c as u64]);
                fam = factored_particle_filter_step(
                    &nm,
                    &fam,
                    Some(&o[..]),
                    cfg.resampling,
                    rng_for,
                )?
                .0;
                let err = state_error_categorical(
                    &truth_labels(traj, n, &lm),
                    &fam.node_marginals(lm.num_labels()),
                )?;
                rec.push(n, err, None, t0)?;
            }
        }
        FilterSpec::FactoredVariational { samples, eps } => {
            let ModelSpec::SeirsDirichlet { params, k, c, .. } = model else {
                unreachable!("validated")
            };
            let spec = DirichletFilterSpec {
                k: *k,
                c: *c,
                projection: ForwardKl {
                    samples: *samples,
                    eps: *eps,
                },
            };
            let mut a = initial_belief_seirs(nets.at(0), traj.patient_zero);
            for n in 1..=cfg.steps {
                let t0 = Instant::now();
                a = dirichlet_factored_variational_step(
                    params,
                    &spec,
                    nets.at(n),
                    &a,
                    Some(&traj.obs[n]),
                    f,
                    n as u64,
                )?;
                let truth = traj.states[n].simplex().expect("simplex model");
                rec.push(n, state_error_dirichlet(truth, &a)?, None, t0)?;
            }
        }
        FilterSpec::FactoredConditional {
            n: count,
            jitter,
            weight,
        } => {
            let obs = test_obs_params(model);
            let lm = true_label_model(model);
            let (lo, hi) = param_box(model);
            let mut params = uniform_params(*count, &lo, &hi, &mut init_rng);
            let init = Arc::new(initial_belief_seirs(nets.at(0), traj.patient_zero));
            let mut beliefs: Vec<Arc<NodeBeliefs>> = vec![init; *count];
            let spec = param_spec(cfg, jitter, ParamDomain::UnitBox);
            for n in 1..=cfg.steps {
                let t0 = Instant::now();
                let m = FcfModel {
                    obs,
                    net: nets.at(n),
                    weight: *weight,
                };
                let o = outcomes(&traj.obs[n])?;
                let step = fcf_step(&m, &params, &beliefs, &o, &spec, n as u64, f, n as u64)?;
                params = step.params;
                beliefs = step.payloads;
                let truth = truth_labels(traj, n, &lm);
                let mut err = 0.0;
                for (b, mult) in distinct(&beliefs) {
                    err += mult as f64 * state_error_categorical(&truth, b)?;
                }
                rec.push(n, err / beliefs.len() as f64, Some(&params), t0)?;
            }
        }
        FilterSpec::FactoredConditionalParticle {
            n: count,
            m: per_cluster,
            jitter,
            weight_samples,
            clusters,
        } => {
            let Some((start, marg)) = label_start(model, traj, nets.at(0)) else {
                return Ok(None);
            };
            let obs = test_obs_params(model);
            let lm = true_label_model(model);
            let (lo, hi) = param_box(model);
            let part = partition_or_singletons(clusters, l)?;
            let mut params = uniform_params(*count, &lo, &hi, &mut init_rng);
            let mut fams: Vec<FactoredParticleFamily> = (0..*count)
                .map(|_| {
                    FactoredParticleFamily::sample_from_marginals(
                        part.clone(),
                        &marg,
                        *per_cluster,
                        &mut init_rng,
                    )
                })
                .collect();
            let spec = param_spec(cfg, jitter, ParamDomain::UnitBox);
            for n in start + 1..=cfg.steps {
                let t0 = Instant::now();
                let net = nets.at(n);
                let o = outcomes(&traj.obs[n])?;
                let make = |x: &[f64]| EpidemicNodeModel {
                    model: label_model_at(model, x),
                    obs,
                    net,
                };
                let ps =
                    parameter_pf_step(&params, &spec, n as u64, f, n as u64, |_, x, a, rng| {
                        Ok((
                            factored_nested_ln_weight(
                                &make(x),
                                &fams[a],
                                &o[..],
                                *weight_samples,
                                rng,
                            ),
                            (),
                        ))
                    })?;
                fams = factored_conditional_particle_step(
                    make,
                    &ps.params,
                    &ps.lineage,
                    &fams,
                    Some(&o[..]),
                    cfg.resampling,
                    f,
                    n as u64,
                )?;
                params = ps.params;
                let truth = truth_labels(traj, n, &lm);
                let sets: Vec<Vec<Vec<f64>>> = fams
                    .iter()
                    .map(|fm| fm.node_marginals(lm.num_labels()))
                    .collect();
                rec.push(
                    n,
                    state_error_categorical_mixture(&truth, &sets)?,
                    Some(&params),
                    t0,
                )?;
            }
        }
        FilterSpec::FactoredConditionalVariational { n: count, jitter } => {
            let ModelSpec::Subpop { sub, .. } = model else {
                unreachable!("validated")
            };
            let (lo, hi) = param_box(model);
            let mut params = uniform_params(*count, &lo, &hi, &mut init_rng);
            let init = Arc::new(initial_belief_seirs(nets.at(0), traj.patient_zero));
            let mut beliefs: Vec<Arc<NodeBeliefs>> = vec![init; *count];
            let spec = param_spec(cfg, jitter, ParamDomain::UnitBox);
            for n in 1..=cfg.steps {
                let t0 = Instant::now();
                let step = fcvf_step(
                    sub,
                    nets.at(n),
                    &params,
                    &beliefs,
                    &traj.obs[n],
                    &spec,
                    n as u64,
                    f,
                    n as u64,
                )?;
                params = step.params;
                beliefs = step.payloads;
                let truth = traj.states[n].simplex().expect("simplex model");
                let mut err = 0.0;
                for (b, mult) in distinct(&beliefs) {
                    err += mult as f64 * state_error_dirichlet(truth, b)?;
                }
                rec.push(n, err / beliefs.len() as f64, Some(&params), t0)?;
            }
        }
        FilterSpec::ConditionalParticle {
            n: count,
            m: per_param,
            jitter,
            weight_samples,
        } => {
            let Some((start, marg)) = label_start(model, traj, nets.at(0)) else {
                return Ok(None);
            };
            let obs = test_obs_params(model);
            let lm = true_label_model(model);
            let (lo, hi) = param_box(model);
            let mut params = uniform_params(*count, &lo, &hi, &mut init_rng);
            let single = Partition::single_cluster(l);
            let mut fams: Vec<Vec<Vec<u8>>> = (0..*count)
                .map(|_| {
                    FactoredParticleFamily::sample_from_marginals(
                        single.clone(),
                        &marg,
                        *per_param,
                        &mut init_rng,
                    )
                    .families
                    .remove(0)
                })
                .collect();
            let spec = param_spec(cfg, jitter, ParamDomain::UnitBox);
            for n in start + 1..=cfg.steps {
                let t0 = Instant::now();
                let m = LabelConditional {
                    model: model.clone(),
                    obs,
                    net: nets.at(n),
                };
                let o = outcomes(&traj.obs[n])?;
                let ps =
                    parameter_pf_step(&params, &spec, n as u64, f, n as u64, |_, x, a, rng| {
                        Ok((
                            nested_mc_ln_weight(&m, x, &fams[a], &o[..], *weight_samples, rng),
                            (),
                        ))
                    })?;
                fams = conditional_particle_filter_step(
                    &m,
                    &ps.params,
                    &ps.lineage,
                    &fams,
                    Some(&o[..]),
                    cfg.resampling,
                    f,
                    n as u64,
                )?;
                params = ps.params;
                let truth = truth_labels(traj, n, &lm);
                let pooled: Vec<Vec<u8>> = fams.iter().flatten().cloned().collect();
                rec.push(
                    n,
                    state_error_particles(&truth, &pooled)?,
                    Some(&params),
                    t0,
                )?;
            }
        }
    }
    Ok(Some(rec.records))
}

/// Joint label states at a parameter vector.
pub struct LabelConditional<'a> {
    pub model: ModelSpec,
    pub obs: TestObsParams,
    pub net: &'a ContactNetwork,
}

impl ConditionalParticleModel for LabelConditional<'_> {
    type State = Vec<u8>;
    type Obs = [TestOutcome];

    fn sample_transition(&self, x: &[f64], y: &Vec<u8>, rng: &mut Stream) -> Vec<u8> {
        let nm = EpidemicNodeModel {
            model: label_model_at(&self.model, x),
            obs: self.obs,
            net: self.net,
        };
        sample_label_transition(&nm, y, rng)
    }

    fn obs_ln_likelihood(&self, x: &[f64], y: &Vec<u8>, o: &[TestOutcome]) -> f64 {
        let nm = EpidemicNodeModel {
            model: label_model_at(&self.model, x),
            obs: self.obs,
            net: self.net,
        };
        label_ln_likelihood(&nm, y, o)
    }
}

/// The stochastic Lorenz system with θ as the parameter vector.
pub struct LorenzConditional {
    pub params: LorenzParams,
}

impl ConditionalParticleModel for LorenzConditional {
    type State = LorenzState;
    type Obs = [f64; 2];

    fn sample_transition(&self, x: &[f64], y: &LorenzState, rng: &mut Stream) -> LorenzState {
        let p = self.params.with_theta([x[0], x[1], x[2], x[3]]);
        lorenz_transition_sample(&p, y, rng)
    }

    fn obs_ln_likelihood(&self, x: &[f64], y: &LorenzState, o: &[f64; 2]) -> f64 {
        // Extreme jittered parameters can make the Euler step diverge; such
        // particles get zero weight.
        if !y.iter().all(|v| v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        lorenz_obs_ln_density_unchecked(x[3], y, o)
    }
}

/// Initial state particles: y ~ N(y*, 10 I).
pub fn lorenz_initial_particles(m: usize, rng: &mut Stream) -> Vec<LorenzState> {
    let sd = 10f64.sqrt();
    (0..m).map(|_| Y_STAR.map(|v| normal(v, sd, rng))).collect()
}

fn run_lorenz(
    cfg: &ExperimentConfig,
    params: &LorenzParams,
    seed: u64,
) -> Result<Vec<StepRecord>, HarnessError> {
    let FilterSpec::ConditionalParticle {
        n: count,
        m: per_param,
        jitter,
        weight_samples,
    } = &cfg.filter
    else {
        unreachable!("validated")
    };
    let f = StreamFactory::new(seed);
    let truth = simulate_lorenz(params, cfg.steps, &f);
    let model = LorenzConditional { params: *params };
    let mut rec = Recorder::new(cfg, vec![]);
    let mut init_rng = f.stream(&[tags::INIT]);
    let (lo, hi) = param_box(&cfg.model);
    let mut theta = uniform_params(*count, &lo, &hi, &mut init_rng);
    let mut fams: Vec<Vec<LorenzState>> = (0..*count)
        .map(|_| lorenz_initial_particles(*per_param, &mut init_rng))
        .collect();
    let spec = ParamFilterSpec {
        schedule: jitter.clone(),
        domain: ParamDomain::Unbounded,
        scheme: cfg.resampling,
    };
    for n in 1..=cfg.steps {
        let t0 = Instant::now();
        let o = truth.obs[n];
        let (next_theta, lineage) = match &o {
            Some(o) => {
                // The jitter schedule runs on the observation index.
                let t = (n / params.obs_stride) as u64;
                let ps = parameter_pf_step(&theta, &spec, t, &f, n as u64, |_, x, a, rng| {
                    Ok((
                        nested_mc_ln_weight(&model, x, &fams[a], o, *weight_samples, rng),
                        (),
                    ))
                })?;
                (ps.params, ps.lineage)
            }
            None => {
                let ps = identity_param_step(&theta);
                (ps.params, ps.lineage)
            }
        };
        fams = conditional_particle_filter_step(
            &model,
            &next_theta,
            &lineage,
            &fams,
            o.as_ref(),
            cfg.resampling,
            &f,
            n as u64,
        )?;
        theta = next_theta;
        rec.push(
            n,
            lorenz_state_error(&truth.states[n], &fams)?,
            Some(&theta),
            t0,
        )?;
    }
    Ok(rec.records)
}

/// Mean of every series over the runs that have a record at each step.
pub fn aggregate(runs: &[RunResult]) -> Vec<AggregateRecord> {
    let mut by_step: BTreeMap<usize, AggregateRecord> = BTreeMap::new();
    for r in runs {
        for s in &r.records {
            let a = by_step.entry(s.step).or_insert_with(|| AggregateRecord {
                step: s.step,
                runs: 0,
                state_error: 0.0,
                estimates: vec![0.0; s.estimates.len()],
                param_errors: vec![0.0; s.param_errors.len()],
                population: [0.0; 4],
            });
            a.runs += 1;
            a.state_error += s.state_error;
            a.estimates
                .iter_mut()
                .zip(&s.estimates)
                .for_each(|(x, v)| *x += v);
            a.param_errors
                .iter_mut()
                .zip(&s.param_errors)
                .for_each(|(x, v)| *x += v);
            a.population
                .iter_mut()
                .zip(&s.population)
                .for_each(|(x, v)| *x += v);
        }
    }
    by_step
        .into_values()
        .map(|mut a| {
            let k = a.runs as f64;
            a.state_error /= k;
            a.estimates.iter_mut().for_each(|x| *x /= k);
            a.param_errors.iter_mut().for_each(|x| *x /= k);
            a.population.iter_mut().for_each(|x| *x /= k);
            a
        })
        .collect()
}

/// Parameter-free resampling convenience used by tests and the CLI.
pub fn default_resampling() -> Resampling {
    Resampling::Multinomial
}
