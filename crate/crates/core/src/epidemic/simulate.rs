//! Ground-truth simulation of epidemics and their observations.

use rand::Rng;
use rayon::prelude::*;

use super::{
    dirichlet_node_transition, subpop_node_transition, test_obs_row, Compartment, LabelModel,
    ModelError, NodeObs, ObsSpaceSpec, SeirsParams, SubpopParams, TestOutcome,
};
use crate::graph::ContactNetwork;
use crate::prob::{
    dirichlet_sample_array, multinomial_sample, sample_index, tags, Stream, StreamFactory,
};

/// Nodes per random stream when simulating one step; fixed so results do not
/// depend on the thread count.
const CHUNK: usize = 4096;

/// Which state space and transition model a simulation uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateModel {
    /// Compartment labels (SEIRS or SIS).
    Labels(LabelModel),
    /// Simplex-labelled nodes with Dir(K α) transitions.
    Dirichlet { params: SeirsParams, k: f64 },
    /// Subpopulation network with Dir(K α) transitions.
    Subpop {
        params: SeirsParams,
        sub: SubpopParams,
    },
}

/// A global state in C^L or S^L.
#[derive(Debug, Clone, PartialEq)]
pub enum GlobalState {
    Labels(Vec<Compartment>),
    Simplex(Vec<[f64; 4]>),
}

impl GlobalState {
    pub fn len(&self) -> usize {
        match self {
            GlobalState::Labels(v) => v.len(),
            GlobalState::Simplex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Option<&[Compartment]> {
        match self {
            GlobalState::Labels(v) => Some(v),
            GlobalState::Simplex(_) => None,
        }
    }

    pub fn simplex(&self) -> Option<&[[f64; 4]]> {
        match self {
            GlobalState::Simplex(v) => Some(v),
            GlobalState::Labels(_) => None,
        }
    }
}

/// States at times 0..=n and the observation of each state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub patient_zero: usize,
    pub states: Vec<GlobalState>,
    pub obs: Vec<Vec<NodeObs>>,
}

/// Start state: patient zero exposed (SEIRS), infected (SIS) or near-E
/// (simplex models); everyone else susceptible.
pub fn initial_state(model: &StateModel, l: usize, patient_zero: usize) -> GlobalState {
    match model {
        StateModel::Labels(m) => {
            let mut s = vec![Compartment::S; l];
            s[patient_zero] = match m {
                LabelModel::Seirs(_) => Compartment::E,
                LabelModel::Sis(_) => Compartment::I,
            };
            GlobalState::Labels(s)
        }
        StateModel::Dirichlet { .. } | StateModel::Subpop { .. } => {
            let mut s = vec![[0.97, 0.01, 0.01, 0.01]; l];
            s[patient_zero] = [0.01, 0.97, 0.01, 0.01];
            GlobalState::Simplex(s)
        }
    }
}

fn chunk_stream(f: &StreamFactory, tag: u64, step: usize, chunk: usize) -> Stream {
    f.stream(&[tag, step as u64, chunk as u64])
}

/// Sample the state at `step` from the state at `step - 1`.
pub fn step_state(
    model: &StateModel,
    net: &ContactNetwork,
    s: &GlobalState,
    step: usize,
    f: &StreamFactory,
) -> GlobalState {
    match (model, s) {
        (StateModel::Labels(m), GlobalState::Labels(prev)) => {
            let mut next = vec![Compartment::S; prev.len()];
            next.par_chunks_mut(CHUNK)
                .enumerate()
                .for_each(|(ci, out)| {
                    let mut rng = chunk_stream(f, tags::SIMULATION, step, ci);
                    let mut buf = [0.0; 4];
                    for (j, slot) in out.iter_mut().enumerate() {
                        let k = ci * CHUNK + j;
                        m.node_probs(net, prev, k, &mut buf);
                        let n = m.num_labels();
                        *slot = m.label(sample_index(&buf[..n], 1.0, &mut rng));
                    }
                });
            GlobalState::Labels(next)
        }
        (StateModel::Dirichlet { .. } | StateModel::Subpop { .. }, GlobalState::Simplex(prev)) => {
            let mut next = vec![[0.0; 4]; prev.len()];
            next.par_chunks_mut(CHUNK)
                .enumerate()
                .for_each(|(ci, out)| {
                    let mut rng = chunk_stream(f, tags::SIMULATION, step, ci);
                    for (j, slot) in out.iter_mut().enumerate() {
                        let k = ci * CHUNK + j;
                        let d = match model {
                            StateModel::Dirichlet { params, k: kc } => {
                                dirichlet_node_transition(params, *kc, net, prev, k)
                            }
                            StateModel::Subpop { params, sub } => {
                                subpop_node_transition(params, sub, net, prev, k)
                            }
                            StateModel::Labels(_) => unreachable!(),
                        };
                        *slot = dirichlet_sample_array(&d.a, &mut rng);
                    }
                });
            GlobalState::Simplex(next)
        }
        _ => panic!("state does not match the model's state space"),
    }
}

fn sample_test<R: Rng + ?Sized>(row: &[f64; 3], rng: &mut R) -> TestOutcome {
    TestOutcome::ALL[sample_index(row, 1.0, rng)]
}

/// Sample one observation per node of state `s`.
pub fn observe(
    spec: &ObsSpaceSpec,
    s: &GlobalState,
    step: usize,
    f: &StreamFactory,
) -> Vec<NodeObs> {
    let l = s.len();
    let mut out = vec![NodeObs::Simplex(None); l];
    out.par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(ci, chunk)| {
            let mut rng = chunk_stream(f, tags::OBSERVATION, step, ci);
            for (j, slot) in chunk.iter_mut().enumerate() {
                let k = ci * CHUNK + j;
                *slot = observe_node(spec, s, k, &mut rng);
            }
        });
    out
}

fn observe_node(spec: &ObsSpaceSpec, s: &GlobalState, k: usize, rng: &mut Stream) -> NodeObs {
    match (spec, s) {
        (ObsSpaceSpec::Test3(p), GlobalState::Labels(v)) => {
            NodeObs::Test(sample_test(&test_obs_row(p, v[k]), rng))
        }
        (ObsSpaceSpec::Test3(p), GlobalState::Simplex(v)) => {
            let mut row = [0.0; 3];
            for c in Compartment::ALL {
                let r = test_obs_row(p, c);
                for q in 0..3 {
                    row[q] += v[k][c.index()] * r[q];
                }
            }
            let total: f64 = row.iter().sum();
            NodeObs::Test(TestOutcome::ALL[sample_index(&row, total, rng)])
        }
        (ObsSpaceSpec::SimplexDir { c, alpha }, GlobalState::Simplex(v)) => {
            if rng.random::<f64>() < *alpha {
                NodeObs::Simplex(Some(dirichlet_sample_array(&v[k].map(|x| c * x), rng)))
            } else {
                NodeObs::Simplex(None)
            }
        }
        (ObsSpaceSpec::Mixture(m), GlobalState::Simplex(v)) => {
            let b = m.beta(&v[k]);
            let present = b[0] + b[1] + b[2] + b[3];
            if rng.random::<f64>() < present {
                let conc = [b[0], b[1], b[2], b[3]]
                    .map(|x| (m.concentration() * x).max(f64::MIN_POSITIVE));
                NodeObs::Simplex(Some(dirichlet_sample_array(&conc, rng)))
            } else {
                NodeObs::Simplex(None)
            }
        }
        (ObsSpaceSpec::Counts { m, alpha }, GlobalState::Simplex(v)) => {
            if rng.random::<f64>() < *alpha {
                let c =
                    multinomial_sample(*m, &v[k], rng).expect("simplex state is a distribution");
                NodeObs::Counts(Some([c[0], c[1], c[2], c[3]]))
            } else {
                NodeObs::Counts(None)
            }
        }
        _ => panic!("observation model does not match the state space"),
    }
}

/// Simulate `n_steps` transitions on a static network.
pub fn simulate_epidemic(
    model: &StateModel,
    obs: &ObsSpaceSpec,
    net: &ContactNetwork,
    n_steps: usize,
    f: &StreamFactory,
) -> Result<Trajectory, ModelError> {
    simulate_epidemic_with(model, obs, |_| net, n_steps, f)
}

/// Simulate with a per-step network (e.g. a dynamic snapshot sequence).
/// The transition into step n uses `net_at(n)`.
pub fn simulate_epidemic_with<'a>(
    model: &StateModel,
    obs: &ObsSpaceSpec,
    net_at: impl Fn(usize) -> &'a ContactNetwork,
    n_steps: usize,
    f: &StreamFactory,
) -> Result<Trajectory, ModelError> {
    obs.validate()?;
    let l = net_at(0).len();
    if l == 0 {
        return Err(ModelError::Config("network has no nodes".into()));
    }
    let compatible = matches!(
        (model, obs),
        (StateModel::Labels(_), ObsSpaceSpec::Test3(_))
            | (StateModel::Dirichlet { .. } | StateModel::Subpop { .. }, _)
    );
    if !compatible {
        return Err(ModelError::Config(
            "label states need the testing observation model".into(),
        ));
    }
    let patient_zero = f.stream(&[tags::SIMULATION, u64::MAX]).random_range(0..l);
    let mut states = vec![initial_state(model, l, patient_zero)];
    let mut observations = vec![observe(obs, &states[0], 0, f)];
    for n in 1..=n_steps {
        let next = step_state(model, net_at(n), &states[n - 1], n, f);
        observations.push(observe(obs, &next, n, f));
        states.push(next);
    }
    Ok(Trajectory {
        patient_zero,
        states,
        obs: observations,
    })
}

/// Fraction of nodes per compartment (labels) or mean simplex coordinates, per step.
pub fn population_properties(traj: &Trajectory) -> Vec<[f64; 4]> {
    traj.states
        .iter()
        .map(|s| {
            let mut acc = [0.0; 4];
            match s {
                GlobalState::Labels(v) => {
                    for c in v {
                        acc[c.index()] += 1.0;
                    }
                }
                GlobalState::Simplex(v) => {
                    for y in v {
                        for i in 0..4 {
                            acc[i] += y[i];
                        }
                    }
                }
            }
            acc.map(|a| a / s.len() as f64)
        })
        .collect()
}
