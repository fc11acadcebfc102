//! Factored-conditional filters: a parameter particle filter whose
//! particles each carry a factored state belief.
//!
//! Exact and variational inner beliefs are deterministic given (x, ancestor),
//! so the inner update for every jittered proposal runs once while its
//! weight is computed, and resampling shares the result between duplicates.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::epidemic::{
    seirs_node_probs, test_obs_likelihoods, Compartment, NodeObs, SeirsParams, SubpopParams,
    TestObsParams, TestOutcome,
};
use crate::factored::{
    dirichlet_multinomial_ln_mass, factored_filter_step, factored_particle_filter_step,
    multinomial_dirichlet_posterior, seirs_factored_step, subpop_factored_transition,
    FactoredBelief, FactoredParticleFamily, NodeModel,
};
use crate::filter::{
    log_mean_exp, parameter_pf_step, FilterError, ParamFilterSpec, ParamStep, Resampling,
};
use crate::graph::ContactNetwork;
use crate::prob::{sample_index, tags, Stream, StreamFactory};

/// Per-particle categorical node beliefs.
pub type NodeBeliefs = Vec<[f64; 4]>;

/// Exact factored filter per parameter particle: belief `i` is updated at
/// `params[i]` from `prev[lineage[i]]`.
pub fn factored_conditional_filter_step<M, F>(
    make: F,
    params: &[Vec<f64>],
    lineage: &[usize],
    prev: &[FactoredBelief],
    o: Option<&M::Obs>,
) -> Result<Vec<FactoredBelief>, FilterError>
where
    M: NodeModel,
    F: Fn(&[f64]) -> M + Sync,
{
    check_lineage(params.len(), lineage, prev.len())?;
    (0..params.len())
        .into_par_iter()
        .map(|i| factored_filter_step(&make(&params[i]), &prev[lineage[i]], o))
        .collect()
}

/// Factored particle filter per parameter particle; cluster `l` of
/// particle `i` draws on stream (STATE_FILTER, step, i, l).
#[allow(clippy::too_many_arguments)]
pub fn factored_conditional_particle_step<M, F>(
    make: F,
    params: &[Vec<f64>],
    lineage: &[usize],
    prev: &[FactoredParticleFamily],
    o: Option<&M::Obs>,
    scheme: Resampling,
    f: &StreamFactory,
    step: u64,
) -> Result<Vec<FactoredParticleFamily>, FilterError>
where
    M: NodeModel,
    F: Fn(&[f64]) -> M + Sync,
{
    check_lineage(params.len(), lineage, prev.len())?;
    (0..params.len())
        .into_par_iter()
        .map(|i| {
            let rng_for = |l: usize| f.stream(&[tags::STATE_FILTER, step, i as u64, l as u64]);
            factored_particle_filter_step(&make(&params[i]), &prev[lineage[i]], o, scheme, rng_for)
                .map(|r| r.0)
        })
        .collect()
}

fn check_lineage(n: usize, lineage: &[usize], prev: usize) -> Result<(), FilterError> {
    if lineage.len() != n || lineage.iter().any(|&a| a >= prev) {
        return Err(FilterError::Config(
            "lineage does not match the previous population".into(),
        ));
    }
    Ok(())
}

/// Monte Carlo estimate of ln ∫ ξ(o) d(μ ⊙ τ) with μ = ⊗ factored particle
/// families: each sample draws one member per cluster, propagates every
/// node at the model's parameters and scores the full observation.
pub fn factored_nested_ln_weight<M: NodeModel + ?Sized>(
    m: &M,
    fam: &FactoredParticleFamily,
    o: &M::Obs,
    samples: usize,
    rng: &mut Stream,
) -> f64 {
    let c = m.num_labels();
    let mut labels = vec![0u8; m.num_nodes()];
    let mut buf = [0.0; 8];
    let terms: Vec<f64> = (0..samples)
        .map(|_| {
            for (members, f) in fam.partition.clusters().iter().zip(&fam.families) {
                let j = rng.random_range(0..f.len());
                for (&k, &y) in members.iter().zip(&f[j]) {
                    labels[k] = y;
                }
            }
            (0..m.num_nodes())
                .map(|k| {
                    m.node_transition(k, &labels, &mut buf[..c]);
                    let y = sample_index(&buf[..c], 1.0, rng) as u8;
                    m.node_obs_likelihood(k, y, o).ln()
                })
                .sum()
        })
        .collect();
    log_mean_exp(&terms)
}

/// Rao-Blackwellized Monte Carlo estimate of ln ∫ ξ(o) d(μ ⊙ τ_x) for the
/// SEIRS testing model with μ = ⊗ q_k: each sample draws a previous state
/// from the node beliefs and evaluates Π_k Σ_c τ_k(s)(c) ξ(c)(o_k) exactly.
pub fn fcf_weight(
    x: &SeirsParams,
    obs: &TestObsParams,
    net: &ContactNetwork,
    q: &[[f64; 4]],
    o: &[TestOutcome],
    samples: usize,
    rng: &mut Stream,
) -> f64 {
    let rows = TestOutcome::ALL.map(|t| test_obs_likelihoods(obs, t));
    let mut s = vec![Compartment::S; q.len()];
    let terms: Vec<f64> = (0..samples)
        .map(|_| {
            for (sk, qk) in s.iter_mut().zip(q) {
                *sk = Compartment::from_index(sample_index(qk, qk.iter().sum(), rng));
            }
            (0..q.len())
                .map(|k| {
                    let d = net
                        .neighbors(k)
                        .iter()
                        .filter(|&&l| s[l as usize] == Compartment::I)
                        .count();
                    let p = seirs_node_probs(x, s[k], d);
                    let lik = &rows[o[k].index()];
                    (0..4).map(|c| p[c] * lik[c]).sum::<f64>().ln()
                })
                .sum()
        })
        .collect();
    log_mean_exp(&terms)
}

/// How the parameter weights of the fully factored SEIRS filter are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FcfWeight {
    /// Evidence under the factored prediction, Σ_k ln Z_k.
    Factored,
    /// [`fcf_weight`] with this many samples.
    MonteCarlo { samples: usize },
}

/// Fully factored SEIRS model with testing observations shared by every
/// parameter particle.
#[derive(Debug, Clone, Copy)]
pub struct FcfModel<'a> {
    pub obs: TestObsParams,
    pub net: &'a ContactNetwork,
    pub weight: FcfWeight,
}

/// One jittered parameter step plus the closed-form fully factored update
/// of each particle's node beliefs. Parameters are (β, σ, γ, ρ).
pub fn fcf_step(
    m: &FcfModel<'_>,
    params: &[Vec<f64>],
    beliefs: &[Arc<NodeBeliefs>],
    o: &[TestOutcome],
    spec: &ParamFilterSpec,
    n: u64,
    f: &StreamFactory,
    step: u64,
) -> Result<ParamStep<NodeBeliefs>, FilterError> {
    parameter_pf_step(params, spec, n, f, step, |_, x, a, rng| {
        let x = SeirsParams::from_array(x);
        let (post, ln_z) = seirs_factored_step(&x, &m.obs, m.net, &beliefs[a], Some(o))?;
        let w = match m.weight {
            FcfWeight::Factored => ln_z,
            FcfWeight::MonteCarlo { samples } => {
                fcf_weight(&x, &m.obs, m.net, &beliefs[a], o, samples, rng)
            }
        };
        Ok((w, post))
    })
}

/// Σ over count-observed nodes of the Dirichlet-multinomial log-mass under
/// the predicted beliefs; other nodes contribute nothing.
pub fn fcvf_weight(bar: &[[f64; 4]], o: &[NodeObs]) -> f64 {
    bar.iter()
        .zip(o)
        .map(|(a, obs)| match obs {
            NodeObs::Counts(Some(c)) => dirichlet_multinomial_ln_mass(a, c),
            _ => 0.0,
        })
        .sum()
}

/// Subpopulation transition followed by the conjugate count update.
/// Returns the posterior concentrations and [`fcvf_weight`].
pub fn fcvf_update(
    x: &SeirsParams,
    sub: &SubpopParams,
    net: &ContactNetwork,
    a: &[[f64; 4]],
    o: &[NodeObs],
) -> Result<(NodeBeliefs, f64), FilterError> {
    if o.len() != a.len() {
        return Err(FilterError::Config(format!(
            "{} observations for {} nodes",
            o.len(),
            a.len()
        )));
    }
    let bar = subpop_factored_transition(x, sub, net, a);
    let w = fcvf_weight(&bar, o);
    let post = bar
        .iter()
        .zip(o)
        .map(|(b, obs)| match obs {
            NodeObs::Counts(Some(c)) => Ok(multinomial_dirichlet_posterior(b, c)),
            NodeObs::Counts(None) => Ok(*b),
            other => Err(FilterError::Config(format!(
                "subpopulation filter expects counts, got {other:?}"
            ))),
        })
        .collect::<Result<_, _>>()?;
    Ok((post, w))
}

/// One jittered parameter step plus the subpopulation variational update.
#[allow(clippy::too_many_arguments)]
pub fn fcvf_step(
    sub: &SubpopParams,
    net: &ContactNetwork,
    params: &[Vec<f64>],
    beliefs: &[Arc<NodeBeliefs>],
    o: &[NodeObs],
    spec: &ParamFilterSpec,
    n: u64,
    f: &StreamFactory,
    step: u64,
) -> Result<ParamStep<NodeBeliefs>, FilterError> {
    parameter_pf_step(params, spec, n, f, step, |_, x, a, _| {
        let (post, w) = fcvf_update(&SeirsParams::from_array(x), sub, net, &beliefs[a], o)?;
        Ok((w, post))
    })
}
