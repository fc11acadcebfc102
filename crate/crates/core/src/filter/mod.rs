//! Standard and conditional filters over generic models.
//!
//! Dense filters work on finite state spaces enumerated as `0..n`. Particle
//! filters work on any cloneable state. Conditional filters run one inner
//! filter per parameter particle, each seeded from its ancestor's belief.

mod param;
mod variational;

pub use param::*;
pub use variational::*;

use rand::Rng;
use rayon::prelude::*;

use crate::prob::{tags, Stream, StreamFactory};

#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("observation has zero likelihood under the predicted belief")]
    ZeroLikelihood,
    #[error("non-finite log-weight {value} at index {index}")]
    NonFiniteWeight { index: usize, value: f64 },
    #[error("invalid filter configuration: {0}")]
    Config(String),
    #[error("equation solver failed: {0}")]
    Solver(String),
    #[error(transparent)]
    Model(#[from] crate::epidemic::ModelError),
    #[error(transparent)]
    Prob(#[from] crate::prob::ProbError),
}

/// Resampling scheme used after weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    #[default]
    Multinomial,
    Systematic,
}

/// Draw `n` indices from normalized weights `w`.
pub fn resample(w: &[f64], n: usize, scheme: Resampling, rng: &mut Stream) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for &v in w {
        acc += v;
        cdf.push(acc);
    }
    let last = w.iter().rposition(|&v| v > 0.0).unwrap_or(w.len() - 1);
    let pick = |u: f64| cdf.partition_point(|&c| c <= u * acc).min(last);
    match scheme {
        Resampling::Multinomial => (0..n).map(|_| pick(rng.random::<f64>())).collect(),
        Resampling::Systematic => {
            let u0 = rng.random::<f64>();
            (0..n).map(|i| pick((i as f64 + u0) / n as f64)).collect()
        }
    }
}

/// Normalize log-weights. Returns `None` when every weight is zero.
pub fn normalize_log_weights(lnw: &[f64]) -> Result<Option<Vec<f64>>, FilterError> {
    if let Some(index) = lnw.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(FilterError::NonFiniteWeight {
            index,
            value: lnw[index],
        });
    }
    let max = lnw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(None);
    }
    let mut w: Vec<f64> = lnw.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    Ok(Some(w))
}

/// ln((1/n) Σ exp(v_i)), stable; −∞ for an empty or all-zero input.
pub fn log_mean_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = v.iter().map(|x| (x - max).exp()).sum();
    max + (s / v.len() as f64).ln()
}

/// Normalize `lnw` and resample `moved` to the same size. Falls back to
/// uniform resampling (with a warning) when every weight is zero.
pub(crate) fn weight_and_resample<S: Clone>(
    moved: Vec<S>,
    lnw: &[f64],
    scheme: Resampling,
    rng: &mut Stream,
) -> Result<Vec<S>, FilterError> {
    let n = moved.len();
    let w = match normalize_log_weights(lnw)? {
        Some(w) => w,
        None => {
            log::warn!("all {n} particle weights are zero; resampling uniformly");
            vec![1.0 / n as f64; n]
        }
    };
    Ok(resample(&w, n, scheme, rng)
        .into_iter()
        .map(|i| moved[i].clone())
        .collect())
}

// ---------------------------------------------------------------------------
// Dense filters
// ---------------------------------------------------------------------------

/// A model on the finite state space `0..num_states()`.
pub trait DenseModel {
    type Obs: ?Sized;
    fn num_states(&self) -> usize;
    /// Add `w · τ(from)(y)` to `out[y]` for every `y`.
    fn add_transition_row(&self, from: usize, w: f64, out: &mut [f64]);
    fn obs_likelihood(&self, y: usize, o: &Self::Obs) -> f64;
}

/// Probability vector over a finite state space.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBelief {
    pub p: Vec<f64>,
}

impl DenseBelief {
    pub fn new(p: Vec<f64>) -> Result<Self, FilterError> {
        let total: f64 = p.iter().sum();
        if p.iter().any(|v| !(*v >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(FilterError::Config(format!(
                "belief is not a probability vector (sum {total})"
            )));
        }
        Ok(Self { p })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            p: vec![1.0 / n as f64; n],
        }
    }

    pub fn point(n: usize, y: usize) -> Self {
        let mut p = vec![0.0; n];
        p[y] = 1.0;
        Self { p }
    }
}

/// q̄(y) = Σ_{y'} q(y') τ(y')(y), skipping zero-mass states.
pub fn dense_transition_update<M: DenseModel + ?Sized>(m: &M, q: &DenseBelief) -> Vec<f64> {
    let mut bar = vec![0.0; m.num_states()];
    for (from, &w) in q.p.iter().enumerate() {
        if w != 0.0 {
            m.add_transition_row(from, w, &mut bar);
        }
    }
    bar
}

/// Multiply `bar` by the likelihood and normalize in place; returns ln Z.
pub(crate) fn bayes_normalize(
    bar: &mut [f64],
    mut lik: impl FnMut(usize) -> f64,
) -> Result<f64, FilterError> {
    let mut total = 0.0;
    for (y, v) in bar.iter_mut().enumerate() {
        if *v != 0.0 {
            *v *= lik(y);
            total += *v;
        }
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(FilterError::ZeroLikelihood);
    }
    for v in bar.iter_mut() {
        *v /= total;
    }
    Ok(total.ln())
}

/// One exact filter step. With `o = None` only the transition is applied.
pub fn standard_filter_step<M: DenseModel + ?Sized>(
    m: &M,
    q: &DenseBelief,
    o: Option<&M::Obs>,
) -> Result<DenseBelief, FilterError> {
    standard_filter_step_with_evidence(m, q, o).map(|(b, _)| b)
}

/// As [`standard_filter_step`], also returning ln ∫ ξ(o) d(q ⊙ τ).
pub fn standard_filter_step_with_evidence<M: DenseModel + ?Sized>(
    m: &M,
    q: &DenseBelief,
    o: Option<&M::Obs>,
) -> Result<(DenseBelief, f64), FilterError> {
    let mut bar = dense_transition_update(m, q);
    let ln_z = match o {
        Some(o) => bayes_normalize(&mut bar, |y| m.obs_likelihood(y, o))?,
        None => 0.0,
    };
    Ok((DenseBelief { p: bar }, ln_z))
}

/// Exact conditional filter: one dense filter per parameter support point.
pub fn conditional_filter_step<M, F>(
    make: F,
    support: &[Vec<f64>],
    beliefs: &[DenseBelief],
    o: Option<&M::Obs>,
) -> Result<Vec<DenseBelief>, FilterError>
where
    M: DenseModel,
    F: Fn(&[f64]) -> M,
{
    if support.len() != beliefs.len() {
        return Err(FilterError::Config(
            "one belief per support point is required".into(),
        ));
    }
    support
        .iter()
        .zip(beliefs)
        .map(|(x, q)| standard_filter_step(&make(x), q, o))
        .collect()
}

/// Uniform mixture of dense beliefs.
pub fn dense_marginal(beliefs: &[DenseBelief]) -> DenseBelief {
    let n = beliefs.first().map_or(0, |b| b.p.len());
    let mut p = vec![0.0; n];
    for b in beliefs {
        for (acc, v) in p.iter_mut().zip(&b.p) {
            *acc += v / beliefs.len() as f64;
        }
    }
    DenseBelief { p }
}

// ---------------------------------------------------------------------------
// Particle filters
// ---------------------------------------------------------------------------

/// A model that can be simulated forward and scored against observations.
pub trait ParticleModel: Sync {
    type State: Clone + Send + Sync;
    type Obs: ?Sized + Sync;
    fn sample_transition(&self, y: &Self::State, rng: &mut Stream) -> Self::State;
    fn obs_ln_likelihood(&self, y: &Self::State, o: &Self::Obs) -> f64;
}

/// One bootstrap particle-filter step. Each new particle propagates a
/// uniformly chosen member of `pf`. With `o = None` particle i propagates
/// member i and weighting and resampling are skipped.
pub fn standard_particle_filter_step<M: ParticleModel + ?Sized>(
    m: &M,
    pf: &[M::State],
    o: Option<&M::Obs>,
    scheme: Resampling,
    rng: &mut Stream,
) -> Result<Vec<M::State>, FilterError> {
    if pf.is_empty() {
        return Err(FilterError::Config("empty particle family".into()));
    }
    let n = pf.len();
    // Without an observation nothing is reweighted, so each particle moves
    // from itself; drawing ancestors here would only add resampling noise.
    let moved: Vec<M::State> = (0..n)
        .map(|i| {
            let a = if o.is_some() {
                rng.random_range(0..n)
            } else {
                i
            };
            m.sample_transition(&pf[a], rng)
        })
        .collect();
    match o {
        None => Ok(moved),
        Some(o) => {
            let lnw: Vec<f64> = moved.iter().map(|y| m.obs_ln_likelihood(y, o)).collect();
            weight_and_resample(moved, &lnw, scheme, rng)
        }
    }
}

/// A particle model indexed by a real parameter vector.
pub trait ConditionalParticleModel: Sync {
    type State: Clone + Send + Sync;
    type Obs: ?Sized + Sync;
    fn sample_transition(&self, x: &[f64], y: &Self::State, rng: &mut Stream) -> Self::State;
    fn obs_ln_likelihood(&self, x: &[f64], y: &Self::State, o: &Self::Obs) -> f64;
}

/// A conditional model frozen at one parameter value.
pub struct AtParam<'a, M: ?Sized> {
    pub model: &'a M,
    pub x: &'a [f64],
}

impl<M: ConditionalParticleModel + ?Sized> ParticleModel for AtParam<'_, M> {
    type State = M::State;
    type Obs = M::Obs;

    fn sample_transition(&self, y: &Self::State, rng: &mut Stream) -> Self::State {
        self.model.sample_transition(self.x, y, rng)
    }

    fn obs_ln_likelihood(&self, y: &Self::State, o: &Self::Obs) -> f64 {
        self.model.obs_ln_likelihood(self.x, y, o)
    }
}

/// Parameter particles with one state-particle family each.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalParticleFamily<S> {
    pub params: Vec<Vec<f64>>,
    pub families: Vec<Vec<S>>,
}

/// Conditional particle filter: family `i` is propagated at `params[i]`
/// starting from `prev[lineage[i]]`, on stream (STATE_FILTER, step, i).
pub fn conditional_particle_filter_step<M: ConditionalParticleModel + ?Sized>(
    m: &M,
    params: &[Vec<f64>],
    lineage: &[usize],
    prev: &[Vec<M::State>],
    o: Option<&M::Obs>,
    scheme: Resampling,
    f: &StreamFactory,
    step: u64,
) -> Result<Vec<Vec<M::State>>, FilterError> {
    if params.len() != lineage.len() {
        return Err(FilterError::Config(
            "params and lineage lengths differ".into(),
        ));
    }
    if let Some(&a) = lineage.iter().find(|&&a| a >= prev.len()) {
        return Err(FilterError::Config(format!("ancestor {a} out of range")));
    }
    (0..params.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = f.stream(&[tags::STATE_FILTER, step, i as u64]);
            let at = AtParam {
                model: m,
                x: &params[i],
            };
            standard_particle_filter_step(&at, &prev[lineage[i]], o, scheme, &mut rng)
        })
        .collect()
}

/// The marginal of a conditional particle belief: all families pooled.
pub fn particle_marginal<S: Clone>(families: &[Vec<S>]) -> Vec<S> {
    families.iter().flatten().cloned().collect()
}

/// Action/observation history. The built-in models are Markov and ignore
/// it; user models can consult it inside their transition closures.
#[derive(Debug, Clone, PartialEq)]
pub struct History<A, O> {
    entries: std::collections::VecDeque<(A, O)>,
    capacity: Option<usize>,
}

impl<A, O> History<A, O> {
    /// Keep every entry.
    pub fn full() -> Self {
        Self {
            entries: Default::default(),
            capacity: None,
        }
    }

    /// Keep only the most recent `k` entries.
    pub fn bounded(k: usize) -> Self {
        Self {
            entries: Default::default(),
            capacity: Some(k),
        }
    }

    pub fn push(&mut self, a: A, o: O) {
        self.entries.push_back((a, o));
        if let Some(k) = self.capacity {
            while self.entries.len() > k {
                self.entries.pop_front();
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(A, O)> {
        self.entries.iter()
    }
}
