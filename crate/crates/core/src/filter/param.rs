//! Parameter particle filters with Gaussian jittering.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use super::{
    log_mean_exp, normalize_log_weights, resample, ConditionalParticleModel, FilterError,
    Resampling,
};
use crate::prob::{normal, tags, Stream, StreamFactory};

/// Jitter covariance Σ_n = max(a·r^n, b) · diag(d).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct JitterSchedule {
    pub a: f64,
    pub b: f64,
    pub r: f64,
    pub diag: Vec<f64>,
}

impl JitterSchedule {
    /// Time-invariant Σ = diag(d).
    pub fn constant(diag: Vec<f64>) -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            r: 1.0,
            diag,
        }
    }

    pub fn adaptive(a: f64, b: f64, r: f64, diag: Vec<f64>) -> Self {
        Self { a, b, r, diag }
    }

    pub fn scale(&self, n: u64) -> f64 {
        let n = i32::try_from(n).unwrap_or(i32::MAX);
        (self.a * self.r.powi(n)).max(self.b)
    }

    pub fn variances(&self, n: u64) -> Vec<f64> {
        let s = self.scale(n);
        self.diag.iter().map(|d| s * d).collect()
    }
}

/// Where parameter particles must live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamDomain {
    #[default]
    Unbounded,
    /// [0, 1]^d: out-of-range draws are redrawn up to 100 times, then clamped.
    UnitBox,
}

const MAX_REDRAWS: usize = 100;

/// One Gaussian jitter draw around `x`.
pub fn jitter(x: &[f64], var: &[f64], domain: ParamDomain, rng: &mut Stream) -> Vec<f64> {
    let draw = |rng: &mut Stream| -> Vec<f64> {
        x.iter()
            .zip(var)
            .map(|(m, v)| normal(*m, v.sqrt(), rng))
            .collect()
    };
    match domain {
        ParamDomain::Unbounded => draw(rng),
        ParamDomain::UnitBox => {
            let mut y = draw(rng);
            for _ in 0..MAX_REDRAWS {
                if y.iter().all(|v| (0.0..=1.0).contains(v)) {
                    return y;
                }
                y = draw(rng);
            }
            y.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            y
        }
    }
}

/// Jittered proposals x̄_i ~ N(x_{a_i}, Σ_n) with uniform ancestors a_i.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamProposal {
    pub params: Vec<Vec<f64>>,
    pub ancestors: Vec<usize>,
}

pub fn propose_params(
    params: &[Vec<f64>],
    schedule: &JitterSchedule,
    n: u64,
    domain: ParamDomain,
    rng: &mut Stream,
) -> ParamProposal {
    let var = schedule.variances(n);
    let len = params.len();
    let mut ancestors = Vec::with_capacity(len);
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let a = rng.random_range(0..len);
        ancestors.push(a);
        out.push(jitter(&params[a], &var, domain, rng));
    }
    ParamProposal {
        params: out,
        ancestors,
    }
}

/// Result of one parameter step: resampled parameters, their lineage into
/// the previous population, the proposal log-weights and any per-proposal
/// payload the weight function produced (shared between duplicates).
#[derive(Debug, Clone)]
pub struct ParamStep<T> {
    pub params: Vec<Vec<f64>>,
    pub lineage: Vec<usize>,
    pub ln_weights: Vec<f64>,
    pub payloads: Vec<Arc<T>>,
}

/// Settings shared by every parameter filter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamFilterSpec {
    pub schedule: JitterSchedule,
    pub domain: ParamDomain,
    pub scheme: Resampling,
}

/// One parameter particle-filter step.
///
/// `ln_weight(i, x̄_i, a_i, rng)` returns the log-weight of proposal `i`
/// and an arbitrary payload; it runs on stream (WEIGHT, step, i). Jitter
/// uses `n` in the schedule and the stream (PARAM_FILTER, step).
pub fn parameter_pf_step<T, W>(
    params: &[Vec<f64>],
    spec: &ParamFilterSpec,
    n: u64,
    f: &StreamFactory,
    step: u64,
    ln_weight: W,
) -> Result<ParamStep<T>, FilterError>
where
    T: Send + Sync,
    W: Fn(usize, &[f64], usize, &mut Stream) -> Result<(f64, T), FilterError> + Sync,
{
    if params.is_empty() {
        return Err(FilterError::Config("empty parameter population".into()));
    }
    let mut rng = f.stream(&[tags::PARAM_FILTER, step]);
    let prop = propose_params(params, &spec.schedule, n, spec.domain, &mut rng);
    let scored: Vec<(f64, Arc<T>)> = (0..prop.params.len())
        .into_par_iter()
        .map(|i| {
            let mut wr = f.stream(&[tags::WEIGHT, step, i as u64]);
            ln_weight(i, &prop.params[i], prop.ancestors[i], &mut wr).map(|(w, t)| (w, Arc::new(t)))
        })
        .collect::<Result<_, _>>()?;
    let ln_weights: Vec<f64> = scored.iter().map(|s| s.0).collect();
    let len = params.len();
    let w = match normalize_log_weights(&ln_weights)? {
        Some(w) => w,
        None => {
            log::warn!("all {len} parameter weights are zero; resampling uniformly");
            vec![1.0 / len as f64; len]
        }
    };
    let picks = resample(&w, len, spec.scheme, &mut rng);
    Ok(ParamStep {
        params: picks.iter().map(|&r| prop.params[r].clone()).collect(),
        lineage: picks.iter().map(|&r| prop.ancestors[r]).collect(),
        payloads: picks.iter().map(|&r| Arc::clone(&scored[r].1)).collect(),
        ln_weights,
    })
}

/// Parameter step that keeps the population unchanged (no observation).
pub fn identity_param_step(params: &[Vec<f64>]) -> ParamStep<()> {
    ParamStep {
        params: params.to_vec(),
        lineage: (0..params.len()).collect(),
        ln_weights: vec![0.0; params.len()],
        payloads: (0..params.len()).map(|_| Arc::new(())).collect(),
    }
}

/// Parameter step for a step without an observation: every particle is
/// jittered in place (lineage i → i) and nothing is reweighted. Jitter uses
/// `n` in the schedule and the stream (PARAM_FILTER, step).
pub fn jitter_param_step(
    params: &[Vec<f64>],
    spec: &ParamFilterSpec,
    n: u64,
    f: &StreamFactory,
    step: u64,
) -> ParamStep<()> {
    let var = spec.schedule.variances(n);
    let mut rng = f.stream(&[tags::PARAM_FILTER, step]);
    let mut out = identity_param_step(params);
    for x in &mut out.params {
        *x = jitter(x, &var, spec.domain, &mut rng);
    }
    out
}

/// Monte Carlo estimate of ln ∫ ξ(x, ·)(o) d((1/M) Σ_j τ(x, y^{(j)})):
/// each sample propagates a uniformly chosen member of `family` at `x`.
pub fn nested_mc_ln_weight<M: ConditionalParticleModel + ?Sized>(
    m: &M,
    x: &[f64],
    family: &[M::State],
    o: &M::Obs,
    samples: usize,
    rng: &mut Stream,
) -> f64 {
    let terms: Vec<f64> = (0..samples)
        .map(|_| {
            let j = rng.random_range(0..family.len());
            let y = m.sample_transition(x, &family[j], rng);
            m.obs_ln_likelihood(x, &y, o)
        })
        .collect();
    log_mean_exp(&terms)
}
