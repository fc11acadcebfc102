//! Variational filters: exact transition and Bayes steps followed by a
//! projection back onto a tractable family.

use rayon::prelude::*;

use super::FilterError;
use crate::prob::{tags, Stream, StreamFactory};

/// A model whose beliefs live in a tractable family.
pub trait VariationalModel: Sync {
    type Belief: Clone + Send + Sync;
    type Obs: ?Sized + Sync;
    /// Unnormalized posterior representation handed to the projection.
    type Posterior;
    fn transition_update(&self, q: &Self::Belief) -> Self::Belief;
    fn observation_update(&self, bar: &Self::Belief, o: &Self::Obs) -> Self::Posterior;
}

/// Maps a posterior back into the belief family, e.g. by minimizing a divergence.
pub trait Projection<M: VariationalModel + ?Sized>: Sync {
    fn project(
        &self,
        model: &M,
        p: &M::Posterior,
        rng: &mut Stream,
    ) -> Result<M::Belief, FilterError>;
}

/// One variational filter step; with `o = None` only the transition applies.
pub fn standard_variational_filter_step<M, P>(
    m: &M,
    proj: &P,
    q: &M::Belief,
    o: Option<&M::Obs>,
    rng: &mut Stream,
) -> Result<M::Belief, FilterError>
where
    M: VariationalModel + ?Sized,
    P: Projection<M> + ?Sized,
{
    let bar = m.transition_update(q);
    match o {
        None => Ok(bar),
        Some(o) => proj.project(m, &m.observation_update(&bar, o), rng),
    }
}

/// Conditional variational filter: belief `i` is updated at `params[i]`
/// from `prev[lineage[i]]`. The projection stream is keyed by the ancestor
/// and the parameter bits, so duplicated particles get identical beliefs.
#[allow(clippy::too_many_arguments)]
pub fn conditional_variational_filter_step<M, P, F>(
    make: F,
    proj: &P,
    params: &[Vec<f64>],
    lineage: &[usize],
    prev: &[M::Belief],
    o: Option<&M::Obs>,
    f: &StreamFactory,
    step: u64,
) -> Result<Vec<M::Belief>, FilterError>
where
    M: VariationalModel,
    P: Projection<M>,
    F: Fn(&[f64]) -> M + Sync,
{
    if params.len() != lineage.len() || lineage.iter().any(|&a| a >= prev.len()) {
        return Err(FilterError::Config(
            "lineage does not match the previous beliefs".into(),
        ));
    }
    (0..params.len())
        .into_par_iter()
        .map(|i| {
            let mut keys = vec![tags::PROJECTION, step, lineage[i] as u64];
            keys.extend(params[i].iter().map(|v| v.to_bits()));
            let mut rng = f.stream(&keys);
            standard_variational_filter_step(
                &make(&params[i]),
                proj,
                &prev[lineage[i]],
                o,
                &mut rng,
            )
        })
        .collect()
}
