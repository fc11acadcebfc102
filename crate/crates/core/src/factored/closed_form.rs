//! Closed-form fully factored updates for the SEIRS models.

use rayon::prelude::*;

use crate::epidemic::{
    seirs_alpha, test_obs_likelihoods, SeirsParams, SubpopParams, TestObsParams, TestOutcome,
};
use crate::filter::FilterError;
use crate::graph::ContactNetwork;

const MIN_PAR_LEN: usize = 1024;

/// Π_{l∈N_k} (1 − β q_l(I)).
#[inline]
pub fn escape_product(beta: f64, net: &ContactNetwork, q: &[[f64; 4]], k: usize) -> f64 {
    net.neighbors(k)
        .iter()
        .fold(1.0, |acc, &l| acc * (1.0 - beta * q[l as usize][2]))
}

/// Fully factored SEIRS transition update of categorical node beliefs.
pub fn seirs_factored_transition(
    p: &SeirsParams,
    net: &ContactNetwork,
    q: &[[f64; 4]],
) -> Vec<[f64; 4]> {
    (0..q.len())
        .into_par_iter()
        .with_min_len(MIN_PAR_LEN)
        .map(|k| seirs_alpha(p, &q[k], escape_product(p.beta, net, q, k)))
        .collect()
}

/// Per-node Bayes update with the testing model. Returns the posterior and
/// Σ_k ln Z_k, where Z_k = Σ_c q̄_k(c) ξ(c)(o_k).
pub fn seirs_factored_observation(
    obs: &TestObsParams,
    bar: &[[f64; 4]],
    o: &[TestOutcome],
) -> Result<(Vec<[f64; 4]>, f64), FilterError> {
    if o.len() != bar.len() {
        return Err(FilterError::Config(format!(
            "{} observations for {} nodes",
            o.len(),
            bar.len()
        )));
    }
    let rows = TestOutcome::ALL.map(|t| test_obs_likelihoods(obs, t));
    let out: Vec<([f64; 4], f64)> = (0..bar.len())
        .into_par_iter()
        .with_min_len(MIN_PAR_LEN)
        .map(|k| {
            let lik = &rows[o[k].index()];
            let mut post = [0.0; 4];
            let mut z = 0.0;
            for c in 0..4 {
                post[c] = bar[k][c] * lik[c];
                z += post[c];
            }
            post.iter_mut().for_each(|v| *v /= z);
            (post, z)
        })
        .collect();
    let mut ln_z = 0.0;
    for (k, (_, z)) in out.iter().enumerate() {
        if !(*z > 0.0) {
            log::debug!("node {k} has zero predictive likelihood");
            return Err(FilterError::ZeroLikelihood);
        }
        ln_z += z.ln();
    }
    Ok((out.into_iter().map(|v| v.0).collect(), ln_z))
}

/// Transition then (optionally) observation; returns the posterior and ln evidence.
pub fn seirs_factored_step(
    p: &SeirsParams,
    obs: &TestObsParams,
    net: &ContactNetwork,
    q: &[[f64; 4]],
    o: Option<&[TestOutcome]>,
) -> Result<(Vec<[f64; 4]>, f64), FilterError> {
    let bar = seirs_factored_transition(p, net, q);
    match o {
        Some(o) => seirs_factored_observation(obs, &bar, o),
        None => Ok((bar, 0.0)),
    }
}

#[inline]
fn normalized(a: &[f64; 4]) -> [f64; 4] {
    let s: f64 = a.iter().sum();
    a.map(|v| v / s)
}

/// Direct Dirichlet transition update: with ᾱ = α/Σα, the new belief is
/// Dir(K β) where β is the SEIRS mean map of ᾱ_k with escape
/// probability Π_{l∈N_k} (1 − β ᾱ_l(I)).
pub fn dirichlet_factored_transition(
    p: &SeirsParams,
    k_conc: f64,
    net: &ContactNetwork,
    a: &[[f64; 4]],
) -> Vec<[f64; 4]> {
    let means: Vec<[f64; 4]> = a.iter().map(normalized).collect();
    (0..a.len())
        .into_par_iter()
        .with_min_len(MIN_PAR_LEN)
        .map(|k| {
            seirs_alpha(p, &means[k], escape_product(p.beta, net, &means, k)).map(|v| k_conc * v)
        })
        .collect()
}

/// Subpopulation transition update: escape probability
/// (1 − βκ1 ᾱ_k(I))^{M_k − 1} · Π_{l∈N_k} (1 − βκ2 ᾱ_l(I))^{M_l}.
pub fn subpop_factored_transition(
    p: &SeirsParams,
    sub: &SubpopParams,
    net: &ContactNetwork,
    a: &[[f64; 4]],
) -> Vec<[f64; 4]> {
    let means: Vec<[f64; 4]> = a.iter().map(normalized).collect();
    (0..a.len())
        .into_par_iter()
        .with_min_len(MIN_PAR_LEN)
        .map(|k| {
            let own =
                (1.0 - p.beta * sub.kappa1 * means[k][2]).powf(net.subpop_size(k) as f64 - 1.0);
            let nbrs = net.neighbors(k).iter().fold(1.0, |acc, &l| {
                let l = l as usize;
                acc * (1.0 - p.beta * sub.kappa2 * means[l][2]).powf(net.subpop_size(l) as f64)
            });
            seirs_alpha(p, &means[k], own * nbrs).map(|v| sub.k * v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn transition_preserves_mass() {
        let net = ContactNetwork::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let q = vec![[0.4, 0.3, 0.2, 0.1], [0.1, 0.2, 0.3, 0.4], [0.25; 4]];
        for b in seirs_factored_transition(&SeirsParams::flu(), &net, &q) {
            assert_abs_diff_eq!(b.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn isolated_susceptible_stays() {
        let net = ContactNetwork::from_edges(2, &[]).unwrap();
        let q = vec![[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]];
        let out = seirs_factored_transition(&SeirsParams::covid(), &net, &q);
        assert_eq!(out[0], [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn unknown_outcome_likelihood_is_one_minus_alpha() {
        let obs = TestObsParams::setup(0.1, 0.1);
        let (post, ln_z) =
            seirs_factored_observation(&obs, &[[0.25; 4]], &[TestOutcome::Unknown]).unwrap();
        let z: f64 = [0.8, 0.3, 0.1, 0.95].iter().sum::<f64>() / 4.0;
        assert_abs_diff_eq!(ln_z, z.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(post[0][0], 0.2 / z, epsilon = 1e-15);
    }

    #[test]
    fn dirichlet_update_scales_mean_map() {
        let net = ContactNetwork::from_edges(2, &[(0, 1)]).unwrap();
        let a = vec![[2.0, 1.0, 1.0, 0.0], [0.0, 0.0, 5.0, 5.0]];
        let p = SeirsParams::covid();
        let out = dirichlet_factored_transition(&p, 10.0, &net, &a);
        let q = 1.0 - p.beta * 0.5;
        let want = seirs_alpha(&p, &[0.5, 0.25, 0.25, 0.0], q);
        for j in 0..4 {
            assert_abs_diff_eq!(out[0][j], 10.0 * want[j], epsilon = 1e-14);
        }
    }
}
