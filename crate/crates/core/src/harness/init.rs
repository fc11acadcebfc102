//! Initial beliefs and parameter-particle initialization.

use rand::Rng;

use crate::epidemic::{test_obs_density, Compartment, NodeObs, TestObsParams};
use crate::graph::ContactNetwork;
use crate::prob::Stream;

/// Node beliefs (S, E, I, R) by BFS distance 0, 1, 2 and ≥ 3 (or unreachable).
pub const SEIRS_INIT_BY_DISTANCE: [[f64; 4]; 4] = [
    [0.29, 0.4, 0.3, 0.01],
    [0.49, 0.3, 0.2, 0.01],
    [0.69, 0.2, 0.1, 0.01],
    [0.97, 0.01, 0.01, 0.01],
];

/// Per-node beliefs from the BFS distance to patient zero. The same vectors
/// serve as Dirichlet concentrations for simplex-labelled models.
pub fn initial_belief_seirs(net: &ContactNetwork, patient_zero: usize) -> Vec<[f64; 4]> {
    net.bfs_distances(patient_zero)
        .into_iter()
        .map(|d| SEIRS_INIT_BY_DISTANCE[d.map_or(3, |d| d.min(3) as usize)])
        .collect()
}

/// Prior (S, I) probabilities before the first informative observation.
pub const SIS_PRIOR: [f64; 2] = [0.9, 0.1];

/// First step whose positive-test count exceeds `threshold`, with the prior
/// updated by that step's observations. `None` when never crossed.
pub fn sis_initialization(
    obs: &[Vec<NodeObs>],
    threshold: usize,
    prior: [f64; 2],
    params: &TestObsParams,
) -> Option<(usize, Vec<[f64; 2]>)> {
    let start = obs
        .iter()
        .position(|row| row.iter().filter(|o| o.is_positive_test()).count() > threshold)?;
    let beliefs = obs[start]
        .iter()
        .map(|o| match o {
            NodeObs::Test(t) => {
                let s = prior[0] * test_obs_density(params, Compartment::S, *t);
                let i = prior[1] * test_obs_density(params, Compartment::I, *t);
                [s / (s + i), i / (s + i)]
            }
            _ => prior,
        })
        .collect();
    Some((start, beliefs))
}

/// Independent uniform draws on the box [low, high].
pub fn uniform_params(n: usize, low: &[f64], high: &[f64], rng: &mut Stream) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            low.iter()
                .zip(high)
                .map(|(&a, &b)| a + (b - a) * rng.random::<f64>())
                .collect()
        })
        .collect()
}

/// Epidemic parameter box: U(0, 0.8)³ × U(0, 0.1) for (β, σ, γ, ρ).
pub const SEIRS_PARAM_BOX: ([f64; 4], [f64; 4]) = ([0.0; 4], [0.8, 0.8, 0.8, 0.1]);

/// SIS parameter box: U(0, 0.8)² for (β, γ).
pub const SIS_PARAM_BOX: ([f64; 2], [f64; 2]) = ([0.0; 2], [0.8, 0.8]);

/// Lorenz parameter box for θ1..θ4.
pub const LORENZ_PARAM_BOX: ([f64; 4], [f64; 4]) = ([5.0, 18.0, 1.0, 0.5], [20.0, 50.0, 8.0, 3.0]);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epidemic::TestOutcome;

    #[test]
    fn star_leaves_get_distance_one() {
        let net = ContactNetwork::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let b = initial_belief_seirs(&net, 0);
        assert_eq!(b[0], SEIRS_INIT_BY_DISTANCE[0]);
        assert!(b[1..].iter().all(|v| *v == SEIRS_INIT_BY_DISTANCE[1]));
    }

    #[test]
    fn isolated_patient_zero_leaves_others_far() {
        let net = ContactNetwork::from_edges(3, &[(1, 2)]).unwrap();
        let b = initial_belief_seirs(&net, 0);
        assert_eq!(b[1], SEIRS_INIT_BY_DISTANCE[3]);
        assert_eq!(b[2], SEIRS_INIT_BY_DISTANCE[3]);
    }

    #[test]
    fn init_vectors_sum_to_one() {
        for v in SEIRS_INIT_BY_DISTANCE {
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sis_start_is_first_crossing() {
        let pos = NodeObs::Test(TestOutcome::Positive);
        let unk = NodeObs::Test(TestOutcome::Unknown);
        let p = TestObsParams::sis(0.1, 0.9, 0.1, 0.1);
        let obs = vec![vec![pos, pos, unk, unk, unk], vec![pos; 5], vec![pos; 5]];
        let (n, b) = sis_initialization(&obs, 3, SIS_PRIOR, &p).unwrap();
        assert_eq!(n, 1);
        assert!(b[0][1] > SIS_PRIOR[1]);
        assert!(sis_initialization(&obs[..1], 3, SIS_PRIOR, &p).is_none());
    }
}
