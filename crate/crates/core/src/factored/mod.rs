//! Factored filters: beliefs are products of per-cluster factors over a
//! partition of the nodes.
//!
//! The generic filters here enumerate (dense) or sample (particle) the
//! labels of each cluster and of the clusters its transition depends on.
//! With a single cluster they reduce to the standard filters over the
//! product space, sharing the same arithmetic so results agree bit for bit.

mod closed_form;
mod projection;

pub use closed_form::*;
pub use projection::*;

use rand::Rng;
use rayon::prelude::*;

use crate::epidemic::{test_obs_density, Compartment, LabelModel, TestObsParams, TestOutcome};
use crate::filter::{
    bayes_normalize, log_mean_exp, weight_and_resample, DenseModel, FilterError, ParticleModel,
    Resampling,
};
use crate::graph::{ContactNetwork, Partition};
use crate::prob::{sample_index, Stream};

/// Largest joint configuration count a dense cluster update will enumerate.
pub const MAX_DENSE_CONFIGS: usize = 1 << 24;

/// A model on label vectors whose transition factorizes over nodes given
/// the previous state.
pub trait NodeModel: Sync {
    type Obs: ?Sized + Sync;
    fn num_nodes(&self) -> usize;
    fn num_labels(&self) -> usize;
    /// Nodes other than `k` whose labels the transition of `k` reads.
    fn dependencies(&self, k: usize) -> &[u32];
    /// Next-label probabilities of node `k` written into `out[..num_labels]`.
    /// Only `labels[k]` and the labels of its dependencies are read.
    fn node_transition(&self, k: usize, labels: &[u8], out: &mut [f64]);
    fn node_obs_likelihood(&self, k: usize, label: u8, o: &Self::Obs) -> f64;
}

/// Compartment-label epidemic with the testing observation model.
#[derive(Debug, Clone, Copy)]
pub struct EpidemicNodeModel<'a> {
    pub model: LabelModel,
    pub obs: TestObsParams,
    pub net: &'a ContactNetwork,
}

impl NodeModel for EpidemicNodeModel<'_> {
    type Obs = [TestOutcome];

    fn num_nodes(&self) -> usize {
        self.net.len()
    }

    fn num_labels(&self) -> usize {
        self.model.num_labels()
    }

    fn dependencies(&self, k: usize) -> &[u32] {
        self.net.neighbors(k)
    }

    #[inline]
    fn node_transition(&self, k: usize, labels: &[u8], out: &mut [f64]) {
        let inf = self.model.label_index(Compartment::I) as u8;
        let d = self
            .net
            .neighbors(k)
            .iter()
            .filter(|&&l| labels[l as usize] == inf)
            .count();
        self.model
            .probs(self.model.label(labels[k] as usize), d, out);
    }

    #[inline]
    fn node_obs_likelihood(&self, k: usize, label: u8, o: &[TestOutcome]) -> f64 {
        test_obs_density(&self.obs, self.model.label(label as usize), o[k])
    }
}

/// Write the base-`c` digits of `idx` (least significant first) to `labels[nodes[..]]`.
#[inline]
fn decode_into(mut idx: usize, c: usize, nodes: &[usize], labels: &mut [u8]) {
    for &k in nodes {
        labels[k] = (idx % c) as u8;
        idx /= c;
    }
}

/// Π_k ξ_k(label_k)(o_k) for the configuration `idx` of `nodes`.
fn config_likelihood<M: NodeModel + ?Sized>(
    m: &M,
    nodes: &[usize],
    mut idx: usize,
    o: &M::Obs,
) -> f64 {
    let c = m.num_labels();
    let mut lik = 1.0;
    for &k in nodes {
        lik *= m.node_obs_likelihood(k, (idx % c) as u8, o);
        idx /= c;
    }
    lik
}

/// Σ_k ln ξ_k(labels_k)(o_k) over `nodes`, reading labels positionally.
fn particle_ln_likelihood<M: NodeModel + ?Sized>(
    m: &M,
    nodes: &[usize],
    labels: &[u8],
    o: &M::Obs,
) -> f64 {
    nodes
        .iter()
        .zip(labels)
        .map(|(&k, &y)| m.node_obs_likelihood(k, y, o).ln())
        .sum()
}

/// Fill `probs` (|nodes| × c) with the transition rows of `nodes` under `labels`.
fn node_rows<M: NodeModel + ?Sized>(m: &M, nodes: &[usize], labels: &[u8], probs: &mut [f64]) {
    let c = m.num_labels();
    for (i, &k) in nodes.iter().enumerate() {
        m.node_transition(k, labels, &mut probs[i * c..(i + 1) * c]);
    }
}

/// Add w · Π_i probs_i(y_i) to `out[y]` for every configuration with nonzero mass.
fn add_product_row(w: f64, probs: &[f64], c: usize, out: &mut [f64]) {
    fn rec(probs: &[f64], c: usize, k: usize, stride: usize, idx: usize, w: f64, out: &mut [f64]) {
        if k * c == probs.len() {
            out[idx] += w;
            return;
        }
        for d in 0..c {
            let p = probs[k * c + d];
            if p != 0.0 {
                rec(probs, c, k + 1, stride * c, idx + d * stride, w * p, out);
            }
        }
    }
    rec(probs, c, 0, 1, 0, w, out);
}

fn sample_nodes<M: NodeModel + ?Sized>(
    m: &M,
    nodes: &[usize],
    labels: &[u8],
    rng: &mut Stream,
) -> Vec<u8> {
    let c = m.num_labels();
    let mut buf = [0.0; 8];
    nodes
        .iter()
        .map(|&k| {
            m.node_transition(k, labels, &mut buf[..c]);
            sample_index(&buf[..c], 1.0, rng) as u8
        })
        .collect()
}

/// Sample the next full label vector: node k draws from its transition row.
pub fn sample_label_transition<M: NodeModel + ?Sized>(
    m: &M,
    labels: &[u8],
    rng: &mut Stream,
) -> Vec<u8> {
    let c = m.num_labels();
    let mut buf = [0.0; 8];
    (0..labels.len())
        .map(|k| {
            m.node_transition(k, labels, &mut buf[..c]);
            sample_index(&buf[..c], 1.0, rng) as u8
        })
        .collect()
}

/// Σ_k ln ξ_k(labels_k)(o_k) over all nodes.
pub fn label_ln_likelihood<M: NodeModel + ?Sized>(m: &M, labels: &[u8], o: &M::Obs) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(k, &y)| m.node_obs_likelihood(k, y, o).ln())
        .sum()
}

fn checked_space(c: usize, n: usize) -> Result<usize, FilterError> {
    u32::try_from(n)
        .ok()
        .and_then(|n| c.checked_pow(n))
        .filter(|&s| s <= MAX_DENSE_CONFIGS)
        .ok_or_else(|| {
            FilterError::Config(format!(
                "{c}^{n} joint configurations exceed the dense limit"
            ))
        })
}

/// The joint label space of a [`NodeModel`], as a dense or particle model.
/// States are encoded base `c` with node 0 least significant.
pub struct ProductSpaceModel<'a, M: ?Sized> {
    model: &'a M,
    nodes: Vec<usize>,
    states: usize,
}

impl<'a, M: NodeModel + ?Sized> ProductSpaceModel<'a, M> {
    /// Fails for dense use when c^L exceeds [`MAX_DENSE_CONFIGS`].
    pub fn new(model: &'a M) -> Result<Self, FilterError> {
        let states = checked_space(model.num_labels(), model.num_nodes())?;
        Ok(Self {
            model,
            nodes: (0..model.num_nodes()).collect(),
            states,
        })
    }

    /// Particle use only; no limit on L.
    pub fn for_particles(model: &'a M) -> Self {
        Self {
            model,
            nodes: (0..model.num_nodes()).collect(),
            states: 0,
        }
    }

    pub fn encode(&self, labels: &[u8]) -> usize {
        let c = self.model.num_labels();
        labels.iter().rev().fold(0, |acc, &y| acc * c + y as usize)
    }

    pub fn decode(&self, idx: usize) -> Vec<u8> {
        let mut labels = vec![0u8; self.nodes.len()];
        decode_into(idx, self.model.num_labels(), &self.nodes, &mut labels);
        labels
    }
}

impl<M: NodeModel + ?Sized> DenseModel for ProductSpaceModel<'_, M> {
    type Obs = M::Obs;

    fn num_states(&self) -> usize {
        self.states
    }

    fn add_transition_row(&self, from: usize, w: f64, out: &mut [f64]) {
        let c = self.model.num_labels();
        let labels = self.decode(from);
        let mut probs = vec![0.0; self.nodes.len() * c];
        node_rows(self.model, &self.nodes, &labels, &mut probs);
        add_product_row(w, &probs, c, out);
    }

    fn obs_likelihood(&self, y: usize, o: &M::Obs) -> f64 {
        config_likelihood(self.model, &self.nodes, y, o)
    }
}

impl<M: NodeModel + ?Sized> ParticleModel for ProductSpaceModel<'_, M> {
    type State = Vec<u8>;
    type Obs = M::Obs;

    fn sample_transition(&self, y: &Vec<u8>, rng: &mut Stream) -> Vec<u8> {
        sample_nodes(self.model, &self.nodes, y, rng)
    }

    fn obs_ln_likelihood(&self, y: &Vec<u8>, o: &M::Obs) -> f64 {
        particle_ln_likelihood(self.model, &self.nodes, y, o)
    }
}

/// Clusters whose labels the transition of cluster `l` reads, ascending.
fn touching_clusters<M: NodeModel + ?Sized>(
    m: &M,
    part: &Partition,
    loc: &[(usize, usize)],
    l: usize,
) -> Vec<usize> {
    let mut t: Vec<usize> = part.clusters()[l]
        .iter()
        .flat_map(|&k| std::iter::once(k).chain(m.dependencies(k).iter().map(|&j| j as usize)))
        .map(|k| loc[k].0)
        .collect();
    t.sort_unstable();
    t.dedup();
    t
}

/// Product of dense per-cluster beliefs; cluster labels are encoded base
/// `c` in the partition's member order, first member least significant.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredBelief {
    pub partition: Partition,
    pub beliefs: Vec<Vec<f64>>,
}

impl FactoredBelief {
    /// Product of independent per-node marginals within each cluster.
    pub fn from_node_marginals(
        partition: Partition,
        marginals: &[Vec<f64>],
    ) -> Result<Self, FilterError> {
        let c = marginals.first().map_or(1, Vec::len);
        let mut beliefs = Vec::with_capacity(partition.num_clusters());
        for members in partition.clusters() {
            let n = checked_space(c, members.len())?;
            let b = (0..n)
                .map(|mut idx| {
                    let mut p = 1.0;
                    for &k in members {
                        p *= marginals[k][idx % c];
                        idx /= c;
                    }
                    p
                })
                .collect();
            beliefs.push(b);
        }
        Ok(Self { partition, beliefs })
    }

    /// Per-node marginals over `c` labels.
    pub fn node_marginals(&self, c: usize) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; c]; self.partition.num_nodes()];
        for (members, b) in self.partition.clusters().iter().zip(&self.beliefs) {
            for (mut idx, &p) in b.iter().enumerate() {
                for &k in members {
                    out[k][idx % c] += p;
                    idx /= c;
                }
            }
        }
        out
    }
}

/// One factored filter step. With one cluster this is the dense filter on
/// the product space.
pub fn factored_filter_step<M: NodeModel + ?Sized>(
    m: &M,
    q: &FactoredBelief,
    o: Option<&M::Obs>,
) -> Result<FactoredBelief, FilterError> {
    factored_filter_step_with_evidence(m, q, o).map(|(b, _)| b)
}

/// As [`factored_filter_step`], also returning Σ_l ln Z_l, the log of the
/// observation evidence under the factored prediction.
pub fn factored_filter_step_with_evidence<M: NodeModel + ?Sized>(
    m: &M,
    q: &FactoredBelief,
    o: Option<&M::Obs>,
) -> Result<(FactoredBelief, f64), FilterError> {
    let part = &q.partition;
    if part.num_nodes() != m.num_nodes() || q.beliefs.len() != part.num_clusters() {
        return Err(FilterError::Config(
            "belief does not match the model's nodes".into(),
        ));
    }
    let c = m.num_labels();
    let loc = part.locate();
    let updated: Vec<(Vec<f64>, f64)> = (0..part.num_clusters())
        .into_par_iter()
        .map(|l| {
            let nodes = &part.clusters()[l];
            let touch = touching_clusters(m, part, &loc, l);
            let sizes: Vec<usize> = touch.iter().map(|&t| q.beliefs[t].len()).collect();
            let total = sizes.iter().try_fold(1usize, |acc, &s| {
                acc.checked_mul(s).filter(|&v| v <= MAX_DENSE_CONFIGS)
            });
            if total.is_none() {
                return Err(FilterError::Config(format!(
                    "cluster {l} depends on too many joint configurations"
                )));
            }
            let mut bar = vec![0.0; checked_space(c, nodes.len())?];
            let mut labels = vec![0u8; m.num_nodes()];
            let mut probs = vec![0.0; nodes.len() * c];
            let mut odo = vec![0usize; touch.len()];
            'configs: loop {
                let mut w = q.beliefs[touch[0]][odo[0]];
                for (&t, &i) in touch.iter().zip(&odo).skip(1) {
                    w *= q.beliefs[t][i];
                }
                if w != 0.0 {
                    for (&t, &i) in touch.iter().zip(&odo) {
                        decode_into(i, c, &part.clusters()[t], &mut labels);
                    }
                    node_rows(m, nodes, &labels, &mut probs);
                    add_product_row(w, &probs, c, &mut bar);
                }
                for (i, s) in odo.iter_mut().zip(&sizes) {
                    *i += 1;
                    if *i < *s {
                        continue 'configs;
                    }
                    *i = 0;
                }
                break;
            }
            let ln_z = match o {
                Some(o) => bayes_normalize(&mut bar, |y| config_likelihood(m, nodes, y, o))?,
                None => 0.0,
            };
            Ok((bar, ln_z))
        })
        .collect::<Result<_, FilterError>>()?;
    let ln_z = updated.iter().map(|u| u.1).sum();
    let beliefs = updated.into_iter().map(|u| u.0).collect();
    Ok((
        FactoredBelief {
            partition: part.clone(),
            beliefs,
        },
        ln_z,
    ))
}

/// Per-cluster particle families; each particle lists the labels of the
/// cluster's members in partition order.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredParticleFamily {
    pub partition: Partition,
    pub families: Vec<Vec<Vec<u8>>>,
}

impl FactoredParticleFamily {
    /// `n` independent draws per cluster from per-node marginals.
    pub fn sample_from_marginals(
        partition: Partition,
        marginals: &[Vec<f64>],
        n: usize,
        rng: &mut Stream,
    ) -> Self {
        let families = partition
            .clusters()
            .iter()
            .map(|members| {
                (0..n)
                    .map(|_| {
                        members
                            .iter()
                            .map(|&k| {
                                let total = marginals[k].iter().sum();
                                sample_index(&marginals[k], total, rng) as u8
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            partition,
            families,
        }
    }

    /// Per-node label frequencies over `c` labels.
    pub fn node_marginals(&self, c: usize) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; c]; self.partition.num_nodes()];
        for (members, fam) in self.partition.clusters().iter().zip(&self.families) {
            let w = 1.0 / fam.len() as f64;
            for p in fam {
                for (&k, &y) in members.iter().zip(p) {
                    out[k][y as usize] += w;
                }
            }
        }
        out
    }
}

/// One factored particle-filter step. Cluster `l` draws on `rng_for(l)`;
/// each propagated particle assembles the labels it depends on by drawing
/// one independent member from every touching cluster. Also returns
/// Σ_l ln((1/N_l) Σ_i w_{l,i}), the factored evidence (0 without `o`).
pub fn factored_particle_filter_step<M, R>(
    m: &M,
    fam: &FactoredParticleFamily,
    o: Option<&M::Obs>,
    scheme: Resampling,
    rng_for: R,
) -> Result<(FactoredParticleFamily, f64), FilterError>
where
    M: NodeModel + ?Sized,
    R: Fn(usize) -> Stream + Sync,
{
    let part = &fam.partition;
    if part.num_nodes() != m.num_nodes() || fam.families.iter().any(Vec::is_empty) {
        return Err(FilterError::Config(
            "particle families do not match the model".into(),
        ));
    }
    let loc = part.locate();
    let updated: Vec<(Vec<Vec<u8>>, f64)> = (0..part.num_clusters())
        .into_par_iter()
        .map(|l| {
            let mut rng = rng_for(l);
            let nodes = &part.clusters()[l];
            let touch = touching_clusters(m, part, &loc, l);
            let mut labels = vec![0u8; m.num_nodes()];
            let moved: Vec<Vec<u8>> = (0..fam.families[l].len())
                .map(|i| {
                    for &t in &touch {
                        // Same own-ancestor rule as the standard particle filter.
                        let j = if o.is_none() && t == l {
                            i
                        } else {
                            rng.random_range(0..fam.families[t].len())
                        };
                        for (&k, &y) in part.clusters()[t].iter().zip(&fam.families[t][j]) {
                            labels[k] = y;
                        }
                    }
                    sample_nodes(m, nodes, &labels, &mut rng)
                })
                .collect();
            match o {
                None => Ok((moved, 0.0)),
                Some(o) => {
                    let lnw: Vec<f64> = moved
                        .iter()
                        .map(|y| particle_ln_likelihood(m, nodes, y, o))
                        .collect();
                    let ev = log_mean_exp(&lnw);
                    Ok((weight_and_resample(moved, &lnw, scheme, &mut rng)?, ev))
                }
            }
        })
        .collect::<Result<_, FilterError>>()?;
    let ev = updated.iter().map(|u| u.1).sum();
    let families = updated.into_iter().map(|u| u.0).collect();
    Ok((
        FactoredParticleFamily {
            partition: part.clone(),
            families,
        },
        ev,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epidemic::SeirsParams;
    use crate::filter::{standard_filter_step, standard_particle_filter_step, DenseBelief};
    use crate::prob::stream;

    fn setup() -> (ContactNetwork, EpidemicNodeModel<'static>) {
        let net = Box::leak(Box::new(
            ContactNetwork::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap(),
        ));
        let m = EpidemicNodeModel {
            model: LabelModel::Seirs(SeirsParams {
                beta: 0.4,
                sigma: 0.5,
                gamma: 0.3,
                rho: 0.2,
            }),
            obs: TestObsParams::setup(0.1, 0.2),
            net,
        };
        (net.clone(), m)
    }

    #[test]
    fn encode_decode_round_trip() {
        let (_, m) = setup();
        let ps = ProductSpaceModel::new(&m).unwrap();
        for idx in [0, 1, 17, 255] {
            assert_eq!(ps.encode(&ps.decode(idx)), idx);
        }
    }

    #[test]
    fn dense_rows_sum_to_weight() {
        let (_, m) = setup();
        let ps = ProductSpaceModel::new(&m).unwrap();
        for from in [0, 37, 200] {
            let mut out = vec![0.0; 256];
            ps.add_transition_row(from, 0.5, &mut out);
            assert!((out.iter().sum::<f64>() - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn single_cluster_matches_dense_filter() {
        let (_, m) = setup();
        let marg = vec![vec![0.4, 0.3, 0.2, 0.1]; 4];
        let fb = FactoredBelief::from_node_marginals(Partition::single_cluster(4), &marg).unwrap();
        let o = [
            TestOutcome::Positive,
            TestOutcome::Unknown,
            TestOutcome::Negative,
            TestOutcome::Unknown,
        ];
        let a = factored_filter_step(&m, &fb, Some(&o)).unwrap();
        let ps = ProductSpaceModel::new(&m).unwrap();
        let b = standard_filter_step(
            &ps,
            &DenseBelief {
                p: fb.beliefs[0].clone(),
            },
            Some(&o),
        )
        .unwrap();
        assert_eq!(a.beliefs[0], b.p);
    }

    #[test]
    fn single_cluster_matches_particle_filter() {
        let (_, m) = setup();
        let marg = vec![vec![0.4, 0.3, 0.2, 0.1]; 4];
        let mut rng = stream(1, &[0]);
        let fam = FactoredParticleFamily::sample_from_marginals(
            Partition::single_cluster(4),
            &marg,
            50,
            &mut rng,
        );
        let o = [
            TestOutcome::Positive,
            TestOutcome::Unknown,
            TestOutcome::Negative,
            TestOutcome::Unknown,
        ];
        let (a, _) =
            factored_particle_filter_step(&m, &fam, Some(&o), Resampling::Multinomial, |_| {
                stream(2, &[7])
            })
            .unwrap();
        let ps = ProductSpaceModel::for_particles(&m);
        let b = standard_particle_filter_step(
            &ps,
            &fam.families[0],
            Some(&o),
            Resampling::Multinomial,
            &mut stream(2, &[7]),
        )
        .unwrap();
        assert_eq!(a.families[0], b);
    }

    #[test]
    fn marginals_of_product_are_inputs() {
        let marg = vec![
            vec![0.4, 0.3, 0.2, 0.1],
            vec![0.1, 0.2, 0.3, 0.4],
            vec![1.0, 0.0, 0.0, 0.0],
        ];
        let part = Partition::new(vec![vec![2, 0], vec![1]], 3).unwrap();
        let fb = FactoredBelief::from_node_marginals(part, &marg).unwrap();
        let back = fb.node_marginals(4);
        for (a, b) in back.iter().flatten().zip(marg.iter().flatten()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
