//! Per-node and global transition models.

use super::{Compartment, ModelError, SeirsParams, SisParams, SubpopParams};
use crate::graph::ContactNetwork;
use crate::prob::{CategoricalDist, DirichletParams};

/// (1-β)^d, exact repeated multiplication for small d.
#[inline]
pub fn escape_probability(beta: f64, d: usize) -> f64 {
    if d <= 32 {
        (1.0 - beta).powi(d as i32)
    } else {
        (d as f64 * (1.0 - beta).ln()).exp()
    }
}

/// SEIRS next-label probabilities for a node in `c` with `d` infectious neighbours.
#[inline]
pub fn seirs_node_probs(p: &SeirsParams, c: Compartment, d: usize) -> [f64; 4] {
    match c {
        Compartment::S => {
            let q = escape_probability(p.beta, d);
            [q, 1.0 - q, 0.0, 0.0]
        }
        Compartment::E => [0.0, 1.0 - p.sigma, p.sigma, 0.0],
        Compartment::I => [0.0, 0.0, 1.0 - p.gamma, p.gamma],
        Compartment::R => [p.rho, 0.0, 0.0, 1.0 - p.rho],
    }
}

/// SIS next-label probabilities over (S, I).
#[inline]
pub fn sis_node_probs(p: &SisParams, c: Compartment, d: usize) -> [f64; 2] {
    match c {
        Compartment::S => {
            let q = escape_probability(p.beta, d);
            [q, 1.0 - q]
        }
        _ => [p.gamma, 1.0 - p.gamma],
    }
}

fn infectious_count(net: &ContactNetwork, s: &[Compartment], k: usize) -> usize {
    net.neighbors(k)
        .iter()
        .filter(|&&l| s[l as usize] == Compartment::I)
        .count()
}

fn check_state(net: &ContactNetwork, len: usize, k: usize) -> Result<(), ModelError> {
    if len != net.len() || k >= net.len() {
        return Err(ModelError::Config(format!(
            "state length {len} / node {k} do not fit L = {}",
            net.len()
        )));
    }
    Ok(())
}

/// Per-node SEIRS transition distribution over {S, E, I, R}.
pub fn seirs_node_transition(
    p: &SeirsParams,
    net: &ContactNetwork,
    s: &[Compartment],
    k: usize,
) -> Result<CategoricalDist, ModelError> {
    check_state(net, s.len(), k)?;
    Ok(CategoricalDist::new(
        seirs_node_probs(p, s[k], infectious_count(net, s, k)).to_vec(),
    )?)
}

/// Per-node SIS transition distribution over {S, I}.
pub fn sis_node_transition(
    p: &SisParams,
    net: &ContactNetwork,
    s: &[Compartment],
    k: usize,
) -> Result<CategoricalDist, ModelError> {
    check_state(net, s.len(), k)?;
    Ok(CategoricalDist::new(
        sis_node_probs(p, s[k], infectious_count(net, s, k)).to_vec(),
    )?)
}

/// A per-node model on compartment labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelModel {
    Seirs(SeirsParams),
    Sis(SisParams),
}

impl LabelModel {
    /// |C|: 4 for SEIRS, 2 for SIS.
    pub fn num_labels(&self) -> usize {
        match self {
            LabelModel::Seirs(_) => 4,
            LabelModel::Sis(_) => 2,
        }
    }

    /// Position of `c` in this model's label set.
    pub fn label_index(&self, c: Compartment) -> usize {
        match self {
            LabelModel::Seirs(_) => c.index(),
            LabelModel::Sis(_) => usize::from(c != Compartment::S),
        }
    }

    pub fn label(&self, i: usize) -> Compartment {
        match self {
            LabelModel::Seirs(_) => Compartment::from_index(i),
            LabelModel::Sis(_) => [Compartment::S, Compartment::I][i],
        }
    }

    /// Next-label probabilities for a node in `c` with `d` infectious
    /// neighbours, written into `out[..num_labels]`.
    #[inline]
    pub fn probs(&self, c: Compartment, d: usize, out: &mut [f64]) {
        match self {
            LabelModel::Seirs(p) => out[..4].copy_from_slice(&seirs_node_probs(p, c, d)),
            LabelModel::Sis(p) => out[..2].copy_from_slice(&sis_node_probs(p, c, d)),
        }
    }

    /// Next-label probabilities of node `k` under global state `s`.
    pub fn node_probs(&self, net: &ContactNetwork, s: &[Compartment], k: usize, out: &mut [f64]) {
        self.probs(s[k], infectious_count(net, s, k), out)
    }
}

/// τ(s)(s') = Π_k τ^{(k)}(s)(s'_k).
pub fn global_transition_density(
    model: &LabelModel,
    net: &ContactNetwork,
    s: &[Compartment],
    s_next: &[Compartment],
) -> Result<f64, ModelError> {
    if s.len() != net.len() || s_next.len() != net.len() {
        return Err(ModelError::Config("state lengths must equal L".into()));
    }
    let mut buf = [0.0; 4];
    let mut out = 1.0;
    for k in 0..net.len() {
        model.node_probs(net, s, k, &mut buf);
        out *= buf[model.label_index(s_next[k])];
    }
    Ok(out)
}

/// Mean vector of the Dirichlet transition given the escape probability `q`
/// (probability that a susceptible avoids infection).
#[inline]
pub fn seirs_alpha(p: &SeirsParams, s: &[f64; 4], q: f64) -> [f64; 4] {
    [
        p.rho * s[3] + q * s[0],
        (1.0 - q) * s[0] + (1.0 - p.sigma) * s[1],
        p.sigma * s[1] + (1.0 - p.gamma) * s[2],
        p.gamma * s[2] + (1.0 - p.rho) * s[3],
    ]
}

/// Dirichlet-labelled SEIRS transition: Dir(K α) with pressure exponent Σ_{l∈N_k} s_{l,3}.
pub fn dirichlet_node_transition(
    p: &SeirsParams,
    k_conc: f64,
    net: &ContactNetwork,
    s: &[[f64; 4]],
    k: usize,
) -> DirichletParams {
    let mut exponent = 0.0;
    for &l in net.neighbors(k) {
        exponent += s[l as usize][2];
    }
    let alpha = seirs_alpha(p, &s[k], (1.0 - p.beta).powf(exponent));
    DirichletParams {
        a: alpha.map(|v| k_conc * v),
    }
}

/// Subpopulation transition: exponent i_k + i_{N_k} with
/// i_k = (M_k - 1) κ1 s_{k,3} and i_{N_k} = Σ_l M_l κ2 s_{l,3}.
pub fn subpop_node_transition(
    p: &SeirsParams,
    sub: &SubpopParams,
    net: &ContactNetwork,
    s: &[[f64; 4]],
    k: usize,
) -> DirichletParams {
    let mut i_nbrs = 0.0;
    for &l in net.neighbors(k) {
        i_nbrs += net.subpop_size(l as usize) as f64 * sub.kappa2 * s[l as usize][2];
    }
    let i_self = (net.subpop_size(k) as f64 - 1.0) * sub.kappa1 * s[k][2];
    let alpha = seirs_alpha(p, &s[k], (1.0 - p.beta).powf(i_self + i_nbrs));
    DirichletParams {
        a: alpha.map(|v| sub.k * v),
    }
}
