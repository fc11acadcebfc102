//! Observation models: testing outcomes, Dirichlet perturbation, mixture and counts.

use super::{Compartment, ModelError, TestObsParams};
use crate::prob::{ln_dirichlet_density_array, ln_multinomial_density};

/// Result of a test at one node; `Unknown` means no test was performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestOutcome {
    Positive,
    Negative,
    Unknown,
}

impl TestOutcome {
    pub const ALL: [TestOutcome; 3] = [
        TestOutcome::Positive,
        TestOutcome::Negative,
        TestOutcome::Unknown,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// The (+, −, ?) probabilities for compartment `c`.
#[inline]
pub fn test_obs_row(p: &TestObsParams, c: Compartment) -> [f64; 3] {
    let a = p.alpha[c.index()];
    match c {
        Compartment::S | Compartment::R => [a * p.lambda_fp, a * (1.0 - p.lambda_fp), 1.0 - a],
        Compartment::E | Compartment::I => [a * (1.0 - p.lambda_fn), a * p.lambda_fn, 1.0 - a],
    }
}

/// ξ(c)(o) for the testing model.
#[inline]
pub fn test_obs_density(p: &TestObsParams, c: Compartment, o: TestOutcome) -> f64 {
    test_obs_row(p, c)[o.index()]
}

/// Per-compartment likelihood vector of outcome `o`, indexed S, E, I, R.
#[inline]
pub fn test_obs_likelihoods(p: &TestObsParams, o: TestOutcome) -> [f64; 4] {
    Compartment::ALL.map(|c| test_obs_density(p, c, o))
}

/// Testing model at a simplex-labelled node: Σ_c y_c ξ(c)(o).
pub fn test_obs_density_simplex(p: &TestObsParams, y: &[f64; 4], o: TestOutcome) -> f64 {
    Compartment::ALL
        .iter()
        .map(|&c| y[c.index()] * test_obs_density(p, c, o))
        .sum()
}

/// Dir(C s) evaluated at `o`.
pub fn dirichlet_obs_density(c: f64, s: &[f64; 4], o: &[f64; 4]) -> f64 {
    ln_dirichlet_density_array(&s.map(|v| c * v), o).exp()
}

/// Mult(m, s) at counts `o`.
pub fn counts_obs_density(m: u32, s: &[f64; 4], o: &[u32; 4]) -> Result<f64, ModelError> {
    Ok(ln_multinomial_density(m, s, o)?.exp())
}

/// Mixture observation model with confusion weights λ_{pq}, q over four
/// compartments plus '?', and concentration C.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MixtureObs {
    lambda: [[f64; 5]; 4],
    c: f64,
}

impl MixtureObs {
    pub fn new(lambda: [[f64; 5]; 4], c: f64) -> Result<Self, ModelError> {
        for (p, row) in lambda.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 || row.iter().any(|v| *v < 0.0) {
                return Err(ModelError::Config(format!(
                    "mixture row {p} must be a distribution, sums to {s}"
                )));
            }
        }
        if !(c > 0.0) {
            return Err(ModelError::Config(
                "mixture concentration C must be positive".into(),
            ));
        }
        Ok(Self { lambda, c })
    }

    pub fn concentration(&self) -> f64 {
        self.c
    }

    /// β_q = Σ_p λ_{pq} s_p for q = 1..5.
    pub fn beta(&self, s: &[f64; 4]) -> [f64; 5] {
        let mut b = [0.0; 5];
        for (p, row) in self.lambda.iter().enumerate() {
            for q in 0..5 {
                b[q] += row[q] * s[p];
            }
        }
        b
    }

    /// Density at `o`; `None` is the '?' outcome.
    pub fn density(&self, s: &[f64; 4], o: Option<&[f64; 4]>) -> f64 {
        let b = self.beta(s);
        match o {
            None => b[4],
            Some(o) => {
                let mass = b[0] + b[1] + b[2] + b[3];
                if mass <= 0.0 {
                    return 0.0;
                }
                let conc = [b[0], b[1], b[2], b[3]].map(|v| self.c * v);
                if conc.iter().any(|v| *v <= 0.0) {
                    return 0.0;
                }
                mass * ln_dirichlet_density_array(&conc, o).exp()
            }
        }
    }
}

/// Which observation family a run uses.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObsSpaceSpec {
    /// Testing outcomes with explicit '?'.
    Test3(TestObsParams),
    /// Dir(C s) perturbation, present with probability `alpha`.
    SimplexDir { c: f64, alpha: f64 },
    /// Mixture model; '?' is internal to the model.
    Mixture(MixtureObs),
    /// Multinomial counts of `m` draws, present with probability `alpha`.
    Counts { m: u32, alpha: f64 },
}

impl ObsSpaceSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            ObsSpaceSpec::Test3(_) | ObsSpaceSpec::Mixture(_) => Ok(()),
            ObsSpaceSpec::SimplexDir { c, alpha } => {
                if !(*c > 0.0) || !(0.0..=1.0).contains(alpha) {
                    return Err(ModelError::Config("need C > 0 and alpha in [0,1]".into()));
                }
                Ok(())
            }
            ObsSpaceSpec::Counts { alpha, .. } => {
                if !(0.0..=1.0).contains(alpha) {
                    return Err(ModelError::Config("alpha must be in [0,1]".into()));
                }
                Ok(())
            }
        }
    }
}

/// One node's observation at one step. `None` payloads mean no observation
/// (or the '?' outcome of the mixture model).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeObs {
    Test(TestOutcome),
    Simplex(Option<[f64; 4]>),
    Counts(Option<[u32; 4]>),
}

impl NodeObs {
    pub fn is_positive_test(&self) -> bool {
        matches!(self, NodeObs::Test(TestOutcome::Positive))
    }
}
