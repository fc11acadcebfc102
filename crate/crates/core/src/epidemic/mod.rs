//! Epidemic transition and observation models on contact networks.
//!
//! States are either compartment labels per node (`C^L`) or points of the
//! 3-simplex per node (`S^L`). Observation models cover the testing model
//! with explicit unknown outcome, Dirichlet perturbations, the mixture model
//! and multinomial counts.

mod observation;
mod simulate;
mod transition;

pub use observation::*;
pub use simulate::*;
pub use transition::*;

/// Epidemic status of one node or individual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Compartment {
    S = 0,
    E = 1,
    I = 2,
    R = 3,
}

impl Compartment {
    pub const ALL: [Compartment; 4] = [
        Compartment::S,
        Compartment::E,
        Compartment::I,
        Compartment::R,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Prob(#[from] crate::prob::ProbError),
}

fn check_unit(name: &str, v: f64) -> Result<(), ModelError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ModelError::Param(format!("{name} = {v} is not in [0, 1]")))
    }
}

/// SEIRS rates per unit time.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SeirsParams {
    pub beta: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub rho: f64,
}

impl SeirsParams {
    pub fn new(beta: f64, sigma: f64, gamma: f64, rho: f64) -> Result<Self, ModelError> {
        let p = Self {
            beta,
            sigma,
            gamma,
            rho,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_unit("beta", self.beta)?;
        check_unit("sigma", self.sigma)?;
        check_unit("gamma", self.gamma)?;
        check_unit("rho", self.rho)
    }

    /// COVID-like setting: β=0.2, σ=1/3, γ=1/14, ρ=1/180.
    pub fn covid() -> Self {
        Self {
            beta: 0.2,
            sigma: 1.0 / 3.0,
            gamma: 1.0 / 14.0,
            rho: 1.0 / 180.0,
        }
    }

    /// Influenza-like setting: β=0.27, σ=1/2, γ=1/7, ρ=1/90.
    pub fn flu() -> Self {
        Self {
            beta: 0.27,
            sigma: 0.5,
            gamma: 1.0 / 7.0,
            rho: 1.0 / 90.0,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.beta, self.sigma, self.gamma, self.rho]
    }

    pub fn from_array(x: &[f64]) -> Self {
        Self {
            beta: x[0],
            sigma: x[1],
            gamma: x[2],
            rho: x[3],
        }
    }
}

/// SIS rates per unit time.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SisParams {
    pub beta: f64,
    pub gamma: f64,
}

impl SisParams {
    pub fn new(beta: f64, gamma: f64) -> Result<Self, ModelError> {
        check_unit("beta", beta)?;
        check_unit("gamma", gamma)?;
        Ok(Self { beta, gamma })
    }
}

/// Testing observation model: per-compartment testing fractions and error rates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TestObsParams {
    /// α_S, α_E, α_I, α_R.
    pub alpha: [f64; 4],
    pub lambda_fp: f64,
    pub lambda_fn: f64,
}

impl TestObsParams {
    pub fn new(alpha: [f64; 4], lambda_fp: f64, lambda_fn: f64) -> Result<Self, ModelError> {
        for a in alpha {
            check_unit("alpha", a)?;
        }
        check_unit("lambda_fp", lambda_fp)?;
        check_unit("lambda_fn", lambda_fn)?;
        Ok(Self {
            alpha,
            lambda_fp,
            lambda_fn,
        })
    }

    /// Testing fractions α_S=0.2, α_E=0.7, α_I=0.9, α_R=0.05 with the given error rates.
    pub fn setup(lambda_fp: f64, lambda_fn: f64) -> Self {
        Self {
            alpha: [0.2, 0.7, 0.9, 0.05],
            lambda_fp,
            lambda_fn,
        }
    }

    /// SIS testing: α_S, α_I only (E and R rows unused).
    pub fn sis(alpha_s: f64, alpha_i: f64, lambda_fp: f64, lambda_fn: f64) -> Self {
        Self {
            alpha: [alpha_s, 0.0, alpha_i, 0.0],
            lambda_fp,
            lambda_fn,
        }
    }
}

/// Subpopulation contact parameters and the Dirichlet concentration scale K.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SubpopParams {
    pub kappa1: f64,
    pub kappa2: f64,
    pub k: f64,
}

impl SubpopParams {
    pub fn new(kappa1: f64, kappa2: f64, k: f64) -> Result<Self, ModelError> {
        check_unit("kappa1", kappa1)?;
        check_unit("kappa2", kappa2)?;
        if !(k > 0.0) {
            return Err(ModelError::Param(format!("K = {k} must be positive")));
        }
        Ok(Self { kappa1, kappa2, k })
    }
}
