//! Discrete-time stochastic Lorenz system with partial Gaussian observations.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::prob::{stream, StreamFactory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LorenzError {
    #[error("invalid Lorenz parameters: {0}")]
    Param(String),
    #[error("no observation is defined at step {step} (stride {stride})")]
    OffStride { step: usize, stride: usize },
}

/// Initial state used by the reference twin experiment.
pub const Y_STAR: [f64; 3] = [-5.91652, -5.52332, 24.5723];

/// True parameter values θ1..θ4.
pub const THETA_TRUE: [f64; 4] = [10.0, 28.0, 8.0 / 3.0, 0.8];

/// Observation noise variance.
pub const OBS_VAR: f64 = 0.1;

pub type LorenzState = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LorenzParams {
    pub theta: [f64; 4],
    pub dt: f64,
    pub obs_stride: usize,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            theta: THETA_TRUE,
            dt: 0.001,
            obs_stride: 40,
        }
    }
}

impl LorenzParams {
    pub fn new(theta: [f64; 4], dt: f64, obs_stride: usize) -> Result<Self, LorenzError> {
        if !(dt > 0.0) || obs_stride == 0 || theta.iter().any(|v| !v.is_finite()) {
            return Err(LorenzError::Param(format!(
                "dt = {dt}, stride = {obs_stride}, theta = {theta:?}"
            )));
        }
        Ok(Self {
            theta,
            dt,
            obs_stride,
        })
    }

    pub fn with_theta(&self, theta: [f64; 4]) -> Self {
        Self { theta, ..*self }
    }

    /// Whether step `n` carries an observation (n = stride·t, t ≥ 1).
    pub fn is_obs_step(&self, n: usize) -> bool {
        n > 0 && n.is_multiple_of(self.obs_stride)
    }
}

/// Drift-only transition mean.
#[inline]
pub fn lorenz_transition_mean(p: &LorenzParams, y: &LorenzState) -> LorenzState {
    let [t1, t2, t3, _] = p.theta;
    [
        y[0] - p.dt * t1 * (y[0] - y[1]),
        y[1] + p.dt * (t2 * y[0] - y[1] - y[0] * y[2]),
        y[2] + p.dt * (y[0] * y[1] - t3 * y[2]),
    ]
}

/// One transition: independent Gaussian noise of variance dt per component.
#[inline]
pub fn lorenz_transition_sample<R: Rng + ?Sized>(
    p: &LorenzParams,
    y: &LorenzState,
    rng: &mut R,
) -> LorenzState {
    let m = lorenz_transition_mean(p, y);
    let sd = p.dt.sqrt();
    m.map(|v| v + sd * rng.sample::<f64, _>(StandardNormal))
}

/// Log-density of observation `o = (o1, o3)` at step `n`.
pub fn lorenz_obs_ln_density(
    p: &LorenzParams,
    y: &LorenzState,
    o: &[f64; 2],
    n: usize,
) -> Result<f64, LorenzError> {
    if !p.is_obs_step(n) {
        return Err(LorenzError::OffStride {
            step: n,
            stride: p.obs_stride,
        });
    }
    Ok(lorenz_obs_ln_density_unchecked(p.theta[3], y, o))
}

#[inline]
pub(crate) fn lorenz_obs_ln_density_unchecked(theta4: f64, y: &LorenzState, o: &[f64; 2]) -> f64 {
    let norm = -(2.0 * std::f64::consts::PI * OBS_VAR).ln();
    let d1 = o[0] - theta4 * y[0];
    let d3 = o[1] - theta4 * y[2];
    norm - (d1 * d1 + d3 * d3) / (2.0 * OBS_VAR)
}

pub fn lorenz_obs_density(
    p: &LorenzParams,
    y: &LorenzState,
    o: &[f64; 2],
    n: usize,
) -> Result<f64, LorenzError> {
    lorenz_obs_ln_density(p, y, o, n).map(f64::exp)
}

/// Sample an observation of `y`.
pub fn lorenz_obs_sample<R: Rng + ?Sized>(theta4: f64, y: &LorenzState, rng: &mut R) -> [f64; 2] {
    let sd = OBS_VAR.sqrt();
    [
        theta4 * y[0] + sd * rng.sample::<f64, _>(StandardNormal),
        theta4 * y[2] + sd * rng.sample::<f64, _>(StandardNormal),
    ]
}

/// Simulated ground truth: states 0..=n and observations at stride steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LorenzTrajectory {
    pub states: Vec<LorenzState>,
    pub obs: Vec<Option<[f64; 2]>>,
}

pub fn simulate_lorenz(p: &LorenzParams, n_steps: usize, f: &StreamFactory) -> LorenzTrajectory {
    let mut rng = stream(f.seed, &[crate::prob::tags::SIMULATION, 0x4C6F72]);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut obs = Vec::with_capacity(n_steps + 1);
    states.push(Y_STAR);
    obs.push(None);
    for n in 1..=n_steps {
        let y = lorenz_transition_sample(p, &states[n - 1], &mut rng);
        obs.push(
            p.is_obs_step(n)
                .then(|| lorenz_obs_sample(p.theta[3], &y, &mut rng)),
        );
        states.push(y);
    }
    LorenzTrajectory { states, obs }
}
