//! Error metrics for state and parameter estimates.

use crate::prob::{dirichlet_mean_abs_dev, DirichletParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("state has {truth} nodes but belief has {belief}")]
    Mismatch { truth: usize, belief: usize },
    #[error("true value of parameter {0} is zero; normalized error undefined")]
    ZeroTruth(usize),
    #[error("empty particle population")]
    Empty,
    #[error(transparent)]
    Prob(#[from] crate::prob::ProbError),
}

fn check_len(truth: usize, belief: usize) -> Result<(), MetricError> {
    if truth != belief {
        return Err(MetricError::Mismatch { truth, belief });
    }
    Ok(())
}

/// (1/L) Σ_k (1 − q_k(truth_k)) for categorical node beliefs; `truth`
/// holds label indices. Bounded by 1.
pub fn state_error_categorical<B: AsRef<[f64]>>(
    truth: &[usize],
    beliefs: &[B],
) -> Result<f64, MetricError> {
    check_len(truth.len(), beliefs.len())?;
    let s: f64 = truth
        .iter()
        .zip(beliefs)
        .map(|(&t, q)| 1.0 - q.as_ref()[t])
        .sum();
    Ok(s / truth.len() as f64)
}

/// Average categorical error over several node-belief sets (e.g. one per
/// parameter particle); equals the error of their uniform mixture.
pub fn state_error_categorical_mixture<B: AsRef<[f64]>>(
    truth: &[usize],
    sets: &[Vec<B>],
) -> Result<f64, MetricError> {
    if sets.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut acc = 0.0;
    for s in sets {
        acc += state_error_categorical(truth, s)?;
    }
    Ok(acc / sets.len() as f64)
}

/// Fraction of (particle, node) pairs whose label differs from the truth.
/// Each particle lists all L labels.
pub fn state_error_particles(truth: &[usize], particles: &[Vec<u8>]) -> Result<f64, MetricError> {
    if particles.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut wrong = 0usize;
    for p in particles {
        check_len(truth.len(), p.len())?;
        wrong += truth
            .iter()
            .zip(p)
            .filter(|(&t, &y)| t != y as usize)
            .count();
    }
    Ok(wrong as f64 / (particles.len() * truth.len()) as f64)
}

/// (1/L) Σ_k Σ_j E|y_{k,j} − s_{k,j}| under Dir(a_k). Bounded by 2.
pub fn state_error_dirichlet(truth: &[[f64; 4]], a: &[[f64; 4]]) -> Result<f64, MetricError> {
    check_len(truth.len(), a.len())?;
    let mut s = 0.0;
    for (t, ak) in truth.iter().zip(a) {
        let d = DirichletParams { a: *ak };
        for (j, &tj) in t.iter().enumerate() {
            s += dirichlet_mean_abs_dev(&d, j, tj.clamp(0.0, 1.0))?;
        }
    }
    Ok(s / truth.len() as f64)
}

/// Particle mean of each parameter and the normalized error
/// (1/|x̃_j|)(1/N) Σ_i |x̃_j − x_j^{(i)}|, as (estimate, error) pairs.
pub fn param_error_and_estimate(
    params: &[Vec<f64>],
    truth: &[f64],
) -> Result<Vec<(f64, f64)>, MetricError> {
    if params.is_empty() {
        return Err(MetricError::Empty);
    }
    let n = params.len() as f64;
    truth
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            if t == 0.0 {
                return Err(MetricError::ZeroTruth(j));
            }
            let est = params.iter().map(|x| x[j]).sum::<f64>() / n;
            let err = params.iter().map(|x| (t - x[j]).abs()).sum::<f64>() / n / t.abs();
            Ok((est, err))
        })
        .collect()
}

/// Euclidean distance between the true state and the grand mean of all particles.
pub fn lorenz_state_error(
    truth: &[f64; 3],
    families: &[Vec<[f64; 3]>],
) -> Result<f64, MetricError> {
    let mut mean = [0.0; 3];
    let mut count = 0usize;
    for y in families.iter().flatten() {
        for i in 0..3 {
            mean[i] += y[i];
        }
        count += 1;
    }
    if count == 0 {
        return Err(MetricError::Empty);
    }
    Ok((0..3)
        .map(|i| (truth[i] - mean[i] / count as f64).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Particle-mean estimate and |(x̂_j − θ_j)/θ_j| per parameter.
pub fn lorenz_param_error(
    params: &[Vec<f64>],
    theta: &[f64],
) -> Result<Vec<(f64, f64)>, MetricError> {
    if params.is_empty() {
        return Err(MetricError::Empty);
    }
    theta
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            if t == 0.0 {
                return Err(MetricError::ZeroTruth(j));
            }
            let est = params.iter().map(|x| x[j]).sum::<f64>() / params.len() as f64;
            Ok((est, ((est - t) / t).abs()))
        })
        .collect()
}

/// Suggested particle count M = 10^{0.05 d + 0.78}, rounded.
pub fn particle_count_formula(d: usize) -> usize {
    10f64.powf(0.05 * d as f64 + 0.78).round() as usize
}
