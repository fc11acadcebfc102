//! Digamma, trigamma, their inverse, and the regularized incomplete beta function.
//!
//! Digamma and trigamma shift the argument upward with the recurrence until the
//! asymptotic expansion is accurate, then sum the expansion.

use super::ProbError;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const ASYMPTOTIC_FROM: f64 = 10.0;

/// Natural log of the gamma function.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// The digamma function ψ(x) = d/dx ln Γ(x), for x > 0.
pub fn digamma(x: f64) -> Result<f64, ProbError> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(ProbError::Domain(format!(
            "digamma requires x > 0, got {x}"
        )));
    }
    Ok(digamma_unchecked(x))
}

fn digamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < ASYMPTOTIC_FROM {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let z = inv * inv;
    // Bernoulli series: B_2k / (2k x^2k)
    let series = z
        * (1.0 / 12.0
            - z * (1.0 / 120.0
                - z * (1.0 / 252.0
                    - z * (1.0 / 240.0
                        - z * (1.0 / 132.0 - z * (691.0 / 32760.0 - z * (1.0 / 12.0)))))));
    shift + x.ln() - 0.5 * inv - series
}

/// The trigamma function ψ'(x), for x > 0.
pub fn trigamma(x: f64) -> Result<f64, ProbError> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(ProbError::Domain(format!(
            "trigamma requires x > 0, got {x}"
        )));
    }
    Ok(trigamma_unchecked(x))
}

fn trigamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < ASYMPTOTIC_FROM {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let z = inv * inv;
    let series = inv
        + 0.5 * z
        + inv
            * z
            * (1.0 / 6.0
                - z * (1.0 / 30.0
                    - z * (1.0 / 42.0
                        - z * (1.0 / 30.0
                            - z * (5.0 / 66.0 - z * (691.0 / 2730.0 - z * (7.0 / 6.0)))))));
    shift + series
}

/// Inverse of the digamma function: returns x > 0 with ψ(x) = v.
///
/// Newton iteration from the usual initializer, capped at 50 iterations.
pub fn inverse_digamma(v: f64) -> f64 {
    let mut x = if v >= -2.22 {
        v.exp() + 0.5
    } else {
        -1.0 / (v + EULER_GAMMA)
    };
    for _ in 0..50 {
        let step = (digamma_unchecked(x) - v) / trigamma_unchecked(x);
        let mut next = x - step;
        if next <= 0.0 {
            next = 0.5 * x;
        }
        let done = (next - x).abs() <= 1e-15 * x;
        x = next;
        if done {
            break;
        }
    }
    x
}

/// Regularized incomplete beta function I(z; a, b).
pub fn reg_incomplete_beta(z: f64, a: f64, b: f64) -> Result<f64, ProbError> {
    if !(0.0..=1.0).contains(&z) || !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(ProbError::Domain(format!(
            "incomplete beta needs z in [0,1], a, b > 0; got z={z}, a={a}, b={b}"
        )));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if z == 1.0 {
        return Ok(1.0);
    }
    let ln_front = a * z.ln() + b * (1.0 - z).ln() - ln_beta(a, b);
    // The continued fraction converges fast on the side of the mean closer to zero.
    let value = if z < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(z, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(1.0 - z, b, a) / b
    };
    Ok(value.clamp(0.0, 1.0))
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_cf(z: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * z / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * z / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * z / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}
