//! Distribution types, samplers and densities.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, StandardNormal};

use super::special::{ln_gamma, reg_incomplete_beta};
use super::ProbError;
use statrs::function::factorial::ln_factorial;

/// A point of the open 3-simplex in R^4.
///
/// The first three coordinates are the free ones; the fourth is the fill-up
/// `1 - (y1 + y2 + y3)`. It is cached at construction so a very small fourth
/// mass survives the subtraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Simplex3 {
    y: [f64; 4],
}

impl Simplex3 {
    /// Build from the three free coordinates.
    pub fn new(y1: f64, y2: f64, y3: f64) -> Result<Self, ProbError> {
        let y4 = 1.0 - (y1 + y2 + y3);
        Self::check([y1, y2, y3, y4])
    }

    /// Build from all four coordinates, which must sum to one within 1e-9.
    pub fn from_probs(y: [f64; 4]) -> Result<Self, ProbError> {
        let s: f64 = y.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(ProbError::Domain(format!("simplex point sums to {s}")));
        }
        Self::check(y)
    }

    fn check(y: [f64; 4]) -> Result<Self, ProbError> {
        if y.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(Self { y })
        } else {
            Err(ProbError::Domain(format!(
                "{y:?} is not in the open simplex"
            )))
        }
    }

    pub fn y1(&self) -> f64 {
        self.y[0]
    }
    pub fn y2(&self) -> f64 {
        self.y[1]
    }
    pub fn y3(&self) -> f64 {
        self.y[2]
    }
    pub fn y4(&self) -> f64 {
        self.y[3]
    }

    pub fn to_array(&self) -> [f64; 4] {
        self.y
    }
}

/// Concentration parameters of a four-component Dirichlet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletParams {
    pub a: [f64; 4],
}

impl DirichletParams {
    pub fn new(a: [f64; 4]) -> Result<Self, ProbError> {
        if a.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(Self { a })
        } else {
            Err(ProbError::Domain(format!(
                "Dirichlet concentrations must be positive, got {a:?}"
            )))
        }
    }

    /// Total concentration α_0.
    pub fn sum(&self) -> f64 {
        self.a.iter().sum()
    }

    /// Normalized means α_i / α_0.
    pub fn mean(&self) -> [f64; 4] {
        let s = self.sum();
        self.a.map(|v| v / s)
    }
}

/// A probability vector over a finite label set.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDist {
    p: Vec<f64>,
}

impl CategoricalDist {
    pub fn new(p: Vec<f64>) -> Result<Self, ProbError> {
        if p.is_empty() || p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(ProbError::Domain(
                "categorical entries must be finite and nonnegative".into(),
            ));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(ProbError::Domain(format!("categorical entries sum to {s}")));
        }
        Ok(Self { p })
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.p, 1.0, rng)
    }
}

/// Diagonal Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self, ProbError> {
        if mean.len() != var.len() {
            return Err(ProbError::Domain("mean and variance lengths differ".into()));
        }
        if var.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(ProbError::Domain(
                "Gaussian variances must be positive".into(),
            ));
        }
        Ok(Self { mean, var })
    }
}

/// Draw an index with probability proportional to `w`, given the precomputed total.
pub(crate) fn sample_index<R: Rng + ?Sized>(w: &[f64], total: f64, rng: &mut R) -> usize {
    let mut u = rng.random::<f64>() * total;
    for (i, &wi) in w.iter().enumerate() {
        if u < wi {
            return i;
        }
        u -= wi;
    }
    // Roundoff can leave u marginally above the last positive cell.
    w.iter().rposition(|&x| x > 0.0).unwrap_or(w.len() - 1)
}

/// Sample a label from (possibly unnormalized) nonnegative weights.
pub fn categorical_sample<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> Result<usize, ProbError> {
    if p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(ProbError::Domain(
            "categorical weights must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = p.iter().sum();
    if !(total > 0.0) {
        return Err(ProbError::Domain("categorical weights sum to zero".into()));
    }
    Ok(sample_index(p, total, rng))
}

/// Scalar normal draw; `sd` must be nonnegative.
pub(crate) fn normal<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + sd * z
}

/// Sample a diagonal Gaussian.
pub fn gaussian_sample<R: Rng + ?Sized>(
    g: &GaussianSpec,
    rng: &mut R,
) -> Result<Vec<f64>, ProbError> {
    if g.var.iter().any(|v| !(*v > 0.0)) {
        return Err(ProbError::Domain(
            "Gaussian variance must be positive".into(),
        ));
    }
    Ok(g.mean
        .iter()
        .zip(&g.var)
        .map(|(m, v)| normal(*m, v.sqrt(), rng))
        .collect())
}

/// Sample counts of `m` draws from `p`.
pub fn multinomial_sample<R: Rng + ?Sized>(
    m: u32,
    p: &[f64],
    rng: &mut R,
) -> Result<Vec<u32>, ProbError> {
    if p.is_empty() || p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(ProbError::Domain(
            "multinomial probabilities must be nonnegative".into(),
        ));
    }
    let total: f64 = p.iter().sum();
    if !(total > 0.0) {
        return Err(ProbError::Domain(
            "multinomial probabilities sum to zero".into(),
        ));
    }
    let mut out = vec![0u32; p.len()];
    let mut left = m as u64;
    let mut mass = total;
    for (i, &pi) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == p.len() || pi >= mass {
            out[i] = left as u32;
            break;
        }
        let q = (pi / mass).clamp(0.0, 1.0);
        let k = Binomial::new(left, q)
            .expect("probability clamped to [0,1]")
            .sample(rng);
        out[i] = k as u32;
        left -= k;
        mass -= pi;
    }
    Ok(out)
}

/// Sample a Dirichlet, returning all four coordinates.
///
/// Gamma variates are drawn in log space so tiny concentrations do not
/// underflow to an exact zero; coordinates are floored at the smallest normal
/// double to stay inside the open simplex.
pub fn dirichlet_sample_array<R: Rng + ?Sized>(a: &[f64; 4], rng: &mut R) -> [f64; 4] {
    let mut lg = [0.0; 4];
    for (l, &ai) in lg.iter_mut().zip(a) {
        *l = ln_gamma_variate(ai, rng);
    }
    let m = lg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut y = lg.map(|l| (l - m).exp().max(f64::MIN_POSITIVE));
    let s: f64 = y.iter().sum();
    for v in &mut y {
        *v /= s;
    }
    y
}

fn ln_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0)
            .expect("positive shape")
            .sample(rng)
            .ln()
    } else {
        // G(a) = G(a+1) * U^(1/a)
        let g = Gamma::new(shape + 1.0, 1.0)
            .expect("positive shape")
            .sample(rng);
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        g.ln() + u.ln() / shape
    }
}

/// Sample a Dirichlet as a [`Simplex3`].
pub fn dirichlet_sample<R: Rng + ?Sized>(d: &DirichletParams, rng: &mut R) -> Simplex3 {
    Simplex3 {
        y: dirichlet_sample_array(&d.a, rng),
    }
}

/// Log density of Dir(a) at an interior point `y`; `-inf` on the boundary.
pub fn ln_dirichlet_density_array(a: &[f64; 4], y: &[f64; 4]) -> f64 {
    if y.iter().any(|v| !(*v > 0.0)) {
        return f64::NEG_INFINITY;
    }
    let s: f64 = a.iter().sum();
    let mut out = ln_gamma(s);
    for (ai, yi) in a.iter().zip(y) {
        out += (ai - 1.0) * yi.ln() - ln_gamma(*ai);
    }
    out
}

/// Dirichlet density with respect to Lebesgue measure on the 3-simplex
/// (coordinates y1..y3). Boundary points get density 0.
pub fn dirichlet_density(d: &DirichletParams, y: &Simplex3) -> f64 {
    ln_dirichlet_density_array(&d.a, &y.y).exp()
}

/// Log of the multinomial mass Mult(m, p) at counts `o`.
pub fn ln_multinomial_density(m: u32, p: &[f64; 4], o: &[u32; 4]) -> Result<f64, ProbError> {
    let total: u64 = o.iter().map(|&v| v as u64).sum();
    if total != m as u64 {
        return Err(ProbError::Domain(format!(
            "counts sum to {total}, expected {m}"
        )));
    }
    let mut out = ln_factorial(m as u64);
    for (&oj, &pj) in o.iter().zip(p) {
        out -= ln_factorial(oj as u64);
        if oj > 0 {
            if pj <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            out += oj as f64 * pj.ln();
        }
    }
    Ok(out)
}

/// Multinomial mass Mult(m, p) at counts `o`.
pub fn multinomial_density(m: u32, p: &[f64; 4], o: &[u32; 4]) -> Result<f64, ProbError> {
    ln_multinomial_density(m, p, o).map(f64::exp)
}

/// E|c - y_j| under Dir(d), with `j` a zero-based component index.
pub fn dirichlet_mean_abs_dev(d: &DirichletParams, j: usize, c: f64) -> Result<f64, ProbError> {
    if j >= 4 || !(0.0..=1.0).contains(&c) {
        return Err(ProbError::Domain(format!(
            "need j < 4 and c in [0,1], got j={j}, c={c}"
        )));
    }
    let a0 = d.sum();
    let aj = d.a[j];
    let rest = a0 - aj;
    let mean = aj / a0;
    let i1 = reg_incomplete_beta(c, aj, rest)?;
    let i2 = reg_incomplete_beta(c, aj + 1.0, rest)?;
    Ok(2.0 * (c * i1 - mean * i2) + mean - c)
}
