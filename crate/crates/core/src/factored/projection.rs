//! Dirichlet projections: forward-KL projection of a perturbed-observation
//! posterior, the bisection solver behind it, and the conjugate update for
//! multinomial counts.

use rayon::prelude::*;

use super::dirichlet_factored_transition;
use crate::epidemic::{seirs_alpha, NodeObs, SeirsParams};
use crate::filter::{FilterError, Projection, VariationalModel};
use crate::graph::ContactNetwork;
use crate::prob::{
    digamma, dirichlet_sample_array, inverse_digamma, ln_dirichlet_density_array, ln_gamma, tags,
    trigamma, Stream, StreamFactory,
};

/// Default bisection tolerance on λ.
pub const DEFAULT_SOLVER_EPS: f64 = 1e-3;

/// Default number of prior draws for the posterior log-moments.
pub const DEFAULT_PROJECTION_SAMPLES: usize = 256;

/// Smallest concentration used when drawing from a predicted Dirichlet.
const MIN_CONCENTRATION: f64 = 1e-10;

fn psi(x: f64) -> Result<f64, FilterError> {
    digamma(x).map_err(FilterError::from)
}

/// Solution of Σ_j ψ⁻¹((K_j − λ)/K) = K with γ_j = ψ⁻¹((K_j − λ)/K)/K.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOutput {
    pub gamma: [f64; 4],
    pub lambda: f64,
    pub iterations: usize,
}

/// Bisection for the Lagrange multiplier of the Dirichlet projection,
/// stopping once the bracket is narrower than `eps`. The initial bracket is
/// [min_j K_j − Kψ(0.26K), max_j K_j − Kψ(0.24K)]; it is checked, widened
/// once by K if roundoff breaks it, and otherwise reported as an error.
pub fn equation_solver(kj: &[f64; 4], k: f64, eps: f64) -> Result<SolverOutput, FilterError> {
    if !(k > 0.0) || !(eps > 0.0) || kj.iter().any(|v| !v.is_finite()) {
        return Err(FilterError::Solver(format!(
            "need K > 0, eps > 0 and finite K_j; got K = {k}, eps = {eps}, K_j = {kj:?}"
        )));
    }
    let sum_at = |lam: f64| -> f64 { kj.iter().map(|&v| inverse_digamma((v - lam) / k)).sum() };
    let kmax = kj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kmin = kj.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = kmax - k * psi(0.24 * k)?;
    let mut lo = kmin - k * psi(0.26 * k)?;
    if !(sum_at(hi) < k) {
        hi += k;
    }
    if !(sum_at(lo) > k) {
        lo -= k;
    }
    if !(sum_at(hi) < k && sum_at(lo) > k) {
        return Err(FilterError::Solver(format!(
            "no sign change on [{lo}, {hi}] for K_j = {kj:?}, K = {k}"
        )));
    }
    let mut iterations = 0;
    while hi - lo >= eps {
        let mid = 0.5 * (hi + lo);
        if sum_at(mid) > k {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let lambda = 0.5 * (hi + lo);
    let gamma = kj.map(|v| inverse_digamma((v - lambda) / k) / k);
    Ok(SolverOutput {
        gamma,
        lambda,
        iterations,
    })
}

/// Stationarity residuals K_j − Kψ(Kγ_j) − λ.
pub fn solver_residuals(
    kj: &[f64; 4],
    k: f64,
    out: &SolverOutput,
) -> Result<[f64; 4], FilterError> {
    let mut r = [0.0; 4];
    for j in 0..4 {
        r[j] = kj[j] - k * psi(k * out.gamma[j])? - out.lambda;
    }
    Ok(r)
}

/// Hessian of γ ↦ KL(p ‖ Dir(Kγ)): K²[diag ψ'(Kγ_j) − ψ'(KΣγ) 11ᵀ].
pub fn projection_hessian(gamma: &[f64; 4], k: f64) -> Result<[[f64; 4]; 4], FilterError> {
    let s: f64 = gamma.iter().sum();
    let off = trigamma(k * s)?;
    let mut h = [[-k * k * off; 4]; 4];
    for i in 0..4 {
        h[i][i] += k * k * trigamma(k * gamma[i])?;
    }
    Ok(h)
}

/// E_p[ln y_j] under p ∝ Dir(C y)(o) · Dir(a)(y), by self-normalized
/// importance sampling from the prior Dir(a).
pub fn posterior_log_moments(
    a: &[f64; 4],
    o: &[f64; 4],
    c: f64,
    samples: usize,
    rng: &mut Stream,
) -> [f64; 4] {
    let a = a.map(|v| v.max(MIN_CONCENTRATION));
    let draws: Vec<[f64; 4]> = (0..samples)
        .map(|_| dirichlet_sample_array(&a, rng))
        .collect();
    let lw: Vec<f64> = draws
        .iter()
        .map(|y| ln_dirichlet_density_array(&y.map(|v| c * v), o))
        .collect();
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e = [0.0; 4];
    let mut total = 0.0;
    for (y, l) in draws.iter().zip(&lw) {
        let w = (l - max).exp();
        total += w;
        for j in 0..4 {
            e[j] += w * y[j].ln();
        }
    }
    e.map(|v| v / total)
}

/// KL(p ‖ Dir(Kγ)) up to a γ-independent constant, given E_p[ln y_j].
pub fn kl_projection_objective(gamma: &[f64; 4], k: f64, e_log: &[f64; 4]) -> f64 {
    let mut f = -ln_gamma(k * gamma.iter().sum::<f64>());
    for j in 0..4 {
        f += ln_gamma(k * gamma[j]) - (k * gamma[j] - 1.0) * e_log[j];
    }
    f
}

/// Forward-KL projection of Dir(C y)(o) · Dir(a)(y) onto {Dir(Kγ) : Σγ = 1}
/// with K = Σa. Returns the concentration vector Kγ.
pub fn kl_project_to_dirichlet(
    a: &[f64; 4],
    o: &[f64; 4],
    c: f64,
    samples: usize,
    eps: f64,
    rng: &mut Stream,
) -> Result<[f64; 4], FilterError> {
    let k: f64 = a.iter().sum();
    let e = posterior_log_moments(a, o, c, samples, rng);
    let psi_k = psi(k)?;
    let kj = e.map(|v| k * psi_k + k * v);
    let out = equation_solver(&kj, k, eps)?;
    Ok(out.gamma.map(|g| k * g))
}

/// Conjugate update of Dir(a) by multinomial counts: Dir(a + o).
pub fn multinomial_dirichlet_posterior(a: &[f64; 4], o: &[u32; 4]) -> [f64; 4] {
    std::array::from_fn(|j| a[j] + o[j] as f64)
}

/// ln of the Dirichlet-multinomial mass of counts `o` under Dir(a).
pub fn dirichlet_multinomial_ln_mass(a: &[f64; 4], o: &[u32; 4]) -> f64 {
    let m: u32 = o.iter().sum();
    let k: f64 = a.iter().sum();
    let mut v = ln_gamma(m as f64 + 1.0) + ln_gamma(k) - ln_gamma(m as f64 + k);
    for j in 0..4 {
        let oj = o[j] as f64;
        if a[j] == 0.0 {
            if o[j] > 0 {
                return f64::NEG_INFINITY;
            }
            continue;
        }
        v += ln_gamma(oj + a[j]) - ln_gamma(a[j]) - ln_gamma(oj + 1.0);
    }
    v
}

/// Expected log-coordinates under the conjugate posterior Dir(a + o).
fn counts_log_moments(a: &[f64; 4], o: &[u32; 4]) -> Result<[f64; 4], FilterError> {
    let post = multinomial_dirichlet_posterior(a, o);
    let s = psi(post.iter().sum())?;
    let mut t = [0.0; 4];
    for j in 0..4 {
        t[j] = psi(post[j])? - s;
    }
    Ok(t)
}

/// KL(Dir(a + o) ‖ Dir(γ)) up to a constant, in free concentrations γ.
pub fn counts_projection_objective(
    gamma: &[f64; 4],
    a: &[f64; 4],
    o: &[u32; 4],
) -> Result<f64, FilterError> {
    let t = counts_log_moments(a, o)?;
    let mut f = -ln_gamma(gamma.iter().sum());
    for j in 0..4 {
        f += ln_gamma(gamma[j]) - (gamma[j] - 1.0) * t[j];
    }
    Ok(f)
}

/// Gradient ψ(γ_j) − ψ(Σγ) − (ψ(o_j + a_j) − ψ(m + Σa)); zero at γ = a + o.
pub fn counts_projection_gradient(
    gamma: &[f64; 4],
    a: &[f64; 4],
    o: &[u32; 4],
) -> Result<[f64; 4], FilterError> {
    let t = counts_log_moments(a, o)?;
    let s = psi(gamma.iter().sum())?;
    let mut g = [0.0; 4];
    for j in 0..4 {
        g[j] = psi(gamma[j])? - s - t[j];
    }
    Ok(g)
}

/// One simplex-labelled node under a fixed infection pressure, with beliefs
/// Dir(a). The transition maps the mean through the SEIRS update with escape
/// probability (1 − β)^pressure and rescales to concentration `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexNodeModel {
    pub params: SeirsParams,
    pub k: f64,
    pub pressure: f64,
}

/// Observation of one simplex-labelled node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimplexObs {
    /// Dir(C y) perturbation of the state.
    Perturbed {
        c: f64,
        o: [f64; 4],
    },
    Counts([u32; 4]),
}

/// Prior Dir(a) together with the observation that reweights it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletPosterior {
    pub prior: [f64; 4],
    pub obs: SimplexObs,
}

impl VariationalModel for SimplexNodeModel {
    type Belief = [f64; 4];
    type Obs = SimplexObs;
    type Posterior = DirichletPosterior;

    fn transition_update(&self, a: &[f64; 4]) -> [f64; 4] {
        let s: f64 = a.iter().sum();
        let q = (1.0 - self.params.beta).powf(self.pressure);
        seirs_alpha(&self.params, &a.map(|v| v / s), q).map(|v| self.k * v)
    }

    fn observation_update(&self, bar: &[f64; 4], o: &SimplexObs) -> DirichletPosterior {
        DirichletPosterior {
            prior: *bar,
            obs: *o,
        }
    }
}

/// Forward-KL projection onto Dirichlet beliefs: exact for counts, Monte
/// Carlo log-moments plus [`equation_solver`] for perturbations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardKl {
    pub samples: usize,
    pub eps: f64,
}

impl Default for ForwardKl {
    fn default() -> Self {
        Self {
            samples: DEFAULT_PROJECTION_SAMPLES,
            eps: DEFAULT_SOLVER_EPS,
        }
    }
}

impl<M> Projection<M> for ForwardKl
where
    M: VariationalModel<Belief = [f64; 4], Posterior = DirichletPosterior> + ?Sized,
{
    fn project(
        &self,
        _model: &M,
        p: &DirichletPosterior,
        rng: &mut Stream,
    ) -> Result<[f64; 4], FilterError> {
        match p.obs {
            SimplexObs::Counts(o) => Ok(multinomial_dirichlet_posterior(&p.prior, &o)),
            SimplexObs::Perturbed { c, o } => {
                kl_project_to_dirichlet(&p.prior, &o, c, self.samples, self.eps, rng)
            }
        }
    }
}

/// Settings for the fully factored Dirichlet filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletFilterSpec {
    /// Transition concentration K.
    pub k: f64,
    /// Observation concentration C.
    pub c: f64,
    pub projection: ForwardKl,
}

/// One fully factored variational step on Dirichlet node beliefs: the
/// direct transition update, then per observed node a KL projection
/// (perturbation) or the conjugate update (counts). Node `k` projects on
/// stream (PROJECTION, step, k).
pub fn dirichlet_factored_variational_step(
    p: &SeirsParams,
    spec: &DirichletFilterSpec,
    net: &ContactNetwork,
    a: &[[f64; 4]],
    o: Option<&[NodeObs]>,
    f: &StreamFactory,
    step: u64,
) -> Result<Vec<[f64; 4]>, FilterError> {
    let bar = dirichlet_factored_transition(p, spec.k, net, a);
    let Some(o) = o else { return Ok(bar) };
    if o.len() != bar.len() {
        return Err(FilterError::Config(format!(
            "{} observations for {} nodes",
            o.len(),
            bar.len()
        )));
    }
    (0..bar.len())
        .into_par_iter()
        .map(|k| match o[k] {
            NodeObs::Simplex(Some(obs)) => {
                let mut rng = f.stream(&[tags::PROJECTION, step, k as u64]);
                kl_project_to_dirichlet(
                    &bar[k],
                    &obs,
                    spec.c,
                    spec.projection.samples,
                    spec.projection.eps,
                    &mut rng,
                )
            }
            NodeObs::Counts(Some(obs)) => Ok(multinomial_dirichlet_posterior(&bar[k], &obs)),
            _ => Ok(bar[k]),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::standard_variational_filter_step;
    use crate::prob::stream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn solver_recovers_a_known_gamma() {
        let k = 10.0;
        let gamma = [0.1, 0.2, 0.3, 0.4];
        let lambda = 1.7;
        let kj = gamma.map(|g| lambda + k * digamma(k * g).unwrap());
        let out = equation_solver(&kj, k, 1e-10).unwrap();
        for (g, want) in out.gamma.iter().zip(gamma) {
            assert_abs_diff_eq!(*g, want, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(out.lambda, lambda, epsilon = 1e-9);
    }

    #[test]
    fn solver_rejects_bad_input() {
        assert!(equation_solver(&[0.0; 4], 0.0, 1e-3).is_err());
        assert!(equation_solver(&[f64::NAN, 0.0, 0.0, 0.0], 3.0, 1e-3).is_err());
    }

    #[test]
    fn conjugate_gradient_vanishes_at_posterior() {
        let a = [1.0, 0.5, 0.3, 1.2];
        let o = [3, 0, 1, 1];
        let g =
            counts_projection_gradient(&multinomial_dirichlet_posterior(&a, &o), &a, &o).unwrap();
        for v in g {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn dirichlet_multinomial_mass_sums_to_one() {
        let a = [0.7, 1.3, 0.4, 2.0];
        let mut total = 0.0;
        for i in 0..=3u32 {
            for j in 0..=(3 - i) {
                for l in 0..=(3 - i - j) {
                    total += dirichlet_multinomial_ln_mass(&a, &[i, j, l, 3 - i - j - l]).exp();
                }
            }
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn projection_keeps_concentration() {
        let mut rng = stream(4, &[1]);
        let out = kl_project_to_dirichlet(
            &[3.0, 3.0, 2.0, 2.0],
            &[0.5, 0.2, 0.2, 0.1],
            10.0,
            256,
            1e-6,
            &mut rng,
        )
        .unwrap();
        assert_abs_diff_eq!(out.iter().sum::<f64>(), 10.0, epsilon = 1e-4);
        assert!(out[0] > 3.0);
    }

    #[test]
    fn variational_step_on_counts_is_conjugate() {
        let m = SimplexNodeModel {
            params: SeirsParams::covid(),
            k: 3.0,
            pressure: 0.0,
        };
        let q = [1.0, 1.0, 0.5, 0.5];
        let mut rng = stream(0, &[0]);
        let got = standard_variational_filter_step(
            &m,
            &ForwardKl::default(),
            &q,
            Some(&SimplexObs::Counts([2, 1, 0, 2])),
            &mut rng,
        )
        .unwrap();
        let bar = m.transition_update(&q);
        assert_eq!(got, multinomial_dirichlet_posterior(&bar, &[2, 1, 0, 2]));
    }
}
