//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Criteria 6 to 8 run at a reduced desk scale (fewer runs, shorter Lorenz
//! horizon) with unchanged tolerances unless `ACCEPTANCE_SCALE=full`.
//! `ACCEPTANCE_ONLY=1,4` selects criteria. The process exits non-zero on a
//! FAIL only when `ACCEPTANCE_STRICT=1`.

#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::type_complexity
)]

use std::time::Instant;

use filterkit::conditional::{
    factored_conditional_filter_step, factored_conditional_particle_step,
};
use filterkit::epidemic::{LabelModel, SeirsParams, TestObsParams, TestOutcome};
use filterkit::factored::{
    counts_projection_gradient, counts_projection_objective, equation_solver, factored_filter_step,
    factored_particle_filter_step, multinomial_dirichlet_posterior, projection_hessian,
    seirs_factored_step, seirs_factored_transition, solver_residuals, EpidemicNodeModel,
    FactoredBelief, FactoredParticleFamily, ProductSpaceModel, DEFAULT_SOLVER_EPS,
};
use filterkit::filter::{
    parameter_pf_step, standard_filter_step, standard_particle_filter_step, DenseBelief,
    JitterSchedule, ParamDomain, ParamFilterSpec, Resampling,
};
use filterkit::graph::{preferential_attachment, ContactNetwork, Partition};
use filterkit::harness::{
    preset, run_experiment, write_aggregate_csv, write_run_csv, ExperimentConfig, ExperimentOutput,
    FilterSpec,
};
use filterkit::prob::{stream, tags, Stream, StreamFactory};
use rand::Rng;

// ---------------------------------------------------------------------------
// Independent oracles written directly from the model definitions
// ---------------------------------------------------------------------------

/// Node transition row: S→E with 1 − (1−β)^d, E→I σ, I→R γ, R→S ρ.
fn oracle_row(p: &SeirsParams, net: &ContactNetwork, s: &[usize], k: usize) -> [f64; 4] {
    let d = net
        .neighbors(k)
        .iter()
        .filter(|&&l| s[l as usize] == 2)
        .count() as i32;
    let stay = (1.0 - p.beta).powi(d);
    match s[k] {
        0 => [stay, 1.0 - stay, 0.0, 0.0],
        1 => [0.0, 1.0 - p.sigma, p.sigma, 0.0],
        2 => [0.0, 0.0, 1.0 - p.gamma, p.gamma],
        _ => [p.rho, 0.0, 0.0, 1.0 - p.rho],
    }
}

/// Testing observation probability of outcome `t` in compartment `c`.
fn oracle_obs(obs: &TestObsParams, c: usize, t: TestOutcome) -> f64 {
    let a = obs.alpha[c];
    let positive = if c == 1 || c == 2 {
        1.0 - obs.lambda_fn
    } else {
        obs.lambda_fp
    };
    match t {
        TestOutcome::Positive => a * positive,
        TestOutcome::Negative => a * (1.0 - positive),
        TestOutcome::Unknown => 1.0 - a,
    }
}

fn decode(mut y: usize, l: usize) -> Vec<usize> {
    (0..l)
        .map(|_| {
            let c = y % 4;
            y /= 4;
            c
        })
        .collect()
}

/// Brute-force Bayes over the joint space with an explicit transition matrix.
fn brute_force_step(
    p: &SeirsParams,
    obs: &TestObsParams,
    net: &ContactNetwork,
    prior: &[f64],
    o: &[TestOutcome],
) -> Vec<f64> {
    let l = net.len();
    let n = prior.len();
    let states: Vec<Vec<usize>> = (0..n).map(|y| decode(y, l)).collect();
    let rows: Vec<Vec<[f64; 4]>> = states
        .iter()
        .map(|s| (0..l).map(|k| oracle_row(p, net, s, k)).collect())
        .collect();
    let mut post = vec![0.0; n];
    for (to, t) in states.iter().enumerate() {
        let mut mass = 0.0;
        for (from, r) in rows.iter().enumerate() {
            let mut tr = prior[from];
            for k in 0..l {
                tr *= r[k][t[k]];
            }
            mass += tr;
        }
        let lik: f64 = (0..l).map(|k| oracle_obs(obs, t[k], o[k])).product();
        post[to] = mass * lik;
    }
    let z: f64 = post.iter().sum();
    post.iter().map(|v| v / z).collect()
}

fn joint_node_marginals(p: &[f64], l: usize) -> Vec<[f64; 4]> {
    let mut m = vec![[0.0; 4]; l];
    for (y, &w) in p.iter().enumerate() {
        for (k, c) in decode(y, l).into_iter().enumerate() {
            m[k][c] += w;
        }
    }
    m
}

fn product_prior(q: &[[f64; 4]]) -> Vec<f64> {
    let l = q.len();
    (0..4usize.pow(l as u32))
        .map(|y| {
            decode(y, l)
                .iter()
                .enumerate()
                .map(|(k, &c)| q[k][c])
                .product()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

fn random_graph(l: usize, p_edge: f64, rng: &mut Stream) -> ContactNetwork {
    let mut edges = Vec::new();
    for u in 0..l {
        for v in 0..u {
            if rng.random::<f64>() < p_edge {
                edges.push((u, v));
            }
        }
    }
    ContactNetwork::from_edges(l, &edges).unwrap()
}

fn random_params(rng: &mut Stream) -> SeirsParams {
    SeirsParams::new(
        rng.random_range(0.05..0.95),
        rng.random_range(0.05..0.95),
        rng.random_range(0.05..0.95),
        rng.random_range(0.01..0.5),
    )
    .unwrap()
}

fn random_obs_params(rng: &mut Stream) -> TestObsParams {
    let alpha = std::array::from_fn(|_| rng.random_range(0.05..0.95));
    TestObsParams::new(
        alpha,
        rng.random_range(0.01..0.4),
        rng.random_range(0.01..0.4),
    )
    .unwrap()
}

fn random_outcomes(l: usize, rng: &mut Stream) -> Vec<TestOutcome> {
    (0..l)
        .map(|_| TestOutcome::ALL[rng.random_range(0..3)])
        .collect()
}

fn random_categorical(rng: &mut Stream) -> [f64; 4] {
    let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.05..1.0));
    let s: f64 = v.iter().sum();
    v.map(|x| x / s)
}

fn random_dense(n: usize, rng: &mut Stream) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = stream(101, &[]);
    let (mut worst_exact, mut worst_closed) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let l = rng.random_range(2..=6);
        let net = random_graph(l, 0.5, &mut rng);
        let p = random_params(&mut rng);
        let obs = random_obs_params(&mut rng);
        let nm = EpidemicNodeModel {
            model: LabelModel::Seirs(p),
            obs,
            net: &net,
        };
        let ps = ProductSpaceModel::new(&nm).unwrap();
        let mut prior = random_dense(4usize.pow(l as u32), &mut rng);
        for _ in 0..3 {
            let o = random_outcomes(l, &mut rng);
            let got = standard_filter_step(&ps, &DenseBelief { p: prior.clone() }, Some(&o[..]))
                .unwrap()
                .p;
            let want = brute_force_step(&p, &obs, &net, &prior, &o);
            worst_exact = worst_exact.max(max_abs_diff(&got, &want));
            prior = want;
        }
        // Closed-form factored transition against its defining sum.
        let q: Vec<[f64; 4]> = (0..l).map(|_| random_categorical(&mut rng)).collect();
        let got = seirs_factored_transition(&p, &net, &q);
        let joint = product_prior(&q);
        for k in 0..l {
            let mut want = [0.0; 4];
            for (y, &w) in joint.iter().enumerate() {
                let row = oracle_row(&p, &net, &decode(y, l), k);
                for c in 0..4 {
                    want[c] += w * row[c];
                }
            }
            worst_closed = worst_closed.max(max_abs_diff(&got[k], &want));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst_exact <= 1e-10 && worst_closed <= 1e-12 && secs < 60.0,
        format!("max |exact - brute force| {worst_exact:.2e} (tol 1e-10), max |closed form - sum| {worst_closed:.2e} (tol 1e-12), {secs:.1} s"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = stream(202, &[]);
    let l = 6;
    let net = random_graph(l, 0.5, &mut rng);
    let p = SeirsParams::new(0.0, 0.3, 0.2, 0.05).unwrap();
    let obs = TestObsParams::setup(0.1, 0.2);
    let nm = EpidemicNodeModel {
        model: LabelModel::Seirs(p),
        obs,
        net: &net,
    };
    let ps = ProductSpaceModel::new(&nm).unwrap();
    let q0: Vec<[f64; 4]> = (0..l).map(|_| random_categorical(&mut rng)).collect();
    let mut joint = DenseBelief {
        p: product_prior(&q0),
    };
    let mut closed = q0.clone();
    let marg: Vec<Vec<f64>> = q0.iter().map(|v| v.to_vec()).collect();
    let mut generic = FactoredBelief::from_node_marginals(Partition::singleton(l), &marg).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let o = random_outcomes(l, &mut rng);
        joint = standard_filter_step(&ps, &joint, Some(&o[..])).unwrap();
        closed = seirs_factored_step(&p, &obs, &net, &closed, Some(&o))
            .unwrap()
            .0;
        generic = factored_filter_step(&nm, &generic, Some(&o[..])).unwrap();
        let exact = joint_node_marginals(&joint.p, l);
        let gen = generic.node_marginals(4);
        for k in 0..l {
            worst = worst
                .max(max_abs_diff(&exact[k], &closed[k]))
                .max(max_abs_diff(&exact[k], &gen[k]));
        }
    }
    outcome(
        worst <= 1e-12,
        format!(
            "beta = 0, L = 6, 100 steps: max |factored - exact marginal| {worst:.2e} (tol 1e-12)"
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = stream(303, &[]);
    let zero_jitter = ParamFilterSpec {
        schedule: JitterSchedule::constant(vec![0.0; 4]),
        domain: ParamDomain::UnitBox,
        scheme: Resampling::Multinomial,
    };
    let mut mismatches = [0usize; 4];
    for cfg in 0..20u64 {
        let l = rng.random_range(2..=5);
        let net = random_graph(l, 0.5, &mut rng);
        let p = random_params(&mut rng);
        let x = p.to_array().to_vec();
        let obs = random_obs_params(&mut rng);
        let nm = EpidemicNodeModel {
            model: LabelModel::Seirs(p),
            obs,
            net: &net,
        };
        let make = |x: &[f64]| EpidemicNodeModel {
            model: LabelModel::Seirs(SeirsParams::from_array(x)),
            obs,
            net: &net,
        };
        let dense = ProductSpaceModel::new(&nm).unwrap();
        let sampler = ProductSpaceModel::for_particles(&nm);
        let single = Partition::single_cluster(l);
        let scheme = if cfg % 2 == 0 {
            Resampling::Multinomial
        } else {
            Resampling::Systematic
        };
        let f = StreamFactory::new(1000 + cfg);

        let mut q1 = DenseBelief {
            p: random_dense(4usize.pow(l as u32), &mut rng),
        };
        let mut q7 = FactoredBelief {
            partition: single.clone(),
            beliefs: vec![q1.p.clone()],
        };
        let mut q10 = vec![q7.clone()];
        let pf0: Vec<Vec<u8>> = (0..40)
            .map(|_| (0..l).map(|_| rng.random_range(0..4u8)).collect())
            .collect();
        let mut pf2 = pf0.clone();
        let mut pf8 = FactoredParticleFamily {
            partition: single.clone(),
            families: vec![pf0.clone()],
        };
        let mut params = vec![x.clone()];
        for step in 1..=5u64 {
            let o = random_outcomes(l, &mut rng);
            // Factored exact filter with one cluster against the exact filter.
            q1 = standard_filter_step(&dense, &q1, Some(&o[..])).unwrap();
            q7 = factored_filter_step(&nm, &q7, Some(&o[..])).unwrap();
            mismatches[0] += usize::from(q7.beliefs[0] != q1.p);
            // Factored particle filter with one cluster against the particle filter.
            let seed = 7000 + 31 * cfg + step;
            pf2 = standard_particle_filter_step(
                &sampler,
                &pf2,
                Some(&o[..]),
                scheme,
                &mut stream(seed, &[]),
            )
            .unwrap();
            pf8 = factored_particle_filter_step(&nm, &pf8, Some(&o[..]), scheme, |_| {
                stream(seed, &[])
            })
            .unwrap()
            .0;
            mismatches[1] += usize::from(pf8.families[0] != pf2);
            // Conditional filters with one parameter particle and one cluster.
            let ps = parameter_pf_step(&params, &zero_jitter, step, &f, step, |_, _, _, _| {
                Ok((0.0, ()))
            })
            .unwrap();
            params = ps.params;
            q10 = factored_conditional_filter_step(make, &params, &ps.lineage, &q10, Some(&o[..]))
                .unwrap();
            mismatches[2] += usize::from(params[0] != x || q10[0].beliefs[0] != q1.p);
        }
        // Conditional particle filter replayed against the particle filter on its streams.
        let mut a2 = pf0.clone();
        let mut a11 = vec![FactoredParticleFamily {
            partition: single.clone(),
            families: vec![pf0.clone()],
        }];
        let mut rng_o = stream(9000 + cfg, &[]);
        for step in 1..=5u64 {
            let o = random_outcomes(l, &mut rng_o);
            a2 = standard_particle_filter_step(
                &sampler,
                &a2,
                Some(&o[..]),
                scheme,
                &mut f.stream(&[tags::STATE_FILTER, step, 0, 0]),
            )
            .unwrap();
            a11 = factored_conditional_particle_step(
                make,
                std::slice::from_ref(&x),
                &[0],
                &a11,
                Some(&o[..]),
                scheme,
                &f,
                step,
            )
            .unwrap();
            mismatches[3] += usize::from(a11[0].families[0] != a2);
        }
    }
    outcome(
        mismatches == [0; 4],
        format!("20 configs x 5 steps, steps differing from the reference: factored exact {}, factored particle {}, conditional exact {}, conditional particle {}", mismatches[0], mismatches[1], mismatches[2], mismatches[3]),
    )
}

/// Leading principal minors by Gaussian elimination without pivoting: the
/// k-th minor is the product of the first k pivots.
fn leading_minors(h: &[[f64; 4]; 4]) -> [f64; 4] {
    let mut a = *h;
    let mut out = [0.0; 4];
    let mut det = 1.0;
    for i in 0..4 {
        det *= a[i][i];
        out[i] = det;
        if a[i][i] == 0.0 {
            break;
        }
        for r in i + 1..4 {
            let f = a[r][i] / a[i][i];
            for c in i..4 {
                a[r][c] -= f * a[i][c];
            }
        }
    }
    out
}

fn criterion_4() -> Outcome {
    let t0 = Instant::now();
    let mut rng = stream(404, &[]);
    let (mut worst_sum, mut worst_res, mut solver_errors) = (0.0f64, 0.0f64, 0usize);
    for i in 0..1000 {
        let k = if i % 2 == 0 { 3.0 } else { 10.0 };
        // Half from expected log-coordinates of a random Dirichlet, half arbitrary.
        let kj: [f64; 4] = if i % 4 < 2 {
            let g = random_categorical(&mut rng);
            let conc = rng.random_range(0.5..50.0);
            let s = filterkit::prob::digamma(conc).unwrap();
            g.map(|v| k * (filterkit::prob::digamma(conc * v).unwrap() - s))
        } else {
            std::array::from_fn(|_| rng.random_range(-40.0..5.0))
        };
        match equation_solver(&kj, k, DEFAULT_SOLVER_EPS) {
            Ok(out) => {
                worst_sum = worst_sum.max((out.gamma.iter().sum::<f64>() - 1.0).abs());
                let r = solver_residuals(&kj, k, &out).unwrap();
                worst_res = worst_res.max(r.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            }
            Err(_) => solver_errors += 1,
        }
    }
    // Stationarity of the objective at the conjugate posterior, checked by
    // central differences as well as by the closed-form gradient.
    // Points follow the filter's use: prior Dir(Kβ), five counted members.
    let (mut worst_grad, mut worst_fd, mut worst_at) = (0.0f64, 0.0f64, 0.0f64);
    let h = 1e-5;
    for i in 0..1000 {
        let k = if i % 2 == 0 { 3.0 } else { 10.0 };
        let a = random_categorical(&mut rng).map(|b| k * b);
        let mut o = [0u32; 4];
        for _ in 0..5 {
            o[rng.random_range(0..4)] += 1;
        }
        let g = multinomial_dirichlet_posterior(&a, &o);
        let grad = counts_projection_gradient(&g, &a, &o).unwrap();
        for j in 0..4 {
            let (mut up, mut dn) = (g, g);
            up[j] += h;
            dn[j] -= h;
            let fd = (counts_projection_objective(&up, &a, &o).unwrap()
                - counts_projection_objective(&dn, &a, &o).unwrap())
                / (2.0 * h);
            worst_grad = worst_grad.max(grad[j].abs());
            if fd.abs() > worst_fd {
                worst_fd = fd.abs();
                worst_at = g.iter().copied().fold(f64::INFINITY, f64::min);
            }
        }
    }
    let mut non_pd = 0;
    for i in 0..100 {
        let k = if i % 2 == 0 { 3.0 } else { 10.0 };
        let g = random_categorical(&mut rng);
        let hess = projection_hessian(&g, k).unwrap();
        non_pd += usize::from(leading_minors(&hess).iter().any(|&m| !(m > 0.0)));
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst_sum <= 2e-3 && worst_res <= DEFAULT_SOLVER_EPS && solver_errors == 0 && worst_grad < 1e-8 && worst_fd < 1e-8 && non_pd == 0 && secs < 60.0,
        format!(
            "max |sum gamma - 1| {worst_sum:.2e} (tol 2e-3), max residual {worst_res:.2e} (tol {DEFAULT_SOLVER_EPS:e}), solver errors {solver_errors}, gradient at posterior {worst_grad:.2e}, by differences {worst_fd:.2e} (tol 1e-8, smallest concentration there {worst_at:.3}), non-PD Hessians {non_pd}/100, {secs:.1} s"
        ),
    )
}

fn surviving(out: &ExperimentOutput) -> usize {
    out.runs
        .iter()
        .filter(|r| r.survived && !r.inconclusive)
        .count()
}

fn window_mean(
    out: &ExperimentOutput,
    lo: usize,
    hi: usize,
    f: impl Fn(&filterkit::harness::AggregateRecord) -> f64,
) -> f64 {
    let v: Vec<f64> = out
        .aggregate
        .iter()
        .filter(|a| a.step >= lo && a.step <= hi)
        .map(f)
        .collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn criterion_5() -> Outcome {
    let t0 = Instant::now();
    let mut cfg = preset("seirs-covid").unwrap();
    cfg.runs = 100;
    cfg.steps = 600;
    let out = run_experiment(&cfg).unwrap();
    let early = window_mean(&out, 10, 50, |a| a.state_error);
    let plateau = window_mean(&out, 200, 600, |a| a.state_error);
    let n = surviving(&out);
    outcome(
        n == cfg.runs && plateau < 0.6 * early && plateau < 0.15,
        format!("{n} surviving runs: mean error steps 10-50 {early:.4}, steps 200-600 {plateau:.4} (need < 0.6x and < 0.15), {:.0} s", t0.elapsed().as_secs_f64()),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope of `y` against `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

fn criterion_6(full: bool) -> Outcome {
    let t0 = Instant::now();
    let mut cfg = preset("seirs-flu").unwrap();
    cfg.runs = if full { 20 } else { 5 };
    cfg.steps = 600;
    let out = run_experiment(&cfg).unwrap();
    let live: Vec<_> = out
        .runs
        .iter()
        .filter(|r| r.records.len() == cfg.steps)
        .collect();
    let at = |step: usize, j: usize| {
        median(
            live.iter()
                .map(|r| r.records[step - 1].param_errors[j])
                .collect(),
        )
    };
    let mut pass = live.len() == cfg.runs;
    let mut parts = Vec::new();
    for (j, name) in out.param_names.iter().enumerate() {
        let e300 = at(300, j);
        let steps: Vec<f64> = (150..=600).map(|s| s as f64).collect();
        let med: Vec<f64> = (150..=600).map(|s| at(s, j)).collect();
        let sl = slope(&steps, &med);
        pass &= e300 < 0.25 && sl <= 0.0;
        parts.push(format!("{name} {e300:.3} (slope {sl:+.1e})"));
    }
    outcome(
        pass,
        format!(
            "{} runs, median error at step 300 (need < 0.25, slope 150-600 <= 0): {}, {:.0} s",
            live.len(),
            parts.join(", "),
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_7(full: bool) -> Outcome {
    let t0 = Instant::now();
    let (runs, steps) = if full { (10, 100_000) } else { (1, 25_000) };
    let window_start = 20_000;
    let run = |name: &str| {
        let mut cfg: ExperimentConfig = preset(name).unwrap();
        cfg.runs = runs;
        cfg.steps = steps;
        run_experiment(&cfg).unwrap()
    };
    let base = run("lorenz-baseline");
    let adapt = run("lorenz-adaptive");
    let dist = window_mean(&base, window_start, steps, |a| a.state_error);
    let final_err = |o: &ExperimentOutput, r: usize| -> f64 {
        o.runs[r].records.last().unwrap().param_errors.iter().sum()
    };
    let wins = (0..runs)
        .filter(|&r| final_err(&adapt, r) < final_err(&base, r))
        .count();
    let need = (8 * runs).div_ceil(10);
    let pairs: Vec<String> = (0..runs)
        .map(|r| format!("{:.3}/{:.3}", final_err(&adapt, r), final_err(&base, r)))
        .collect();
    outcome(
        dist < 1.0 && wins >= need,
        format!(
            "{runs} runs x {steps} steps: baseline mean distance steps {window_start}-{steps} {dist:.3} (need < 1); adaptive better in {wins}/{runs} pairs (need {need}); final error sums adaptive/baseline [{}], {:.0} s",
            pairs.join(", "),
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_8(full: bool) -> Outcome {
    let t0 = Instant::now();
    let mut cfg = preset("sis-karate").unwrap();
    cfg.runs = if full { 20 } else { 3 };
    cfg.steps = 600;
    let out = run_experiment(&cfg).unwrap();
    let at400 = out
        .aggregate
        .iter()
        .find(|a| a.step == 400)
        .map(|a| a.param_errors.clone())
        .unwrap_or_default();
    let plateau = window_mean(&out, 400, 600, |a| a.state_error);
    let n = surviving(&out);
    let pass =
        n == cfg.runs && at400.len() == 2 && at400.iter().all(|&e| e < 0.3) && plateau < 0.25;
    outcome(
        pass,
        format!(
            "{n} surviving runs: mean error at step 400 beta {:.3}, gamma {:.3} (need < 0.3); state error steps 400-600 {plateau:.3} (need < 0.25), {:.0} s",
            at400.first().copied().unwrap_or(f64::NAN),
            at400.get(1).copied().unwrap_or(f64::NAN),
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn csv_bytes(out: &ExperimentOutput) -> Vec<u8> {
    let mut buf = Vec::new();
    for r in &out.runs {
        write_run_csv(&mut buf, &out.param_names, &r.records).unwrap();
    }
    write_aggregate_csv(&mut buf, &out.param_names, &out.aggregate).unwrap();
    buf
}

fn criterion_9() -> Outcome {
    let mut cfg = preset("seirs-flu").unwrap();
    cfg.runs = 3;
    cfg.steps = 20;
    if let FilterSpec::FactoredConditional { n, .. } = &mut cfg.filter {
        *n = 40;
    }
    let bytes: Vec<Vec<u8>> = [1, 2, 8]
        .iter()
        .map(|&t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| csv_bytes(&run_experiment(&cfg).unwrap()))
        })
        .collect();
    let identical = bytes.windows(2).all(|w| w[0] == w[1]);

    let l = 1_100_000;
    let net = preferential_attachment(l, 3, 9);
    let p = SeirsParams::covid();
    let obs = TestObsParams::setup(0.1, 0.1);
    let mut rng = stream(909, &[]);
    let q: Vec<[f64; 4]> = (0..l).map(|_| random_categorical(&mut rng)).collect();
    let o = random_outcomes(l, &mut rng);
    let t0 = Instant::now();
    let (post, _) = seirs_factored_step(&p, &obs, &net, &q, Some(&o)).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let threads = rayon::current_num_threads();
    outcome(
        identical && secs < 2.0 && post.len() == l,
        format!(
            "CSV identical at 1, 2 and 8 threads: {identical}; fully factored step on {l} nodes ({} edges) {secs:.2} s on {threads} thread(s) (need < 2)",
            net.num_edges()
        ),
    )
}

fn main() {
    let full = std::env::var("ACCEPTANCE_SCALE").is_ok_and(|v| v == "full");
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    println!("acceptance scale: {}", if full { "full" } else { "desk" });
    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Outcome>)> = vec![
        (1, "exact filter oracle", Box::new(criterion_1)),
        (
            2,
            "exact factorization with decoupled nodes",
            Box::new(criterion_2),
        ),
        (3, "reduction ladder", Box::new(criterion_3)),
        (4, "variational projection", Box::new(criterion_4)),
        (5, "SEIRS tracking shape", Box::new(criterion_5)),
        (
            6,
            "SEIRS parameter estimation",
            Box::new(move || criterion_6(full)),
        ),
        (
            7,
            "Lorenz tracking and jitter schedules",
            Box::new(move || criterion_7(full)),
        ),
        (
            8,
            "SIS on the karate network",
            Box::new(move || criterion_8(full)),
        ),
        (9, "determinism and throughput", Box::new(criterion_9)),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let r = run();
        failed += usize::from(!r.pass);
        println!(
            "{} criterion {id} ({name}): {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    println!("{failed} criteria failed");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
