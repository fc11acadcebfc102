use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use filterkit::epidemic::{LabelModel, SeirsParams, TestObsParams, TestOutcome};
use filterkit::factored::{
    factored_filter_step, seirs_factored_step, EpidemicNodeModel, FactoredBelief, ProductSpaceModel,
};
use filterkit::filter::{
    standard_filter_step, standard_particle_filter_step, DenseBelief, Resampling,
};
use filterkit::graph::{preferential_attachment, ContactNetwork, Partition};
use filterkit::prob::stream;

fn outcomes(l: usize) -> Vec<TestOutcome> {
    (0..l)
        .map(|k| TestOutcome::ALL[(k * 7 + k / 3) % 3])
        .collect()
}

fn beliefs(l: usize) -> Vec<[f64; 4]> {
    (0..l)
        .map(|k| {
            if k % 50 == 0 {
                [0.4, 0.3, 0.2, 0.1]
            } else {
                [0.97, 0.01, 0.01, 0.01]
            }
        })
        .collect()
}

fn closed_form(c: &mut Criterion) {
    let p = SeirsParams::covid();
    let obs = TestObsParams::setup(0.1, 0.1);
    let mut g = c.benchmark_group("factored_closed_form");
    g.sample_size(10);
    for l in [10_000, 100_000] {
        let net = preferential_attachment(l, 3, 1);
        let q = beliefs(l);
        let o = outcomes(l);
        g.bench_with_input(BenchmarkId::from_parameter(l), &l, |b, _| {
            b.iter(|| seirs_factored_step(&p, &obs, &net, black_box(&q), Some(&o)).unwrap())
        });
    }
    g.finish();
}

fn generic_factored(c: &mut Criterion) {
    // Ring lattice of degree 4; the generic step enumerates neighbourhoods.
    let l = 2_000;
    let edges: Vec<(usize, usize)> = (0..l)
        .flat_map(|k| [(k, (k + 1) % l), (k, (k + 2) % l)])
        .collect();
    let net = ContactNetwork::from_edges(l, &edges).unwrap();
    let nm = EpidemicNodeModel {
        model: LabelModel::Seirs(SeirsParams::covid()),
        obs: TestObsParams::setup(0.1, 0.1),
        net: &net,
    };
    let marg: Vec<Vec<f64>> = beliefs(l).iter().map(|v| v.to_vec()).collect();
    let q = FactoredBelief::from_node_marginals(Partition::singleton(l), &marg).unwrap();
    let o = outcomes(l);
    c.bench_function("factored_generic_2000", |b| {
        b.iter(|| factored_filter_step(&nm, black_box(&q), Some(&o[..])).unwrap())
    });
}

fn exact_and_particle(c: &mut Criterion) {
    let l = 5;
    let net = preferential_attachment(l, 2, 1);
    let nm = EpidemicNodeModel {
        model: LabelModel::Seirs(SeirsParams::flu()),
        obs: TestObsParams::setup(0.1, 0.1),
        net: &net,
    };
    let o = outcomes(l);
    let dense = ProductSpaceModel::new(&nm).unwrap();
    let n = 4usize.pow(l as u32);
    let q = DenseBelief {
        p: vec![1.0 / n as f64; n],
    };
    c.bench_function("exact_l5", |b| {
        b.iter(|| standard_filter_step(&dense, black_box(&q), Some(&o[..])).unwrap())
    });

    let sampler = ProductSpaceModel::for_particles(&nm);
    let pf: Vec<Vec<u8>> = (0..300)
        .map(|i| (0..l).map(|k| ((i + k) % 4) as u8).collect())
        .collect();
    c.bench_function("particle_l5_n300", |b| {
        b.iter(|| {
            let mut rng = stream(3, &[]);
            standard_particle_filter_step(
                &sampler,
                black_box(&pf),
                Some(&o[..]),
                Resampling::Systematic,
                &mut rng,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, closed_form, generic_factored, exact_and_particle);
criterion_main!(benches);
