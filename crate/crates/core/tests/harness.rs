//! End-to-end runs of every filter kind at toy scale.

use filterkit::conditional::FcfWeight;
use filterkit::filter::JitterSchedule;
use filterkit::harness::*;

fn small(name: &str) -> ExperimentConfig {
    let mut cfg = preset(name).unwrap();
    cfg.runs = 2;
    cfg.steps = 12;
    if cfg.network.is_some() && name != "sis-karate" {
        cfg.network = Some(NetworkSource::Synthetic {
            nodes: 40,
            m: 2,
            seed: 7,
        });
    }
    match &mut cfg.filter {
        FilterSpec::FactoredConditional { n, .. }
        | FilterSpec::FactoredConditionalVariational { n, .. } => *n = 8,
        FilterSpec::ConditionalParticle {
            n,
            m,
            weight_samples,
            ..
        } => {
            *n = 6;
            *m = 5;
            *weight_samples = 4;
        }
        FilterSpec::FactoredVariational { samples, .. } => *samples = 16,
        _ => {}
    }
    cfg
}

fn csv_bytes(out: &ExperimentOutput) -> Vec<u8> {
    let mut buf = Vec::new();
    for r in &out.runs {
        write_run_csv(&mut buf, &out.param_names, &r.records).unwrap();
    }
    write_aggregate_csv(&mut buf, &out.param_names, &out.aggregate).unwrap();
    buf
}

fn check(out: &ExperimentOutput, bound: f64) {
    for r in &out.runs {
        assert!(r.survived || !r.records.is_empty() || r.inconclusive || r.attempts > 0);
        for s in &r.records {
            assert!(
                s.state_error.is_finite() && (0.0..=bound).contains(&s.state_error),
                "{}",
                s.state_error
            );
            assert!(s.param_errors.iter().all(|e| e.is_finite()));
        }
    }
}

#[test]
fn every_preset_runs_at_toy_scale() {
    for name in PRESET_NAMES {
        let mut cfg = small(name);
        if name.starts_with("lorenz") {
            cfg.steps = 30;
        }
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.runs.len(), 2, "{name}");
        let bound = if name.starts_with("lorenz") {
            f64::INFINITY
        } else {
            2.0
        };
        check(&out, bound);
    }
}

#[test]
fn all_label_filters_run() {
    let base = small("seirs-covid");
    let filters = [
        FilterSpec::Factored { clusters: None },
        FilterSpec::FactoredParticle {
            n: 20,
            clusters: None,
        },
        FilterSpec::FactoredConditional {
            n: 6,
            jitter: seirs_jitter(),
            weight: FcfWeight::MonteCarlo { samples: 3 },
        },
        FilterSpec::FactoredConditionalParticle {
            n: 4,
            m: 5,
            jitter: seirs_jitter(),
            weight_samples: 3,
            clusters: None,
        },
    ];
    for filter in filters {
        let cfg = ExperimentConfig {
            filter,
            ..base.clone()
        };
        let out = run_experiment(&cfg).unwrap();
        check(&out, 1.0);
        assert!(out.runs.iter().any(|r| r.records.len() == cfg.steps));
    }
}

#[test]
fn clustered_factored_filter_runs() {
    let mut cfg = small("seirs-covid");
    cfg.network = Some(NetworkSource::Synthetic {
        nodes: 10,
        m: 1,
        seed: 5,
    });
    cfg.die_out_filter = false;
    cfg.filter = FilterSpec::Factored {
        clusters: Some((0..5).map(|i| vec![2 * i, 2 * i + 1]).collect()),
    };
    check(&run_experiment(&cfg).unwrap(), 1.0);
}

#[test]
fn exact_and_particle_filters_on_a_tiny_graph() {
    let mut cfg = small("seirs-covid");
    cfg.network = Some(NetworkSource::Synthetic {
        nodes: 5,
        m: 1,
        seed: 3,
    });
    cfg.die_out_filter = false;
    let exact = run_experiment(&ExperimentConfig {
        filter: FilterSpec::Exact,
        ..cfg.clone()
    })
    .unwrap();
    let whole = ExperimentConfig {
        filter: FilterSpec::Factored {
            clusters: Some(vec![(0..5).collect()]),
        },
        ..cfg.clone()
    };
    let factored = run_experiment(&whole).unwrap();
    for (a, b) in exact.runs.iter().zip(&factored.runs) {
        let ea: Vec<f64> = a.records.iter().map(|r| r.state_error).collect();
        let eb: Vec<f64> = b.records.iter().map(|r| r.state_error).collect();
        assert_eq!(ea, eb);
    }
    let pf = run_experiment(&ExperimentConfig {
        filter: FilterSpec::Particle { n: 50 },
        ..cfg
    })
    .unwrap();
    check(&pf, 1.0);
}

#[test]
fn output_is_identical_across_thread_counts() {
    let mut cfg = small("seirs-flu");
    cfg.runs = 3;
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| csv_bytes(&run_experiment(&cfg).unwrap()))
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(3));
}

#[test]
fn files_are_written() {
    let dir = std::env::temp_dir().join(format!("filterkit-harness-{}", std::process::id()));
    let cfg = small("seirs-covid");
    let out = run_and_write(&cfg, &dir).unwrap();
    for r in &out.runs {
        assert!(dir.join(format!("run_{:03}.csv", r.run)).exists());
    }
    let agg = std::fs::read_to_string(dir.join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("step,runs,state_error,"));
    let back = ExperimentConfig::from_path(&dir.join("config.toml")).unwrap();
    assert_eq!(back, cfg);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn die_out_budget_is_reported() {
    let mut cfg = small("seirs-covid");
    cfg.network = Some(NetworkSource::Synthetic {
        nodes: 3,
        m: 1,
        seed: 1,
    });
    cfg.steps = 400;
    cfg.max_attempts = 2;
    cfg.runs = 1;
    let out = run_experiment(&cfg).unwrap();
    let r = &out.runs[0];
    assert!(r.attempts <= 2);
    if !r.survived {
        assert!(r.records.is_empty());
        assert!(out.aggregate.is_empty());
    }
}

#[test]
fn constant_jitter_round_trips_through_toml() {
    let mut cfg = small("lorenz-baseline");
    if let FilterSpec::ConditionalParticle { jitter, .. } = &mut cfg.filter {
        *jitter = JitterSchedule::constant(vec![0.1; 4]);
    }
    let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(back, cfg);
}
