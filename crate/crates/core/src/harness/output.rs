//! CSV output. Floats use Rust's shortest round-trip formatting so files are
//! byte-identical for identical results.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::run::{AggregateRecord, ExperimentOutput, GroundTruth, RunResult, StepRecord};
use super::HarnessError;
use crate::epidemic::{population_properties, NodeObs};

const POPULATION_COLUMNS: [&str; 4] = ["pop_s", "pop_e", "pop_i", "pop_r"];

fn header(names: &[String], with_params: bool, extra: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
    h.push("state_error".into());
    if with_params {
        h.extend(names.iter().map(|n| format!("est_{n}")));
        h.extend(names.iter().map(|n| format!("err_{n}")));
    }
    h.extend(POPULATION_COLUMNS.iter().map(|s| s.to_string()));
    h
}

fn row(lead: &[String], state_error: f64, est: &[f64], err: &[f64], pop: &[f64; 4]) -> Vec<String> {
    let mut r = lead.to_vec();
    r.push(state_error.to_string());
    r.extend(est.iter().map(f64::to_string));
    r.extend(err.iter().map(f64::to_string));
    r.extend(pop.iter().map(f64::to_string));
    r
}

fn has_params(records: &[StepRecord]) -> bool {
    records.first().is_some_and(|r| !r.estimates.is_empty())
}

/// One run's series as CSV.
pub fn write_run_csv<W: Write>(
    w: W,
    names: &[String],
    records: &[StepRecord],
) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header(names, has_params(records), &["step"]))?;
    for r in records {
        out.write_record(row(
            &[r.step.to_string()],
            r.state_error,
            &r.estimates,
            &r.param_errors,
            &r.population,
        ))?;
    }
    out.flush()?;
    Ok(())
}

/// Mean series across runs as CSV.
pub fn write_aggregate_csv<W: Write>(
    w: W,
    names: &[String],
    agg: &[AggregateRecord],
) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    let with_params = agg.first().is_some_and(|a| !a.estimates.is_empty());
    out.write_record(header(names, with_params, &["step", "runs"]))?;
    for a in agg {
        let lead = [a.step.to_string(), a.runs.to_string()];
        out.write_record(row(
            &lead,
            a.state_error,
            &a.estimates,
            &a.param_errors,
            &a.population,
        ))?;
    }
    out.flush()?;
    Ok(())
}

/// Per-run bookkeeping: seed, attempts and status flags.
pub fn write_runs_summary<W: Write>(w: W, runs: &[RunResult]) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "run",
        "seed",
        "attempts",
        "survived",
        "inconclusive",
        "steps",
    ])?;
    for r in runs {
        out.write_record([
            r.run.to_string(),
            r.seed.to_string(),
            r.attempts.to_string(),
            r.survived.to_string(),
            r.inconclusive.to_string(),
            r.records.len().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Ground truth as CSV: population fractions plus observation counts for
/// epidemics, state and observation coordinates for Lorenz.
pub fn write_truth_csv<W: Write>(w: W, truth: &GroundTruth) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    match truth {
        GroundTruth::Epidemic(traj) => {
            out.write_record([
                "step", "pop_s", "pop_e", "pop_i", "pop_r", "observed", "positive",
            ])?;
            for (n, (pop, row)) in population_properties(traj)
                .iter()
                .zip(&traj.obs)
                .enumerate()
            {
                let observed = row
                    .iter()
                    .filter(|o| match o {
                        NodeObs::Test(t) => *t != crate::epidemic::TestOutcome::Unknown,
                        NodeObs::Simplex(v) => v.is_some(),
                        NodeObs::Counts(v) => v.is_some(),
                    })
                    .count();
                let positive = row.iter().filter(|o| o.is_positive_test()).count();
                let mut r = vec![n.to_string()];
                r.extend(pop.iter().map(f64::to_string));
                r.push(observed.to_string());
                r.push(positive.to_string());
                out.write_record(r)?;
            }
        }
        GroundTruth::Lorenz(t) => {
            out.write_record(["step", "y1", "y2", "y3", "o1", "o2"])?;
            for (n, (y, o)) in t.states.iter().zip(&t.obs).enumerate() {
                let mut r = vec![n.to_string()];
                r.extend(y.iter().map(f64::to_string));
                match o {
                    Some(o) => r.extend(o.iter().map(f64::to_string)),
                    None => r.extend([String::new(), String::new()]),
                }
                out.write_record(r)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Write `run_NNN.csv` per run, `aggregate.csv`, `runs.csv` and the
/// resolved `config.toml` into `dir`.
pub fn write_experiment(dir: &Path, output: &ExperimentOutput) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    for r in &output.runs {
        let file = fs::File::create(dir.join(format!("run_{:03}.csv", r.run)))?;
        write_run_csv(file, &output.param_names, &r.records)?;
    }
    write_aggregate_csv(
        fs::File::create(dir.join("aggregate.csv"))?,
        &output.param_names,
        &output.aggregate,
    )?;
    write_runs_summary(fs::File::create(dir.join("runs.csv"))?, &output.runs)?;
    fs::write(dir.join("config.toml"), output.config.to_toml_string()?)?;
    Ok(())
}
