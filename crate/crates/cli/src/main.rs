use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use filterkit::epidemic::TestObsParams;
use filterkit::graph::{load_edge_list_path, DynamicNetwork};
use filterkit::harness::{
    derive_seed, preset, run_and_write, simulate_ground_truth, write_truth_csv, ExperimentConfig,
    NetworkSource, Networks, PRESET_NAMES,
};

#[derive(Parser)]
#[command(
    name = "filterkit",
    version,
    about = "Filtering experiments on epidemic and Lorenz models"
)]
struct Cli {
    /// Worker threads (defaults to all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Setup {
    /// TOML experiment configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named preset (see `filterkit presets`).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the ground truth once and write truth.csv.
    Simulate(Setup),
    /// Run the configured filter once against a fresh simulation.
    Filter(Setup),
    /// Run all configured runs and write per-run and aggregate CSVs.
    Experiment {
        #[command(flatten)]
        setup: Setup,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Load a network and print its summary.
    ValidateGraph {
        /// Edge-list file, or a manifest with --dynamic.
        path: Option<PathBuf>,
        #[arg(long)]
        dynamic: bool,
        /// Use the bundled karate club network.
        #[arg(long, conflicts_with = "path")]
        karate: bool,
    },
    /// List presets, or print one as TOML.
    Presets { name: Option<String> },
}

fn load_setup(s: &Setup) -> Result<ExperimentConfig> {
    let mut cfg = match (&s.config, &s.preset) {
        (Some(path), _) => ExperimentConfig::from_path(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        (None, Some(name)) => preset(name).with_context(|| format!("unknown preset {name:?}"))?,
        (None, None) => bail!("pass --config or --preset"),
    };
    if let Some(seed) = s.seed {
        cfg.seed = seed;
    }
    if let Some(steps) = s.steps {
        cfg.steps = steps;
    }
    Ok(cfg)
}

fn run(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let output = run_and_write(cfg, out)?;
    let survived = output
        .runs
        .iter()
        .filter(|r| r.survived && !r.inconclusive)
        .count();
    log::info!("{survived}/{} runs produced series", output.runs.len());
    if let Some(last) = output.aggregate.last() {
        println!(
            "step {}: mean state error {:.4}",
            last.step, last.state_error
        );
        for (name, err) in output.param_names.iter().zip(&last.param_errors) {
            println!("  {name}: mean error {err:.4}");
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn validate_graph(path: Option<&Path>, dynamic: bool, karate: bool) -> Result<()> {
    let nets = if karate {
        Networks::load(&NetworkSource::Karate)?
    } else {
        let path = path.context("pass an edge-list path or --karate")?;
        if dynamic {
            Networks::Dynamic(DynamicNetwork::load_manifest(path)?)
        } else {
            Networks::Static(load_edge_list_path(path)?)
        }
    };
    let snapshots = match &nets {
        Networks::Static(_) => 1,
        Networks::Dynamic(d) => d.len(),
    };
    let mut w = io::stdout().lock();
    for n in 0..snapshots {
        let net = nets.at(n);
        let (min, mean, max) = net.degree_stats();
        let reach = net.bfs_distances(0).iter().filter(|d| d.is_some()).count();
        writeln!(
            w,
            "snapshot {n}: {} nodes, {} edges, degree min {min} mean {mean:.3} max {max}, {} self-loops dropped, {reach} reachable from node 0",
            net.len(),
            net.num_edges(),
            net.self_loops_dropped(),
        )?;
    }
    Ok(())
}

fn presets(name: Option<&str>) -> Result<()> {
    match name {
        None => {
            for p in PRESET_NAMES {
                println!("{p}");
            }
            println!("obs-setup");
        }
        Some("obs-setup") => {
            println!("# testing observation parameters for p_test = 0.1 and p_symp = 0.1");
            print!("{}", toml::to_string(&TestObsParams::setup(0.1, 0.1))?);
        }
        Some(n) => print!(
            "{}",
            preset(n)
                .with_context(|| format!("unknown preset {n:?}"))?
                .to_toml_string()?
        ),
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring thread pool")?;
    }
    match cli.command {
        Command::Simulate(s) => {
            let cfg = load_setup(&s)?;
            let truth = simulate_ground_truth(&cfg, derive_seed(cfg.seed, 0, 0))?;
            fs::create_dir_all(&s.out)?;
            let path = s.out.join("truth.csv");
            write_truth_csv(fs::File::create(&path)?, &truth)?;
            println!("wrote {}", path.display());
        }
        Command::Filter(s) => {
            let mut cfg = load_setup(&s)?;
            cfg.runs = 1;
            run(&cfg, &s.out)?;
        }
        Command::Experiment { setup, runs } => {
            let mut cfg = load_setup(&setup)?;
            if let Some(r) = runs {
                cfg.runs = r;
            }
            run(&cfg, &setup.out)?;
        }
        Command::ValidateGraph {
            path,
            dynamic,
            karate,
        } => validate_graph(path.as_deref(), dynamic, karate)?,
        Command::Presets { name } => presets(name.as_deref())?,
    }
    Ok(())
}
