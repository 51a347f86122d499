//! Thin command-line front end: `run` executes one scenario file and emits
//! its event log, `experiment` executes the grids of an experiment file
//! and emits one CSV per study. Progress goes to stderr, data to files.
//!
//! Exit codes: 0 ok, 1 property violation, 2 usage/config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rt_byzcast::config::{ExperimentConfig, ScenarioConfig};
use rt_byzcast::experiments;
use rt_byzcast::monitor;
use rt_byzcast::world::World;

#[derive(Parser)]
#[command(
    name = "rt-byzcast",
    version,
    about = "Byzantine-resilient real-time reliable broadcast simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario to its horizon and check the broadcast properties.
    Run {
        /// Scenario TOML file.
        scenario: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the event-log CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Worker threads for parallel sections (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the experiment grids of a spec file and write their CSVs.
    Experiment {
        /// Experiment TOML file.
        spec: PathBuf,
        /// Output directory for the CSV files.
        #[arg(long)]
        out: PathBuf,
        /// Override the spec seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the repetition count of every Monte-Carlo section.
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            format: Format::Csv,
            jobs,
        } => {
            if let Err(code) = setup_jobs(jobs) {
                return code;
            }
            cmd_run(&scenario, seed, out.as_deref())
        }
        Command::Experiment {
            spec,
            out,
            seed,
            reps,
            format: Format::Csv,
            jobs,
        } => {
            if let Err(code) = setup_jobs(jobs) {
                return code;
            }
            cmd_experiment(&spec, &out, seed, reps)
        }
    }
}

fn setup_jobs(jobs: Option<usize>) -> Result<(), ExitCode> {
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::from(2)
            })?;
    }
    Ok(())
}

fn cmd_run(path: &std::path::Path, seed: Option<u64>, out: Option<&std::path::Path>) -> ExitCode {
    let scenario = match ScenarioConfig::from_path(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let mut cfg = match scenario.to_world_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }

    let mut world = World::new(cfg);
    world.run();

    let csv = world.log().to_csv_string();
    match out {
        None => print!("{csv}"),
        Some(dir) => {
            if let Err(e) = std::fs::create_dir_all(dir) {
                eprintln!("error: cannot create {}: {e}", dir.display());
                return ExitCode::from(2);
            }
            let path = dir.join("events.csv");
            if let Err(e) = std::fs::write(&path, csv) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(2);
            }
            eprintln!("wrote {}", path.display());
        }
    }

    let violations = monitor::check_all(&world);
    let deliveries = world.truth().deliveries.len();
    let crashes = world.truth().self_crashed.len();
    eprintln!(
        "ran {} rounds: {deliveries} deliveries, {crashes} self-crashes, {} violations",
        world.round().0,
        violations.len()
    );
    if violations.is_empty() {
        ExitCode::SUCCESS
    } else {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        ExitCode::from(1)
    }
}

fn cmd_experiment(
    path: &std::path::Path,
    out: &std::path::Path,
    seed: Option<u64>,
    reps: Option<u64>,
) -> ExitCode {
    let mut spec = match ExperimentConfig::from_path(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    if let Err(e) = std::fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return ExitCode::from(2);
    }

    macro_rules! write_csv {
        ($name:literal, $rows:expr, $writer:path) => {{
            let file = out.join($name);
            let mut buf = Vec::new();
            if let Err(e) = $writer(&$rows, &mut buf) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            if let Err(e) = std::fs::write(&file, buf) {
                eprintln!("error: cannot write {}: {e}", file.display());
                return ExitCode::from(2);
            }
            eprintln!("wrote {}", file.display());
        }};
    }

    match spec.reliability_grid(reps) {
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Ok(Some(grid)) => {
            eprintln!(
                "reliability: {} cells x {} reps",
                grid.correct.len() * grid.loss.len() * grid.windows.len(),
                grid.reps
            );
            let rows = experiments::run_reliability(&grid);
            write_csv!("reliability.csv", rows, experiments::write_reliability_csv);
        }
        Ok(None) => {}
    }

    if let Some(grid) = spec.shutdown_grid() {
        let rows = experiments::run_shutdown(&grid);
        write_csv!("shutdown.csv", rows, experiments::write_shutdown_csv);
    }

    match spec.window_grid(reps) {
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Ok(Some(grid)) => {
            eprintln!(
                "window: {} cells x {} reps",
                grid.nodes.len() * grid.loss.len(),
                grid.reps
            );
            let rows = experiments::run_window(&grid);
            write_csv!("window.csv", rows, experiments::write_window_csv);
        }
        Ok(None) => {}
    }

    match spec.latency_grid(reps) {
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Ok(Some(grid)) => {
            eprintln!("latency: {} cells", grid.nodes.len() * grid.loss.len());
            let rows = experiments::run_latency(&grid);
            write_csv!("latency.csv", rows, experiments::write_latency_csv);
        }
        Ok(None) => {}
    }

    match spec.bandwidth_grid() {
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Ok(Some(grid)) => {
            eprintln!(
                "bandwidth: {} cells",
                grid.nodes.len() * grid.loss.len() * grid.payload_bits.len()
            );
            let rows = experiments::run_bandwidth(&grid);
            write_csv!("bandwidth.csv", rows, experiments::write_bandwidth_csv);
        }
        Ok(None) => {}
    }

    ExitCode::SUCCESS
}
