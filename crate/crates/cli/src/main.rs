use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use coopdrive::enumerate::oracle_check;
use coopdrive::simulation::{self, SweepGrid, SweepRow};
use coopdrive::{Config, Error, Strategy};

#[derive(Parser, Debug)]
#[command(name = "coopdrive", version, about = "Bi-level cooperative driving at a work-zone lane drop")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate traffic under one strategy and write metrics and trajectories.
    Run {
        /// TOML config; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "bi-level")]
        strategy: Strategy,
        /// Total arrival rate (veh/h).
        #[arg(long)]
        rate: Option<f64>,
        /// Simulated time (s).
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean improvement ratio over a grid of search parameters.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "c-list", value_delimiter = ',', default_value = "0.2")]
        c_list: Vec<f64>,
        #[arg(long = "w-list", value_delimiter = ',', default_value = "0.2")]
        w_list: Vec<f64>,
        #[arg(long = "budget-list", value_delimiter = ',', default_value = "200")]
        budget_list: Vec<usize>,
        /// Arrival rates for simulation cells; snapshot cells if omitted.
        #[arg(long = "rate-list", value_delimiter = ',')]
        rate_list: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        seeds: u64,
        /// First seed of the range.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Vehicles per snapshot.
        #[arg(long, default_value_t = 10)]
        vehicles: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the search against exhaustive enumeration on small instances.
    Oracle {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "max-vehicles", default_value_t = 5)]
        max_vehicles: usize,
        #[arg(long, default_value_t = 100)]
        instances: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Safety(String),
    Mismatch(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::SafetyViolation { .. } => Failure::Safety(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    let Some(path) = path else { return Ok(Config::default()) };
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    write(path, &(text + "\n"))
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config: &'a Config,
    seed: u64,
    #[serde(flatten)]
    body: T,
}

fn cmd_run(
    config: Option<PathBuf>,
    strategy: Strategy,
    rate: Option<f64>,
    duration: Option<f64>,
    seed: u64,
    out: PathBuf,
) -> Result<(), Failure> {
    let mut config = load_config(config.as_deref())?;
    if let Some(rate) = rate {
        config.simulation.rate = rate;
    }
    if let Some(duration) = duration {
        config.simulation.duration = duration;
    }
    config.simulation.record_trajectories = true;
    let scenario = config.scenario()?;
    prepare_out(&out)?;
    let result = simulation::run(&scenario, strategy, &config.simulation, &config.search, seed)?;

    #[derive(Serialize)]
    struct Body<'a> {
        metrics: &'a simulation::Metrics,
        replans: &'a [simulation::ReplanRecord],
    }
    let body = Body { metrics: &result.metrics, replans: &result.replans };
    write_json(&out.join("metrics.json"), &Stamped { config: &config, seed, body })?;

    let mut csv = String::from("time,id,lane,position,velocity,action\n");
    for row in &result.trajectory {
        csv.push_str(&format!(
            "{:.3},{},{},{:.4},{:.4},{}\n",
            row.time,
            row.id,
            row.lane,
            row.position,
            row.velocity,
            match row.action {
                coopdrive::VehicleAction::Straight => "straight",
                coopdrive::VehicleAction::ChangeLane => "change_lane",
            }
        ));
    }
    write(&out.join("trajectory.csv"), &csv)?;
    println!(
        "{strategy}: throughput {}, average delay {:.4} s",
        result.metrics.throughput, result.metrics.avg_delay
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    config: Option<PathBuf>,
    c_list: Vec<f64>,
    w_list: Vec<f64>,
    budget_list: Vec<usize>,
    rate_list: Vec<f64>,
    seeds: u64,
    seed: u64,
    vehicles: usize,
    jobs: usize,
    out: PathBuf,
) -> Result<(), Failure> {
    let config = load_config(config.as_deref())?;
    let scenario = config.scenario()?;
    if c_list.is_empty() || w_list.is_empty() || budget_list.is_empty() || seeds == 0 {
        return Err(Failure::Usage("sweep lists and seed count must be non-empty".into()));
    }
    prepare_out(&out)?;

    // One grid per cell so that cells can run in parallel; results are
    // independent of the job count.
    let rates: Vec<Option<f64>> =
        if rate_list.is_empty() { vec![None] } else { rate_list.iter().copied().map(Some).collect() };
    let mut cells = Vec::new();
    for &rate in &rates {
        for &c in &c_list {
            for &w in &w_list {
                for &b in &budget_list {
                    cells.push(SweepGrid {
                        exploration: vec![c],
                        omega: vec![w],
                        node_budget: vec![b],
                        rates: rate.into_iter().collect(),
                        seeds,
                        vehicles,
                    });
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|grid| simulation::sweep(grid, &scenario, &config.simulation, seed))
            .collect::<Result<Vec<_>, _>>()
    })?
    .into_iter()
    .flatten()
    .collect();

    #[derive(Serialize)]
    struct Body<'a> {
        rows: &'a [SweepRow],
    }
    write_json(&out.join("sweep.json"), &Stamped { config: &config, seed, body: Body { rows: &rows } })?;
    let mut csv = String::from("exploration,omega,node_budget,rate,seeds,mean_eta\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{:.6}\n",
            r.exploration,
            r.omega,
            r.node_budget,
            r.rate.map_or(String::new(), |x| x.to_string()),
            r.seeds,
            r.mean_eta
        ));
    }
    write(&out.join("sweep.csv"), &csv)?;
    println!("{} cells written to {}", rows.len(), out.display());
    Ok(())
}

fn cmd_oracle(
    config: Option<PathBuf>,
    max_vehicles: usize,
    instances: u64,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let config = load_config(config.as_deref())?;
    let scenario = config.scenario()?;
    let cases = oracle_check(&scenario, max_vehicles, instances, seed)?;
    let matches = cases.iter().filter(|c| c.matches()).count();
    if let Some(out) = out {
        prepare_out(&out)?;
        #[derive(Serialize)]
        struct Body<'a> {
            matches: usize,
            cases: &'a [coopdrive::enumerate::OracleCase],
        }
        write_json(&out.join("oracle.json"), &Stamped { config: &config, seed, body: Body { matches, cases: &cases } })?;
    }
    println!("{matches}/{} instances match the exhaustive minimum", cases.len());
    if matches != cases.len() {
        let first = cases.iter().find(|c| !c.matches()).expect("a mismatch exists");
        return Err(Failure::Mismatch(format!(
            "instance {}: search found J = {}, exhaustive minimum is {}",
            first.instance, first.search, first.exhaustive
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run { config, strategy, rate, duration, seed, out } => {
            cmd_run(config, strategy, rate, duration, seed, out)
        }
        Command::Sweep { config, c_list, w_list, budget_list, rate_list, seeds, seed, vehicles, jobs, out } => {
            cmd_sweep(config, c_list, w_list, budget_list, rate_list, seeds, seed, vehicles, jobs, out)
        }
        Command::Oracle { config, max_vehicles, instances, seed, out } => {
            cmd_oracle(config, max_vehicles, instances, seed, out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Safety(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Mismatch(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
