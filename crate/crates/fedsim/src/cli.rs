//! Command-line front end: four subcommands covering partition drawing,
//! single federations, scenario grids, and report rendering.
//!
//! Diagnostics go to stderr and data to stdout or the requested files, so
//! the process exit code alone tells automation whether output is usable.
//! The `FEDSIM_WORKERS` environment variable supplies the default worker
//! count for scenario grids; an explicit `--workers` flag overrides it.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::{load_run_config, load_scenario_config};
use crate::data::{
    dirichlet_partition_indices, gen_synthetic, load_idx, Dataset, PartitionSpec,
};
use crate::error::{Error, Result};
use crate::experiment::{run_federation, run_scenario, seed_tags, DatasetSpec, SCHEMA_VERSION};
use crate::report::{
    atomic_write, build_report, read_cells, render_report, to_json_17, write_experiment_dir,
    ReportFormat,
};
use crate::rng::derive_seed;

/// Deterministic federated-learning simulator: strategy ensembles,
/// randomized aggregation, and per-client contribution valuation.
#[derive(Debug, Parser)]
#[command(name = "fedsim", version, max_term_width = 100)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a Dirichlet client partition and write the assignment file.
    Partition {
        /// Data source: `synthetic:<classes>,<dim>,<per_class>,<sigma>`
        /// or `idx:<images_path>,<labels_path>`.
        #[arg(long)]
        dataset: String,
        /// Number of clients (at least 2).
        #[arg(long)]
        clients: usize,
        /// Dirichlet concentration; small values give skewed shards.
        #[arg(long)]
        alpha: f64,
        /// Partition seed; synthetic record draws derive from it too.
        #[arg(long)]
        seed: u64,
        /// Smallest shard size accepted before redrawing.
        #[arg(long, default_value_t = 1)]
        min_shard: usize,
        /// Output file for the assignment record.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one federation from a config file and write its record.
    Run {
        /// TOML federation config.
        config: PathBuf,
        /// Output file for the run record.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scenario grid (ensemble + randomized sampler per cell) and
    /// write per-cell records, the metric CSV, and the comparison summary.
    Experiment {
        /// TOML scenario config.
        scenario: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to FEDSIM_WORKERS, then serial.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Aggregate an experiment directory into a metric table plus
    /// per-round accuracy traces.
    Report {
        /// Experiment directory produced by the experiment subcommand.
        #[arg(long = "in")]
        in_dir: PathBuf,
        /// Output encoding.
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> ReportFormat {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

/// The partition subcommand's output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub schema_version: u32,
    /// The dataset flag as given on the command line.
    pub dataset: String,
    pub num_records: usize,
    pub client_sizes: Vec<usize>,
    /// Size-based ground-truth shares, one per client.
    pub ground_truth: Vec<f64>,
    /// Record indices per client, in client order.
    pub assignments: Vec<Vec<usize>>,
}

/// Parses the `--dataset` flag into a spec the library understands.
pub fn parse_dataset_flag(flag: &str) -> Result<DatasetSpec> {
    let (kind, rest) = flag
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("dataset flag needs a kind prefix: {flag}")))?;
    match kind {
        "synthetic" => {
            let parts: Vec<&str> = rest.split(',').collect();
            if parts.len() != 4 {
                return Err(Error::Config(format!(
                    "synthetic dataset flag needs <classes>,<dim>,<per_class>,<sigma>: {flag}"
                )));
            }
            let parse_usize = |s: &str, what: &str| {
                s.trim().parse::<usize>().map_err(|_| {
                    Error::Config(format!("dataset flag: {what} must be an integer, got {s}"))
                })
            };
            let noise_sigma: f64 = parts[3].trim().parse().map_err(|_| {
                Error::Config(format!("dataset flag: sigma must be a number, got {}", parts[3]))
            })?;
            Ok(DatasetSpec::Synthetic {
                num_classes: parse_usize(parts[0], "classes")?,
                input_dim: parse_usize(parts[1], "dim")?,
                per_class: parse_usize(parts[2], "per_class")?,
                noise_sigma,
            })
        }
        "idx" => {
            let (images, labels) = rest.split_once(',').ok_or_else(|| {
                Error::Config(format!("idx dataset flag needs <images>,<labels>: {flag}"))
            })?;
            Ok(DatasetSpec::Idx {
                images: images.trim().to_string(),
                labels: labels.trim().to_string(),
            })
        }
        other => Err(Error::Config(format!("unknown dataset kind: {other}"))),
    }
}

fn materialize(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    match spec {
        DatasetSpec::Synthetic {
            num_classes,
            input_dim,
            per_class,
            noise_sigma,
        } => gen_synthetic(
            *num_classes,
            *input_dim,
            *per_class,
            *noise_sigma,
            derive_seed(seed, seed_tags::DATA),
        ),
        DatasetSpec::Idx { images, labels } => {
            load_idx(Path::new(images), Path::new(labels))
        }
    }
}

fn cmd_partition(
    dataset: &str,
    clients: usize,
    alpha: f64,
    seed: u64,
    min_shard: usize,
    out: &Path,
) -> Result<()> {
    let spec = parse_dataset_flag(dataset)?;
    let data = materialize(&spec, seed)?;
    let partition = PartitionSpec {
        num_clients: clients,
        alpha,
        seed,
        min_shard,
    };
    partition.validate()?;
    let assignments = dirichlet_partition_indices(data.len(), &partition)?;
    let client_sizes: Vec<usize> = assignments.iter().map(Vec::len).collect();
    let total: usize = client_sizes.iter().sum();
    let ground_truth: Vec<f64> = client_sizes
        .iter()
        .map(|&s| s as f64 / total as f64)
        .collect();
    let file = PartitionFile {
        schema_version: SCHEMA_VERSION,
        dataset: dataset.to_string(),
        num_records: data.len(),
        client_sizes,
        ground_truth: ground_truth.clone(),
        assignments,
    };
    atomic_write(out, &to_json_17(&file)?)?;
    println!("{}", to_json_17(&ground_truth)?);
    Ok(())
}

fn cmd_run(config: &Path, out: &Path) -> Result<()> {
    let cfg = load_run_config(config)?;
    let record = run_federation(&cfg)?;
    atomic_write(out, &to_json_17(&record)?)?;
    println!("{}", to_json_17(&record.contributions)?);
    Ok(())
}

/// Resolves the worker count: explicit flag, then FEDSIM_WORKERS, then 1.
fn resolve_workers(flag: Option<usize>) -> Result<usize> {
    let workers = match flag {
        Some(w) => w,
        None => match std::env::var("FEDSIM_WORKERS") {
            Ok(raw) => raw.trim().parse::<usize>().map_err(|_| {
                Error::Config(format!("FEDSIM_WORKERS must be a positive integer, got {raw}"))
            })?,
            Err(_) => 1,
        },
    };
    if workers == 0 {
        return Err(Error::Config("worker count must be at least 1".into()));
    }
    Ok(workers)
}

fn cmd_experiment(scenario_path: &Path, out: &Path, workers: Option<usize>) -> Result<()> {
    let scenario = load_scenario_config(scenario_path)?;
    let workers = resolve_workers(workers)?;
    let outcome = run_scenario(&scenario, workers)?;
    write_experiment_dir(out, &scenario, &outcome)?;
    println!("{}", to_json_17(&outcome.summary)?);
    Ok(())
}

fn cmd_report(in_dir: &Path, format: FormatArg, out: Option<&Path>) -> Result<()> {
    let records = read_cells(in_dir)?;
    let report = build_report(&records);
    let rendered = render_report(&report, format.into())?;
    match out {
        Some(path) => atomic_write(path, &rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}

/// Executes one parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Partition {
            dataset,
            clients,
            alpha,
            seed,
            min_shard,
            out,
        } => cmd_partition(&dataset, clients, alpha, seed, min_shard, &out),
        Command::Run { config, out } => cmd_run(&config, &out),
        Command::Experiment {
            scenario,
            out,
            workers,
        } => cmd_experiment(&scenario, &out, workers),
        Command::Report {
            in_dir,
            format,
            out,
        } => cmd_report(&in_dir, format, out.as_deref()),
    }
}
