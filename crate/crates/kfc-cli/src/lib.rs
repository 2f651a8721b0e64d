//! Experiment runner for the federated-learning consensus simulator.
//!
//! Reads a TOML grid (experiments x architectures), runs every selected
//! simulation, and writes one `<name>.csv` of per-round metrics plus one
//! `<name>.summary.json` per experiment. Runs are deterministic: the same
//! config and seed produce byte-identical outputs.

pub mod config;
pub mod output;

use std::path::PathBuf;
use std::sync::OnceLock;

use clap::Parser;

use config::{load_experiment_file, parse_architectures};
use kfc_core::sim::run_simulation;
use output::{rows_from_runs, summarize, write_rounds_csv, write_summary_json, ArchRun};

#[derive(Debug, Parser)]
#[command(
    name = "kfc-sim",
    about = "Run federated-learning consensus experiments from a TOML grid",
    after_help = "Environment:\n  KFC_SIM_THREADS  cap in-round training parallelism (0 = auto)"
)]
struct Cli {
    /// Path to the experiment configuration file (TOML).
    #[arg(long)]
    config: PathBuf,

    /// Output directory; overrides `output_dir` from the config file.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Master seed override applied to every experiment.
    #[arg(long)]
    seed: Option<u64>,

    /// Comma-separated subset of experiment names to run.
    #[arg(long, value_delimiter = ',')]
    experiments: Option<Vec<String>>,
}

static THREAD_POOL: OnceLock<Result<(), String>> = OnceLock::new();

/// Honor `KFC_SIM_THREADS` (0 or unset = automatic). The global pool can only
/// be installed once per process.
fn configure_threads() -> Result<(), String> {
    THREAD_POOL
        .get_or_init(|| {
            let Some(raw) = std::env::var_os("KFC_SIM_THREADS") else {
                return Ok(());
            };
            let raw = raw.to_string_lossy();
            let threads: usize = raw
                .parse()
                .map_err(|_| format!("KFC_SIM_THREADS must be a number, got '{raw}'"))?;
            if threads == 0 {
                return Ok(());
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| format!("cannot configure {threads} threads: {e}"))
        })
        .clone()
}

/// Run the CLI with the given argv (including the program name) and return
/// the process exit code: 0 on success, 2 for configuration errors, 1 for
/// runtime failures.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(message) = configure_threads() {
        eprintln!("error: {message}");
        return 2;
    }

    let file = match load_experiment_file(&cli.config) {
        Ok(file) => file,
        Err(message) => {
            eprintln!("error: {message}");
            return 2;
        }
    };

    let selected: Vec<String> = match &cli.experiments {
        None => file.experiments.keys().cloned().collect(),
        Some(names) => {
            for name in names {
                if !file.experiments.contains_key(name) {
                    eprintln!("error: unknown experiment '{name}'");
                    return 2;
                }
            }
            // Run in config order for deterministic output regardless of the
            // order given on the command line.
            file.experiments
                .keys()
                .filter(|k| names.contains(k))
                .cloned()
                .collect()
        }
    };

    // Validate the whole grid before running anything.
    let mut plan = Vec::new();
    for name in &selected {
        let experiment = &file.experiments[name];
        let arch_names = experiment.architectures(&file.architectures).to_vec();
        let architectures = match parse_architectures(&arch_names) {
            Ok(a) => a,
            Err(message) => {
                eprintln!("error: experiment '{name}': {message}");
                return 2;
            }
        };
        let mut configs = Vec::new();
        for arch in architectures {
            match experiment.to_sim_config(arch, cli.seed) {
                Ok(config) => configs.push((arch, config)),
                Err(message) => {
                    eprintln!("error: experiment '{name}' ({arch}): {message}");
                    return 2;
                }
            }
        }
        plan.push((name.clone(), configs));
    }

    let out_dir = cli.out.unwrap_or_else(|| file.output_dir.clone());
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("error: cannot create {}: {e}", out_dir.display());
        return 1;
    }

    for (name, configs) in plan {
        let mut runs = Vec::new();
        let mut master_seed = 0;
        for (arch, config) in configs {
            master_seed = config.master_seed;
            let series = match run_simulation(&config) {
                Ok(series) => series,
                Err(e) => {
                    eprintln!("error: experiment '{name}' ({arch}) failed: {e}");
                    return 1;
                }
            };
            println!(
                "{name} {arch}: accuracy={:.4} accuracy_10={:.4}{}",
                series.final_accuracy().unwrap_or(0.0),
                series.accuracy_10().unwrap_or(0.0),
                match series.backdoor_accuracy_10() {
                    Some(b) => format!(" backdoor_10={b:.4}"),
                    None => String::new(),
                }
            );
            runs.push(ArchRun {
                architecture: arch,
                series,
            });
        }

        let csv_path = out_dir.join(format!("{name}.csv"));
        if let Err(e) = write_rounds_csv(&csv_path, &rows_from_runs(&runs)) {
            eprintln!("error: cannot write {}: {e}", csv_path.display());
            return 1;
        }
        let summary_path = out_dir.join(format!("{name}.summary.json"));
        let summary = summarize(&name, master_seed, &runs);
        if let Err(e) = write_summary_json(&summary_path, &summary) {
            eprintln!("error: cannot write {}: {e}", summary_path.display());
            return 1;
        }
        println!(
            "{name}: wrote {} and {}",
            csv_path.display(),
            summary_path.display()
        );
    }
    0
}
