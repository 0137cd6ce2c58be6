//! `dmn` command line: generate datasets from models, learn structures,
//! plan worker partitions, benchmark the parallel runtime, and verify
//! pseudo-independence. Exit codes: 0 success, 1 negative verdict from
//! `verify`, 2 usage error, 3 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dmn::cli::{
    self, BenchReport, CliError, ExecMode, GenerateMode, KeyValues, LearnOptions,
};
use dmn::data::DatasetFormat;

#[derive(Parser)]
#[command(name = "dmn", version, about = "Decomposable Markov network structure learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Produce a dataset from a model file, by sampling or expected counts.
    Generate {
        /// Model file (dmn-model v1)
        model: PathBuf,
        /// Emit expected counts (probability times --total) instead of sampling
        #[arg(long)]
        expected: bool,
        /// Total for --expected
        #[arg(long)]
        total: Option<f64>,
        /// Number of cases to sample
        #[arg(long)]
        count: Option<u64>,
        /// Sampling seed
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output path (defaults to the model name with a .data extension)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dataset format: text or binary
        #[arg(long, default_value = "text")]
        format: String,
    },
    /// Learn a structure from a dataset.
    Learn {
        /// Dataset file
        dataset: PathBuf,
        /// Optional key=value config mirroring these flags
        #[arg(long)]
        config: Option<PathBuf>,
        /// Maximum clique size
        #[arg(long)]
        eta: Option<usize>,
        /// Maximum lookahead links
        #[arg(long)]
        kappa: Option<usize>,
        /// Significance threshold in bits
        #[arg(long = "delta-h")]
        delta_h: Option<f64>,
        /// Explorer count
        #[arg(short = 'n', long)]
        workers: Option<usize>,
        /// Marginal server count (two-stage mode only)
        #[arg(short = 'm', long)]
        servers: Option<usize>,
        /// sequential, even, or two-stage
        #[arg(long)]
        mode: Option<String>,
        /// Output prefix for .graph and .trace (defaults to the dataset name)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dataset format: text or binary
        #[arg(long, default_value = "text")]
        format: String,
    },
    /// Split workers into explorers and marginal servers for a dataset size.
    Plan {
        /// Dataset size in MB
        #[arg(long)]
        data: f64,
        /// Number of variables
        #[arg(long)]
        vars: usize,
        /// Workers available (manager not counted)
        #[arg(long)]
        workers: usize,
        /// Cost ratio alpha
        #[arg(long, default_value_t = 0.005)]
        alpha: f64,
        /// Data replicated per explorer, MB
        #[arg(long)]
        de: f64,
    },
    /// Time learning runs across worker counts and report speed-up.
    Bench {
        /// Dataset file
        dataset: PathBuf,
        /// Optional key=value config mirroring these flags
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        eta: Option<usize>,
        #[arg(long)]
        kappa: Option<usize>,
        #[arg(long = "delta-h")]
        delta_h: Option<f64>,
        /// Comma-separated worker counts, e.g. 1,2,4
        #[arg(long, value_delimiter = ',')]
        workers: Vec<usize>,
        /// Timing repetitions per point (median is reported)
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Write the TSV report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dataset format: text or binary
        #[arg(long, default_value = "text")]
        format: String,
    },
    /// Check a variable subset of a model for pseudo-independence.
    Verify {
        /// Model file
        model: PathBuf,
        /// Comma-separated variable names, e.g. X1,X2,X3
        #[arg(long, value_delimiter = ',')]
        subset: Vec<String>,
        /// Independence tolerance on exact marginals
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Generate {
            model,
            expected,
            total,
            count,
            seed,
            out,
            format,
        } => {
            let mode = match (expected, total, count) {
                (true, Some(total), None) => GenerateMode::Expected { total },
                (true, None, _) => {
                    return Err(CliError::Usage("--expected needs --total".into()))
                }
                (false, None, Some(count)) => GenerateMode::Sample { count, seed },
                (false, _, None) => {
                    return Err(CliError::Usage(
                        "pick --count N for sampling or --expected --total T".into(),
                    ))
                }
                _ => {
                    return Err(CliError::Usage(
                        "--expected/--total and --count are mutually exclusive".into(),
                    ))
                }
            };
            let out = out.unwrap_or_else(|| model.with_extension("data"));
            let format = cli::parse_dataset_format(&format)?;
            let s = cli::cmd_generate(&model, mode, &out, format)?;
            println!(
                "wrote {} ({} variables, {} rows, total {})",
                s.out.display(),
                s.variables,
                s.rows,
                s.total
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Learn {
            dataset,
            config,
            eta,
            kappa,
            delta_h,
            workers,
            servers,
            mode,
            out,
            format,
        } => {
            let kv = load_config(config)?;
            let opts = learn_options(&kv, eta, kappa, delta_h, workers, servers, mode)?;
            let format = cli::parse_dataset_format(&format)?;
            let prefix = out.unwrap_or_else(|| dataset.clone());
            let s = cli::cmd_learn(&dataset, format, &opts, &prefix)?;
            println!(
                "learned {} edges in {} passes ({:.3} s); wrote {} and {}",
                s.graph.edge_count(),
                s.trace.passes.len(),
                s.seconds,
                s.graph_path.display(),
                s.trace_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Plan {
            data,
            vars,
            workers,
            alpha,
            de,
        } => {
            print!("{}", cli::cmd_plan(data, vars, workers, alpha, de)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench {
            dataset,
            config,
            eta,
            kappa,
            delta_h,
            workers,
            reps,
            out,
            format,
        } => {
            let kv = load_config(config)?;
            let opts = learn_options(&kv, eta, kappa, delta_h, Some(1), Some(0), None)?;
            let format = cli::parse_dataset_format(&format)?;
            let workers = if workers.is_empty() {
                match kv.get_str("workers") {
                    Some(raw) => raw
                        .split(',')
                        .map(|t| {
                            t.trim().parse().map_err(|_| {
                                CliError::Usage(format!("bad worker count `{t}`"))
                            })
                        })
                        .collect::<Result<Vec<usize>, _>>()?,
                    None => vec![1, 2, 4],
                }
            } else {
                workers
            };
            let report: BenchReport = cli::cmd_bench(&dataset, format, &opts, &workers, reps)?;
            let tsv = report.to_tsv();
            match out {
                Some(path) => std::fs::write(&path, tsv)
                    .map_err(|e| CliError::Runtime(e.to_string()))?,
                None => print!("{tsv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { model, subset, tol } => {
            if subset.len() < 3 {
                return Err(CliError::Usage(
                    "--subset needs at least three variable names".into(),
                ));
            }
            let report = cli::cmd_verify(&model, &subset, tol)?;
            println!("{report}");
            if report.is_pi_submodel() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn load_config(path: Option<PathBuf>) -> Result<KeyValues, CliError> {
    match path {
        Some(p) => KeyValues::load(&p),
        None => Ok(KeyValues::default()),
    }
}

/// Flags win over config values; eta and kappa must come from one of them.
fn learn_options(
    kv: &KeyValues,
    eta: Option<usize>,
    kappa: Option<usize>,
    delta_h: Option<f64>,
    workers: Option<usize>,
    servers: Option<usize>,
    mode: Option<String>,
) -> Result<LearnOptions, CliError> {
    let eta = match eta.or(kv.get("eta")?) {
        Some(v) => v,
        None => return Err(CliError::Usage("--eta is required (flag or config)".into())),
    };
    let kappa = match kappa.or(kv.get("kappa")?) {
        Some(v) => v,
        None => return Err(CliError::Usage("--kappa is required (flag or config)".into())),
    };
    let delta_h = delta_h.or(kv.get("delta-h")?).unwrap_or(0.003);
    let explorers = workers.or(kv.get("workers")?).unwrap_or(1);
    let servers = servers.or(kv.get("servers")?).unwrap_or(0);
    let mode = match mode.as_deref().or(kv.get_str("mode")) {
        Some(m) => ExecMode::parse(m)?,
        None if explorers <= 1 && servers == 0 => ExecMode::Sequential,
        None => ExecMode::TwoStage,
    };
    Ok(LearnOptions {
        max_clique: eta,
        lookahead: kappa,
        delta_h,
        explorers,
        servers,
        mode,
    })
}
