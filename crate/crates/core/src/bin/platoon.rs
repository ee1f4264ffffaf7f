use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use platoon::cases::CaseSpec;
use platoon::runner::{self, CaseStatus, OutputFormat, RunOptions, RunnerError, Summary};
use platoon::scenario;

const EXIT_CONFIG: u8 = 2;
const EXIT_COLLISION: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;
const EXIT_IO: u8 = 1;

#[derive(Parser)]
#[command(name = "platoon", version, about = "Single-lane vehicle string simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one case, the full case matrix, or a scenario file.
    Run(RunArgs),
    /// Print the scenario a case resolves to, as TOML.
    ShowConfig(ShowArgs),
    /// List the case matrix.
    Cases,
}

#[derive(Args)]
struct RunArgs {
    /// Case id, 1 to 16.
    #[arg(long, conflicts_with = "matrix")]
    case: Option<u32>,
    /// Run all sixteen cases.
    #[arg(long)]
    matrix: bool,
    /// TOML file merged over the preset; any field may be set.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed; overrides the preset and the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Format of the per-tick record.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Cases run concurrently in matrix mode.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ShowArgs {
    #[arg(long)]
    case: Option<u32>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn exit_for(err: &RunnerError) -> u8 {
    match err {
        RunnerError::UnknownCase(_) | RunnerError::Config(_) | RunnerError::Scenario(_) => EXIT_CONFIG,
        RunnerError::Export { .. } | RunnerError::Io { .. } | RunnerError::Pool(_) => EXIT_IO,
    }
}

fn options(config: Option<&PathBuf>, seed: Option<u64>, format: OutputFormat) -> Result<RunOptions, RunnerError> {
    let overrides = config.map(|p| scenario::load_overrides(p)).transpose()?;
    Ok(RunOptions {
        seed,
        overrides,
        format,
    })
}

fn report(s: &Summary) {
    let label = s
        .case
        .map_or_else(|| "scenario".to_string(), |c| format!("case {:2} {:4}", c.case_id, c.model.label()));
    let status = match &s.status {
        CaseStatus::Completed => "completed".to_string(),
        CaseStatus::Collision => match s.collision {
            Some(c) => format!("collision at {:.1} s (vehicle {})", c.time, c.vehicle_index),
            None => "collision".to_string(),
        },
        CaseStatus::NumericalFailure(msg) => format!("numerical failure: {msg}"),
    };
    match s.final_min_distance {
        Some(d) => println!("{label}: {status}, final MinDistance {d:.2} m"),
        None => println!("{label}: {status}"),
    }
}

fn exit_for_summaries(summaries: &[Summary]) -> u8 {
    let numerical = summaries
        .iter()
        .any(|s| matches!(s.status, CaseStatus::NumericalFailure(_)));
    let collision = summaries.iter().any(|s| s.status == CaseStatus::Collision);
    if numerical {
        EXIT_NUMERICAL
    } else if collision {
        EXIT_COLLISION
    } else {
        0
    }
}

fn run(args: RunArgs) -> Result<u8, RunnerError> {
    let format = match args.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    let opts = options(args.config.as_ref(), args.seed, format)?;
    let summaries = if args.matrix {
        runner::run_matrix(&opts, args.jobs, &args.out)?
    } else if let Some(id) = args.case {
        vec![runner::run_case(id, &opts, &args.out)?]
    } else {
        let cfg = runner::scenario_config(&opts)?;
        vec![runner::run_config(&cfg, None, format, &args.out)?]
    };
    summaries.iter().for_each(report);
    Ok(exit_for_summaries(&summaries))
}

fn show(args: ShowArgs) -> Result<u8, RunnerError> {
    let opts = options(args.config.as_ref(), args.seed, OutputFormat::Csv)?;
    let cfg = match args.case {
        Some(id) => runner::case_config(&CaseSpec::get(id)?, &opts)?,
        None => runner::scenario_config(&opts)?,
    };
    print!("{}", scenario::to_toml_string(cfg.config())?);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::ShowConfig(args) => show(args),
        Command::Cases => {
            println!("case_id,model,error_fraction,delay_s");
            for c in CaseSpec::all() {
                println!("{},{},{},{}", c.case_id, c.model.label(), c.error_fraction, c.delay_s);
            }
            Ok(0)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_for(&err))
        }
    }
}
