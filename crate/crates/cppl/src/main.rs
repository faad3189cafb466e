use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cppl::cli::{cmd_compile, cmd_run, gen_ssm_data, EmitStage, OutputFormat, RunOpts, SsmGen};
use cppl::error::Error;

/// Compiler and SMC inference runtime for `.cppl` probabilistic
/// programs.
#[derive(Parser)]
#[command(name = "cppl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a model and print one pipeline stage.
    Compile {
        /// Path to the `.cppl` model.
        model: PathBuf,
        /// Stage to dump: ast|anf|analysis|stmt|blocks|frames|pcfg.
        #[arg(long, default_value = "pcfg")]
        emit: EmitStage,
        /// Observation CSV bound to the `data` global.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Compile and run SMC inference, printing a run report.
    Run {
        /// Path to the `.cppl` model.
        model: PathBuf,
        /// Particle count.
        #[arg(long, default_value_t = 10_000)]
        particles: usize,
        /// Root random seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Resample when ESS < threshold * N (1 = every checkpoint).
        #[arg(long, default_value_t = 1.0)]
        ess_threshold: f64,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Per-particle stack capacity in cells.
        #[arg(long, default_value_t = cppl::vm::DEFAULT_STACK_CELLS)]
        stack_cells: usize,
        /// Report format.
        #[arg(long, default_value = "json")]
        output: OutputFormat,
        /// Emit a histogram with this many bins instead of raw samples.
        #[arg(long)]
        histogram: Option<usize>,
        /// Observation CSV bound to the `data` global.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Include per-phase wall-clock timings in the report.
        #[arg(long)]
        timings: bool,
    },
    /// Generate synthetic observations for the state-space model.
    GenSsmData {
        /// Number of observations T.
        #[arg(long)]
        steps: usize,
        /// Random seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(text) => {
            print!("{}", text);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e);
            match e {
                Error::Compile(_) | Error::Usage(_) | Error::Io { .. } => ExitCode::from(2),
                Error::Smc(_) => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<String, Error> {
    match cli.command {
        Command::Compile { model, emit, data } => cmd_compile(&model, emit, data.as_deref()),
        Command::Run {
            model,
            particles,
            seed,
            ess_threshold,
            threads,
            stack_cells,
            output,
            histogram,
            data,
            timings,
        } => cmd_run(
            &model,
            &RunOpts {
                particles,
                seed,
                ess_threshold,
                threads,
                stack_cells,
                output,
                histogram,
                data,
                timings,
            },
        ),
        Command::GenSsmData { steps, seed, out } => {
            let csv = gen_ssm_data(steps, seed, &SsmGen::default())?;
            match out {
                Some(path) => {
                    std::fs::write(&path, &csv).map_err(|e| Error::Io {
                        path: path.display().to_string(),
                        source: e,
                    })?;
                    Ok(format!(
                        "wrote {} observations to {}\n",
                        csv.lines().count() - 1,
                        path.display()
                    ))
                }
                None => Ok(csv),
            }
        }
    }
}
