mod commands;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use branchforge_core::PlanMode;

/// Exit status for invalid input, arguments or configuration.
const EXIT_VALIDATION: u8 = 1;
/// Exit status for failures reading or writing files.
const EXIT_IO: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "branchforge",
    version,
    about = "Task-affinity guided architecture search and training for branched multi-task networks",
    propagate_version = true,
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multi-task dataset directory.
    Synth(SynthArgs),
    /// Compute per-module task dissimilarity matrices.
    Rsa(RsaArgs),
    /// Select a sharing plan under a computational budget.
    Search(SearchArgs),
    /// Jointly train a sharing plan.
    Train(TrainArgs),
    /// Evaluate a trained model on a dataset directory.
    Eval(EvalArgs),
    /// Compare analytic gradients against finite differences on a random model.
    Gradcheck(GradcheckArgs),
    /// Evolve learning rate and loss weights against a short-training objective.
    Evolve(EvolveArgs),
    /// Run synth, rsa, search and train in one go.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Synthetic family description (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory for the per-task CSV files.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the family description.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["manifest", "data"])))]
struct RsaArgs {
    /// Feature-dump manifest (JSON) listing one CSV per task and module.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Dataset directory; reference networks are trained to produce the dumps.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Reference-network settings (JSON), used with --data.
    #[arg(long, requires = "data")]
    affinity: Option<PathBuf>,
    /// Also write the generated feature dumps to this directory (with --data).
    #[arg(long, requires = "data")]
    dumps: Option<PathBuf>,
    /// Compare uncentered DDS matrices.
    #[arg(long)]
    no_center: bool,
    /// Overrides the reference-network seed (with --data).
    #[arg(long, requires = "data")]
    seed: Option<u64>,
    /// Output RDM file (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SearchArgs {
    /// RDM stack (JSON).
    #[arg(long)]
    rdm: PathBuf,
    /// Latency model (JSON, milliseconds).
    #[arg(long)]
    costs: PathBuf,
    /// Upper bound on the computational score.
    #[arg(long)]
    budget: Option<f64>,
    /// Plan family to enumerate.
    #[arg(long, default_value_t = PlanMode::Unconstrained)]
    mode: PlanMode,
    /// Write the Pareto frontier (JSON) here.
    #[arg(long)]
    pareto: Option<PathBuf>,
    /// Output plan file (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Sharing plan (JSON).
    #[arg(long)]
    plan: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Optional validation dataset directory for per-epoch validation loss
    /// and early stopping.
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Output report (JSON); the per-epoch loss table is written next to it
    /// with a `.csv` extension unless --loss-csv is given.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Write metrics (JSON) here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
}

#[derive(Debug, Args)]
struct EvolveArgs {
    /// Base training configuration (JSON); usually a short schedule.
    #[arg(long)]
    config: PathBuf,
    /// Hyperparameter ranges (JSON).
    #[arg(long)]
    space: PathBuf,
    #[arg(long)]
    generations: usize,
    #[arg(long)]
    population: usize,
    /// Dataset directory. The last fifth of every task is held out for the
    /// objective unless --validation is given.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Sharing plan (JSON); defaults to sharing every module.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the result (JSON) here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for every intermediate artifact.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the synthetic-data seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    // a closed pipe (e.g. `| head`) is not an error for help output
                    let _ = write!(std::io::stdout(), "{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(EXIT_VALIDATION)
                }
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Check(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(commands::Failure::Error(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if commands::is_io(&e) {
                EXIT_IO
            } else {
                EXIT_VALIDATION
            })
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("BRANCHFORGE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        anyhow::anyhow!("BRANCHFORGE_THREADS must be a positive integer, got `{raw}`")
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}
