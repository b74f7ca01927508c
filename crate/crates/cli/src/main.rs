use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lur_cli::commands::{
    cmd_evaluate, cmd_explain, cmd_exposure, cmd_features, cmd_predict_grid, cmd_synth, cmd_train, Outcome,
};
use lur_cli::config::LoadedConfig;
use lur_cli::error::{CliError, CliResult, EXIT_OK, EXIT_VALIDATION};

#[derive(Parser)]
#[command(name = "lur", version, about = "Land-use regression noise modelling pipeline")]
struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true, env = "LUR_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config output directory.
    #[arg(long, env = "LUR_OUT")]
    out: Option<PathBuf>,
    /// Recompute even when outputs are up to date.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-city dataset with known ground truth.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long, env = "LUR_OUT")]
        out: PathBuf,
        #[arg(long, default_value_t = 232)]
        n_sites: usize,
        #[arg(long, default_value_t = 5)]
        cities: usize,
        #[arg(long)]
        force: bool,
    },
    /// Extract predictors at the monitoring sites.
    Features(StepArgs),
    /// Fit the configured model on all sites with CV-tuned hyperparameters.
    Train(StepArgs),
    /// Repeated nested cross-validation of every configured model.
    Evaluate(StepArgs),
    /// Shapley attributions of the trained model at the sites.
    Explain(StepArgs),
    /// Predict on a regular grid over each city boundary.
    PredictGrid(StepArgs),
    /// Population exposure by noise band.
    Exposure(StepArgs),
}

fn load(args: &StepArgs) -> CliResult<LoadedConfig> {
    let mut lc = LoadedConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        lc.config.seed = seed;
    }
    if let Some(out) = &args.out {
        lc.config.output_dir = std::env::current_dir()
            .map(|d| d.join(out))
            .unwrap_or_else(|_| out.clone());
    }
    Ok(lc)
}

fn report(o: Outcome) {
    match o {
        Outcome::Written(d) => println!("wrote {}", d.display()),
        Outcome::UpToDate(d) => println!("{} is up to date", d.display()),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::runtime(format!("thread pool: {e}")))?;
    }
    type StepFn = fn(&LoadedConfig, bool) -> CliResult<Outcome>;
    let (args, f): (StepArgs, StepFn) = match cli.command {
        Command::Synth {
            seed,
            out,
            n_sites,
            cities,
            force,
        } => {
            let cfg = cmd_synth(seed, n_sites, cities, &out, force)?;
            println!("wrote dataset; config at {}", cfg.display());
            return Ok(());
        }
        Command::Features(a) => (a, cmd_features),
        Command::Train(a) => (a, cmd_train),
        Command::Evaluate(a) => (a, cmd_evaluate),
        Command::Explain(a) => (a, cmd_explain),
        Command::PredictGrid(a) => (a, cmd_predict_grid),
        Command::Exposure(a) => (a, cmd_exposure),
    };
    let lc = load(&args)?;
    report(f(&lc, args.force)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
