use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use kinegen::ClassLabel;
use kinegen_cli::{commands, CliError, Context, RunConfig};

#[derive(Parser)]
#[command(name = "kinegen", version, about = "Per-class TimeGAN generation and evaluation of transport-movement velocity profiles")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Workspace root (overrides the config's `workspace`).
    #[arg(short, long, global = true)]
    workspace: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment recordings into labelled trials.
    Ingest {
        /// Directory of `t,x,y,z` or `t,vx,vy,vz` CSV recordings.
        #[arg(long)]
        recordings: PathBuf,
        /// `recording_id,class` CSV naming each recording's class.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a parametric stand-in dataset.
    Surrogate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the model for one class.
    Train {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        class: ClassLabel,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample synthetic trials from a trained model.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-evaluate classifiers trained on real and synthetic data.
    Eval {
        #[arg(long)]
        real: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        synth: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Profiles, projections, histograms, outliers and figures.
    Analyze {
        #[arg(long)]
        real: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        synth: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// surrogate, train and generate for every class, eval, analyze.
    Pipeline,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(ws) = cli.workspace {
        config.workspace = ws;
    }
    let ctx = Context::new(config);
    match cli.command {
        Command::Ingest { recordings, labels, out } => {
            let path = commands::ingest(&ctx, &recordings, &labels, out)?;
            println!("{}", path.display());
        }
        Command::Surrogate { out } => println!("{}", commands::surrogate(&ctx, out)?.display()),
        Command::Train { archive, class, out } => {
            let dir = commands::train(&ctx, &archive, class, out).with_context(|| format!("training {class}"))?;
            println!("{}", dir.display());
        }
        Command::Generate { model, n, out } => println!("{}", commands::generate(&ctx, &model, n, out)?.display()),
        Command::Eval { real, synth, out } => {
            let reports = commands::eval(&ctx, &real, &synth, out)?;
            println!("{}", kinegen::classifier::render_table(&reports));
        }
        Command::Analyze { real, synth, out, plots } => commands::analyze(&ctx, &real, &synth, out, plots)?,
        Command::Pipeline => commands::pipeline(&ctx)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code)
        }
    }
}
