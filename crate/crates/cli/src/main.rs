//! `tridecon` — drives an experiment described by a TOML config through
//! the pipeline stages: synthesize or split the working volumes, train the
//! per-axis generators, restore and fuse, then score the results.
//!
//! Exit codes: 0 on success, 2 when the config (or a command argument)
//! fails validation, 3 when a stage fails at runtime.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tridecon_core::infer::FusionWeights;
use tridecon_core::pipeline::{CliOverrides, Experiment, StageOutcome};
use tridecon_core::section::SliceAxis;
use tridecon_core::Error;

#[derive(Parser)]
#[command(name = "tridecon", version, about = "Three-way blind restoration of fluorescence volumes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Section axis the command applies to.
    #[arg(long, value_enum, value_name = "AXIS", default_value_t = AxisArg::All)]
    axis: AxisArg,
    /// Override the config's experiment seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum AxisArg {
    Xy,
    Xz,
    Yz,
    All,
}

impl AxisArg {
    fn axes(self) -> Vec<SliceAxis> {
        match self {
            AxisArg::Xy => vec![SliceAxis::Xy],
            AxisArg::Xz => vec![SliceAxis::Xz],
            AxisArg::Yz => vec![SliceAxis::Yz],
            AxisArg::All => SliceAxis::ALL.to_vec(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic phantom volumes configured under [synthetic].
    MakeSynthetic(Common),
    /// Materialize the blurred/clean/test working volumes from the inputs.
    Split(Common),
    /// Train the per-axis generators (--axis picks one, default all).
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from the latest checkpoint instead of starting fresh.
        #[arg(long)]
        resume: bool,
    },
    /// Restore the test volume along each weighted axis and fuse.
    ///
    /// `--axis xy|xz|yz` restores from that axis alone (fusion weights
    /// become its indicator); the default fuses per the config.
    Restore(Common),
    /// Score volumes with the configured metrics and write the report.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Volumes to score as NAME=PATH pairs; defaults to the split
        /// test volume versus the restored output.
        #[arg(value_name = "NAME=PATH")]
        volumes: Vec<String>,
    },
    /// Print a summary of everything the experiment has recorded so far.
    Report(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::MakeSynthetic(c) | Command::Split(c) | Command::Restore(c) | Command::Report(c) => c,
            Command::Train { common, .. } | Command::Evaluate { common, .. } => common,
        }
    }

    /// --axis only means something for train and restore; anywhere else a
    /// non-default value is almost certainly a mistake, so refuse it.
    fn check_axis(&self) -> Result<(), Error> {
        match self {
            Command::Train { .. } | Command::Restore(_) => Ok(()),
            _ if self.common().axis == AxisArg::All => Ok(()),
            _ => Err(Error::Config("--axis applies only to train and restore".into())),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();

    if let Err(e) = cli.command.check_axis() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let common = cli.command.common();
    let overrides = CliOverrides { seed: common.seed, out: common.out.clone() };
    let experiment = match Experiment::open(&common.config, &overrides) {
        Ok(exp) => exp,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    match run(&experiment, &cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

fn run(experiment: &Experiment, command: &Command) -> Result<(), Error> {
    match command {
        Command::MakeSynthetic(_) => print_outcome(&experiment.cmd_make_synthetic()?),
        Command::Split(_) => print_outcome(&experiment.cmd_split()?),
        Command::Train { common, resume } => {
            for outcome in experiment.cmd_train(&common.axis.axes(), *resume)? {
                print_outcome(&outcome);
            }
        }
        Command::Restore(common) => {
            let outcome = match common.axis {
                AxisArg::All => experiment.cmd_restore()?,
                single => single_axis_experiment(experiment, single)?.cmd_restore()?,
            };
            print_outcome(&outcome);
        }
        Command::Evaluate { volumes, .. } => {
            let outcome = experiment.cmd_evaluate(&parse_volume_args(volumes)?)?;
            print_outcome(&outcome);
            if let Some(path) = outcome.outputs.get("report_text") {
                print!("{}", std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?);
            }
        }
        Command::Report(_) => {
            let path = experiment.cmd_report()?;
            print!("{}", std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?);
        }
    }
    Ok(())
}

/// The same experiment with fusion weights replaced by the axis indicator,
/// so `restore --axis xy` is exactly "restore from xy alone".
fn single_axis_experiment(experiment: &Experiment, axis: AxisArg) -> Result<Experiment, Error> {
    let mut cfg = experiment.config().clone();
    cfg.fusion = match axis {
        AxisArg::Xy => FusionWeights::new(1.0, 0.0, 0.0)?,
        AxisArg::Xz => FusionWeights::new(0.0, 1.0, 0.0)?,
        AxisArg::Yz => FusionWeights::new(0.0, 0.0, 1.0)?,
        AxisArg::All => unreachable!("caller handles the fused case"),
    };
    Experiment::new(cfg)
}

fn parse_volume_args(args: &[String]) -> Result<Vec<(String, PathBuf)>, Error> {
    args.iter()
        .map(|arg| match arg.split_once('=') {
            Some((name, path)) if !name.is_empty() && !path.is_empty() => {
                Ok((name.to_string(), PathBuf::from(path)))
            }
            _ => Err(Error::Config(format!("volume argument '{arg}' is not NAME=PATH"))),
        })
        .collect()
}

fn print_outcome(outcome: &StageOutcome) {
    println!("{}: {} ({} ms)", outcome.stage, outcome.dir.display(), outcome.wall_ms);
}
