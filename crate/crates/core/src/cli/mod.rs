//! Command-line front end of the `nbiot-sim` binary.

pub mod metrics;
pub mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use crate::dqn::{DqnConfig, TargetMode};
use crate::SimConfig;
pub use runner::{desk_config, parse_run_config, run, ControllerKind, Mode, RunError, RunSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Train,
    Eval,
    Sweep,
    Summarize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ControllerArg {
    CmaDqn,
    LeUrc,
    Static,
    Random,
}

/// NB-IoT uplink resource configuration simulator.
#[derive(Debug, Parser)]
#[command(name = "nbiot-sim", version)]
struct Args {
    #[arg(long, value_enum)]
    mode: ModeArg,

    /// Controller to train or evaluate (sweeps always compare the learned
    /// controller against both LE-URC baselines).
    #[arg(long, value_enum)]
    controller: Option<ControllerArg>,

    /// `key = value` file with simulation and learner settings.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long, default_value_t = 1)]
    episodes: usize,

    /// Comma-separated seeds; each gets its own output directory.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,

    #[arg(long, env = "NBIOT_OUT", default_value = "runs")]
    out: PathBuf,

    /// TD target: `ddqn` or `dqn-max`; overrides the config file.
    #[arg(long)]
    target_mode: Option<TargetMode>,

    /// Fixed repetitions for LE-URC and static, one per CE group.
    #[arg(long, value_delimiter = ',', num_args = 1..=3, default_value = "1,4,8")]
    le_repe: Vec<u32>,

    /// Trained ensemble for `eval --controller cma-dqn`, or to resume `train`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,

    /// Metrics files for `summarize` (default: every metrics.csv under --out).
    inputs: Vec<PathBuf>,
}

fn spec_from_args(args: Args) -> Result<RunSpec, RunError> {
    let (sim, mut dqn) = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
            parse_run_config(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?
        }
        None => (SimConfig::default(), DqnConfig::default()),
    };
    if let Some(m) = args.target_mode {
        dqn.target_mode = m;
    }
    let le_repe: [u32; 3] = args
        .le_repe
        .as_slice()
        .try_into()
        .map_err(|_| RunError::Config(format!("--le-repe needs 3 values, got {}", args.le_repe.len())))?;
    let mode = match args.mode {
        ModeArg::Train => Mode::Train,
        ModeArg::Eval => Mode::Eval,
        ModeArg::Sweep => Mode::Sweep,
        ModeArg::Summarize => Mode::Summarize,
    };
    let mut spec = RunSpec::new(mode, sim, dqn, args.out);
    spec.controller = args.controller.map(|c| match c {
        ControllerArg::CmaDqn => ControllerKind::CmaDqn,
        ControllerArg::LeUrc => ControllerKind::LeUrc,
        ControllerArg::Static => ControllerKind::Static,
        ControllerArg::Random => ControllerKind::Random,
    });
    spec.episodes = args.episodes;
    spec.seeds = args.seeds;
    spec.le_repe = le_repe;
    spec.checkpoint = args.checkpoint;
    spec.inputs = args.inputs;
    Ok(spec)
}

/// Parses `argv`, runs the campaign and maps the outcome to an exit code:
/// 0 success, 1 configuration error, 2 runtime failure.
pub fn main_with<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match spec_from_args(args).and_then(|spec| run(&spec)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nbiot-sim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
