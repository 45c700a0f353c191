//! `telc`: run, compare and sweep closed-loop tracking scenarios.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use telc_core::harness::{
    compare, run_scenario, sweep, write_comparison, write_run, write_sweep, ControllerMode, HarnessError,
    ScenarioConfig,
};

#[derive(Parser, Debug)]
#[command(name = "telc", version, about = "MPC + learned feedforward tracking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its trace and summary.
    Run(RunArgs),
    /// Run the traditional and learning controllers on the same seed.
    Compare(CommonArgs),
    /// Compare both controllers over consecutive seeds in parallel.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the seed in the scenario file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the scenario's `output_dir` or `out/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write long-format `plot_data.csv` files.
    #[arg(long)]
    emit_plot_data: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Overrides the controller in the scenario file.
    #[arg(long, value_enum)]
    controller: Option<Controller>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of seeds, starting at the scenario seed.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Controller {
    Traditional,
    Telc,
}

impl From<Controller> for ControllerMode {
    fn from(c: Controller) -> Self {
        match c {
            Controller::Traditional => ControllerMode::Traditional,
            Controller::Telc => ControllerMode::Telc,
        }
    }
}

fn load(args: &CommonArgs) -> Result<(ScenarioConfig, PathBuf), HarnessError> {
    let mut cfg = ScenarioConfig::from_file(&args.scenario)?;
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| default_out_dir(&cfg, &args.scenario));
    Ok((cfg, out))
}

fn default_out_dir(cfg: &ScenarioConfig, scenario: &Path) -> PathBuf {
    let name = if cfg.name.is_empty() {
        scenario
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into())
    } else {
        cfg.name.clone()
    };
    PathBuf::from("out").join(name)
}

fn execute(cli: Cli) -> Result<String, HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let (mut cfg, out) = load(&args.common)?;
            if let Some(c) = args.controller {
                cfg = cfg.with_controller(c.into());
            }
            let output = run_scenario(&cfg)?;
            write_run(&output, &out, args.common.emit_plot_data)?;
            Ok(serde_json::to_string_pretty(&output.summary)?)
        }
        Command::Compare(args) => {
            let (cfg, out) = load(&args)?;
            let c = compare(&cfg)?;
            write_comparison(&c, &out, args.emit_plot_data)?;
            Ok(serde_json::to_string_pretty(&c.report)?)
        }
        Command::Sweep(args) => {
            let (cfg, out) = load(&args.common)?;
            if args.seeds == 0 {
                return Err(HarnessError::Config("--seeds must be at least 1".into()));
            }
            let seeds: Vec<u64> = (cfg.seed..cfg.seed + args.seeds).collect();
            let report = sweep(&cfg, &seeds)?;
            write_sweep(&report, &out)?;
            Ok(serde_json::to_string_pretty(&report)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
