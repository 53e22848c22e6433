use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chemo_cli::spec::parse_grid_override;
use chemo_cli::{run, CliError, Command, Overrides, RunOptions};

#[derive(Parser)]
#[command(
    name = "chemo",
    version,
    about = "Tumor-immune-drug reaction-diffusion simulator and dosing optimizer"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Worker threads for parallel sweeps and finite differences.
    #[arg(long, global = true, env = "CHEMO_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the scenario and export snapshots and diagnostics.
    Simulate(Common),
    /// Solve for the tumor-free steady state.
    Steady(Common),
    /// Sweep tumor growth rates and fit decay rates.
    Extinction(Common),
    /// Optimize the drug schedule.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run the invariant suite; exits with 3 if any check fails.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Fixed time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Grid override, `NX` or `NXxNY`.
    #[arg(long, value_parser = parse_grid_override)]
    grid: Option<(usize, usize)>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("warning: could not set thread count: {e}");
        }
    }
    let (cmd, common, resume) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c, None),
        Cmd::Steady(c) => (Command::Steady, c, None),
        Cmd::Extinction(c) => (Command::Extinction, c, None),
        Cmd::Optimize { common, resume } => (Command::Optimize, common, resume),
        Cmd::Verify(c) => (Command::Verify, c, None),
    };
    let opts = RunOptions {
        scenario: common.scenario,
        out: common.out,
        seed: common.seed,
        force: common.force,
        overrides: Overrides {
            dt: common.dt,
            grid: common.grid,
        },
        resume,
    };
    match run(cmd, &opts) {
        Ok(outcome) if outcome.passed => {
            println!(
                "{}: wrote {} files to {}",
                cmd.name(),
                outcome.manifest.files.len(),
                opts.out.display()
            );
            ExitCode::SUCCESS
        }
        Ok(_) => {
            let e = CliError::VerifyFailed(format!(
                "see {}",
                opts.out.join("verify_report.json").display()
            ));
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
