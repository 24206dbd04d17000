use std::path::PathBuf;
use std::process::ExitCode;

use bflux::harness::{self, ExperimentConfig, Preset};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bflux", version, about = "Reaction-diffusion experiments with nonlinear boundary flux")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    config: PathBuf,
    /// Override a config key, e.g. `--set g.p=1.4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the preset named in the config.
    Run(ConfigArgs),
    /// Check a config without running it.
    Validate(ConfigArgs),
    /// Calibrate constants for the config's problem.
    Calibrate(ConfigArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, force_calibrate, dry) = match &cli.command {
        Command::Run(a) => (a, false, false),
        Command::Validate(a) => (a, false, true),
        Command::Calibrate(a) => (a, true, false),
    };
    let mut cfg = match ExperimentConfig::load(&args.config, &args.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if force_calibrate {
        cfg.preset = Preset::Calibrate;
    }
    if dry {
        let problems = harness::validate(&cfg);
        if problems.is_empty() {
            println!("ok: {} preset", cfg.preset.name());
            return ExitCode::SUCCESS;
        }
        for p in problems {
            eprintln!("invalid: {p}");
        }
        return ExitCode::from(1);
    }
    match harness::run_preset(&cfg) {
        Ok(manifest) => {
            for c in &manifest.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("manifest: {}", cfg.output_dir.join("manifest.json").display());
            if let Some(t) = manifest.unexpected_blowup {
                eprintln!("unexpected blow-up at t = {t}");
            }
            ExitCode::from(manifest.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::error_exit_code(&e) as u8)
        }
    }
}
