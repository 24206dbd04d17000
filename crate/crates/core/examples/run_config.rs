//! Runs a config file through the harness, like `bflux run`.
//!
//! `cargo run --example run_config -- configs/equilibria.toml mesh.n=1025 checks.oracle_tol=1e-5`
use std::path::PathBuf;

use bflux::harness::{self, ExperimentConfig};

fn main() -> bflux::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(args.next().unwrap_or_else(|| "configs/cascade.toml".into()));
    let overrides: Vec<String> = args.collect();
    let cfg = ExperimentConfig::load(&path, &overrides)?;
    let manifest = harness::run_preset(&cfg)?;
    for c in &manifest.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("exit code {}", manifest.exit_code());
    Ok(())
}
