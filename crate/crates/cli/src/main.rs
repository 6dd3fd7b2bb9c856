use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tmle_mnar_cli::{run, write_outputs, CliError, RunConfig};

/// Estimate E(Y^a) with missing exposure and confounders, or run simulation
/// studies of the estimators.
#[derive(Parser, Debug)]
#[command(name = "tmle-mnar", version)]
struct Args {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Never changes results.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tmle-mnar: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: &Args) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    cfg.apply_env(|k| std::env::var(k).ok())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| tmle_mnar_cli::config::ConfigError {
            line: None,
            message: format!("cannot start {} threads: {e}", args.threads),
        })?;
    let outputs = pool.install(|| run(&cfg))?;
    write_outputs(&cfg.output_dir, &outputs)?;
    for (name, _) in &outputs {
        println!("{}", cfg.output_dir.join(name).display());
    }
    Ok(())
}
