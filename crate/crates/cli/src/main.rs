use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stwave::exec::with_workers;
use stwave_cli::{parse_config, parse_seed_list, run, CliError, ExperimentConfig};

/// Environment variable naming the default output root.
const OUT_ENV: &str = "STWAVE_OUT";

#[derive(Parser, Debug)]
#[command(name = "stwave", version, about = "Ground states, dynamics and stability experiments from a TOML configuration")]
struct Args {
    /// Experiment configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Worker threads for independent jobs.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,

    /// Output directory. Defaults to the configured one, then
    /// `$STWAVE_OUT/<command>`, then `stwave-out/<command>`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Comma-separated seeds, replacing the configured list.
    #[arg(long, value_name = "CSV")]
    seed_list: Option<String>,

    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

fn resolve(args: &Args) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(list) = &args.seed_list {
        cfg.seeds = parse_seed_list(list)?;
    }
    if args.workers.is_some() {
        cfg.workers = args.workers;
    }
    cfg.validate()?;
    let out = match (&args.out, &cfg.output) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => dir.clone(),
        (None, None) => {
            let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("stwave-out"));
            root.join(cfg.command.to_string())
        }
    };
    Ok((cfg, out))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let outcome = resolve(&args).and_then(|(cfg, out)| {
        if args.print_config {
            print!("{}", cfg.to_toml()?);
            return Ok(());
        }
        let manifest = with_workers(cfg.workers, || run(&cfg, &out))?;
        println!("{} {} -> {}", manifest.command, manifest.status, out.display());
        Ok(())
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stwave: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
