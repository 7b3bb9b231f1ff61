use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eventsom_cli::{execute, prepare_config, stages_for, CliError, Overrides};

#[derive(Parser)]
#[command(name = "eventsom", version, about = "Event studies with market-model abnormal returns and self-organizing maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scenario's input files
    Generate(Common),
    /// Fit market models and run the event study
    Study(Common),
    /// Build the feature matrix and train the map
    Som(Common),
    /// Render planes and region reports from saved outputs
    Report(Common),
    /// All stages in sequence
    Run(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    theta: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (name, args) = match &cli.command {
        Command::Generate(a) => ("generate", a),
        Command::Study(a) => ("study", a),
        Command::Som(a) => ("som", a),
        Command::Report(a) => ("report", a),
        Command::Run(a) => ("run", a),
    };
    let overrides = Overrides {
        out: args.out.clone(),
        seed: args.seed,
        theta: args.theta,
    };
    let result = prepare_config(&args.config, &overrides).and_then(|cfg| {
        let stages = stages_for(name, &cfg).expect("known subcommand");
        execute(&cfg, &stages)
    });
    match result {
        Ok(out) => {
            println!("{name}: outputs in {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}
