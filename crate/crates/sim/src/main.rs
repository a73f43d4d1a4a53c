use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ftt_sim::ftt_core::Scheme;
use ftt_sim::Error;

#[derive(Parser)]
#[command(
    name = "ftt-sim",
    version,
    about = "Control loops over a shared CSMA/CA channel, TT vs FTT sampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and export its traces.
    Run(RunArgs),
    /// Print a scenario as JSON, e.g. as a starting point for a custom file.
    Show {
        /// Built-in name or path to a scenario file.
        #[arg(long)]
        scenario: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Tt,
    Ftt,
    Both,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Built-in name (reconfig, interference-slight, interference-severe) or path to a JSON file.
    #[arg(long)]
    scenario: String,
    #[arg(long, value_enum, default_value = "ftt")]
    scheme: SchemeArg,
    /// First seed; defaults to the scenario's own.
    #[arg(long)]
    seed: Option<u64>,
    /// Run this many consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    sweep: u64,
    /// Override the simulated duration, seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn run(args: RunArgs) -> Result<(), Error> {
    let mut spec = ftt_sim::load_scenario(&args.scenario)?;
    if let Some(d) = args.duration {
        spec.duration = d;
        spec.validate()?;
    }
    let first = args.seed.unwrap_or(spec.seed);
    let seeds: Vec<u64> = (0..args.sweep).map(|k| first.wrapping_add(k)).collect();
    let schemes: &[Scheme] = match args.scheme {
        SchemeArg::Tt => &[Scheme::Tt],
        SchemeArg::Ftt => &[Scheme::Ftt],
        SchemeArg::Both => &[Scheme::Tt, Scheme::Ftt],
    };
    let specs = ftt_sim::expand(&spec, schemes, &seeds);
    let outcomes = ftt_sim::run_batch(&specs, Some(&args.out))?;
    print!("{}", ftt_sim::loop_table(&outcomes));
    if outcomes.len() > 1 {
        println!();
        print!("{}", ftt_sim::aggregate_table(&outcomes));
    }
    println!();
    println!(
        "artifacts: {} run(s) in {}",
        outcomes.len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Show { scenario } => ftt_sim::load_scenario(&scenario).map(|spec| {
            println!(
                "{}",
                serde_json::to_string_pretty(&spec).expect("scenario serializes")
            );
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
