use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use detflow::cli::{self, Experiment, Overrides};

#[derive(Parser)]
#[command(name = "detflow", version, about = "Deterministic ensemble solver for time-local master equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one CSV per method plus a metadata sidecar
    Run(Common),
    /// Align methods against the dense oracle
    Compare(Common),
    /// Time each method after a warm-up run
    Bench(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    /// May be given several times; replaces the config's method list
    #[arg(long = "method")]
    methods: Vec<String>,
}

impl Common {
    fn load(&self) -> detflow::Result<Experiment> {
        let overrides = Overrides {
            out: self.out.clone(),
            seed: self.seed,
            dt: self.dt,
            methods: self.methods.clone(),
        };
        Experiment::load(&self.config, &overrides)
    }
}

fn report(outcome: &cli::Outcome) {
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    println!("N_eff = {}", outcome.n_eff);
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => c.load().and_then(|e| cli::run_experiment(&e)).map(|o| report(&o)),
        Command::Compare(c) => c.load().and_then(|e| cli::compare(&e)).map(|o| report(&o)),
        Command::Bench(c) => c.load().and_then(|e| cli::bench(&e)).map(|(r, o)| {
            print!("{}", r.to_table());
            report(&o);
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
