// Timing the bundled Jaynes-Cummings config: every method after a warm-up
// run, with its largest deviation from the dense reference.

use std::path::Path;

use detflow::cli::{self, Experiment, Overrides};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let text = std::fs::read_to_string(dir.join("jc.toml"))?;
    let exp = Experiment::from_str_in(&text, &dir, &Overrides::default())?;
    let report = cli::bench_report(&exp)?;
    print!("{}", report.to_table());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
