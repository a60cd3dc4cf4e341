// Driving a run from a config file: the bundled three-level model with a
// harmonic rate and a rate read from CSV, written to a scratch directory.

use std::path::Path;

use detflow::cli::{self, Experiment, Overrides};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/three-level.toml");
    let out = std::env::temp_dir().join(format!("detflow-config-run-{}", std::process::id()));
    let overrides = Overrides { out: Some(out.clone()), ..Overrides::default() };
    let exp = Experiment::load(&config, &overrides)?;
    let outcome = cli::run_experiment(&exp)?;
    println!("N_eff = {}", outcome.n_eff);
    for f in &outcome.files {
        let text = std::fs::read_to_string(f)?;
        println!("{} ({} lines)", f.display(), text.lines().count());
        if let Some(header) = text.lines().next().filter(|_| f.extension().is_some_and(|e| e == "csv")) {
            println!("  {header}");
        }
    }
    std::fs::remove_dir_all(&out)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
