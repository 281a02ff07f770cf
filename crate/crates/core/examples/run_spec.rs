//! Runs a recipe from a spec file, the same way the command-line tool does.
//!
//! cargo run --release --example run_spec -- examples/specs/sweep_t2.toml

use std::path::PathBuf;

use tandem_tlc::harness::{run, validate_spec, RunOptions};

fn main() -> tandem_tlc::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/specs/simulate.toml")));
    let spec = validate_spec(&path)?;
    println!("recipe {} with master seed {}", spec.recipe.name(), spec.seed);
    let report = run(
        &spec,
        &RunOptions {
            out_dir: std::env::temp_dir().join("tandem-tlc-examples"),
            workers: None,
            stamp: None,
        },
    )?;
    for out in &report.outputs {
        println!("wrote {}", out.display());
    }
    println!("manifest {}", report.manifest.display());
    println!("{}", serde_json::to_string_pretty(&report.summary).unwrap_or_default());
    Ok(())
}
