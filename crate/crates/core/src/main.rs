use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tandem_tlc::harness::{self, Recipe, RunOptions};

#[derive(Parser)]
#[command(name = "tandem-tlc", version, about = "Cycle-length experiments for two tandem signalized intersections")]
struct Cli {
    /// simulate, gradient, optimize, brute-force, fd-check, sweep-T2 or sweep-arrival
    #[arg(value_parser = parse_recipe)]
    recipe: Recipe,
    /// TOML spec, or a manifest.json from an earlier run to replay
    #[arg(long)]
    spec: PathBuf,
    /// Master seed; overrides the spec
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Worker threads for parallel recipes
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
}

fn parse_recipe(s: &str) -> Result<Recipe, String> {
    Recipe::from_name(s).ok_or_else(|| {
        let names: Vec<_> = Recipe::ALL.iter().map(|r| r.name()).collect();
        format!("unknown recipe `{s}`; expected one of {}", names.join(", "))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut spec = match harness::validate_spec(&cli.spec) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    spec.recipe = cli.recipe;
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    let opts = RunOptions {
        out_dir: cli.out,
        workers: cli.workers.map(|k| k as usize),
        stamp: None,
    };
    match harness::run(&spec, &opts) {
        Ok(report) => {
            for p in &report.outputs {
                println!("{}", p.display());
            }
            println!("{}", report.manifest.display());
            if let Some(e) = report.error {
                eprintln!("error: run incomplete: {e}");
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
