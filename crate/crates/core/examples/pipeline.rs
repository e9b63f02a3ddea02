//! Runs the bundled `smoke` scenario end to end (mapping, thresholding,
//! coverage optimisation, agent validation) and lists the artifacts.
//!
//! Usage: `cargo run --release --example pipeline -- [OUT_DIR]`

use std::path::PathBuf;

use swarm_pde::config::{bundled, parse_config};
use swarm_pde::pipeline::run_pipeline;

fn main() -> swarm_pde::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cfg = parse_config(bundled("smoke")?)?;
    cfg.output.dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "runs".into());
    let out = run_pipeline(&cfg)?;

    if let Some(m) = &out.mapping {
        println!("mapping: misclassified {:.2}% of the domain", 100.0 * m.misclassified);
    }
    if let Some(c) = &out.coverage {
        println!(
            "coverage: J {:.4e} -> {:.4e}",
            c.result.history[0],
            c.result.history.last().expect("history is never empty")
        );
    }
    println!("artifacts in {}:", out.dir.display());
    let mut names: Vec<_> = std::fs::read_dir(&out.dir)?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    names.sort();
    for n in names {
        println!("  {n}");
    }
    Ok(())
}
