use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use swarm_pde::config::{bundled, parse_config, ScenarioConfig, BUNDLED};
use swarm_pde::io;
use swarm_pde::pipeline::{
    default_coverage_region, load_region, run_gradient_check, run_pipeline, run_pipeline_with_region, run_simulation,
    SimulationKind,
};
use swarm_pde::Result;

#[derive(Parser)]
#[command(version, about = "Mapping and coverage control for stochastic robot swarms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides micro.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimKind {
    Mapping,
    Coverage,
}

#[derive(Subcommand)]
enum Command {
    /// Run the mapping stage only.
    Map {
        #[command(flatten)]
        common: Common,
    },
    /// Optimise coverage controls for a given map.
    Coverage {
        #[command(flatten)]
        common: Common,
        /// Map CSV (e.g. H_thresh.csv); defaults to coverage.region or mapping.truth.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Run the agent simulator alone.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "mapping")]
        kind: SimKind,
        /// controls.csv for coverage runs; zero controls if absent.
        #[arg(long)]
        controls: Option<PathBuf>,
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Mapping, thresholding, coverage optimisation and validation.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
    /// Compare the adjoint coverage gradient with finite differences.
    CheckGradient {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        directions: usize,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
    },
    /// Print a bundled config, or write it to `<out>/<name>.toml`.
    MakeConfig {
        /// One of the bundled scenario names.
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// List bundled names.
        #[arg(long)]
        list: bool,
    },
}

fn load(common: &Common) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(&common.config)?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = common.seed {
        cfg.micro.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| swarm_pde::Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Map { common } => {
            let mut cfg = load(&common)?;
            cfg.mapping.enabled = true;
            cfg.coverage.enabled = false;
            let out = with_threads(common.threads, || run_pipeline(&cfg))?;
            println!("{}", out.dir.display());
        }
        Command::Coverage { common, map } => {
            let mut cfg = load(&common)?;
            cfg.mapping.enabled = false;
            cfg.coverage.enabled = true;
            let region = match &map {
                Some(p) => load_region(&cfg, p)?,
                None => default_coverage_region(&cfg)?,
            };
            let out = with_threads(common.threads, || run_pipeline_with_region(&cfg, Some(region)))?;
            println!("{}", out.dir.display());
        }
        Command::Simulate { common, kind, controls, map } => {
            let cfg = load(&common)?;
            let region = map.as_ref().map(|p| load_region(&cfg, p)).transpose()?;
            let controls = controls
                .as_ref()
                .map(|p| io::read_controls(p, cfg.coverage.horizon, cfg.control_bounds()?))
                .transpose()?;
            let kind = match kind {
                SimKind::Mapping => SimulationKind::Mapping,
                SimKind::Coverage => SimulationKind::Coverage,
            };
            let dir = with_threads(common.threads, || run_simulation(&cfg, kind, controls, region))?;
            println!("{}", dir.display());
        }
        Command::Pipeline { common } => {
            let cfg = load(&common)?;
            let out = with_threads(common.threads, || run_pipeline(&cfg))?;
            println!("{}", out.dir.display());
        }
        Command::CheckGradient { common, map, directions, eps } => {
            let cfg = load(&common)?;
            let region = match &map {
                Some(p) => load_region(&cfg, p)?,
                None => default_coverage_region(&cfg)?,
            };
            let check =
                with_threads(common.threads, || run_gradient_check(&cfg, region, directions, eps, cfg.micro.seed))?;
            println!("J(u) = {:.10e}", check.objective);
            println!("{:>4} {:>16} {:>16} {:>10}", "dir", "finite diff", "adjoint", "rel err");
            for (i, s) in check.samples.iter().enumerate() {
                println!("{i:>4} {:>16.8e} {:>16.8e} {:>10.2e}", s.finite_difference, s.adjoint, s.rel_error);
            }
            let worst = check.samples.iter().map(|s| s.rel_error).fold(0.0, f64::max);
            println!("max rel err {worst:.3e}, assembly form discrepancy {:.3e}", check.form_discrepancy);
        }
        Command::MakeConfig { name, out, list } => {
            if list || name.is_none() {
                for (n, _) in BUNDLED {
                    println!("{n}");
                }
                return Ok(());
            }
            let name = name.expect("checked above");
            let text = bundled(&name)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    let path = dir.join(format!("{name}.toml"));
                    io::write_text(&path, text)?;
                    println!("{}", path.display());
                }
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
