use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use krrl_core::harness::{repl, run_experiment, write_tables, Experiment, ExperimentConfig, HarnessError};

/// Run a KRR-RL experiment and write its CSV tables.
#[derive(Parser, Debug)]
#[command(name = "krrl", version)]
struct Args {
    /// nav-transfer, delivery-table, dialog-cdf, entropy-table,
    /// merged-setting or dialog-repl
    experiment: String,
    /// Line-oriented `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed list, e.g. `7`, `1,2,3` or `1-30`; replaces the configured seeds.
    #[arg(long)]
    seed: Option<String>,
    /// Output directory; replaces `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value`, applied after the config file. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn load(args: &Args) -> Result<ExperimentConfig, HarnessError> {
    let experiment: Experiment = args.experiment.parse()?;
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text, Some(experiment))?
        }
        None => ExperimentConfig::new(experiment),
    };
    if let Some(seeds) = &args.seed {
        cfg.set("seeds", seeds)?;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &Args) -> Result<(), HarnessError> {
    let cfg = load(args)?;
    let hash = cfg.hash();
    let tables = if cfg.experiment == Experiment::DialogRepl {
        let stdin = std::io::stdin();
        vec![repl::run_repl(&cfg, &mut stdin.lock(), &mut std::io::stdout())?]
    } else {
        let start = std::time::Instant::now();
        let tables = run_experiment(&cfg)?;
        eprintln!("{} finished in {:.1}s", cfg.experiment, start.elapsed().as_secs_f64());
        tables
    };
    write_tables(&cfg.output_dir, &tables, &hash)?;
    for t in &tables {
        println!("{}", cfg.output_dir.join(format!("{}.csv", t.name)).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("krrl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
