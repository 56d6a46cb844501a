use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use ecprice_harness::report::report_prices;
use ecprice_harness::run::{compute_baselines, mode_dirs, prepare_instance, run_case, validate_dir, write_baselines};
use ecprice_harness::sweep::sweep_heatmap;
use ecprice_harness::{HarnessError, RunConfig};

#[derive(Parser)]
#[command(name = "ecprice", version, about = "Dynamic prices for an energy community under a DSO capacity limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    /// Worker threads for sweep cells.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Seed for synthetic profiles; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Native,
    External,
}

#[derive(Subcommand)]
enum Command {
    /// Baselines, pricing per distribution mode, validation and plots.
    Run,
    /// Community cost over the beta and variation grids.
    Sweep,
    /// Reference regimes only.
    Baselines,
    /// Re-check the prices and dispatch of an earlier run in --out.
    Validate,
    /// Table of per-member price statistics for the run in --out.
    Report,
}

fn load_config(cli: &Cli) -> Result<RunConfig, HarnessError> {
    let path = cli.config.clone().ok_or_else(|| HarnessError::Config {
        path: PathBuf::from("-"),
        line: None,
        msg: "--config is required".into(),
    })?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.backend {
        Some(BackendArg::Native) => cfg.set_backend("native")?,
        Some(BackendArg::External) => cfg.set_backend("external")?,
        None => {}
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Run => {
            let cfg = load_config(cli)?;
            let report = run_case(&cfg, &cli.out).with_context(|| format!("run {}", cfg.path.display()))?;
            print!("{}", std::fs::read_to_string(cli.out.join("summary.txt")).unwrap_or_default());
            for m in &report.modes {
                eprintln!("{}: {} nodes in {:.1?}", m.mode, m.solution.nodes, m.solution.wall_time);
            }
            Ok(report.exit_code())
        }
        Command::Sweep => {
            let cfg = load_config(cli)?;
            let report = sweep_heatmap(&cfg, &cli.out, cli.jobs).with_context(|| format!("sweep {}", cfg.path.display()))?;
            print!("{}", report.to_csv());
            for v in &report.violations {
                println!("trend: {v}");
            }
            let limited = report.cells.iter().any(|c| c.status != "optimal");
            Ok(if limited { 3 } else { 0 })
        }
        Command::Baselines => {
            let cfg = load_config(cli)?;
            let inst = prepare_instance(&cfg, &cli.out)?;
            let b = compute_baselines(&inst)?;
            write_baselines(&inst, &b, &cli.out.join("baselines"), cfg.hours_per_period as f64)?;
            let scale = cfg.hours_per_period as f64;
            println!("no-DR cost {:.4} DKK", b.no_dr.total_cost * scale);
            println!("uncoordinated cost {:.4} DKK", b.uncoordinated.total_cost * scale);
            Ok(0)
        }
        Command::Validate => {
            let cfg = load_config(cli)?;
            let inst = prepare_instance(&cfg, &cli.out)?;
            let b = compute_baselines(&inst)?;
            let dirs = mode_dirs(&cli.out);
            if dirs.is_empty() {
                return Err(HarnessError::EmptyRun(cli.out.clone()).into());
            }
            let mut code = 0;
            for (mode, dir) in dirs {
                let mut m = inst.clone();
                m.config.mode = mode;
                let rep = validate_dir(&m, &b.c_ext, &dir)?;
                println!("{mode}:\n{rep}");
                if !rep.passed() {
                    code = 2;
                }
            }
            Ok(code)
        }
        Command::Report => {
            let table = report_prices(&cli.out)?;
            print!("{table}");
            Ok(0)
        }
    }
}

fn main() -> anyhow::Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => Ok(ExitCode::from(code as u8)),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<HarnessError>().map_or(1, HarnessError::exit_code);
            Ok(ExitCode::from(code as u8))
        }
    }
}
