use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use freqsamp::apps::config::{self, AaOptimConfig, FdnOptimConfig, GradcheckConfig, MetricsConfig, RenderConfig};
use freqsamp::apps::{run_aa_optim, run_fdn_optim, run_gradcheck, run_metrics, run_render};
use freqsamp::Error;

#[derive(Parser)]
#[command(name = "freqsamp", version, about = "Differentiable frequency-sampling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config (schema flamo-spec-1); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the effective config as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a colorless FDN, then render it with GEQ attenuation.
    FdnOptim {
        #[command(flatten)]
        common: Common,
        /// Alias suppression at the wrap point in dB for training; 0 disables.
        #[arg(long)]
        antialias_db: Option<f64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Optimize the active-acoustics loop for a flat response.
    AaOptim {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        antialias_db: Option<f64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Render a stored system to WAV impulse responses.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        antialias_db: Option<f64>,
    },
    /// Check tape gradients of every module type against finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
    /// Echo density of a WAV file or eigenvalue statistics of a system.
    Metrics {
        #[command(flatten)]
        common: Common,
    },
}

fn load_or<T: DeserializeOwned>(path: &Option<PathBuf>, default: impl FnOnce() -> Option<T>) -> Result<T, Error> {
    match path {
        Some(p) => config::load(p),
        None => default().ok_or_else(|| Error::Config("this subcommand needs --config".into())),
    }
}

/// Prints the config when asked; true means stop here.
fn print<T: Serialize>(common: &Common, cfg: &T) -> Result<bool, Error> {
    if common.print_config {
        println!("{}", serde_json::to_string_pretty(cfg)?);
    }
    Ok(common.print_config)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::FdnOptim {
            common,
            antialias_db,
            out_dir,
        } => {
            let mut cfg: FdnOptimConfig = load_or(&common.config, || Some(FdnOptimConfig::default()))?;
            cfg.seed = config::effective_seed(cfg.seed)?;
            if let Some(db) = antialias_db {
                cfg.antialias_db = db;
            }
            if let Some(d) = out_dir {
                cfg.output_dir = d;
            }
            if print(&common, &cfg)? {
                return Ok(());
            }
            let o = run_fdn_optim(&cfg)?;
            println!(
                "loss {:.6} -> {:.6}; std|H| {:.4} -> {:.4} ({:.1}% lower); echo density 0.9 at {:?} -> {:?} s",
                o.initial_loss,
                o.final_loss,
                o.magnitude_std_before,
                o.magnitude_std_after,
                100.0 * o.magnitude_std_reduction,
                o.echo_density_09_before,
                o.echo_density_09_after
            );
            println!("wrote {}", cfg.output_dir.display());
        }
        Command::AaOptim {
            common,
            antialias_db,
            out_dir,
        } => {
            let mut cfg: AaOptimConfig = load_or(&common.config, || Some(AaOptimConfig::default()))?;
            cfg.seed = config::effective_seed(cfg.seed)?;
            if let Some(db) = antialias_db {
                cfg.antialias_db = db;
            }
            if let Some(d) = out_dir {
                cfg.output_dir = d;
            }
            if print(&common, &cfg)? {
                return Ok(());
            }
            let o = run_aa_optim(&cfg)?;
            println!(
                "flatness {:.6} -> {:.6}; eigenvalue IQR {:.4} -> {:.4}; max {:.4} -> {:.4}",
                o.flatness_before, o.flatness_after, o.iqr_before, o.iqr_after, o.eig_before.max, o.eig_after.max
            );
            println!("wrote {}", cfg.output_dir.display());
        }
        Command::Render { common, antialias_db } => {
            let mut cfg: RenderConfig = load_or(&common.config, || None)?;
            if let Some(db) = antialias_db {
                cfg.antialias_db = db;
            }
            if print(&common, &cfg)? {
                return Ok(());
            }
            for p in run_render(&cfg)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Gradcheck { common } => {
            let cfg: GradcheckConfig = load_or(&common.config, || Some(GradcheckConfig::default()))?;
            if print(&common, &cfg)? {
                return Ok(());
            }
            let results = run_gradcheck(&cfg)?;
            let mut failed = 0;
            for r in &results {
                println!(
                    "{:<24} {} seeds  max rel err {:.2e}  {:.2}s  {}",
                    r.name,
                    r.seeds,
                    r.max_rel_err,
                    r.seconds,
                    if r.passed { "ok" } else { "FAIL" }
                );
                if let Some(f) = &r.failure {
                    println!("    {f}");
                }
                failed += usize::from(!r.passed);
            }
            if failed > 0 {
                return Err(Error::Autodiff(format!(
                    "{failed} of {} gradient checks failed",
                    results.len()
                )));
            }
            println!("all {} gradient checks passed", results.len());
        }
        Command::Metrics { common } => {
            let cfg: MetricsConfig = load_or(&common.config, || None)?;
            if print(&common, &cfg)? {
                return Ok(());
            }
            println!("wrote {}", run_metrics(&cfg)?.display());
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
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
