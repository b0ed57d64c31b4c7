use anyhow::Context;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use surfflow::experiment::{self, ExperimentConfig};

/// Surface diffusion and Willmore flow experiments on normal graphs.
///
/// Exit status: 0 completed or stationary, 1 configuration or I/O error,
/// 2 stopped by the tubular guard, 3 linear solver failure.
/// SURFFLOW_THREADS caps the worker threads.
#[derive(Parser)]
#[command(name = "surfflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Override the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a named preset, or print its config.
    Preset {
        name: String,
        /// Print the preset config as TOML instead of running it.
        #[arg(long)]
        emit_config: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Ball-condition certificates for the surface and initial height of a config.
    Certify {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the built-in invariant checks on small grids.
    Check,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = std::env::var("SURFFLOW_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        surfflow::par::init_threads(n);
    }
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn with_output(mut cfg: ExperimentConfig, output: Option<PathBuf>) -> ExperimentConfig {
    if let Some(dir) = output {
        cfg.output.directory = dir;
    }
    cfg
}

fn run(cfg: &ExperimentConfig) -> anyhow::Result<i32> {
    let out = experiment::run_experiment(cfg)?;
    let s = &out.run.state;
    println!(
        "{}: {} at t = {:.6} after {} steps ({} snapshots, {:.2} s) -> {}",
        cfg.preset.as_deref().unwrap_or("run"),
        out.run.termination,
        s.t,
        s.steps,
        out.snapshots,
        out.wall_time,
        out.directory.display()
    );
    if let Some(d) = &out.run.detail {
        println!("  {d}");
    }
    Ok(out.exit_code())
}

fn dispatch(command: Command) -> anyhow::Result<i32> {
    match command {
        Command::Run { config, output } => {
            let cfg = ExperimentConfig::load(&config)?;
            run(&with_output(cfg, output))
        }
        Command::Preset { name, emit_config, output } => {
            let cfg = with_output(experiment::preset(&name)?, output);
            if emit_config {
                print!("{}", cfg.to_toml());
                return Ok(0);
            }
            run(&cfg)
        }
        Command::Certify { config, output } => {
            let cfg = with_output(ExperimentConfig::load(&config)?, output);
            let report = experiment::certify_experiment(&cfg)?;
            print!("{}", report.text());
            let dir = &cfg.output.directory;
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join("certificate.txt");
            std::fs::write(&path, report.key_values()).with_context(|| format!("writing {}", path.display()))?;
            Ok(0)
        }
        Command::Check => {
            let results = experiment::check_suite();
            let mut failed = 0;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                failed += usize::from(!r.passed);
            }
            println!("{} of {} checks passed", results.len() - failed, results.len());
            Ok(if failed == 0 { 0 } else { 1 })
        }
    }
}
