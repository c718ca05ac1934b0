use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use gem_core::config::{key_reference, ENV_PREFIX};
use gem_core::solver1d::Fidelity;
use gem_harness::{run_experiment, ExperimentKind, ExperimentSpec, SweepAxis, DEFAULT_MAX_CELL_STEPS};

/// Run a named gradient echo memory experiment and write its datasets.
///
/// Exit status: 0 when every gating check passes, 1 when any fails, 2 on error.
#[derive(Parser, Debug)]
#[command(name = "gem", version, after_help = after_help())]
struct Cli {
    experiment: ExperimentKind,
    /// Scenario file of `name = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Override one key; applied after the file and the environment.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Sweep a key over values; several axes form a product.
    #[arg(long = "sweep", value_name = "KEY=V1,V2,...")]
    sweep: Vec<SweepAxis>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Grid preset: coarse, standard or fine.
    #[arg(long, default_value = "standard")]
    fidelity: Fidelity,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Refuse runs whose estimated grid-cell updates exceed this.
    #[arg(long, default_value_t = DEFAULT_MAX_CELL_STEPS)]
    max_cell_steps: f64,
}

fn after_help() -> String {
    format!(
        "Configuration keys (also settable as {ENV_PREFIX}<KEY> environment variables):\n{}",
        key_reference()
    )
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut config = gem_harness::load_config(&cli.config)?;
    config.apply_env(std::env::vars())?;
    for s in &cli.set {
        config.set(s)?;
    }
    let spec = ExperimentSpec {
        kind: cli.experiment,
        config,
        sweeps: cli.sweep,
        out_dir: cli.out,
        fidelity: cli.fidelity,
        max_cell_steps: cli.max_cell_steps,
    };
    let (report, files) = run_experiment(&spec)?;
    let mut out = std::io::stdout().lock();
    for p in &report.points {
        if !p.point.overrides.is_empty() {
            writeln!(out, "[point {}] {}", p.point.index, p.point.overrides.join(" "))?;
        }
        for c in &p.output.checks {
            writeln!(out, "{}", c.line())?;
        }
        for n in &p.output.notes {
            writeln!(out, "note: {n}")?;
        }
    }
    writeln!(out, "wrote {} files under {}", files.len(), spec.out_dir.display())?;
    Ok(report.passed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
