//! Batch experiments over the gradient echo memory simulator: sweeps,
//! single cycles and figure datasets, written as CSV, JSON and SVG.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiments;
pub mod output;
pub mod plot;
pub mod spec;

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use gem_core::config::Config;
use gem_core::solver1d::Fidelity;
use rayon::prelude::*;
use serde::Serialize;

use experiments::Context;
use output::{sha256_hex, ExperimentOutput, Provenance};
pub use spec::{ExperimentKind, ExperimentSpec, SweepAxis, SweepPoint, DEFAULT_MAX_CELL_STEPS};

/// Refusal to start a run whose estimated work exceeds the configured cap.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkCapExceeded {
    pub estimated: f64,
    pub cap: f64,
    pub fidelity: Fidelity,
    pub points: usize,
}

impl fmt::Display for WorkCapExceeded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "estimated {:.2e} cell-steps over {} point(s) exceeds the cap of {:.2e}; ",
            self.estimated, self.points, self.cap
        )?;
        if self.fidelity != Fidelity::Coarse {
            write!(f, "a coarser --fidelity cuts it several-fold, ")?;
        }
        write!(f, "fewer sweep values shrink it linearly, or raise --max-cell-steps")
    }
}

impl std::error::Error for WorkCapExceeded {}

/// Output of one sweep point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub point: SweepPoint,
    pub provenance: Provenance,
    pub output: ExperimentOutput,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub kind: ExperimentKind,
    pub estimated_cell_steps: f64,
    pub points: Vec<PointResult>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.points.iter().all(|p| p.output.passed())
    }
}

pub fn load_config(path: &Path) -> anyhow::Result<Config> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Config::parse(&text).with_context(|| format!("in {}", path.display()))
}

fn context_of(point: &SweepPoint, fidelity: Fidelity) -> anyhow::Result<Context> {
    let scenario = point
        .config
        .scenario()
        .with_context(|| format!("sweep point {} ({})", point.index, point.overrides.join(" ")))?;
    Ok(Context { scenario, fidelity })
}

/// Work estimate for the whole run, in grid-cell updates.
pub fn estimate(spec: &ExperimentSpec) -> anyhow::Result<f64> {
    let mut total = 0.0;
    for p in spec.points()? {
        total += experiments::estimate_cell_steps(spec.kind, &context_of(&p, spec.fidelity)?)?;
    }
    Ok(total)
}

/// Runs every sweep point (in parallel, gathered in sweep order) without
/// touching the filesystem.
pub fn compute(spec: &ExperimentSpec) -> anyhow::Result<RunReport> {
    let points = spec.points()?;
    let contexts: Vec<Context> = points
        .iter()
        .map(|p| context_of(p, spec.fidelity))
        .collect::<anyhow::Result<_>>()?;
    let mut estimated = 0.0;
    for c in &contexts {
        estimated += experiments::estimate_cell_steps(spec.kind, c)?;
    }
    if estimated > spec.max_cell_steps {
        return Err(WorkCapExceeded {
            estimated,
            cap: spec.max_cell_steps,
            fidelity: spec.fidelity,
            points: points.len(),
        }
        .into());
    }
    let outputs: Vec<ExperimentOutput> = contexts
        .par_iter()
        .zip(&points)
        .map(|(c, p)| {
            experiments::run(spec.kind, c).with_context(|| format!("{} at sweep point {}", spec.kind.name(), p.index))
        })
        .collect::<anyhow::Result<_>>()?;
    let points = points
        .into_iter()
        .zip(outputs)
        .map(|(point, output)| PointResult {
            provenance: Provenance {
                experiment: spec.kind.name().to_string(),
                config_sha256: sha256_hex(&point.config.canonical_text()),
                fidelity: spec.fidelity.name().to_string(),
                overrides: point.overrides.clone(),
            },
            point,
            output,
        })
        .collect();
    Ok(RunReport {
        kind: spec.kind,
        estimated_cell_steps: estimated,
        points,
    })
}

#[derive(Serialize)]
struct SweepIndexEntry<'a> {
    index: usize,
    directory: String,
    overrides: &'a [String],
    config_sha256: &'a str,
    passed: bool,
}

/// Writes a report: one point goes straight into `out_dir`, a sweep gets a
/// `point-NNN` directory per point plus `sweep.json`.
pub fn write_report(report: &RunReport, out_dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    if let [only] = report.points.as_slice() {
        files.extend(output::write_all(
            out_dir,
            &only.output,
            &only.provenance,
            &only.point.config.canonical_text(),
        )?);
        return Ok(files);
    }
    let mut index = Vec::new();
    for p in &report.points {
        let dir_name = format!("point-{:03}", p.point.index);
        files.extend(output::write_all(
            &out_dir.join(&dir_name),
            &p.output,
            &p.provenance,
            &p.point.config.canonical_text(),
        )?);
        index.push(SweepIndexEntry {
            index: p.point.index,
            directory: dir_name,
            overrides: &p.point.overrides,
            config_sha256: &p.provenance.config_sha256,
            passed: p.output.passed(),
        });
    }
    let json = serde_json::json!({
        "format": "gem-sweep",
        "format_version": output::FORMAT_VERSION,
        "generator": output::GENERATOR,
        "experiment": report.kind.name(),
        "passed": report.passed(),
        "points": index,
    });
    let path = out_dir.join("sweep.json");
    std::fs::write(&path, serde_json::to_string_pretty(&json)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    files.push(path);
    Ok(files)
}

/// `compute` followed by `write_report` into `spec.out_dir`.
pub fn run_experiment(spec: &ExperimentSpec) -> anyhow::Result<(RunReport, Vec<PathBuf>)> {
    let report = compute(spec)?;
    let files = write_report(&report, &spec.out_dir)?;
    Ok((report, files))
}
