//! Datasets, checks and their on-disk form.
//!
//! Every CSV starts with `#` header lines naming the format version, the
//! generator, the experiment, the SHA-256 of the canonical configuration and
//! the fidelity preset. Numbers use Rust's shortest round-trip exponent form,
//! so identical results give byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::plot;

pub const FORMAT_VERSION: u32 = 1;
pub const GENERATOR: &str = concat!("gem-harness ", env!("CARGO_PKG_VERSION"));

/// How a dataset is drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum PlotSpec {
    Lines {
        title: String,
        x: String,
        /// Columns drawn as connected lines.
        lines: Vec<String>,
        /// Columns drawn as unconnected markers.
        points: Vec<String>,
        x_label: String,
        y_label: String,
    },
    /// Rows are `(x, y, value)` samples on a rectangular lattice.
    Heatmap {
        title: String,
        x: String,
        y: String,
        value: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub plots: Vec<PlotSpec>,
}

impl Dataset {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Dataset {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            plots: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width of {}", self.name);
        self.rows.push(row);
    }

    pub fn with_plot(mut self, plot: PlotSpec) -> Self {
        self.plots.push(plot);
        self
    }

    /// Adds a line/marker plot of `lines` and `points` against `x`.
    pub fn plot_xy(self, title: &str, x: &str, lines: &[&str], points: &[&str], y_label: &str) -> Self {
        let owned = |v: &[&str]| v.iter().map(|c| c.to_string()).collect();
        self.with_plot(PlotSpec::Lines {
            title: title.to_string(),
            x: x.to_string(),
            lines: owned(lines),
            points: owned(points),
            x_label: x.to_string(),
            y_label: y_label.to_string(),
        })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Tolerance {
    Relative { tol: f64 },
    Absolute { tol: f64 },
    Range { lo: f64, hi: f64 },
}

/// One numeric comparison. Gating checks decide the exit code; reference
/// checks compare against published estimates that depend on the scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: Tolerance,
    /// The comparison formula, in words.
    pub formula: String,
    pub gating: bool,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, target: f64, tolerance: Tolerance, formula: &str) -> Self {
        let passed = match tolerance {
            Tolerance::Relative { tol } => (value / target - 1.0).abs() <= tol,
            Tolerance::Absolute { tol } => (value - target).abs() <= tol,
            Tolerance::Range { lo, hi } => value >= lo && value <= hi,
        };
        Check {
            name: name.to_string(),
            value,
            target,
            tolerance,
            formula: formula.to_string(),
            gating: true,
            passed,
        }
    }

    pub fn relative(name: &str, value: f64, target: f64, tol: f64, formula: &str) -> Self {
        Self::new(name, value, target, Tolerance::Relative { tol }, formula)
    }

    pub fn absolute(name: &str, value: f64, target: f64, tol: f64, formula: &str) -> Self {
        Self::new(name, value, target, Tolerance::Absolute { tol }, formula)
    }

    /// `target` is reported as the range midpoint.
    pub fn within(name: &str, value: f64, lo: f64, hi: f64, formula: &str) -> Self {
        Self::new(name, value, 0.5 * (lo + hi), Tolerance::Range { lo, hi }, formula)
    }

    pub fn reference(mut self) -> Self {
        self.gating = false;
        self
    }

    pub fn line(&self) -> String {
        let band = match self.tolerance {
            Tolerance::Relative { tol } => format!("target {:.6e} ± {:.2}%", self.target, 100.0 * tol),
            Tolerance::Absolute { tol } => format!("target {:.6e} ± {:.3e}", self.target, tol),
            Tolerance::Range { lo, hi } => format!("range [{lo:.6e}, {hi:.6e}]"),
        };
        let status = if self.passed { "PASS" } else { "FAIL" };
        let kind = if self.gating { "" } else { " (reference)" };
        format!("{status} {}{kind}: {:.6e}, {band}", self.name, self.value)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub datasets: Vec<Dataset>,
    /// Scalars for the summary: efficiencies, groups and fit values.
    pub values: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl ExperimentOutput {
    pub fn value(&mut self, key: impl Into<String>, v: f64) {
        self.values.insert(key.into(), v);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.gating)
    }

    pub fn dataset(&self, name: &str) -> Option<&Dataset> {
        self.datasets.iter().find(|d| d.name == name)
    }
}

/// What every emitted file is stamped with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub experiment: String,
    pub config_sha256: String,
    pub fidelity: String,
    /// Sweep overrides applied on top of the configuration, in order.
    pub overrides: Vec<String>,
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Shortest round-trip text for a float.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.is_finite() {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn csv_text(dataset: &Dataset, prov: &Provenance) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# gem-csv {FORMAT_VERSION}");
    let _ = writeln!(s, "# generator: {GENERATOR}");
    let _ = writeln!(s, "# experiment: {}", prov.experiment);
    let _ = writeln!(s, "# dataset: {}", dataset.name);
    let _ = writeln!(s, "# config-sha256: {}", prov.config_sha256);
    let _ = writeln!(s, "# fidelity: {}", prov.fidelity);
    for o in &prov.overrides {
        let _ = writeln!(s, "# override: {o}");
    }
    s.push_str(&dataset.columns.join(","));
    s.push('\n');
    for row in &dataset.rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_num(*v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct Summary<'a> {
    format: &'static str,
    format_version: u32,
    generator: &'static str,
    #[serde(flatten)]
    provenance: &'a Provenance,
    config: Vec<&'a str>,
    passed: bool,
    values: &'a BTreeMap<String, f64>,
    checks: &'a [Check],
    notes: &'a [String],
    files: Vec<String>,
}

pub fn summary_json(output: &ExperimentOutput, prov: &Provenance, config_text: &str, files: Vec<String>) -> String {
    let summary = Summary {
        format: "gem-summary",
        format_version: FORMAT_VERSION,
        generator: GENERATOR,
        provenance: prov,
        config: config_text.lines().collect(),
        passed: output.passed(),
        values: &output.values,
        checks: &output.checks,
        notes: &output.notes,
        files,
    };
    let mut s = serde_json::to_string_pretty(&summary).expect("summary serialises");
    s.push('\n');
    s
}

/// Writes every dataset as CSV plus its plots, then `summary.json`.
/// Returns the written paths in emission order.
pub fn write_all(
    dir: &Path,
    output: &ExperimentOutput,
    prov: &Provenance,
    config_text: &str,
) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let mut write = |name: String, text: String| -> anyhow::Result<()> {
        let path = dir.join(&name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        Ok(())
    };
    let mut names = Vec::new();
    for ds in &output.datasets {
        let name = format!("{}.csv", ds.name);
        write(name.clone(), csv_text(ds, prov))?;
        names.push(name);
        for (i, spec) in ds.plots.iter().enumerate() {
            let name = if ds.plots.len() == 1 {
                format!("{}.svg", ds.name)
            } else {
                format!("{}-{}.svg", ds.name, i + 1)
            };
            write(name.clone(), plot::render(ds, spec, prov))?;
            names.push(name);
        }
    }
    names.push("summary.json".to_string());
    write(
        "summary.json".to_string(),
        summary_json(output, prov, config_text, names),
    )?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance {
            experiment: "storage-cycle".into(),
            config_sha256: sha256_hex("a = 1\n"),
            fidelity: "coarse".into(),
            overrides: vec!["hold_time=4us".into()],
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let mut d = Dataset::new("trace", &["t", "v"]);
        d.push(vec![0.0, 1.5e-6]);
        d.push(vec![1.0, -2.0]);
        let text = csv_text(&d, &prov());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# gem-csv 1");
        assert!(lines
            .iter()
            .any(|l| l.starts_with("# config-sha256: ") && l.len() == 17 + 64));
        assert!(lines.contains(&"# override: hold_time=4us"));
        assert_eq!(&lines[lines.len() - 3..], ["t,v", "0,1.5e-6", "1e0,-2e0"]);
    }

    #[test]
    fn numbers_round_trip() {
        for v in [1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.1 + 0.2] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn check_modes() {
        assert!(Check::relative("r", 1.02, 1.0, 0.03, "").passed);
        assert!(!Check::relative("r", 1.04, 1.0, 0.03, "").passed);
        assert!(Check::absolute("a", 0.935, 0.926, 0.02, "").passed);
        assert!(!Check::within("w", 2.6, 1.7, 2.5, "").passed);
        assert!(!Check::relative("nan", f64::NAN, 1.0, 0.1, "").passed);
        let mut out = ExperimentOutput::default();
        out.checks.push(Check::within("w", 2.6, 1.7, 2.5, "").reference());
        assert!(out.passed());
        out.checks.push(Check::absolute("a", 1.0, 0.0, 0.5, ""));
        assert!(!out.passed());
    }
}
