use std::path::PathBuf;

use anyhow::{bail, Context as _};
use gem_core::config::{self, Config};
use gem_core::solver1d::Fidelity;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SweepWrite,
    SweepHold,
    SweepTransverse,
    StorageCycle,
    SpinwaveKspace,
    BeamWidth,
    PhaseProfile,
    EfficiencyBudget,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::SweepWrite,
        ExperimentKind::SweepHold,
        ExperimentKind::SweepTransverse,
        ExperimentKind::StorageCycle,
        ExperimentKind::SpinwaveKspace,
        ExperimentKind::BeamWidth,
        ExperimentKind::PhaseProfile,
        ExperimentKind::EfficiencyBudget,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SweepWrite => "sweep-write",
            ExperimentKind::SweepHold => "sweep-hold",
            ExperimentKind::SweepTransverse => "sweep-transverse",
            ExperimentKind::StorageCycle => "storage-cycle",
            ExperimentKind::SpinwaveKspace => "spinwave-kspace",
            ExperimentKind::BeamWidth => "beam-width",
            ExperimentKind::PhaseProfile => "phase-profile",
            ExperimentKind::EfficiencyBudget => "efficiency-budget",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> anyhow::Result<Self> {
        match Self::ALL.into_iter().find(|k| k.name() == s) {
            Some(k) => Ok(k),
            None => {
                let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
                bail!("unknown experiment `{s}`; expected one of {}", names.join(", "))
            }
        }
    }
}

/// One configuration key and the raw values it takes across the sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl std::str::FromStr for SweepAxis {
    type Err = anyhow::Error;
    /// `key=v1,v2,...`.
    fn from_str(s: &str) -> anyhow::Result<Self> {
        let (key, values) = s
            .split_once('=')
            .with_context(|| format!("sweep `{s}` is not key=v1,v2,..."))?;
        let key = key.trim().to_string();
        if !config::is_key(&key) {
            bail!("sweep axis `{key}` is not a configuration key");
        }
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            bail!("sweep axis `{key}` has no values");
        }
        Ok(SweepAxis { key, values })
    }
}

/// Default cap on estimated solver work, in grid-cell updates.
pub const DEFAULT_MAX_CELL_STEPS: f64 = 2e11;

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Configuration after file, environment and `--set` overrides.
    pub config: Config,
    pub sweeps: Vec<SweepAxis>,
    pub out_dir: PathBuf,
    pub fidelity: Fidelity,
    pub max_cell_steps: f64,
}

/// A sweep point: its overrides and the resulting configuration.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub index: usize,
    pub overrides: Vec<String>,
    pub config: Config,
}

impl ExperimentSpec {
    /// Cartesian product of the sweep axes, first axis slowest.
    pub fn points(&self) -> anyhow::Result<Vec<SweepPoint>> {
        let mut points = vec![(Vec::<String>::new(), self.config.clone())];
        for axis in &self.sweeps {
            let mut next = Vec::with_capacity(points.len() * axis.values.len());
            for (overrides, cfg) in &points {
                for v in &axis.values {
                    let assignment = format!("{}={v}", axis.key);
                    let mut cfg = cfg.clone();
                    cfg.set(&assignment)?;
                    let mut o = overrides.clone();
                    o.push(assignment);
                    next.push((o, cfg));
                }
            }
            points = next;
        }
        Ok(points
            .into_iter()
            .enumerate()
            .map(|(index, (overrides, config))| SweepPoint {
                index,
                overrides,
                config,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!("sweep-everything".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn sweep_axes_must_name_keys() {
        let a: SweepAxis = "hold_time=0us, 4us,8us".parse().unwrap();
        assert_eq!(a.values, ["0us", "4us", "8us"]);
        assert!("holdtime=1us".parse::<SweepAxis>().is_err());
        assert!("hold_time=".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn points_form_a_product_in_order() {
        let spec = ExperimentSpec {
            kind: ExperimentKind::StorageCycle,
            config: Config::parse(include_str!("../../../configs/rb87.conf")).unwrap(),
            sweeps: vec![
                "hold_time=0us,4us".parse().unwrap(),
                "diffusion=0,0.004".parse().unwrap(),
            ],
            out_dir: PathBuf::from("out"),
            fidelity: Fidelity::Coarse,
            max_cell_steps: DEFAULT_MAX_CELL_STEPS,
        };
        let pts = spec.points().unwrap();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[1].overrides, ["hold_time=0us", "diffusion=0.004"]);
        assert_eq!(pts[2].overrides, ["hold_time=4us", "diffusion=0"]);
        let s = pts[3].config.scenario().unwrap();
        assert_eq!(s.protocol.t_hold, 4e-6);
        assert_eq!(s.params.diff_coeff, 0.004);
    }
}
