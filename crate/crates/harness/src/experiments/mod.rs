//! Named experiments. Each returns datasets, summary values and checks;
//! nothing here touches the filesystem.

mod beam_width;
mod budget;
mod kspace;
mod phase;
mod storage;
mod sweeps;

use gem_core::config::Scenario;
use gem_core::model::{derive_groups, DerivedGroups, PhysicalParams, StorageProtocol};
use gem_core::pulses::SignalSpec;
use gem_core::solver1d::{step_count, Fidelity, Grid1D};
use gem_core::transverse::TransverseGrid;

use crate::output::ExperimentOutput;
use crate::spec::ExperimentKind;

pub use beam_width::hold_times as beam_width_hold_times;

/// Inputs shared by every experiment.
#[derive(Debug, Clone, Copy)]
pub struct Context {
    pub scenario: Scenario,
    pub fidelity: Fidelity,
}

pub fn run(kind: ExperimentKind, ctx: &Context) -> anyhow::Result<ExperimentOutput> {
    match kind {
        ExperimentKind::SweepWrite => sweeps::write(ctx),
        ExperimentKind::SweepHold => sweeps::hold(ctx),
        ExperimentKind::SweepTransverse => sweeps::transverse(ctx),
        ExperimentKind::StorageCycle => storage::run(ctx),
        ExperimentKind::SpinwaveKspace => kspace::run(ctx),
        ExperimentKind::BeamWidth => beam_width::run(ctx),
        ExperimentKind::PhaseProfile => phase::run(ctx),
        ExperimentKind::EfficiencyBudget => budget::run(ctx),
    }
}

/// Estimated grid-cell updates, summed over every solve the experiment makes.
pub fn estimate_cell_steps(kind: ExperimentKind, ctx: &Context) -> anyhow::Result<f64> {
    Ok(match kind {
        ExperimentKind::SweepWrite => sweeps::write_cost(ctx)?,
        ExperimentKind::SweepHold => sweeps::hold_cost(ctx)?,
        ExperimentKind::SweepTransverse => sweeps::transverse_cost(ctx)?,
        ExperimentKind::StorageCycle => storage::cost(ctx),
        ExperimentKind::SpinwaveKspace => cycle_cost(
            &ctx.scenario.params,
            &ctx.scenario.protocol,
            &ctx.scenario.signal,
            ctx.fidelity,
        ),
        ExperimentKind::BeamWidth => beam_width::cost(ctx),
        ExperimentKind::PhaseProfile => phase::cost(ctx),
        ExperimentKind::EfficiencyBudget => 0.0,
    })
}

/// Cell updates of one 1D storage cycle.
pub(crate) fn cycle_cost(
    params: &PhysicalParams,
    protocol: &StorageProtocol,
    signal: &SignalSpec,
    fidelity: Fidelity,
) -> f64 {
    let g = Grid1D::resolve(params, protocol, signal, fidelity);
    let steps = step_count(protocol.t_write, g.dt)
        + step_count(protocol.t_hold, g.hold_dt.min(protocol.t_hold.max(f64::MIN_POSITIVE)))
        + step_count(protocol.t_read(), g.dt);
    (g.n_z * steps) as f64
}

pub(crate) fn columns_of(grid: &TransverseGrid) -> usize {
    match grid {
        TransverseGrid::Radial { n_r, .. } => *n_r,
        TransverseGrid::Cartesian { n, .. } => n * n,
    }
}

/// Rings of the radial grid per fidelity preset.
pub(crate) fn radial_rings(fidelity: Fidelity) -> usize {
    match fidelity {
        Fidelity::Coarse => 32,
        Fidelity::Standard => 48,
        Fidelity::Fine => 96,
    }
}

/// Transverse wavenumber samples per axis for the quasi-1D reduction.
pub(crate) fn mode_samples(fidelity: Fidelity) -> usize {
    match fidelity {
        Fidelity::Coarse => 64,
        Fidelity::Standard => 96,
        Fidelity::Fine => 128,
    }
}

pub(crate) const GROUP_COLUMNS: [&str; 7] = ["beta", "k_hold", "tau_w", "tau_h", "tau_perp", "alpha_w", "alpha_h"];

pub(crate) fn group_values(g: &DerivedGroups) -> [f64; 7] {
    [g.beta, g.k_hold, g.tau_w, g.tau_h, g.tau_perp, g.alpha_w, g.alpha_h]
}

/// `base` columns followed by the dimensionless groups.
pub(crate) fn with_groups<'a>(base: &[&'a str]) -> Vec<&'a str> {
    base.iter().copied().chain(GROUP_COLUMNS).collect()
}

pub(crate) fn row(base: &[f64], g: &DerivedGroups) -> Vec<f64> {
    base.iter().copied().chain(group_values(g)).collect()
}

pub(crate) fn groups(
    params: &PhysicalParams,
    protocol: &StorageProtocol,
    signal: &SignalSpec,
) -> anyhow::Result<DerivedGroups> {
    Ok(derive_groups(params, protocol, signal)?)
}

/// Adds every group to the summary under `prefix`.
pub(crate) fn record_groups(out: &mut ExperimentOutput, prefix: &str, g: &DerivedGroups) {
    for (name, v) in GROUP_COLUMNS.iter().zip(group_values(g)) {
        out.value(format!("{prefix}{name}"), v);
    }
    out.value(format!("{prefix}k_i"), g.k_i);
    out.value(format!("{prefix}k_bar"), g.k_bar);
    out.value(format!("{prefix}g_eff"), g.g_eff);
}
