//! Transverse spin-wave phase imprinted by a Gaussian control during hold.

use anyhow::bail;
use gem_core::analytic::phase_theta;
use gem_core::pulses::ControlProfile;
use gem_core::solver1d::{Grid1D, SolverOptions};
use gem_core::transverse::{extract_phase, run_cycle_realspace, TransverseGrid};
use rayon::prelude::*;

use super::{columns_of, cycle_cost, groups, radial_rings, row, with_groups, Context};
use crate::output::{Check, Dataset, ExperimentOutput, PlotSpec};

/// Fit region for the quadratic coefficient, in units of the control waist.
pub const FIT_RADIUS: f64 = 0.5;
const COEFF_TOL: f64 = 0.05;
/// z planes of the phase map, in units of the half length.
const MAP_PLANES: [f64; 7] = [-0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75];

pub fn cost(ctx: &Context) -> f64 {
    let s = &ctx.scenario;
    let cols = columns_of(&TransverseGrid::radial_for(&s.signal, radial_rings(ctx.fidelity))) as f64;
    2.0 * cols * cycle_cost(&s.params, &s.protocol, &s.signal, ctx.fidelity)
}

pub fn run(ctx: &Context) -> anyhow::Result<ExperimentOutput> {
    let s = ctx.scenario;
    if s.control.is_homogeneous() {
        bail!("phase-profile needs a Gaussian control; set a finite control_waist");
    }
    if !(s.protocol.t_hold > 0.0) {
        bail!("phase-profile samples the spin wave at mid-hold; set hold_time > 0");
    }
    // the phase is a coupling effect; diffusion would only blur it
    let p = s.params.with_diffusion(0.0);
    let (proto, sig) = (s.protocol, s.signal);
    let grid = Grid1D::resolve(&p, &proto, &sig, ctx.fidelity);
    let tg = TransverseGrid::radial_for(&sig, radial_rings(ctx.fidelity));
    let controls = [ControlProfile::homogeneous(s.control.omega_peak), s.control];
    let recs = controls
        .par_iter()
        .map(|c| run_cycle_realspace(&p, &proto, &sig, c, &tg, &grid, &SolverOptions::default()))
        .collect::<Result<Vec<_>, _>>()?;
    let (homo, gauss) = (&recs[0], &recs[1]);
    let g = groups(&p, &proto, &sig)?;
    let wc = s.control.waist_wc;
    let l = p.half_length;

    let profile = extract_phase(gauss, homo, 0.0)?;
    let closed = phase_theta(&p, &s.control, proto.eta_write, &sig, 0.0)?;
    let (c_fit, rms_inner) = profile.quadratic_fit(wc, FIT_RADIUS * wc)?;
    let (_, rms_outer) = profile.quadratic_fit(wc, wc)?;

    let mut out = ExperimentOutput::default();
    out.value("closed_form.coefficient", closed.coefficient);
    out.value("numeric.coefficient", c_fit);
    out.value("numeric.rms_residual_half_waist", rms_inner);
    out.value("numeric.rms_residual_waist", rms_outer);
    out.value("control_waist", wc);
    out.value("t_sample", gauss.t_mid_hold);
    out.checks.push(Check::relative(
        "phase curvature coefficient",
        c_fit,
        closed.coefficient,
        COEFF_TOL,
        "least-squares c in theta = c r^2/w_c^2 over r <= 0.5 w_c at z = 0, mid-hold, vs closed form",
    ));
    if !closed.wide_control {
        out.notes
            .push("control waist is below twice the signal waist; the closed form assumes a wide control".into());
    }

    let mut ds = Dataset::new(
        "theta",
        &with_groups(&["r", "r_over_wc", "theta", "theta_closed_form", "theta_fit"]),
    );
    for (r, th) in profile.r.iter().zip(&profile.theta) {
        ds.push(row(
            &[
                *r,
                r / wc,
                th.unwrap_or(f64::NAN),
                closed.at(*r),
                c_fit * (r / wc).powi(2),
            ],
            &g,
        ));
    }
    out.datasets.push(ds.plot_xy(
        "Control-induced phase at z = 0",
        "r_over_wc",
        &["theta_closed_form", "theta_fit"],
        &["theta"],
        "theta (rad)",
    ));

    let mut map = Dataset::new("theta-map", &with_groups(&["r", "z", "theta", "theta_closed_form"]));
    for zf in MAP_PLANES {
        let z = zf * l;
        let prof = extract_phase(gauss, homo, z)?;
        let cf = phase_theta(&p, &s.control, proto.eta_write, &sig, z)?;
        for (r, th) in prof.r.iter().zip(&prof.theta) {
            map.push(row(&[*r, prof.z, th.unwrap_or(f64::NAN), cf.at(*r)], &g));
        }
    }
    out.datasets.push(map.with_plot(PlotSpec::Heatmap {
        title: "Control-induced phase theta(r, z)".into(),
        x: "r".into(),
        y: "z".into(),
        value: "theta".into(),
    }));
    out.notes
        .push("theta is the Gaussian-control phase minus the homogeneous-control phase, lab frame, D = 0".into());
    Ok(out)
}
