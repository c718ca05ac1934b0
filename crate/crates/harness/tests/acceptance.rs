//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use gem_core::analytic::{
    eff_hold, eff_read, eff_total, eff_transverse, eff_write_exact, gamma_ratio_modulus, output_phase, DecayFactors,
};
use gem_core::config::Config;
use gem_core::model::{Phase, PhysicalParams, StorageProtocol};
use gem_core::pulses::{ControlProfile, SignalSpec};
use gem_core::solver1d::{
    efficiency_1d, run_cycle, Coupling, DiffusionMask, Fidelity, Grid1D, Solver1D, SolverOptions,
};
use gem_core::transverse::{run_cycle_quasi1d, ModeGrid};
use gem_harness::output::{csv_text, Check, ExperimentOutput};
use gem_harness::{compute, ExperimentKind, ExperimentSpec, RunReport, DEFAULT_MAX_CELL_STEPS};
use num_complex::Complex64;

const BETA_TARGET: f64 = 3.8;
const BETA_TOL: f64 = 0.1;
const MIN_WRITE_POINTS: usize = 8;
const HEADLINE_TARGET: f64 = 0.93;
const HEADLINE_TOL: f64 = 0.01;
const HEADLINE_NUMERIC_TOL: f64 = 0.02;
const D_EFF_TARGET: f64 = 0.002;
const D_EFF_TOL: f64 = 0.0005;
const REDUCTION_BAND: (f64, f64) = (1.7, 2.5);
const UNIT_MODULUS_TOL: f64 = 1e-12;
const DECAY_IDENTITY_TOL: f64 = 1e-12;
const HEAT_LAW_TOL: f64 = 1e-10;
const PARSEVAL_TOL: f64 = 1e-6;
const RICHARDSON_BAND: (f64, f64) = (3.5, 4.5);

type Outcome = anyhow::Result<(bool, String)>;

fn config(name: &str) -> anyhow::Result<Config> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    gem_harness::load_config(&path)
}

fn spec(kind: ExperimentKind, config: Config, fidelity: Fidelity) -> ExperimentSpec {
    ExperimentSpec {
        kind,
        config,
        sweeps: Vec::new(),
        out_dir: PathBuf::new(),
        fidelity,
        max_cell_steps: DEFAULT_MAX_CELL_STEPS,
    }
}

fn single(kind: ExperimentKind, conf: &str) -> anyhow::Result<ExperimentOutput> {
    let report = compute(&spec(kind, config(conf)?, Fidelity::Standard))?;
    Ok(report.points.into_iter().next().expect("one point").output)
}

fn value(out: &ExperimentOutput, key: &str) -> anyhow::Result<f64> {
    out.values
        .get(key)
        .copied()
        .ok_or_else(|| anyhow::anyhow!("summary lacks {key}"))
}

fn column(out: &ExperimentOutput, ds: &str, col: &str) -> anyhow::Result<Vec<f64>> {
    out.dataset(ds)
        .and_then(|d| d.column(col))
        .ok_or_else(|| anyhow::anyhow!("missing {ds}.{col}"))
}

/// All gating checks whose name starts with `prefix`, with the worst one reported.
fn checks_with(out: &ExperimentOutput, prefix: &str) -> (bool, usize, String) {
    let selected: Vec<&Check> = out
        .checks
        .iter()
        .filter(|c| c.gating && c.name.starts_with(prefix))
        .collect();
    let failed: Vec<&&Check> = selected.iter().filter(|c| !c.passed).collect();
    let worst = selected
        .iter()
        .max_by(|a, b| deviation(a).total_cmp(&deviation(b)))
        .map_or("none".to_string(), |c| format!("worst {}", c.line()));
    let ok = !selected.is_empty() && failed.is_empty();
    (
        ok,
        selected.len(),
        format!("{} checks, {} failed; {worst}", selected.len(), failed.len()),
    )
}

fn deviation(c: &Check) -> f64 {
    ((c.value - c.target) / c.target).abs()
}

fn span(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(*x), hi.max(*x))
    })
}

fn optical_depth() -> Outcome {
    let s = config("rb87.conf")?.scenario()?;
    let beta = s.params.beta(s.protocol.eta_write).abs();
    Ok(((beta - BETA_TARGET).abs() <= BETA_TOL, format!("|beta| = {beta:.4}")))
}

fn collapse(kind: ExperimentKind, ds: &str, tau: &str, prefix: &str, lo: f64, hi: f64, min_points: usize) -> Outcome {
    let out = single(kind, "rb87.conf")?;
    let taus = column(&out, ds, tau)?;
    let (t0, t1) = span(&taus);
    let (ok, n, text) = checks_with(&out, prefix);
    // the sweep must cover the claimed range, within rounding
    let covers = t0 <= lo + 1e-9 && t1 >= hi - 1e-9;
    Ok((
        ok && covers && n >= min_points,
        format!("{tau} in [{t0:.3}, {t1:.3}]; {text}"),
    ))
}

fn headline() -> Outcome {
    let out = single(ExperimentKind::StorageCycle, "rb87.conf")?;
    let analytic = value(&out, "analytic.total")?;
    let numeric = value(&out, "numeric.total_ratio")?;
    let ok = (analytic - HEADLINE_TARGET).abs() <= HEADLINE_TOL && (numeric - analytic).abs() <= HEADLINE_NUMERIC_TOL;
    Ok((ok, format!("analytic {analytic:.4}, numeric {numeric:.4}")))
}

fn width_law(out: &ExperimentOutput) -> Outcome {
    let (ok, _, text) = checks_with(out, "homogeneous width slope");
    Ok((ok, text))
}

fn narrowing(out: &ExperimentOutput) -> Outcome {
    let d_eff = value(out, "gaussian.d_eff")?;
    let factor = value(out, "reduction_factor")?;
    let ok = (d_eff - D_EFF_TARGET).abs() <= D_EFF_TOL && (REDUCTION_BAND.0..=REDUCTION_BAND.1).contains(&factor);
    Ok((ok, format!("D_eff {d_eff:.3e} m^2/s, reduction {factor:.3}")))
}

fn phase_formula() -> Outcome {
    let out = single(ExperimentKind::PhaseProfile, "narrowing.conf")?;
    let (ok, _, text) = checks_with(&out, "phase curvature coefficient");
    Ok((ok, text))
}

fn hg_modes() -> Outcome {
    let out = single(ExperimentKind::SweepTransverse, "rb87.conf")?;
    let taus = column(&out, "transverse-collapse", "tau_perp")?;
    let (_, t1) = span(&taus);
    let (ok, n, text) = checks_with(&out, "HG(1,1)");
    Ok((ok && t1 >= 2.0 - 1e-9 && n > 0, text))
}

// ---- property suite ----

fn reference() -> (PhysicalParams, StorageProtocol, SignalSpec) {
    let signal = SignalSpec::gaussian(1e-6, 5e-6, 1.45e-3);
    let eta = -2.0 * std::f64::consts::PI * 10e6;
    let protocol = StorageProtocol::standard(signal.default_write_window(), 2e-6, eta);
    (PhysicalParams::rb87_reference(), protocol, signal)
}

fn unit_modulus() -> anyhow::Result<f64> {
    let (p, _, _) = reference();
    let mut worst: f64 = 0.0;
    for eta in [-1e8, -6.3e7, -2e7, 2e7, 6.3e7] {
        for i in 0..50 {
            let t = -8e-6 + 16e-6 * i as f64 / 49.0;
            for on in [0.0, 5e-6] {
                worst = worst.max((output_phase(&p, eta, t, on).norm() - 1.0).abs());
            }
        }
    }
    for i in 0..40 {
        worst = worst.max((gamma_ratio_modulus(-10.0 + 0.5 * i as f64) - 1.0).abs());
    }
    Ok(worst)
}

fn analytic_efficiencies(p: &PhysicalParams, proto: &StorageProtocol, sig: &SignalSpec) -> anyhow::Result<Vec<f64>> {
    Ok(vec![
        eff_write_exact(p, proto, sig)?,
        eff_hold(p, proto, sig)?.value,
        eff_read(p, proto, sig)?.value,
        eff_transverse(p, proto, sig)?.0,
        eff_total(p, proto, sig)?.full,
        eff_total(p, proto, sig)?.product,
    ])
}

fn numeric_efficiency(p: &PhysicalParams, proto: &StorageProtocol, sig: &SignalSpec) -> anyhow::Result<f64> {
    let grid = Grid1D::resolve(p, proto, sig, Fidelity::Standard);
    Ok(efficiency_1d(&run_cycle(
        p,
        proto,
        sig,
        &grid,
        &SolverOptions::default(),
    )?)?)
}

/// Largest increase between consecutive entries, per series.
fn worst_rise(series: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for w in series.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]) {
            worst = worst.max(b - a);
        }
    }
    worst
}

fn monotone() -> anyhow::Result<(f64, f64)> {
    let (p, proto, sig) = reference();
    let ds = [0.0, 0.001, 0.002, 0.004, 0.008, 0.016];
    let holds = [0.0, 2e-6, 4e-6, 8e-6, 16e-6];
    let mut analytic = Vec::new();
    for d in ds {
        analytic.push(analytic_efficiencies(&p.with_diffusion(d), &proto, &sig)?);
    }
    let mut rise_analytic = worst_rise(&analytic);
    analytic.clear();
    for t_h in holds {
        let pr = StorageProtocol { t_hold: t_h, ..proto };
        analytic.push(analytic_efficiencies(&p, &pr, &sig)?);
    }
    rise_analytic = rise_analytic.max(worst_rise(&analytic));

    let mut numeric = Vec::new();
    for d in [0.0, 0.002, 0.004, 0.008] {
        numeric.push(vec![numeric_efficiency(&p.with_diffusion(d), &proto, &sig)?]);
    }
    let mut rise_numeric = worst_rise(&numeric);
    numeric.clear();
    for t_h in [0.0, 2e-6, 4e-6, 8e-6] {
        let pr = StorageProtocol { t_hold: t_h, ..proto };
        numeric.push(vec![numeric_efficiency(&p, &pr, &sig)?]);
    }
    rise_numeric = rise_numeric.max(worst_rise(&numeric));
    Ok((rise_analytic, rise_numeric))
}

fn decay_identity() -> anyhow::Result<f64> {
    let (p, proto, _) = reference();
    let mut worst: f64 = 0.0;
    for t_h in [0.0, 4e-6, 16e-6] {
        let f = DecayFactors::new(&p.with_diffusion(0.0), &StorageProtocol { t_hold: t_h, ..proto })?;
        for i in 0..41 {
            let t = -4e-6 + 8e-6 * i as f64 / 40.0;
            for v in [f.d_w(t), f.d_h(t), f.d_r(t), f.d_perp(3e3, -2e3, t)] {
                worst = worst.max((v - 1.0).abs());
            }
        }
    }
    Ok(worst)
}

fn heat_law() -> anyhow::Result<f64> {
    let (p, proto, sig) = reference();
    let grid = Grid1D::resolve(&p, &proto, &sig, Fidelity::Coarse);
    let mut solver = Solver1D::new(&p, &grid)?;
    let layout = solver.layout().clone();
    let k_h = 400.0 - p.k0_minus_kc;
    for (s, z) in solver.state_mut().sigma12.iter_mut().zip(&layout.z) {
        *s = Complex64::from_polar((-(z / 0.02).powi(2)).exp(), k_h * z);
    }
    let before = solver.spectrum(Phase::Hold);
    let dark = Coupling::homogeneous(&p, false);
    let (t_h, n) = (20e-6, 10);
    for _ in 0..n {
        solver.step_sigma(0.0, &dark, true, 0.0, |_| Complex64::default(), t_h / n as f64);
    }
    let after = solver.spectrum(Phase::Hold);
    let peak = before.magnitude.iter().copied().fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for ((k, m0), m1) in before.k.iter().zip(&before.magnitude).zip(&after.magnitude) {
        worst = worst.max((m1 - m0 * (-p.diff_coeff * k * k * t_h).exp()).abs() / peak);
    }
    Ok(worst)
}

fn parseval() -> anyhow::Result<f64> {
    let (p, _, _) = reference();
    let sig = SignalSpec::gaussian(1e-6, 5e-6, 1e-3);
    let proto = StorageProtocol::standard(sig.default_write_window(), 4e-6, reference().1.eta_write);
    let grid = Grid1D::resolve(&p, &proto, &sig, Fidelity::Coarse);
    let control = ControlProfile::homogeneous(p.omega_rabi);
    let opts = SolverOptions {
        diffusion: DiffusionMask::NONE,
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    for s in [sig, sig.with_mode(1, 0), sig.with_mode(1, 1)] {
        let q = run_cycle_quasi1d(&p, &proto, &s, &control, &ModeGrid::for_signal(&s, 64), &grid, &opts)?;
        worst = worst.max((q.efficiency_realspace()? / q.efficiency_kspace()? - 1.0).abs());
    }
    Ok(worst)
}

fn richardson() -> anyhow::Result<f64> {
    let (p, proto, sig) = reference();
    let p = p.with_diffusion(0.0);
    let base = Grid1D::resolve(&p, &proto, &sig, Fidelity::Standard);
    let mut e = Vec::new();
    for m in [1.0, 0.5, 0.25] {
        let g = Grid1D {
            dt: base.dt * m,
            hold_dt: base.hold_dt * m,
            ..base
        };
        e.push(efficiency_1d(&run_cycle(
            &p,
            &proto,
            &sig,
            &g,
            &SolverOptions::default(),
        )?)?);
    }
    Ok((e[0] - e[1]) / (e[1] - e[2]))
}

fn csv_of(report: &RunReport) -> Vec<String> {
    report
        .points
        .iter()
        .flat_map(|p| p.output.datasets.iter().map(|d| csv_text(d, &p.provenance)))
        .collect()
}

fn deterministic() -> anyhow::Result<bool> {
    let mut same = true;
    for (kind, conf) in [
        (ExperimentKind::SweepTransverse, "rb87.conf"),
        (ExperimentKind::StorageCycle, "rb87.conf"),
    ] {
        let s = spec(kind, config(conf)?, Fidelity::Coarse);
        let mut texts = Vec::new();
        for threads in [1, 4] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
            texts.push(csv_of(&pool.install(|| compute(&s))?));
        }
        same &= !texts[0].is_empty() && texts[0] == texts[1];
    }
    Ok(same)
}

fn properties() -> Outcome {
    let g = unit_modulus()?;
    let (rise_a, rise_n) = monotone()?;
    let decay = decay_identity()?;
    let heat = heat_law()?;
    let pars = parseval()?;
    let ratio = richardson()?;
    let det = deterministic()?;
    let parts = [
        (g <= UNIT_MODULUS_TOL, format!("||G|-1| {g:.1e}")),
        (
            rise_a <= 0.0 && rise_n <= 0.0,
            format!("largest rise analytic {rise_a:.1e} numeric {rise_n:.1e}"),
        ),
        (decay <= DECAY_IDENTITY_TOL, format!("D=0 decay {decay:.1e}")),
        (heat < HEAT_LAW_TOL, format!("heat law {heat:.1e}")),
        (pars <= PARSEVAL_TOL, format!("Parseval {pars:.1e}")),
        (
            (RICHARDSON_BAND.0..=RICHARDSON_BAND.1).contains(&ratio),
            format!("Richardson {ratio:.3}"),
        ),
        (
            det,
            format!("thread-count determinism {}", if det { "identical" } else { "differs" }),
        ),
    ];
    let ok = parts.iter().all(|(p, _)| *p);
    let text = parts
        .iter()
        .map(|(p, s)| if *p { s.clone() } else { format!("[failed] {s}") })
        .collect::<Vec<_>>()
        .join("; ");
    Ok((ok, text))
}

fn report(number: usize, name: &str, start: Instant, outcome: Outcome) -> bool {
    let secs = start.elapsed().as_secs_f64();
    let (ok, text) = outcome.unwrap_or_else(|e| (false, format!("error: {e:#}")));
    println!(
        "{} {number:>2} {name} ({secs:.1}s): {text}",
        if ok { "PASS" } else { "FAIL" }
    );
    ok
}

fn main() -> ExitCode {
    let mut all = true;
    let mut run = |n: usize, name: &str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        all &= report(n, name, t, f());
    };
    run(1, "optical depth", &optical_depth);
    run(2, "write collapse", &|| {
        collapse(
            ExperimentKind::SweepWrite,
            "write-collapse",
            "tau_w",
            "write point",
            0.0,
            1.5,
            MIN_WRITE_POINTS,
        )
    });
    run(3, "hold collapse", &|| {
        collapse(
            ExperimentKind::SweepHold,
            "hold-collapse",
            "tau_h",
            "hold point",
            0.0,
            2.0,
            1,
        )
    });
    run(4, "transverse collapse", &|| {
        collapse(
            ExperimentKind::SweepTransverse,
            "transverse-collapse",
            "tau_perp",
            "transverse case",
            0.0,
            3.0,
            1,
        )
    });
    run(5, "headline total efficiency", &headline);

    // criteria 6 and 7 share one beam-width run
    let t = Instant::now();
    let beam = single(ExperimentKind::BeamWidth, "narrowing.conf");
    match beam {
        Ok(out) => {
            let elapsed = t.elapsed().as_secs_f64();
            println!("     beam-width run took {elapsed:.1}s");
            run(6, "width law", &|| width_law(&out));
            run(7, "anomalous narrowing", &|| narrowing(&out));
        }
        Err(e) => {
            let msg = format!("{e:#}");
            run(6, "width law", &|| Err(anyhow::anyhow!("{msg}")));
            run(7, "anomalous narrowing", &|| Err(anyhow::anyhow!("{msg}")));
        }
    }
    run(8, "phase formula", &phase_formula);
    run(9, "HG mode ratio", &hg_modes);
    run(10, "property suite", &properties);

    if all {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("some criteria failed");
        ExitCode::FAILURE
    }
}
