//! Split-step integrator for the 1D diffusive Maxwell-Bloch system.
//!
//! The spin wave is stored as `s(z) = exp(-i (k0 - kc) z) σ₁₂(z)` on a periodic
//! padded grid, so the fast carrier never has to be resolved: it only shifts the
//! wavenumber seen by the diffusion multiplier, `exp(-D (q + k0 - kc)² h)`.
//! The field `E(z)` lives on the medium points `[-L, L]` and is slaved to the
//! spin wave through a march in `z` at every sub-step (no retardation).
//!
//! One time step is Strang split: half diffusion, local step, half diffusion.
//! The local step is an exponential midpoint rule around the exact detuning
//! rotation `exp(-i (η z + δ) dt)` with the field re-solved at the half step.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};
use crate::model::{Phase, PhysicalParams, StorageProtocol};
use crate::numerics::trapezoid_norm_sqr;
use crate::pulses::{sample_temporal, SignalSpec};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Spin-wave amplitude allowed in the guard band, relative to the peak.
pub const GUARD_THRESHOLD: f64 = 1e-6;

/// Smallest accepted padding fraction on each side of the medium.
pub const MIN_Z_PAD: f64 = 0.25;

/// Padding fraction `Grid1D::resolve` aims for. At 0.25 the edge ringing under
/// strong diffusion reaches ~1e-6 of peak on coarse grids; at 0.5 it stays near 1e-7.
pub const RESOLVED_Z_PAD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    Coarse,
    Standard,
    Fine,
}

impl Fidelity {
    /// Largest phase advance per cell or per step tolerated by the preset.
    fn phase_budget(self) -> f64 {
        match self {
            Fidelity::Coarse => 0.2,
            Fidelity::Standard => 0.1,
            Fidelity::Fine => 0.05,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Fidelity::Coarse => "coarse",
            Fidelity::Standard => "standard",
            Fidelity::Fine => "fine",
        }
    }
}

impl std::str::FromStr for Fidelity {
    type Err = GemError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coarse" => Ok(Fidelity::Coarse),
            "standard" => Ok(Fidelity::Standard),
            "fine" => Ok(Fidelity::Fine),
            other => Err(GemError::InvalidParameter {
                name: "fidelity",
                reason: format!("unknown preset `{other}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    /// Total points of the periodic grid, a power of two.
    pub n_z: usize,
    /// Padding on each side as a fraction of the medium length.
    pub z_pad: f64,
    /// Step during write and read.
    pub dt: f64,
    /// Step during hold.
    pub hold_dt: f64,
}

impl Grid1D {
    pub fn validate(&self) -> Result<()> {
        if !self.n_z.is_power_of_two() || self.n_z < 16 {
            return Err(GemError::Grid(format!(
                "n_z = {} must be a power of two >= 16",
                self.n_z
            )));
        }
        if !(self.z_pad >= MIN_Z_PAD) {
            return Err(GemError::Grid(format!("z_pad = {} below {MIN_Z_PAD}", self.z_pad)));
        }
        if !(self.dt > 0.0) || !(self.hold_dt > 0.0) {
            return Err(GemError::Grid("time steps must be positive".into()));
        }
        Ok(())
    }

    /// Sizes a grid so that the spin-wave wavenumber range and the gradient
    /// phase per step stay within the preset's phase budget.
    pub fn resolve(
        params: &PhysicalParams,
        protocol: &StorageProtocol,
        signal: &SignalSpec,
        fidelity: Fidelity,
    ) -> Self {
        let budget = fidelity.phase_budget();
        let eta = protocol.eta_write.abs().max(protocol.eta_hold.abs());
        let l = params.half_length;
        let k_a = params.k_propagation();
        let beta = params.beta(protocol.eta_write);
        // envelope wavenumbers relative to the carrier: from k_a - β/L, drifting by η t
        let q0 = k_a - beta / l;
        let drift = eta * protocol.t_write.max(signal.t_in + 3.0 * signal.t_p);
        let width = 4.0 * eta * signal.t_p + 4.0 / l;
        let q_max = [q0.abs() + drift, (q0 - k_a).abs() + drift]
            .into_iter()
            .fold(0.0, f64::max)
            + width;
        // the true wavenumber q + (k0 - kc) must sit well inside the Nyquist band
        let nyquist_cells = 2.0 * l * (q_max + params.k0_minus_kc.abs()) / (0.5 * std::f64::consts::PI);
        let n_med = (2.0 * l * q_max / budget).max(nyquist_cells).ceil().max(64.0);
        let n_z = ((n_med * (1.0 + 2.0 * RESOLVED_Z_PAD)).ceil() as usize).next_power_of_two();
        // power-of-two slack goes to padding: the diffusive ringing from the medium
        // edges falls with distance and would otherwise approach the guard threshold
        let z_pad = (n_z as f64 / n_med - 1.0) / 2.0;

        let rate = eta * l + params.omega_rabi.powi(2) / params.delta_one.abs();
        let mut dt = (budget / 2.0 / rate).min(signal.t_p / 100.0);
        // snap to a whole number of steps per write window
        let steps = (protocol.t_write / dt).ceil();
        dt = protocol.t_write / steps;
        let hold_dt = if protocol.eta_hold == 0.0 && !protocol.control_on_hold {
            (protocol.t_hold / 2.0).max(dt)
        } else {
            dt * 4.0
        };
        Grid1D {
            n_z,
            z_pad,
            dt,
            hold_dt,
        }
    }

    /// A copy with doubled spatial points and halved time steps.
    pub fn refined(&self) -> Self {
        Grid1D {
            n_z: self.n_z * 2,
            z_pad: self.z_pad,
            dt: self.dt / 2.0,
            hold_dt: self.hold_dt / 2.0,
        }
    }
}

/// Geometry of the padded periodic grid.
#[derive(Debug, Clone)]
pub struct Layout {
    pub n_z: usize,
    /// Medium intervals; the medium holds `n_med + 1` points.
    pub n_med: usize,
    /// Index of `z = -L`.
    pub i0: usize,
    pub dz: f64,
    pub z: Vec<f64>,
    /// FFT wavenumbers of the envelope `s`.
    pub q: Vec<f64>,
    /// Grid points belonging to the guard band at both ends.
    pub guard: usize,
}

impl Layout {
    pub fn new(n_z: usize, z_pad: f64, half_length: f64) -> Result<Self> {
        let mut n_med = (n_z as f64 / (1.0 + 2.0 * z_pad)).floor() as usize;
        n_med -= n_med % 2;
        let pad = (n_z - n_med) / 2;
        if n_med < 8 || pad < 4 {
            return Err(GemError::Grid(format!("n_z = {n_z} too small for padding {z_pad}")));
        }
        let dz = 2.0 * half_length / n_med as f64;
        let z = (0..n_z).map(|i| -half_length + (i as f64 - pad as f64) * dz).collect();
        let dq = 2.0 * std::f64::consts::PI / (n_z as f64 * dz);
        let q = (0..n_z)
            .map(|j| if j < n_z / 2 { j as f64 } else { j as f64 - n_z as f64 } * dq)
            .collect();
        Ok(Layout {
            n_z,
            n_med,
            i0: pad,
            dz,
            z,
            q,
            guard: pad / 2,
        })
    }

    pub fn medium(&self) -> std::ops::RangeInclusive<usize> {
        self.i0..=self.i0 + self.n_med
    }

    /// `max |s|` in the guard band over `max |s|` everywhere (0 for a zero wave).
    pub fn guard_ratio(&self, s: &[Complex64]) -> f64 {
        let (edge, peak) = self.guard_levels(s);
        if peak == 0.0 {
            0.0
        } else {
            (edge / peak).sqrt()
        }
    }

    /// `(max |s|² in the guard band, max |s|² everywhere)`.
    pub fn guard_levels(&self, s: &[Complex64]) -> (f64, f64) {
        let g = self.guard;
        let mut edge: f64 = 0.0;
        let mut peak: f64 = 0.0;
        for (i, c) in s.iter().enumerate() {
            let m = c.norm_sqr();
            peak = peak.max(m);
            if i < g || i >= self.n_z - g {
                edge = edge.max(m);
            }
        }
        (edge, peak)
    }
}

/// Guard-band watch over a whole cycle. Leakage is measured against the
/// largest spin wave seen so far, so the nearly empty medium at the start of
/// write and the end of read does not amplify round-off into a violation.
#[derive(Debug, Clone, Copy, Default)]
pub struct GuardMonitor {
    peak_sq: f64,
    /// Largest ratio observed.
    pub max_ratio: f64,
}

impl GuardMonitor {
    /// Records squared guard and peak levels; errors past [`GUARD_THRESHOLD`].
    pub fn observe(&mut self, edge_sq: f64, peak_sq: f64, phase: Phase) -> Result<()> {
        self.peak_sq = self.peak_sq.max(peak_sq);
        if self.peak_sq == 0.0 {
            return Ok(());
        }
        let r = (edge_sq / self.peak_sq).sqrt();
        self.max_ratio = self.max_ratio.max(r);
        if r > GUARD_THRESHOLD {
            return Err(GemError::GuardBand {
                phase: phase.name(),
                relative: r,
            });
        }
        Ok(())
    }
}

/// Local coupling constants of one transverse column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    /// Spin-wave drive `g Ω / Δ`.
    pub g_eff: f64,
    /// Field source `g N Ω / (c Δ)`.
    pub kappa: f64,
    /// Residual light shift, entering as `-i δ σ`.
    pub stark: f64,
}

impl Coupling {
    pub fn at_rabi(params: &PhysicalParams, omega_local: f64) -> Self {
        Coupling {
            g_eff: params.g_eff_at(omega_local),
            kappa: params.field_coupling_at(omega_local),
            stark: params.stark_detuning(omega_local),
        }
    }

    pub fn homogeneous(params: &PhysicalParams, control_on: bool) -> Self {
        Self::at_rabi(params, if control_on { params.omega_rabi } else { 0.0 })
    }

    pub fn is_dark(&self) -> bool {
        self.g_eff == 0.0 && self.kappa == 0.0
    }
}

/// Per-phase switches for the longitudinal diffusion term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffusionMask {
    pub write: bool,
    pub hold: bool,
    pub read: bool,
}

impl DiffusionMask {
    pub const ALL: DiffusionMask = DiffusionMask {
        write: true,
        hold: true,
        read: true,
    };
    pub const NONE: DiffusionMask = DiffusionMask {
        write: false,
        hold: false,
        read: false,
    };

    pub fn only(phase: Phase) -> Self {
        DiffusionMask {
            write: phase == Phase::Write,
            hold: phase == Phase::Hold,
            read: phase == Phase::Read,
        }
    }

    pub fn active(&self, phase: Phase) -> bool {
        match phase {
            Phase::Write => self.write,
            Phase::Hold => self.hold,
            Phase::Read => self.read,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub diffusion: DiffusionMask,
    /// Uniform decay rate applied in every phase, 1/s. A transverse Fourier
    /// mode with `γ = D (kx² + ky²)` obeys the 1D system with this term.
    pub extra_decay: f64,
    /// Record a spectrum frame every this many steps.
    pub spectrum_stride: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            diffusion: DiffusionMask::ALL,
            extra_decay: 0.0,
            spectrum_stride: None,
        }
    }
}

/// Uniformly sampled complex time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub t_start: f64,
    pub dt: f64,
    pub values: Vec<Complex64>,
}

impl TimeSeries {
    pub fn time(&self, j: usize) -> f64 {
        self.t_start + j as f64 * self.dt
    }

    pub fn energy(&self) -> f64 {
        trapezoid_norm_sqr(&self.values, self.dt)
    }

    /// Index and value of the largest `|f|`.
    pub fn peak(&self) -> Option<(usize, f64)> {
        self.values
            .iter()
            .map(|c| c.norm())
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Spin wave `σ₁₂(z)` in the lab frame on the full padded grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinSnapshot {
    pub t: f64,
    pub z: Vec<f64>,
    pub sigma: Vec<Complex64>,
}

impl SpinSnapshot {
    /// Value at the grid point nearest `z`.
    pub fn at(&self, z: f64) -> Complex64 {
        let dz = self.z[1] - self.z[0];
        let j = ((z - self.z[0]) / dz).round().clamp(0.0, (self.z.len() - 1) as f64) as usize;
        self.sigma[j]
    }
}

/// `|σ₁₂(k)|` at one instant, `k` ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFrame {
    pub t: f64,
    pub phase: Phase,
    pub k: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl SpectrumFrame {
    pub fn centroid(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (k, m) in self.k.iter().zip(&self.magnitude) {
            num += k * m * m;
            den += m * m;
        }
        num / den
    }

    pub fn bin_width(&self) -> f64 {
        self.k[1] - self.k[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    /// Input at `z = -L` over the write window.
    pub f_in: TimeSeries,
    /// Field leaving at `z = +L` during write.
    pub transmitted: TimeSeries,
    /// Field leaving at `z = +L` during read.
    pub f_out: TimeSeries,
    pub stored_write_end: SpinSnapshot,
    pub stored_mid_hold: SpinSnapshot,
    pub stored_hold_end: SpinSnapshot,
    pub spectrum_frames: Vec<SpectrumFrame>,
    /// `N / c`, the weight turning `∫|σ|² dz` into field energy.
    pub spin_weight: f64,
    /// Largest guard-band ratio seen.
    pub guard_max: f64,
}

/// Discretised fields at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    /// Envelope `exp(-i (k0 - kc) z) σ₁₂` over the full grid.
    pub sigma12: Vec<Complex64>,
    /// `E` over the medium points.
    pub e_field: Vec<Complex64>,
    pub t_now: f64,
}

/// FFT plans, cached multipliers and scratch for stepping one column at a time.
pub struct ColumnStepper {
    layout: Layout,
    carrier: f64,
    k_a: f64,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    fft_scratch: Vec<Complex64>,
    diffusion_key: (f64, f64, f64),
    diffusion_mult: Vec<f64>,
    rotation_key: (f64, f64),
    rotation_half: Vec<Complex64>,
    e0: Vec<Complex64>,
    e_mid: Vec<Complex64>,
    s_mid: Vec<Complex64>,
}

impl Clone for ColumnStepper {
    fn clone(&self) -> Self {
        ColumnStepper::new(self.layout.clone(), self.carrier, self.k_a)
    }
}

impl ColumnStepper {
    pub fn new(layout: Layout, carrier: f64, k_a: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(layout.n_z);
        let ifft = planner.plan_fft_inverse(layout.n_z);
        let scratch_len = fft.get_inplace_scratch_len().max(ifft.get_inplace_scratch_len());
        let n_z = layout.n_z;
        let n_e = layout.n_med + 1;
        ColumnStepper {
            layout,
            carrier,
            k_a,
            fft,
            ifft,
            fft_scratch: vec![Complex64::default(); scratch_len],
            diffusion_key: (f64::NAN, f64::NAN, f64::NAN),
            diffusion_mult: vec![1.0; n_z],
            rotation_key: (f64::NAN, f64::NAN),
            rotation_half: vec![Complex64::new(1.0, 0.0); n_z],
            e0: vec![Complex64::default(); n_e],
            e_mid: vec![Complex64::default(); n_e],
            s_mid: vec![Complex64::default(); n_z],
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn carrier(&self) -> f64 {
        self.carrier
    }

    /// Integrating-factor trapezoid march of `∂_z E = i κ s + i k_a E` from `-L`.
    pub fn march(&self, s: &[Complex64], boundary: Complex64, kappa: f64, e: &mut [Complex64]) {
        march_field(&self.layout, s, boundary, self.k_a, kappa, e);
    }

    /// Exact diffusion and uniform decay over `h`.
    pub fn diffuse(&mut self, s: &mut [Complex64], d: f64, decay: f64, h: f64) {
        if d == 0.0 && decay == 0.0 {
            return;
        }
        let key = (d, decay, h);
        if key != self.diffusion_key {
            let k0 = self.carrier;
            // alias k into the band symmetric about 0 so the multiplier is periodic
            let span = 2.0 * std::f64::consts::PI / self.layout.dz;
            for (m, q) in self.diffusion_mult.iter_mut().zip(&self.layout.q) {
                let k = q + k0;
                let k = k - span * (k / span).round();
                *m = (-(d * k * k + decay) * h).exp() / self.layout.n_z as f64;
            }
            self.diffusion_key = key;
        }
        if d == 0.0 {
            let f = (-decay * h).exp();
            s.iter_mut().for_each(|c| *c *= f);
            return;
        }
        self.fft.process_with_scratch(s, &mut self.fft_scratch);
        for (c, m) in s.iter_mut().zip(&self.diffusion_mult) {
            *c *= *m;
        }
        self.ifft.process_with_scratch(s, &mut self.fft_scratch);
    }

    /// Local (detuning plus coupling) step. `e_start` must hold the field
    /// slaved to `s` at the step start; `f_mid` is the boundary at mid-step.
    pub fn local_step(
        &mut self,
        s: &mut [Complex64],
        e_start: &[Complex64],
        eta: f64,
        coupling: &Coupling,
        f_mid: Complex64,
        dt: f64,
    ) {
        if (eta, dt) != self.rotation_key {
            for (r, z) in self.rotation_half.iter_mut().zip(&self.layout.z) {
                *r = Complex64::from_polar(1.0, -eta * z * dt / 2.0);
            }
            self.rotation_key = (eta, dt);
        }
        let stark_half = Complex64::from_polar(1.0, -coupling.stark * dt / 2.0);
        if coupling.is_dark() {
            for (c, r) in s.iter_mut().zip(&self.rotation_half) {
                let rot = r * stark_half;
                *c *= rot * rot;
            }
            return;
        }
        let drive = I * coupling.g_eff;
        let i0 = self.layout.i0;
        for (i, (m, (c, r))) in self.s_mid.iter_mut().zip(s.iter().zip(&self.rotation_half)).enumerate() {
            let rot = r * stark_half;
            let src = if i >= i0 && i - i0 < e_start.len() {
                drive * e_start[i - i0] * (dt / 2.0)
            } else {
                Complex64::default()
            };
            *m = rot * (c + src);
        }
        let mut e_mid = std::mem::take(&mut self.e_mid);
        self.march(&self.s_mid, f_mid, coupling.kappa, &mut e_mid);
        for (i, (c, r)) in s.iter_mut().zip(&self.rotation_half).enumerate() {
            let rot = r * stark_half;
            let mut next = rot * rot * *c;
            if i >= i0 && i - i0 < e_mid.len() {
                next += rot * drive * e_mid[i - i0] * dt;
            }
            *c = next;
        }
        self.e_mid = e_mid;
    }

    /// One Strang step. Returns the field at `z = +L` at the step start.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        s: &mut [Complex64],
        eta: f64,
        coupling: &Coupling,
        d: f64,
        decay: f64,
        f_start: Complex64,
        f_mid: Complex64,
        dt: f64,
    ) -> Complex64 {
        let mut e0 = std::mem::take(&mut self.e0);
        self.march(s, f_start, coupling.kappa, &mut e0);
        let out = e0[e0.len() - 1];
        let diffusing = d != 0.0 || decay != 0.0;
        if diffusing {
            self.diffuse(s, d, decay, dt / 2.0);
            self.march(s, f_start, coupling.kappa, &mut e0);
        }
        self.local_step(s, &e0, eta, coupling, f_mid, dt);
        if diffusing {
            self.diffuse(s, d, decay, dt / 2.0);
        }
        self.e0 = e0;
        out
    }

    /// Field at `z = +L` slaved to `s`.
    pub fn exit_field(&mut self, s: &[Complex64], boundary: Complex64, kappa: f64) -> Complex64 {
        let mut e0 = std::mem::take(&mut self.e0);
        self.march(s, boundary, kappa, &mut e0);
        let out = e0[e0.len() - 1];
        self.e0 = e0;
        out
    }

    /// `|σ₁₂(k)|` with `k` the true spatial frequency, ascending.
    pub fn spectrum(&mut self, s: &[Complex64], t: f64, phase: Phase) -> SpectrumFrame {
        let n = self.layout.n_z;
        let mut buf = s.to_vec();
        self.fft.process_with_scratch(&mut buf, &mut self.fft_scratch);
        let dz = self.layout.dz;
        let mut pairs: Vec<(f64, f64)> = self
            .layout
            .q
            .iter()
            .zip(&buf)
            .map(|(q, c)| (q + self.carrier, c.norm() * dz))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (k, magnitude) = pairs.into_iter().unzip();
        debug_assert_eq!(n, self.layout.n_z);
        SpectrumFrame { t, phase, k, magnitude }
    }

    pub fn snapshot(&self, s: &[Complex64], t: f64) -> SpinSnapshot {
        SpinSnapshot {
            t,
            z: self.layout.z.clone(),
            sigma: s
                .iter()
                .zip(&self.layout.z)
                .map(|(c, z)| c * Complex64::from_polar(1.0, self.carrier * z))
                .collect(),
        }
    }
}

/// Integrating-factor trapezoid march over the medium points.
pub fn march_field(layout: &Layout, s: &[Complex64], boundary: Complex64, k_a: f64, kappa: f64, e: &mut [Complex64]) {
    let h = layout.dz;
    let phase = Complex64::from_polar(1.0, k_a * h);
    let src = I * kappa * (h / 2.0);
    let s_med = &s[layout.i0..=layout.i0 + layout.n_med];
    e[0] = boundary;
    if kappa == 0.0 {
        for j in 0..layout.n_med {
            e[j + 1] = phase * e[j];
        }
        return;
    }
    for j in 0..layout.n_med {
        e[j + 1] = phase * e[j] + src * (phase * s_med[j] + s_med[j + 1]);
    }
}

/// Single-column solver owning its state.
pub struct Solver1D {
    stepper: ColumnStepper,
    params: PhysicalParams,
    state: FieldState,
}

impl Solver1D {
    pub fn new(params: &PhysicalParams, grid: &Grid1D) -> Result<Self> {
        params.validate()?;
        grid.validate()?;
        let layout = Layout::new(grid.n_z, grid.z_pad, params.half_length)?;
        let n_z = layout.n_z;
        let n_e = layout.n_med + 1;
        Ok(Solver1D {
            stepper: ColumnStepper::new(layout, params.k0_minus_kc, params.k_propagation()),
            params: *params,
            state: FieldState {
                sigma12: vec![Complex64::default(); n_z],
                e_field: vec![Complex64::default(); n_e],
                t_now: 0.0,
            },
        })
    }

    pub fn state(&self) -> &FieldState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut FieldState {
        &mut self.state
    }

    pub fn layout(&self) -> &Layout {
        self.stepper.layout()
    }

    /// Re-solve `E(z)` from the current spin wave and a boundary value at `z = -L`.
    pub fn integrate_field_slice(&mut self, coupling: &Coupling, boundary: Complex64) -> &[Complex64] {
        self.stepper
            .march(&self.state.sigma12, boundary, coupling.kappa, &mut self.state.e_field);
        &self.state.e_field
    }

    /// Advance the spin wave by `dt`. Boundary values are sampled at the step
    /// start and midpoint; `diffusion` selects whether `D` acts.
    pub fn step_sigma(
        &mut self,
        eta: f64,
        coupling: &Coupling,
        diffusion: bool,
        extra_decay: f64,
        boundary: impl Fn(f64) -> Complex64,
        dt: f64,
    ) -> Complex64 {
        let t = self.state.t_now;
        let d = if diffusion { self.params.diff_coeff } else { 0.0 };
        let out = self.stepper.step(
            &mut self.state.sigma12,
            eta,
            coupling,
            d,
            extra_decay,
            boundary(t),
            boundary(t + dt / 2.0),
            dt,
        );
        self.state.t_now = t + dt;
        out
    }

    pub fn guard_ratio(&self) -> f64 {
        self.layout().guard_ratio(&self.state.sigma12)
    }

    pub fn spectrum(&mut self, phase: Phase) -> SpectrumFrame {
        self.stepper.spectrum(&self.state.sigma12, self.state.t_now, phase)
    }

    pub fn snapshot(&self) -> SpinSnapshot {
        self.stepper.snapshot(&self.state.sigma12, self.state.t_now)
    }

    /// `∫ z |σ|² dz / ∫ |σ|² dz` over the full grid.
    pub fn z_centroid(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (c, z) in self.state.sigma12.iter().zip(&self.layout().z) {
            num += z * c.norm_sqr();
            den += c.norm_sqr();
        }
        num / den
    }

    /// `(N / c) ∫ |σ|² dz`, the stored excitation in field-energy units.
    pub fn stored_energy(&self) -> f64 {
        let dz = self.layout().dz;
        self.params.n_density / self.params.light_speed
            * self.state.sigma12.iter().map(|c| c.norm_sqr()).sum::<f64>()
            * dz
    }
}

/// Number of whole steps covering `duration` at no more than `dt` each.
pub fn step_count(duration: f64, dt: f64) -> usize {
    if duration <= 0.0 {
        0
    } else {
        ((duration / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }
}

/// Runs write, hold and read and records the fields.
pub fn run_cycle(
    params: &PhysicalParams,
    protocol: &StorageProtocol,
    signal: &SignalSpec,
    grid: &Grid1D,
    options: &SolverOptions,
) -> Result<CycleRecord> {
    protocol.validate()?;
    signal.validate()?;
    let mut solver = Solver1D::new(params, grid)?;
    let spin_weight = params.n_density / params.light_speed;
    let mut frames = Vec::new();
    let mut guard = GuardMonitor::default();

    let check_guard = |solver: &Solver1D, phase: Phase, guard: &mut GuardMonitor| -> Result<()> {
        let (edge, peak) = solver.layout().guard_levels(&solver.state.sigma12);
        guard.observe(edge, peak, phase)
    };

    // write
    let n_w = step_count(protocol.t_write, grid.dt);
    let dt_w = protocol.t_write / n_w as f64;
    solver.state.t_now = -protocol.t_write;
    let on = Coupling::homogeneous(params, true);
    let boundary_in = |t: f64| sample_temporal(signal, t);
    let mut f_in = Vec::with_capacity(n_w + 1);
    let mut transmitted = Vec::with_capacity(n_w + 1);
    for j in 0..n_w {
        f_in.push(boundary_in(solver.state.t_now));
        let out = solver.step_sigma(
            protocol.eta_write,
            &on,
            options.diffusion.write,
            options.extra_decay,
            boundary_in,
            dt_w,
        );
        transmitted.push(out);
        if options.spectrum_stride.is_some_and(|k| j % k == 0) {
            frames.push(solver.spectrum(Phase::Write));
        }
        check_guard(&solver, Phase::Write, &mut guard)?;
    }
    solver.state.t_now = 0.0;
    f_in.push(boundary_in(0.0));
    transmitted.push(
        solver
            .stepper
            .exit_field(&solver.state.sigma12, boundary_in(0.0), on.kappa),
    );
    let stored_write_end = solver.snapshot();

    // hold
    let zero = |_: f64| Complex64::default();
    let hold_coupling = Coupling::homogeneous(params, protocol.control_on_hold);
    let mut n_h = step_count(
        protocol.t_hold,
        grid.hold_dt.min(protocol.t_hold.max(f64::MIN_POSITIVE)),
    );
    n_h += n_h % 2;
    let mut stored_mid_hold = stored_write_end.clone();
    if n_h > 0 {
        let dt_h = protocol.t_hold / n_h as f64;
        for j in 0..n_h {
            let t_rel = (j as f64 + 0.5) * dt_h;
            let eta = protocol.eta_hold_at(t_rel);
            solver.step_sigma(
                eta,
                &hold_coupling,
                options.diffusion.hold,
                options.extra_decay,
                zero,
                dt_h,
            );
            if options.spectrum_stride.is_some_and(|k| j % k == 0 || j + 1 == n_h) {
                frames.push(solver.spectrum(Phase::Hold));
            }
            if j + 1 == n_h / 2 {
                stored_mid_hold = solver.snapshot();
            }
            check_guard(&solver, Phase::Hold, &mut guard)?;
        }
    }
    solver.state.t_now = protocol.t_hold;
    let stored_hold_end = solver.snapshot();

    // read
    let n_r = step_count(protocol.t_read(), grid.dt);
    let dt_r = protocol.t_read() / n_r as f64;
    let mut f_out = Vec::with_capacity(n_r + 1);
    for j in 0..n_r {
        let out = solver.step_sigma(
            protocol.eta_read(),
            &on,
            options.diffusion.read,
            options.extra_decay,
            zero,
            dt_r,
        );
        f_out.push(out);
        if options.spectrum_stride.is_some_and(|k| j % k == 0) {
            frames.push(solver.spectrum(Phase::Read));
        }
        check_guard(&solver, Phase::Read, &mut guard)?;
    }
    f_out.push(
        solver
            .stepper
            .exit_field(&solver.state.sigma12, Complex64::default(), on.kappa),
    );
    if options.spectrum_stride.is_some() {
        frames.push(solver.spectrum(Phase::Read));
    }

    Ok(CycleRecord {
        f_in: TimeSeries {
            t_start: -protocol.t_write,
            dt: dt_w,
            values: f_in,
        },
        transmitted: TimeSeries {
            t_start: -protocol.t_write,
            dt: dt_w,
            values: transmitted,
        },
        f_out: TimeSeries {
            t_start: protocol.t_hold,
            dt: dt_r,
            values: f_out,
        },
        stored_write_end,
        stored_mid_hold,
        stored_hold_end,
        spectrum_frames: frames,
        spin_weight,
        guard_max: guard.max_ratio,
    })
}

/// `∫|f_out|² dt / ∫|f_in|² dt`.
pub fn efficiency_1d(record: &CycleRecord) -> Result<f64> {
    let input = record.f_in.energy();
    if input == 0.0 {
        return Err(GemError::ZeroInputNorm);
    }
    Ok(record.f_out.energy() / input)
}

/// Spectrum frames of a record with their centroid track `(t, k̄(t))`.
pub fn spinwave_spectrum(record: &CycleRecord) -> Result<(&[SpectrumFrame], Vec<(f64, f64)>)> {
    if record.spectrum_frames.is_empty() {
        return Err(GemError::EmptyFrames);
    }
    let track = record.spectrum_frames.iter().map(|f| (f.t, f.centroid())).collect();
    Ok((&record.spectrum_frames, track))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PhysicalParams;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn reference() -> (PhysicalParams, StorageProtocol, SignalSpec) {
        let signal = SignalSpec::gaussian(1e-6, 5e-6, 1.45e-3);
        let protocol = StorageProtocol::standard(signal.default_write_window(), 2e-6, -2.0 * PI * 10e6);
        (PhysicalParams::rb87_reference(), protocol, signal)
    }

    fn small_grid() -> Grid1D {
        Grid1D {
            n_z: 256,
            z_pad: 0.25,
            dt: 1e-8,
            hold_dt: 1e-7,
        }
    }

    #[test]
    fn grid_validation() {
        assert!(Grid1D {
            n_z: 300,
            ..small_grid()
        }
        .validate()
        .is_err());
        assert!(Grid1D {
            z_pad: 0.1,
            ..small_grid()
        }
        .validate()
        .is_err());
        assert!(small_grid().validate().is_ok());
    }

    #[test]
    fn layout_geometry() {
        let l = Layout::new(256, 0.25, 0.1).unwrap();
        assert_relative_eq!(l.z[l.i0], -0.1, epsilon = 1e-15);
        assert_relative_eq!(l.z[l.i0 + l.n_med], 0.1, epsilon = 1e-12);
        assert!(l.i0 as f64 >= 0.25 * l.n_med as f64);
        assert!(l.i0 + l.n_med < l.n_z);
    }

    #[test]
    fn march_without_source_is_plane_wave() {
        let (p, ..) = reference();
        let layout = Layout::new(256, 0.25, p.half_length).unwrap();
        let s = vec![Complex64::default(); 256];
        let mut e = vec![Complex64::default(); layout.n_med + 1];
        let f = Complex64::new(0.7, -0.2);
        let k_a = p.k_propagation();
        march_field(&layout, &s, f, k_a, p.field_coupling_at(p.omega_rabi), &mut e);
        for (j, v) in e.iter().enumerate() {
            let z = j as f64 * layout.dz;
            assert!((v - f * Complex64::from_polar(1.0, k_a * z)).norm() < 1e-12);
        }
        march_field(&layout, &s, Complex64::default(), k_a, 1.0, &mut e);
        assert!(e.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn march_matches_integrating_factor_quadrature() {
        let (p, ..) = reference();
        let layout = Layout::new(8192, 0.25, p.half_length).unwrap();
        let w = 0.004;
        let s: Vec<Complex64> = layout
            .z
            .iter()
            .map(|z| Complex64::new((-(z / w) * (z / w)).exp(), 0.0))
            .collect();
        let k_a = p.k_propagation();
        let kappa = p.field_coupling_at(p.omega_rabi);
        let mut e = vec![Complex64::default(); layout.n_med + 1];
        march_field(&layout, &s, Complex64::default(), k_a, kappa, &mut e);
        // E(L) = i κ ∫ exp(i k_a (L - z)) s(z) dz = i κ e^{i k_a L} w √π exp(-k_a² w² / 4)
        let l = p.half_length;
        let exact = I * kappa * Complex64::from_polar(1.0, k_a * l) * w * PI.sqrt() * (-(k_a * w).powi(2) / 4.0).exp();
        let got = e[layout.n_med];
        assert!((got - exact).norm() / exact.norm() < 1e-8, "{got} vs {exact}");
    }

    #[test]
    fn dark_step_is_pure_rotation() {
        let (p, ..) = reference();
        let p = PhysicalParams { diff_coeff: 0.0, ..p };
        let mut solver = Solver1D::new(&p, &small_grid()).unwrap();
        let z = solver.layout().z.clone();
        let init: Vec<Complex64> = z
            .iter()
            .map(|z| Complex64::new((-(z * 30.0).powi(2)).exp(), 0.1))
            .collect();
        solver.state_mut().sigma12 = init.clone();
        let eta = -2.0 * PI * 10e6;
        let dark = Coupling {
            g_eff: 0.0,
            kappa: 0.0,
            stark: 0.0,
        };
        let dt = 3e-8;
        solver.step_sigma(eta, &dark, true, 0.0, |_| Complex64::default(), dt);
        for ((a, b), z) in solver.state().sigma12.iter().zip(&init).zip(&z) {
            let expect = b * Complex64::from_polar(1.0, -eta * z * dt);
            assert!((a - expect).norm() < 1e-14);
            assert!((a.norm() - b.norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn single_mode_heat_decay() {
        let (p, ..) = reference();
        let p = PhysicalParams { diff_coeff: 0.05, ..p };
        let mut solver = Solver1D::new(&p, &small_grid()).unwrap();
        let layout = solver.layout().clone();
        let j = 7;
        let q = layout.q[j];
        solver.state_mut().sigma12 = layout.z.iter().map(|z| Complex64::from_polar(1.0, q * z)).collect();
        let dark = Coupling::homogeneous(&p, false);
        let dt = 2e-6;
        solver.step_sigma(
            0.0,
            &Coupling { stark: 0.0, ..dark },
            true,
            0.0,
            |_| Complex64::default(),
            dt,
        );
        let k = q + p.k0_minus_kc;
        let expect = (-p.diff_coeff * k * k * dt).exp();
        for c in &solver.state().sigma12 {
            assert_relative_eq!(c.norm(), expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let (p, proto, sig) = reference();
        let sig = SignalSpec { amplitude: 0.0, ..sig };
        let rec = run_cycle(&p, &proto, &sig, &small_grid(), &SolverOptions::default()).unwrap();
        assert!(rec.f_out.values.iter().all(|c| c.norm() == 0.0));
        assert_eq!(efficiency_1d(&rec), Err(GemError::ZeroInputNorm));
    }

    fn synthetic(f_in: Vec<Complex64>, f_out: Vec<Complex64>) -> CycleRecord {
        let snap = SpinSnapshot {
            t: 0.0,
            z: vec![0.0, 1.0],
            sigma: vec![Complex64::default(); 2],
        };
        CycleRecord {
            f_in: TimeSeries {
                t_start: 0.0,
                dt: 0.1,
                values: f_in,
            },
            transmitted: TimeSeries {
                t_start: 0.0,
                dt: 0.1,
                values: vec![],
            },
            f_out: TimeSeries {
                t_start: 0.0,
                dt: 0.1,
                values: f_out,
            },
            stored_write_end: snap.clone(),
            stored_mid_hold: snap.clone(),
            stored_hold_end: snap,
            spectrum_frames: vec![],
            spin_weight: 1.0,
            guard_max: 0.0,
        }
    }

    #[test]
    fn efficiency_functional() {
        let f: Vec<Complex64> = (0..101)
            .map(|j| Complex64::new((-(j as f64 - 50.0).powi(2) / 100.0).exp(), 0.0))
            .collect();
        let rev: Vec<Complex64> = f.iter().rev().cloned().collect();
        assert_relative_eq!(
            efficiency_1d(&synthetic(f.clone(), rev.clone())).unwrap(),
            1.0,
            max_relative = 1e-14
        );
        let half: Vec<Complex64> = rev.iter().map(|c| c * 0.5).collect();
        assert_relative_eq!(
            efficiency_1d(&synthetic(f.clone(), half)).unwrap(),
            0.25,
            max_relative = 1e-14
        );
        let zero = vec![Complex64::default(); f.len()];
        assert_eq!(efficiency_1d(&synthetic(f, zero)).unwrap(), 0.0);
        assert_eq!(
            spinwave_spectrum(&synthetic(vec![], vec![])).err(),
            Some(GemError::EmptyFrames)
        );
    }

    #[test]
    fn step_count_rounds_up() {
        assert_eq!(step_count(1e-6, 1e-8), 100);
        assert_eq!(step_count(1.005e-6, 1e-8), 101);
        assert_eq!(step_count(0.0, 1e-8), 0);
    }

    #[test]
    fn fidelity_parses() {
        assert_eq!("fine".parse::<Fidelity>().unwrap(), Fidelity::Fine);
        assert!("ultra".parse::<Fidelity>().is_err());
    }
}
