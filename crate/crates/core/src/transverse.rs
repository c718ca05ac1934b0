//! Transverse structure of the stored excitation.
//!
//! With a homogeneous control field every transverse Fourier mode obeys the 1D
//! system with an extra uniform decay `γ_k = D (kx² + ky²)`, so one 1D solve
//! plus a per-mode factor `exp(-γ_k (t_H + 2t))` gives the full output. A
//! Gaussian control field breaks that: the columns then differ in coupling,
//! optical depth and light shift, and only diffusion links them. The real-space
//! solvers split each step into transverse diffusion and per-column 1D steps.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::analytic::hg_axis_efficiency;
use crate::error::{GemError, Result};
use crate::model::{Phase, PhysicalParams, StorageProtocol};
use crate::numerics::{fit_centered_gaussian, fit_line, trapezoid, unwrap_phase, GaussianFit, LineFit};
use crate::pulses::{
    control_rabi, sample_temporal, sample_transverse, sample_transverse_spectrum, ControlProfile, SignalSpec,
};
use crate::solver1d::{
    efficiency_1d, run_cycle, step_count, ColumnStepper, Coupling, CycleRecord, Grid1D, GuardMonitor, Layout,
    SolverOptions, TimeSeries,
};

/// Samples below this fraction of the peak are excluded from phase maps.
pub const PHASE_MASK: f64 = 1e-6;
/// Intensity samples below this fraction of the peak are left out of the width fit.
pub const FIT_FLOOR: f64 = 1e-4;

/// Square transverse grid and its FFT wavenumbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeGrid {
    pub n: usize,
    /// Side length of the periodic window, m.
    pub window: f64,
    /// FFT-ordered wavenumbers, shared by both axes.
    pub k: Vec<f64>,
}

impl ModeGrid {
    pub fn new(n: usize, window: f64) -> Self {
        let dk = 2.0 * PI / window;
        let k = (0..n)
            .map(|j| if j < n / 2 { j as f64 } else { j as f64 - n as f64 } * dk)
            .collect();
        ModeGrid { n, window, k }
    }

    /// Window of 12 waists with enough points to resolve the mode spectrum.
    pub fn for_signal(signal: &SignalSpec, n: usize) -> Self {
        Self::new(n, 12.0 * signal.waist_a)
    }

    pub fn dx(&self) -> f64 {
        self.window / self.n as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.dx()
    }

    /// Window at least 6 waists and Nyquist wavenumber past the 1e-6 point of the spectrum.
    pub fn validate(&self, signal: &SignalSpec) -> Result<()> {
        let a = signal.waist_a;
        if self.window < 6.0 * a {
            return Err(GemError::Grid(format!(
                "transverse window {} below 6 waists",
                self.window
            )));
        }
        let order = signal.mode_m.max(signal.mode_n);
        let nyquist = PI / self.dx();
        let peak = (0..200)
            .map(|j| crate::pulses::hg_factor_spectrum(order, j as f64 * 0.1 / a, a).norm())
            .fold(0.0, f64::max);
        let edge = crate::pulses::hg_factor_spectrum(order, nyquist, a).norm();
        if edge > 1e-6 * peak {
            return Err(GemError::Grid(format!(
                "transverse Nyquist {nyquist:.3e} rad/m leaves spectrum at {:.1e} of peak",
                edge / peak
            )));
        }
        Ok(())
    }
}

/// One shared 1D solve with per-mode transverse decay.
#[derive(Debug, Clone)]
pub struct QuasiRecord {
    pub base: CycleRecord,
    pub grid: ModeGrid,
    pub signal: SignalSpec,
    pub diff_coeff: f64,
    pub t_hold: f64,
    /// Continuous transverse spectrum of the input on the grid, `[iy * n + ix]`.
    pub spectrum: Vec<Complex64>,
}

impl QuasiRecord {
    /// Read offset `t` of output sample `j` (emitted at `t_H + t`).
    pub fn read_offset(&self, j: usize) -> f64 {
        self.base.f_out.time(j) - self.t_hold
    }

    pub fn mode_decay(&self, kx: f64, ky: f64, j: usize) -> f64 {
        let gamma = self.diff_coeff * (kx * kx + ky * ky);
        (-gamma * (self.t_hold + 2.0 * self.read_offset(j))).exp()
    }

    /// `f_out(kx, ky, t_H + t)` on the grid.
    pub fn mode_output(&self, ix: usize, iy: usize, j: usize) -> Complex64 {
        let n = self.grid.n;
        self.spectrum[iy * n + ix] * self.base.f_out.values[j] * self.mode_decay(self.grid.k[ix], self.grid.k[iy], j)
    }

    /// Same 1D solve carrying a different Hermite-Gaussian input mode.
    pub fn with_mode(&self, m: u32, n: u32) -> Result<QuasiRecord> {
        let signal = self.signal.with_mode(m, n);
        self.grid.validate(&signal)?;
        Ok(QuasiRecord {
            spectrum: mode_spectrum(&signal, &self.grid),
            signal,
            ..self.clone()
        })
    }

    fn input_norm(&self) -> Result<f64> {
        let e = self.base.f_in.energy() * self.spectrum.iter().map(|c| c.norm_sqr()).sum::<f64>();
        if e == 0.0 {
            Err(GemError::ZeroInputNorm)
        } else {
            Ok(e)
        }
    }

    /// Efficiency as a discrete sum over the mode grid.
    pub fn efficiency_kspace(&self) -> Result<f64> {
        let n = self.grid.n;
        let per_t: Vec<f64> = (0..self.base.f_out.values.len())
            .map(|j| {
                let mut acc = 0.0;
                for iy in 0..n {
                    for ix in 0..n {
                        acc += self.mode_output(ix, iy, j).norm_sqr();
                    }
                }
                acc
            })
            .collect();
        Ok(trapezoid(&per_t, self.base.f_out.dt) / self.input_norm()?)
    }

    /// Efficiency with the transverse integrals done by Gauss-Hermite quadrature.
    pub fn efficiency_quadrature(&self) -> Result<f64> {
        let a2 = self.signal.waist_a * self.signal.waist_a;
        let per_t: Vec<f64> = self
            .base
            .f_out
            .values
            .iter()
            .enumerate()
            .map(|(j, f)| {
                let tau = 4.0 * self.diff_coeff * (self.t_hold + 2.0 * self.read_offset(j)) / a2;
                f.norm_sqr() * hg_axis_efficiency(self.signal.mode_m, tau) * hg_axis_efficiency(self.signal.mode_n, tau)
            })
            .collect();
        let input = self.base.f_in.energy();
        if input == 0.0 {
            return Err(GemError::ZeroInputNorm);
        }
        Ok(trapezoid(&per_t, self.base.f_out.dt) / input)
    }

    /// Real-space output intensity map `∫ |f_out(x, y, t)|² dt`, `[iy * n + ix]`,
    /// with `x` centred on the window.
    pub fn intensity_map(&self) -> Vec<f64> {
        let n = self.grid.n;
        let mut planner = FftPlanner::new();
        let ifft = planner.plan_fft_inverse(n);
        let mut acc = vec![vec![0.0; n * n]; self.base.f_out.values.len()];
        let dk = 2.0 * PI / self.grid.window;
        let scale = dk * dk / (4.0 * PI * PI);
        acc.par_iter_mut().enumerate().for_each(|(j, out)| {
            let mut buf = vec![Complex64::default(); n * n];
            for iy in 0..n {
                for ix in 0..n {
                    buf[iy * n + ix] = self.mode_output(ix, iy, j);
                }
            }
            inverse_2d(&*ifft, &mut buf, n);
            for iy in 0..n {
                for ix in 0..n {
                    // shift the origin to the window centre
                    let src = ((iy + n / 2) % n) * n + (ix + n / 2) % n;
                    out[iy * n + ix] = (buf[src] * scale).norm_sqr();
                }
            }
        });
        let mut map = vec![0.0; n * n];
        for (idx, m) in map.iter_mut().enumerate() {
            let series: Vec<f64> = acc.iter().map(|a| a[idx]).collect();
            *m = trapezoid(&series, self.base.f_out.dt);
        }
        map
    }

    /// Efficiency from the real-space intensity map and the real-space input.
    pub fn efficiency_realspace(&self) -> Result<f64> {
        let n = self.grid.n;
        let dx = self.grid.dx();
        let out: f64 = self.intensity_map().iter().sum::<f64>() * dx * dx;
        let mut planner = FftPlanner::new();
        let ifft = planner.plan_fft_inverse(n);
        let mut buf = self.spectrum.clone();
        inverse_2d(&*ifft, &mut buf, n);
        let dk = 2.0 * PI / self.grid.window;
        let scale = dk * dk / (4.0 * PI * PI);
        let input: f64 = buf.iter().map(|c| (c * scale).norm_sqr()).sum::<f64>() * dx * dx * self.base.f_in.energy();
        if input == 0.0 {
            return Err(GemError::ZeroInputNorm);
        }
        Ok(out / input)
    }

    pub fn beam_profile(&self) -> Result<BeamProfile> {
        let n = self.grid.n;
        let map = self.intensity_map();
        let mut r = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                r.push(self.grid.x(ix).hypot(self.grid.x(iy)));
            }
        }
        let w = vec![self.grid.dx() * self.grid.dx(); n * n];
        intensity_and_width(&r, &w, &map)
    }
}

fn inverse_2d(ifft: &dyn rustfft::Fft<f64>, buf: &mut [Complex64], n: usize) {
    for row in buf.chunks_mut(n) {
        ifft.process(row);
    }
    let mut col = vec![Complex64::default(); n];
    for ix in 0..n {
        for iy in 0..n {
            col[iy] = buf[iy * n + ix];
        }
        ifft.process(&mut col);
        for iy in 0..n {
            buf[iy * n + ix] = col[iy];
        }
    }
}

/// Quasi-1D solve for a homogeneous control field.
pub fn run_cycle_quasi1d(
    params: &PhysicalParams,
    protocol: &StorageProtocol,
    signal: &SignalSpec,
    control: &ControlProfile,
    grid: &ModeGrid,
    grid1d: &Grid1D,
    options: &SolverOptions,
) -> Result<QuasiRecord> {
    if !control.is_homogeneous() {
        return Err(GemError::InhomogeneousControl);
    }
    grid.validate(signal)?;
    let p = PhysicalParams {
        omega_rabi: control.omega_peak,
        ..*params
    };
    let base = run_cycle(&p, protocol, signal, grid1d, options)?;
    Ok(QuasiRecord {
        base,
        grid: grid.clone(),
        signal: *signal,
        diff_coeff: params.diff_coeff,
        t_hold: protocol.t_hold,
        spectrum: mode_spectrum(signal, grid),
    })
}

fn mode_spectrum(signal: &SignalSpec, grid: &ModeGrid) -> Vec<Complex64> {
    let n = grid.n;
    let mut spectrum = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            spectrum.push(sample_transverse_spectrum(signal, grid.k[ix], grid.k[iy]));
        }
    }
    spectrum
}

/// Fundamental-mode efficiency from independent 1D solves, each transverse
/// shell `u = a² k² / 2` carrying its own uniform decay `γ = 2 D u / a²`,
/// weighted by Gauss-Laguerre quadrature over `e^{-u}`.
pub fn efficiency_per_mode_exact(
    params: &PhysicalParams,
    protocol: &StorageProtocol,
    signal: &SignalSpec,
    grid1d: &Grid1D,
    options: &SolverOptions,
    nodes: usize,
) -> Result<f64> {
    if !signal.is_fundamental() {
        return Err(GemError::NonGaussianMode {
            m: signal.mode_m,
            n: signal.mode_n,
        });
    }
    let rule =
        gauss_quad::GaussLaguerre::new(nodes, 0.0).map_err(|e| GemError::Grid(format!("Gauss-Laguerre rule: {e}")))?;
    let a2 = signal.waist_a * signal.waist_a;
    let pairs: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
    let values: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(u, _)| {
            let opts = SolverOptions {
                extra_decay: options.extra_decay + 2.0 * params.diff_coeff * u / a2,
                spectrum_stride: None,
                ..*options
            };
            efficiency_1d(&run_cycle(params, protocol, signal, grid1d, &opts)?)
        })
        .collect();
    let mut acc = 0.0;
    for ((_, w), v) in pairs.iter().zip(values) {
        acc += w * v?;
    }
    Ok(acc)
}

/// Transverse discretisation for the real-space solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TransverseGrid {
    /// Rings of width `r_max / n_r` centred at `(j + 1/2) Δr`; axisymmetric inputs only.
    Radial { n_r: usize, r_max: f64 },
    /// `n × n` periodic grid of side `window`, origin at the centre.
    Cartesian { n: usize, window: f64 },
}

impl TransverseGrid {
    pub fn radial_for(signal: &SignalSpec, n_r: usize) -> Self {
        TransverseGrid::Radial {
            n_r,
            r_max: 6.0 * signal.waist_a,
        }
    }

    /// `(x, y)` of each column and its transverse area.
    fn columns(&self) -> (Vec<(f64, f64)>, Vec<f64>) {
        match *self {
            TransverseGrid::Radial { n_r, r_max } => {
                let dr = r_max / n_r as f64;
                (0..n_r)
                    .map(|j| {
                        let r = (j as f64 + 0.5) * dr;
                        ((r, 0.0), 2.0 * PI * r * dr)
                    })
                    .unzip()
            }
            TransverseGrid::Cartesian { n, window } => {
                let dx = window / n as f64;
                let mut pos = Vec::with_capacity(n * n);
                for iy in 0..n {
                    for ix in 0..n {
                        pos.push(((ix as f64 - (n / 2) as f64) * dx, (iy as f64 - (n / 2) as f64) * dx));
                    }
                }
                (pos, vec![dx * dx; n * n])
            }
        }
    }
}

/// Crank-Nicolson finite-volume radial diffusion with zero flux at both ends.
struct RadialDiffusion {
    n_r: usize,
    key: f64,
    // Thomas factorisation of (I - μ L)
    lower: Vec<f64>,
    diag_inv: Vec<f64>,
    upper_mod: Vec<f64>,
    a: Vec<f64>,
    c: Vec<f64>,
}

impl RadialDiffusion {
    fn new(n_r: usize, r_max: f64) -> Self {
        let dr = r_max / n_r as f64;
        let mut a = vec![0.0; n_r];
        let mut c = vec![0.0; n_r];
        for j in 0..n_r {
            let rc = (j as f64 + 0.5) * dr;
            a[j] = j as f64 * dr / (rc * dr * dr);
            c[j] = if j + 1 < n_r {
                (j + 1) as f64 * dr / (rc * dr * dr)
            } else {
                0.0
            };
        }
        RadialDiffusion {
            n_r,
            key: f64::NAN,
            lower: vec![0.0; n_r],
            diag_inv: vec![0.0; n_r],
            upper_mod: vec![0.0; n_r],
            a,
            c,
        }
    }

    fn prepare(&mut self, mu: f64) {
        if mu == self.key {
            return;
        }
        let n = self.n_r;
        let mut prev_upper = 0.0;
        for j in 0..n {
            let lo = -mu * self.a[j];
            let di = 1.0 + mu * (self.a[j] + self.c[j]);
            let up = -mu * self.c[j];
            let denom = di - lo * prev_upper;
            self.lower[j] = lo;
            self.diag_inv[j] = 1.0 / denom;
            self.upper_mod[j] = up / denom;
            prev_upper = self.upper_mod[j];
        }
        self.key = mu;
    }

    /// Advance columns `[ring][z]` by `h` at diffusion coefficient `d`.
    fn apply(&mut self, cols: &mut [Vec<Complex64>], d: f64, h: f64) {
        if d == 0.0 {
            return;
        }
        let mu = d * h / 2.0;
        self.prepare(mu);
        let n = self.n_r;
        let n_z = cols[0].len();
        let mut rhs = vec![Complex64::default(); n];
        for i in 0..n_z {
            for j in 0..n {
                let u = cols[j][i];
                let mut v = u * (1.0 - mu * (self.a[j] + self.c[j]));
                if j > 0 {
                    v += cols[j - 1][i] * (mu * self.a[j]);
                }
                if j + 1 < n {
                    v += cols[j + 1][i] * (mu * self.c[j]);
                }
                rhs[j] = v;
            }
            // forward sweep
            let mut prev = Complex64::default();
            for j in 0..n {
                let v = (rhs[j] - prev * self.lower[j]) * self.diag_inv[j];
                rhs[j] = v;
                prev = v;
            }
            // back substitution
            let mut next = Complex64::default();
            for j in (0..n).rev() {
                let v = rhs[j] - next * self.upper_mod[j];
                cols[j][i] = v;
                next = v;
            }
        }
    }
}

/// Exact spectral diffusion on the Cartesian transverse grid.
struct CartesianDiffusion {
    n: usize,
    mult_key: f64,
    mult: Vec<f64>,
    k2: Vec<f64>,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    ifft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl CartesianDiffusion {
    fn new(n: usize, window: f64) -> Self {
        let grid = ModeGrid::new(n, window);
        let mut k2 = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                k2.push(grid.k[ix] * grid.k[ix] + grid.k[iy] * grid.k[iy]);
            }
        }
        let mut planner = FftPlanner::new();
        CartesianDiffusion {
            n,
            mult_key: f64::NAN,
            mult: vec![1.0; n * n],
            k2,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
        }
    }

    fn apply(&mut self, cols: &mut [Vec<Complex64>], d: f64, h: f64) {
        if d == 0.0 {
            return;
        }
        let n = self.n;
        let key = d * h;
        if key != self.mult_key {
            let norm = 1.0 / (n * n) as f64;
            for (m, k2) in self.mult.iter_mut().zip(&self.k2) {
                *m = (-key * k2).exp() * norm;
            }
            self.mult_key = key;
        }
        let n_z = cols[0].len();
        let mut slice = vec![Complex64::default(); n * n];
        let mut line = vec![Complex64::default(); n];
        for i in 0..n_z {
            for (s, c) in slice.iter_mut().zip(cols.iter()) {
                *s = c[i];
            }
            if slice.iter().all(|c| c.norm_sqr() == 0.0) {
                continue;
            }
            transform_2d(&*self.fft, &mut slice, &mut line, n);
            for (s, m) in slice.iter_mut().zip(&self.mult) {
                *s *= *m;
            }
            transform_2d(&*self.ifft, &mut slice, &mut line, n);
            for (s, c) in slice.iter().zip(cols.iter_mut()) {
                c[i] = *s;
            }
        }
    }
}

fn transform_2d(fft: &dyn rustfft::Fft<f64>, buf: &mut [Complex64], line: &mut [Complex64], n: usize) {
    for row in buf.chunks_mut(n) {
        fft.process(row);
    }
    for ix in 0..n {
        for iy in 0..n {
            line[iy] = buf[iy * n + ix];
        }
        fft.process(line);
        for iy in 0..n {
            buf[iy * n + ix] = line[iy];
        }
    }
}

enum TransverseOp {
    Radial(RadialDiffusion),
    Cartesian(CartesianDiffusion),
}

impl TransverseOp {
    fn apply(&mut self, cols: &mut [Vec<Complex64>], d: f64, h: f64) {
        match self {
            TransverseOp::Radial(r) => r.apply(cols, d, h),
            TransverseOp::Cartesian(c) => c.apply(cols, d, h),
        }
    }
}

/// Output of a real-space solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealSpaceRecord {
    pub grid: TransverseGrid,
    /// `(x, y)` of each column.
    pub positions: Vec<(f64, f64)>,
    /// Transverse area of each column.
    pub weights: Vec<f64>,
    /// Input transverse amplitude of each column.
    pub input_amplitude: Vec<f64>,
    /// Temporal input envelope at `z = -L`.
    pub f_in: TimeSeries,
    /// Field leaving each column during read.
    pub f_out: Vec<TimeSeries>,
    /// Lab-frame spin wave per column at mid-hold.
    pub mid_hold: Vec<Vec<Complex64>>,
    pub z: Vec<f64>,
    pub t_mid_hold: f64,
    pub guard_max: f64,
}

impl RealSpaceRecord {
    pub fn radius(&self, c: usize) -> f64 {
        let (x, y) = self.positions[c];
        x.hypot(y)
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.positions.len()).map(|c| self.radius(c)).collect()
    }

    /// `∫ |f_out|² dt` per column.
    pub fn intensity(&self) -> Vec<f64> {
        self.f_out.iter().map(|s| s.energy()).collect()
    }

    pub fn efficiency(&self) -> Result<f64> {
        let e_in = self.f_in.energy();
        let input: f64 = self
            .weights
            .iter()
            .zip(&self.input_amplitude)
            .map(|(w, u)| w * u * u)
            .sum::<f64>()
            * e_in;
        if input == 0.0 {
            return Err(GemError::ZeroInputNorm);
        }
        let out: f64 = self.weights.iter().zip(self.intensity()).map(|(w, i)| w * i).sum();
        Ok(out / input)
    }

    pub fn beam_profile(&self) -> Result<BeamProfile> {
        intensity_and_width(&self.radii(), &self.weights, &self.intensity())
    }

    /// Largest relative asymmetry between columns at equal radius
    /// (Cartesian grids; 0 for radial ones).
    pub fn asymmetry(&self) -> f64 {
        let intensity = self.intensity();
        let peak = intensity.iter().cloned().fold(0.0, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        let TransverseGrid::Cartesian { n, .. } = self.grid else {
            return 0.0;
        };
        let c = n / 2;
        let mut worst: f64 = 0.0;
        // compare each column with its 90° rotation about the centre
        for iy in 1..n {
            for ix in 1..n {
                let (dx, dy) = (ix as isize - c as isize, iy as isize - c as isize);
                let (rx, ry) = (c as isize - dy, c as isize + dx);
                if rx < 1 || ry < 1 || rx >= n as isize || ry >= n as isize {
                    continue;
                }
                let a = intensity[iy * n + ix];
                let b = intensity[ry as usize * n + rx as usize];
                worst = worst.max((a - b).abs() / peak);
            }
        }
        worst
    }
}

/// Real-space solve with column-local coupling from `control`.
pub fn run_cycle_realspace(
    params: &PhysicalParams,
    protocol: &StorageProtocol,
    signal: &SignalSpec,
    control: &ControlProfile,
    grid: &TransverseGrid,
    grid1d: &Grid1D,
    options: &SolverOptions,
) -> Result<RealSpaceRecord> {
    params.validate()?;
    protocol.validate()?;
    signal.validate()?;
    control.validate()?;
    grid1d.validate()?;
    let mut op = match *grid {
        TransverseGrid::Radial { n_r, r_max } => {
            if !signal.is_fundamental() {
                return Err(GemError::Grid("radial grid needs the axisymmetric (0,0) mode".into()));
            }
            if n_r < 4 || !(r_max > 0.0) {
                return Err(GemError::Grid("radial grid needs n_r >= 4 and r_max > 0".into()));
            }
            TransverseOp::Radial(RadialDiffusion::new(n_r, r_max))
        }
        TransverseGrid::Cartesian { n, window } => {
            if n < 4 || !(window > 0.0) {
                return Err(GemError::Grid("Cartesian grid needs n >= 4 and window > 0".into()));
            }
            TransverseOp::Cartesian(CartesianDiffusion::new(n, window))
        }
    };
    let p = PhysicalParams {
        omega_rabi: control.omega_peak,
        ..*params
    };
    let layout = Layout::new(grid1d.n_z, grid1d.z_pad, p.half_length)?;
    let (positions, weights) = grid.columns();
    let n_col = positions.len();
    let input_amplitude: Vec<f64> = positions
        .iter()
        .map(|&(x, y)| sample_transverse(signal, x, y).re)
        .collect();
    let radius: Vec<f64> = positions.iter().map(|&(x, y)| x.hypot(y)).collect();
    let coupling_on: Vec<Coupling> = radius
        .iter()
        .map(|&r| Coupling::at_rabi(&p, control_rabi(control, r)))
        .collect();
    let coupling_off = vec![Coupling::at_rabi(&p, 0.0); n_col];

    let n_threads = rayon::current_num_threads().max(1);
    let chunk = n_col.div_ceil(n_threads);
    let proto_stepper = ColumnStepper::new(layout.clone(), p.k0_minus_kc, p.k_propagation());
    let mut steppers: Vec<ColumnStepper> = (0..n_col.div_ceil(chunk)).map(|_| proto_stepper.clone()).collect();
    let mut cols = vec![vec![Complex64::default(); layout.n_z]; n_col];
    let mut guard = GuardMonitor::default();
    let d = p.diff_coeff;

    struct PhaseRun<'a> {
        phase: Phase,
        couplings: &'a [Coupling],
        n_steps: usize,
        dt: f64,
        t0: f64,
        boundary: bool,
        record: bool,
    }

    let mut run_phase = |run: PhaseRun,
                         cols: &mut Vec<Vec<Complex64>>,
                         steppers: &mut Vec<ColumnStepper>,
                         mid: Option<&mut Vec<Vec<Complex64>>>,
                         guard: &mut GuardMonitor|
     -> Result<Vec<Vec<Complex64>>> {
        let d_long = if options.diffusion.active(run.phase) { d } else { 0.0 };
        let mut outs = vec![Vec::with_capacity(if run.record { run.n_steps + 1 } else { 0 }); n_col];
        let mut mid = mid;
        for j in 0..run.n_steps {
            let t = run.t0 + j as f64 * run.dt;
            let eta = match run.phase {
                Phase::Write => protocol.eta_write,
                Phase::Hold => protocol.eta_hold_at(t + run.dt / 2.0),
                Phase::Read => protocol.eta_read(),
            };
            let (f0, fm) = if run.boundary {
                (sample_temporal(signal, t), sample_temporal(signal, t + run.dt / 2.0))
            } else {
                (Complex64::default(), Complex64::default())
            };
            op.apply(cols, d, run.dt / 2.0);
            let step_outs: Vec<Complex64> = cols
                .par_chunks_mut(chunk)
                .zip(steppers.par_iter_mut())
                .enumerate()
                .flat_map_iter(|(ci, (block, stepper))| {
                    let base = ci * chunk;
                    block
                        .iter_mut()
                        .enumerate()
                        .map(|(bi, s)| {
                            let c = base + bi;
                            let u = input_amplitude[c];
                            stepper.step(
                                s,
                                eta,
                                &run.couplings[c],
                                d_long,
                                options.extra_decay,
                                f0 * u,
                                fm * u,
                                run.dt,
                            )
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
            op.apply(cols, d, run.dt / 2.0);
            if run.record {
                for (o, v) in outs.iter_mut().zip(step_outs) {
                    o.push(v);
                }
            }
            if j % 8 == 7 || j + 1 == run.n_steps {
                let (edge, peak) = guard_levels_all(&layout, cols);
                guard.observe(edge, peak, run.phase)?;
            }
            if run.phase == Phase::Hold && j + 1 == run.n_steps / 2 {
                if let Some(m) = mid.take() {
                    *m = cols.clone();
                }
            }
        }
        Ok(outs)
    };

    // write
    let n_w = step_count(protocol.t_write, grid1d.dt);
    let dt_w = protocol.t_write / n_w as f64;
    run_phase(
        PhaseRun {
            phase: Phase::Write,
            couplings: &coupling_on,
            n_steps: n_w,
            dt: dt_w,
            t0: -protocol.t_write,
            boundary: true,
            record: false,
        },
        &mut cols,
        &mut steppers,
        None,
        &mut guard,
    )?;
    let f_in = TimeSeries {
        t_start: -protocol.t_write,
        dt: dt_w,
        values: (0..=n_w)
            .map(|j| sample_temporal(signal, -protocol.t_write + j as f64 * dt_w))
            .collect(),
    };

    // hold
    let hold_couplings = if protocol.control_on_hold {
        &coupling_on
    } else {
        &coupling_off
    };
    let mut n_h = step_count(protocol.t_hold, grid1d.hold_dt);
    n_h += n_h % 2;
    let mut mid_cols = cols.clone();
    if n_h > 0 {
        run_phase(
            PhaseRun {
                phase: Phase::Hold,
                couplings: hold_couplings,
                n_steps: n_h,
                dt: protocol.t_hold / n_h as f64,
                t0: 0.0,
                boundary: false,
                record: false,
            },
            &mut cols,
            &mut steppers,
            Some(&mut mid_cols),
            &mut guard,
        )?;
    }

    // read
    let n_r = step_count(protocol.t_read(), grid1d.dt);
    let dt_r = protocol.t_read() / n_r as f64;
    let mut outs = run_phase(
        PhaseRun {
            phase: Phase::Read,
            couplings: &coupling_on,
            n_steps: n_r,
            dt: dt_r,
            t0: protocol.t_hold,
            boundary: false,
            record: true,
        },
        &mut cols,
        &mut steppers,
        None,
        &mut guard,
    )?;
    let stepper = &mut steppers[0];
    for (c, o) in outs.iter_mut().enumerate() {
        o.push(stepper.exit_field(&cols[c], Complex64::default(), coupling_on[c].kappa));
    }

    let carrier: Vec<Complex64> = layout
        .z
        .iter()
        .map(|z| Complex64::from_polar(1.0, p.k0_minus_kc * z))
        .collect();
    let mid_hold = mid_cols
        .into_iter()
        .map(|col| col.into_iter().zip(&carrier).map(|(s, e)| s * e).collect())
        .collect();
    Ok(RealSpaceRecord {
        grid: *grid,
        positions,
        weights,
        input_amplitude,
        f_in,
        f_out: outs
            .into_iter()
            .map(|values| TimeSeries {
                t_start: protocol.t_hold,
                dt: dt_r,
                values,
            })
            .collect(),
        mid_hold,
        z: layout.z.clone(),
        t_mid_hold: protocol.t_hold / 2.0,
        guard_max: guard.max_ratio,
    })
}

fn guard_levels_all(layout: &Layout, cols: &[Vec<Complex64>]) -> (f64, f64) {
    cols.iter()
        .map(|c| layout.guard_levels(c))
        .fold((0.0, 0.0), |(e, p), (ce, cp)| (f64::max(e, ce), f64::max(p, cp)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamProfile {
    pub r: Vec<f64>,
    pub intensity: Vec<f64>,
    pub fit: Option<GaussianFit>,
    /// Fitted width when the fit converged, otherwise the second-moment width.
    pub width: f64,
    /// `√(⟨r²⟩ / 2)`, per-axis standard deviation from the intensity moments.
    pub moment_width: f64,
}

impl BeamProfile {
    pub fn fit_converged(&self) -> bool {
        self.fit.is_some()
    }
}

/// Gaussian least-squares width and second-moment width of an intensity profile
/// sampled at radii `r` with transverse areas `weights`.
pub fn intensity_and_width(r: &[f64], weights: &[f64], intensity: &[f64]) -> Result<BeamProfile> {
    if r.len() < 3 || r.len() != intensity.len() || r.len() != weights.len() {
        return Err(GemError::TooFewSamples {
            needed: 3,
            got: r.len().min(intensity.len()),
        });
    }
    let (mut m0, mut m2) = (0.0, 0.0);
    for ((ri, wi), ii) in r.iter().zip(weights).zip(intensity) {
        m0 += wi * ii;
        m2 += wi * ii * ri * ri;
    }
    if m0 == 0.0 {
        return Err(GemError::ZeroInputNorm);
    }
    let moment_width = (m2 / (2.0 * m0)).sqrt();
    let peak = intensity.iter().cloned().fold(0.0, f64::max);
    let (fr, fi): (Vec<f64>, Vec<f64>) = r
        .iter()
        .zip(intensity)
        .filter(|(_, i)| **i >= FIT_FLOOR * peak)
        .map(|(a, b)| (*a, *b))
        .unzip();
    let fit = fit_centered_gaussian(&fr, &fi, moment_width);
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.sort_by(|a, b| r[*a].total_cmp(&r[*b]));
    Ok(BeamProfile {
        r: order.iter().map(|&i| r[i]).collect(),
        intensity: order.iter().map(|&i| intensity[i]).collect(),
        width: fit.map_or(moment_width, |f| f.width),
        fit,
        moment_width,
    })
}

/// Radial phase difference between two spin waves at one `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseProfile {
    pub z: f64,
    pub r: Vec<f64>,
    /// `None` where either amplitude is below the mask.
    pub theta: Vec<Option<f64>>,
}

impl PhaseProfile {
    /// Least-squares `θ = c r² / w_c²` over `r ≤ r_max`; returns `(c, rms residual)`.
    pub fn quadratic_fit(&self, waist_wc: f64, r_max: f64) -> Result<(f64, f64)> {
        let pts: Vec<(f64, f64)> = self
            .r
            .iter()
            .zip(&self.theta)
            .filter_map(|(r, t)| t.filter(|_| *r <= r_max).map(|t| ((r / waist_wc).powi(2), t)))
            .collect();
        if pts.len() < 3 {
            return Err(GemError::TooFewSamples {
                needed: 3,
                got: pts.len(),
            });
        }
        let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
        let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
        let c = sxy / sxx;
        let rms = (pts.iter().map(|(x, y)| (y - c * x).powi(2)).sum::<f64>() / pts.len() as f64).sqrt();
        Ok((c, rms))
    }
}

/// `θ(r) = arg(σ_inhomo · conj σ_homo)` at mid-hold and the grid point nearest `z`,
/// unwrapped outward from the axis.
pub fn extract_phase(inhomo: &RealSpaceRecord, homo: &RealSpaceRecord, z: f64) -> Result<PhaseProfile> {
    if inhomo.positions != homo.positions || inhomo.z != homo.z {
        return Err(GemError::Grid("records use different grids".into()));
    }
    let dz = inhomo.z[1] - inhomo.z[0];
    let iz = ((z - inhomo.z[0]) / dz).round().clamp(0.0, (inhomo.z.len() - 1) as f64) as usize;
    let peak = |rec: &RealSpaceRecord| rec.mid_hold.iter().map(|c| c[iz].norm()).fold(0.0, f64::max);
    let (pa, pb) = (peak(inhomo), peak(homo));
    let radii = inhomo.radii();
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|a, b| radii[*a].total_cmp(&radii[*b]));
    let mut r = Vec::with_capacity(order.len());
    let mut theta = Vec::with_capacity(order.len());
    let mut raw = Vec::new();
    for &c in &order {
        let a = inhomo.mid_hold[c][iz];
        let b = homo.mid_hold[c][iz];
        r.push(radii[c]);
        if a.norm() < PHASE_MASK * pa || b.norm() < PHASE_MASK * pb || pa == 0.0 || pb == 0.0 {
            theta.push(None);
        } else {
            raw.push((theta.len(), (a * b.conj()).arg()));
            theta.push(Some(0.0));
        }
    }
    let mut phases: Vec<f64> = raw.iter().map(|x| x.1).collect();
    unwrap_phase(&mut phases);
    for ((idx, _), v) in raw.iter().zip(phases) {
        theta[*idx] = Some(v);
    }
    Ok(PhaseProfile {
        z: inhomo.z[iz],
        r,
        theta,
    })
}

/// Least-squares slope of `w²` against hold time.
pub fn fit_effective_diffusion(t_hold: &[f64], width_sq: &[f64]) -> Result<LineFit> {
    if t_hold.len() < 4 || width_sq.len() != t_hold.len() {
        return Err(GemError::TooFewSamples {
            needed: 4,
            got: t_hold.len().min(width_sq.len()),
        });
    }
    fit_line(t_hold, width_sq)
}
