//! Closed-form results: the k-space write-in solution, the diffusive decay
//! factors, the efficiency formulas and their linearised budget, the output
//! beam-width law and the control-inhomogeneity phase.
//!
//! All formulas use the signed gradient `η` and signed optical depth `β`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{GemError, Result};
use crate::model::{derive_groups, DerivedGroups, PhysicalParams, StorageProtocol};
use crate::numerics::{arg_gamma_imaginary, integrate};
use crate::pulses::{sample_temporal, sample_transverse_spectrum, ControlProfile, SignalSpec};

/// Relative tolerance of the exact efficiency quadratures.
pub const QUADRATURE_TOL: f64 = 1e-8;
/// Gaussian envelopes are integrated out to this many `t_p` from their centre.
pub const ENVELOPE_CUTOFF: f64 = 6.0;
/// `α` within this distance of 1 selects the simplified exponential forms.
pub const ALPHA_UNITY_BAND: f64 = 0.01;

/// Per-output-time diffusive decay multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFactors {
    pub diff_coeff: f64,
    pub eta: f64,
    pub k_i: f64,
    pub t_hold: f64,
}

impl DecayFactors {
    pub fn new(params: &PhysicalParams, protocol: &StorageProtocol) -> Result<Self> {
        let eta = protocol.eta_write;
        if eta == 0.0 {
            return Err(GemError::ZeroWriteGradient);
        }
        Ok(DecayFactors {
            diff_coeff: params.diff_coeff,
            eta,
            k_i: params.k_bar() - params.beta(eta) / params.half_length,
            t_hold: protocol.t_hold,
        })
    }

    /// Write decay of the component emitted at read offset `t`.
    pub fn d_w(&self, t: f64) -> f64 {
        let k = self.k_i - self.eta * t;
        (-self.diff_coeff / (3.0 * self.eta) * (self.k_i.powi(3) - k.powi(3))).exp()
    }

    pub fn d_h(&self, t: f64) -> f64 {
        let k = self.k_i - self.eta * t;
        (-self.diff_coeff * self.t_hold * k * k).exp()
    }

    pub fn d_r(&self, t: f64) -> f64 {
        self.d_w(t)
    }

    /// Transverse decay `exp(-γ_k (2 t + t_H))`, `γ_k = D (kx² + ky²)`.
    pub fn d_perp(&self, kx: f64, ky: f64, t: f64) -> f64 {
        let gamma = self.diff_coeff * (kx * kx + ky * ky);
        (-gamma * (2.0 * t + self.t_hold)).exp()
    }
}

/// Write-in kernel amplitude `G(η, β, L)`.
pub fn write_kernel(eta: f64, beta: f64, half_length: f64) -> Complex64 {
    let b = beta.abs();
    // β e^{-π|β|/2} sinh(π|β|) |Γ(iβ)| / η, with sinh and |Γ| combined in log form
    let ln_mag = 0.5 * (PI * b).ln() + 0.5 * ln_sinh(PI * b) - PI * b / 2.0 - eta.abs().ln();
    let sign = (beta / eta).signum();
    let phase = -beta * (eta * half_length).abs().ln() + arg_gamma_imaginary(beta);
    Complex64::from_polar(sign * ln_mag.exp(), phase)
}

fn ln_sinh(x: f64) -> f64 {
    x + ((1.0 - (-2.0 * x).exp()) / 2.0).ln()
}

/// Unit-modulus output phase factor `Ḡ(t)`. `t_hold_on` is the hold time spent
/// with the control field on; pass 0 when the control is off during hold.
pub fn output_phase(params: &PhysicalParams, eta: f64, t: f64, t_hold_on: f64) -> Complex64 {
    let beta = params.beta(eta);
    let l = params.half_length;
    let shifted = t + beta / (eta * l);
    let mut phase = -2.0 * beta * (eta * l * shifted).abs().ln();
    phase += 2.0 * l * params.k_propagation();
    phase -= params.depth_rate_at(params.omega_rabi) / (eta * shifted) * t_hold_on;
    phase += 2.0 * arg_gamma_imaginary(beta);
    Complex64::from_polar(1.0, phase)
}

/// `|Γ(iβ)/Γ(-iβ)|`, identically 1 on the real axis.
pub fn gamma_ratio_modulus(beta: f64) -> f64 {
    Complex64::from_polar(1.0, 2.0 * arg_gamma_imaginary(beta)).norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KSpaceValue {
    pub sigma: Complex64,
    /// `k` sits on the branch point of `|·|^{-iβ}`; the returned magnitude is the limit.
    pub singular: bool,
}

/// Spin wave `σ₁₂(k, t) = ∫ σ₁₂(z, t) e^{-ikz} dz` during write (`t ≤ 0`).
/// With `with_diffusion`, the accumulated write decay `exp(-D (k_i³ - k³) / (3η))` is applied.
///
/// The prefactor is the closed-form one. Excitation conservation fixes the large-`|β|`
/// magnitude at `|f_in| √(2π c / (N |η|))`, which is `2|η|` times this value; shapes agree.
pub fn kspace_write_solution(
    params: &PhysicalParams,
    protocol: &StorageProtocol,
    signal: &SignalSpec,
    k: f64,
    t: f64,
    with_diffusion: bool,
) -> Result<KSpaceValue> {
    let eta = protocol.eta_write;
    if eta == 0.0 {
        return Err(GemError::ZeroWriteGradient);
    }
    let beta = params.beta(eta);
    let l = params.half_length;
    let k_i = params.k_bar() - beta / l;
    let u = (k - k_i) / eta;
    let arg = u - beta / (eta * l);
    let singular = arg == 0.0;
    let branch = if singular {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::from_polar(arg.signum(), -beta * arg.abs().ln())
    };
    let carrier = Complex64::from_polar(1.0, params.k_propagation() * l);
    let scale = params.light_speed / (params.g_eff() * params.n_density);
    let mut sigma = sample_temporal(signal, u + t) * carrier * branch * scale * write_kernel(eta, beta, l);
    if with_diffusion {
        sigma *= (-params.diff_coeff / (3.0 * eta) * (k_i.powi(3) - k.powi(3))).exp();
    }
    Ok(KSpaceValue { sigma, singular })
}

/// Output field `f_out(kx, ky, t_H + t)` for read offset `t`.
pub fn output_field(
    params: &PhysicalParams,
    protocol: &StorageProtocol,
    signal: &SignalSpec,
    t: f64,
    kx: f64,
    ky: f64,
) -> Result<Complex64> {
    let d = DecayFactors::new(params, protocol)?;
    let t_on = if protocol.control_on_hold { protocol.t_hold } else { 0.0 };
    let decay = d.d_w(t) * d.d_h(t) * d.d_r(t) * d.d_perp(kx, ky, t);
    let input = sample_transverse_spectrum(signal, kx, ky) * sample_temporal(signal, -t);
    Ok(input * decay * output_phase(params, protocol.eta_write, t, t_on))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseEfficiency {
    /// `√α e^{-τ}` (write) or `√α e^{-2ατ}` (hold).
    pub value: f64,
    /// `e^{-τ}` or `e^{-2τ}`, present when `α` is within 1% of unity.
    pub simplified: Option<f64>,
    pub alpha: f64,
    pub tau: f64,
}

fn envelope_window(signal: &SignalSpec, lo: f64, hi: f64) -> (f64, f64) {
    let c = -signal.t_in;
    let w = ENVELOPE_CUTOFF * signal.t_p;
    (lo.max(c - w), hi.min(c + w))
}

/// Write efficiency from the exact Gaussian-weighted integral over the write window.
pub fn eff_write_exact(params: &PhysicalParams, protocol: &StorageProtocol, signal: &SignalSpec) -> Result<f64> {
    let g = derive_groups(params, protocol, signal)?;
    let eta = protocol.eta_write;
    let d = params.diff_coeff;
    let (lo, hi) = envelope_window(signal, -protocol.t_write, 0.0);
    let weight = |t: f64| (-2.0 * ((t + signal.t_in) / signal.t_p).powi(2)).exp();
    let decay = |t: f64| (-2.0 * d / (3.0 * eta) * (g.k_i.powi(3) - (g.k_i + eta * t).powi(3))).exp();
    let num = integrate(|t| weight(t) * decay(t), lo, hi, QUADRATURE_TOL)?;
    let den = integrate(weight, lo, hi, QUADRATURE_TOL)?;
    Ok(num / den)
}

pub fn eff_write_approx(
    params: &PhysicalParams,
    protocol: &StorageProtocol,
    signal: &SignalSpec,
) -> Result<PhaseEfficiency> {
    let g = derive_groups(params, protocol, signal)?;
    Ok(PhaseEfficiency {
        value: g.alpha_w.sqrt() * (-g.tau_w).exp(),
        simplified: ((g.alpha_w - 1.0).abs() < ALPHA_UNITY_BAND).then(|| (-g.tau_w).exp()),
        alpha: g.alpha_w,
        tau: g.tau_w,
    })
}

/// Read-out diffusion mirrors write-in.
pub fn eff_read(params: &PhysicalParams, protocol: &StorageProtocol, signal: &SignalSpec) -> Result<PhaseEfficiency> {
    eff_write_approx(params, protocol, signal)
}

pub fn eff_hold(params: &PhysicalParams, protocol: &StorageProtocol, signal: &SignalSpec) -> Result<PhaseEfficiency> {
    let g = derive_groups(params, protocol, signal)?;
    Ok(PhaseEfficiency {
        value: g.alpha_h.sqrt() * (-2.0 * g.alpha_h * g.tau_h).exp(),
        simplified: ((g.alpha_h - 1.0).abs() < ALPHA_UNITY_BAND).then(|| (-2.0 * g.tau_h).exp()),
        alpha: g.alpha_h,
        tau: g.tau_h,
    })
}

/// `(1 / (1 + τ_⊥), τ_⊥)` for the fundamental transverse mode.
pub fn eff_transverse(params: &PhysicalParams, protocol: &StorageProtocol, signal: &SignalSpec) -> Result<(f64, f64)> {
    if !signal.is_fundamental() {
        return Err(GemError::NonGaussianMode {
            m: signal.mode_m,
            n: signal.mode_n,
        });
    }
    let g = derive_groups(params, protocol, signal)?;
    Ok((1.0 / (1.0 + g.tau_perp), g.tau_perp))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalEfficiency {
    /// `√(1/(1/α_H + 2/α_W - 2)) e^{-2τ_W} e^{-2τ_H} / (1 + τ_⊥)`.
    pub full: f64,
    /// `ε_W ε_H ε_R ε_⊥`.
    pub product: f64,
    /// `1 - 4 D k_i² t_in / 3 - D t_H η² t_p² / 2 - 4 D (t_H + 2 t_in) / a²`.
    pub linearized: f64,
    /// `1 - 4 D t_p / (3 L²) - D t_H / (2 L²) - 4 D (t_H + 2 t_p) / a²`.
    pub bound: f64,
}

pub fn eff_total(params: &PhysicalParams, protocol: &StorageProtocol, signal: &SignalSpec) -> Result<TotalEfficiency> {
    let g = derive_groups(params, protocol, signal)?;
    let arg = 1.0 / (1.0 / g.alpha_h + 2.0 / g.alpha_w - 2.0);
    if !(arg > 0.0) || !arg.is_finite() {
        return Err(GemError::AlphaPrefactorSingular { argument: arg });
    }
    let perp = 1.0 / (1.0 + g.tau_perp);
    let full = arg.sqrt() * (-2.0 * g.tau_w).exp() * (-2.0 * g.tau_h).exp() * perp;
    let e_w = g.alpha_w.sqrt() * (-g.tau_w).exp();
    let e_h = g.alpha_h.sqrt() * (-2.0 * g.alpha_h * g.tau_h).exp();
    let product = e_w * e_h * e_w * perp;

    let d = params.diff_coeff;
    let (t_in, t_p, t_h) = (signal.t_in, signal.t_p, protocol.t_hold);
    let eta = protocol.eta_write;
    let a2 = signal.waist_a * signal.waist_a;
    let l2 = params.half_length * params.half_length;
    let linearized = 1.0
        - 4.0 * d * g.k_i * g.k_i * t_in / 3.0
        - d * t_h * eta * eta * t_p * t_p / 2.0
        - 4.0 * d * (t_h + 2.0 * t_in) / a2;
    let bound = 1.0 - 4.0 * d * t_p / (3.0 * l2) - d * t_h / (2.0 * l2) - 4.0 * d * (t_h + 2.0 * t_p) / a2;
    Ok(TotalEfficiency {
        full,
        product,
        linearized,
        bound,
    })
}

/// Hold time spent before the zero-spatial-frequency condition `k_H = 0` is met.
pub fn optimal_input_time(params: &PhysicalParams, eta: f64) -> f64 {
    (params.k_bar() - params.beta(eta) / params.half_length) / eta
}

/// Whether `|η t_p| > 1/L`, the bandwidth requirement behind the efficiency bound.
pub fn bound_applies(params: &PhysicalParams, eta: f64, signal: &SignalSpec) -> bool {
    (eta * signal.t_p).abs() > 1.0 / params.half_length
}

/// Per-axis transverse efficiency of an order-`m` Hermite-Gaussian factor:
/// `∫ H_m(s)² e^{-(1+τ) s²} ds / ∫ H_m(s)² e^{-s²} ds`.
pub fn hg_axis_efficiency(order: u32, tau: f64) -> f64 {
    // s = u / √(1+τ) turns both integrals into Gauss-Hermite-exact polynomials
    let n = order as usize + 2;
    let rule = gauss_quad::GaussHermite::new(n).expect("Gauss-Hermite rule");
    let scale = 1.0 / (1.0 + tau).sqrt();
    let num = rule.integrate(|u| crate::pulses::hermite(order, u * scale).powi(2)) * scale;
    let den = rule.integrate(|u| crate::pulses::hermite(order, u).powi(2));
    num / den
}

/// Transverse efficiency of the `(m, n)` mode for decay parameter `τ_⊥`.
pub fn hg_efficiency(m: u32, n: u32, tau_perp: f64) -> f64 {
    match (m, n) {
        (0, 0) => 1.0 / (1.0 + tau_perp),
        (1, 1) => (1.0 + tau_perp).powi(-3),
        _ => hg_axis_efficiency(m, tau_perp) * hg_axis_efficiency(n, tau_perp),
    }
}

/// `ε(1,1) / ε(0,0)`.
pub fn hg_ratio(tau_perp: f64) -> f64 {
    (1.0 + tau_perp).powi(-2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamWidth {
    /// Per-axis intensity variance `a²/4 + D (2 t_in + t_H)`.
    pub variance: f64,
    pub width: f64,
}

impl BeamWidth {
    /// Relative intensity `exp(-r² / (2 w²))`.
    pub fn intensity(&self, r: f64) -> f64 {
        (-r * r / (2.0 * self.variance)).exp()
    }
}

pub fn output_width(params: &PhysicalParams, protocol: &StorageProtocol, signal: &SignalSpec) -> BeamWidth {
    let a = signal.waist_a;
    let variance = a * a / 4.0 + params.diff_coeff * (2.0 * signal.t_in + protocol.t_hold);
    BeamWidth {
        variance,
        width: variance.sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCurvature {
    /// `θ(r) = coefficient · r² / w_c²`.
    pub coefficient: f64,
    pub waist_wc: f64,
    /// False when the control waist is not much larger than the signal waist.
    pub wide_control: bool,
}

impl PhaseCurvature {
    pub fn at(&self, r_perp: f64) -> f64 {
        if self.waist_wc.is_finite() {
            self.coefficient * (r_perp / self.waist_wc).powi(2)
        } else {
            0.0
        }
    }
}

/// Spin-wave phase imprinted by a Gaussian control profile, relative to a
/// homogeneous control of the same peak, at position `z` during hold.
pub fn phase_theta(
    params: &PhysicalParams,
    control: &ControlProfile,
    eta: f64,
    signal: &SignalSpec,
    z: f64,
) -> Result<PhaseCurvature> {
    let omega2 = control.omega_peak * control.omega_peak;
    let delta = params.delta_one;
    let l = params.half_length;
    let beta = params.depth_rate_at(control.omega_peak) / eta;
    let t_in = signal.t_in;
    let pole = eta * l * t_in + beta;
    if pole == 0.0 || !pole.is_finite() {
        return Err(GemError::PhaseSingular { value: pole });
    }
    let coefficient = -2.0 * omega2 * t_in / delta
        + 2.0 * beta * (eta * l * t_in / beta + 1.0).abs().ln()
        + 2.0 * beta * (1.0 - omega2 / (delta * eta * l)) * (beta / pole + z / l);
    Ok(PhaseCurvature {
        coefficient,
        waist_wc: control.waist_wc,
        wide_control: control.waist_wc >= 2.0 * signal.waist_a,
    })
}

/// Every closed-form efficiency with its dimensionless groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub groups: DerivedGroups,
    pub write: PhaseEfficiency,
    pub write_exact: f64,
    pub hold: PhaseEfficiency,
    pub read: PhaseEfficiency,
    pub transverse: f64,
    pub total: TotalEfficiency,
}

pub fn efficiency_report(
    params: &PhysicalParams,
    protocol: &StorageProtocol,
    signal: &SignalSpec,
) -> Result<EfficiencyReport> {
    let groups = derive_groups(params, protocol, signal)?;
    Ok(EfficiencyReport {
        groups,
        write: eff_write_approx(params, protocol, signal)?,
        write_exact: eff_write_exact(params, protocol, signal)?,
        hold: eff_hold(params, protocol, signal)?,
        read: eff_read(params, protocol, signal)?,
        transverse: hg_efficiency(signal.mode_m, signal.mode_n, groups.tau_perp),
        total: eff_total(params, protocol, signal)?,
    })
}
