//! Physical parameters of the medium and fields, the storage protocol, and
//! the dimensionless groups derived from them.
//!
//! Everything is SI with angular frequencies in rad/s. The carrier
//! wavevector mismatch is stored as the single difference `k0 - kc` since only
//! the difference enters the dynamics.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{GemError, Result};
use crate::pulses::SignalSpec;

/// Largest `|Ω_c / Δ|` accepted before the adiabatic elimination is considered invalid.
pub const MAX_RABI_DETUNING_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Atom-field coupling `g`, rad/s.
    pub g: f64,
    /// Peak control Rabi frequency `Ω_c`, rad/s.
    pub omega_rabi: f64,
    /// One-photon detuning `Δ`, rad/s.
    pub delta_one: f64,
    /// Atomic number density, m^-3.
    pub n_density: f64,
    /// Half length `L`; the medium spans `[-L, L]`.
    pub half_length: f64,
    /// `k0 - kc`, rad/m.
    pub k0_minus_kc: f64,
    /// Diffusion coefficient, m^2/s.
    pub diff_coeff: f64,
    pub light_speed: f64,
    /// The uniform Stark shift `Ω_c²/Δ` at peak control intensity is part of
    /// the quoted two-photon detuning; only deviations from it act on the spin wave.
    pub stark_absorbed: bool,
}

impl PhysicalParams {
    /// Rb-87 vapour-cell parameters used throughout the estimates.
    pub fn rb87_reference() -> Self {
        let c = 3.0e8;
        PhysicalParams {
            g: 2.0 * PI * 4.5,
            omega_rabi: 2.0 * PI * 20.0e6,
            delta_one: -2.0 * PI * 1.5e9,
            n_density: 0.5e18,
            half_length: 0.1,
            k0_minus_kc: 2.0 * PI * 6.8e9 / c,
            diff_coeff: 0.004,
            light_speed: c,
            stark_absorbed: true,
        }
    }

    pub fn with_diffusion(mut self, d: f64) -> Self {
        self.diff_coeff = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_density", self.n_density),
            ("half_length", self.half_length),
            ("light_speed", self.light_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(GemError::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        if !(self.diff_coeff >= 0.0) || !self.diff_coeff.is_finite() {
            return Err(GemError::InvalidParameter {
                name: "diff_coeff",
                reason: format!("must be non-negative, got {}", self.diff_coeff),
            });
        }
        if self.delta_one == 0.0 || !self.delta_one.is_finite() {
            return Err(GemError::InvalidParameter {
                name: "delta_one",
                reason: "must be non-zero and finite".into(),
            });
        }
        for (name, v) in [
            ("g", self.g),
            ("omega_rabi", self.omega_rabi),
            ("k0_minus_kc", self.k0_minus_kc),
        ] {
            if !v.is_finite() {
                return Err(GemError::InvalidParameter {
                    name,
                    reason: "must be finite".into(),
                });
            }
        }
        let ratio = (self.omega_rabi / self.delta_one).abs();
        if ratio > MAX_RABI_DETUNING_RATIO {
            return Err(GemError::NotFarDetuned { ratio });
        }
        Ok(())
    }

    /// `g_eff = g Ω / Δ` for a given local Rabi frequency.
    pub fn g_eff_at(&self, omega: f64) -> f64 {
        self.g * omega / self.delta_one
    }

    pub fn g_eff(&self) -> f64 {
        self.g_eff_at(self.omega_rabi)
    }

    /// Field source coefficient `g N Ω / (c Δ)`.
    pub fn field_coupling_at(&self, omega: f64) -> f64 {
        self.g_eff_at(omega) * self.n_density / self.light_speed
    }

    /// Propagation wavenumber `g² N / (c Δ)` of the signal in the medium.
    pub fn k_propagation(&self) -> f64 {
        self.g * self.g * self.n_density / (self.light_speed * self.delta_one)
    }

    /// `k̄ = g² N / (c Δ) + k0 - kc`.
    pub fn k_bar(&self) -> f64 {
        self.k_propagation() + self.k0_minus_kc
    }

    /// `g_eff² N / c`, the gradient-independent part of the optical depth.
    pub fn depth_rate_at(&self, omega: f64) -> f64 {
        let ge = self.g_eff_at(omega);
        ge * ge * self.n_density / self.light_speed
    }

    /// Signed optical depth `β = g_eff² N / (η c)` at peak control.
    pub fn beta(&self, eta: f64) -> f64 {
        self.depth_rate_at(self.omega_rabi) / eta
    }

    /// Residual two-photon light shift (rad/s, entering as `-i δ σ`) for a local Rabi
    /// frequency; zero at peak control when the uniform shift is absorbed.
    pub fn stark_detuning(&self, omega_local: f64) -> f64 {
        let reference = if self.stark_absorbed {
            self.omega_rabi * self.omega_rabi
        } else {
            0.0
        };
        -(omega_local * omega_local - reference) / self.delta_one
    }
}

/// Piecewise gradient and control schedule over write, hold and read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageProtocol {
    /// Write duration `t0`; the write phase is `[-t0, 0]` and read lasts as long.
    pub t_write: f64,
    pub t_hold: f64,
    /// Write gradient, rad s^-1 m^-1. The read gradient is its negative.
    pub eta_write: f64,
    /// Gradient at the start of hold; zero for the standard protocol.
    pub eta_hold: f64,
    pub control_on_hold: bool,
    /// Time within hold at which a non-zero hold gradient flips sign.
    pub flip_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Write,
    Hold,
    Read,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Write => "write",
            Phase::Hold => "hold",
            Phase::Read => "read",
        }
    }
}

impl StorageProtocol {
    /// Gradient off and control off during hold, flipped gradient for read.
    pub fn standard(t_write: f64, t_hold: f64, eta_write: f64) -> Self {
        StorageProtocol {
            t_write,
            t_hold,
            eta_write,
            eta_hold: 0.0,
            control_on_hold: false,
            flip_time: 0.0,
        }
    }

    /// Gradient left on through hold and flipped at `0.5 t_H`, control off during hold.
    pub fn flip_in_hold(t_write: f64, t_hold: f64, eta_write: f64) -> Self {
        StorageProtocol {
            t_write,
            t_hold,
            eta_write,
            eta_hold: eta_write,
            control_on_hold: false,
            flip_time: 0.5 * t_hold,
        }
    }

    pub fn with_control_on_hold(mut self, on: bool) -> Self {
        self.control_on_hold = on;
        self
    }

    pub fn eta_read(&self) -> f64 {
        -self.eta_write
    }

    pub fn t_read(&self) -> f64 {
        self.t_write
    }

    /// Gradient at `t_rel` seconds into hold.
    pub fn eta_hold_at(&self, t_rel: f64) -> f64 {
        if t_rel < self.flip_time {
            self.eta_hold
        } else {
            -self.eta_hold
        }
    }

    pub fn is_standard(&self) -> bool {
        self.eta_hold == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_write > 0.0) {
            return Err(GemError::InvalidParameter {
                name: "t_write",
                reason: "must be positive".into(),
            });
        }
        if !(self.t_hold >= 0.0) {
            return Err(GemError::InvalidParameter {
                name: "t_hold",
                reason: "must be non-negative".into(),
            });
        }
        if self.eta_write == 0.0 {
            return Err(GemError::ZeroWriteGradient);
        }
        if self.eta_hold != 0.0 && !(self.flip_time >= 0.0 && self.flip_time <= self.t_hold) {
            return Err(GemError::InvalidParameter {
                name: "flip_time",
                reason: "must lie within the hold window".into(),
            });
        }
        Ok(())
    }
}

/// Dimensionless groups and composite constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedGroups {
    pub g_eff: f64,
    pub beta: f64,
    /// Initial spin-wave spatial frequency `k̄ - β/L`.
    pub k_i: f64,
    pub k_bar: f64,
    /// `k_H = k_i - η t_in`.
    pub k_hold: f64,
    pub tau_w: f64,
    pub tau_h: f64,
    pub tau_perp: f64,
    pub alpha_w: f64,
    pub alpha_h: f64,
}

pub fn derive_groups(
    params: &PhysicalParams,
    protocol: &StorageProtocol,
    signal: &SignalSpec,
) -> Result<DerivedGroups> {
    let eta = protocol.eta_write;
    if eta == 0.0 {
        return Err(GemError::ZeroWriteGradient);
    }
    let d = params.diff_coeff;
    let t_in = signal.t_in;
    let t_p = signal.t_p;
    let t_h = protocol.t_hold;

    let beta = params.beta(eta);
    let k_bar = params.k_bar();
    let k_i = k_bar - beta / params.half_length;
    let k_hold = k_i - eta * t_in;

    let s = k_i / eta;
    let tau_w = 2.0 * d * eta * eta / 3.0 * (s.powi(3) - (s - t_in).powi(3));
    let tau_h = d * t_h * k_hold * k_hold;
    let tau_perp = 4.0 * d * (t_h + 2.0 * t_in) / (signal.waist_a * signal.waist_a);

    let denom_w = 1.0 - d * eta * eta * t_p * t_p * (s - t_in);
    if !(denom_w > 0.0) {
        return Err(GemError::WriteCorrectionSingular { denominator: denom_w });
    }
    let alpha_w = 1.0 / denom_w;
    let inv_tp2 = 1.0 / (t_p * t_p);
    let alpha_h = inv_tp2 / (inv_tp2 + d * t_h * eta * eta);

    Ok(DerivedGroups {
        g_eff: params.g_eff(),
        beta,
        k_i,
        k_bar,
        k_hold,
        tau_w,
        tau_h,
        tau_perp,
        alpha_w,
        alpha_h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference() -> (PhysicalParams, StorageProtocol, SignalSpec) {
        let signal = SignalSpec::gaussian(1e-6, 5e-6, 1.45e-3);
        let protocol = StorageProtocol::standard(signal.default_write_window(), 0.0, -2.0 * PI * 10e6);
        (PhysicalParams::rb87_reference(), protocol, signal)
    }

    #[test]
    fn reference_optical_depth() {
        let (p, proto, s) = reference();
        let g = derive_groups(&p, &proto, &s).unwrap();
        assert!((g.beta.abs() - 3.8).abs() < 0.1, "beta = {}", g.beta);
        assert!(g.beta < 0.0);
    }

    #[test]
    fn zero_diffusion_groups() {
        let (p, proto, s) = reference();
        let g = derive_groups(&p.with_diffusion(0.0), &StorageProtocol { t_hold: 7e-6, ..proto }, &s).unwrap();
        assert_eq!(g.tau_w, 0.0);
        assert_eq!(g.tau_h, 0.0);
        assert_eq!(g.tau_perp, 0.0);
        assert_eq!(g.alpha_w, 1.0);
        assert_eq!(g.alpha_h, 1.0);
    }

    #[test]
    fn tau_perp_direct_evaluation() {
        let (p, proto, s) = reference();
        let g = derive_groups(&p, &proto, &s).unwrap();
        let expected = 4.0 * 0.004 * 1e-5 / (1.45e-3f64).powi(2);
        assert_relative_eq!(g.tau_perp, expected, max_relative = 1e-14);
        assert!((g.tau_perp - 0.0761).abs() < 1e-4);
        assert!((1.0 / (1.0 + g.tau_perp) - 0.93).abs() < 0.005);
    }

    #[test]
    fn k_bar_minus_k_i_is_beta_over_l() {
        let (p, proto, s) = reference();
        let g = derive_groups(&p, &proto, &s).unwrap();
        assert_relative_eq!(g.k_bar - g.k_i, g.beta / p.half_length, max_relative = 1e-12);
    }

    #[test]
    fn errors() {
        let (p, proto, s) = reference();
        let zero = StorageProtocol {
            eta_write: 0.0,
            ..proto
        };
        assert_eq!(derive_groups(&p, &zero, &s), Err(GemError::ZeroWriteGradient));
        // a huge D with k_H/η > 0 drives the write correction denominator negative
        let big = p.with_diffusion(1e6);
        let proto_pos = StorageProtocol {
            eta_write: 2.0 * PI * 10e6,
            ..proto
        };
        let s_late = SignalSpec { t_in: -5e-6, ..s };
        assert!(matches!(
            derive_groups(&big, &proto_pos, &s_late),
            Err(GemError::WriteCorrectionSingular { .. })
        ));
    }

    #[test]
    fn validation() {
        let p = PhysicalParams::rb87_reference();
        assert!(p.validate().is_ok());
        let near = PhysicalParams {
            omega_rabi: 0.2 * p.delta_one.abs(),
            ..p
        };
        assert!(matches!(near.validate(), Err(GemError::NotFarDetuned { .. })));
        assert!(PhysicalParams { diff_coeff: -1.0, ..p }.validate().is_err());
        assert!(PhysicalParams { n_density: 0.0, ..p }.validate().is_err());
        assert!(PhysicalParams { half_length: -0.1, ..p }.validate().is_err());
        assert!(PhysicalParams { light_speed: 0.0, ..p }.validate().is_err());
    }

    #[test]
    fn k_hold_vanishes_at_optimal_input_time() {
        let (p, proto, s) = reference();
        // k_H = 0 needs k_i / η > 0: raise k0 - kc past β/L
        let p = PhysicalParams {
            k0_minus_kc: 600.0,
            ..p
        };
        let g0 = derive_groups(&p, &proto, &s).unwrap();
        let proto2 = StorageProtocol {
            eta_write: 2.0 * PI * 10e6,
            ..proto
        };
        let g1 = derive_groups(&p, &proto2, &s).unwrap();
        let t_in = g1.k_i / proto2.eta_write;
        assert!(t_in > 0.0);
        let g2 = derive_groups(&p, &proto2, &SignalSpec { t_in, ..s }).unwrap();
        assert!(g2.k_hold.abs() < 1e-9 * g0.k_i.abs().max(1.0));
    }

    proptest! {
        #[test]
        fn taus_scale_linearly_in_diffusion(lambda in 0.01f64..50.0, d in 1e-4f64..0.05, t_h in 0.0f64..3e-5) {
            let (p, proto, s) = reference();
            let proto = StorageProtocol { t_hold: t_h, ..proto };
            let a = derive_groups(&p.with_diffusion(d), &proto, &s).unwrap();
            let b = derive_groups(&p.with_diffusion(lambda * d), &proto, &s).unwrap();
            prop_assert!((b.tau_w - lambda * a.tau_w).abs() <= 1e-12 * b.tau_w.abs().max(1e-300));
            prop_assert!((b.tau_h - lambda * a.tau_h).abs() <= 1e-12 * b.tau_h.abs().max(1e-300));
            prop_assert!((b.tau_perp - lambda * a.tau_perp).abs() <= 1e-12 * b.tau_perp.abs().max(1e-300));
        }

        #[test]
        fn beta_flips_with_gradient_and_tau_w_is_symmetric(eta_mhz in 1.0f64..30.0, t_in in 2e-6f64..2e-5) {
            let (p, proto, s) = reference();
            let s = SignalSpec { t_in, ..s };
            let eta = 2.0 * PI * eta_mhz * 1e6;
            let pos = derive_groups(&p, &StorageProtocol { eta_write: eta, ..proto }, &s).unwrap();
            let neg = derive_groups(&p, &StorageProtocol { eta_write: -eta, ..proto }, &s).unwrap();
            prop_assert!((pos.beta + neg.beta).abs() < 1e-12 * pos.beta.abs());
            // τ_W(η, k_i) == τ_W(-η, -k_i): evaluate the formula with a mirrored k_i
            let tau = |eta: f64, k_i: f64| {
                let s = k_i / eta;
                2.0 * p.diff_coeff * eta * eta / 3.0 * (s.powi(3) - (s - t_in).powi(3))
            };
            let a = tau(eta, pos.k_i);
            let b = tau(-eta, -pos.k_i);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
            prop_assert!((tau(eta, pos.k_i) - pos.tau_w).abs() <= 1e-12 * pos.tau_w.abs().max(1e-300));
        }
    }
}
