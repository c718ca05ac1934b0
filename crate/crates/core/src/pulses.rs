//! Input signal envelopes and the control-field transverse profile.
//!
//! The signal is a Gaussian in time, `A exp(-(t + t_in)^2 / t_p^2)`, times a
//! Hermite-Gaussian transverse mode built on `exp(-(x^2 + y^2) / a^2)`, so `a`
//! is the 1/e amplitude radius of the fundamental mode.
//!
//! Normalisation: the (0,0) mode has unit peak; every other (m,n) mode is
//! scaled to the same L2 norm as the (0,0) mode, `pi a^2 / 2`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{GemError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub amplitude: f64,
    /// Temporal half-width; `2 t_p` is the pulse duration.
    pub t_p: f64,
    /// The input peaks at `t = -t_in`.
    pub t_in: f64,
    pub mode_m: u32,
    pub mode_n: u32,
    /// Transverse 1/e amplitude radius `a`.
    pub waist_a: f64,
}

impl SignalSpec {
    pub fn gaussian(t_p: f64, t_in: f64, waist_a: f64) -> Self {
        SignalSpec {
            amplitude: 1.0,
            t_p,
            t_in,
            mode_m: 0,
            mode_n: 0,
            waist_a,
        }
    }

    pub fn with_mode(mut self, m: u32, n: u32) -> Self {
        self.mode_m = m;
        self.mode_n = n;
        self
    }

    pub fn is_fundamental(&self) -> bool {
        self.mode_m == 0 && self.mode_n == 0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_p > 0.0) {
            return Err(GemError::InvalidParameter {
                name: "t_p",
                reason: "must be positive".into(),
            });
        }
        if !(self.waist_a > 0.0) {
            return Err(GemError::InvalidParameter {
                name: "waist_a",
                reason: "must be positive".into(),
            });
        }
        if !self.amplitude.is_finite() || !self.t_in.is_finite() {
            return Err(GemError::InvalidParameter {
                name: "amplitude/t_in",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }

    /// True when `t_in > t_p`, i.e. the whole pulse enters the medium before `t = 0`.
    pub fn fully_enters(&self) -> bool {
        self.t_in > self.t_p
    }

    /// Default write window `t_in + 4 t_p`.
    pub fn default_write_window(&self) -> f64 {
        self.t_in + 4.0 * self.t_p
    }

    /// `∫|f(t)|² dt` over the whole line.
    pub fn temporal_energy(&self) -> f64 {
        self.amplitude * self.amplitude * self.t_p * (PI / 2.0).sqrt()
    }
}

pub fn sample_temporal(spec: &SignalSpec, t: f64) -> Complex64 {
    let u = (t + spec.t_in) / spec.t_p;
    Complex64::new(spec.amplitude * (-u * u).exp(), 0.0)
}

/// Physicists' Hermite polynomial by the three-term recurrence.
pub fn hermite(order: u32, x: f64) -> f64 {
    let mut h_prev = 1.0;
    if order == 0 {
        return h_prev;
    }
    let mut h = 2.0 * x;
    for k in 1..order {
        let next = 2.0 * x * h - 2.0 * k as f64 * h_prev;
        h_prev = h;
        h = next;
    }
    h
}

/// `1 / sqrt(2^m m!)`, equalising the norm of order-m modes with order 0.
fn hermite_norm(order: u32) -> f64 {
    let mut v = 1.0;
    for k in 1..=order {
        v *= 2.0 * k as f64;
    }
    1.0 / v.sqrt()
}

/// One transverse factor `H_m(√2 x / a) exp(-x²/a²)` with the module normalisation.
pub fn hg_factor(order: u32, x: f64, a: f64) -> f64 {
    hermite_norm(order) * hermite(order, std::f64::consts::SQRT_2 * x / a) * (-(x * x) / (a * a)).exp()
}

pub fn sample_transverse(spec: &SignalSpec, x: f64, y: f64) -> Complex64 {
    let a = spec.waist_a;
    Complex64::new(hg_factor(spec.mode_m, x, a) * hg_factor(spec.mode_n, y, a), 0.0)
}

/// Continuous Fourier transform `∫ u(x) e^{-ikx} dx` of one transverse factor:
/// `a √π (-i)^m H_m(k a / √2) exp(-k² a² / 4)`, with the same normalisation.
pub fn hg_factor_spectrum(order: u32, k: f64, a: f64) -> Complex64 {
    let mag = hermite_norm(order)
        * a
        * PI.sqrt()
        * hermite(order, k * a / std::f64::consts::SQRT_2)
        * (-(k * k) * a * a / 4.0).exp();
    let phase = match order % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    };
    phase * mag
}

pub fn sample_transverse_spectrum(spec: &SignalSpec, kx: f64, ky: f64) -> Complex64 {
    let a = spec.waist_a;
    hg_factor_spectrum(spec.mode_m, kx, a) * hg_factor_spectrum(spec.mode_n, ky, a)
}

/// Gaussian (or homogeneous) control-field profile `Ω exp(-r²/w_c²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlProfile {
    pub omega_peak: f64,
    /// Non-finite means homogeneous.
    pub waist_wc: f64,
}

impl ControlProfile {
    pub fn homogeneous(omega_peak: f64) -> Self {
        ControlProfile {
            omega_peak,
            waist_wc: f64::INFINITY,
        }
    }

    pub fn gaussian(omega_peak: f64, waist_wc: f64) -> Self {
        ControlProfile { omega_peak, waist_wc }
    }

    pub fn is_homogeneous(&self) -> bool {
        !self.waist_wc.is_finite()
    }

    pub fn validate(&self) -> Result<()> {
        if self.waist_wc.is_finite() && self.waist_wc <= 0.0 {
            return Err(GemError::InvalidParameter {
                name: "waist_wc",
                reason: "must be positive or infinite".into(),
            });
        }
        Ok(())
    }
}

pub fn control_rabi(profile: &ControlProfile, r_perp: f64) -> f64 {
    if profile.is_homogeneous() {
        profile.omega_peak
    } else {
        let u = r_perp / profile.waist_wc;
        profile.omega_peak * (-u * u).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec() -> SignalSpec {
        SignalSpec::gaussian(1e-6, 5e-6, 1.45e-3)
    }

    #[test]
    fn temporal_peak_and_width() {
        let s = SignalSpec {
            amplitude: 2.5,
            ..spec()
        };
        assert_relative_eq!(sample_temporal(&s, -s.t_in).re, 2.5);
        let e1 = 2.5 * (-1.0f64).exp();
        assert_relative_eq!(sample_temporal(&s, -s.t_in + s.t_p).re, e1, max_relative = 1e-14);
        assert_relative_eq!(sample_temporal(&s, -s.t_in - s.t_p).re, e1, max_relative = 1e-14);
    }

    #[test]
    fn temporal_energy_matches_quadrature() {
        let s = SignalSpec {
            amplitude: 1.7,
            ..spec()
        };
        let n = 20_000;
        let (lo, hi) = (-s.t_in - 10.0 * s.t_p, -s.t_in + 10.0 * s.t_p);
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * sample_temporal(&s, lo + i as f64 * h).norm_sqr();
        }
        assert_relative_eq!(acc * h, s.temporal_energy(), max_relative = 1e-10);
    }

    #[test]
    fn fundamental_mode_peak_and_second_moment() {
        let s = spec();
        assert_relative_eq!(sample_transverse(&s, 0.0, 0.0).re, 1.0);
        // <x²> of |u|² should be a²/4
        let a = s.waist_a;
        let n = 4000;
        let lim = 8.0 * a;
        let h = 2.0 * lim / n as f64;
        let (mut m0, mut m2) = (0.0, 0.0);
        for i in 0..=n {
            let x = -lim + i as f64 * h;
            let w = hg_factor(0, x, a).powi(2);
            m0 += w;
            m2 += w * x * x;
        }
        assert_relative_eq!(m2 / m0, a * a / 4.0, max_relative = 1e-10);
    }

    #[test]
    fn mode_11_has_node_lines() {
        let s = spec().with_mode(1, 1);
        for y in [-2e-3, 0.0, 7e-4, 3e-3] {
            assert_eq!(sample_transverse(&s, 0.0, y).re, 0.0);
        }
        // proportional to x y exp(-(x²+y²)/a²)
        let a = s.waist_a;
        let ratio = |x: f64, y: f64| sample_transverse(&s, x, y).re / (x * y * (-(x * x + y * y) / (a * a)).exp());
        assert_relative_eq!(ratio(3e-4, 1e-3), ratio(-1.2e-3, 2e-4), max_relative = 1e-12);
    }

    #[test]
    fn modes_are_orthogonal_with_equal_norms() {
        let a = 1.0e-3;
        let n = 3000;
        let lim = 10.0 * a;
        let h = 2.0 * lim / n as f64;
        let inner = |m: u32, p: u32| -> f64 {
            (0..=n)
                .map(|i| {
                    let x = -lim + i as f64 * h;
                    hg_factor(m, x, a) * hg_factor(p, x, a)
                })
                .sum::<f64>()
                * h
        };
        let norm0 = inner(0, 0);
        for m in 0..5 {
            assert_relative_eq!(inner(m, m), norm0, max_relative = 1e-9);
            for p in (m + 1)..5 {
                assert!(inner(m, p).abs() < 1e-6 * norm0);
            }
        }
    }

    #[test]
    fn spectrum_matches_numerical_fourier_transform() {
        let a = 1.3e-3;
        let n = 4000;
        let lim = 10.0 * a;
        let h = 2.0 * lim / n as f64;
        for order in 0..4 {
            for k in [0.0, 600.0, -1500.0] {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..=n {
                    let x = -lim + i as f64 * h;
                    acc += Complex64::from_polar(hg_factor(order, x, a), -k * x);
                }
                acc *= h;
                let exact = hg_factor_spectrum(order, k, a);
                assert!((acc - exact).norm() < 1e-9 * a, "order {order} k {k}");
            }
        }
    }

    #[test]
    fn control_profile() {
        let g = ControlProfile::gaussian(3.0, 2e-3);
        assert_relative_eq!(control_rabi(&g, 0.0), 3.0);
        assert_relative_eq!(control_rabi(&g, 2e-3), 3.0 * (-1.0f64).exp(), max_relative = 1e-14);
        let h = ControlProfile::homogeneous(3.0);
        assert_eq!(control_rabi(&h, 10.0 * 1.45e-3), 3.0);
        assert!(ControlProfile::gaussian(1.0, -1.0).validate().is_err());
    }
}
