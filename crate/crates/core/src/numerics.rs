//! Small numerical helpers shared by the solvers and closed forms.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{GemError, Result};

/// Trapezoidal integral of uniformly spaced samples.
pub fn trapezoid(samples: &[f64], h: f64) -> f64 {
    match samples.len() {
        0 | 1 => 0.0,
        n => h * (samples[1..n - 1].iter().sum::<f64>() + 0.5 * (samples[0] + samples[n - 1])),
    }
}

/// Trapezoidal integral of `|f|²` over uniformly spaced samples.
pub fn trapezoid_norm_sqr(samples: &[Complex64], h: f64) -> f64 {
    match samples.len() {
        0 | 1 => 0.0,
        n => {
            h * (samples[1..n - 1].iter().map(|c| c.norm_sqr()).sum::<f64>()
                + 0.5 * (samples[0].norm_sqr() + samples[n - 1].norm_sqr()))
        }
    }
}

// 7-point Gauss / 15-point Kronrod nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature to the given relative tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 2000;
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = gk15(&f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    while err > rel_tol * total.abs().max(f64::MIN_POSITIVE) && err > 1e-300 {
        if intervals.len() >= MAX_INTERVALS {
            return Err(GemError::QuadratureFailed {
                a,
                b,
                estimate: total,
                error: err,
                intervals: intervals.len(),
            });
        }
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, v0, e0) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        total += v1 + v2 - v0;
        err += e1 + e2 - e0;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
    // re-sum to shed accumulated cancellation
    Ok(intervals.iter().map(|iv| iv.2).sum())
}

/// Least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(GemError::TooFewSamples {
            needed: 2,
            got: n.min(y.len()),
        });
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(GemError::Grid("degenerate abscissae in line fit".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / nf)
        .sqrt();
    Ok(LineFit {
        slope,
        intercept,
        rms_residual: rms,
    })
}

/// Gaussian `peak * exp(-r² / (2 w²))` fitted to `(r, I)` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub peak: f64,
    /// Intensity standard deviation per transverse axis.
    pub width: f64,
    /// RMS residual relative to the fitted peak.
    pub relative_residual: f64,
}

/// Levenberg-Marquardt fit of a centred Gaussian, started from `width_guess`.
/// Returns `None` if the iteration fails to produce a finite positive width.
pub fn fit_centered_gaussian(r: &[f64], intensity: &[f64], width_guess: f64) -> Option<GaussianFit> {
    if r.len() < 3 || r.len() != intensity.len() || !(width_guess > 0.0) {
        return None;
    }
    let peak0 = intensity.iter().cloned().fold(f64::MIN, f64::max);
    if !(peak0 > 0.0) {
        return None;
    }
    // parameters: p = peak / peak0, u = 1 / (2 w²) scaled by width_guess²
    let scale = 1.0 / (2.0 * width_guess * width_guess);
    let mut p = 1.0;
    let mut u = 1.0;
    let residuals = |p: f64, u: f64| -> f64 {
        r.iter()
            .zip(intensity)
            .map(|(&ri, &ii)| {
                let m = p * (-u * scale * ri * ri).exp();
                (m - ii / peak0).powi(2)
            })
            .sum()
    };
    let mut cost = residuals(p, u);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&ri, &ii) in r.iter().zip(intensity) {
            let e = (-u * scale * ri * ri).exp();
            let res = p * e - ii / peak0;
            let dp = e;
            let du = -p * scale * ri * ri * e;
            a11 += dp * dp;
            a12 += dp * du;
            a22 += du * du;
            g1 += dp * res;
            g2 += du * res;
        }
        let mut improved = false;
        for _ in 0..20 {
            let b11 = a11 * (1.0 + lambda);
            let b22 = a22 * (1.0 + lambda);
            let det = b11 * b22 - a12 * a12;
            if det == 0.0 {
                lambda *= 10.0;
                continue;
            }
            let dp = -(b22 * g1 - a12 * g2) / det;
            let du = -(b11 * g2 - a12 * g1) / det;
            let (np, nu) = (p + dp, u + du);
            if nu > 0.0 {
                let c = residuals(np, nu);
                if c < cost {
                    let done = (cost - c) <= 1e-15 * cost.max(1e-300);
                    p = np;
                    u = nu;
                    cost = c;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = !done;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let width = 1.0 / (2.0 * u * scale).sqrt();
    if !width.is_finite() || !(width > 0.0) {
        return None;
    }
    Some(GaussianFit {
        peak: p * peak0,
        width,
        relative_residual: (cost / r.len() as f64).sqrt() / p.abs().max(1e-300),
    })
}

/// `ln Γ(i y)` on the continuous branch through `y → 0⁺`, from the Stirling
/// series after upward recurrence.
fn ln_gamma_imaginary(y: f64) -> Complex64 {
    let mut z = Complex64::new(0.0, y);
    let mut shift = Complex64::new(0.0, 0.0);
    while z.re < 12.0 {
        shift += z.ln();
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let series =
        inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0))));
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln() + series - shift
}

/// Imaginary part of `ln Γ(i y)`; `Γ(iy)/Γ(-iy) = exp(2 i · this)`.
pub fn arg_gamma_imaginary(y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    ln_gamma_imaginary(y).im
}

/// Real part of `ln Γ(i y)`; equals `½ ln(π / (y sinh πy))`.
pub fn ln_abs_gamma_imaginary(y: f64) -> f64 {
    let ya = y.abs();
    let pi_y = PI * ya;
    // ln sinh x = x + ln((1 - e^{-2x}) / 2)
    let ln_sinh = pi_y + ((1.0 - (-2.0 * pi_y).exp()) / 2.0).ln();
    0.5 * (PI.ln() - ya.ln() - ln_sinh)
}

/// Unwrap a phase sequence so consecutive differences lie in `(-π, π]`.
pub fn unwrap_phase(phase: &mut [f64]) {
    for i in 1..phase.len() {
        let mut d = phase[i] - phase[i - 1];
        while d > PI {
            d -= 2.0 * PI;
        }
        while d <= -PI {
            d += 2.0 * PI;
        }
        phase[i] = phase[i - 1] + d;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadrature_known_integrals() {
        let v = integrate(|x| (-x * x).exp(), -8.0, 8.0, 1e-12).unwrap();
        assert_relative_eq!(v, PI.sqrt(), max_relative = 1e-12);
        let v = integrate(|x| x.sin(), 0.0, PI, 1e-12).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-12);
        let v = integrate(|x| 1.0 / x.sqrt(), 1e-12, 1.0, 1e-8).unwrap();
        assert_relative_eq!(v, 2.0 - 2e-6, max_relative = 1e-7);
    }

    #[test]
    fn quadrature_reports_failure() {
        let r = integrate(|x| (1.0 / x).sin() / x, 1e-9, 1.0, 1e-14);
        assert!(matches!(r, Err(GemError::QuadratureFailed { .. })));
    }

    #[test]
    fn trapezoid_rules() {
        let xs: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        assert_relative_eq!(trapezoid(&ys, 0.01), 2.5, max_relative = 1e-12);
        let cs: Vec<Complex64> = ys.iter().map(|&y| Complex64::new(0.0, y)).collect();
        let exact: f64 = 3.0 + 3.0 + 1.0; // ∫(3x+1)² dx on [0,1]
        assert!((trapezoid_norm_sqr(&cs, 0.01) - exact).abs() < 1e-3);
    }

    #[test]
    fn line_fit_exact() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 0.004 * v + 0.3).collect();
        let f = fit_line(&x, &y).unwrap();
        assert_relative_eq!(f.slope, 0.004, max_relative = 1e-12);
        assert_relative_eq!(f.intercept, 0.3, max_relative = 1e-12);
        assert!(fit_line(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn gaussian_fit_recovers_width() {
        let w = 7.3e-4;
        let r: Vec<f64> = (0..60).map(|i| (i as f64 + 0.5) * 5e-5).collect();
        let i: Vec<f64> = r.iter().map(|x| 4.2 * (-x * x / (2.0 * w * w)).exp()).collect();
        let f = fit_centered_gaussian(&r, &i, 1.3e-3).unwrap();
        assert_relative_eq!(f.width, w, max_relative = 1e-8);
        assert_relative_eq!(f.peak, 4.2, max_relative = 1e-8);
        assert!(f.relative_residual < 1e-8);
    }

    #[test]
    fn gamma_on_imaginary_axis() {
        // |Γ(iy)|² = π / (y sinh πy) checks the series through its real part
        for y in [0.1, 0.7, 3.77, 10.0, 20.0] {
            assert_relative_eq!(ln_gamma_imaginary(y).re, ln_abs_gamma_imaginary(y), epsilon = 1e-12);
        }
        // Γ(iy) = Γ(1+iy)/(iy); small-y: arg Γ(iy) ≈ -π/2 - γ_E y
        let y = 1e-4;
        let expected = -PI / 2.0 - 0.577_215_664_901_532_9 * y;
        assert!((arg_gamma_imaginary(y) - expected).abs() < 1e-8);
        // reflection of sign
        assert_relative_eq!(
            arg_gamma_imaginary(-2.5),
            -arg_gamma_imaginary(2.5),
            max_relative = 1e-14
        );
    }

    #[test]
    fn unwrap() {
        let mut p: Vec<f64> = (0..50).map(|i| (0.4 * i as f64).rem_euclid(2.0 * PI) - PI).collect();
        unwrap_phase(&mut p);
        for w in p.windows(2) {
            assert_relative_eq!(w[1] - w[0], 0.4, max_relative = 1e-12);
        }
    }
}
