//! `name = value` scenario files with unit suffixes.
//!
//! Frequencies written with a Hz-family suffix are multiplied by 2π when
//! `two_pi_hz = true` (the default), so `control_rabi = 20 MHz` means
//! `2π · 20e6 rad/s`. Values without a suffix are taken as SI (rad/s for
//! frequencies). Later sources override earlier ones: file, then `GEMSIM_*`
//! environment variables, then explicit `key=value` overrides.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{GemError, Result};
use crate::model::{PhysicalParams, StorageProtocol};
use crate::pulses::{ControlProfile, SignalSpec};

/// Prefix for environment overrides: `GEMSIM_HOLD_TIME=4us` sets `hold_time`.
pub const ENV_PREFIX: &str = "GEMSIM_";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dim {
    Frequency,
    FrequencyPerLength,
    Time,
    Length,
    Density,
    Diffusivity,
    Wavenumber,
    Speed,
    Number,
    Flag,
    Word,
}

struct Key {
    name: &'static str,
    dims: &'static [Dim],
    help: &'static str,
}

const KEYS: &[Key] = &[
    Key {
        name: "two_pi_hz",
        dims: &[Dim::Flag],
        help: "multiply Hz-suffixed frequencies by 2π",
    },
    Key {
        name: "g",
        dims: &[Dim::Frequency],
        help: "single-atom coupling",
    },
    Key {
        name: "control_rabi",
        dims: &[Dim::Frequency],
        help: "peak control Rabi frequency",
    },
    Key {
        name: "detuning",
        dims: &[Dim::Frequency],
        help: "one-photon detuning",
    },
    Key {
        name: "density",
        dims: &[Dim::Density],
        help: "atom number density",
    },
    Key {
        name: "medium_length",
        dims: &[Dim::Length],
        help: "full medium length 2L",
    },
    Key {
        name: "carrier_split",
        dims: &[Dim::Frequency, Dim::Wavenumber],
        help: "ω0 - ωc, or k0 - kc directly",
    },
    Key {
        name: "diffusion",
        dims: &[Dim::Diffusivity],
        help: "diffusion coefficient",
    },
    Key {
        name: "light_speed",
        dims: &[Dim::Speed],
        help: "speed of light",
    },
    Key {
        name: "stark_absorbed",
        dims: &[Dim::Flag],
        help: "measure light shift relative to peak control",
    },
    Key {
        name: "pulse_width",
        dims: &[Dim::Time],
        help: "Gaussian envelope width t_p",
    },
    Key {
        name: "input_time",
        dims: &[Dim::Time],
        help: "envelope centre at -t_in",
    },
    Key {
        name: "amplitude",
        dims: &[Dim::Number],
        help: "envelope peak amplitude",
    },
    Key {
        name: "waist",
        dims: &[Dim::Length],
        help: "transverse waist a",
    },
    Key {
        name: "mode_m",
        dims: &[Dim::Number],
        help: "Hermite-Gauss index along x",
    },
    Key {
        name: "mode_n",
        dims: &[Dim::Number],
        help: "Hermite-Gauss index along y",
    },
    Key {
        name: "protocol",
        dims: &[Dim::Word],
        help: "standard | flip_hold",
    },
    Key {
        name: "gradient",
        dims: &[Dim::FrequencyPerLength],
        help: "write gradient η",
    },
    Key {
        name: "hold_time",
        dims: &[Dim::Time],
        help: "hold duration t_H",
    },
    Key {
        name: "write_window",
        dims: &[Dim::Time],
        help: "write duration; default t_in + 4 t_p",
    },
    Key {
        name: "control_on_hold",
        dims: &[Dim::Flag],
        help: "keep control on during hold",
    },
    Key {
        name: "flip_fraction",
        dims: &[Dim::Number],
        help: "hold fraction at which the gradient flips",
    },
    Key {
        name: "control_waist",
        dims: &[Dim::Length],
        help: "control waist w_c; inf for homogeneous",
    },
];

/// `(suffix, SI factor, dimension, Hz-family)`.
const UNITS: &[(&str, f64, Dim, bool)] = &[
    ("rad/s", 1.0, Dim::Frequency, false),
    ("Hz", 1.0, Dim::Frequency, true),
    ("kHz", 1e3, Dim::Frequency, true),
    ("MHz", 1e6, Dim::Frequency, true),
    ("GHz", 1e9, Dim::Frequency, true),
    ("THz", 1e12, Dim::Frequency, true),
    ("rad/s/m", 1.0, Dim::FrequencyPerLength, false),
    ("Hz/m", 1.0, Dim::FrequencyPerLength, true),
    ("kHz/m", 1e3, Dim::FrequencyPerLength, true),
    ("MHz/m", 1e6, Dim::FrequencyPerLength, true),
    ("s", 1.0, Dim::Time, false),
    ("ms", 1e-3, Dim::Time, false),
    ("us", 1e-6, Dim::Time, false),
    ("µs", 1e-6, Dim::Time, false),
    ("ns", 1e-9, Dim::Time, false),
    ("m", 1.0, Dim::Length, false),
    ("cm", 1e-2, Dim::Length, false),
    ("mm", 1e-3, Dim::Length, false),
    ("um", 1e-6, Dim::Length, false),
    ("m^-3", 1.0, Dim::Density, false),
    ("cm^-3", 1e6, Dim::Density, false),
    ("m^2/s", 1.0, Dim::Diffusivity, false),
    ("cm^2/s", 1e-4, Dim::Diffusivity, false),
    ("rad/m", 1.0, Dim::Wavenumber, false),
    ("m/s", 1.0, Dim::Speed, false),
];

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    raw: String,
    line: usize,
}

/// Everything a storage run needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub params: PhysicalParams,
    pub protocol: StorageProtocol,
    pub signal: SignalSpec,
    pub control: ControlProfile,
}

/// Raw key/value entries in override order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
}

fn config_err(line: usize, reason: impl Into<String>) -> GemError {
    GemError::Config {
        line,
        reason: reason.into(),
    }
}

/// Splits `"4 us"` or `"4us"` into number and unit: the longest prefix that
/// parses as a float is the number.
fn split_quantity(raw: &str) -> (&str, &str) {
    if let Some(i) = raw.find(char::is_whitespace) {
        return (&raw[..i], raw[i..].trim());
    }
    (1..=raw.len())
        .rev()
        .filter(|&i| raw.is_char_boundary(i))
        .find(|&i| raw[..i].parse::<f64>().is_ok())
        .map_or((raw, ""), |i| (&raw[..i], &raw[i..]))
}

/// Whether `name` is a recognised configuration key.
pub fn is_key(name: &str) -> bool {
    lookup(name).is_some()
}

fn lookup(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| config_err(i + 1, format!("expected `name = value`, got `{content}`")))?;
            cfg.insert(k.trim(), v.trim(), i + 1)?;
        }
        Ok(cfg)
    }

    fn insert(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        if lookup(key).is_none() {
            return Err(config_err(line, format!("unknown key `{key}`")));
        }
        self.entries.insert(
            key.to_string(),
            Entry {
                raw: value.to_string(),
                line,
            },
        );
        Ok(())
    }

    /// Apply one `key=value` override (line 0 marks command-line origin).
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| config_err(0, format!("override `{assignment}` is not key=value")))?;
        self.insert(k.trim(), v.trim(), 0)
    }

    /// Apply `GEMSIM_*` variables from `vars`; unrelated variables are ignored.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        let mut pairs: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|s| (s.to_ascii_lowercase(), v)))
            .collect();
        pairs.sort();
        for (k, v) in pairs {
            self.insert(&k, &v, 0)?;
        }
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Sorted `key = value` lines, the input to the configuration hash.
    pub fn canonical_text(&self) -> String {
        self.entries.iter().map(|(k, e)| format!("{k} = {}\n", e.raw)).collect()
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.entries.get(key) {
            None => Ok(default),
            Some(e) => match e.raw.as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                other => Err(config_err(e.line, format!("`{key}` expects true/false, got `{other}`"))),
            },
        }
    }

    /// Value converted to SI and the dimension it was given in.
    fn quantity(&self, key: &str) -> Result<Option<(f64, Dim)>> {
        let Some(e) = self.entries.get(key) else {
            return Ok(None);
        };
        let spec = lookup(key).expect("keys are validated on insert");
        let two_pi = self.flag("two_pi_hz", true)?;
        let raw = e.raw.trim();
        if matches!(raw, "inf" | "infinity") && spec.dims.contains(&Dim::Length) {
            return Ok(Some((f64::INFINITY, Dim::Length)));
        }
        let (num, unit) = split_quantity(raw);
        let value: f64 = num
            .parse()
            .map_err(|_| config_err(e.line, format!("`{key}`: cannot parse number `{num}`")))?;
        if unit.is_empty() {
            return Ok(Some((value, spec.dims[0])));
        }
        let &(_, factor, dim, hz) = UNITS
            .iter()
            .find(|u| u.0 == unit)
            .ok_or_else(|| config_err(e.line, format!("`{key}`: unknown unit `{unit}`")))?;
        if !spec.dims.contains(&dim) {
            return Err(config_err(
                e.line,
                format!("`{key}`: unit `{unit}` has the wrong dimension"),
            ));
        }
        let scale = if hz && two_pi { 2.0 * PI } else { 1.0 };
        Ok(Some((value * factor * scale, dim)))
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        Ok(self.quantity(key)?.map(|q| q.0))
    }

    fn required(&self, key: &str) -> Result<f64> {
        self.number(key)?
            .ok_or_else(|| config_err(0, format!("missing required key `{key}`")))
    }

    fn index(&self, key: &str) -> Result<u32> {
        match self.number(key)? {
            None => Ok(0),
            Some(v) if v >= 0.0 && v.fract() == 0.0 && v <= 64.0 => Ok(v as u32),
            Some(v) => Err(config_err(
                self.entries[key].line,
                format!("`{key}` must be a small integer, got {v}"),
            )),
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let light_speed = self.number("light_speed")?.unwrap_or(3.0e8);
        let carrier = match self.quantity("carrier_split")? {
            None => 0.0,
            Some((k, Dim::Wavenumber)) => k,
            Some((omega, _)) => omega / light_speed,
        };
        let params = PhysicalParams {
            g: self.required("g")?,
            omega_rabi: self.required("control_rabi")?,
            delta_one: self.required("detuning")?,
            n_density: self.required("density")?,
            half_length: self.required("medium_length")? / 2.0,
            k0_minus_kc: carrier,
            diff_coeff: self.number("diffusion")?.unwrap_or(0.0),
            light_speed,
            stark_absorbed: self.flag("stark_absorbed", true)?,
        };
        let mut signal = SignalSpec::gaussian(
            self.required("pulse_width")?,
            self.required("input_time")?,
            self.required("waist")?,
        )
        .with_mode(self.index("mode_m")?, self.index("mode_n")?);
        if let Some(a) = self.number("amplitude")? {
            signal.amplitude = a;
        }
        let eta = self.required("gradient")?;
        let t_hold = self.number("hold_time")?.unwrap_or(0.0);
        let t_write = self
            .number("write_window")?
            .unwrap_or_else(|| signal.default_write_window());
        let mut protocol = match self.entries.get("protocol").map(|e| (e.raw.as_str(), e.line)) {
            None | Some(("standard", _)) => StorageProtocol::standard(t_write, t_hold, eta),
            Some(("flip_hold", _)) => StorageProtocol::flip_in_hold(t_write, t_hold, eta),
            Some((other, line)) => {
                return Err(config_err(
                    line,
                    format!("protocol must be standard or flip_hold, got `{other}`"),
                ))
            }
        };
        protocol.control_on_hold = self.flag("control_on_hold", protocol.control_on_hold)?;
        if let Some(f) = self.number("flip_fraction")? {
            protocol.flip_time = f * t_hold;
        }
        let control = match self.number("control_waist")? {
            Some(w) if w.is_finite() => ControlProfile::gaussian(params.omega_rabi, w),
            _ => ControlProfile::homogeneous(params.omega_rabi),
        };
        params.validate()?;
        protocol.validate()?;
        signal.validate()?;
        control.validate()?;
        Ok(Scenario {
            params,
            protocol,
            signal,
            control,
        })
    }
}

/// One line per recognised key, for `--help` output.
pub fn key_reference() -> String {
    KEYS.iter().map(|k| format!("  {:<16} {}\n", k.name, k.help)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const FIXTURE: &str = include_str!("../../../configs/rb87.conf");

    #[test]
    fn fixture_reproduces_reference_parameters() {
        let s = Config::parse(FIXTURE).unwrap().scenario().unwrap();
        let r = PhysicalParams::rb87_reference();
        assert_relative_eq!(s.params.g, r.g, max_relative = 1e-14);
        assert_relative_eq!(s.params.omega_rabi, r.omega_rabi, max_relative = 1e-14);
        assert_relative_eq!(s.params.delta_one, r.delta_one, max_relative = 1e-14);
        assert_relative_eq!(s.params.n_density, r.n_density, max_relative = 1e-14);
        assert_relative_eq!(s.params.half_length, r.half_length, max_relative = 1e-14);
        assert_relative_eq!(s.params.k0_minus_kc, r.k0_minus_kc, max_relative = 1e-14);
        assert_relative_eq!(s.protocol.eta_write, -2.0 * PI * 10e6, max_relative = 1e-14);
        assert_relative_eq!(s.signal.t_p, 1e-6, max_relative = 1e-14);
        assert!(s.control.is_homogeneous());
        assert!((s.params.beta(s.protocol.eta_write).abs() - 3.8).abs() < 0.1);
    }

    #[test]
    fn overrides_apply_in_order() {
        let mut c = Config::parse(FIXTURE).unwrap();
        c.apply_env(vec![
            ("GEMSIM_HOLD_TIME".to_string(), "4 us".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ])
        .unwrap();
        assert_relative_eq!(c.scenario().unwrap().protocol.t_hold, 4e-6, max_relative = 1e-14);
        c.set("hold_time = 6 us").unwrap();
        assert_relative_eq!(c.scenario().unwrap().protocol.t_hold, 6e-6, max_relative = 1e-14);
        c.set("hold_time = 7us").unwrap();
        assert_relative_eq!(c.scenario().unwrap().protocol.t_hold, 7e-6, max_relative = 1e-14);
        c.set("diffusion = 1e-3").unwrap();
        assert_relative_eq!(c.scenario().unwrap().params.diff_coeff, 1e-3, max_relative = 1e-14);
    }

    #[test]
    fn hz_flag_controls_two_pi() {
        let mut c = Config::parse(FIXTURE).unwrap();
        c.set("two_pi_hz = false").unwrap();
        assert_relative_eq!(c.scenario().unwrap().params.omega_rabi, 20e6, max_relative = 1e-14);
        c.set("control_rabi = 5 rad/s").unwrap();
        c.set("two_pi_hz = true").unwrap();
        assert_eq!(c.scenario().unwrap().params.omega_rabi, 5.0);
    }

    #[test]
    fn carrier_accepts_wavenumber() {
        let mut c = Config::parse(FIXTURE).unwrap();
        c.set("carrier_split = 2500 rad/m").unwrap();
        assert_eq!(c.scenario().unwrap().params.k0_minus_kc, 2500.0);
    }

    #[test]
    fn flip_protocol_and_gaussian_control() {
        let mut c = Config::parse(FIXTURE).unwrap();
        c.set("protocol = flip_hold").unwrap();
        c.set("hold_time = 16 us").unwrap();
        c.set("control_waist = 3 mm").unwrap();
        let s = c.scenario().unwrap();
        assert_eq!(s.protocol.flip_time, 8e-6);
        assert_eq!(s.protocol.eta_hold, s.protocol.eta_write);
        assert_relative_eq!(s.control.waist_wc, 3e-3, max_relative = 1e-14);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = Config::parse("g = 4.5 Hz\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, GemError::Config { line: 2, .. }));
        let err = Config::parse("# c\ng = 4.5 mm\n").unwrap().scenario().unwrap_err();
        assert!(matches!(err, GemError::Config { line: 2, .. }), "{err:?}");
        let err = Config::parse("g 4.5\n").unwrap_err();
        assert!(matches!(err, GemError::Config { line: 1, .. }));
    }

    #[test]
    fn canonical_text_is_order_independent() {
        let a = Config::parse("g = 1\ndetuning = 2\n").unwrap();
        let b = Config::parse("detuning = 2 # note\n\ng = 1\n").unwrap();
        assert_eq!(a.canonical_text(), b.canonical_text());
    }
}
