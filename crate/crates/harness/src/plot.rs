//! Minimal self-contained SVG plots drawn from dataset rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::output::{Dataset, PlotSpec, Provenance, FORMAT_VERSION, GENERATOR};

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
/// Largest lattice drawn per heatmap axis; denser data is subsampled.
const MAX_CELLS: usize = 160;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub fn render(ds: &Dataset, spec: &PlotSpec, prov: &Provenance) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        "<!-- gem-svg {FORMAT_VERSION}; {GENERATOR}; experiment {}; dataset {}; config-sha256 {}; fidelity {} -->",
        prov.experiment, ds.name, prov.config_sha256, prov.fidelity
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    match spec {
        PlotSpec::Lines {
            title,
            x,
            lines: l,
            points,
            x_label,
            y_label,
        } => lines(&mut s, ds, title, x, l, points, x_label, y_label),
        PlotSpec::Heatmap { title, x, y, value } => heatmap(&mut s, ds, title, x, y, value),
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo <= f64::EPSILON * hi.abs().max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

/// Round tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if (1e-3..1e4).contains(&v.abs()) {
        let t = format!("{v:.4}");
        t.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }
    fn py(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn axes(&self, s: &mut String, title: &str, x_label: &str, y_label: &str) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(
            s,
            r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y1 - y0
        );
        for t in ticks(self.x.0, self.x.1) {
            let p = self.px(t);
            let _ = writeln!(
                s,
                r#"<line x1="{p:.2}" y1="{y1}" x2="{p:.2}" y2="{}" stroke="black"/>"#,
                y1 + 5.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{p:.2}" y="{}" text-anchor="middle">{}</text>"#,
                y1 + 18.0,
                label(t)
            );
        }
        for t in ticks(self.y.0, self.y.1) {
            let p = self.py(t);
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{p:.2}" x2="{x0}" y2="{p:.2}" stroke="black"/>"#,
                x0 - 5.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 8.0,
                p + 4.0,
                label(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            0.5 * (x0 + x1),
            escape(title)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            0.5 * (x0 + x1),
            H - 18.0,
            escape(x_label)
        );
        let yc = 0.5 * (y0 + y1);
        let _ = writeln!(
            s,
            r#"<text x="18" y="{yc}" text-anchor="middle" transform="rotate(-90 18 {yc})">{}</text>"#,
            escape(y_label)
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn lines(
    s: &mut String,
    ds: &Dataset,
    title: &str,
    x: &str,
    lines: &[String],
    points: &[String],
    x_label: &str,
    y_label: &str,
) {
    let xs = ds.column(x).unwrap_or_default();
    let series: Vec<(&String, Vec<f64>, bool)> = lines
        .iter()
        .map(|c| (c, false))
        .chain(points.iter().map(|c| (c, true)))
        .filter_map(|(c, m)| ds.column(c).map(|v| (c, v, m)))
        .collect();
    let frame = Frame {
        x: range(xs.iter().copied()),
        y: range(series.iter().flat_map(|(_, v, _)| v.iter().copied())),
    };
    frame.axes(s, title, x_label, y_label);
    for (i, (name, v, markers)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = xs
            .iter()
            .zip(v)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| (frame.px(*a), frame.py(*b)))
            .collect();
        if *markers {
            for (px, py) in &pts {
                let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="{colour}"/>"#);
            }
        } else {
            let path: Vec<String> = pts.iter().map(|(px, py)| format!("{px:.2},{py:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
                path.join(" ")
            );
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{}" width="14" height="4" fill="{colour}"/>"#,
            ly - 6.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{ly}">{}</text>"#, lx + 20.0, escape(name));
    }
}

/// Linear blend through a dark-blue to yellow ramp.
fn colour(f: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let f = f.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (f.floor() as usize).min(STOPS.len() - 2);
    let u = f - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |p: f64, q: f64| (p + u * (q - p)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn subsample(keys: Vec<u64>) -> Vec<u64> {
    let stride = keys.len().div_ceil(MAX_CELLS).max(1);
    keys.into_iter().step_by(stride).collect()
}

fn heatmap(s: &mut String, ds: &Dataset, title: &str, x: &str, y: &str, value: &str) {
    let (Some(xs), Some(ys), Some(vs)) = (ds.column(x), ds.column(y), ds.column(value)) else {
        return;
    };
    // exact float bits as lattice keys keep the layout independent of row order
    let mut cells: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let key = |v: f64| v.to_bits() ^ if v.is_sign_negative() { u64::MAX } else { 1 << 63 };
    for ((a, b), v) in xs.iter().zip(&ys).zip(&vs) {
        cells.insert((key(*a), key(*b)), *v);
    }
    let mut ux: Vec<u64> = cells.keys().map(|k| k.0).collect();
    let mut uy: Vec<u64> = cells.keys().map(|k| k.1).collect();
    ux.sort_unstable();
    ux.dedup();
    uy.sort_unstable();
    uy.dedup();
    let (ux, uy) = (subsample(ux), subsample(uy));
    let unkey = |k: u64| f64::from_bits(if k >> 63 == 1 { k ^ (1 << 63) } else { k ^ u64::MAX });
    let xv: Vec<f64> = ux.iter().map(|k| unkey(*k)).collect();
    let yv: Vec<f64> = uy.iter().map(|k| unkey(*k)).collect();
    let frame = Frame {
        x: range(xv.iter().copied()),
        y: range(yv.iter().copied()),
    };
    let (vmin, vmax) = range(vs.iter().copied());
    let cw = (W - LEFT - RIGHT) / xv.len().max(1) as f64;
    let ch = (H - TOP - BOTTOM) / yv.len().max(1) as f64;
    for (i, kx) in ux.iter().enumerate() {
        for (j, ky) in uy.iter().enumerate() {
            if let Some(v) = cells.get(&(*kx, *ky)) {
                let px = LEFT + i as f64 * cw;
                let py = H - BOTTOM - (j + 1) as f64 * ch;
                let f = (v - vmin) / (vmax - vmin);
                let _ = writeln!(
                    s,
                    r#"<rect x="{px:.2}" y="{py:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    cw + 0.3,
                    ch + 0.3,
                    colour(f)
                );
            }
        }
    }
    frame.axes(s, title, x, y);
    let lx = W - RIGHT + 20.0;
    for i in 0..=10 {
        let f = i as f64 / 10.0;
        let py = H - BOTTOM - f * (H - TOP - BOTTOM);
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{:.2}" width="16" height="{:.2}" fill="{}"/>"#,
            py - 0.1 * (H - TOP - BOTTOM),
            0.1 * (H - TOP - BOTTOM),
            colour(f)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">{}</text>"#,
        lx + 22.0,
        TOP + 10.0,
        label(vmax)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">{}</text>"#,
        lx + 22.0,
        H - BOTTOM,
        label(vmin)
    );
    let _ = writeln!(s, r#"<text x="{lx}" y="{}">{}</text>"#, TOP - 6.0, escape(value));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance {
            experiment: "x".into(),
            config_sha256: "0".repeat(64),
            fidelity: "coarse".into(),
            overrides: vec![],
        }
    }

    #[test]
    fn ticks_cover_range() {
        let t = ticks(0.0, 1.0);
        assert_eq!(t.first(), Some(&0.0));
        assert!((t.last().unwrap() - 1.0).abs() < 1e-12);
        assert!(ticks(-3e-6, 7e-6).len() >= 4);
    }

    #[test]
    fn line_plot_has_one_polyline_per_series() {
        let mut d = Dataset::new("d", &["x", "a", "b"]);
        for i in 0..10 {
            let x = i as f64;
            d.push(vec![x, x * x, -x]);
        }
        let d = d.plot_xy("t", "x", &["a", "b"], &["a"], "y");
        let svg = render(&d, &d.plots[0], &prov());
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 10);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn heatmap_is_row_order_independent() {
        let mut d = Dataset::new("h", &["t", "k", "m"]);
        for i in 0..4 {
            for j in 0..3 {
                d.push(vec![i as f64, -1.0 + j as f64, (i * j) as f64]);
            }
        }
        let spec = PlotSpec::Heatmap {
            title: "h".into(),
            x: "t".into(),
            y: "k".into(),
            value: "m".into(),
        };
        let a = render(&d, &spec, &prov());
        d.rows.reverse();
        assert_eq!(a, render(&d, &spec, &prov()));
        assert_eq!(a.matches("<rect").count(), 1 + 12 + 1 + 11);
    }
}
