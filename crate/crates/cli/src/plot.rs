//! Minimal deterministic SVG line plots of two CSV columns.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;

/// Reads two numeric columns of a CSV file.
pub fn read_columns(path: &Path, x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let headers = rd.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).with_context(|| {
            format!("missing column `{name}` in {} (columns: {})", path.display(), headers.iter().collect::<Vec<_>>().join(", "))
        })
    };
    let (ix, iy) = (find(x)?, find(y)?);
    let mut pts = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize, name: &str| -> Result<f64> {
            let s = rec.get(k).unwrap_or("");
            s.trim().parse().with_context(|| format!("row {}: column `{name}` is not a number: '{s}'", i + 1))
        };
        pts.push((parse(ix, x)?, parse(iy, y)?));
    }
    if pts.is_empty() {
        bail!("{} has no data rows", path.display());
    }
    Ok(pts)
}

/// Tick step of the form {1, 2, 5}·10^k giving about five intervals.
fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let m = raw / mag;
    let n = if m < 1.5 {
        1.0
    } else if m < 3.5 {
        2.0
    } else if m < 7.5 {
        5.0
    } else {
        10.0
    };
    n * mag
}

/// Expands `[lo, hi]` to tick boundaries; returns the range and its ticks.
fn axis(mut lo: f64, mut hi: f64) -> (f64, f64, Vec<f64>) {
    if hi - lo <= 1e-12 * lo.abs().max(hi.abs()).max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        lo -= pad;
        hi += pad;
    }
    let step = nice_step(hi - lo);
    let (a, b) = ((lo / step).floor() * step, (hi / step).ceil() * step);
    let n = ((b - a) / step).round() as usize;
    let ticks = (0..=n).map(|i| a + i as f64 * step).collect();
    (a, b, ticks)
}

fn label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        return format!("{v:.1e}");
    }
    // Enough decimals to separate ticks, trailing zeros trimmed.
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the points as a polyline with markers; `reference` adds a dashed
/// horizontal line.
pub fn render(pts: &[(f64, f64)], xlabel: &str, ylabel: &str, title: &str, reference: Option<f64>) -> Result<String> {
    if pts.is_empty() {
        bail!("nothing to plot");
    }
    if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        bail!("cannot plot non-finite values");
    }
    let fold = |g: fn(&(f64, f64)) -> f64| pts.iter().map(g).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (x0, x1) = fold(|p| p.0);
    let (mut y0, mut y1) = fold(|p| p.1);
    if let Some(r) = reference {
        y0 = y0.min(r);
        y1 = y1.max(r);
    }
    let (xa, xb, xt) = axis(x0, x1);
    let (ya, yb, yt) = axis(y0, y1);
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - xa) / (xb - xa) * pw;
    let sy = |y: f64| TOP + (yb - y) / (yb - ya) * ph;

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#)?;
    writeln!(s, r##"<rect x="0" y="0" width="{W}" height="{H}" fill="#ffffff"/>"##)?;
    writeln!(s, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title))?;
    for &t in &xt {
        let x = sx(t);
        writeln!(s, r##"<line x1="{x:.2}" y1="{TOP:.2}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##, TOP + ph)?;
        writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, label(t))?;
    }
    for &t in &yt {
        let y = sy(t);
        writeln!(s, r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##, LEFT + pw)?;
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, label(t))?;
    }
    writeln!(s, r##"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#000000"/>"##)?;
    writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, esc(xlabel))?;
    writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        esc(ylabel)
    )?;
    if let Some(r) = reference {
        let y = sy(r);
        writeln!(s, r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#c0392b" stroke-dasharray="6 4"/>"##, LEFT + pw)?;
    }
    let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
    writeln!(s, r##"<polyline points="{}" fill="none" stroke="#1f4e9a" stroke-width="1.5"/>"##, path.join(" "))?;
    for &(x, y) in pts {
        writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f4e9a"/>"##, sx(x), sy(y))?;
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_make_one_segment() {
        let svg = render(&[(0.0, 1.0), (1.0, 2.0)], "x", "y", "t", None).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 2);
        assert_eq!(svg, render(&[(0.0, 1.0), (1.0, 2.0)], "x", "y", "t", None).unwrap());
    }

    #[test]
    fn axes_cover_the_data() {
        let (a, b, t) = axis(0.13, 9.7);
        assert!(a <= 0.13 && b >= 9.7);
        assert!(t.len() >= 3 && t.len() <= 12);
        let (a, b, _) = axis(1.0, 1.0);
        assert!(a < 1.0 && b > 1.0);
    }

    #[test]
    fn labels_are_short() {
        assert_eq!(label(0.5), "0.5");
        assert_eq!(label(2.0), "2");
        assert_eq!(label(1e-7), "1.0e-7");
    }
}
