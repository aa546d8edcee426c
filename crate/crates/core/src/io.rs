//! File formats: landscape and trajectory CSV, and SVG plots.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::landscape::{LandscapeGrid, SgsSummary};
use crate::sim::TrajectorySample;

pub const LANDSCAPE_HEADER: &str = "theta0_deg,theta1_deg,reward_mps,failed";
pub const TRAJECTORY_HEADER: &str = "t,x,z,vx,vz,hip,ankle,phase,contact_force";

/// `v` rounded to six significant digits, without exponent notation.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { "0".into() } else { format!("{v}") };
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Row-major over theta0, then theta1.
pub fn write_landscape_csv(grid: &LandscapeGrid, mut out: impl Write) -> Result<()> {
    writeln!(out, "{LANDSCAPE_HEADER}")?;
    for (i, &t0) in grid.theta0_values.iter().enumerate() {
        for (j, &t1) in grid.theta1_values.iter().enumerate() {
            writeln!(out, "{},{},{},{}", sig6(t0), sig6(t1), sig6(grid.reward[i][j]), u8::from(grid.failed[i][j]))?;
        }
    }
    Ok(())
}

pub fn read_landscape_csv(input: impl BufRead, env_label: &str) -> Result<LandscapeGrid> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty landscape file".into()))??;
    if header.trim() != LANDSCAPE_HEADER {
        return Err(Error::Format(format!("expected header `{LANDSCAPE_HEADER}`, got `{}`", header.trim())));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::Format(format!("line {}: `{line}`", n + 2));
        if fields.len() != 4 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let failed = match fields[3] {
            "0" | "false" => false,
            "1" | "true" => true,
            _ => return Err(bad()),
        };
        rows.push((num(fields[0])?, num(fields[1])?, num(fields[2])?, failed));
    }
    let mut t0: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mut t1: Vec<f64> = rows.iter().map(|r| r.1).collect();
    for axis in [&mut t0, &mut t1] {
        axis.sort_by(f64::total_cmp);
        axis.dedup();
    }
    let (n0, n1) = (t0.len(), t1.len());
    if rows.len() != n0 * n1 {
        return Err(Error::Format(format!("{} rows do not form a {n0}x{n1} grid", rows.len())));
    }
    let mut grid = LandscapeGrid::from_fn(t0, t1, env_label, |_, _| 0.0);
    let mut seen = vec![vec![false; n1]; n0];
    for (a, b, r, f) in rows {
        let i = grid.theta0_values.partition_point(|&v| v < a);
        let j = grid.theta1_values.partition_point(|&v| v < b);
        if seen[i][j] {
            return Err(Error::Format(format!("duplicate node ({a}, {b})")));
        }
        seen[i][j] = true;
        grid.reward[i][j] = r;
        grid.failed[i][j] = f;
    }
    grid.validate()?;
    Ok(grid)
}

pub fn write_trajectory_csv(samples: &[TrajectorySample], mut out: impl Write) -> Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for s in samples {
        writeln!(
            out,
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6}",
            s.t, s.x, s.z, s.vx, s.vz, s.hip, s.ankle, s.phase, s.contact_force
        )?;
    }
    Ok(())
}

/// Plot frame mapping degrees to SVG pixels.
struct Frame {
    t0: (f64, f64),
    t1: (f64, f64),
    scale: f64,
    margin: f64,
}

impl Frame {
    fn new(grid: &LandscapeGrid) -> Self {
        let b = grid.bounds();
        Self { t0: (b.theta0_min, b.theta0_max), t1: (b.theta1_min, b.theta1_max), scale: 12.0, margin: 50.0 }
    }

    fn x(&self, t0: f64) -> f64 {
        self.margin + (t0 - self.t0.0) * self.scale
    }

    fn y(&self, t1: f64) -> f64 {
        self.margin + (self.t1.1 - t1) * self.scale
    }

    fn width(&self) -> f64 {
        2.0 * self.margin + (self.t0.1 - self.t0.0) * self.scale + 90.0
    }

    fn height(&self) -> f64 {
        2.0 * self.margin + (self.t1.1 - self.t1.0) * self.scale
    }

    fn open(&self, out: &mut String, title: &str) {
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="11">"#,
            w = self.width(),
            h = self.height()
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{:.1}" y="20" font-size="14">{}</text>"#, self.margin, escape(title));
    }

    fn axes(&self, out: &mut String) {
        let (x0, x1, y0, y1) = (self.x(self.t0.0), self.x(self.t0.1), self.y(self.t1.1), self.y(self.t1.0));
        let _ = writeln!(out, r#"<rect x="{x0:.1}" y="{y0:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
        let mut t = (self.t0.0 / 5.0).ceil() * 5.0;
        while t <= self.t0.1 + 1e-9 {
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t}</text>"#, self.x(t), y1 + 15.0);
            t += 5.0;
        }
        let mut t = (self.t1.0 / 5.0).ceil() * 5.0;
        while t <= self.t1.1 + 1e-9 {
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{t}</text>"#, x0 - 5.0, self.y(t) + 4.0);
            t += 5.0;
        }
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">theta0 [deg]</text>"#, 0.5 * (x0 + x1), y1 + 32.0);
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">theta1 [deg]</text>"#,
            0.5 * (y0 + y1),
            0.5 * (y0 + y1)
        );
    }

    fn ring_path(&self, ring: &[[f64; 2]]) -> String {
        let mut d = String::new();
        for (k, p) in ring.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, self.x(p[0]), self.y(p[1]));
        }
        d.push('Z');
        d
    }

    fn triangle(&self, p: [f64; 2], fill: &str) -> String {
        let (x, y) = (self.x(p[0]), self.y(p[1]));
        format!(
            r#"<polygon points="{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}" fill="{fill}" stroke="black"/>"#,
            x,
            y - 7.0,
            x - 6.0,
            y + 4.5,
            x + 6.0,
            y + 4.5
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Piecewise-linear dark-blue to yellow ramp for `u` in [0, 1].
fn ramp(u: f64) -> String {
    const STOPS: [(f64, [f64; 3]); 4] = [
        (0.0, [68.0, 1.0, 84.0]),
        (0.33, [49.0, 104.0, 142.0]),
        (0.66, [53.0, 183.0, 121.0]),
        (1.0, [253.0, 231.0, 37.0]),
    ];
    let u = u.clamp(0.0, 1.0);
    let k = STOPS.iter().position(|s| s.0 >= u).unwrap_or(3).max(1);
    let (a, b) = (STOPS[k - 1], STOPS[k]);
    let w = (u - a.0) / (b.0 - a.0);
    let c: Vec<u8> = (0..3).map(|i| (a.1[i] + w * (b.1[i] - a.1[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Heatmap of the reward with the SGS boundary drawn heavy and failed
/// nodes marked with a cross.
pub fn landscape_svg(grid: &LandscapeGrid, sgs: &SgsSummary) -> String {
    let f = Frame::new(grid);
    let mut out = String::new();
    f.open(
        &mut out,
        &format!("{}: SGS {:.1}% of box, peak {:.3} m/s", grid.env_label, 100.0 * sgs.area_fraction, sgs.peak_reward),
    );
    let max = sgs.peak_reward.max(1e-12);
    let (n0, n1) = grid.shape();
    let edges = |v: &[f64], k: usize| -> (f64, f64) {
        let lo = if k == 0 { v[0] } else { 0.5 * (v[k - 1] + v[k]) };
        let hi = if k + 1 == v.len() { v[k] } else { 0.5 * (v[k] + v[k + 1]) };
        (lo, hi)
    };
    for i in 0..n0 {
        let (a0, a1) = edges(&grid.theta0_values, i);
        for j in 0..n1 {
            let (b0, b1) = edges(&grid.theta1_values, j);
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                f.x(a0),
                f.y(b1),
                (a1 - a0) * f.scale,
                (b1 - b0) * f.scale,
                ramp(grid.reward[i][j] / max)
            );
        }
    }
    for i in 0..n0 {
        for j in 0..n1 {
            if grid.failed[i][j] {
                let (x, y) = (f.x(grid.theta0_values[i]), f.y(grid.theta1_values[j]));
                let _ = writeln!(
                    out,
                    r##"<path d="M{:.1},{:.1} L{:.1},{:.1} M{:.1},{:.1} L{:.1},{:.1}" stroke="#d33" stroke-width="0.8"/>"##,
                    x - 2.0,
                    y - 2.0,
                    x + 2.0,
                    y + 2.0,
                    x - 2.0,
                    y + 2.0,
                    x + 2.0,
                    y - 2.0
                );
            }
        }
    }
    for ring in &sgs.boundary {
        let _ = writeln!(out, r#"<path d="{}" fill="none" stroke="white" stroke-width="3"/>"#, f.ring_path(ring));
    }
    if sgs.area_fraction > 0.0 {
        let _ = writeln!(out, "{}", f.triangle(sgs.peak, "white"));
    }
    f.axes(&mut out);
    let lx = f.x(f.t0.1) + 20.0;
    for k in 0..=10 {
        let u = 1.0 - k as f64 / 10.0;
        let _ = writeln!(out, r#"<rect x="{lx:.1}" y="{:.1}" width="14" height="{:.1}" fill="{}"/>"#, f.y(f.t1.1) + k as f64 * 20.0, 20.0, ramp(u));
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{:.3}</text>"#, lx + 18.0, f.y(f.t1.1) + 10.0, max);
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">0 m/s</text>"#, lx + 18.0, f.y(f.t1.1) + 220.0);
    out.push_str("</svg>\n");
    out
}

const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

/// SGS outlines of several environments on one set of axes, each peak
/// marked by a triangle.
pub fn funnel_svg(grids: &[LandscapeGrid], summaries: &[SgsSummary]) -> String {
    let f = Frame::new(&grids[0]);
    let mut out = String::new();
    f.open(&mut out, "salient gradient sets and peaks");
    for (k, (g, s)) in grids.iter().zip(summaries).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for ring in &s.boundary {
            let _ = writeln!(
                out,
                r#"<path d="{}" fill="{color}" fill-opacity="0.15" fill-rule="evenodd" stroke="{color}" stroke-width="2.5"/>"#,
                f.ring_path(ring)
            );
        }
        if s.area_fraction > 0.0 {
            let _ = writeln!(out, "{}", f.triangle(s.peak, color));
        }
        let ly = f.y(f.t1.1) + 10.0 + 18.0 * k as f64;
        let lx = f.x(f.t0.1) + 15.0;
        let _ = writeln!(out, r#"<rect x="{lx:.1}" y="{:.1}" width="12" height="12" fill="{color}"/>"#, ly - 10.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, lx + 16.0, escape(&g.env_label));
    }
    f.axes(&mut out);
    out.push_str("</svg>\n");
    out
}
