//! Static SVG figures drawn from the summary and KDE tables.

use super::run::{read_kde_csv, read_summary_csv, KdeRow, SummaryRow};
use crate::error::{Error, Result};
use crate::targets::Parametrization;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const FIG_SUMMARY: &str = "fig1_summary.svg";
pub const FIG_KDE: &str = "fig2_kde.svg";
pub const FIG_DIVERGENCES: &str = "fig3_divergences.svg";

fn color(p: Parametrization) -> &'static str {
    match p {
        Parametrization::Naive => "#1b9e77",
        Parametrization::Centered => "#d95f02",
        Parametrization::NonCentered => "#7570b3",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Self { body: String::new(), width, height }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="1"/>"#
        );
    }

    fn circle(&mut self, cx: f64, cy: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2.5" fill="{fill}" fill-opacity="0.7"/>"#);
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" font-family="sans-serif" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    fn vtext(&mut self, x: f64, y: f64, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="12" font-family="sans-serif" text-anchor="middle" transform="rotate(-90 {x:.2} {y:.2})">{}</text>"#,
            escape(s)
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str) {
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1" stroke-opacity="0.6"/>"#,
            coords.join(" ")
        );
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= target as f64).unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// A rectangular plotting area with data ranges.
struct Frame {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        self.x + (v - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    fn py(&self, v: f64) -> f64 {
        self.y + self.h - (v - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }

    fn axes(&self, svg: &mut Svg, title: &str, xlabel: &str, ylabel: &str, xticks: &[(f64, String)]) {
        svg.line(self.x, self.y + self.h, self.x + self.w, self.y + self.h, "black");
        svg.line(self.x, self.y, self.x, self.y + self.h, "black");
        for (v, label) in xticks {
            let x = self.px(*v);
            svg.line(x, self.y + self.h, x, self.y + self.h + 4.0, "black");
            svg.text(x, self.y + self.h + 16.0, 10.0, "middle", label);
        }
        for v in nice_ticks(self.yr.0, self.yr.1, 5) {
            let y = self.py(v);
            svg.line(self.x - 4.0, y, self.x, y, "black");
            svg.line(self.x, y, self.x + self.w, y, "#e0e0e0");
            svg.text(self.x - 6.0, y + 3.5, 10.0, "end", &fmt_tick(v));
        }
        svg.text(self.x + self.w / 2.0, self.y - 8.0, 13.0, "middle", title);
        svg.text(self.x + self.w / 2.0, self.y + self.h + 34.0, 12.0, "middle", xlabel);
        svg.vtext(self.x - 46.0, self.y + self.h / 2.0, ylabel);
    }
}

fn legend(svg: &mut Svg, x: f64, y: f64, params: &[Parametrization]) {
    for (i, p) in params.iter().enumerate() {
        let yy = y + 16.0 * i as f64;
        svg.circle(x, yy, color(*p));
        svg.text(x + 8.0, yy + 4.0, 11.0, "start", p.name());
    }
}

fn present_params(rows: &[SummaryRow]) -> Vec<Parametrization> {
    Parametrization::ALL.into_iter().filter(|p| rows.iter().any(|r| r.parametrization == *p)).collect()
}

fn q_levels(rows: &[SummaryRow]) -> Vec<f64> {
    let mut qs: Vec<f64> = rows.iter().map(|r| r.q).collect();
    qs.sort_by(f64::total_cmp);
    qs.dedup();
    qs
}

/// Deterministic horizontal jitter for chain `c`.
fn jitter(c: usize) -> f64 {
    ((c as f64 * 0.618_033_988_75).fract() - 0.5) * 0.12
}

fn strip_panel(svg: &mut Svg, frame: Frame, rows: &[SummaryRow], metric: fn(&SummaryRow) -> f64, title: &str, ylabel: &str) {
    let qs = q_levels(rows);
    let params = present_params(rows);
    let ticks: Vec<(f64, String)> = qs.iter().enumerate().map(|(i, q)| (i as f64, fmt_tick(*q))).collect();
    frame.axes(svg, title, "q", ylabel, &ticks);
    let width = 0.6 / params.len() as f64;
    for r in rows {
        let v = metric(r);
        if !v.is_finite() {
            continue;
        }
        let qi = qs.iter().position(|q| *q == r.q).unwrap_or(0) as f64;
        let pi = params.iter().position(|p| *p == r.parametrization).unwrap_or(0) as f64;
        let x = qi + (pi - (params.len() as f64 - 1.0) / 2.0) * width + jitter(r.chain) * width * 2.0;
        svg.circle(frame.px(x), frame.py(v), color(r.parametrization));
    }
}

fn strip_frame(rows: &[SummaryRow], metric: fn(&SummaryRow) -> f64, x: f64, y: f64, w: f64, h: f64) -> Frame {
    let nq = q_levels(rows).len() as f64;
    let mut yr = padded_range(rows.iter().map(metric));
    if metric(&rows[0]) >= 0.0 && yr.0 < 0.0 && rows.iter().map(metric).all(|v| !(v < 0.0)) {
        yr.0 = 0.0;
    }
    Frame { x, y, w, h, xr: (-0.5, nq - 0.5), yr }
}

fn figure_summary(rows: &[SummaryRow]) -> String {
    let (pw, ph) = (320.0, 260.0);
    let mut svg = Svg::new(3.0 * (pw + 80.0) + 120.0, ph + 100.0);
    let panels: [(fn(&SummaryRow) -> f64, &str, &str); 3] = [
        (|r| r.mean_log_summary, "Mean log summary per chain", "mean g(z) + penalty"),
        (|r| r.min_ess, "Minimum ESS per chain", "min ESS"),
        (|r| r.wall_time_s, "Wall time per chain", "seconds"),
    ];
    for (i, (metric, title, ylabel)) in panels.into_iter().enumerate() {
        let x = 70.0 + i as f64 * (pw + 80.0);
        let frame = strip_frame(rows, metric, x, 40.0, pw, ph);
        strip_panel(&mut svg, frame, rows, metric, title, ylabel);
    }
    legend(&mut svg, 3.0 * (pw + 80.0) + 20.0, 60.0, &present_params(rows));
    svg.finish()
}

fn figure_divergences(rows: &[SummaryRow]) -> String {
    let (pw, ph) = (480.0, 280.0);
    let mut svg = Svg::new(pw + 220.0, ph + 100.0);
    let metric: fn(&SummaryRow) -> f64 = |r| if r.status.has_draws() { r.divergences as f64 } else { f64::NAN };
    let frame = strip_frame(rows, metric, 70.0, 40.0, pw, ph);
    strip_panel(&mut svg, frame, rows, metric, "Post-warmup divergent transitions per chain", "divergences");
    legend(&mut svg, pw + 100.0, 60.0, &present_params(rows));
    svg.finish()
}

fn figure_kde(kde: &[KdeRow], plot_q: f64, params: &[Parametrization]) -> String {
    let (pw, ph) = (300.0, 240.0);
    let ncol = params.len().max(1) as f64;
    let mut svg = Svg::new(ncol * (pw + 80.0) + 40.0, ph + 100.0);
    let nearest = kde.iter().map(|r| r.q).min_by(|a, b| (a - plot_q).abs().total_cmp(&(b - plot_q).abs()));
    let Some(q) = nearest else {
        svg.text(40.0, 40.0, 13.0, "start", "no KDE curves available");
        return svg.finish();
    };
    let sel: Vec<&KdeRow> = kde.iter().filter(|r| r.q == q).collect();
    let xr = padded_range(sel.iter().map(|r| r.grid_point));
    let ymax = sel.iter().map(|r| r.density).fold(0.0, f64::max);
    let yr = (0.0, if ymax > 0.0 { ymax * 1.05 } else { 1.0 });
    for (i, p) in params.iter().enumerate() {
        let frame = Frame { x: 70.0 + i as f64 * (pw + 80.0), y: 40.0, w: pw, h: ph, xr, yr };
        let ticks: Vec<(f64, String)> = nice_ticks(xr.0, xr.1, 5).into_iter().map(|v| (v, fmt_tick(v))).collect();
        frame.axes(&mut svg, &format!("{} (q = {})", p.name(), fmt_tick(q)), "g(z) + penalty", "density", &ticks);
        let mut chains: Vec<usize> = sel.iter().filter(|r| r.parametrization == *p).map(|r| r.chain).collect();
        chains.sort_unstable();
        chains.dedup();
        for c in chains {
            let pts: Vec<(f64, f64)> = sel
                .iter()
                .filter(|r| r.parametrization == *p && r.chain == c)
                .map(|r| (frame.px(r.grid_point), frame.py(r.density)))
                .collect();
            svg.polyline(&pts, color(*p));
        }
    }
    svg.finish()
}

/// Writes the summary, KDE and divergence figures into `out_dir`, returning
/// their paths. KDE curves are drawn at the exponent closest to `plot_q`.
pub fn plot_summary(summary: &Path, kde: Option<&Path>, out_dir: &Path, plot_q: f64) -> Result<Vec<PathBuf>> {
    let rows = read_summary_csv(summary)?;
    if rows.is_empty() {
        return Err(Error::Data(format!("{} has no rows", summary.display())));
    }
    let kde_rows = match kde {
        Some(p) => read_kde_csv(p)?,
        None => Vec::new(),
    };
    fs::create_dir_all(out_dir)?;
    let params = present_params(&rows);
    let files = [
        (FIG_SUMMARY, figure_summary(&rows)),
        (FIG_KDE, figure_kde(&kde_rows, plot_q, &params)),
        (FIG_DIVERGENCES, figure_divergences(&rows)),
    ];
    let mut paths = Vec::new();
    for (name, content) in files {
        let path = out_dir.join(name);
        fs::write(&path, content)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_range() {
        let t = nice_ticks(0.0, 1.0, 5);
        assert_eq!(t.first(), Some(&0.0));
        assert!((t.last().unwrap() - 1.0).abs() < 1e-12);
        assert!(nice_ticks(-3.2, 17.9, 5).len() <= 6);
        assert_eq!(fmt_tick(0.30000000000000004), "0.3");
    }

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b & c"), "a&lt;b &amp; c");
    }
}
