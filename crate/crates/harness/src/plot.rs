//! Static SVG line charts of one metric across sweep points or stages.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::methods::Method;
use crate::output::ResultRow;
use crate::HarnessError;

pub const METRICS: [&str; 4] = ["fdr", "mfdr", "mdr", "power"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XAxis {
    /// Sweep value, from rows that carry one.
    Sweep,
    /// Stage number, from per-stage rows.
    Stage,
}

impl FromStr for XAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sweep" => Ok(XAxis::Sweep),
            "stage" => Ok(XAxis::Stage),
            _ => Err(HarnessError::Config(format!("x axis must be sweep or stage, got {s:?}"))),
        }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [&str; 7] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"];

fn x_of(row: &ResultRow, axis: XAxis) -> Option<f64> {
    match axis {
        XAxis::Sweep => row.sweep_value,
        XAxis::Stage => row.stage_number().map(|t| t as f64),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Picks tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect()
}

/// Renders `metric` for every method present in `rows`, one polyline each.
/// Rows that are invalid, lack the requested x coordinate, or have a
/// non-finite metric are skipped. `alpha` places the reference line on
/// fdr and mfdr plots.
pub fn emit_svg(rows: &[ResultRow], metric: &str, x_axis: XAxis, alpha: f64) -> Result<String, HarnessError> {
    if !METRICS.contains(&metric) {
        return Err(HarnessError::Config(format!("unknown metric {metric:?}")));
    }
    let mut series: BTreeMap<Method, Vec<(f64, f64)>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.is_valid()) {
        let (Some(x), Some(y)) = (x_of(row, x_axis), row.metric(metric)) else {
            continue;
        };
        if x.is_finite() && y.is_finite() {
            series.entry(row.method).or_default().push((x, y));
        }
    }
    if series.is_empty() {
        return Err(HarnessError::Input(format!("no rows to plot for {metric}")));
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    let reference = matches!(metric, "fdr" | "mfdr").then_some(alpha);
    let all = series.values().flatten();
    let (mut x_lo, mut x_hi) = all.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let mut y_hi = all.fold(reference.unwrap_or(0.0), |a, p| a.max(p.1));
    if x_hi - x_lo < 1e-12 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    y_hi = if y_hi <= 0.0 { 0.1 } else { (y_hi * 1.1).min(1.0).max(y_hi) };
    let y_lo = 0.0;

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| TOP + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let axis_name = match x_axis {
        XAxis::Sweep => rows.iter().find(|r| r.sweep_value.is_some()).map_or("sweep", |r| r.sweep_param.as_str()),
        XAxis::Stage => "stage",
    };
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="18" font-family="sans-serif" font-size="14" text-anchor="middle">{} vs {}</text>"#,
        LEFT + plot_w / 2.0,
        metric,
        escape(axis_name)
    );
    // axes
    let _ = writeln!(
        svg,
        r#"<path d="M{LEFT:.1},{TOP:.1} V{:.1} H{:.1}" fill="none" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    for x in ticks(x_lo, x_hi, 5) {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{:.3}</text>"#,
            sx(x),
            TOP + plot_h + 16.0,
            x
        );
    }
    for y in ticks(y_lo, y_hi, 5) {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{:.3}</text>"#,
            LEFT - 6.0,
            sy(y) + 4.0,
            y
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(axis_name)
    );

    if let Some(a) = reference {
        let _ = writeln!(
            svg,
            r#"<line class="reference" x1="{LEFT:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="gray" stroke-dasharray="6,4"/>"#,
            LEFT + plot_w,
            y = sy(a)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="gray">alpha = {a}</text>"#,
            LEFT + plot_w + 4.0,
            sy(a) + 4.0
        );
    }

    for (k, (method, pts)) in series.iter().enumerate() {
        let color = PALETTE[method.rank() % PALETTE.len()];
        let points: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline data-method="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            method.label(),
            points.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = TOP + 20.0 + 20.0 * k as f64;
        let lx = WIDTH - RIGHT + 50.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            svg,
            r#"<text class="legend" x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
            lx + 24.0,
            ly + 4.0,
            method.label()
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::output::STATUS_OK;

    fn row(method: Method, x: f64, fdr: f64) -> ResultRow {
        ResultRow {
            scenario: "t".into(),
            method,
            sweep_param: "mu".into(),
            sweep_value: Some(x),
            stage: "final".into(),
            fdr,
            mfdr: fdr,
            mdr: 0.5,
            power: 0.5,
            se_fdr: 0.0,
            se_mfdr: 0.0,
            se_mdr: 0.0,
            reps: 1,
            seed: 0,
            status: STATUS_OK.into(),
        }
    }

    fn legend_order(svg: &str) -> Vec<String> {
        svg.lines()
            .filter(|l| l.contains(r#"class="legend""#))
            .map(|l| l.rsplit_once('>').unwrap().0.rsplit_once('>').unwrap().1.trim_end_matches("</text").to_string())
            .collect()
    }

    #[test]
    fn single_row_gives_single_point_polyline() {
        let svg = emit_svg(&[row(Method::AmsetOr, 2.0, 0.03)], "fdr", XAxis::Sweep, 0.05).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let poly = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let pts = poly.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 1);
    }

    #[test]
    fn reference_line_only_for_fdr_metrics() {
        let rows = [row(Method::AmsetOr, 1.0, 0.02), row(Method::AmsetOr, 2.0, 0.04)];
        assert!(emit_svg(&rows, "fdr", XAxis::Sweep, 0.05).unwrap().contains(r#"class="reference""#));
        assert!(emit_svg(&rows, "mfdr", XAxis::Sweep, 0.05).unwrap().contains("alpha = 0.05"));
        assert!(!emit_svg(&rows, "mdr", XAxis::Sweep, 0.05).unwrap().contains(r#"class="reference""#));
    }

    #[test]
    fn legend_follows_registry_order() {
        let rows: Vec<ResultRow> = [
            Method::OptimizelyDd,
            Method::MsetDd,
            Method::AmsetOr,
            Method::OptimizelyOr,
            Method::AmsetDd,
            Method::MsetOr,
        ]
        .iter()
        .map(|&m| row(m, 1.0, 0.01))
        .collect();
        let svg = emit_svg(&rows, "power", XAxis::Sweep, 0.05).unwrap();
        assert_eq!(
            legend_order(&svg),
            ["AMSET_OR", "MSET_OR", "AMSET_DD", "MSET_DD", "Optimizely_OR", "Optimizely_DD"]
        );
    }

    #[test]
    fn empty_selection_is_rejected() {
        assert!(emit_svg(&[], "fdr", XAxis::Sweep, 0.05).is_err());
        // Final rows have no stage number.
        assert!(emit_svg(&[row(Method::AmsetOr, 1.0, 0.0)], "fdr", XAxis::Stage, 0.05).is_err());
        assert!(emit_svg(&[row(Method::AmsetOr, 1.0, 0.0)], "loss", XAxis::Sweep, 0.05).is_err());
        let mut bad = row(Method::AmsetOr, 1.0, 0.0);
        bad.status = "invalid: x".into();
        assert!(emit_svg(&[bad], "fdr", XAxis::Sweep, 0.05).is_err());
    }
}
