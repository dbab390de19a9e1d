//! Report emission: `sweep.csv`, `rates.json`, and the optional
//! `rates.svg` log-log diagnostic plot.
//!
//! Floats are written in scientific notation with 17 significant digits, so
//! parsing a report back reproduces the in-memory values exactly; the CSV
//! column order is part of the output contract:
//!
//! ```text
//! quantity_tag, epsilon, theta, value, std_error, n_paths, excluded
//! ```
//!
//! For exceedance sweeps the `theta` column carries the threshold `delta`.

use std::path::Path;

use anyhow::Context;
use smallmass::{QuantityTag, SweepResult};

use crate::engine::FitRecord;

/// Header of `sweep.csv`; this exact order is the contract.
pub const CSV_HEADER: &str = "quantity_tag,epsilon,theta,value,std_error,n_paths,excluded";

/// Formats a float with 17 significant digits (exact `f64` round-trip).
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders all sweeps as CSV in the contract column order.
pub fn render_csv(sweeps: &[SweepResult]) -> String {
    let mut out = String::with_capacity(4096);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for sweep in sweeps {
        for i in 0..sweep.epsilons.len() {
            out.push_str(sweep.quantity.name());
            out.push(',');
            out.push_str(&format_float(sweep.epsilons[i]));
            out.push(',');
            out.push_str(&format_float(sweep.theta));
            out.push(',');
            out.push_str(&format_float(sweep.values[i]));
            out.push(',');
            out.push_str(&format_float(sweep.std_errors[i]));
            out.push(',');
            out.push_str(&sweep.n_paths[i].to_string());
            out.push(',');
            out.push_str(&sweep.excluded[i].to_string());
            out.push('\n');
        }
    }
    out
}

/// One parsed `sweep.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    /// Quantity tag in serialized (snake_case) form.
    pub quantity_tag: String,
    /// The rung's ε.
    pub epsilon: f64,
    /// Moment order θ (threshold δ for exceedance rows).
    pub theta: f64,
    /// Point estimate.
    pub value: f64,
    /// Standard error.
    pub std_error: f64,
    /// Contributing paths.
    pub n_paths: usize,
    /// Excluded paths.
    pub excluded: usize,
}

/// Parses a `sweep.csv` document back into rows, checking the header.
pub fn parse_csv(text: &str) -> anyhow::Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    let header = lines.next().context("sweep.csv is empty")?;
    if header != CSV_HEADER {
        anyhow::bail!("sweep.csv header mismatch: expected {CSV_HEADER:?}, got {header:?}");
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            anyhow::bail!("sweep.csv line {}: expected 7 fields, got {}", lineno + 2, fields.len());
        }
        let parse_f = |s: &str, name: &str| -> anyhow::Result<f64> {
            s.parse::<f64>()
                .with_context(|| format!("sweep.csv line {}: bad {name} {s:?}", lineno + 2))
        };
        let parse_u = |s: &str, name: &str| -> anyhow::Result<usize> {
            s.parse::<usize>()
                .with_context(|| format!("sweep.csv line {}: bad {name} {s:?}", lineno + 2))
        };
        rows.push(CsvRow {
            quantity_tag: fields[0].to_string(),
            epsilon: parse_f(fields[1], "epsilon")?,
            theta: parse_f(fields[2], "theta")?,
            value: parse_f(fields[3], "value")?,
            std_error: parse_f(fields[4], "std_error")?,
            n_paths: parse_u(fields[5], "n_paths")?,
            excluded: parse_u(fields[6], "excluded")?,
        });
    }
    Ok(rows)
}

/// Writes `sweep.csv` to `dir`.
pub fn write_csv(sweeps: &[SweepResult], dir: &Path) -> anyhow::Result<()> {
    let path = dir.join("sweep.csv");
    std::fs::write(&path, render_csv(sweeps))
        .with_context(|| format!("cannot write {}", path.display()))
}

/// Writes `rates.json` (an array of per-sweep fit records) to `dir`.
pub fn write_rates(fits: &[FitRecord], dir: &Path) -> anyhow::Result<()> {
    let path = dir.join("rates.json");
    let mut text = serde_json::to_string_pretty(fits).context("cannot serialize rates")?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes the `rates.svg` log-log diagnostic plot to `dir`.
pub fn write_svg(sweeps: &[SweepResult], fits: &[FitRecord], dir: &Path) -> anyhow::Result<()> {
    let path = dir.join("rates.svg");
    std::fs::write(&path, render_svg(sweeps, fits))
        .with_context(|| format!("cannot write {}", path.display()))
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
    "#bcbd22", "#7f7f7f",
];

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 640.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 300.0;
const MARGIN_T: f64 = 48.0;
const MARGIN_B: f64 = 64.0;

/// Renders the diagnostic plot: log10–log10 scatter of every sweep with a
/// positive value, each with its fitted line (solid) and a guide of the
/// theoretical slope through its largest-ε point (dashed).
pub fn render_svg(sweeps: &[SweepResult], fits: &[FitRecord]) -> String {
    let mut series = Vec::new();
    for sweep in sweeps {
        let points: Vec<(f64, f64)> = sweep
            .epsilons
            .iter()
            .zip(sweep.values.iter())
            .filter(|&(_, &v)| v > 0.0 && v.is_finite())
            .map(|(&e, &v)| (e.log10(), v.log10()))
            .collect();
        if points.is_empty() {
            continue;
        }
        let fit = fits
            .iter()
            .find(|f| f.quantity == sweep.quantity && f.theta == sweep.theta);
        series.push((sweep, points, fit));
    }

    let mut svg = String::with_capacity(16 * 1024);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"28\" font-size=\"18\">Convergence rates: log10 value vs log10 \
         eps</text>\n",
        MARGIN_L
    ));

    if series.is_empty() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"14\">no positive values to plot</text>\n",
            MARGIN_L,
            HEIGHT / 2.0
        ));
        svg.push_str("</svg>\n");
        return svg;
    }

    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for (_, points, _) in &series {
        for &(x, y) in points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    let x_pad = 0.05 * (x_max - x_min).max(1e-12);
    let y_pad = 0.08 * (y_max - y_min).max(1e-12);
    x_min -= x_pad;
    x_max += x_pad;
    y_min -= y_pad;
    y_max += y_pad;

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = move |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = move |y: f64| MARGIN_T + (y_max - y) / (y_max - y_min) * plot_h;

    // Axes with ticks at whole and half decades where room allows.
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#444\"/>\n"
    ));
    let x_ticks = decade_ticks(x_min, x_max);
    for &t in &x_ticks {
        let px = sx(t as f64);
        svg.push_str(&format!(
            "<line x1=\"{px:.1}\" y1=\"{}\" x2=\"{px:.1}\" y2=\"{}\" stroke=\"#aaa\" \
             stroke-dasharray=\"2,4\"/>\n",
            MARGIN_T,
            MARGIN_T + plot_h
        ));
        svg.push_str(&format!(
            "<text x=\"{px:.1}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">1e{t}</text>\n",
            MARGIN_T + plot_h + 18.0
        ));
    }
    let y_ticks = decade_ticks(y_min, y_max);
    for &t in &y_ticks {
        let py = sy(t as f64);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py:.1}\" x2=\"{}\" y2=\"{py:.1}\" stroke=\"#aaa\" \
             stroke-dasharray=\"2,4\"/>\n",
            MARGIN_L,
            MARGIN_L + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{py:.1}\" font-size=\"12\" text-anchor=\"end\" \
             dy=\"4\">1e{t}</text>\n",
            MARGIN_L - 8.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">eps</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 16.0
    ));

    let ln10 = std::f64::consts::LN_10;
    let mut legend_y = MARGIN_T + 10.0;
    for (index, (sweep, points, fit)) in series.iter().enumerate() {
        let color = PALETTE[index % PALETTE.len()];
        for &(x, y) in points {
            svg.push_str(&format!(
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3.5\" fill=\"{color}\"/>\n",
                sx(x),
                sy(y)
            ));
        }
        let px_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let px_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        if let Some(fit) = fit {
            // Fitted line: ln v = intercept + slope ln eps.
            let line_y = |x: f64| (fit.fit.intercept + fit.fit.slope * x * ln10) / ln10;
            svg.push_str(&format!(
                "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{color}\" \
                 stroke-width=\"1.5\"/>\n",
                sx(px_min),
                sy(line_y(px_min)),
                sx(px_max),
                sy(line_y(px_max))
            ));
            // Theoretical-slope guide anchored at the largest-eps point.
            let (ax, ay) = points
                .iter()
                .copied()
                .fold((f64::NEG_INFINITY, 0.0), |acc, p| if p.0 > acc.0 { p } else { acc });
            let guide_y = |x: f64| ay + fit.fit.theoretical_exponent * (x - ax);
            svg.push_str(&format!(
                "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{color}\" \
                 stroke-width=\"1.2\" stroke-dasharray=\"6,4\" opacity=\"0.7\"/>\n",
                sx(px_min),
                sy(guide_y(px_min)),
                sx(px_max),
                sy(guide_y(px_max))
            ));
        }
        let label = match sweep.quantity {
            QuantityTag::ProbExceed => format!("{} delta={}", sweep.quantity.name(), sweep.theta),
            _ => format!("{} theta={}", sweep.quantity.name(), sweep.theta),
        };
        let detail = match fit {
            Some(f) => format!(
                "slope {:.3} (theory {:.3}) {}",
                f.fit.slope,
                f.fit.theoretical_exponent,
                if f.fit.pass { "pass" } else { "FAIL" }
            ),
            None => "no fit".to_string(),
        };
        let lx = WIDTH - MARGIN_R + 24.0;
        svg.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n",
            lx,
            legend_y - 9.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{legend_y:.1}\" font-size=\"12\">{label}</text>\n",
            lx + 16.0
        ));
        legend_y += 15.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{legend_y:.1}\" font-size=\"11\" \
             fill=\"#555\">{detail}</text>\n",
            lx + 16.0
        ));
        legend_y += 22.0;
    }

    svg.push_str("</svg>\n");
    svg
}

/// Integer decades covering `[lo, hi]` (at most ~8 labels).
fn decade_ticks(lo: f64, hi: f64) -> Vec<i64> {
    let first = lo.ceil() as i64;
    let last = hi.floor() as i64;
    if last < first {
        return vec![];
    }
    let span = (last - first) as usize + 1;
    let step = span.div_ceil(8).max(1);
    (first..=last).step_by(step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use smallmass::RateFit;

    fn sample_sweep() -> SweepResult {
        SweepResult::new(
            QuantityTag::SupMomentQDiff,
            1.0,
            vec![0.25, 0.125, 0.0625, 0.03125],
            vec![0.5, 0.4, 0.3, 0.25],
            vec![0.01, 0.008, 0.007, 0.006],
            vec![200, 200, 200, 199],
            vec![0, 0, 0, 1],
        )
        .unwrap()
    }

    #[test]
    fn test_csv_header_and_column_order() {
        let csv = render_csv(&[sample_sweep()]);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "quantity_tag,epsilon,theta,value,std_error,n_paths,excluded"
        );
        let first = lines.next().unwrap();
        assert!(first.starts_with("sup_moment_q_diff,2.5"), "{first}");
        assert!(first.ends_with(",200,0"), "{first}");
    }

    #[test]
    fn test_csv_roundtrip_is_exact() {
        let sweep = sample_sweep();
        let rows = parse_csv(&render_csv(std::slice::from_ref(&sweep))).unwrap();
        assert_eq!(rows.len(), 4);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.quantity_tag, "sup_moment_q_diff");
            assert_eq!(row.epsilon.to_bits(), sweep.epsilons[i].to_bits());
            assert_eq!(row.theta.to_bits(), 1.0f64.to_bits());
            assert_eq!(row.value.to_bits(), sweep.values[i].to_bits());
            assert_eq!(row.std_error.to_bits(), sweep.std_errors[i].to_bits());
            assert_eq!(row.n_paths, sweep.n_paths[i]);
            assert_eq!(row.excluded, sweep.excluded[i]);
        }
    }

    #[test]
    fn test_float_format_roundtrips_awkward_values() {
        for &x in &[
            1.0 / 3.0,
            2.0f64.powi(-52),
            6.02214076e23,
            -7.2973525693e-3,
            0.1 + 0.2,
        ] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn test_csv_rejects_bad_header() {
        assert!(parse_csv("epsilon,value\n1,2\n").is_err());
    }

    #[test]
    fn test_svg_contains_series_and_guides() {
        let sweep = sample_sweep();
        let fit = FitRecord {
            quantity: QuantityTag::SupMomentQDiff,
            theta: 1.0,
            fit: RateFit {
                slope: 0.33,
                intercept: 0.1,
                r_squared: 0.99,
                theoretical_exponent: 0.25,
                tolerance: 0.1,
                pass: true,
            },
        };
        let svg = render_svg(&[sweep], &[fit]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("circle"));
        assert!(svg.contains("stroke-dasharray=\"6,4\""), "theory guide missing");
        assert!(svg.contains("sup_moment_q_diff"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn test_svg_handles_empty_series() {
        let sweep = SweepResult::new(
            QuantityTag::ProbExceed,
            0.25,
            vec![0.25, 0.125, 0.0625, 0.03125],
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0],
            vec![200, 200, 200, 200],
            vec![0, 0, 0, 0],
        )
        .unwrap();
        let svg = render_svg(&[sweep], &[]);
        assert!(svg.contains("no positive values"));
    }
}
