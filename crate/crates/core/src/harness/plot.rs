//! Static SVG learning curves: success rate and mean return against
//! environment ticks. The raw series is drawn faint underneath a moving
//! average.

use std::fmt::Write as _;

use crate::trainer::RunMetrics;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 48.0;

/// Trailing moving average over `window` points (`window <= 1` is identity).
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= w {
            sum -= values[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

struct Panel<'a> {
    title: &'a str,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

fn range(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn draw_panel(svg: &mut String, p: &Panel, x0: f64, smooth: usize) {
    let (xlo, xhi) = range(&p.xs);
    let (ylo, yhi) = range(&p.ys);
    let w = PANEL_W - 2.0 * MARGIN;
    let h = PANEL_H - 2.0 * MARGIN;
    let px = |x: f64| x0 + MARGIN + (x - xlo) / (xhi - xlo) * w;
    let py = |y: f64| MARGIN + h - (y - ylo) / (yhi - ylo) * h;
    let _ = writeln!(
        svg,
        r##"<rect x="{:.1}" y="{MARGIN:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#444"/>"##,
        x0 + MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"#,
        x0 + PANEL_W / 2.0,
        MARGIN - 14.0,
        p.title
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">env ticks</text>"#,
        x0 + PANEL_W / 2.0,
        PANEL_H - 12.0
    );
    for (val, anchor, x) in [(xlo, "start", px(xlo)), (xhi, "end", px(xhi))] {
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="{anchor}" font-size="10">{val}</text>"#,
            MARGIN + h + 14.0
        );
    }
    for val in [ylo, yhi] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{val:.3}</text>"#,
            x0 + MARGIN - 4.0,
            py(val) + 3.0
        );
    }
    let line = |ys: &[f64]| -> String {
        p.xs.iter()
            .zip(ys)
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    if p.xs.len() == 1 {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f5fbf"/>"##,
            px(p.xs[0]),
            py(p.ys[0])
        );
        return;
    }
    let _ = writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#9db8e0" stroke-width="1"/>"##,
        line(&p.ys)
    );
    let _ = writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#1f5fbf" stroke-width="2"/>"##,
        line(&moving_average(&p.ys, smooth))
    );
}

/// Render the evaluation rows of `metrics`. Total for any metrics value:
/// with no evaluation rows the panels are drawn empty.
pub fn render_svg(metrics: &RunMetrics, smooth: usize) -> String {
    let xs: Vec<f64> = metrics.evals.iter().map(|r| r.env_steps as f64).collect();
    let panels = [
        Panel {
            title: "success rate",
            xs: xs.clone(),
            ys: metrics.evals.iter().map(|r| r.success_rate).collect(),
        },
        Panel {
            title: "mean return",
            xs,
            ys: metrics.evals.iter().map(|r| r.mean_return).collect(),
        },
    ];
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{PANEL_H:.0}" viewBox="0 0 {:.0} {PANEL_H:.0}">"#,
        2.0 * PANEL_W,
        2.0 * PANEL_W
    );
    svg.push('\n');
    svg.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    svg.push('\n');
    for (i, p) in panels.iter().enumerate() {
        if !p.xs.is_empty() {
            draw_panel(&mut svg, p, i as f64 * PANEL_W, smooth);
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::EvalRow;

    fn evals(n: usize) -> RunMetrics {
        RunMetrics {
            evals: (0..n)
                .map(|i| EvalRow {
                    env_steps: i as u64 * 1000,
                    success_rate: (i % 3) as f64 / 2.0,
                    mean_return: 0.5,
                    mean_length: 50.0,
                })
                .collect(),
            updates: Vec::new(),
        }
    }

    #[test]
    fn moving_average_matches_hand_values() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.0, 1.5, 2.5, 3.5]);
        assert_eq!(moving_average(&[1.0, 2.0], 0), vec![1.0, 2.0]);
        assert!(moving_average(&[], 3).is_empty());
    }

    #[test]
    fn single_row_plots_a_point() {
        let svg = render_svg(&evals(1), 5);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn curves_and_empty() {
        let svg = render_svg(&evals(6), 3);
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(!svg.contains("NaN"));
        let empty = render_svg(&RunMetrics::default(), 3);
        assert!(empty.ends_with("</svg>\n"));
    }
}
