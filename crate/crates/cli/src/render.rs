//! Static SVG learning curves from summary CSVs.
//!
//! A plot is a pure function of its input CSVs: x is the iteration, y is the
//! mean policy reward with a ±1 sample-standard-deviation band across
//! sessions. Every plotted point carries its numbers in `data-` attributes so
//! tests (and curious readers) can check the plot against the data without a
//! raster diff.

use std::fmt::Write as _;

use crate::error::{HarnessError, Result};

/// One plotted iteration: mean and sample std across sessions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub mean: f64,
    pub std: f64,
}

/// One labeled curve (e.g. a fin) with its band.
#[derive(Clone, Debug)]
pub struct CurveSeries {
    pub label: String,
    pub points: Vec<CurvePoint>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 460.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 42.0;
const MARGIN_BOTTOM: f64 = 52.0;

/// Extract `(iteration, mean_policy_reward)` rows from a session summary CSV.
pub fn parse_summary_csv(text: &str, origin: &str) -> Result<Vec<(usize, f64)>> {
    let bad = |msg: String| HarnessError::InvalidInput(format!("{origin}: {msg}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    let iter_col = columns
        .iter()
        .position(|c| *c == "iteration")
        .ok_or_else(|| bad("no iteration column".into()))?;
    let reward_col = columns
        .iter()
        .position(|c| *c == "mean_policy_reward")
        .ok_or_else(|| bad("no mean_policy_reward column".into()))?;
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(bad(format!("row {} has {} cells, header has {}", idx + 2, cells.len(), columns.len())));
        }
        let iteration = cells[iter_col]
            .parse::<usize>()
            .map_err(|e| bad(format!("row {}: bad iteration: {e}", idx + 2)))?;
        let reward = cells[reward_col]
            .parse::<f64>()
            .map_err(|e| bad(format!("row {}: bad reward: {e}", idx + 2)))?;
        rows.push((iteration, reward));
    }
    if rows.is_empty() {
        return Err(bad("no data rows".into()));
    }
    Ok(rows)
}

/// Collapse per-session `(iteration, reward)` rows into mean ± sample std.
///
/// Every session must report the same iteration sequence. A single session
/// yields a zero-width band.
pub fn aggregate_sessions(per_session: &[Vec<(usize, f64)>]) -> Result<Vec<CurvePoint>> {
    let first = per_session
        .first()
        .ok_or_else(|| HarnessError::InvalidInput("no sessions to aggregate".into()))?;
    for (s, rows) in per_session.iter().enumerate() {
        if rows.len() != first.len() {
            return Err(HarnessError::InvalidInput(format!(
                "session {s} has {} iterations, session 0 has {}",
                rows.len(),
                first.len()
            )));
        }
        for (row, lead) in rows.iter().zip(first) {
            if row.0 != lead.0 {
                return Err(HarnessError::InvalidInput(format!(
                    "session {s} reports iteration {}, session 0 has {}",
                    row.0, lead.0
                )));
            }
        }
    }
    let n = per_session.len() as f64;
    Ok((0..first.len())
        .map(|i| {
            let mean = per_session.iter().map(|rows| rows[i].1).sum::<f64>() / n;
            let std = if per_session.len() < 2 {
                0.0
            } else {
                let ss = per_session.iter().map(|rows| (rows[i].1 - mean).powi(2)).sum::<f64>();
                (ss / (n - 1.0)).sqrt()
            };
            CurvePoint { iteration: first[i].0, mean, std }
        })
        .collect())
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render one comparison plot. Errors on an empty series list, empty series,
/// or non-finite values.
pub fn render_curves(series: &[CurveSeries], title: &str, y_label: &str) -> Result<String> {
    if series.is_empty() {
        return Err(HarnessError::InvalidInput("nothing to plot".into()));
    }
    for s in series {
        if s.points.is_empty() {
            return Err(HarnessError::InvalidInput(format!("series {:?} has no points", s.label)));
        }
        for p in &s.points {
            if !(p.mean.is_finite() && p.std.is_finite() && p.std >= 0.0) {
                return Err(HarnessError::InvalidInput(format!(
                    "series {:?} iteration {}: mean {} std {}",
                    s.label, p.iteration, p.mean, p.std
                )));
            }
        }
    }

    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for p in &s.points {
            x_min = x_min.min(p.iteration as f64);
            x_max = x_max.max(p.iteration as f64);
            y_min = y_min.min(p.mean - p.std);
            y_max = y_max.max(p.mean + p.std);
        }
    }
    if x_max == x_min {
        x_min -= 1.0;
        x_max += 1.0;
    }
    if y_max == y_min {
        let pad = y_max.abs().max(1.0) * 0.1;
        y_min -= pad;
        y_max += pad;
    } else {
        let pad = (y_max - y_min) * 0.05;
        y_min -= pad;
        y_max += pad;
    }

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |it: f64| MARGIN_LEFT + (it - x_min) / (x_max - x_min) * plot_w;
    let sy = |v: f64| MARGIN_TOP + (1.0 - (v - y_min) / (y_max - y_min)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
    let _ = writeln!(
        svg,
        r##"<text x="{:.2}" y="24" font-size="16" fill="#222222">{}</text>"##,
        MARGIN_LEFT,
        escape(title)
    );

    // y-axis ticks and gridlines
    for i in 0..=4 {
        let v = y_min + (y_max - y_min) * i as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            MARGIN_LEFT,
            WIDTH - MARGIN_RIGHT
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-size="11" fill="#444444" text-anchor="end">{v:.3}</text>"##,
            MARGIN_LEFT - 6.0,
            y + 4.0
        );
    }
    // x-axis ticks at integer iterations
    let span = (x_max - x_min).max(1.0);
    let step = (span / 10.0).ceil().max(1.0) as usize;
    let mut it = x_min.ceil() as i64;
    while it as f64 <= x_max {
        let x = sx(it as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/>"##,
            MARGIN_TOP,
            HEIGHT - MARGIN_BOTTOM
        );
        let _ = writeln!(
            svg,
            r##"<text x="{x:.2}" y="{:.2}" font-size="11" fill="#444444" text-anchor="middle">{it}</text>"##,
            HEIGHT - MARGIN_BOTTOM + 16.0
        );
        it += step as i64;
    }
    // axis lines
    let _ = writeln!(
        svg,
        r##"<line x1="{MARGIN_LEFT:.2}" y1="{MARGIN_TOP:.2}" x2="{MARGIN_LEFT:.2}" y2="{:.2}" stroke="#222222"/>"##,
        HEIGHT - MARGIN_BOTTOM
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{MARGIN_LEFT:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#222222"/>"##,
        HEIGHT - MARGIN_BOTTOM,
        WIDTH - MARGIN_RIGHT,
        HEIGHT - MARGIN_BOTTOM
    );
    // axis labels
    let _ = writeln!(
        svg,
        r##"<text x="{:.2}" y="{:.2}" font-size="13" fill="#222222" text-anchor="middle">iteration</text>"##,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="16" y="{:.2}" font-size="13" fill="#222222" transform="rotate(-90 16 {:.2})" text-anchor="middle">{}</text>"##,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    );

    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        // ±1 std band: upper edge forward, lower edge back
        let mut band = String::new();
        for p in &s.points {
            let _ = write!(band, "{:.2},{:.2} ", sx(p.iteration as f64), sy(p.mean + p.std));
        }
        for p in s.points.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", sx(p.iteration as f64), sy(p.mean - p.std));
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.22" stroke="none"/>"#,
            band.trim_end()
        );
        let mut line = String::new();
        for p in &s.points {
            let _ = write!(line, "{:.2},{:.2} ", sx(p.iteration as f64), sy(p.mean));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.trim_end()
        );
        for p in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" data-series="{}" data-iteration="{}" data-mean="{}" data-std="{}"/>"#,
                sx(p.iteration as f64),
                sy(p.mean),
                escape(&s.label),
                p.iteration,
                p.mean,
                p.std
            );
        }
        // legend entry
        let ly = MARGIN_TOP + 8.0 + idx as f64 * 18.0;
        let lx = WIDTH - MARGIN_RIGHT - 150.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/>"#,
            lx + 22.0
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-size="12" fill="#222222">{}</text>"##,
            lx + 28.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn summary(rows: &[(usize, f64)]) -> String {
        let mut text = String::from(
            "iteration,mean_policy_reward,batch_reward_mean,batch_reward_max,elbo_final,e_tau_group1,ess\n",
        );
        for (it, r) in rows {
            text.push_str(&format!("{it},{r},0,0,0,1,10\n"));
        }
        text
    }

    #[test]
    fn parses_the_pinned_summary_schema() {
        let rows = parse_summary_csv(&summary(&[(1, 2.5), (2, 3.25)]), "test").unwrap();
        assert_eq!(rows, vec![(1, 2.5), (2, 3.25)]);
    }

    #[test]
    fn empty_or_headerless_input_is_an_error() {
        assert!(parse_summary_csv("", "test").is_err());
        assert!(parse_summary_csv("iteration,mean_policy_reward\n", "test").is_err());
        assert!(parse_summary_csv("a,b\n1,2\n", "test").is_err());
    }

    #[test]
    fn aggregation_matches_hand_computed_stats() {
        let sessions =
            vec![vec![(1, 1.0), (2, 5.0)], vec![(1, 3.0), (2, 5.0)], vec![(1, 5.0), (2, 5.0)]];
        let points = aggregate_sessions(&sessions).unwrap();
        assert_eq!(points[0].iteration, 1);
        assert_abs_diff_eq!(points[0].mean, 3.0);
        // sample std of {1,3,5} = 2
        assert_abs_diff_eq!(points[0].std, 2.0);
        assert_abs_diff_eq!(points[1].std, 0.0);
    }

    #[test]
    fn single_session_yields_a_zero_band() {
        let points = aggregate_sessions(&[vec![(1, 4.0), (2, 6.0)]]).unwrap();
        assert!(points.iter().all(|p| p.std == 0.0));
        let svg = render_curves(
            &[CurveSeries { label: "only".into(), points }],
            "t",
            "reward (cm)",
        )
        .unwrap();
        assert!(svg.contains(r#"data-std="0""#));
    }

    #[test]
    fn ragged_sessions_are_rejected() {
        let err = aggregate_sessions(&[vec![(1, 1.0)], vec![(1, 1.0), (2, 2.0)]]).unwrap_err();
        assert!(err.to_string().contains("iterations"));
        let err =
            aggregate_sessions(&[vec![(1, 1.0)], vec![(2, 1.0)]]).unwrap_err();
        assert!(err.to_string().contains("iteration"));
    }

    #[test]
    fn no_input_is_an_error() {
        assert!(aggregate_sessions(&[]).is_err());
        assert!(render_curves(&[], "t", "y").is_err());
        let empty = CurveSeries { label: "x".into(), points: vec![] };
        assert!(render_curves(&[empty], "t", "y").is_err());
    }

    #[test]
    fn rendered_points_carry_their_numbers() {
        let series = CurveSeries {
            label: "A".into(),
            points: vec![
                CurvePoint { iteration: 1, mean: 1.5, std: 0.25 },
                CurvePoint { iteration: 2, mean: 2.5, std: 0.5 },
            ],
        };
        let svg = render_curves(&[series], "demo", "reward (cm)").unwrap();
        assert!(svg.contains(r#"data-iteration="1" data-mean="1.5" data-std="0.25""#));
        assert!(svg.contains(r#"data-iteration="2" data-mean="2.5" data-std="0.5""#));
        assert!(svg.contains("<polygon"));
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("reward (cm)"));
    }

    #[test]
    fn identical_inputs_render_identically() {
        let series = CurveSeries {
            label: "A".into(),
            points: vec![CurvePoint { iteration: 1, mean: 0.1, std: 0.0 }],
        };
        let a = render_curves(std::slice::from_ref(&series), "t", "y").unwrap();
        let b = render_curves(std::slice::from_ref(&series), "t", "y").unwrap();
        assert_eq!(a, b);
    }
}
