//! Static SVG figure: the data on top, minimal detected intervals below as
//! horizontal segments packed greedily into rows.

use std::fmt::Write as _;
use std::path::Path;

use crate::calibration::{DetectedInterval, Direction};
use crate::error::Result;
use crate::ranks::Dataset;
use crate::report::TestReport;

const WIDTH: f64 = 720.0;
const MARGIN: f64 = 50.0;
const SCATTER_HEIGHT: f64 = 300.0;
const ROW_HEIGHT: f64 = 14.0;
const GAP: f64 = 30.0;

/// Row index per interval: each interval goes into the first row whose last
/// segment ends strictly before it starts.
pub fn pack_rows(intervals: &[DetectedInterval]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..intervals.len()).collect();
    order.sort_by(|&a, &b| {
        intervals[a]
            .x_j
            .total_cmp(&intervals[b].x_j)
            .then(intervals[a].x_k.total_cmp(&intervals[b].x_k))
    });
    let mut row_ends: Vec<f64> = Vec::new();
    let mut rows = vec![0; intervals.len()];
    for i in order {
        let iv = &intervals[i];
        let row = match row_ends.iter().position(|&end| end < iv.x_j) {
            Some(r) => r,
            None => {
                row_ends.push(f64::NEG_INFINITY);
                row_ends.len() - 1
            }
        };
        row_ends[row] = iv.x_k;
        rows[i] = row;
    }
    rows
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

pub fn render_svg(d: &Dataset, r: &TestReport) -> String {
    let x = d.x();
    let y = d.y();
    let (xmin, xmax) = (x[0], x[x.len() - 1]);
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let yspan = if ymax > ymin { ymax - ymin } else { 1.0 };
    let plot_w = WIDTH - 2.0 * MARGIN;
    let px = |v: f64| MARGIN + (v - xmin) / (xmax - xmin) * plot_w;
    let py = |v: f64| MARGIN + (ymax - v) / yspan * SCATTER_HEIGHT;

    let rows = pack_rows(&r.minimal_intervals);
    let nrows = rows.iter().max().map_or(0, |m| m + 1);
    let lower_top = MARGIN + SCATTER_HEIGHT + GAP;
    let lower_h = (nrows.max(1) as f64) * ROW_HEIGHT;
    let height = lower_top + lower_h + MARGIN;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        fmt(WIDTH),
        fmt(height),
        fmt(WIDTH),
        fmt(height)
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13">n = {}, T_n = {:.4}, kappa = {:.4}, p = {:.4}</text>"#,
        fmt(MARGIN),
        fmt(MARGIN - 18.0),
        r.n,
        r.t_n,
        r.kappa,
        r.p_value
    );
    // upper panel
    let _ = writeln!(
        s,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        fmt(MARGIN),
        fmt(MARGIN),
        fmt(plot_w),
        fmt(SCATTER_HEIGHT)
    );
    if ymin < 0.0 && ymax > 0.0 {
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{z}" x2="{}" y2="{z}" stroke="#999" stroke-dasharray="4 3"/>"##,
            fmt(MARGIN),
            fmt(MARGIN + plot_w),
            z = fmt(py(0.0))
        );
    }
    let _ = writeln!(s, r##"<g fill="#1f4e9c">"##);
    for (&xi, &yi) in x.iter().zip(y) {
        let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="2.5"/>"#, fmt(px(xi)), fmt(py(yi)));
    }
    let _ = writeln!(s, "</g>");
    // lower panel
    let _ = writeln!(
        s,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        fmt(MARGIN),
        fmt(lower_top),
        fmt(plot_w),
        fmt(lower_h)
    );
    let _ = writeln!(s, r#"<g stroke-width="3">"#);
    for (iv, &row) in r.minimal_intervals.iter().zip(&rows) {
        let color = match iv.direction {
            Direction::Up => "#c0392b",
            Direction::Down => "#27ae60",
        };
        let yy = lower_top + (row as f64 + 0.5) * ROW_HEIGHT;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}"/>"#,
            fmt(px(iv.x_j)),
            fmt(yy),
            fmt(px(iv.x_k)),
            fmt(yy)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{:.4}</text>"#,
        fmt(MARGIN),
        fmt(height - MARGIN + 16.0),
        xmin
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{:.4}</text>"#,
        fmt(MARGIN + plot_w),
        fmt(height - MARGIN + 16.0),
        xmax
    );
    let _ = writeln!(s, "</svg>");
    s
}

pub fn write_svg(d: &Dataset, r: &TestReport, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_svg(d, r))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(x_j: f64, x_k: f64) -> DetectedInterval {
        DetectedInterval { j: 0, k: 1, x_j, x_k, t: 3.0, penalty: 1.0, excess: 2.0, direction: Direction::Up }
    }

    #[test]
    fn disjoint_segments_share_a_row() {
        assert_eq!(pack_rows(&[iv(0.1, 0.2), iv(0.5, 0.6)]), vec![0, 0]);
    }

    #[test]
    fn overlapping_segments_stack() {
        assert_eq!(pack_rows(&[iv(0.1, 0.4), iv(0.3, 0.6)]), vec![0, 1]);
        assert_eq!(pack_rows(&[iv(0.1, 0.4), iv(0.3, 0.6), iv(0.5, 0.7)]), vec![0, 1, 0]);
    }
}
