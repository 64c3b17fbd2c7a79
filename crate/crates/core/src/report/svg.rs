//! Plain SVG charts. Every chart embeds its data as CSV inside `<metadata>`.

use std::fmt::Write;

use super::{AggregationTable, Artifact, RateTable, SeriesSet};
use crate::eval::ConfusionMatrix;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(width: f64, height: f64, title: &str, data: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <title>{}</title>\n<metadata><![CDATA[\n{}]]></metadata>\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n",
        esc(title),
        data.replace("]]>", "]]]]><![CDATA[>")
    )
}

/// One horizontal bar per topic, split by column share.
pub(super) fn stacked_bars(t: &AggregationTable) -> String {
    let data = t.to_csv().unwrap_or_default();
    let rows: Vec<_> = t.rows.iter().chain(std::iter::once(&t.totals)).filter(|r| r.total > 0).collect();
    let (left, bar_w, row_h) = (220.0, 420.0, 22.0);
    let height = 60.0 + row_h * rows.len() as f64;
    let mut s = open(left + bar_w + 40.0, height, "Topic shares", &data);
    for (i, c) in t.columns.iter().enumerate() {
        let x = left + i as f64 * 110.0;
        let _ = writeln!(s, "<rect x=\"{x}\" y=\"8\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{}\" y=\"17\">{}</text>", PALETTE[i % 10], x + 14.0, esc(c));
    }
    for (r, row) in rows.iter().enumerate() {
        let y = 36.0 + r as f64 * row_h;
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", left - 6.0, y + 13.0, esc(&row.key));
        let mut x = left;
        for (i, share) in row.shares.iter().enumerate() {
            let w = bar_w * share / 100.0;
            let _ = writeln!(s, "<rect x=\"{x:.2}\" y=\"{y}\" width=\"{w:.2}\" height=\"{}\" fill=\"{}\"/>", row_h - 4.0, PALETTE[i % 10]);
            x += w;
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Ranked bars of complaints per million riders.
pub(super) fn rate_bars(t: &RateTable) -> String {
    let data = t.to_csv().unwrap_or_default();
    let mut rates: Vec<_> = t.rates.iter().filter_map(|r| r.rate.map(|v| (r.group.as_str(), v))).collect();
    rates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    let max = rates.iter().map(|r| r.1).fold(0.0, f64::max);
    let (left, bar_w, row_h) = (160.0, 400.0, 20.0);
    let mut s = open(left + bar_w + 90.0, 30.0 + row_h * rates.len() as f64, "Complaints per million riders", &data);
    for (i, (g, v)) in rates.iter().enumerate() {
        let y = 20.0 + i as f64 * row_h;
        let w = if max > 0.0 { bar_w * v / max } else { 0.0 };
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text><rect x=\"{left}\" y=\"{y}\" width=\"{w:.2}\" height=\"{}\" fill=\"{}\"/><text x=\"{:.2}\" y=\"{}\">{v:.2}</text>",
            left - 6.0,
            y + 12.0,
            esc(g),
            row_h - 4.0,
            PALETTE[0],
            left + w + 4.0,
            y + 12.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One `<path>` per series over a shared date axis.
pub(super) fn line_chart(set: &SeriesSet, data: &str) -> String {
    let (w, h, pad) = (720.0, 360.0, 50.0);
    let mut s = open(w, h, &set.title, data);
    let dates = set.series.iter().flat_map(|x| x.points.iter().map(|p| p.0));
    let (lo, hi) = match (dates.clone().min(), dates.max()) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => {
            s.push_str("</svg>\n");
            return s;
        }
    };
    let span = ((hi - lo).num_days().max(1)) as f64;
    let ymax = set
        .series
        .iter()
        .flat_map(|x| x.points.iter().map(|p| p.1))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let _ = writeln!(
        s,
        "<line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/><line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>",
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    let _ = writeln!(s, "<text x=\"{pad}\" y=\"{}\">{lo}</text><text x=\"{}\" y=\"{}\" text-anchor=\"end\">{hi}</text>", h - pad + 16.0, w - pad, h - pad + 16.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{pad}\" text-anchor=\"end\">{ymax:.2}</text>", pad - 4.0);
    for (i, series) in set.series.iter().enumerate() {
        let mut d = String::new();
        for (j, (date, v)) in series.points.iter().enumerate() {
            let x = pad + (w - 2.0 * pad) * (*date - lo).num_days() as f64 / span;
            let y = h - pad - (h - 2.0 * pad) * v / ymax;
            let _ = write!(d, "{}{x:.2},{y:.2}", if j == 0 { "M" } else { " L" });
        }
        let color = PALETTE[i % 10];
        let _ = writeln!(s, "<path data-group=\"{}\" d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>", esc(&series.group));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>", w - pad + 4.0, pad + 14.0 * i as f64, esc(&series.group));
    }
    s.push_str("</svg>\n");
    s
}

/// Row-normalized heatmap with raw counts in each cell.
pub(super) fn heatmap(cm: &ConfusionMatrix) -> String {
    let data = cm.to_csv().unwrap_or_default();
    let n = cm.labels.len();
    let (left, top, cell) = (200.0, 40.0, 44.0);
    let size = left + cell * n as f64 + 20.0;
    let mut s = open(size, top + cell * n as f64 + 20.0, "Confusion matrix (rows: true, columns: predicted)", &data);
    let pct = cm.row_percentages();
    for (i, label) in cm.labels.iter().enumerate() {
        let y = top + i as f64 * cell;
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", left - 6.0, y + cell / 2.0 + 4.0, esc(label));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{i}</text>", left + i as f64 * cell + cell / 2.0, top - 8.0);
        for j in 0..n {
            let x = left + j as f64 * cell;
            let share = pct[i][j] / 100.0;
            let _ = writeln!(
                s,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{}\" fill-opacity=\"{share:.4}\" stroke=\"#ddd\"/><text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
                PALETTE[0],
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                cm.counts[i][j]
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
