//! Self-contained SVG charts for the trend tables. The CSV is authoritative;
//! these are for eyeballing only.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::{TrendKind, TrendTable};

const W: f64 = 960.0;
const H: f64 = 480.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;
const PALETTE: [&str; 9] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf",
];

/// Centered 3-point mean over the available non-null neighbours. Null points
/// stay null.
pub fn rolling_mean(values: &[Option<f64>]) -> Vec<Option<f64>> {
    (0..values.len())
        .map(|i| {
            values[i]?;
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(values.len() - 1);
            let window: Vec<f64> = values[lo..=hi].iter().flatten().copied().collect();
            Some(window.iter().sum::<f64>() / window.len() as f64)
        })
        .collect()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{LEFT}" y="22" font-size="15">{}</text>
"#,
        esc(title)
    );
}

fn legend(out: &mut String, names: &[String]) {
    for (i, n) in names.iter().enumerate() {
        let y = TOP + 16.0 * i as f64;
        let x = W - RIGHT + 16.0;
        let c = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{c}"/><text x="{}" y="{}">{}</text>"#,
            y - 9.0,
            x + 14.0,
            y,
            esc(n)
        );
    }
}

fn y_axis(out: &mut String, lo: f64, hi: f64, to_y: &dyn Fn(f64) -> f64) {
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = to_y(v);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0
        );
    }
}

/// Series keyed by name, valued per period.
fn line_chart(title: &str, periods: &[String], series: &BTreeMap<String, Vec<Option<f64>>>, smooth: bool) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let to_y = |v: f64| TOP + plot_h * (1.0 - v);
    let to_x = |i: usize| {
        if periods.len() <= 1 {
            LEFT + plot_w / 2.0
        } else {
            LEFT + plot_w * i as f64 / (periods.len() - 1) as f64
        }
    };
    y_axis(&mut out, 0.0, 1.0, &to_y);
    let step = periods.len().div_ceil(24).max(1);
    for (i, p) in periods.iter().enumerate().step_by(step) {
        let x = to_x(i);
        let y = H - BOTTOM + 14.0;
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{y}" text-anchor="end" transform="rotate(-45 {x:.1} {y})">{}</text>"#,
            esc(p)
        );
    }
    for (si, values) in series.values().enumerate() {
        let values = if smooth { rolling_mean(values) } else { values.clone() };
        let c = PALETTE[si % PALETTE.len()];
        // Nulls break the line into segments.
        let mut seg: Vec<String> = Vec::new();
        let flush = |seg: &mut Vec<String>, out: &mut String| {
            if seg.len() > 1 {
                let _ = writeln!(out, r#"<polyline fill="none" stroke="{c}" stroke-width="1.8" points="{}"/>"#, seg.join(" "));
            } else if let Some(pt) = seg.first() {
                let (x, y) = pt.split_once(',').expect("point");
                let _ = writeln!(out, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{c}"/>"#);
            }
            seg.clear();
        };
        for (i, v) in values.iter().enumerate() {
            match v {
                Some(v) => seg.push(format!("{:.1},{:.1}", to_x(i), to_y(*v))),
                None => flush(&mut seg, &mut out),
            }
        }
        flush(&mut seg, &mut out);
    }
    legend(&mut out, &series.keys().cloned().collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

fn time_chart(table: &TrendTable, smooth: bool) -> String {
    let periods: Vec<String> = {
        let mut p: Vec<String> = table.rows.iter().filter_map(|r| r.period.clone()).collect();
        p.sort();
        p.dedup();
        p
    };
    let index: BTreeMap<&str, usize> = periods.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let mut series: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for r in &table.rows {
        let name = match table.kind {
            TrendKind::TopicShare => r.topic.map(|t| t.name().to_string()),
            _ => r.party.map(|p| p.name().to_string()),
        }
        .unwrap_or_default();
        let i = index[r.period.as_deref().unwrap_or_default()];
        series.entry(name).or_insert_with(|| vec![None; periods.len()])[i] = r.value;
    }
    let title = match table.kind {
        TrendKind::TopicShare => "Topic share per period",
        _ => "Share of negative speeches per party",
    };
    let title = if smooth {
        format!("{title} (centered 3-period mean)")
    } else {
        title.to_string()
    };
    line_chart(&title, &periods, &series, smooth)
}

/// Grouped bars: one group per party, one bar per topic.
fn deviation_chart(table: &TrendTable) -> String {
    let mut out = String::new();
    header(&mut out, "Negative share per topic relative to party baseline");
    let parties: Vec<_> = table.baselines.iter().map(|b| b.party).collect();
    let topics: Vec<String> = crate::Topic::ALL.iter().map(|t| t.name().to_string()).collect();
    let m = table
        .rows
        .iter()
        .filter_map(|r| r.value)
        .fold(0.05_f64, |a, v| a.max(v.abs()));
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let to_y = |v: f64| TOP + plot_h * (m - v) / (2.0 * m);
    y_axis(&mut out, -m, m, &to_y);
    let group_w = plot_w / parties.len().max(1) as f64;
    let bar_w = group_w * 0.8 / topics.len() as f64;
    for (gi, party) in parties.iter().enumerate() {
        let gx = LEFT + group_w * gi as f64 + group_w * 0.1;
        for r in table.rows.iter().filter(|r| r.party == Some(*party)) {
            let (Some(t), Some(v)) = (r.topic, r.value) else { continue };
            let x = gx + bar_w * t.index() as f64;
            let (y0, y1) = (to_y(v.max(0.0)), to_y(v.min(0.0)));
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{y0:.1}" width="{:.1}" height="{:.1}" fill="{}"><title>{} / {}: {v:+.3} ({})</title></rect>"#,
                bar_w * 0.9,
                (y1 - y0).max(0.5),
                PALETTE[t.index() % PALETTE.len()],
                esc(party.name()),
                esc(t.name()),
                r.count
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            gx + group_w * 0.4,
            H - BOTTOM + 16.0,
            esc(party.name())
        );
    }
    let zero = to_y(0.0);
    let _ = writeln!(out, r#"<line x1="{LEFT}" x2="{}" y1="{zero:.1}" y2="{zero:.1}" stroke="black"/>"#, W - RIGHT);
    legend(&mut out, &topics);
    out.push_str("</svg>\n");
    out
}

pub fn render_svg(table: &TrendTable, smooth: bool) -> String {
    match table.kind {
        TrendKind::SentimentDeviation => deviation_chart(table),
        _ => time_chart(table, smooth),
    }
}
