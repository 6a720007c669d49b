//! CSV and SVG emission.

use std::fmt::Write as _;
use std::path::Path;

use unilab_core::{Error, ExperimentRecord, Result};

/// Twelve significant digits in scientific notation.
pub fn fmt12(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn timeseries_csv(record: &ExperimentRecord) -> String {
    let mut out = String::from("t,qubit_purity,observer_purity,mean_x\n");
    for i in 0..record.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt12(record.times[i]),
            fmt12(record.qubit_purity_series[i]),
            fmt12(record.observer_purity_series[i]),
            fmt12(record.mean_x_series[i])
        );
    }
    out
}

pub fn distribution_csv(record: &ExperimentRecord) -> String {
    let mut out = String::from("x,probability\n");
    for (x, p) in &record.final_distribution {
        let _ = writeln!(out, "{},{}", fmt12(*x), fmt12(*p));
    }
    out
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Resource(format!("cannot write {}: {e}", path.display())))
}

const W: f64 = 800.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 70.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

struct Frame {
    x0: f64,
    x1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = if self.x1 > self.x0 { self.x1 - self.x0 } else { 1.0 };
        LEFT + (x - self.x0) / span * (W - LEFT - RIGHT)
    }

    fn py(y: f64, lo: f64, hi: f64) -> f64 {
        let span = if hi > lo { hi - lo } else { 1.0 };
        H - BOTTOM - (y - lo) / span * (H - TOP - BOTTOM)
    }
}

fn path(points: impl Iterator<Item = (f64, f64)>, color: &str, dash: Option<&str>) -> String {
    let mut d = String::new();
    for (i, (x, y)) in points.enumerate() {
        let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, x, y);
    }
    let dash = dash.map(|s| format!(" stroke-dasharray=\"{s}\"")).unwrap_or_default();
    format!("<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>\n")
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        W / 2.0
    )
}

fn axes(out: &mut String, frame: &Frame, x_label: &str) {
    let (xa, xb) = (LEFT, W - RIGHT);
    let (ya, yb) = (TOP, H - BOTTOM);
    let _ = writeln!(
        out,
        "<rect x=\"{xa}\" y=\"{ya}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        xb - xa,
        yb - ya
    );
    for k in 0..=4 {
        let v = frame.x0 + (frame.x1 - frame.x0) * k as f64 / 4.0;
        let x = frame.px(v);
        let _ = writeln!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{yb}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"black\"/><text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\">{v:.2}</text>",
            yb + 5.0,
            yb + 20.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>",
        (xa + xb) / 2.0,
        H - 15.0
    );
}

fn y_axis(out: &mut String, lo: f64, hi: f64, right: bool, label: &str, color: &str) {
    let x = if right { W - RIGHT } else { LEFT };
    let (tick, anchor, off) = if right { (5.0, "start", 8.0) } else { (-5.0, "end", -8.0) };
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = Frame::py(v, lo, hi);
        let _ = writeln!(
            out,
            "<line x1=\"{x}\" y1=\"{y:.2}\" x2=\"{}\" y2=\"{y:.2}\" stroke=\"{color}\"/><text x=\"{}\" y=\"{:.2}\" text-anchor=\"{anchor}\" fill=\"{color}\">{v:.2}</text>",
            x + tick,
            x + off,
            y + 4.0
        );
    }
    let lx = if right { W - 18.0 } else { 18.0 };
    let ly = (TOP + H - BOTTOM) / 2.0;
    let _ = writeln!(
        out,
        "<text x=\"{lx}\" y=\"{ly}\" text-anchor=\"middle\" fill=\"{color}\" transform=\"rotate(-90 {lx} {ly})\">{label}</text>"
    );
}

fn legend(out: &mut String, entries: &[(&str, &str)]) {
    for (i, (name, color)) in entries.iter().enumerate() {
        let y = TOP + 15.0 + 18.0 * i as f64;
        let x = LEFT + 12.0;
        let _ = writeln!(
            out,
            "<line x1=\"{x}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{}\" y=\"{}\">{name}</text>",
            x + 24.0,
            x + 30.0,
            y + 4.0
        );
    }
}

/// Purity (left axis, `[0, 1]`) and `⟨x⟩` (right axis) against time.
pub fn timeseries_svg(record: &ExperimentRecord) -> String {
    let t_end = record.times.last().copied().unwrap_or(record.protocol.prop.t_final);
    let frame = Frame {
        x0: record.times.first().copied().unwrap_or(0.0),
        x1: t_end,
    };
    let x_ext = record
        .mean_x_series
        .iter()
        .fold(record.protocol.params.well_minimum(), |m, v| m.max(v.abs()))
        * 1.1;
    let mut out = header(&format!("{} : purities and position", record.protocol.kind));
    axes(&mut out, &frame, "t");
    y_axis(&mut out, 0.0, 1.0, false, "purity", "black");
    y_axis(&mut out, -x_ext, x_ext, true, "&lt;x&gt;", "#d62728");
    if !record.is_empty() {
        let series = |s: &[f64], lo: f64, hi: f64| -> Vec<(f64, f64)> {
            record.times.iter().zip(s).map(|(t, v)| (frame.px(*t), Frame::py(*v, lo, hi))).collect()
        };
        out.push_str(&path(series(&record.qubit_purity_series, 0.0, 1.0).into_iter(), "#1f77b4", None));
        out.push_str(&path(series(&record.observer_purity_series, 0.0, 1.0).into_iter(), "#2ca02c", None));
        out.push_str(&path(series(&record.mean_x_series, -x_ext, x_ext).into_iter(), "#d62728", None));
    }
    legend(
        &mut out,
        &[("qubit purity", "#1f77b4"), ("observer purity", "#2ca02c"), ("&lt;x&gt;", "#d62728")],
    );
    out.push_str("</svg>\n");
    out
}

/// Final position distribution with the left/right reference well states.
pub fn distribution_svg(record: &ExperimentRecord) -> String {
    let grid = &record.grid;
    let frame = Frame {
        x0: -grid.half_width,
        x1: grid.half_width,
    };
    let left: Vec<f64> = record.wells.left_state.iter().map(|v| v * v).collect();
    let right: Vec<f64> = record.wells.right_state.iter().map(|v| v * v).collect();
    let p_max = record
        .final_distribution
        .iter()
        .map(|(_, p)| *p)
        .chain(left.iter().copied())
        .chain(right.iter().copied())
        .fold(0.0, f64::max)
        .max(1e-12)
        * 1.1;
    let mut out = header(&format!("{} : final observer distribution", record.protocol.kind));
    axes(&mut out, &frame, "x");
    y_axis(&mut out, 0.0, p_max, false, "probability", "black");
    let curve = |ys: &[f64]| -> Vec<(f64, f64)> {
        ys.iter()
            .enumerate()
            .map(|(i, p)| (frame.px(grid.node(i)), Frame::py(*p, 0.0, p_max)))
            .collect()
    };
    let dist: Vec<f64> = record.final_distribution.iter().map(|(_, p)| *p).collect();
    if !dist.is_empty() {
        out.push_str(&path(curve(&dist).into_iter(), "black", None));
    }
    out.push_str(&path(curve(&left).into_iter(), "#1f77b4", Some("6 4")));
    out.push_str(&path(curve(&right).into_iter(), "#ff7f0e", Some("6 4")));
    legend(
        &mut out,
        &[("P(x) final", "black"), ("|O_L|^2", "#1f77b4"), ("|O_R|^2", "#ff7f0e")],
    );
    out.push_str("</svg>\n");
    out
}
