//! SVG line charts of a run with attack windows shaded.

use std::path::{Path, PathBuf};

use evcs_core::attack::Window;
use evcs_core::Channel;
use plotters::coord::Shift;
use plotters::prelude::*;

use crate::series::TimeSeries;
use crate::stats::{Phase, StatsError};
use crate::{write_atomic, HarnessError};

const SIZE: (u32, u32) = (900, 420);
const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

pub struct Line<'a> {
    pub label: String,
    pub y: &'a [f64],
}

fn plot_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("plot: {e}"))
}

fn y_range<'a>(lines: impl Iterator<Item = &'a [f64]>) -> (f64, f64) {
    let (lo, hi) = lines.flatten().filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-3 * lo.abs().max(hi.abs())).max(1e-6);
    (lo - pad, hi + pad)
}

fn draw_panel(area: &DrawingArea<SVGBackend, Shift>, title: &str, t: &[f64], lines: &[Line], windows: &[Window]) -> Result<(), HarnessError> {
    let t_end = t.last().copied().unwrap_or(1.0).max(t[0] + 1e-9);
    let (lo, hi) = y_range(lines.iter().map(|l| l.y));
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 16))
        .margin(8)
        .x_label_area_size(32)
        .y_label_area_size(64)
        .build_cartesian_2d(t[0]..t_end, lo..hi)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("t [s]").draw().map_err(plot_err)?;
    chart
        .draw_series(windows.iter().map(|w| Rectangle::new([(w.t_start, lo), (w.t_end, hi)], RGBColor(128, 128, 128).mix(0.2).filled())))
        .map_err(plot_err)?;
    for (k, line) in lines.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(t.iter().copied().zip(line.y.iter().copied()), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(line.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(plot_err)?;
    Ok(())
}

/// One SVG document with one panel per entry of `panels`, stacked vertically.
pub fn render(panels: &[(&str, Vec<Line>)], t: &[f64], windows: &[Window]) -> Result<String, HarnessError> {
    if t.is_empty() {
        return Err(StatsError::EmptyPhase { signal: "t".into(), phase: Phase::Normal }.into());
    }
    let mut svg = String::new();
    {
        let size = (SIZE.0, SIZE.1 * panels.len() as u32);
        let root = SVGBackend::with_string(&mut svg, size).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        for (area, (title, lines)) in root.split_evenly((panels.len(), 1)).iter().zip(panels) {
            draw_panel(area, title, t, lines, windows)?;
        }
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

pub const PLOT_FILES: [&str; 5] = ["duties.svg", "power.svg", "bus_voltage.svg", "currents.svg", "battery_voltages.svg"];

/// The five signal-group charts of one run; returns the written paths.
pub fn emit_plots(ts: &TimeSeries, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if ts.records.is_empty() {
        return Err(StatsError::EmptyPhase { signal: "t".into(), phase: Phase::Normal }.into());
    }
    let t: Vec<f64> = ts.records.iter().map(|r| r.t).collect();
    let windows: Vec<Window> = ts.provenance.windows.values().copied().collect();
    let legacy: Vec<Vec<f64>> = Channel::ALL.iter().map(|c| ts.records.iter().map(|r| r.attacked[c.index()]).collect()).collect();
    let routed: Vec<Vec<f64>> = Channel::ALL.iter().map(|c| ts.records.iter().map(|r| r.routed[c.index()]).collect()).collect();
    let sig = |name: &str| ts.signal(name);
    let (p, vbus, ibes, iev, vbes, vev) = (sig("p_pv"), sig("v_bus"), sig("i_bes"), sig("i_ev"), sig("v_bes"), sig("v_ev"));

    let duty_panels: Vec<(&str, Vec<Line>)> = Channel::ALL
        .iter()
        .map(|c| {
            let title = match c {
                Channel::Pv => "PV duty",
                Channel::Bes => "BES duty",
                Channel::Ev => "EV duty",
            };
            let i = c.index();
            (title, vec![Line { label: "legacy path".into(), y: &legacy[i] }, Line { label: "routed".into(), y: &routed[i] }])
        })
        .collect();
    let docs = [
        render(&duty_panels, &t, &windows)?,
        render(&[("PV power [W]", vec![Line { label: "p_pv".into(), y: &p }])], &t, &windows)?,
        render(&[("Bus voltage [V]", vec![Line { label: "v_bus".into(), y: &vbus }])], &t, &windows)?,
        render(&[("Currents [A]", vec![Line { label: "i_bes".into(), y: &ibes }, Line { label: "i_ev".into(), y: &iev }])], &t, &windows)?,
        render(&[("Battery voltages [V]", vec![Line { label: "v_bes".into(), y: &vbes }, Line { label: "v_ev".into(), y: &vev }])], &t, &windows)?,
    ];
    let mut paths = Vec::new();
    for (name, doc) in PLOT_FILES.iter().zip(docs) {
        let path = out_dir.join(name);
        write_atomic(&path, doc.as_bytes())?;
        paths.push(path);
    }
    Ok(paths)
}

/// Routed duties of several strategies on one attack, one panel per channel.
pub fn emit_compare_plot(runs: &[(&str, &TimeSeries)], path: &Path) -> Result<(), HarnessError> {
    let Some((_, first)) = runs.first() else {
        return Err(StatsError::EmptyPhase { signal: "t".into(), phase: Phase::Normal }.into());
    };
    let t: Vec<f64> = first.records.iter().map(|r| r.t).collect();
    let windows: Vec<Window> = first.provenance.windows.values().copied().collect();
    let duties: Vec<Vec<Vec<f64>>> = runs
        .iter()
        .map(|(_, ts)| Channel::ALL.iter().map(|c| ts.records.iter().map(|r| r.routed[c.index()]).collect()).collect())
        .collect();
    let panels: Vec<(&str, Vec<Line>)> = Channel::ALL
        .iter()
        .map(|c| {
            let title = match c {
                Channel::Pv => "PV routed duty",
                Channel::Bes => "BES routed duty",
                Channel::Ev => "EV routed duty",
            };
            let lines = runs.iter().zip(&duties).map(|((name, _), d)| Line { label: name.to_string(), y: &d[c.index()] }).collect();
            (title, lines)
        })
        .collect();
    write_atomic(path, render(&panels, &t, &windows)?.as_bytes())
}
