//! SVG figures from traces: cost moving average, grant allocation and
//! priority histograms.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Error, Result};

use super::metrics::moving_average;
use super::trace::TraceRecord;

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

const SIZE: (u32, u32) = (900, 500);

fn color(i: usize) -> RGBColor {
    const PALETTE: [RGBColor; 6] = [
        RGBColor(31, 119, 180),
        RGBColor(214, 39, 40),
        RGBColor(44, 160, 44),
        RGBColor(148, 103, 189),
        RGBColor(255, 127, 14),
        RGBColor(23, 190, 207),
    ];
    PALETTE[i % PALETTE.len()]
}

fn finite_max(values: impl Iterator<Item = f64>) -> f64 {
    values.filter(|v| v.is_finite()).fold(0.0, f64::max)
}

/// Moving-average cost of each labelled trace over rounds.
pub fn plot_cost(path: &Path, traces: &[(String, &[TraceRecord])], window: usize) -> Result<()> {
    let series: Vec<(String, Vec<f64>)> = traces
        .iter()
        .map(|(label, recs)| {
            let cost: Vec<f64> = recs.iter().map(|r| r.cost).collect();
            (label.clone(), moving_average(&cost, window))
        })
        .collect();
    let rounds = traces.iter().map(|(_, r)| r.len()).max().unwrap_or(1).max(1);
    let top = finite_max(series.iter().flat_map(|(_, s)| s.iter().copied())).max(1e-12) * 1.05;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(
            format!("Control cost, moving average over {window} rounds"),
            ("sans-serif", 20),
        )
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(0f64..rounds as f64, 0f64..top)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("round")
        .y_desc("cost")
        .draw()
        .map_err(plot_err)?;
    for (i, (label, s)) in series.iter().enumerate() {
        let c = color(i);
        chart
            .draw_series(LineSeries::new(
                s.iter()
                    .enumerate()
                    .filter(|(_, v)| v.is_finite())
                    .map(|(k, v)| (k as f64, *v)),
                c,
            ))
            .map_err(plot_err)?
            .label(label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Grants per agent, optionally restricted to rounds `≥ from_round`.
pub fn plot_allocation(path: &Path, records: &[TraceRecord], from_round: u64) -> Result<()> {
    let agents = records.first().map_or(0, |r| r.agents.len());
    let mut counts = vec![0u32; agents];
    for r in records.iter().filter(|r| r.round >= from_round) {
        for (i, a) in r.agents.iter().enumerate() {
            counts[i] += a.granted as u32;
        }
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64 * 1.05;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(
            format!("Control messages granted per agent (rounds ≥ {from_round})"),
            ("sans-serif", 20),
        )
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((0u32..agents.max(1) as u32).into_segmented(), 0f64..top)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("agent")
        .y_desc("grants")
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(
            Histogram::vertical(&chart)
                .style(color(0).filled())
                .margin(2)
                .data(counts.iter().enumerate().map(|(i, c)| (i as u32, *c as f64))),
        )
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Relative frequency of each quantised look-ahead priority, one panel per group.
///
/// `groups` maps a label to the agent ids it covers; an empty list puts all
/// agents in one panel.
pub fn plot_priority_histogram(path: &Path, records: &[TraceRecord], groups: &[(String, Vec<usize>)]) -> Result<()> {
    let agents = records.first().map_or(0, |r| r.agents.len());
    let groups: Vec<(String, Vec<usize>)> = if groups.is_empty() {
        vec![("all agents".into(), (0..agents).collect())]
    } else {
        groups.to_vec()
    };
    let levels = records
        .iter()
        .flat_map(|r| r.agents.iter().map(|a| a.q_h))
        .max()
        .unwrap_or(0)
        .max(15) as usize
        + 1;
    let height = 220 * groups.len() as u32;
    let root = SVGBackend::new(path, (SIZE.0, height.max(220))).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let panels = root.split_evenly((groups.len(), 1));
    for (g, ((label, ids), panel)) in groups.iter().zip(panels.iter()).enumerate() {
        let mut counts = vec![0usize; levels];
        for r in records {
            for &i in ids {
                counts[r.agents[i].q_h as usize] += 1;
            }
        }
        let total = counts.iter().sum::<usize>().max(1) as f64;
        let freq: Vec<f64> = counts.iter().map(|c| *c as f64 / total).collect();
        let mut chart = ChartBuilder::on(panel)
            .caption(format!("Priority levels: {label}"), ("sans-serif", 16))
            .margin(8)
            .x_label_area_size(30)
            .y_label_area_size(60)
            .build_cartesian_2d((0u32..levels as u32).into_segmented(), 0f64..1.0)
            .map_err(plot_err)?;
        chart.configure_mesh().y_desc("fraction").draw().map_err(plot_err)?;
        chart
            .draw_series(
                Histogram::vertical(&chart)
                    .style(color(g).filled())
                    .margin(2)
                    .data(freq.iter().enumerate().map(|(l, f)| (l as u32, *f))),
            )
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Writes `cost.svg`, `allocation.svg` and `priorities.svg` into `dir`.
pub fn plot_all(
    dir: &Path,
    traces: &[(String, &[TraceRecord])],
    window: usize,
    allocation_from: u64,
    groups: &[(String, Vec<usize>)],
) -> Result<Vec<PathBuf>> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Config("plot needs at least one trace".into()))?;
    std::fs::create_dir_all(dir)?;
    let cost = dir.join("cost.svg");
    let allocation = dir.join("allocation.svg");
    let priorities = dir.join("priorities.svg");
    plot_cost(&cost, traces, window)?;
    plot_allocation(&allocation, first.1, allocation_from)?;
    plot_priority_histogram(&priorities, first.1, groups)?;
    Ok(vec![cost, allocation, priorities])
}
