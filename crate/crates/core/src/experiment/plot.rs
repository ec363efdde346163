//! One SVG line chart per metric: every run as a thin line, the mean across
//! runs as a thick line and a mean ± standard-error band.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::summary::{MetricRow, Stats, read_csv};
use crate::error::{Error, Result};
use crate::metrics::MetricRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub iteration: u64,
    pub mean: f64,
    pub se: f64,
    /// Runs contributing at this iteration.
    pub n: usize,
}

/// Mean and standard error across runs at every logged iteration.
pub fn band(rows: &[MetricRow], field: usize) -> Vec<BandPoint> {
    let mut by_iter: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by_iter.entry(r.iteration).or_default().push(r.record.values()[field]);
    }
    by_iter
        .into_iter()
        .map(|(iteration, vals)| {
            let st = Stats::of(&vals).expect("non-empty group");
            BandPoint {
                iteration,
                mean: st.mean,
                se: st.standard_error(vals.len()),
                n: vals.len(),
            }
        })
        .collect()
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

fn render_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Render(e.to_string())
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 0.5 } else { 0.1 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

fn draw_metric(rows: &[MetricRow], field: usize, path: &Path) -> Result<()> {
    let name = MetricRecord::FIELDS[field];
    let points = band(rows, field);
    let mut runs: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        runs.entry(r.run)
            .or_default()
            .push((r.iteration as f64, r.record.values()[field]));
    }
    for line in runs.values_mut() {
        line.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    let finite = |v: f64| if v.is_finite() { Some(v) } else { None };
    let ys = rows.iter().filter_map(|r| finite(r.record.values()[field])).chain(
        points
            .iter()
            .flat_map(|p| [p.mean - p.se, p.mean + p.se])
            .filter_map(finite),
    );
    let (ymin, ymax) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (ymin, ymax) = if ymin.is_finite() {
        padded(ymin, ymax)
    } else {
        (-0.5, 0.5)
    };
    let x0 = points.first().map_or(0.0, |p| p.iteration as f64);
    let x1 = points.last().map_or(0.0, |p| p.iteration as f64);
    let (xmin, xmax) = if x1 > x0 { (x0, x1) } else { (x0 - 0.5, x0 + 0.5) };

    let root = SVGBackend::new(path, (720, 440)).into_drawing_area();
    root.fill(&WHITE).map_err(render_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(name, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(xmin..xmax, ymin..ymax)
        .map_err(render_err)?;
    chart
        .configure_mesh()
        .x_desc("iteration")
        .y_desc(name)
        .draw()
        .map_err(render_err)?;

    let upper = points.iter().map(|p| (p.iteration as f64, p.mean + p.se));
    let lower = points.iter().rev().map(|p| (p.iteration as f64, p.mean - p.se));
    let polygon: Vec<(f64, f64)> = upper.chain(lower).collect();
    chart
        .draw_series(std::iter::once(Polygon::new(polygon, BLACK.mix(0.15))))
        .map_err(render_err)?;
    for (i, (run, line)) in runs.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(line.iter().copied(), color.mix(0.6).stroke_width(1)))
            .map_err(render_err)?
            .label(format!("run {run}"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    let mean: Vec<(f64, f64)> = points.iter().map(|p| (p.iteration as f64, p.mean)).collect();
    chart
        .draw_series(LineSeries::new(mean.iter().copied(), BLACK.stroke_width(2)))
        .map_err(render_err)?
        .label("mean ± SE")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLACK.stroke_width(2)));
    if mean.len() == 1 {
        chart
            .draw_series(mean.iter().map(|&p| Circle::new(p, 4, BLACK.filled())))
            .map_err(render_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(render_err)?;
    root.present().map_err(render_err)
}

/// Writes `<metric>.svg` for every metric column into `out_dir`.
pub fn plot_rows(rows: &[MetricRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::Logic("metric CSV has no data rows".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    (0..MetricRecord::FIELDS.len())
        .map(|field| {
            let path = out_dir.join(format!("{}.svg", MetricRecord::FIELDS[field]));
            draw_metric(rows, field, &path)?;
            Ok(path)
        })
        .collect()
}

/// Reads a metric CSV and plots it into `out_dir`.
pub fn plot_metrics(csv: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    plot_rows(&read_csv(csv)?, out_dir)
}
