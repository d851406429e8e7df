use std::path::Path;

use plotters::prelude::*;

use super::{ReplicaReport, StudyReport};
use crate::bayesopt::SurrogateKind;

const FLOOR: f64 = 1e-6;

fn colour(kind: SurrogateKind) -> RGBColor {
    match kind {
        SurrogateKind::Ar1 => RGBColor(31, 119, 180),
        SurrogateKind::Nargp => RGBColor(255, 127, 14),
        SurrogateKind::SingleFidelity => RGBColor(44, 160, 44),
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Mean regret per method on a log axis, shaded between min and max.
pub(super) fn regret_curves(report: &StudyReport, path: &Path) -> Result<(), String> {
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let n = report.budget();
    let lo = report
        .aggregates
        .iter()
        .flat_map(|a| a.min.iter())
        .fold(f64::INFINITY, |m, &v| m.min(v.max(FLOOR)));
    let hi = report
        .aggregates
        .iter()
        .flat_map(|a| a.max.iter())
        .fold(FLOOR, |m, &v| m.max(v));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo / 2.0, hi * 2.0) } else { (FLOOR, 1.0) };
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("simple regret, {}", report.id()), ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(64)
        .build_cartesian_2d(0f64..n.max(1) as f64, (lo..hi).log_scale())
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("query")
        .y_desc("regret")
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(err)?;
    for a in &report.aggregates {
        let c = colour(a.method);
        let mut band: Vec<(f64, f64)> = a.max.iter().enumerate().map(|(i, &v)| (i as f64, v.max(FLOOR))).collect();
        band.extend(a.min.iter().enumerate().rev().map(|(i, &v)| (i as f64, v.max(FLOOR))));
        chart
            .draw_series(std::iter::once(Polygon::new(band, c.mix(0.15).filled())))
            .map_err(err)?;
        chart
            .draw_series(LineSeries::new(
                a.mean.iter().enumerate().map(|(i, &v)| (i as f64, v.max(FLOOR))),
                c.stroke_width(2),
            ))
            .map_err(err)?
            .label(a.method.label())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], c.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.9))
        .draw()
        .map_err(err)?;
    root.present().map_err(err)
}

/// True cost per query with the two baseline costs as horizontal lines.
pub(super) fn replica_costs(report: &ReplicaReport, path: &Path) -> Result<(), String> {
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let n = report.queries.len();
    let top = report
        .queries
        .iter()
        .map(|q| q.true_cost)
        .chain([report.manual.true_cost, report.best_from_simulation.true_cost])
        .fold(0.0, f64::max)
        * 1.1;
    let mut chart = ChartBuilder::on(&root)
        .caption("replica: true cost per query", ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(0.5f64..n as f64 + 0.5, 0f64..top.max(1e-3))
        .map_err(err)?;
    chart.configure_mesh().x_desc("query").y_desc("cost").draw().map_err(err)?;
    let blue = RGBColor(31, 119, 180);
    chart
        .draw_series(
            report
                .queries
                .iter()
                .map(|q| Circle::new((q.iteration as f64, q.true_cost), 4, blue.filled())),
        )
        .map_err(err)?
        .label("query")
        .legend(move |(x, y)| Circle::new((x + 8, y), 4, blue.filled()));
    for (name, cost, c) in [
        ("manual", report.manual.true_cost, RGBColor(70, 70, 200)),
        ("best from simulation", report.best_from_simulation.true_cost, RGBColor(255, 127, 14)),
    ] {
        chart
            .draw_series(DashedLineSeries::new(
                [(0.5, cost), (n as f64 + 0.5, cost)],
                6,
                4,
                c.stroke_width(2),
            ))
            .map_err(err)?
            .label(name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], c.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.9))
        .draw()
        .map_err(err)?;
    root.present().map_err(err)
}

/// Simulated against true cost for every query, with the identity line.
pub(super) fn replica_scatter(report: &ReplicaReport, path: &Path) -> Result<(), String> {
    let root = SVGBackend::new(path, (520, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let top = report
        .queries
        .iter()
        .flat_map(|q| [q.true_cost, q.simulated_cost])
        .fold(0.0, f64::max)
        * 1.1;
    let top = top.max(1e-3);
    let mut chart = ChartBuilder::on(&root)
        .caption("replica: simulated vs true cost", ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(0f64..top, 0f64..top)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("simulated cost")
        .y_desc("true cost")
        .draw()
        .map_err(err)?;
    chart
        .draw_series(LineSeries::new([(0.0, 0.0), (top, top)], BLACK.mix(0.4)))
        .map_err(err)?;
    chart
        .draw_series(report.queries.iter().map(|q| {
            let shade = 0.25 + 0.75 * q.iteration as f64 / report.queries.len().max(1) as f64;
            Circle::new((q.simulated_cost, q.true_cost), 4, RGBColor(31, 119, 180).mix(shade).filled())
        }))
        .map_err(err)?;
    root.present().map_err(err)
}
