//! SVG figures for evaluation results.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{SampleResult, UncertaintyBin};

const SIZE: (u32, u32) = (640, 480);

fn plot_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::format(path, format!("cannot render figure: {e}"))
}

/// One accuracy-vs-threshold line.
pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Accuracy as a function of the tolerated error.
pub fn accuracy_curve(path: &Path, curves: &[Curve]) -> Result<()> {
    let x_max = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.0))
        .fold(1.0, f64::max);
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Accuracy vs tolerated error", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..x_max, 0.0..1.0)
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("maximum error (m)")
        .y_desc("accuracy")
        .draw()
        .map_err(|e| plot_err(path, e))?;
    for (i, c) in curves.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(c.points.iter().copied(), color.stroke_width(2)))
            .map_err(|e| plot_err(path, e))?
            .label(c.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerRight)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))
}

/// Top-1 error against the best top-K candidate error, one dot per sample.
pub fn topk_scatter(path: &Path, rows: &[SampleResult], argmax: bool) -> Result<()> {
    let points: Vec<(f64, f64, bool)> = rows
        .iter()
        .filter_map(|r| {
            let cands = if argmax { &r.top5_argmax } else { &r.top5_mean };
            let best = cands.iter().map(|c| c.distance(r.truth)).reduce(f64::min)?;
            Some((best, r.error(), r.los))
        })
        .collect();
    let lim = points.iter().map(|p| p.0.max(p.1)).fold(1.0, f64::max) * 1.05;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let title = if argmax { "Top-1 vs top-5 (argmax)" } else { "Top-1 vs top-5 (mean)" };
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..lim, 0.0..lim)
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("closest of top-5 error (m)")
        .y_desc("top-1 error (m)")
        .draw()
        .map_err(|e| plot_err(path, e))?;
    chart
        .draw_series(LineSeries::new([(0.0, 0.0), (lim, lim)], BLACK.mix(0.4)))
        .map_err(|e| plot_err(path, e))?;
    for (los, color, label) in [(true, BLUE, "LOS"), (false, RED, "NLOS")] {
        chart
            .draw_series(
                points
                    .iter()
                    .filter(|p| p.2 == los)
                    .map(|p| Circle::new((p.0, p.1), 2, color.mix(0.6).filled())),
            )
            .map_err(|e| plot_err(path, e))?
            .label(label)
            .legend(move |(x, y)| Circle::new((x + 8, y), 3, color.filled()));
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperLeft)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))
}

/// RMSE per uncertainty bin.
pub fn uncertainty_bars(path: &Path, bins: &[UncertaintyBin]) -> Result<()> {
    let y_max = bins.iter().map(|b| b.rmse).fold(1.0, f64::max) * 1.1;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("RMSE per uncertainty bin (NLOS)", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..bins.len() as f64, 0.0..y_max)
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("uncertainty bin (low to high)")
        .y_desc("RMSE (m)")
        .disable_x_mesh()
        .draw()
        .map_err(|e| plot_err(path, e))?;
    chart
        .draw_series(bins.iter().enumerate().map(|(i, b)| {
            let x = i as f64;
            Rectangle::new([(x + 0.1, 0.0), (x + 0.9, b.rmse)], BLUE.mix(0.7).filled())
        }))
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    #[test]
    fn figures_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let curve = Curve {
            label: "all".into(),
            points: vec![(1.0, 0.1), (10.0, 0.6), (50.0, 0.95)],
        };
        let p = dir.path().join("acc.svg");
        accuracy_curve(&p, &[curve]).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().contains("<svg"));
        let row = SampleResult {
            map_id: "m".into(),
            bs: 0,
            ue: 0,
            los: false,
            truth: Point::new(0.0, 0.0),
            pred: Point::new(3.0, 4.0),
            uncertainty: Some(3),
            top5_mean: vec![Point::new(1.0, 0.0)],
            top5_argmax: vec![Point::new(3.0, 4.0)],
        };
        let p = dir.path().join("scatter.svg");
        topk_scatter(&p, &[row], false).unwrap();
        assert!(p.exists());
        let bins = vec![
            UncertaintyBin {
                n: 2,
                rmse: 3.0,
                min_uncertainty: 1,
                max_uncertainty: 2,
            };
            10
        ];
        let p = dir.path().join("bins.svg");
        uncertainty_bars(&p, &bins).unwrap();
        assert!(p.exists());
    }
}
