//! Static SVG figures: mean iterations and mean RMSE against the time step,
//! and the channel-norm track of the first realization.

use std::path::Path;

use anyhow::{anyhow, Result};
use mtsbl::metrics::AggregateStep;
use mtsbl::tracker::FilterMode;
use plotters::prelude::*;

use crate::runner::RealizationRun;

pub const ITERATIONS_FILE: &str = "fig_iterations.svg";
pub const RMSE_FILE: &str = "fig_rmse.svg";
pub const TRACK_FILE: &str = "fig_track.svg";

const SIZE: (u32, u32) = (720, 440);

fn colour(mode: FilterMode) -> RGBColor {
    match mode {
        FilterMode::DynamicFiltering => RGBColor(31, 119, 180),
        FilterMode::Ablation => RGBColor(214, 39, 40),
    }
}

struct Series {
    label: String,
    colour: RGBColor,
    points: Vec<(f64, f64)>,
}

fn line_chart(path: &Path, title: &str, y_label: &str, series: &[Series]) -> Result<()> {
    let err = |e: DrawingAreaErrorKind<_>| anyhow!("cannot draw {}: {e:?}", path.display());
    let (x_max, mut y_lo, mut y_hi) = series.iter().flat_map(|s| &s.points).fold(
        (1.0f64, f64::INFINITY, f64::NEG_INFINITY),
        |(x, lo, hi), &(px, py)| (x.max(px), lo.min(py), hi.max(py)),
    );
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (0.0, 1.0);
    }
    let pad = ((y_hi - y_lo) * 0.08).max(1e-9);
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..x_max, (y_lo - pad).min(0.0)..y_hi + pad)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("time step t")
        .y_desc(y_label)
        .draw()
        .map_err(err)?;
    for s in series {
        let c = s.colour;
        chart
            .draw_series(LineSeries::new(s.points.iter().copied(), c.stroke_width(2)))
            .map_err(err)?
            .label(s.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], c.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(err)?;
    root.present().map_err(err)?;
    Ok(())
}

fn aggregate_series(
    aggregates: &[(FilterMode, Vec<AggregateStep>)],
    pick: fn(&AggregateStep) -> f64,
) -> Vec<Series> {
    aggregates
        .iter()
        .map(|(mode, steps)| Series {
            label: mode.label().to_string(),
            colour: colour(*mode),
            points: steps.iter().map(|s| (s.t as f64, pick(s))).collect(),
        })
        .collect()
}

pub fn write_all(
    out: &Path,
    aggregates: &[(FilterMode, Vec<AggregateStep>)],
    first: &RealizationRun,
) -> Result<()> {
    line_chart(
        &out.join(ITERATIONS_FILE),
        "EM iterations per time step",
        "mean iterations",
        &aggregate_series(aggregates, |s| s.iterations.mean),
    )?;
    line_chart(
        &out.join(RMSE_FILE),
        "RMSE of the channel norm",
        "mean RMSE",
        &aggregate_series(aggregates, |s| s.rmse_norm.mean),
    )?;

    let mut track = vec![Series {
        label: "true".into(),
        colour: RGBColor(40, 40, 40),
        points: first.modes[0]
            .norms
            .iter()
            .enumerate()
            .map(|(t, n)| (t as f64, n.0))
            .collect(),
    }];
    for mode in &first.modes {
        track.push(Series {
            label: format!("estimate ({})", mode.mode.label()),
            colour: colour(mode.mode),
            points: mode
                .norms
                .iter()
                .enumerate()
                .map(|(t, n)| (t as f64, n.1))
                .collect(),
        });
    }
    line_chart(
        &out.join(TRACK_FILE),
        &format!(
            "Channel norm, realization {} (seed {})",
            first.index, first.seed
        ),
        "mean over subcarriers of ||h[n]||",
        &track,
    )
}
