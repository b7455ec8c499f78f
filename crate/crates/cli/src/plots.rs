use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use qtdlab::report::{curves_from_rows, read_csv, FixedPointRow, ImprovementRow};
use qtdlab::{ImprovementCurve, SweepSummary};

use crate::commands::{emit, read_sweep_file};
use crate::svg::{render, Figure, Series};
use crate::{Failure, FigureKind, PlotArgs};

fn label(agent: impl std::fmt::Display, m: usize) -> String {
    if m == 0 {
        agent.to_string()
    } else {
        format!("{agent}({m})")
    }
}

/// One series per sweep: mean MSE against learning rate at `checkpoint`.
pub fn mse_vs_lr(sweeps: &[SweepSummary], checkpoint: Option<usize>) -> Result<Figure, Failure> {
    let c = match checkpoint {
        Some(c) => c,
        None => sweeps
            .iter()
            .filter_map(|s| s.checkpoints().last().copied())
            .max()
            .ok_or_else(|| anyhow!("sweep files hold no rows"))?,
    };
    let envs: Vec<&str> = sweeps.iter().filter_map(|s| s.rows.first()).map(|r| r.env_id.as_str()).collect();
    let multi_env = envs.windows(2).any(|w| w[0] != w[1]);
    let mut series = Vec::new();
    for s in sweeps {
        let rows = s.at_checkpoint(c);
        let first = rows.first().ok_or_else(|| anyhow!("checkpoint {c} missing from a sweep file"))?;
        let mut name = label(first.agent, first.m);
        if multi_env {
            name = format!("{} {name}", first.env_id);
        }
        let points = rows.iter().map(|r| (r.lr, r.mse_mean)).collect();
        let band = rows.iter().map(|r| (r.lr, r.mse_mean - 2.0 * r.mse_stderr, r.mse_mean + 2.0 * r.mse_stderr)).collect();
        series.push(Series::new(name, points).with_band(band));
    }
    let title = if multi_env { format!("MSE after {c} updates") } else { format!("{} after {c} updates", envs.first().unwrap_or(&"")) };
    Ok(Figure {
        title,
        x_label: "learning rate".into(),
        y_label: "mean squared error".into(),
        log_x: true,
        log_y: true,
        series,
        reference_y: None,
    })
}

fn curve_label(c: &ImprovementCurve) -> String {
    format!("{} {}/{}", c.env_id, label(c.agent_a, c.m_a), label(c.agent_b, c.m_b))
}

pub fn improvement_vs_updates(curves: &[ImprovementCurve]) -> Figure {
    let series = curves
        .iter()
        .map(|c| {
            let points = c.points.iter().map(|p| (p.checkpoint as f64, p.ratio)).collect();
            let band = c
                .points
                .iter()
                .map(|p| {
                    let e = 2.0 * p.ratio_stderr();
                    (p.checkpoint as f64, p.ratio - e, p.ratio + e)
                })
                .collect();
            Series::new(curve_label(c), points).with_band(band)
        })
        .collect();
    Figure {
        title: "Optimal MSE ratio".into(),
        x_label: "updates".into(),
        y_label: "MSE ratio".into(),
        log_x: true,
        log_y: true,
        series,
        reference_y: Some(1.0),
    }
}

pub fn optimal_lr_vs_updates(curves: &[ImprovementCurve]) -> Figure {
    let mut series = Vec::new();
    for c in curves {
        let xs: Vec<f64> = c.points.iter().map(|p| p.checkpoint as f64).collect();
        let a = c.points.iter().map(|p| p.optimal_lr_a);
        let b = c.points.iter().map(|p| p.optimal_lr_b);
        let band_a = c.points.iter().zip(&xs).map(|(p, &x)| (x, p.lr_band_a.0, p.lr_band_a.1)).collect();
        let band_b = c.points.iter().zip(&xs).map(|(p, &x)| (x, p.lr_band_b.0, p.lr_band_b.1)).collect();
        series.push(Series::new(format!("{} {}", c.env_id, label(c.agent_a, c.m_a)), xs.iter().copied().zip(a).collect()).with_band(band_a));
        series.push(Series::new(format!("{} {}", c.env_id, label(c.agent_b, c.m_b)), xs.iter().copied().zip(b).collect()).with_band(band_b));
    }
    Figure {
        title: "Optimal learning rate".into(),
        x_label: "updates".into(),
        y_label: "learning rate".into(),
        log_x: true,
        log_y: true,
        series,
        reference_y: None,
    }
}

pub fn error_vs_m(rows: &[FixedPointRow]) -> Figure {
    let mut envs: Vec<&str> = Vec::new();
    for r in rows {
        if !envs.contains(&r.env_id.as_str()) {
            envs.push(&r.env_id);
        }
    }
    let mut series = Vec::new();
    for env in envs {
        let mut sel: Vec<&FixedPointRow> = rows.iter().filter(|r| r.env_id == env).collect();
        sel.sort_by_key(|r| r.m);
        series.push(Series::new(env, sel.iter().map(|r| (r.m as f64, r.value_error_sup)).collect()));
        for (name, get) in [("bounded-support bound", (|r: &FixedPointRow| r.bound_41) as fn(&FixedPointRow) -> f64), ("sub-Gaussian bound", |r| r.bound_42)] {
            let pts: Vec<(f64, f64)> = sel.iter().map(|r| (r.m as f64, get(r))).filter(|p| p.1.is_finite()).collect();
            if !pts.is_empty() {
                series.push(Series::new(format!("{env} {name}"), pts).dashed());
            }
        }
    }
    Figure {
        title: "Fixed-point value error".into(),
        x_label: "number of quantiles m".into(),
        y_label: "sup-norm value error".into(),
        log_x: true,
        log_y: true,
        series,
        reference_y: None,
    }
}

fn read_rows<R: qtdlab::report::CsvRecord>(path: &Path) -> Result<Vec<R>, Failure> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_csv(f).with_context(|| format!("reading {}", path.display()))?)
}

fn read_curves(paths: &[std::path::PathBuf]) -> Result<Vec<ImprovementCurve>, Failure> {
    let mut curves = Vec::new();
    for p in paths {
        curves.extend(curves_from_rows(read_rows::<ImprovementRow>(p)?));
    }
    Ok(curves)
}

pub fn build(a: &PlotArgs) -> Result<Figure, Failure> {
    let mut fig = match a.kind {
        FigureKind::MseVsLr => {
            let sweeps = a.inputs.iter().map(|p| read_sweep_file(p)).collect::<Result<Vec<_>, _>>()?;
            mse_vs_lr(&sweeps, a.checkpoint)?
        }
        FigureKind::ImprovementVsUpdates => improvement_vs_updates(&read_curves(&a.inputs)?),
        FigureKind::OptimalLrVsUpdates => optimal_lr_vs_updates(&read_curves(&a.inputs)?),
        FigureKind::ErrorVsM => {
            let mut rows = Vec::new();
            for p in &a.inputs {
                rows.extend(read_rows::<FixedPointRow>(p)?);
            }
            error_vs_m(&rows)
        }
    };
    if let Some(t) = &a.title {
        fig.title = t.clone();
    }
    if let Some(l) = &a.x_label {
        fig.x_label = l.clone();
    }
    if let Some(l) = &a.y_label {
        fig.y_label = l.clone();
    }
    fig.log_x &= !a.linear_x;
    fig.log_y &= !a.linear_y;
    Ok(fig)
}

pub fn plot(a: &PlotArgs) -> Result<(), Failure> {
    let fig = build(a)?;
    emit(Some(&a.out), render(&fig).as_bytes())
}

/// Renders `fig` into `path`.
pub fn write_svg(path: &Path, fig: &Figure) -> Result<(), Failure> {
    emit(Some(path), render(fig).as_bytes())
}
