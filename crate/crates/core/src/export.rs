//! File formats. Column sets are fixed:
//!
//! | file            | columns |
//! |-----------------|---------|
//! | run CSV         | `tick,time_s,index,p_true,v_true,a_applied`, plus `sample_tick,measured_rel_p,measured_rel_v,estimated_rel_p,estimated_rel_v` for the predictive controller |
//! | distance CSV    | `tick,time_s,min_distance,max_distance` |
//! | fit CSV         | `case_id,quantity,r2_measured,r2_estimated,rmse_measured,rmse_estimated` |
//! | heatmap CSV     | `index` then one column per sampled time, headed by the time in seconds |
//! | error-bar CSV   | `window,start_time_s,mean,rmse` |
//!
//! `index` is the 1-based vehicle index. Pair columns sit on the row of the
//! rear vehicle of the pair and are empty for the lead. Floats use the
//! shortest representation that round-trips.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::metrics::{error_bar, heatmap_matrix, DistanceSummary, EstimationFit, MetricsError};
use crate::simulation::RunRecord;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Serialize)]
struct RunRow {
    tick: usize,
    time_s: f64,
    index: usize,
    p_true: f64,
    v_true: f64,
    a_applied: f64,
}

#[derive(Serialize)]
struct PredictiveRunRow {
    tick: usize,
    time_s: f64,
    index: usize,
    p_true: f64,
    v_true: f64,
    a_applied: f64,
    sample_tick: Option<usize>,
    measured_rel_p: Option<f64>,
    measured_rel_v: Option<f64>,
    estimated_rel_p: Option<f64>,
    estimated_rel_v: Option<f64>,
}

fn for_each_row<F>(record: &RunRecord, mut emit: F) -> Result<(), ExportError>
where
    F: FnMut(RunRow, Option<PredictiveRunRow>) -> Result<(), ExportError>,
{
    for entry in &record.ticks {
        for (i, v) in entry.vehicles.iter().enumerate() {
            let row = RunRow {
                tick: entry.tick,
                time_s: entry.time,
                index: i + 1,
                p_true: v.position,
                v_true: v.velocity,
                a_applied: v.acceleration,
            };
            let predictive = entry.pairs.as_ref().map(|pairs| {
                let log = i.checked_sub(1).map(|k| pairs[k]);
                PredictiveRunRow {
                    tick: row.tick,
                    time_s: row.time_s,
                    index: row.index,
                    p_true: row.p_true,
                    v_true: row.v_true,
                    a_applied: row.a_applied,
                    sample_tick: log.map(|l| l.sample_tick),
                    measured_rel_p: log.map(|l| l.measured.position),
                    measured_rel_v: log.map(|l| l.measured.velocity),
                    estimated_rel_p: log.map(|l| l.estimated.position),
                    estimated_rel_v: log.map(|l| l.estimated.velocity),
                }
            });
            emit(row, predictive)?;
        }
    }
    Ok(())
}

pub fn write_run_csv<W: Write>(record: &RunRecord, out: W) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(out);
    for_each_row(record, |row, predictive| {
        match predictive {
            Some(p) => w.serialize(p)?,
            None => w.serialize(row)?,
        }
        Ok(())
    })?;
    w.flush()?;
    Ok(())
}

/// Same rows as [`write_run_csv`] as one JSON array.
pub fn write_run_json<W: Write>(record: &RunRecord, mut out: W) -> Result<(), ExportError> {
    out.write_all(b"[")?;
    let mut first = true;
    for_each_row(record, |row, predictive| {
        if !first {
            out.write_all(b",\n")?;
        }
        first = false;
        match predictive {
            Some(p) => serde_json::to_writer(&mut out, &p)?,
            None => serde_json::to_writer(&mut out, &row)?,
        }
        Ok(())
    })?;
    out.write_all(b"]\n")?;
    Ok(())
}

pub fn write_distance_csv<W: Write>(summary: &DistanceSummary, out: W) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tick", "time_s", "min_distance", "max_distance"])?;
    for (tick, ((t, lo), hi)) in summary
        .time
        .iter()
        .zip(&summary.min_distance)
        .zip(&summary.max_distance)
        .enumerate()
    {
        w.serialize((tick, t, lo, hi))?;
    }
    w.flush()?;
    Ok(())
}

/// One row per relative-state component.
pub fn write_fit_csv<W: Write>(case_id: u8, fit: &EstimationFit, out: W) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "case_id",
        "quantity",
        "r2_measured",
        "r2_estimated",
        "rmse_measured",
        "rmse_estimated",
    ])?;
    for (quantity, r) in [("rel_position", &fit.position), ("rel_velocity", &fit.velocity)] {
        w.serialize((
            case_id,
            quantity,
            r.measured.r_squared,
            r.estimated.r_squared,
            r.measured.rmse,
            r.estimated.rmse,
        ))?;
    }
    w.flush()?;
    Ok(())
}

/// Velocity heatmap sampled every `stride` ticks. Trailing ticks that do
/// not fill a stride are dropped.
pub fn write_heatmap_csv<W: Write>(record: &RunRecord, stride: usize, out: W) -> Result<(), ExportError> {
    let whole = record.len() - record.len() % stride.max(1);
    let trimmed = RunRecord {
        config: record.config.clone(),
        ticks: record.ticks[..whole].to_vec(),
        final_state: record.final_state.clone(),
        collision: record.collision,
    };
    let matrix = heatmap_matrix(&trimmed, stride)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["index".to_string()];
    header.extend(
        trimmed
            .ticks
            .iter()
            .step_by(stride)
            .map(|t| format!("{:.3}", t.time)),
    );
    w.write_record(&header)?;
    for (i, row) in matrix.iter().enumerate() {
        let mut fields = vec![(i + 1).to_string()];
        fields.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// Windowed mean and RMSE of `series`; a trailing partial window is dropped.
pub fn write_error_bar_csv<W: Write>(
    series: &[f64],
    time: &[f64],
    window: usize,
    out: W,
) -> Result<(), ExportError> {
    let whole = series.len() - series.len() % window.max(1);
    let bars = error_bar(&series[..whole], window)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window", "start_time_s", "mean", "rmse"])?;
    for (k, (mean, rmse)) in bars.iter().enumerate() {
        w.serialize((k, time[k * window], mean, rmse))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write, T: Serialize>(value: &T, mut out: W) -> Result<(), ExportError> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}
