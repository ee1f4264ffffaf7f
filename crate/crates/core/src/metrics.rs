//! Quantities reported for a run: spacing extremes, fit statistics of
//! measured and estimated states, velocity heatmaps and windowed error bars.

use serde::Serialize;
use thiserror::Error;

use crate::simulation::{RunRecord, TickRecord};

/// How many extreme spacings are averaged into MinDistance / MaxDistance.
pub const EXTREME_COUNT: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("need at least {needed} vehicles, record has {have}")]
    TooFewVehicles { needed: usize, have: usize },
    #[error("reference series is constant")]
    DegenerateSeries,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series needs at least {0} samples")]
    TooShort(usize),
    #[error("window of {window} does not divide length {len}")]
    BadWindow { window: usize, len: usize },
    #[error("tick {0} is not in the record")]
    MissingTick(usize),
    #[error("record has no estimator log")]
    NoEstimates,
}

/// Mean of the three smallest and the three largest spacings.
pub fn extreme_means(spacings: &[f64]) -> Result<(f64, f64), MetricsError> {
    if spacings.len() < EXTREME_COUNT {
        return Err(MetricsError::TooFewVehicles {
            needed: EXTREME_COUNT + 1,
            have: spacings.len() + 1,
        });
    }
    let mut sorted = spacings.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = EXTREME_COUNT as f64;
    let low = sorted[..EXTREME_COUNT].iter().sum::<f64>() / k;
    let high = sorted[sorted.len() - EXTREME_COUNT..].iter().sum::<f64>() / k;
    Ok((low, high))
}

/// `(MinDistance, MaxDistance)` at `tick`, center to center.
pub fn min_max_distance(record: &RunRecord, tick: usize) -> Result<(f64, f64), MetricsError> {
    let entry = record.ticks.get(tick).ok_or(MetricsError::MissingTick(tick))?;
    let spacings: Vec<f64> = entry.spacings().collect();
    extreme_means(&spacings)
}

/// Bumper-to-bumper gaps: center spacing minus one vehicle length.
pub fn bumper_gaps(entry: &TickRecord, vehicle_length: f64) -> Vec<f64> {
    entry.spacings().map(|s| s - vehicle_length).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSummary {
    pub time: Vec<f64>,
    pub min_distance: Vec<f64>,
    pub max_distance: Vec<f64>,
}

impl DistanceSummary {
    pub fn from_record(record: &RunRecord) -> Result<Self, MetricsError> {
        let mut out = Self {
            time: Vec::with_capacity(record.len()),
            min_distance: Vec::with_capacity(record.len()),
            max_distance: Vec::with_capacity(record.len()),
        };
        for entry in &record.ticks {
            let spacings: Vec<f64> = entry.spacings().collect();
            let (lo, hi) = extreme_means(&spacings)?;
            out.time.push(entry.time);
            out.min_distance.push(lo);
            out.max_distance.push(hi);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Mean MinDistance over the trailing `window` ticks.
    pub fn final_min_distance(&self, window: usize) -> Option<f64> {
        trailing_mean(&self.min_distance, window)
    }

    /// MinDistance at `start` minus the lowest MinDistance within the
    /// following `window` ticks.
    pub fn min_distance_drop(&self, start: usize, window: usize) -> Option<f64> {
        let before = *self.min_distance.get(start)?;
        let end = start.saturating_add(window).saturating_add(1).min(self.min_distance.len());
        let lowest = self.min_distance[start..end]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        Some(before - lowest)
    }

    /// MinDistance at `start` minus the lowest MinDistance from `start` to
    /// the end of the record.
    pub fn post_perturbation_drop(&self, start: usize) -> Option<f64> {
        self.min_distance_drop(start, self.len())
    }

    /// See [`settling_tick`]; applied to the MinDistance series.
    pub fn settling_tick(&self, start: usize, band: f64, window: usize) -> Option<usize> {
        settling_tick(&self.min_distance, start, band, window)
    }
}

fn trailing_mean(series: &[f64], window: usize) -> Option<f64> {
    if series.is_empty() || window == 0 {
        return None;
    }
    let tail = &series[series.len().saturating_sub(window)..];
    Some(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// First tick at or after `start` from which `series` stays within `band`
/// of its trailing `window`-tick mean until the end.
pub fn settling_tick(series: &[f64], start: usize, band: f64, window: usize) -> Option<usize> {
    let reference = trailing_mean(series, window)?;
    if start >= series.len() {
        return None;
    }
    let last_outside = series[start..]
        .iter()
        .rposition(|x| (x - reference).abs() > band);
    match last_outside {
        None => Some(start),
        Some(k) if start + k + 1 < series.len() => Some(start + k + 1),
        Some(_) => None,
    }
}

/// Agreement of a series with a reference truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitStats {
    pub r_squared: f64,
    pub rmse: f64,
}

/// RMSE of `series` against `truth` and `R² = 1 − SS_res / SS_tot` with
/// `truth` as the reference.
pub fn fit_stats(series: &[f64], truth: &[f64]) -> Result<FitStats, MetricsError> {
    if series.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(series.len(), truth.len()));
    }
    if truth.len() < 2 {
        return Err(MetricsError::TooShort(2));
    }
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let (ss_res, ss_tot) = series
        .iter()
        .zip(truth)
        .fold((0.0, 0.0), |(res, tot), (a, b)| {
            (res + (a - b).powi(2), tot + (b - mean).powi(2))
        });
    if ss_tot == 0.0 {
        return Err(MetricsError::DegenerateSeries);
    }
    Ok(FitStats {
        r_squared: 1.0 - ss_res / ss_tot,
        rmse: (ss_res / n).sqrt(),
    })
}

/// Measured vs estimated agreement with the truth for one state component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorReduction {
    pub measured: FitStats,
    pub estimated: FitStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimationFit {
    pub position: ErrorReduction,
    pub velocity: ErrorReduction,
}

/// Pools every tracked pair and tick of a predictive run and compares the
/// fused measurement and the filter estimate with the true relative state
/// at the measurement's sample tick.
pub fn estimation_fit(record: &RunRecord) -> Result<EstimationFit, MetricsError> {
    let mut cols: [Vec<f64>; 6] = Default::default();
    for entry in &record.ticks {
        let Some(pairs) = &entry.pairs else {
            continue;
        };
        for (k, log) in pairs.iter().enumerate() {
            let truth = record
                .ticks
                .get(log.sample_tick)
                .ok_or(MetricsError::MissingTick(log.sample_tick))?
                .relative_state(k);
            let values = [
                truth.rel_position,
                log.measured.position,
                log.estimated.position,
                truth.rel_velocity,
                log.measured.velocity,
                log.estimated.velocity,
            ];
            for (col, v) in cols.iter_mut().zip(values) {
                col.push(v);
            }
        }
    }
    if cols[0].is_empty() {
        return Err(MetricsError::NoEstimates);
    }
    let [tp, mp, ep, tv, mv, ev] = &cols;
    Ok(EstimationFit {
        position: ErrorReduction {
            measured: fit_stats(mp, tp)?,
            estimated: fit_stats(ep, tp)?,
        },
        velocity: ErrorReduction {
            measured: fit_stats(mv, tv)?,
            estimated: fit_stats(ev, tv)?,
        },
    })
}

/// True velocities sampled every `stride` ticks: one row per vehicle, one
/// column per sample.
pub fn heatmap_matrix(record: &RunRecord, stride: usize) -> Result<Vec<Vec<f64>>, MetricsError> {
    if stride == 0 || !record.len().is_multiple_of(stride) {
        return Err(MetricsError::BadWindow {
            window: stride,
            len: record.len(),
        });
    }
    let samples: Vec<&TickRecord> = record.ticks.iter().step_by(stride).collect();
    Ok((0..record.n_vehicles())
        .map(|i| samples.iter().map(|t| t.vehicles[i].velocity).collect())
        .collect())
}

/// Per-window mean and RMSE about that mean.
pub fn error_bar(series: &[f64], window: usize) -> Result<Vec<(f64, f64)>, MetricsError> {
    if window == 0 || !series.len().is_multiple_of(window) {
        return Err(MetricsError::BadWindow {
            window,
            len: series.len(),
        });
    }
    Ok(series
        .chunks(window)
        .map(|chunk| {
            let n = chunk.len() as f64;
            let mean = chunk.iter().sum::<f64>() / n;
            let var = chunk.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .collect())
}

/// RMS deviation of the fleet velocities about their mean at `tick`.
pub fn velocity_spread(record: &RunRecord, tick: usize) -> Result<f64, MetricsError> {
    let entry = record.ticks.get(tick).ok_or(MetricsError::MissingTick(tick))?;
    let n = entry.vehicles.len() as f64;
    let mean = entry.vehicles.iter().map(|v| v.velocity).sum::<f64>() / n;
    let var = entry
        .vehicles
        .iter()
        .map(|v| (v.velocity - mean).powi(2))
        .sum::<f64>()
        / n;
    Ok(var.sqrt())
}

/// Mean fleet velocity at `tick`.
pub fn mean_velocity(record: &RunRecord, tick: usize) -> Result<f64, MetricsError> {
    let entry = record.ticks.get(tick).ok_or(MetricsError::MissingTick(tick))?;
    Ok(entry.vehicles.iter().map(|v| v.velocity).sum::<f64>() / entry.vehicles.len() as f64)
}
