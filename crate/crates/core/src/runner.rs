//! Runs cases and scenarios and writes their artifact directories.
//!
//! Each directory holds `config.toml`, `run.csv` (or `run.json`),
//! `distance.csv`, `heatmap.csv`, `error_bar.csv`, `summary.json` and, for
//! the predictive controller, `fit.csv`. A matrix run adds
//! `comparison.csv` next to the sixteen `case_NN` directories. Everything
//! except `runtime_s` in the summaries is a pure function of the inputs.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;
use toml::Table;

use crate::cases::{CaseSpec, UnknownCase};
use crate::export::{self, ExportError};
use crate::metrics::{self, DistanceSummary, EstimationFit};
use crate::model::{validate_config, ConfigError, ScenarioConfig, ValidatedConfig};
use crate::scenario::{self, ScenarioError};
use crate::simulation::{run_scenario, Collision, RunRecord, SimError};

pub const SCHEMA_VERSION: u32 = 1;
/// Heatmap sampling interval.
pub const HEATMAP_STRIDE_S: f64 = 1.0;
/// Error-bar window.
pub const ERROR_BAR_WINDOW_S: f64 = 50.0;
/// Settling band around the trailing mean, and the trailing-mean window.
pub const SETTLING_BAND: f64 = 0.5;
pub const SETTLING_WINDOW_S: f64 = 50.0;
/// Time of the reported fleet velocity spread.
pub const SPREAD_TIME_S: f64 = 100.0;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    UnknownCase(#[from] UnknownCase),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("cannot write {path}: {source}")]
    Export { path: PathBuf, source: ExportError },
    #[error("cannot create {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the scenario seed when set.
    pub seed: Option<u64>,
    /// Partial scenario merged over the case preset.
    pub overrides: Option<Table>,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum CaseStatus {
    Completed,
    Collision,
    NumericalFailure(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub case: Option<CaseSpec>,
    pub seed: u64,
    pub status: CaseStatus,
    pub collision: Option<Collision>,
    pub ticks_completed: usize,
    pub final_min_distance: Option<f64>,
    pub final_max_distance: Option<f64>,
    pub min_distance_drop: Option<f64>,
    pub settling_time_s: Option<f64>,
    pub velocity_spread_100s: Option<f64>,
    pub mean_velocity_final: Option<f64>,
    pub estimation: Option<EstimationFit>,
    pub runtime_s: f64,
    pub config: ScenarioConfig,
}

impl Summary {
    pub fn is_completed(&self) -> bool {
        self.status == CaseStatus::Completed
    }
}

fn seconds_to_ticks(seconds: f64, dt: f64) -> usize {
    (seconds / dt).round() as usize
}

/// Case preset, then overrides, then seed. If the overrides change `dt`
/// without fixing `delay_ticks`, the delay is re-derived from the case.
pub fn case_config(spec: &CaseSpec, opts: &RunOptions) -> Result<ValidatedConfig, RunnerError> {
    let mut cfg = spec.configure(ScenarioConfig::default());
    if let Some(table) = &opts.overrides {
        cfg = scenario::apply_overrides(&cfg, table)?;
        if scenario::overrides_key(table, "dt") && !scenario::overrides_key(table, "delay_ticks") {
            cfg.delay_ticks = spec.delay_ticks(cfg.dt);
        }
    }
    if let Some(seed) = opts.seed {
        cfg.rng_seed = seed;
    }
    Ok(validate_config(&cfg)?)
}

/// Defaults, then overrides, then seed.
pub fn scenario_config(opts: &RunOptions) -> Result<ValidatedConfig, RunnerError> {
    let mut cfg = ScenarioConfig::default();
    if let Some(table) = &opts.overrides {
        cfg = scenario::apply_overrides(&cfg, table)?;
    }
    if let Some(seed) = opts.seed {
        cfg.rng_seed = seed;
    }
    Ok(validate_config(&cfg)?)
}

pub fn summarize(
    record: &RunRecord,
    case: Option<CaseSpec>,
    status: CaseStatus,
    runtime_s: f64,
) -> Summary {
    let dt = record.dt();
    let distances = DistanceSummary::from_record(record).ok();
    let last = |series: &Vec<f64>| series.last().copied();
    let start = record
        .config
        .perturbation
        .map_or(0, |p| seconds_to_ticks(p.start_time, dt));
    let drop = distances.as_ref().and_then(|d| d.post_perturbation_drop(start));
    let settling = distances.as_ref().and_then(|d| {
        d.settling_tick(start, SETTLING_BAND, seconds_to_ticks(SETTLING_WINDOW_S, dt))
            .map(|t| (t - start) as f64 * dt)
    });
    let estimation = record
        .ticks
        .first()
        .and_then(|t| t.pairs.as_ref())
        .and_then(|_| metrics::estimation_fit(record).ok());
    Summary {
        schema_version: SCHEMA_VERSION,
        case,
        seed: record.config.rng_seed,
        status,
        collision: record.collision,
        ticks_completed: record.len(),
        final_min_distance: distances.as_ref().and_then(|d| last(&d.min_distance)),
        final_max_distance: distances.as_ref().and_then(|d| last(&d.max_distance)),
        min_distance_drop: drop,
        settling_time_s: settling,
        velocity_spread_100s: metrics::velocity_spread(record, seconds_to_ticks(SPREAD_TIME_S, dt)).ok(),
        mean_velocity_final: record
            .len()
            .checked_sub(1)
            .and_then(|t| metrics::mean_velocity(record, t).ok()),
        estimation,
        runtime_s,
        config: record.config.config().clone(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, RunnerError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| RunnerError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn write_with<F>(dir: &Path, name: &str, f: F) -> Result<(), RunnerError>
where
    F: FnOnce(BufWriter<File>) -> Result<(), ExportError>,
{
    let path = dir.join(name);
    let file = create(&path)?;
    f(file).map_err(|source| RunnerError::Export { path, source })
}

fn write_artifacts(record: &RunRecord, summary: &Summary, format: OutputFormat, dir: &Path) -> Result<(), RunnerError> {
    let dt = record.dt();
    scenario::save(&dir.join("config.toml"), record.config.config())?;
    match format {
        OutputFormat::Csv => write_with(dir, "run.csv", |w| export::write_run_csv(record, w))?,
        OutputFormat::Json => write_with(dir, "run.json", |w| export::write_run_json(record, w))?,
    }
    if let Ok(distances) = DistanceSummary::from_record(record) {
        write_with(dir, "distance.csv", |w| export::write_distance_csv(&distances, w))?;
        let window = seconds_to_ticks(ERROR_BAR_WINDOW_S, dt).max(1);
        write_with(dir, "error_bar.csv", |w| {
            export::write_error_bar_csv(&distances.min_distance, &distances.time, window, w)
        })?;
    }
    let stride = seconds_to_ticks(HEATMAP_STRIDE_S, dt).max(1);
    write_with(dir, "heatmap.csv", |w| export::write_heatmap_csv(record, stride, w))?;
    if let Some(fit) = &summary.estimation {
        let id = summary.case.map_or(0, |c| c.case_id);
        write_with(dir, "fit.csv", |w| export::write_fit_csv(id, fit, w))?;
    }
    write_with(dir, "summary.json", |w| export::write_json(summary, w))
}

/// Runs one validated scenario and writes its artifacts into `dir`.
/// Collisions and numerical failures are reported in the summary, not as
/// errors; a collision still writes the partial record.
pub fn run_config(
    cfg: &ValidatedConfig,
    case: Option<CaseSpec>,
    format: OutputFormat,
    dir: &Path,
) -> Result<Summary, RunnerError> {
    fs::create_dir_all(dir).map_err(|source| RunnerError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let started = Instant::now();
    let (record, status) = match run_scenario(cfg) {
        Ok(record) => (record, CaseStatus::Completed),
        Err(SimError::Collision { record, .. }) => (*record, CaseStatus::Collision),
        Err(err) => {
            let summary = Summary {
                schema_version: SCHEMA_VERSION,
                case,
                seed: cfg.rng_seed,
                status: CaseStatus::NumericalFailure(err.to_string()),
                collision: None,
                ticks_completed: 0,
                final_min_distance: None,
                final_max_distance: None,
                min_distance_drop: None,
                settling_time_s: None,
                velocity_spread_100s: None,
                mean_velocity_final: None,
                estimation: None,
                runtime_s: started.elapsed().as_secs_f64(),
                config: cfg.config().clone(),
            };
            write_with(dir, "summary.json", |w| export::write_json(&summary, w))?;
            return Ok(summary);
        }
    };
    let summary = summarize(&record, case, status, started.elapsed().as_secs_f64());
    write_artifacts(&record, &summary, format, dir)?;
    Ok(summary)
}

pub fn case_dir(root: &Path, id: u8) -> PathBuf {
    root.join(format!("case_{id:02}"))
}

pub fn run_case(id: u32, opts: &RunOptions, out: &Path) -> Result<Summary, RunnerError> {
    let spec = CaseSpec::get(id)?;
    let cfg = case_config(&spec, opts)?;
    run_config(&cfg, Some(spec), opts.format, &case_dir(out, spec.case_id))
}

/// All sixteen cases on at most `jobs` threads, plus `comparison.csv`.
/// Per-case collisions and numerical failures do not stop the matrix.
pub fn run_matrix(opts: &RunOptions, jobs: usize, out: &Path) -> Result<Vec<Summary>, RunnerError> {
    let specs = CaseSpec::all();
    let configs = specs
        .iter()
        .map(|s| case_config(s, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let summaries = pool.install(|| {
        specs
            .par_iter()
            .zip(&configs)
            .map(|(spec, cfg)| run_config(cfg, Some(*spec), opts.format, &case_dir(out, spec.case_id)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    write_with(out, "comparison.csv", |w| write_comparison(&summaries, w))?;
    Ok(summaries)
}

/// `error_fraction,delay_s,model,case_id,status,final_min_distance,final_max_distance,min_distance_drop,settling_time_s,velocity_spread_100s,velocity_rmse_measured,velocity_rmse_estimated`,
/// sorted by cell then model so the four models of a cell are adjacent.
pub fn write_comparison<W: std::io::Write>(summaries: &[Summary], out: W) -> Result<(), ExportError> {
    let mut rows: Vec<&Summary> = summaries.iter().filter(|s| s.case.is_some()).collect();
    rows.sort_by_key(|s| {
        let c = s.case.expect("filtered");
        (c.cell(), c.case_id)
    });
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "error_fraction",
        "delay_s",
        "model",
        "case_id",
        "status",
        "final_min_distance",
        "final_max_distance",
        "min_distance_drop",
        "settling_time_s",
        "velocity_spread_100s",
        "velocity_rmse_measured",
        "velocity_rmse_estimated",
    ])?;
    for s in rows {
        let c = s.case.expect("filtered");
        let status = match &s.status {
            CaseStatus::Completed => "completed",
            CaseStatus::Collision => "collision",
            CaseStatus::NumericalFailure(_) => "numerical_failure",
        };
        w.serialize((
            c.error_fraction,
            c.delay_s,
            c.model.label(),
            c.case_id,
            status,
            s.final_min_distance,
            s.final_max_distance,
            s.min_distance_drop,
            s.settling_time_s,
            s.velocity_spread_100s,
            s.estimation.map(|e| e.velocity.measured.rmse),
            s.estimation.map(|e| e.velocity.estimated.rmse),
        ))?;
    }
    w.flush()?;
    Ok(())
}
