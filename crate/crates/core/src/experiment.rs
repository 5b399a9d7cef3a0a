//! Monte Carlo RMSE sweeps.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coarray::{self, CoarrayError, FormSelection, SensorArray};
use crate::designs::{optimize_foha, DesignError, GeneratorKind, SearchMode};
use crate::metrics::{reference_coupling_model, CouplingModel, MetricsError};
use crate::music::{music_trial, rmse, smoothed_matrix, toeplitz_matrix, LagAverager, MusicError, DEFAULT_GRID};
use crate::signal::{generate_snapshots, Modulation, SignalError, SimScenario, SourceConfig};

pub const CSV_HEADER: &str = "axis,value,rmse_deg,trials,resolved_fraction";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("field `{field}`: {message}")]
    Field { field: &'static str, message: String },
}

fn field(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field, message: message.into() }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Coarray(#[from] CoarrayError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Music(#[from] MusicError),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Either an optimized design or explicit sensor positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<GeneratorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<i64>>,
}

impl DesignSpec {
    pub fn resolve(&self) -> Result<SensorArray, ExperimentError> {
        match (self.kind, self.n, &self.positions) {
            (Some(kind), Some(n), None) => Ok(optimize_foha(n, kind, SearchMode::Algorithm)?.positions),
            (None, None, Some(p)) => SensorArray::new(p.iter().copied())
                .map_err(|e| field("design.positions", e.to_string()).into()),
            _ => Err(field("design", "give either `kind` and `n`, or `positions`").into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Snr,
    Snapshots,
    Sources,
    Separation,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Snr => "snr",
            SweepAxis::Snapshots => "snapshots",
            SweepAxis::Sources => "sources",
            SweepAxis::Separation => "separation",
        }
    }
}

/// How source angles are placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase", deny_unknown_fields)]
pub enum AngleRule {
    /// `D` angles equally spaced over `[min, max]`, endpoints included.
    Uniform { min: f64, max: f64 },
    Explicit { deg: Vec<f64> },
    /// `D` angles at `spacing` apart, centred on `center`. The spacing is
    /// taken from the axis value in a separation sweep.
    Spaced {
        #[serde(default)]
        center: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spacing: Option<f64>,
    },
}

impl Default for AngleRule {
    fn default() -> Self {
        AngleRule::Uniform { min: -60.0, max: 60.0 }
    }
}

pub fn uniform_angles(d: usize, min: f64, max: f64) -> Vec<f64> {
    if d == 1 {
        return vec![(min + max) / 2.0];
    }
    (0..d).map(|i| min + (max - min) * i as f64 / (d - 1) as f64).collect()
}

pub fn spaced_angles(d: usize, center: f64, spacing: f64) -> Vec<f64> {
    let mid = (d as f64 - 1.0) / 2.0;
    (0..d).map(|i| center + (i as f64 - mid) * spacing).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothing {
    #[default]
    Spatial,
    Toeplitz,
}

fn default_snr() -> f64 {
    10.0
}
fn default_snapshots() -> usize {
    2000
}
fn default_trials() -> usize {
    50
}
fn default_grid() -> usize {
    DEFAULT_GRID
}
fn default_coupling_limit() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub design: DesignSpec,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    /// Source count; implied by explicit angles or by a sources sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<usize>,
    #[serde(default)]
    pub angles: AngleRule,
    #[serde(default)]
    pub modulation: Modulation,
    #[serde(default)]
    pub coupling: bool,
    #[serde(default = "default_coupling_limit")]
    pub coupling_limit: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    #[serde(default)]
    pub smoothing: Smoothing,
}

fn is_count(v: f64) -> bool {
    v >= 1.0 && v.fract() == 0.0 && v.is_finite()
}

/// One axis value, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub snr_db: f64,
    pub snapshots: usize,
    pub sources: SourceConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            let full = e.to_string();
            let suffix = format!(" at line {} column {}", e.line(), e.column());
            ConfigError::Parse {
                line: e.line(),
                column: e.column(),
                message: full.strip_suffix(&suffix).unwrap_or(&full).to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.points().map(|_| ())
    }

    fn source_count(&self, value: f64) -> Result<usize, ConfigError> {
        if self.axis == SweepAxis::Sources {
            if matches!(self.angles, AngleRule::Explicit { .. }) {
                return Err(field("angles", "explicit angles cannot be combined with a sources sweep"));
            }
            return Ok(value as usize);
        }
        match (&self.angles, self.sources) {
            (AngleRule::Explicit { deg }, Some(d)) if d != deg.len() => {
                Err(field("sources", format!("{d} sources but {} explicit angles", deg.len())))
            }
            (AngleRule::Explicit { deg }, _) => Ok(deg.len()),
            (_, Some(d)) if d >= 1 => Ok(d),
            (_, Some(_)) => Err(field("sources", "must be at least 1")),
            (_, None) => Err(field("sources", "required unless angles are explicit")),
        }
    }

    fn angles_for(&self, d: usize, value: f64) -> Result<Vec<f64>, ConfigError> {
        match &self.angles {
            AngleRule::Uniform { min, max } => {
                if !(min < max) {
                    return Err(field("angles", "uniform rule needs min < max"));
                }
                Ok(uniform_angles(d, *min, *max))
            }
            AngleRule::Explicit { deg } => Ok(deg.clone()),
            AngleRule::Spaced { center, spacing } => {
                let spacing = match (self.axis, spacing) {
                    (SweepAxis::Separation, _) => value,
                    (_, Some(s)) => *s,
                    (_, None) => return Err(field("angles.spacing", "required outside a separation sweep")),
                };
                if !(spacing > 0.0) {
                    return Err(field("angles.spacing", "must be positive"));
                }
                Ok(spaced_angles(d, *center, spacing))
            }
        }
    }

    /// Resolve every axis value into a concrete scenario.
    pub fn points(&self) -> Result<Vec<SweepPoint>, ConfigError> {
        if self.values.is_empty() {
            return Err(field("values", "must not be empty"));
        }
        let inc = self.values.windows(2).all(|w| w[0] < w[1]);
        let dec = self.values.windows(2).all(|w| w[0] > w[1]);
        if !(inc || dec) {
            return Err(field("values", "must be strictly monotone"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(field("values", "must be finite"));
        }
        if self.trials == 0 {
            return Err(field("trials", "must be at least 1"));
        }
        if self.snapshots < 2 {
            return Err(field("snapshots", "must be at least 2"));
        }
        if self.grid_size < 3 {
            return Err(field("grid_size", "must be at least 3"));
        }
        if self.coupling && self.coupling_limit == 0 {
            return Err(field("coupling_limit", "must be at least 1"));
        }
        match self.axis {
            SweepAxis::Snapshots | SweepAxis::Sources if !self.values.iter().all(|&v| is_count(v)) => {
                return Err(field("values", "must be positive integers for this axis"));
            }
            SweepAxis::Snapshots if self.values.iter().any(|&v| v < 2.0) => {
                return Err(field("values", "snapshot counts must be at least 2"));
            }
            SweepAxis::Separation if !matches!(self.angles, AngleRule::Spaced { .. }) => {
                return Err(field("angles", "a separation sweep needs the `spaced` rule"));
            }
            _ => {}
        }

        self.values
            .iter()
            .map(|&value| {
                let d = self.source_count(value)?;
                let angles = self.angles_for(d, value)?;
                let sources = SourceConfig::new(angles, self.modulation)
                    .map_err(|e| field("angles", e.to_string()))?;
                Ok(SweepPoint {
                    value,
                    snr_db: if self.axis == SweepAxis::Snr { value } else { self.snr_db },
                    snapshots: if self.axis == SweepAxis::Snapshots { value as usize } else { self.snapshots },
                    sources,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub rmse_deg: f64,
    pub trials: usize,
    pub resolved_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub positions: Vec<i64>,
    /// One-sided consecutive co-array extent used for smoothing.
    pub extent: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.axis.name(),
                r.value,
                r.rmse_deg,
                r.trials,
                r.resolved_fraction
            );
        }
        out
    }
}

/// Estimates of one trial and whether every source was resolved.
pub fn run_trial(
    scenario: &SimScenario,
    sources: &SourceConfig,
    averager: &LagAverager,
    smoothing: Smoothing,
    grid_size: usize,
) -> Result<(Vec<f64>, bool), ExperimentError> {
    let x = generate_snapshots(scenario, sources);
    let z = averager.average(&x)?;
    let r = match smoothing {
        Smoothing::Spatial => smoothed_matrix(&z),
        Smoothing::Toeplitz => toeplitz_matrix(&z),
    };
    Ok(music_trial(&r, sources.angles_deg(), grid_size)?)
}

/// Run every axis value for `config.trials` trials.
///
/// Trial `t` draws from stream `t` of the base seed at every axis value, so
/// the sweep uses common random numbers and is independent of scheduling.
pub fn run_sweep(config: &ExperimentConfig, threads: Option<usize>) -> Result<SweepResult, ExperimentError> {
    let points = config.points()?;
    let array = config.design.resolve()?;
    let extent = coarray::central_consecutive(&coarray::fodca(&array)?)?;
    let averager = LagAverager::new(&array, extent as usize, FormSelection::Both)?;
    let coupling: Option<CouplingModel> =
        if config.coupling { Some(reference_coupling_model(config.coupling_limit)?) } else { None };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| ExperimentError::Pool(e.to_string()))?;

    let mut rows = Vec::with_capacity(points.len());
    for pt in &points {
        let base = SimScenario::new(array.clone(), pt.snr_db, pt.snapshots, config.seed)?
            .with_coupling(coupling.clone());
        let outcomes: Vec<(Vec<f64>, bool)> = pool.install(|| {
            (0..config.trials)
                .into_par_iter()
                .map(|t| {
                    let sc = base.clone().with_stream(t as u64);
                    run_trial(&sc, &pt.sources, &averager, config.smoothing, config.grid_size)
                })
                .collect::<Result<_, _>>()
        })?;
        let estimates: Vec<Vec<f64>> = outcomes.iter().map(|o| o.0.clone()).collect();
        let resolved = outcomes.iter().filter(|o| o.1).count();
        rows.push(SweepRow {
            axis: config.axis,
            value: pt.value,
            rmse_deg: rmse(&estimates, pt.sources.angles_deg())?,
            trials: config.trials,
            resolved_fraction: resolved as f64 / config.trials as f64,
        });
    }
    Ok(SweepResult { positions: array.positions().to_vec(), extent, rows })
}
