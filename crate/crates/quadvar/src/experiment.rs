//! End-to-end replays of three benchmark experiments and the file-driven
//! estimation workflow behind the command line tools.
//!
//! The experiments share one scheme: fix a design of sites, draw replications
//! of a zero-mean Matérn field with σ² = α = 1 on it, and run the estimator
//! matched to the design family:
//!
//! 1. line transect t_i = φ((i−1)/(n−1)) with φ(s) = s(s+1)/2, estimated by
//!    the adaptive transect estimator (reported with its interval locator);
//! 2. arc of the unit circle γ(t) = (cos t, sin t), t ∈ [0, π/2], sampled at
//!    parameters φ(s) = s(s+1)/(L+1), estimated by the curve estimator under
//!    the ¾ selection rule;
//! 3. n×n lattice deformed by z ↦ z(z+1)/3 (as a map of u + iv), estimated
//!    from both lattice stencil rows ℓ = 1 and ℓ = 2.
//!
//! The covariance is factored once per ν; replication r then draws its
//! normals from the counter-based stream addressed by (seed, global index),
//! so results do not depend on the execution schedule and any replication can
//! be regenerated in isolation. Replications run on the rayon pool
//! (`RAYON_NUM_THREADS` caps the width). Failed replications are recorded
//! with their error text instead of being dropped, so every reported mean
//! absolute error comes with a visible denominator.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::covariance::{CovarianceError, CovarianceModel};
use crate::designs::{
    curve_sites, lattice_sites, line_sites, recover_order, CurveDesign, DesignError,
    LatticeDesign, LineTransect, SiteSet,
};
use crate::estimators::{
    estimate_curve, estimate_lattice, estimate_line_adaptive, EstimateError, EstimateResult,
    SearchConfig, Variant,
};
use crate::grf::{factor, GrfError, SamplerState, MAX_SITES};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("replications must be at least 1")]
    NoReplications,
    #[error("nu_list must contain at least one value")]
    EmptyNuList,
    #[error("true smoothness ν = {0} must be finite and positive")]
    BadNuValue(f64),
    #[error("order search bound M = {0} must be finite and positive")]
    BadUpperBound(f64),
    #[error("n = {got} is outside [{min}, {max}] for the {kind} experiment")]
    BadSize { kind: ExperimentKind, got: usize, min: usize, max: usize },
    #[error("a custom experiment supplies its own sites; use the file estimation workflow")]
    CustomNeedsFiles,
    #[error("got {sites} sites but {observations} observations")]
    CountMismatch { sites: usize, observations: usize },
    #[error(
        "{got} points cannot form a square lattice; the nearest square counts \
         are {smaller} and {larger}"
    )]
    NotSquare { got: usize, smaller: usize, larger: usize },
    #[error("a lattice of side {side} expects {expected} points, got {got}")]
    LatticeCountMismatch { side: usize, expected: usize, got: usize },
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Grf(#[from] GrfError),
    #[error("report serialization failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("report serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which benchmark layout an experiment run uses.
///
/// Serializes as the experiment number 1, 2, or 3, or as the string
/// `"custom"` for configurations whose sites come from files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    LineTransect,
    CircularArc,
    DeformedLattice,
    Custom,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExperimentKind::LineTransect => "line-transect",
            ExperimentKind::CircularArc => "circular-arc",
            ExperimentKind::DeformedLattice => "deformed-lattice",
            ExperimentKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl Serialize for ExperimentKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ExperimentKind::LineTransect => serializer.serialize_u8(1),
            ExperimentKind::CircularArc => serializer.serialize_u8(2),
            ExperimentKind::DeformedLattice => serializer.serialize_u8(3),
            ExperimentKind::Custom => serializer.serialize_str("custom"),
        }
    }
}

struct KindVisitor;

impl Visitor<'_> for KindVisitor {
    type Value = ExperimentKind;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("an experiment number 1, 2, or 3, or the string \"custom\"")
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
        match v {
            1 => Ok(ExperimentKind::LineTransect),
            2 => Ok(ExperimentKind::CircularArc),
            3 => Ok(ExperimentKind::DeformedLattice),
            _ => Err(E::invalid_value(de::Unexpected::Unsigned(v), &self)),
        }
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
        u64::try_from(v)
            .map_err(|_| E::invalid_value(de::Unexpected::Signed(v), &self))
            .and_then(|u| self.visit_u64(u))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
        if v == "custom" {
            Ok(ExperimentKind::Custom)
        } else {
            Err(E::invalid_value(de::Unexpected::Str(v), &self))
        }
    }
}

impl<'de> Deserialize<'de> for ExperimentKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(KindVisitor)
    }
}

/// Report serialization format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

fn default_upper_bound() -> f64 {
    2.5
}

/// One experiment run: a design size, the true smoothness values to sweep,
/// and the replication budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n: usize,
    pub nu_list: Vec<f64>,
    pub replications: u64,
    pub seed: u64,
    /// Search bound M for the transect experiment (ignored by the others).
    #[serde(default = "default_upper_bound")]
    pub m: f64,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub format: ReportFormat,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.replications == 0 {
            return Err(ExperimentError::NoReplications);
        }
        if self.nu_list.is_empty() {
            return Err(ExperimentError::EmptyNuList);
        }
        for &nu in &self.nu_list {
            if !(nu > 0.0) || !nu.is_finite() {
                return Err(ExperimentError::BadNuValue(nu));
            }
        }
        let (min, max) = match self.experiment {
            ExperimentKind::LineTransect => {
                if !(self.m > 0.0) || !self.m.is_finite() {
                    return Err(ExperimentError::BadUpperBound(self.m));
                }
                (4 * (self.m.floor() as usize + 2) + 2, MAX_SITES)
            }
            ExperimentKind::CircularArc => (9, MAX_SITES),
            ExperimentKind::DeformedLattice => (5, MAX_SITES.isqrt()),
            ExperimentKind::Custom => return Err(ExperimentError::CustomNeedsFiles),
        };
        if self.n < min || self.n > max {
            return Err(ExperimentError::BadSize {
                kind: self.experiment,
                got: self.n,
                min,
                max,
            });
        }
        Ok(())
    }
}

/// A built design of any of the three benchmark families.
#[derive(Debug, Clone)]
pub enum ExperimentDesign {
    Line(LineTransect),
    Curve(CurveDesign),
    Lattice(LatticeDesign),
}

impl ExperimentDesign {
    pub fn site_set(&self) -> SiteSet {
        match self {
            ExperimentDesign::Line(d) => d.site_set(),
            ExperimentDesign::Curve(d) => d.site_set(),
            ExperimentDesign::Lattice(d) => d.site_set(),
        }
    }
}

/// Builds the benchmark design of the given kind and size.
pub fn experiment_design(
    kind: ExperimentKind,
    n: usize,
) -> Result<ExperimentDesign, ExperimentError> {
    match kind {
        ExperimentKind::LineTransect => {
            Ok(ExperimentDesign::Line(line_sites(|s| s * (s + 1.0) / 2.0, n)?))
        }
        ExperimentKind::CircularArc => {
            let l = std::f64::consts::FRAC_PI_2;
            Ok(ExperimentDesign::Curve(curve_sites(
                |t| [t.cos(), t.sin()],
                move |s| s * (s + 1.0) / (l + 1.0),
                l,
                n,
            )?))
        }
        ExperimentKind::DeformedLattice => Ok(ExperimentDesign::Lattice(lattice_sites(
            |u, v| [(u * u - v * v + u) / 3.0, (2.0 * u * v + v) / 3.0],
            n,
        )?)),
        ExperimentKind::Custom => Err(ExperimentError::CustomNeedsFiles),
    }
}

/// Sites and one replication of observations for a benchmark experiment.
pub fn simulate_observations(
    kind: ExperimentKind,
    n: usize,
    nu: f64,
    seed: u64,
    replication: u64,
) -> Result<(SiteSet, Vec<f64>), ExperimentError> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(ExperimentError::BadNuValue(nu));
    }
    let sites = experiment_design(kind, n)?.site_set();
    let model = CovarianceModel::new(nu, 1.0, 1.0)?;
    let state = factor(&model, &sites, seed)?;
    let obs = state.sample(replication);
    Ok((sites, obs))
}

/// One row of an experiment report: one estimator variant applied to one
/// replication. Failed runs keep their error text in `status` and leave the
/// estimate columns empty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub nu_true: f64,
    pub replication: u64,
    pub variant: Variant,
    pub nu_hat: Option<f64>,
    pub objective: Option<f64>,
    pub status: String,
    pub seconds: f64,
}

/// Aggregate over the replications of one (ν, estimator) pair.
///
/// The mean absolute error averages |ν̂ − ν| over successful replications
/// only; `standard_error` is the sample standard deviation of |ν̂ − ν|
/// divided by √successes, absent when fewer than two replications succeed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NuSummary {
    pub nu_true: f64,
    pub variant: Variant,
    pub successes: usize,
    pub failures: usize,
    pub mean_absolute_error: Option<f64>,
    pub standard_error: Option<f64>,
    pub seconds: f64,
}

/// Full outcome of [`run_experiment`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub records: Vec<ReplicationRecord>,
    pub summaries: Vec<NuSummary>,
    pub total_seconds: f64,
}

impl ExperimentReport {
    /// ν values for which no estimator variant succeeded in any replication.
    pub fn fully_failed_nus(&self) -> Vec<f64> {
        self.config
            .nu_list
            .iter()
            .copied()
            .filter(|&nu| {
                self.summaries
                    .iter()
                    .filter(|s| s.nu_true == nu)
                    .all(|s| s.successes == 0)
            })
            .collect()
    }

    pub fn summary_for(&self, nu: f64, variant: Variant) -> Option<&NuSummary> {
        self.summaries.iter().find(|s| s.nu_true == nu && s.variant == variant)
    }

    /// Zeroes every wall-clock field. Estimates, statuses, and aggregates
    /// are pure functions of (config, seed); timings are measurements of the
    /// host. Stripping them leaves exactly the reproducible content, which
    /// is what byte-comparison of two runs should see.
    pub fn zero_timings(&mut self) {
        for r in &mut self.records {
            r.seconds = 0.0;
        }
        for s in &mut self.summaries {
            s.seconds = 0.0;
        }
        self.total_seconds = 0.0;
    }

    /// Writes the per-replication rows as CSV with the fixed column set
    /// nu_true, replication, variant, nu_hat, objective, status, seconds.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(writer);
        for record in &self.records {
            w.serialize(record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the whole report (config, rows, summaries) as pretty JSON.
    pub fn write_json<W: Write>(&self, mut writer: W) -> Result<(), ExperimentError> {
        serde_json::to_writer_pretty(&mut writer, self)?;
        writeln!(writer)?;
        Ok(())
    }
}

fn record(
    nu: f64,
    replication: u64,
    variant: Variant,
    nu_hat: Option<f64>,
    objective: Option<f64>,
    status: String,
    seconds: f64,
) -> ReplicationRecord {
    ReplicationRecord { nu_true: nu, replication, variant, nu_hat, objective, status, seconds }
}

fn failure_records(
    nu: f64,
    replication: u64,
    variants: &[Variant],
    message: &str,
    seconds: f64,
) -> Vec<ReplicationRecord> {
    variants
        .iter()
        .map(|&v| record(nu, replication, v, None, None, message.to_string(), seconds))
        .collect()
}

fn variants_for(kind: ExperimentKind) -> &'static [Variant] {
    match kind {
        ExperimentKind::LineTransect => &[Variant::LineInterval, Variant::LineAdaptive],
        ExperimentKind::CircularArc => &[Variant::CurveSecond, Variant::CurveSelected],
        ExperimentKind::DeformedLattice => &[Variant::LatticeFirst, Variant::LatticeSecond],
        ExperimentKind::Custom => &[],
    }
}

fn run_replication(
    design: &ExperimentDesign,
    state: &SamplerState,
    nu: f64,
    replication: u64,
    stream: u64,
    m: f64,
    search: &SearchConfig,
) -> Vec<ReplicationRecord> {
    let start = Instant::now();
    let obs = state.sample(stream);
    match design {
        ExperimentDesign::Line(d) => match estimate_line_adaptive(&obs, d, m, search) {
            Ok(res) => {
                let seconds = start.elapsed().as_secs_f64();
                vec![
                    record(
                        nu,
                        replication,
                        Variant::LineInterval,
                        res.interval_estimate,
                        None,
                        "ok".into(),
                        seconds,
                    ),
                    record(
                        nu,
                        replication,
                        Variant::LineAdaptive,
                        Some(res.nu_hat),
                        Some(res.objective),
                        "ok".into(),
                        seconds,
                    ),
                ]
            }
            Err(e) => failure_records(
                nu,
                replication,
                variants_for(ExperimentKind::LineTransect),
                &e.to_string(),
                start.elapsed().as_secs_f64(),
            ),
        },
        ExperimentDesign::Curve(d) => match estimate_curve(&obs, d, search) {
            Ok(est) => {
                let seconds = start.elapsed().as_secs_f64();
                vec![
                    record(
                        nu,
                        replication,
                        Variant::CurveSecond,
                        Some(est.second_order.nu_hat),
                        Some(est.second_order.objective),
                        "ok".into(),
                        seconds,
                    ),
                    record(
                        nu,
                        replication,
                        Variant::CurveSelected,
                        Some(est.selected.nu_hat),
                        Some(est.selected.objective),
                        "ok".into(),
                        seconds,
                    ),
                ]
            }
            Err(e) => failure_records(
                nu,
                replication,
                variants_for(ExperimentKind::CircularArc),
                &e.to_string(),
                start.elapsed().as_secs_f64(),
            ),
        },
        ExperimentDesign::Lattice(d) => {
            let mut rows = Vec::with_capacity(2);
            for (ell, variant) in [(1, Variant::LatticeFirst), (2, Variant::LatticeSecond)] {
                let t = Instant::now();
                let row = match estimate_lattice(&obs, d, ell, search) {
                    Ok(res) => record(
                        nu,
                        replication,
                        variant,
                        Some(res.nu_hat),
                        Some(res.objective),
                        "ok".into(),
                        t.elapsed().as_secs_f64(),
                    ),
                    Err(e) => record(
                        nu,
                        replication,
                        variant,
                        None,
                        None,
                        e.to_string(),
                        t.elapsed().as_secs_f64(),
                    ),
                };
                rows.push(row);
            }
            rows
        }
    }
}

fn summarize(
    nu: f64,
    variant: Variant,
    rows: &[ReplicationRecord],
    seconds: f64,
) -> NuSummary {
    let errors: Vec<f64> = rows
        .iter()
        .filter(|r| r.nu_true == nu && r.variant == variant)
        .filter_map(|r| r.nu_hat)
        .map(|hat| (hat - nu).abs())
        .collect();
    let total = rows
        .iter()
        .filter(|r| r.nu_true == nu && r.variant == variant)
        .count();
    let successes = errors.len();
    let mae = if successes > 0 {
        Some(errors.iter().sum::<f64>() / successes as f64)
    } else {
        None
    };
    let standard_error = if successes > 1 {
        let mean = mae.unwrap();
        let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
            / (successes - 1) as f64;
        Some((var / successes as f64).sqrt())
    } else {
        None
    };
    NuSummary {
        nu_true: nu,
        variant,
        successes,
        failures: total - successes,
        mean_absolute_error: mae,
        standard_error,
        seconds,
    }
}

/// Runs a full experiment: for each ν, factor the covariance once, then
/// estimate every replication of the sampled field.
///
/// Replications execute on the rayon pool; the report is identical for any
/// schedule because replication r of the i-th ν always reads stream
/// i·replications + r of the master seed and rows are collected in index
/// order. An ill-conditioned covariance fails all replications of that ν
/// with the error recorded per row; other ν values still run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    config.validate()?;
    let search = SearchConfig::default();
    let total_start = Instant::now();
    let design = experiment_design(config.experiment, config.n)?;
    let sites = design.site_set();
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for (nu_index, &nu) in config.nu_list.iter().enumerate() {
        let block_start = Instant::now();
        let model = CovarianceModel::new(nu, 1.0, 1.0)?;
        let base = nu_index as u64 * config.replications;
        let block: Vec<ReplicationRecord> = match factor(&model, &sites, config.seed) {
            Ok(state) => (0..config.replications)
                .into_par_iter()
                .flat_map_iter(|r| {
                    run_replication(&design, &state, nu, r, base + r, config.m, &search)
                })
                .collect(),
            Err(e) => {
                let message = e.to_string();
                (0..config.replications)
                    .flat_map(|r| {
                        failure_records(
                            nu,
                            r,
                            variants_for(config.experiment),
                            &message,
                            0.0,
                        )
                    })
                    .collect()
            }
        };
        let block_seconds = block_start.elapsed().as_secs_f64();
        for &variant in variants_for(config.experiment) {
            summaries.push(summarize(nu, variant, &block, block_seconds));
        }
        records.extend(block);
    }
    Ok(ExperimentReport {
        config: config.clone(),
        records,
        summaries,
        total_seconds: total_start.elapsed().as_secs_f64(),
    })
}

/// Which design family a pair of site/observation files describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMode {
    Line,
    Curve,
    Lattice,
}

/// Options for estimating from externally supplied sites and observations.
#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    pub mode: EstimateMode,
    /// Search bound M for line mode.
    pub upper_bound: f64,
    /// Lattice stencil row, 1 or 2.
    pub ell: usize,
    /// Expected lattice side; inferred from the point count when absent.
    pub side: Option<usize>,
    pub search: SearchConfig,
}

impl EstimateOptions {
    pub fn new(mode: EstimateMode) -> Self {
        EstimateOptions {
            mode,
            upper_bound: default_upper_bound(),
            ell: 2,
            side: None,
            search: SearchConfig::default(),
        }
    }
}

fn require_dimension(sites: &SiteSet, expected: u8) -> Result<(), ExperimentError> {
    if sites.dimension() != expected {
        return Err(DesignError::DimensionMismatch { expected, got: sites.dimension() }.into());
    }
    Ok(())
}

/// Estimates ν from a site set and its paired observations.
///
/// Line mode sorts the (site, observation) pairs by coordinate, so input
/// order never matters. Curve mode recovers the traversal order first when
/// the sites are marked unordered, then orients the path so the
/// lexicographically smaller endpoint comes first; chord statistics are
/// reversal-symmetric, so the orientation is a pure representative choice
/// that makes results bit-reproducible across input orderings. Lattice mode
/// expects row-major points of a square grid.
pub fn estimate_observations(
    sites: &SiteSet,
    observations: &[f64],
    options: &EstimateOptions,
) -> Result<EstimateResult, ExperimentError> {
    if sites.len() != observations.len() {
        return Err(ExperimentError::CountMismatch {
            sites: sites.len(),
            observations: observations.len(),
        });
    }
    match options.mode {
        EstimateMode::Line => {
            let coords = sites.coordinates()?;
            let mut order: Vec<usize> = (0..coords.len()).collect();
            order.sort_by(|&a, &b| coords[a].total_cmp(&coords[b]));
            let sorted: Vec<f64> = order.iter().map(|&i| coords[i]).collect();
            let obs: Vec<f64> = order.iter().map(|&i| observations[i]).collect();
            let design = LineTransect::from_sites(sorted)?;
            Ok(estimate_line_adaptive(&obs, &design, options.upper_bound, &options.search)?)
        }
        EstimateMode::Curve => {
            require_dimension(sites, 2)?;
            let (mut points, mut obs): (Vec<[f64; 2]>, Vec<f64>) = if sites.ordered() {
                (sites.points().to_vec(), observations.to_vec())
            } else {
                let order = recover_order(sites.points())?;
                (
                    order.iter().map(|&i| sites.point(i)).collect(),
                    order.iter().map(|&i| observations[i]).collect(),
                )
            };
            if points[points.len() - 1] < points[0] {
                points.reverse();
                obs.reverse();
            }
            let design = CurveDesign::from_points(points)?;
            Ok(estimate_curve(&obs, &design, &options.search)?.selected)
        }
        EstimateMode::Lattice => {
            require_dimension(sites, 2)?;
            let got = sites.len();
            let side = match options.side {
                Some(side) => {
                    if side * side != got {
                        return Err(ExperimentError::LatticeCountMismatch {
                            side,
                            expected: side * side,
                            got,
                        });
                    }
                    side
                }
                None => {
                    let side = got.isqrt();
                    if side * side != got {
                        return Err(ExperimentError::NotSquare {
                            got,
                            smaller: side * side,
                            larger: (side + 1) * (side + 1),
                        });
                    }
                    side
                }
            };
            let design = LatticeDesign::from_points(side, sites.points().to_vec())?;
            Ok(estimate_lattice(observations, &design, options.ell, &options.search)?)
        }
    }
}
