//! Convergence studies: error of each point-set method against a reference
//! value over a grid of point counts, and log-log rate fits.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::reference::{ReferenceCache, ReferenceOptions};
use super::{estimate, Integrand};
use crate::distributions::{composition_sample, MixtureSpec};
use crate::exec::Execution;
use crate::pointsets::{
    fmt_f64, halton_normal, smolyak_grid, Halton, Provenance, SparseGridLevel, WeightedPointSet,
    DEFAULT_LEAP, DEFAULT_SKIP,
};
use crate::transport::{
    affine_image, componentwise_transport, diophantine_split, transport_set_with, TransportConfig,
};
use crate::{Error, Result};

/// Minimum number of distinct point counts for a rate fit.
pub const MIN_FIT_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Composition sampling.
    Mc,
    /// Halton points transported by the ODE.
    Tqmc,
    /// Sparse grid transported by the ODE.
    Tsg,
    /// Halton points split over components and mapped affinely.
    Cqmc,
    /// One sparse grid per component, mapped affinely.
    Csg,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Mc,
        Method::Tqmc,
        Method::Tsg,
        Method::Cqmc,
        Method::Csg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::Tqmc => "tqmc",
            Method::Tsg => "tsg",
            Method::Cqmc => "cqmc",
            Method::Csg => "csg",
        }
    }

    /// Whether results differ between seeds.
    pub fn is_randomized(self, scrambled: bool) -> bool {
        match self {
            Method::Mc => true,
            Method::Tqmc | Method::Cqmc => scrambled,
            Method::Tsg | Method::Csg => false,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HaltonOptions {
    pub skip: u64,
    pub leap: u64,
    /// Random digit scramble, reseeded per study seed.
    pub scramble: bool,
}

impl Default for HaltonOptions {
    fn default() -> Self {
        HaltonOptions {
            skip: DEFAULT_SKIP,
            leap: DEFAULT_LEAP,
            scramble: false,
        }
    }
}

impl HaltonOptions {
    fn generator(&self, dim: usize, seed: u64) -> Result<Halton> {
        let h = Halton::new(dim, self.skip, self.leap)?;
        Ok(if self.scramble { h.scrambled(seed) } else { h })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub methods: Vec<Method>,
    pub integrands: Vec<Integrand>,
    /// Requested point counts, ascending.
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub transport: TransportConfig,
    pub halton: HaltonOptions,
    pub reference: ReferenceOptions,
    /// Label written into every record.
    pub mixture_id: String,
}

impl StudyConfig {
    pub fn new(
        methods: Vec<Method>,
        integrands: Vec<Integrand>,
        n_grid: Vec<usize>,
        seeds: Vec<u64>,
    ) -> Self {
        StudyConfig {
            methods,
            integrands,
            n_grid,
            seeds,
            transport: TransportConfig::default(),
            halton: HaltonOptions::default(),
            reference: ReferenceOptions::default(),
            mixture_id: "mixture".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.methods.is_empty()
            || self.integrands.is_empty()
            || self.n_grid.is_empty()
            || self.seeds.is_empty()
        {
            return Err(Error::InvalidInput(
                "methods, integrands, n_grid and seeds must be non-empty".into(),
            ));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "n_grid must be strictly ascending".into(),
            ));
        }
        if self.n_grid[0] == 0 {
            return Err(Error::InvalidInput("point counts must be positive".into()));
        }
        self.transport.validate()
    }
}

/// One row of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub method: Method,
    /// Actual number of points; sparse grids may fall short of the request.
    pub n: usize,
    pub integrand: Integrand,
    pub mixture: String,
    pub seed: u64,
    /// `None` for skipped rows.
    pub abs_error: Option<f64>,
    pub estimate: Option<f64>,
    pub wall_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

/// Runs the study and returns all rows.
pub fn convergence_study(
    spec: &MixtureSpec,
    cfg: &StudyConfig,
    cache: &mut ReferenceCache,
) -> Result<Vec<ConvergenceRecord>> {
    let mut rows = Vec::new();
    convergence_study_with(spec, cfg, cache, Execution::default(), &mut |r| {
        rows.push(r.clone());
        Ok(())
    })?;
    Ok(rows)
}

/// Streams rows to `sink` ordered by method, point count, integrand, seed.
///
/// Rows of completed (method, N) cells reach the sink before an error in a
/// later cell is returned.
pub fn convergence_study_with(
    spec: &MixtureSpec,
    cfg: &StudyConfig,
    cache: &mut ReferenceCache,
    exec: Execution,
    sink: &mut dyn FnMut(&ConvergenceRecord) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    let references = cfg
        .integrands
        .iter()
        .map(|&f| Ok((f, cache.get_or_compute(spec, f, &cfg.reference)?.value)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let max_n = *cfg.n_grid.last().unwrap();
    let needs_grids = cfg
        .methods
        .iter()
        .any(|m| matches!(m, Method::Tsg | Method::Csg));
    let ladder = if needs_grids {
        GridLadder::build(spec.dim(), max_n)?
    } else {
        GridLadder::default()
    };

    for &method in &cfg.methods {
        let randomized = method.is_randomized(cfg.halton.scramble);
        let run_seeds: Vec<u64> = if randomized {
            cfg.seeds.clone()
        } else {
            vec![cfg.seeds[0]]
        };
        for &n in &cfg.n_grid {
            let outcomes = exec.map(run_seeds.len(), |i| {
                let start = Instant::now();
                method_points(spec, cfg, &ladder, method, n, run_seeds[i], exec).map(|p| {
                    let ests: Vec<f64> = cfg.integrands.iter().map(|&f| estimate(&p, f)).collect();
                    (p.len(), ests, start.elapsed().as_secs_f64())
                })
            });
            let mut cell_rows = Vec::new();
            for (k, &f) in cfg.integrands.iter().enumerate() {
                for (s, &seed) in cfg.seeds.iter().enumerate() {
                    let outcome = &outcomes[if randomized { s } else { 0 }];
                    let row = match outcome {
                        Ok((size, ests, time)) => ConvergenceRecord {
                            method,
                            n: *size,
                            integrand: f,
                            mixture: cfg.mixture_id.clone(),
                            seed,
                            abs_error: Some((ests[k] - references[&f]).abs()),
                            estimate: Some(ests[k]),
                            wall_time: *time,
                            skipped: None,
                        },
                        Err(e) if is_skippable(e) => ConvergenceRecord {
                            method,
                            n,
                            integrand: f,
                            mixture: cfg.mixture_id.clone(),
                            seed,
                            abs_error: None,
                            estimate: None,
                            wall_time: 0.0,
                            skipped: Some(e.to_string()),
                        },
                        Err(_) => continue,
                    };
                    cell_rows.push(row);
                }
            }
            if let Some(e) = outcomes
                .into_iter()
                .filter_map(|o| o.err())
                .find(|e| !is_skippable(e))
            {
                return Err(e);
            }
            for row in &cell_rows {
                sink(row)?;
            }
        }
    }
    Ok(())
}

fn is_skippable(e: &Error) -> bool {
    matches!(e, Error::InsufficientBudget { .. } | Error::Unsupported(_))
}

fn method_points(
    spec: &MixtureSpec,
    cfg: &StudyConfig,
    ladder: &GridLadder,
    method: Method,
    n: usize,
    seed: u64,
    exec: Execution,
) -> Result<WeightedPointSet> {
    let d = spec.dim();
    match method {
        Method::Mc => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(n as u64);
            let pts = composition_sample(spec, &mut rng, n)?;
            WeightedPointSet::uniform(d, pts, Provenance::Mc)
        }
        Method::Tqmc => {
            let base = halton_normal(&cfg.halton.generator(d, seed)?, n)?;
            transport_set_with(spec, &cfg.transport, &base, exec)
        }
        Method::Cqmc => {
            let base = halton_normal(&cfg.halton.generator(d, seed)?, n)?;
            componentwise_transport(spec, &base)
        }
        Method::Tsg => transport_set_with(spec, &cfg.transport, ladder.largest_within(n)?, exec),
        Method::Csg => componentwise_sparse_grid(spec, ladder, n),
    }
}

/// Each component gets the largest sparse grid with at most `M_j` points and
/// weights `w_j` times the grid weights.
pub fn componentwise_sparse_grid(
    spec: &MixtureSpec,
    ladder: &GridLadder,
    n: usize,
) -> Result<WeightedPointSet> {
    let counts = diophantine_split(spec.weights(), n)?;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (j, &m) in counts.iter().enumerate() {
        let grid = ladder.largest_within(m)?;
        points.extend(affine_image(spec, j, grid.points()));
        weights.extend(grid.weights().iter().map(|w| spec.weights()[j] * w));
    }
    crate::transport::renormalized_set(spec.dim(), points, weights, Provenance::Componentwise)
}

/// Gauss–Hermite sparse grids of increasing level in a fixed dimension.
#[derive(Debug, Default)]
pub struct GridLadder {
    grids: Vec<WeightedPointSet>,
}

impl GridLadder {
    /// All levels from `dim` up to the first whose size exceeds `max_points`.
    pub fn build(dim: usize, max_points: usize) -> Result<Self> {
        let mut grids = Vec::new();
        let mut level = dim;
        loop {
            let g = smolyak_grid(SparseGridLevel::gauss_hermite(level, dim))?;
            let over = g.len() > max_points;
            grids.push(g);
            if over {
                break;
            }
            level += 1;
        }
        Ok(GridLadder { grids })
    }

    /// The largest grid with at most `budget` points.
    pub fn largest_within(&self, budget: usize) -> Result<&WeightedPointSet> {
        self.grids
            .iter()
            .rev()
            .find(|g| g.len() <= budget)
            .ok_or(Error::InsufficientBudget { component: 0 })
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.grids.iter().map(|g| g.len()).collect()
    }
}

/// Least-squares slope of `ln e` against `ln n`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<f64> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(n, e)| *n > 0.0 && *e > 0.0 && e.is_finite())
        .map(|(n, e)| (n.ln(), e.ln()))
        .collect();
    if usable.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            usable: usable.len(),
            required: MIN_FIT_POINTS,
        });
    }
    let m = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / m;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = usable.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = usable.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData {
            usable: 1,
            required: MIN_FIT_POINTS,
        });
    }
    Ok(sxy / sxx)
}

/// Root mean square error over seeds for each point count.
pub fn rms_by_n(records: &[ConvergenceRecord]) -> Vec<(usize, f64)> {
    let mut groups: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in records {
        if let Some(e) = r.abs_error {
            let g = groups.entry(r.n).or_default();
            g.0 += e * e;
            g.1 += 1;
        }
    }
    groups
        .into_iter()
        .map(|(n, (s, c))| (n, (s / c as f64).sqrt()))
        .collect()
}

/// Convergence rate of one method on one integrand; zero errors are excluded.
pub fn fit_rate(records: &[ConvergenceRecord]) -> Result<f64> {
    if let Some(first) = records.first() {
        if records
            .iter()
            .any(|r| r.method != first.method || r.integrand != first.integrand)
        {
            return Err(Error::InvalidInput(
                "fit_rate expects rows of a single method and integrand".into(),
            ));
        }
    }
    let pts: Vec<(f64, f64)> = rms_by_n(records)
        .into_iter()
        .map(|(n, e)| (n as f64, e))
        .collect();
    fit_slope(&pts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub method: Method,
    pub integrand: Integrand,
    pub slope: Option<f64>,
    pub rate_guarantee: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// One fitted slope per (method, integrand) present in `records`.
pub fn summarize(records: &[ConvergenceRecord]) -> Vec<RateSummary> {
    let mut groups: BTreeMap<(Method, Integrand), Vec<ConvergenceRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.method, r.integrand))
            .or_default()
            .push(r.clone());
    }
    groups
        .into_iter()
        .map(|((method, integrand), rows)| {
            let (slope, note) = match fit_rate(&rows) {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let note = match (note, integrand.has_rate_guarantee()) {
                (None, false) => Some("discontinuous integrand: no rate guarantee".into()),
                (n, _) => n,
            };
            RateSummary {
                method,
                integrand,
                slope,
                rate_guarantee: integrand.has_rate_guarantee(),
                note,
            }
        })
        .collect()
}

pub const RECORD_CSV_HEADER: &str = "method,n,integrand,mixture,seed,abs_error,wall_time";

/// Writes the CSV header; rows follow with [`write_record_csv`].
pub fn write_records_header<W: Write>(out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{RECORD_CSV_HEADER}")
}

/// One CSV row. Skipped rows leave `abs_error` empty. With `timing` off the
/// wall time is written as zero so that reruns are byte-identical.
pub fn write_record_csv<W: Write>(
    out: &mut W,
    r: &ConvergenceRecord,
    timing: bool,
) -> std::io::Result<()> {
    let err = r.abs_error.map(fmt_f64).unwrap_or_default();
    let time = if timing { r.wall_time } else { 0.0 };
    writeln!(
        out,
        "{},{},{},{},{},{},{}",
        r.method,
        r.n,
        r.integrand,
        r.mixture,
        r.seed,
        err,
        fmt_f64(time)
    )
}

pub fn write_records_csv<W: Write>(
    mut out: W,
    records: &[ConvergenceRecord],
    timing: bool,
) -> std::io::Result<()> {
    write_records_header(&mut out)?;
    for r in records {
        write_record_csv(&mut out, r, timing)?;
    }
    Ok(())
}

pub fn write_record_json_line<W: Write>(
    out: &mut W,
    r: &ConvergenceRecord,
    timing: bool,
) -> Result<()> {
    let mut r = r.clone();
    if !timing {
        r.wall_time = 0.0;
    }
    serde_json::to_writer(&mut *out, &r)?;
    writeln!(out)?;
    Ok(())
}

/// Parses the CSV written by [`write_records_csv`]; `#` lines are skipped.
pub fn read_records_csv(text: &str) -> Result<Vec<ConvergenceRecord>> {
    let mut lines = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some(h) if h.trim() == RECORD_CSV_HEADER => {}
        other => return Err(Error::InvalidInput(format!("bad record header {other:?}"))),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(Error::InvalidInput(format!(
                    "record row {} has {} fields",
                    i + 1,
                    f.len()
                )));
            }
            let bad = |what: &str| Error::InvalidInput(format!("record row {}: bad {what}", i + 1));
            Ok(ConvergenceRecord {
                method: f[0].parse()?,
                n: f[1].parse().map_err(|_| bad("n"))?,
                integrand: f[2].parse()?,
                mixture: f[3].to_string(),
                seed: f[4].parse().map_err(|_| bad("seed"))?,
                abs_error: if f[5].is_empty() {
                    None
                } else {
                    Some(f[5].parse().map_err(|_| bad("abs_error"))?)
                },
                estimate: None,
                wall_time: f[6].parse().map_err(|_| bad("wall_time"))?,
                skipped: None,
            })
        })
        .collect()
}
