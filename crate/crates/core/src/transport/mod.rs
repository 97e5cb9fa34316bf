//! ODE transport of point sets from the reference to a mixture.
//!
//! The flow of `ẋ = v_t(x)` with
//! `v_t = Σ_j λ_j(t, x) (a_j + (A_j − I) A_{j,t}⁻¹ (x − t a_j))`
//! pushes `ρ_ref` onto `ρ_t` for every `t`, where `λ_j = w_j ρ_{j,t} / ρ_t`.

mod componentwise;
mod field;
mod ode;

pub(crate) use componentwise::renormalized as renormalized_set;
pub use componentwise::{affine_image, componentwise_transport, diophantine_split};
pub use field::{intermediate_log_density, velocity, IntermediateState};
pub use ode::MAX_HALVINGS;

use serde::{Deserialize, Serialize};

use crate::distributions::MixtureSpec;
use crate::exec::Execution;
use crate::pointsets::{Provenance, WeightedPointSet};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Scheme {
    #[serde(rename = "rk4")]
    Rk4,
    #[default]
    #[serde(rename = "dopri45")]
    Dopri45,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Rk4 => "rk4",
            Scheme::Dopri45 => "dopri45",
        })
    }
}

/// Integrator settings. `steps` applies to `rk4`, the tolerances and
/// `max_steps` to `dopri45`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportConfig {
    pub scheme: Scheme,
    pub steps: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            scheme: Scheme::Dopri45,
            steps: 64,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_steps: 100_000,
        }
    }
}

impl TransportConfig {
    pub fn rk4(steps: usize) -> Self {
        TransportConfig {
            scheme: Scheme::Rk4,
            steps,
            ..Self::default()
        }
    }

    pub fn dopri45(abs_tol: f64, rel_tol: f64) -> Self {
        TransportConfig {
            scheme: Scheme::Dopri45,
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidInput("steps must be at least 1".into()));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidInput("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// `Φ₁(x0)`: the time-one flow of the transport ODE.
pub fn transport_point(spec: &MixtureSpec, cfg: &TransportConfig, x0: &[f64]) -> Result<Vec<f64>> {
    flow(spec, cfg, x0, 1.0)
}

/// `Φ_t(x0)` for `t ∈ [0, 1]`.
pub fn flow(spec: &MixtureSpec, cfg: &TransportConfig, x0: &[f64], t: f64) -> Result<Vec<f64>> {
    flow_observed(spec, cfg, x0, t, &mut |_, _| {})
}

/// As [`flow`], calling `observer(t, x)` at the start and after every accepted step.
pub fn flow_observed(
    spec: &MixtureSpec,
    cfg: &TransportConfig,
    x0: &[f64],
    t: f64,
    observer: &mut dyn FnMut(f64, &[f64]),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    spec.check_point(x0)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("time {t} outside [0, 1]")));
    }
    ode::integrate(spec, cfg, x0, t, None, observer)
}

/// Shared stage data when every trajectory of a set visits the same times.
fn stage_table(
    spec: &MixtureSpec,
    cfg: &TransportConfig,
    t: f64,
    n: usize,
) -> Result<Option<field::StageTable>> {
    if cfg.scheme != Scheme::Rk4 || n < 2 || t == 0.0 {
        return Ok(None);
    }
    field::StageTable::new(spec, ode::rk4_stage_times(cfg.steps, t)).map(Some)
}

fn flow_in_set(
    spec: &MixtureSpec,
    cfg: &TransportConfig,
    table: Option<&field::StageTable>,
    x0: &[f64],
    t: f64,
    observer: &mut dyn FnMut(f64, &[f64]),
) -> Result<Vec<f64>> {
    spec.check_point(x0)?;
    ode::integrate(spec, cfg, x0, t, table, observer)
}

/// Transports every point with weights carried over unchanged.
pub fn transport_set(
    spec: &MixtureSpec,
    cfg: &TransportConfig,
    pts: &WeightedPointSet,
) -> Result<WeightedPointSet> {
    transport_set_with(spec, cfg, pts, Execution::default())
}

pub fn transport_set_with(
    spec: &MixtureSpec,
    cfg: &TransportConfig,
    pts: &WeightedPointSet,
    exec: Execution,
) -> Result<WeightedPointSet> {
    flow_set_with(spec, cfg, pts, 1.0, exec)
}

/// Pushes a point set to time `t`.
pub fn flow_set_with(
    spec: &MixtureSpec,
    cfg: &TransportConfig,
    pts: &WeightedPointSet,
    t: f64,
    exec: Execution,
) -> Result<WeightedPointSet> {
    if pts.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: pts.dim(),
        });
    }
    cfg.validate()?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("time {t} outside [0, 1]")));
    }
    let table = stage_table(spec, cfg, t, pts.len())?;
    let points = exec
        .try_map(pts.len(), |i| {
            flow_in_set(
                spec,
                cfg,
                table.as_ref(),
                &pts.points()[i],
                t,
                &mut |_, _| {},
            )
        })
        .map_err(|(index, e)| Error::TransportFailed {
            index,
            source: Box::new(e),
        })?;
    Ok(pts.with_points(points, Provenance::Transported))
}

/// One accepted integrator step of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub index: usize,
    pub t: f64,
    pub x: Vec<f64>,
}

/// [`transport_set_with`] that also returns every accepted step, ordered by
/// point index and then time.
pub fn transport_set_traced(
    spec: &MixtureSpec,
    cfg: &TransportConfig,
    pts: &WeightedPointSet,
    exec: Execution,
) -> Result<(WeightedPointSet, Vec<TrajectoryStep>)> {
    if pts.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: pts.dim(),
        });
    }
    cfg.validate()?;
    let table = stage_table(spec, cfg, 1.0, pts.len())?;
    let traced = exec
        .try_map(pts.len(), |index| {
            let mut steps = Vec::new();
            let end = flow_in_set(
                spec,
                cfg,
                table.as_ref(),
                &pts.points()[index],
                1.0,
                &mut |t, x| {
                    steps.push(TrajectoryStep {
                        index,
                        t,
                        x: x.to_vec(),
                    })
                },
            )?;
            Ok((end, steps))
        })
        .map_err(|(index, e)| Error::TransportFailed {
            index,
            source: Box::new(e),
        })?;
    let mut points = Vec::with_capacity(traced.len());
    let mut steps = Vec::new();
    for (p, s) in traced {
        points.push(p);
        steps.extend(s);
    }
    Ok((pts.with_points(points, Provenance::Transported), steps))
}

#[cfg(test)]
mod tests;
