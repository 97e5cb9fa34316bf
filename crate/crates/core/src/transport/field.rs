use crate::distributions::{MixtureSpec, ScaleKind};
use crate::linalg::Lu;
use crate::{Error, Result};

const MEMO_SLOTS: usize = 8;
/// Largest number of stored factor entries (`J · d² · times`) a shared table keeps.
const TABLE_LU_BUDGET: usize = 1 << 22;

/// The intermediate mixture `ρ_t` at a fixed time, with the factorizations of
/// `A_{j,t} = t A_j + (1 − t) I` that dense scales need.
#[derive(Debug, Clone)]
pub struct IntermediateState<'a> {
    spec: &'a MixtureSpec,
    t: f64,
    lus: Vec<Option<Lu>>,
}

impl<'a> IntermediateState<'a> {
    pub fn new(spec: &'a MixtureSpec, t: f64) -> Result<Self> {
        check_time(t)?;
        let lus = spec
            .scales()
            .iter()
            .map(|s| s.interpolated_lu(t))
            .collect::<Vec<_>>();
        if let Some(j) = spec
            .scales()
            .iter()
            .zip(&lus)
            .position(|(s, lu)| s.kind() == ScaleKind::General && lu.is_none())
        {
            return Err(Error::Numerical(format!(
                "A_{{{j},t}} is singular at t = {t}"
            )));
        }
        Ok(IntermediateState { spec, t, lus })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.spec.log_density_at(self.t, x, Some(&self.lus))
    }
}

/// `log ρ_t(x)`; equals the reference at `t = 0` and the target at `t = 1`.
pub fn intermediate_log_density(spec: &MixtureSpec, t: f64, x: &[f64]) -> Result<f64> {
    check_time(t)?;
    spec.log_density_at(t, x, None)
}

/// The velocity `v_t(x)` of the transport ODE.
pub fn velocity(spec: &MixtureSpec, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; spec.dim()];
    VelocityField::new(spec).eval(t, x, &mut out)?;
    Ok(out)
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("time {t} outside [0, 1]")));
    }
    Ok(())
}

/// Per-time data shared by every trajectory of a fixed-step integration, where
/// all points visit the same stage times.
pub(crate) struct StageTable {
    times: Vec<f64>,
    /// `ln |w_k| − log det A_{k,t}` per time and component.
    log_norms: Vec<Vec<f64>>,
    lus: Option<Vec<Vec<Option<Lu>>>>,
}

impl StageTable {
    pub(crate) fn new(spec: &MixtureSpec, mut times: Vec<f64>) -> Result<Self> {
        times.sort_by(f64::total_cmp);
        times.dedup();
        let j = spec.num_components();
        let dense = spec.scales().iter().any(|s| s.kind() == ScaleKind::General);
        let keep_lus = dense && j * spec.dim().pow(2) * times.len() <= TABLE_LU_BUDGET;
        let mut log_norms = Vec::with_capacity(times.len());
        let mut lus = Vec::new();
        for &t in &times {
            let state = if dense {
                IntermediateState::new(spec, t)?.lus
            } else {
                vec![None; j]
            };
            log_norms.push(
                spec.weights()
                    .iter()
                    .zip(spec.scales())
                    .zip(&state)
                    .map(|((w, s), lu)| w.abs().ln() - s.interpolated_log_det(t, lu.as_ref()))
                    .collect(),
            );
            if keep_lus {
                lus.push(state);
            }
        }
        Ok(StageTable {
            times,
            log_norms,
            lus: keep_lus.then_some(lus),
        })
    }

    fn find(&self, t: f64) -> Option<usize> {
        self.times.binary_search_by(|s| s.total_cmp(&t)).ok()
    }
}

/// Reusable evaluator of `v_t`, one per trajectory.
///
/// Holds scratch buffers and a small memo of factorizations keyed on `t`, so
/// that repeated stage times do not refactor dense scales.
pub(crate) struct VelocityField<'a> {
    spec: &'a MixtureSpec,
    table: Option<&'a StageTable>,
    log_abs_w: Vec<f64>,
    dense: bool,
    memo: Vec<(f64, Vec<Option<Lu>>)>,
    next_slot: usize,
    u: Vec<f64>,
    y: Vec<f64>,
    vj: Vec<f64>,
}

impl<'a> VelocityField<'a> {
    pub(crate) fn new(spec: &'a MixtureSpec) -> Self {
        Self::with_table(spec, None)
    }

    pub(crate) fn with_table(spec: &'a MixtureSpec, table: Option<&'a StageTable>) -> Self {
        let d = spec.dim();
        VelocityField {
            spec,
            table,
            log_abs_w: spec.weights().iter().map(|w| w.abs().ln()).collect(),
            dense: spec.scales().iter().any(|s| s.kind() == ScaleKind::General),
            memo: Vec::new(),
            next_slot: 0,
            u: vec![0.0; d],
            y: vec![0.0; d],
            vj: vec![0.0; d],
        }
    }

    fn factorizations(&mut self, t: f64) -> Result<Option<usize>> {
        if !self.dense {
            return Ok(None);
        }
        if let Some(i) = self.memo.iter().position(|(s, _)| *s == t) {
            return Ok(Some(i));
        }
        let state = IntermediateState::new(self.spec, t)?;
        let entry = (t, state.lus);
        if self.memo.len() < MEMO_SLOTS {
            self.memo.push(entry);
            Ok(Some(self.memo.len() - 1))
        } else {
            let slot = self.next_slot;
            self.memo[slot] = entry;
            self.next_slot = (slot + 1) % MEMO_SLOTS;
            Ok(Some(slot))
        }
    }

    /// Writes `v_t(x)` into `out` and returns `log ρ_t(x)`.
    ///
    /// Responsibilities are accumulated as a streaming softmax; terms of
    /// negative weight enter with their sign.
    pub(crate) fn eval(&mut self, t: f64, x: &[f64], out: &mut [f64]) -> Result<f64> {
        check_time(t)?;
        self.spec.check_point(x)?;
        let hit = self.table.and_then(|tb| tb.find(t).map(|i| (tb, i)));
        let shared_lus = hit.and_then(|(tb, i)| tb.lus.as_ref().map(|l| &l[i]));
        let slot = if shared_lus.is_some() {
            None
        } else {
            self.factorizations(t)?
        };
        let spec = self.spec;
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut anchor = f64::NEG_INFINITY;
        let mut total = 0.0;
        for (k, &w) in spec.weights().iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let lu = match shared_lus {
                Some(l) => l[k].as_ref(),
                None => slot.and_then(|s| self.memo[s].1[k].as_ref()),
            };
            let l = match hit {
                Some((tb, i)) => {
                    spec.component_solve(k, t, x, lu, &mut self.u, &mut self.y)?;
                    spec.reference().log_density(&self.y) + tb.log_norms[i][k]
                }
                None => {
                    self.log_abs_w[k]
                        + spec.component_log_density(k, t, x, lu, &mut self.u, &mut self.y)?
                }
            };
            if l == f64::NEG_INFINITY {
                continue;
            }
            if l > anchor {
                let r = (anchor - l).exp();
                total *= r;
                out.iter_mut().for_each(|o| *o *= r);
                anchor = l;
            }
            let c = w.signum() * (l - anchor).exp();
            component_velocity(spec, k, &self.y, &mut self.vj);
            total += c;
            for (o, v) in out.iter_mut().zip(&self.vj) {
                *o += c * v;
            }
        }
        if !(total > 0.0) || anchor == f64::NEG_INFINITY {
            return Err(Error::NonPositiveDensity { x: x.to_vec() });
        }
        out.iter_mut().for_each(|o| *o /= total);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite velocity at t = {t}, x = {x:?}"
            )));
        }
        Ok(anchor + total.ln())
    }
}

/// `v_{j,t} = a_j + (A_j − I) y` with `y = A_{j,t}⁻¹ (x − t a_j)`.
fn component_velocity(spec: &MixtureSpec, k: usize, y: &[f64], out: &mut [f64]) {
    let a = &spec.shifts()[k];
    let scale = &spec.scales()[k];
    match scale.kind() {
        ScaleKind::Identity => out.copy_from_slice(a),
        ScaleKind::Diagonal => {
            let m = scale.matrix();
            for i in 0..y.len() {
                out[i] = a[i] + (m[(i, i)] - 1.0) * y[i];
            }
        }
        _ => {
            scale.matrix().mul_vec_into(y, out);
            for i in 0..y.len() {
                out[i] += a[i] - y[i];
            }
        }
    }
}
