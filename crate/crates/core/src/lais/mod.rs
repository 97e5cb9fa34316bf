//! Layered adaptive importance sampling.
//!
//! An upper layer of random-walk Metropolis–Hastings chains supplies centres
//! `m_i`; the proposal is the equal-weight mixture `ρ̂ = (1/K) Σ_i N(m_i, σ² I)`.
//! The lower layer draws from `ρ̂` either by stratified sampling (DM-LAIS) or
//! by transporting Halton points to `ρ̂` (TQMC-LAIS), and expectations come
//! from the self-normalised estimator `Σ ω_n f(z_n) / Σ ω_n` with
//! `ω_n = ρ_tar(z_n) / ρ̂(z_n)`.

mod sweep;

pub use sweep::{lais_sweep, sweep_slope, LaisMethod, LaisRecord, Sweep, LAIS_CSV_HEADER};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distributions::{LogDensity, MixtureSpec};
use crate::exec::Execution;
use crate::linalg::Matrix;
use crate::pointsets::{halton_normal, Halton, WeightedPointSet, DEFAULT_LEAP, DEFAULT_SKIP};
use crate::transport::{transport_set_with, TransportConfig};
use crate::{Error, Result};

const INIT_SD: f64 = 2.0;
const LOWER_LAYER_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaisConfig {
    pub chains: usize,
    pub steps: usize,
    pub samples_per_component: usize,
    pub proposal_sigma: f64,
    pub kernel_sigma: f64,
    pub stride: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub transport: TransportConfig,
}

impl Default for LaisConfig {
    fn default() -> Self {
        LaisConfig {
            chains: 10,
            steps: 20,
            samples_per_component: 100,
            proposal_sigma: 1.0,
            kernel_sigma: 1.0,
            stride: 1,
            burn_in: 0,
            seed: 0,
            transport: TransportConfig::rk4(16),
        }
    }
}

impl LaisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0
            || self.steps == 0
            || self.samples_per_component == 0
            || self.stride == 0
        {
            return Err(Error::InvalidInput(
                "chains, steps, samples_per_component and stride must be at least 1".into(),
            ));
        }
        if !(self.proposal_sigma > 0.0 && self.kernel_sigma > 0.0) {
            return Err(Error::InvalidInput(
                "proposal_sigma and kernel_sigma must be positive".into(),
            ));
        }
        if self.burn_in >= self.steps {
            return Err(Error::InvalidInput(
                "burn_in must be smaller than steps".into(),
            ));
        }
        self.transport.validate()
    }
}

/// Centres collected from the chains, in chain-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperLayer {
    pub centers: Vec<Vec<f64>>,
    pub proposed: usize,
    pub accepted: usize,
    /// Proposals rejected because the target was not finite there.
    pub non_finite: usize,
}

impl UpperLayer {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposed as f64
    }
}

fn target_log_density<T: LogDensity + ?Sized>(target: &T, x: &[f64]) -> Option<f64> {
    match target.log_density(x) {
        Ok(l) if !l.is_nan() && l != f64::INFINITY => Some(l),
        _ => None,
    }
}

/// Runs `C` random-walk chains for `T` steps from `N(0, 4 I)` starts and
/// keeps every `stride`-th state after `burn_in` steps.
pub fn upper_layer<T: LogDensity + ?Sized>(target: &T, cfg: &LaisConfig) -> Result<UpperLayer> {
    cfg.validate()?;
    let d = target.dim();
    let chains = Execution::default().map(cfg.chains, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(c as u64);
        let mut x: Vec<f64> = (0..d)
            .map(|_| INIT_SD * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut lx = target_log_density(target, &x).unwrap_or(f64::NEG_INFINITY);
        let (mut accepted, mut non_finite) = (0, 0);
        let mut kept = Vec::new();
        let mut proposal = vec![0.0; d];
        for step in 1..=cfg.steps {
            for (p, xi) in proposal.iter_mut().zip(&x) {
                *p = xi + cfg.proposal_sigma * rng.sample::<f64, _>(StandardNormal);
            }
            let u: f64 = rng.random();
            match target_log_density(target, &proposal).filter(|l| l.is_finite()) {
                Some(lp) => {
                    if lx == f64::NEG_INFINITY || u.ln() < lp - lx {
                        x.copy_from_slice(&proposal);
                        lx = lp;
                        accepted += 1;
                    }
                }
                None => non_finite += 1,
            }
            if step > cfg.burn_in && (step - cfg.burn_in).is_multiple_of(cfg.stride) {
                kept.push(x.clone());
            }
        }
        (kept, accepted, non_finite)
    });
    let mut layer = UpperLayer {
        centers: Vec::new(),
        proposed: cfg.chains * cfg.steps,
        accepted: 0,
        non_finite: 0,
    };
    for (kept, a, nf) in chains {
        layer.centers.extend(kept);
        layer.accepted += a;
        layer.non_finite += nf;
    }
    Ok(layer)
}

/// Equal-weight Gaussian mixture with shifts `centers` and scales `σ I`.
pub fn build_proposal(centers: &[Vec<f64>], kernel_sigma: f64) -> Result<MixtureSpec> {
    let Some(first) = centers.first() else {
        return Err(Error::InvalidInput(
            "proposal needs at least one centre".into(),
        ));
    };
    let k = centers.len();
    MixtureSpec::gaussian(
        vec![1.0 / k as f64; k],
        centers.to_vec(),
        vec![Matrix::scaled_identity(first.len(), kernel_sigma); k],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnisResult {
    pub estimate: Vec<f64>,
    /// `(Σ ω)² / Σ ω²`, with quadrature weights folded into `ω`.
    pub ess: f64,
    pub n_total: usize,
}

/// Self-normalised importance sampling over a weighted point set drawn
/// from (or transported to) `proposal`.
pub fn snis<T, F>(
    target: &T,
    proposal: &MixtureSpec,
    pts: &WeightedPointSet,
    f: F,
) -> Result<SnisResult>
where
    T: LogDensity + ?Sized,
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let log_w = Execution::default().try_map(pts.len(), |i| -> Result<f64> {
        let z = &pts.points()[i];
        let lt = target_log_density(target, z).unwrap_or(f64::NEG_INFINITY);
        Ok(lt - proposal.log_density(z)? + pts.weights()[i].ln())
    });
    let log_w = log_w.map_err(|(_, e)| e)?;
    let anchor = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !anchor.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - anchor).exp()).collect();
    let total: f64 = w.iter().sum();
    let total_sq: f64 = w.iter().map(|v| v * v).sum();
    let mut estimate: Vec<f64> = Vec::new();
    for (wi, z) in w.iter().zip(pts.points()) {
        if *wi == 0.0 {
            continue;
        }
        let fz = f(z);
        if estimate.is_empty() {
            estimate = vec![0.0; fz.len()];
        }
        for (e, v) in estimate.iter_mut().zip(&fz) {
            *e += wi * v;
        }
    }
    estimate.iter_mut().for_each(|e| *e /= total);
    Ok(SnisResult {
        estimate,
        ess: total * total / total_sq,
        n_total: pts.len(),
    })
}

/// Stratified lower layer: exactly `M` draws from every kernel `N(m_i, σ² I)`.
pub fn stratified_lower_layer(centers: &[Vec<f64>], cfg: &LaisConfig) -> Result<WeightedPointSet> {
    let d = centers.first().map_or(0, Vec::len);
    let m = cfg.samples_per_component;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(LOWER_LAYER_STREAM);
    let mut points = Vec::with_capacity(centers.len() * m);
    for c in centers {
        for _ in 0..m {
            points.push(
                c.iter()
                    .map(|ci| ci + cfg.kernel_sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
        }
    }
    WeightedPointSet::uniform(d, points, crate::pointsets::Provenance::Mc)
}

/// Halton points mapped to `N(0, I)` and transported to the proposal.
pub fn transported_lower_layer(
    proposal: &MixtureSpec,
    cfg: &LaisConfig,
    n: usize,
) -> Result<WeightedPointSet> {
    let base = halton_normal(&Halton::new(proposal.dim(), DEFAULT_SKIP, DEFAULT_LEAP)?, n)?;
    transport_set_with(proposal, &cfg.transport, &base, Execution::default())
}

/// DM-LAIS: stratified lower layer and full-mixture denominator.
pub fn dm_lais<T, F>(target: &T, cfg: &LaisConfig, f: F) -> Result<SnisResult>
where
    T: LogDensity + ?Sized,
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let layer = upper_layer(target, cfg)?;
    dm_lais_with_centers(target, &layer.centers, cfg, f)
}

pub fn dm_lais_with_centers<T, F>(
    target: &T,
    centers: &[Vec<f64>],
    cfg: &LaisConfig,
    f: F,
) -> Result<SnisResult>
where
    T: LogDensity + ?Sized,
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let proposal = build_proposal(centers, cfg.kernel_sigma)?;
    let pts = stratified_lower_layer(centers, cfg)?;
    snis(target, &proposal, &pts, f)
}

/// TQMC-LAIS: `C·T·M` (after thinning) transported Halton points replace the
/// stratified draws.
pub fn tqmc_lais<T, F>(target: &T, cfg: &LaisConfig, f: F) -> Result<SnisResult>
where
    T: LogDensity + ?Sized,
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let layer = upper_layer(target, cfg)?;
    tqmc_lais_with_centers(target, &layer.centers, cfg, f)
}

pub fn tqmc_lais_with_centers<T, F>(
    target: &T,
    centers: &[Vec<f64>],
    cfg: &LaisConfig,
    f: F,
) -> Result<SnisResult>
where
    T: LogDensity + ?Sized,
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let proposal = build_proposal(centers, cfg.kernel_sigma)?;
    let pts = transported_lower_layer(&proposal, cfg, centers.len() * cfg.samples_per_component)?;
    snis(target, &proposal, &pts, f)
}

/// The demo target: five well-separated Gaussian modes in the plane with
/// equal weights. Means and covariances are a quarter-scale version of a
/// common multimodal LAIS benchmark so that chains started from `N(0, 4 I)`
/// reach every mode within a few dozen steps.
pub fn demo_target() -> MixtureSpec {
    let means = [
        [-2.5, -2.5],
        [0.0, 4.0],
        [3.25, 2.0],
        [-2.25, 1.75],
        [3.5, -3.5],
    ];
    let covs = [
        [[2.0, 0.6], [0.6, 1.0]],
        [[2.0, -0.4], [-0.4, 2.0]],
        [[2.0, 0.8], [0.8, 2.0]],
        [[3.0, 0.0], [0.0, 0.5]],
        [[2.0, -0.1], [-0.1, 2.0]],
    ];
    let scales = covs
        .iter()
        .map(|c| {
            let m = Matrix::from_rows(&[c[0].to_vec(), c[1].to_vec()])
                .unwrap()
                .scale(0.25);
            m.cholesky()
                .expect("demo covariances are positive definite")
        })
        .collect();
    MixtureSpec::gaussian(
        vec![0.2; 5],
        means.iter().map(|m| m.to_vec()).collect(),
        scales,
    )
    .expect("demo target is valid")
}

#[cfg(test)]
mod tests;
