//! Reference densities and mixtures of shifted, scaled copies of them.
//!
//! A mixture has density
//! `ρ(x) = Σ_j w_j |det A_j|⁻¹ ρ_ref(A_j⁻¹ (x − a_j))`, evaluated in log space.

mod sampling;
mod scale;

pub use sampling::{composition_sample, random_mixture, wishart_bartlett};
pub use scale::{Scale, ScaleKind};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::linalg::{Lu, Matrix};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const WEIGHT_SUM_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;
const POSITIVITY_PROBES: usize = 10_000;
const POSITIVITY_SEED: u64 = 0x0005_eed0_f0a1;

/// A log-density known up to an additive constant.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceDensity {
    StandardNormal {
        dim: usize,
    },
    /// Uniform on the open cube `(0,1)^d`.
    UniformOpenCube {
        dim: usize,
    },
}

impl ReferenceDensity {
    pub fn dim(&self) -> usize {
        match *self {
            ReferenceDensity::StandardNormal { dim }
            | ReferenceDensity::UniformOpenCube { dim } => dim,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, ReferenceDensity::StandardNormal { .. })
    }

    /// `log ρ_ref(z)`. The uniform density is `-inf` outside its support.
    pub fn log_density(&self, z: &[f64]) -> f64 {
        match self {
            ReferenceDensity::StandardNormal { dim } => {
                -0.5 * crate::linalg::norm_sq(z) - 0.5 * (*dim as f64) * LN_2PI
            }
            ReferenceDensity::UniformOpenCube { .. } => {
                if z.iter().all(|&v| v > 0.0 && v < 1.0) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            ReferenceDensity::StandardNormal { .. } => "gaussian",
            ReferenceDensity::UniformOpenCube { .. } => "uniform",
        }
    }

    fn from_tag(tag: &str, dim: usize) -> Result<Self> {
        match tag {
            "gaussian" | "normal" => Ok(ReferenceDensity::StandardNormal { dim }),
            "uniform" => Ok(ReferenceDensity::UniformOpenCube { dim }),
            other => Err(Error::InvalidMixture(format!(
                "unknown reference `{other}`"
            ))),
        }
    }
}

/// Mean and covariance of a distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

/// A validated mixture specification. Immutable once built.
#[derive(Debug, Clone)]
pub struct MixtureSpec {
    reference: ReferenceDensity,
    weights: Vec<f64>,
    shifts: Vec<Vec<f64>>,
    scales: Vec<Scale>,
    allow_negative_weights: bool,
    has_negative: bool,
    log_abs_weights: Vec<f64>,
}

impl MixtureSpec {
    /// Builds a mixture with nonnegative weights.
    pub fn new(
        reference: ReferenceDensity,
        weights: Vec<f64>,
        shifts: Vec<Vec<f64>>,
        scales: Vec<Matrix>,
    ) -> Result<Self> {
        Self::build(reference, weights, shifts, scales, false)
    }

    /// Builds a mixture that may carry negative weights.
    ///
    /// Negative weights require a Gaussian reference, identity scales, and a
    /// density that is positive on a probe set of composition-style samples
    /// plus the component centers.
    pub fn new_signed(
        reference: ReferenceDensity,
        weights: Vec<f64>,
        shifts: Vec<Vec<f64>>,
        scales: Vec<Matrix>,
    ) -> Result<Self> {
        Self::build(reference, weights, shifts, scales, true)
    }

    /// Gaussian mixture with standard normal reference.
    pub fn gaussian(weights: Vec<f64>, shifts: Vec<Vec<f64>>, scales: Vec<Matrix>) -> Result<Self> {
        let dim = shifts.first().map(Vec::len).unwrap_or(0);
        Self::new(
            ReferenceDensity::StandardNormal { dim },
            weights,
            shifts,
            scales,
        )
    }

    fn build(
        reference: ReferenceDensity,
        weights: Vec<f64>,
        shifts: Vec<Vec<f64>>,
        scales: Vec<Matrix>,
        allow_negative_weights: bool,
    ) -> Result<Self> {
        let dim = reference.dim();
        let j = weights.len();
        if dim == 0 {
            return Err(Error::InvalidMixture("dimension must be positive".into()));
        }
        if j == 0 {
            return Err(Error::InvalidMixture(
                "mixture needs at least one component".into(),
            ));
        }
        if shifts.len() != j || scales.len() != j {
            return Err(Error::InvalidMixture(format!(
                "{j} weights but {} shifts and {} scales",
                shifts.len(),
                scales.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidMixture("weights must be finite".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMixture(format!(
                "weights sum to {total}, not 1"
            )));
        }
        for (k, a) in shifts.iter().enumerate() {
            if a.len() != dim {
                return Err(Error::InvalidMixture(format!(
                    "shift {k} has length {}, expected {dim}",
                    a.len()
                )));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidMixture(format!("shift {k} is not finite")));
            }
        }
        let scales = scales
            .into_iter()
            .enumerate()
            .map(|(k, m)| {
                if m.dim() != dim {
                    return Err(Error::InvalidMixture(format!(
                        "scale {k} is {0}x{0}, expected {dim}x{dim}",
                        m.dim()
                    )));
                }
                Scale::new(m).map_err(|e| Error::InvalidMixture(format!("scale {k}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;

        let has_negative = weights.iter().any(|&w| w < 0.0);
        if has_negative {
            if !allow_negative_weights {
                return Err(Error::InvalidMixture(
                    "negative weights require allow_negative_weights".into(),
                ));
            }
            if !reference.is_gaussian() {
                return Err(Error::InvalidMixture(
                    "negative weights require a Gaussian reference".into(),
                ));
            }
            if let Some(k) = scales
                .iter()
                .position(|s| !s.matrix().is_identity(SYMMETRY_TOL))
            {
                return Err(Error::InvalidMixture(format!(
                    "negative weights require identity scales; scale {k} is not the identity"
                )));
            }
        }
        let log_abs_weights = weights.iter().map(|w| w.abs().ln()).collect();
        let spec = MixtureSpec {
            reference,
            weights,
            shifts,
            scales,
            allow_negative_weights,
            has_negative,
            log_abs_weights,
        };
        if has_negative {
            spec.check_positivity_probes()?;
        }
        Ok(spec)
    }

    fn check_positivity_probes(&self) -> Result<()> {
        let abs: Vec<f64> = self.weights.iter().map(|w| w.abs()).collect();
        let total: f64 = abs.iter().sum();
        let probe_mix = MixtureSpec {
            weights: abs.iter().map(|w| w / total).collect(),
            log_abs_weights: abs.iter().map(|w| (w / total).ln()).collect(),
            has_negative: false,
            allow_negative_weights: false,
            ..self.clone()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(POSITIVITY_SEED);
        let probes = composition_sample(&probe_mix, &mut rng, POSITIVITY_PROBES)?;
        for x in probes.iter().chain(self.shifts.iter()) {
            self.log_density_at(1.0, x, None)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.reference.dim()
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn reference(&self) -> ReferenceDensity {
        self.reference
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn shifts(&self) -> &[Vec<f64>] {
        &self.shifts
    }

    pub fn scales(&self) -> &[Scale] {
        &self.scales
    }

    pub fn has_negative_weights(&self) -> bool {
        self.has_negative
    }

    pub fn allows_negative_weights(&self) -> bool {
        self.allow_negative_weights
    }

    /// `log ρ_tar(x)`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.log_density_at(1.0, x, None)
    }

    /// `log ρ_t(x)` of the intermediate mixture with scales `t A_j + (1 − t) I`
    /// and shifts `t a_j`. `lus` holds factorizations of the interpolated
    /// scales for components of general kind; computed on the fly if absent.
    pub(crate) fn log_density_at(
        &self,
        t: f64,
        x: &[f64],
        lus: Option<&[Option<Lu>]>,
    ) -> Result<f64> {
        self.check_point(x)?;
        let d = self.dim();
        let mut u = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut terms = Vec::with_capacity(self.num_components());
        for k in 0..self.num_components() {
            if self.weights[k] == 0.0 {
                continue;
            }
            let lu = lus.and_then(|l| l[k].as_ref());
            let ell = self.component_log_density(k, t, x, lu, &mut u, &mut y)?;
            terms.push((self.weights[k].signum(), self.log_abs_weights[k] + ell));
        }
        signed_log_sum(&terms).ok_or_else(|| Error::NonPositiveDensity { x: x.to_vec() })
    }

    /// `log ρ_{j,t}(x)`; leaves `y = A_{j,t}⁻¹ (x − t a_j)` in `y`.
    pub(crate) fn component_log_density(
        &self,
        k: usize,
        t: f64,
        x: &[f64],
        lu: Option<&Lu>,
        u: &mut [f64],
        y: &mut [f64],
    ) -> Result<f64> {
        for ((ui, xi), ai) in u.iter_mut().zip(x).zip(&self.shifts[k]) {
            *ui = xi - t * ai;
        }
        let log_det = self.scales[k].interpolated_solve(t, u, y, lu)?;
        Ok(self.reference.log_density(y) - log_det)
    }

    /// Writes `y = A_{k,t}⁻¹ (x − t a_k)` without the density normalization.
    pub(crate) fn component_solve(
        &self,
        k: usize,
        t: f64,
        x: &[f64],
        lu: Option<&Lu>,
        u: &mut [f64],
        y: &mut [f64],
    ) -> Result<()> {
        for ((ui, xi), ai) in u.iter_mut().zip(x).zip(&self.shifts[k]) {
            *ui = xi - t * ai;
        }
        self.scales[k].interpolated_solve_only(t, u, y, lu)
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite point {x:?}")));
        }
        Ok(())
    }

    /// Mean and covariance; Gaussian reference only.
    pub fn moments(&self) -> Result<MomentSummary> {
        if !self.reference.is_gaussian() {
            return Err(Error::Unsupported(
                "moments require a Gaussian reference".into(),
            ));
        }
        let d = self.dim();
        let mut mean = vec![0.0; d];
        let mut second = Matrix::zeros(d);
        for ((w, a), s) in self.weights.iter().zip(&self.shifts).zip(&self.scales) {
            let g = s.matrix().gram();
            for i in 0..d {
                mean[i] += w * a[i];
                for k in 0..d {
                    second[(i, k)] += w * (g[(i, k)] + a[i] * a[k]);
                }
            }
        }
        for i in 0..d {
            for k in 0..d {
                second[(i, k)] -= mean[i] * mean[k];
            }
        }
        Ok(MomentSummary {
            mean,
            covariance: second,
        })
    }

    /// Hex SHA-256 of the canonical JSON document.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(&self.to_document()).expect("mixture serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_document(&self) -> MixtureDocument {
        MixtureDocument {
            weights: self.weights.clone(),
            shifts: self.shifts.clone(),
            scales: self.scales.iter().map(|s| s.matrix().rows()).collect(),
            reference: self.reference.tag().to_string(),
            dim: self.dim(),
            allow_negative_weights: self.allow_negative_weights,
        }
    }

    pub fn from_document(doc: MixtureDocument) -> Result<Self> {
        let reference = ReferenceDensity::from_tag(&doc.reference, doc.dim)?;
        let scales = doc
            .scales
            .iter()
            .map(|rows| Matrix::from_rows(rows).map_err(Error::InvalidMixture))
            .collect::<Result<Vec<_>>>()?;
        Self::build(
            reference,
            doc.weights,
            doc.shifts,
            scales,
            doc.allow_negative_weights,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("mixture serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(s)?)
    }
}

impl LogDensity for MixtureSpec {
    fn dim(&self) -> usize {
        MixtureSpec::dim(self)
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        MixtureSpec::log_density(self, x)
    }
}

/// JSON form of a mixture. Scales are full row-major matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureDocument {
    pub weights: Vec<f64>,
    pub shifts: Vec<Vec<f64>>,
    pub scales: Vec<Vec<Vec<f64>>>,
    pub reference: String,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_negative_weights: bool,
}

/// `log |Σ s_k exp(l_k)|` for signed terms, or `None` if the sum is not positive.
///
/// All-positive input goes through the usual max-shifted log-sum-exp; mixed
/// signs are summed in linear scale anchored at the largest magnitude.
pub(crate) fn signed_log_sum(terms: &[(f64, f64)]) -> Option<f64> {
    let anchor = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    if anchor == f64::NEG_INFINITY {
        return None;
    }
    if anchor == f64::INFINITY || anchor.is_nan() {
        return None;
    }
    let s: f64 = terms
        .iter()
        .map(|&(sign, l)| sign * (l - anchor).exp())
        .sum();
    if s > 0.0 {
        Some(anchor + s.ln())
    } else {
        None
    }
}

/// The three-component Gaussian mixture in two dimensions used by the examples,
/// the CLI and the acceptance suite. Its mean is (0.2, -0.9).
pub fn three_gaussians() -> MixtureSpec {
    let c = 2.0 / 3.0;
    MixtureSpec::gaussian(
        vec![0.3, 0.4, 0.3],
        vec![vec![2.0, -1.0], vec![-1.0, 0.0], vec![0.0, -2.0]],
        vec![
            Matrix::scaled_identity(2, c),
            Matrix::from_rows(&[vec![c, 0.0], vec![-c, c]]).unwrap(),
            Matrix::diagonal(&[2.0 * c, 0.5 * c]),
        ],
    )
    .expect("example mixture is valid")
}
