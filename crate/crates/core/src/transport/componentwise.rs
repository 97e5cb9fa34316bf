use crate::distributions::MixtureSpec;
use crate::pointsets::{Provenance, WeightedPointSet};
use crate::{Error, Result};

/// `M_j = ⌊w_j N⌋` for all but the last component, which takes the rest.
pub fn diophantine_split(weights: &[f64], n: usize) -> Result<Vec<usize>> {
    if weights.iter().any(|&w| w < 0.0) {
        return Err(Error::Unsupported(
            "componentwise transport needs nonnegative weights".into(),
        ));
    }
    let Some((_, head)) = weights.split_last() else {
        return Err(Error::InvalidInput("no components".into()));
    };
    let mut counts: Vec<usize> = head
        .iter()
        .map(|&w| (w * n as f64).floor() as usize)
        .collect();
    let used: usize = counts.iter().sum();
    counts.push(n.saturating_sub(used));
    if let Some(component) = counts.iter().position(|&m| m == 0) {
        return Err(Error::InsufficientBudget { component });
    }
    Ok(counts)
}

/// `A_j X + a_j` applied to every point of `pts`.
pub fn affine_image(spec: &MixtureSpec, component: usize, pts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let a = &spec.shifts()[component];
    let m = spec.scales()[component].matrix();
    pts.iter()
        .map(|x| {
            let mut y = m.mul_vec(x);
            y.iter_mut().zip(a).for_each(|(yi, ai)| *yi += ai);
            y
        })
        .collect()
}

/// Splits `N` equal-weight reference points over the components in index
/// order and maps each block affinely; point `n` of block `j` gets weight
/// `w_j / M_j`.
pub fn componentwise_transport(
    spec: &MixtureSpec,
    pts: &WeightedPointSet,
) -> Result<WeightedPointSet> {
    if pts.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: pts.dim(),
        });
    }
    if !pts.has_uniform_weights() {
        return Err(Error::InvalidInput(
            "componentwise transport needs equal input weights".into(),
        ));
    }
    let counts = diophantine_split(spec.weights(), pts.len())?;
    let mut points = Vec::with_capacity(pts.len());
    let mut weights = Vec::with_capacity(pts.len());
    let mut start = 0;
    for (j, &m) in counts.iter().enumerate() {
        points.extend(affine_image(spec, j, &pts.points()[start..start + m]));
        weights.extend(std::iter::repeat_n(spec.weights()[j] / m as f64, m));
        start += m;
    }
    renormalized(spec.dim(), points, weights, Provenance::Componentwise)
}

/// Builds a point set whose weights sum to one up to rounding in the summands.
pub(crate) fn renormalized(
    dim: usize,
    points: Vec<Vec<f64>>,
    mut weights: Vec<f64>,
    provenance: Provenance,
) -> Result<WeightedPointSet> {
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() < 1e-9 {
        weights.iter_mut().for_each(|w| *w /= total);
    }
    WeightedPointSet::new(dim, points, weights, provenance)
}
