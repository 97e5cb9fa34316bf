use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::{MixtureSpec, ReferenceDensity};
use crate::linalg::Matrix;
use crate::{Error, Result};

/// Composition sampling: draw `X ~ ρ_ref`, pick component `ν` with
/// probability `w_ν` by inverting the cumulative weights, return `A_ν X + a_ν`.
pub fn composition_sample<R: Rng + ?Sized>(
    spec: &MixtureSpec,
    rng: &mut R,
    n: usize,
) -> Result<Vec<Vec<f64>>> {
    if spec.has_negative_weights() {
        return Err(Error::Unsupported(
            "composition sampling needs nonnegative weights".into(),
        ));
    }
    let d = spec.dim();
    let mut cumulative = Vec::with_capacity(spec.num_components());
    let mut acc = 0.0;
    for &w in spec.weights() {
        acc += w;
        cumulative.push(acc);
    }
    let last_positive = spec.weights().iter().rposition(|&w| w > 0.0).unwrap_or(0);
    let mut x = vec![0.0; d];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        match spec.reference() {
            ReferenceDensity::StandardNormal { .. } => {
                x.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            }
            ReferenceDensity::UniformOpenCube { .. } => {
                x.iter_mut().for_each(|v| *v = sample_open_unit(rng));
            }
        }
        let z: f64 = rng.random();
        // component k owns [cum_{k-1}, cum_k); zero-weight components own nothing
        let k = cumulative.partition_point(|&c| c <= z).min(last_positive);
        let mut y = spec.scales()[k].matrix().mul_vec(&x);
        for (yi, ai) in y.iter_mut().zip(&spec.shifts()[k]) {
            *yi += ai;
        }
        out.push(y);
    }
    Ok(out)
}

fn sample_open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Lower-triangular Bartlett factor `L` of a `W_d(I, ν)` draw: `W = L Lᵀ`.
/// Diagonal entries are `sqrt(χ²_{ν−i})`, the strict lower triangle is standard normal.
pub fn wishart_bartlett<R: Rng + ?Sized>(d: usize, dof: f64, rng: &mut R) -> Matrix {
    let mut l = Matrix::zeros(d);
    for i in 0..d {
        let chi2 = ChiSquared::new(dof - i as f64).expect("degrees of freedom exceed dimension");
        l[(i, i)] = chi2.sample(rng).sqrt();
        for j in 0..i {
            l[(i, j)] = rng.sample(StandardNormal);
        }
    }
    l
}

/// Random equal-weight Gaussian mixture for the benchmark studies.
///
/// Centers are i.i.d. `N(0, I_d)`. Each scale is the Cholesky factor of
/// `d · C̃` with `C̃ ~ W_d(ν⁻¹ I_d, ν)` and `ν = d + 4`. Since the Bartlett
/// factor `L` is already lower triangular with positive diagonal, that
/// Cholesky factor is exactly `sqrt(d/ν) L`.
pub fn random_mixture<R: Rng + ?Sized>(d: usize, j: usize, rng: &mut R) -> Result<MixtureSpec> {
    if d == 0 || j == 0 {
        return Err(Error::InvalidInput(format!(
            "random mixture needs d, J >= 1 (got d={d}, J={j})"
        )));
    }
    let dof = (d + 4) as f64;
    let factor = (d as f64 / dof).sqrt();
    let mut shifts = Vec::with_capacity(j);
    let mut scales = Vec::with_capacity(j);
    for _ in 0..j {
        shifts.push((0..d).map(|_| rng.sample(StandardNormal)).collect());
        scales.push(wishart_bartlett(d, dof, rng).scale(factor));
    }
    let weights = vec![1.0 / j as f64; j];
    MixtureSpec::new(
        ReferenceDensity::StandardNormal { dim: d },
        weights,
        shifts,
        scales,
    )
}
