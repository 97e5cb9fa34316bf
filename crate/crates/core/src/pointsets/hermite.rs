//! Probabilists' Gauss–Hermite rules via Golub–Welsch.

use crate::{Error, Result};

/// Nodes and weights of the `n`-point rule for the standard normal weight.
/// Weights sum to one; nodes are ascending and exactly symmetric about zero.
pub fn gauss_hermite_rule(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "Gauss-Hermite rule needs at least one node".into(),
        ));
    }
    // Jacobi matrix: zero diagonal, off-diagonal sqrt(k)
    let mut diag = vec![0.0; n];
    let mut off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
    off.push(0.0);
    let mut first_row = vec![0.0; n];
    first_row[0] = 1.0;
    tridiagonal_ql(&mut diag, &mut off, &mut first_row)?;

    let mut pairs: Vec<(f64, f64)> = diag
        .into_iter()
        .zip(first_row.into_iter().map(|z| z * z))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();

    let mut sym_nodes = vec![0.0; n];
    let mut sym_weights = vec![0.0; n];
    for i in 0..n {
        let r = n - 1 - i;
        sym_nodes[i] = 0.5 * (nodes[i] - nodes[r]);
        sym_weights[i] = 0.5 * (weights[i] + weights[r]);
    }
    let total: f64 = sym_weights.iter().sum();
    sym_weights.iter_mut().for_each(|w| *w /= total);
    Ok((sym_nodes, sym_weights))
}

/// Implicit-shift QL on a symmetric tridiagonal matrix.
///
/// On return `diag` holds the eigenvalues and `z` the first components of the
/// corresponding orthonormal eigenvectors (start with `z = e₁`).
fn tridiagonal_ql(diag: &mut [f64], off: &mut [f64], z: &mut [f64]) -> Result<()> {
    let n = diag.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::Numerical("tridiagonal QL did not converge".into()));
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}
