//! Smolyak sparse grids by the combination technique over Gauss–Hermite
//! rules with the linear level-to-knots map `m(ℓ) = ℓ`.

use std::collections::HashMap;

use super::{gauss_hermite_rule, Provenance, WeightedPointSet};
use crate::{Error, Result};

const MERGE_TOL: f64 = 1e-12;
const ZERO_WEIGHT: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparseRule {
    GaussHermite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparseGridLevel {
    pub level: usize,
    pub dim: usize,
    pub rule: SparseRule,
}

impl SparseGridLevel {
    pub fn gauss_hermite(level: usize, dim: usize) -> Self {
        SparseGridLevel {
            level,
            dim,
            rule: SparseRule::GaussHermite,
        }
    }
}

/// `A(q, d) = Σ_{q−d+1 ≤ |ℓ| ≤ q} (−1)^{q−|ℓ|} C(d−1, q−|ℓ|) ⊗_i U^{ℓ_i}`, with
/// coinciding nodes merged and zero-weight nodes dropped. Points come out in
/// lexicographic order.
pub fn smolyak_grid(cfg: SparseGridLevel) -> Result<WeightedPointSet> {
    let SparseGridLevel {
        level: q,
        dim: d,
        rule: SparseRule::GaussHermite,
    } = cfg;
    if d == 0 {
        return Err(Error::InvalidInput(
            "sparse grid dimension must be positive".into(),
        ));
    }
    if q < d {
        return Err(Error::EmptyGrid { level: q, dim: d });
    }
    let max_nodes = q - d + 1;
    let rules = (1..=max_nodes)
        .map(gauss_hermite_rule)
        .collect::<Result<Vec<_>>>()?;

    let mut acc: HashMap<Vec<i64>, (Vec<f64>, f64)> = HashMap::new();
    let mut index = vec![1usize; d];
    for_each_multi_index(d, q + 1 - d, q, &mut index, 0, 0, &mut |ell| {
        let norm: usize = ell.iter().sum();
        let k = q - norm;
        let coeff = if k.is_multiple_of(2) { 1.0 } else { -1.0 } * binomial(d - 1, k);
        tensor_product(ell, &rules, coeff, &mut acc);
    });

    let mut nodes: Vec<(Vec<f64>, f64)> = acc
        .into_values()
        .filter(|(_, w)| w.abs() > ZERO_WEIGHT)
        .collect();
    nodes.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let (points, weights) = nodes.into_iter().unzip();
    WeightedPointSet::new(d, points, weights, Provenance::SparseGrid)
}

/// Calls `f` on every `ℓ ∈ ℕ^d`, `ℓ_i ≥ 1`, with `lo ≤ |ℓ| ≤ hi`.
fn for_each_multi_index(
    d: usize,
    lo: usize,
    hi: usize,
    ell: &mut [usize],
    pos: usize,
    partial: usize,
    f: &mut impl FnMut(&[usize]),
) {
    if pos == d {
        if partial >= lo && partial <= hi {
            f(ell);
        }
        return;
    }
    let remaining = d - pos - 1;
    let mut v = 1;
    while partial + v + remaining <= hi {
        ell[pos] = v;
        for_each_multi_index(d, lo, hi, ell, pos + 1, partial + v, f);
        v += 1;
    }
}

fn tensor_product(
    ell: &[usize],
    rules: &[(Vec<f64>, Vec<f64>)],
    coeff: f64,
    acc: &mut HashMap<Vec<i64>, (Vec<f64>, f64)>,
) {
    let d = ell.len();
    let mut counter = vec![0usize; d];
    loop {
        let mut w = coeff;
        let mut x = Vec::with_capacity(d);
        for i in 0..d {
            let (nodes, weights) = &rules[ell[i] - 1];
            x.push(nodes[counter[i]]);
            w *= weights[counter[i]];
        }
        let key = x.iter().map(|v| (v / MERGE_TOL).round() as i64).collect();
        acc.entry(key).or_insert_with(|| (x, 0.0)).1 += w;

        let mut i = 0;
        loop {
            if i == d {
                return;
            }
            counter[i] += 1;
            if counter[i] < ell[i] {
                break;
            }
            counter[i] = 0;
            i += 1;
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimension_is_the_gauss_rule() {
        for q in 1..6 {
            let grid = smolyak_grid(SparseGridLevel::gauss_hermite(q, 1)).unwrap();
            let (x, w) = gauss_hermite_rule(q).unwrap();
            assert_eq!(grid.len(), q);
            for i in 0..q {
                assert_eq!(grid.points()[i][0], x[i]);
                assert!((grid.weights()[i] - w[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lowest_level_is_single_point() {
        let grid = smolyak_grid(SparseGridLevel::gauss_hermite(2, 2)).unwrap();
        assert_eq!(grid.points(), &[vec![0.0, 0.0]]);
        assert_eq!(grid.weights(), &[1.0]);
    }

    #[test]
    fn level_below_dimension_is_empty() {
        assert!(matches!(
            smolyak_grid(SparseGridLevel::gauss_hermite(2, 3)),
            Err(Error::EmptyGrid { level: 2, dim: 3 })
        ));
    }

    #[test]
    fn second_level_in_two_dimensions() {
        // (1,2) + (2,1) - (1,1): four axis points at weight 1/2, center at -1
        let grid = smolyak_grid(SparseGridLevel::gauss_hermite(3, 2)).unwrap();
        assert_eq!(grid.len(), 5);
        let center = grid
            .points()
            .iter()
            .position(|p| p == &vec![0.0, 0.0])
            .unwrap();
        assert!((grid.weights()[center] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn weights_sum_to_one_and_counts_grow() {
        for d in 1..=4 {
            let mut last = 0;
            for q in d..d + 5 {
                let grid = smolyak_grid(SparseGridLevel::gauss_hermite(q, d)).unwrap();
                assert!((grid.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(grid.len() > last, "d={d} q={q}");
                last = grid.len();
            }
        }
    }

    #[test]
    fn grid_is_symmetric_under_axis_swap() {
        let grid = smolyak_grid(SparseGridLevel::gauss_hermite(6, 2)).unwrap();
        for (p, w) in grid.points().iter().zip(grid.weights()) {
            let swapped = vec![p[1], p[0]];
            let k = grid
                .points()
                .iter()
                .position(|x| x == &swapped)
                .expect("swapped node exists");
            assert!((grid.weights()[k] - w).abs() < 1e-14);
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(1, 0), 1.0);
        assert_eq!(binomial(1, 2), 0.0);
    }
}
