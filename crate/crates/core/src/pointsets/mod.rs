//! Reference-distributed point sets: Halton, the uniform-to-normal map,
//! Gauss–Hermite sparse grids and seeded Monte Carlo.

mod halton;
mod hermite;
mod normal;
mod smolyak;

pub use halton::{halton, radical_inverse, Halton, DEFAULT_LEAP, DEFAULT_SKIP, PRIMES};
pub use hermite::gauss_hermite_rule;
pub use normal::{
    inverse_erf, inverse_erfc, normal_cdf, normal_quantile, uniform_coordinate_to_normal,
    uniform_to_normal, UNIFORM_CLAMP,
};
pub use smolyak::{smolyak_grid, SparseGridLevel, SparseRule};

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Mc,
    QmcHalton,
    SparseGrid,
    Transported,
    Componentwise,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Mc => "mc",
            Provenance::QmcHalton => "qmc-halton",
            Provenance::SparseGrid => "sparse-grid",
            Provenance::Transported => "transported",
            Provenance::Componentwise => "componentwise",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mc" => Provenance::Mc,
            "qmc-halton" => Provenance::QmcHalton,
            "sparse-grid" => Provenance::SparseGrid,
            "transported" => Provenance::Transported,
            "componentwise" => Provenance::Componentwise,
            other => return Err(Error::InvalidInput(format!("unknown provenance `{other}`"))),
        })
    }
}

/// Points in `R^d` with quadrature weights summing to one.
/// Sparse-grid weights may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPointSet {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    provenance: Provenance,
}

impl WeightedPointSet {
    pub fn new(
        dim: usize,
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        if points
            .iter()
            .flatten()
            .chain(&weights)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(
                "point set contains non-finite values".into(),
            ));
        }
        if !points.is_empty() {
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::InvalidInput(format!(
                    "weights sum to {total}, not 1"
                )));
            }
        }
        Ok(WeightedPointSet {
            dim,
            points,
            weights,
            provenance,
        })
    }

    /// Equal weights `1/n`.
    pub fn uniform(dim: usize, points: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self> {
        let n = points.len();
        Self::new(dim, points, vec![1.0 / n as f64; n], provenance)
    }

    pub fn empty(dim: usize, provenance: Provenance) -> Self {
        WeightedPointSet {
            dim,
            points: Vec::new(),
            weights: Vec::new(),
            provenance,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// True when every weight equals `1/n` up to rounding.
    pub fn has_uniform_weights(&self) -> bool {
        let n = self.len() as f64;
        self.weights.iter().all(|w| (w * n - 1.0).abs() < 1e-9)
    }

    pub(crate) fn with_points(&self, points: Vec<Vec<f64>>, provenance: Provenance) -> Self {
        WeightedPointSet {
            dim: self.dim,
            points,
            weights: self.weights.clone(),
            provenance,
        }
    }

    /// Writes `w,x1,...,xd` CSV, preceded by `# ` comment lines.
    /// Floats use 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        write!(out, "w")?;
        for i in 1..=self.dim {
            write!(out, ",x{i}")?;
        }
        writeln!(out)?;
        for (p, w) in self.points.iter().zip(&self.weights) {
            write!(out, "{}", fmt_f64(*w))?;
            for v in p {
                write!(out, ",{}", fmt_f64(*v))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Reads the CSV produced by [`write_csv`](Self::write_csv); `#` lines are skipped.
    pub fn read_csv<R: BufRead>(input: R, provenance: Provenance) -> Result<Self> {
        let mut lines = input
            .lines()
            .map(|l| l.map_err(Error::from))
            .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty() || s.starts_with('#')));
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("point-set CSV is empty".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"w")
            || cols
                .iter()
                .skip(1)
                .enumerate()
                .any(|(i, c)| *c != format!("x{}", i + 1))
        {
            return Err(Error::InvalidInput(format!(
                "bad point-set header `{header}`"
            )));
        }
        let dim = cols.len() - 1;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            let vals = line
                .trim()
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidInput(format!("row {}: {e}", row + 1)))?;
            if vals.len() != dim + 1 {
                return Err(Error::InvalidInput(format!(
                    "row {} has {} fields, expected {}",
                    row + 1,
                    vals.len(),
                    dim + 1
                )));
            }
            weights.push(vals[0]);
            points.push(vals[1..].to_vec());
        }
        Self::new(dim, points, weights, provenance)
    }
}

/// 17 significant digits, shortest exponent form.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// i.i.d. standard normal points with weights `1/n`.
pub fn mc_points<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> WeightedPointSet {
    let points = (0..n)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    WeightedPointSet::uniform(d, points, Provenance::Mc).expect("normal draws are finite")
}

/// `n` Halton points mapped coordinatewise to `N(0, I)`.
pub fn halton_normal(halton: &Halton, n: usize) -> Result<WeightedPointSet> {
    let points = uniform_to_normal(&halton.points(n))?;
    WeightedPointSet::uniform(halton.dim(), points, Provenance::QmcHalton)
}
