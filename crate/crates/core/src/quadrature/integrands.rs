use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::pointsets::WeightedPointSet;
use crate::{Error, Result};

/// The benchmark integrands. `y*` is the point with every coordinate 1/2.
///
/// The `~` variants are the `d`-th-root versions of f4, f5, f6, and the
/// indicator of the ball of radius `d` for f10. `One` is the constant 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Integrand {
    One,
    F1,
    F2,
    F3,
    F4,
    F5,
    F6,
    F7,
    F8,
    F9,
    F10,
    F4Tilde,
    F5Tilde,
    F6Tilde,
    F10Tilde,
}

impl Integrand {
    pub const ALL: [Integrand; 15] = [
        Integrand::One,
        Integrand::F1,
        Integrand::F2,
        Integrand::F3,
        Integrand::F4,
        Integrand::F5,
        Integrand::F6,
        Integrand::F7,
        Integrand::F8,
        Integrand::F9,
        Integrand::F10,
        Integrand::F4Tilde,
        Integrand::F5Tilde,
        Integrand::F6Tilde,
        Integrand::F10Tilde,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Integrand::One => "one",
            Integrand::F1 => "f1",
            Integrand::F2 => "f2",
            Integrand::F3 => "f3",
            Integrand::F4 => "f4",
            Integrand::F5 => "f5",
            Integrand::F6 => "f6",
            Integrand::F7 => "f7",
            Integrand::F8 => "f8",
            Integrand::F9 => "f9",
            Integrand::F10 => "f10",
            Integrand::F4Tilde => "f4~",
            Integrand::F5Tilde => "f5~",
            Integrand::F6Tilde => "f6~",
            Integrand::F10Tilde => "f10~",
        }
    }

    /// Indicators are discontinuous; no convergence rate is expected for them.
    pub fn has_rate_guarantee(self) -> bool {
        !matches!(self, Integrand::F10 | Integrand::F10Tilde)
    }

    /// Radius of the ball for the indicator integrands.
    pub fn ball_radius(self, d: usize) -> Option<f64> {
        match self {
            Integrand::F10 => Some(0.5),
            Integrand::F10Tilde => Some(d as f64),
            _ => None,
        }
    }

    /// `f(y)`, with `d = y.len()`.
    pub fn eval(self, y: &[f64]) -> f64 {
        let d = y.len() as f64;
        let mean = || y.iter().sum::<f64>() / d;
        let dist_sq = || y.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>();
        match self {
            Integrand::One => 1.0,
            Integrand::F1 => y.iter().map(|v| (v - 0.5).abs()).sum(),
            Integrand::F2 => dist_sq(),
            Integrand::F3 => y.iter().map(|v| 2.0 * v - 1.0).sum::<f64>().powi(4),
            Integrand::F4 => y.iter().map(|v| 2.0 * (2.0 * v - 1.0).abs()).product(),
            Integrand::F5 => y.iter().map(|v| FRAC_PI_2 * (PI * v).sin()).product(),
            Integrand::F6 => y.iter().map(|v| 1.0 / (1.0 + (v - 0.5).powi(2))).product(),
            Integrand::F7 => (-dist_sq() / (d * d)).exp(),
            Integrand::F8 => mean().exp(),
            Integrand::F9 => (0.3 + mean()).cos(),
            Integrand::F10 | Integrand::F10Tilde => {
                let r = self.ball_radius(y.len()).unwrap();
                if dist_sq() <= r * r {
                    1.0
                } else {
                    0.0
                }
            }
            Integrand::F4Tilde => geometric_mean(y.iter().map(|v| 2.0 * (2.0 * v - 1.0).abs())),
            Integrand::F5Tilde => {
                let factors = y.iter().map(|v| FRAC_PI_2 * (PI * v).sin());
                let sign: f64 = factors.clone().map(f64::signum).product();
                sign * geometric_mean(factors.map(f64::abs))
            }
            Integrand::F6Tilde => geometric_mean(y.iter().map(|v| 1.0 / (1.0 + (v - 0.5).powi(2)))),
        }
    }
}

/// `(Π x_i)^{1/n}` for nonnegative factors, computed in log space.
fn geometric_mean(factors: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut log_sum = 0.0;
    for f in factors {
        if f == 0.0 {
            return 0.0;
        }
        log_sum += f.ln();
        n += 1;
    }
    (log_sum / n as f64).exp()
}

impl fmt::Display for Integrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Integrand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        // `f4t` is accepted for `f4~`
        let alias = s.strip_suffix('t').map(|b| format!("{b}~"));
        Integrand::ALL
            .into_iter()
            .find(|i| i.name() == s || Some(i.name()) == alias.as_deref())
            .ok_or_else(|| Error::UnknownIntegrand(s.to_string()))
    }
}

impl Serialize for Integrand {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Integrand {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Evaluates integrand `id` (for example `"f9"` or `"f4~"`) at `y`.
pub fn eval_integrand(id: &str, y: &[f64]) -> Result<f64> {
    Ok(id.parse::<Integrand>()?.eval(y))
}

/// `Σ_n w_n f(y_n)`.
pub fn estimate(pts: &WeightedPointSet, f: Integrand) -> f64 {
    pts.points()
        .iter()
        .zip(pts.weights())
        .map(|(y, w)| w * f.eval(y))
        .sum()
}

/// [`estimate`] that checks the point dimension first.
pub fn estimate_checked(pts: &WeightedPointSet, f: Integrand, dim: usize) -> Result<f64> {
    if pts.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: pts.dim(),
        });
    }
    Ok(estimate(pts, f))
}
