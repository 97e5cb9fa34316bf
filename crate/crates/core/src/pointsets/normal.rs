//! Inverse error function and the coordinatewise uniform-to-normal map.

use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2};

use crate::{Error, Result};

/// Smallest / largest admissible uniform coordinate after clamping.
pub const UNIFORM_CLAMP: f64 = f64::EPSILON;

/// `erf⁻¹(y)` for `|y| < 1`.
///
/// A polynomial initial guess is refined by Newton steps on `erf`, or on
/// `ln erfc` once `|y| > 1/2` so that the tail keeps full relative precision.
pub fn inverse_erf(y: f64) -> Result<f64> {
    if !(y.abs() < 1.0) {
        return Err(Error::Domain(y));
    }
    if y == 0.0 {
        return Ok(y);
    }
    let a = y.abs();
    let x = if a <= 0.5 {
        let mut x = initial_guess(a);
        for _ in 0..2 {
            let r = libm::erf(x) - a;
            x -= r / (FRAC_2_SQRT_PI * (-x * x).exp());
        }
        x
    } else {
        // 1 - a is exact for a in [0.5, 1)
        erfc_inv_unit(1.0 - a)
    };
    Ok(x.copysign(y))
}

/// `erfc⁻¹(z)` for `0 < z < 2`.
pub fn inverse_erfc(z: f64) -> Result<f64> {
    if !(z > 0.0 && z < 2.0) {
        return Err(Error::Domain(z));
    }
    if z > 1.0 {
        Ok(-erfc_inv_unit(2.0 - z))
    } else {
        Ok(erfc_inv_unit(z))
    }
}

/// `erfc⁻¹(z)` for `z ∈ (0, 1]`.
///
/// Newton steps are taken on `ln erfc`, which is close to quadratic in the
/// tail and stays representable until `erfc` itself underflows.
fn erfc_inv_unit(z: f64) -> f64 {
    let w = -(z * (2.0 - z)).ln();
    let mut x = if w < TAIL_W {
        initial_guess_from_w(w, 1.0 - z)
    } else {
        let l = -z.ln();
        (l - 0.5 * (PI * l).ln()).sqrt()
    };
    let log_z = z.ln();
    let mut polish = false;
    for _ in 0..MAX_NEWTON {
        let e = libm::erfc(x);
        let dx = (e.ln() - log_z) * e / (FRAC_2_SQRT_PI * (-x * x).exp());
        x += dx;
        // quadratic convergence: one step after |dx| drops below 1e-8 reaches full precision
        if polish || dx == 0.0 {
            break;
        }
        polish = dx.abs() < 1e-8 * x.abs();
    }
    x
}

const TAIL_W: f64 = 36.0;
const MAX_NEWTON: usize = 50;

fn initial_guess(y: f64) -> f64 {
    initial_guess_from_w(-((1.0 - y) * (1.0 + y)).ln(), y)
}

/// Giles' single-precision approximation, `w = -ln(1 - y²)`.
#[allow(clippy::excessive_precision)]
fn initial_guess_from_w(w: f64, y: f64) -> f64 {
    let p = if w < 5.0 {
        let w = w - 2.5;
        let mut p = 2.81022636e-08;
        p = 3.43273939e-07 + p * w;
        p = -3.5233877e-06 + p * w;
        p = -4.39150654e-06 + p * w;
        p = 0.00021858087 + p * w;
        p = -0.00125372503 + p * w;
        p = -0.00417768164 + p * w;
        p = 0.246640727 + p * w;
        1.50140941 + p * w
    } else {
        let w = w.sqrt() - 3.0;
        let mut p = -0.000200214257;
        p = 0.000100950558 + p * w;
        p = 0.00134934322 + p * w;
        p = -0.00367342844 + p * w;
        p = 0.00573950773 + p * w;
        p = -0.0076224613 + p * w;
        p = 0.00943887047 + p * w;
        p = 1.00167406 + p * w;
        2.83297682 + p * w
    };
    p * y
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal quantile, `√2 erf⁻¹(2u − 1)` evaluated as `−√2 erfc⁻¹(2u)`.
pub fn normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(u));
    }
    Ok(-SQRT_2 * inverse_erfc(2.0 * u)?)
}

/// Coordinatewise map from the open unit cube to `N(0, I)`.
///
/// Coordinates are clamped to `[2⁻⁵², 1 − 2⁻⁵²]`; anything outside `[0, 1]`
/// is rejected.
pub fn uniform_to_normal(points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    points
        .iter()
        .map(|p| p.iter().map(|&u| uniform_coordinate_to_normal(u)).collect())
        .collect()
}

pub fn uniform_coordinate_to_normal(u: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidInput(format!(
            "uniform coordinate {u} outside [0, 1]"
        )));
    }
    normal_quantile(u.clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_oddness() {
        assert_eq!(inverse_erf(0.0).unwrap(), 0.0);
        for &y in &[
            1e-300,
            1e-8,
            0.1,
            0.5,
            0.5000001,
            0.9,
            0.999999,
            1.0 - 2f64.powi(-52),
        ] {
            assert_eq!(inverse_erf(-y).unwrap(), -inverse_erf(y).unwrap());
        }
    }

    #[test]
    fn domain_errors() {
        for y in [1.0, -1.0, 1.5, f64::NAN] {
            assert!(matches!(inverse_erf(y), Err(Error::Domain(_))));
        }
        assert!(inverse_erfc(0.0).is_err());
        assert!(inverse_erfc(2.0).is_err());
    }

    // 60-digit mpmath values
    const ERFINV: [(f64, f64); 8] = [
        (0.1, 0.08885599049425769),
        (0.5, 0.4769362762044699),
        (0.9, 1.1630871536766743),
        (0.999999, 3.458910737275499),
        (1e-10, 8.862269254527581e-11),
        (0.3, 0.2724627147267543),
        (0.75, 0.8134198475976185),
        (0.99999999999, 4.812924058944833),
    ];
    const ERFCINV: [(f64, f64); 9] = [
        (1e-300, 26.209469960516124),
        (1e-100, 15.065574702592645),
        (1e-20, 6.601580622355143),
        (1e-10, 4.572824967389486),
        (0.001, 2.3267537655135246),
        (0.5, 0.4769362762044699),
        (1.0, 0.0),
        (1.5, -0.4769362762044699),
        (1.999999999999, -5.042021094113473),
    ];

    fn rel(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            a.abs()
        } else {
            ((a - b) / b).abs()
        }
    }

    #[test]
    fn inverse_erf_matches_high_precision() {
        for (y, want) in ERFINV {
            for s in [1.0, -1.0] {
                let got = inverse_erf(s * y).unwrap();
                assert!(rel(got, s * want) <= 4e-16, "y={y}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn inverse_erfc_matches_high_precision_into_the_tail() {
        for (z, want) in ERFCINV {
            let got = inverse_erfc(z).unwrap();
            assert!(rel(got, want) <= 1e-15, "z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn round_trip_through_statrs_erf() {
        // statrs is only accurate to about 1e-11 here, so this is a loose
        // cross-check against a second implementation
        for (y, _) in ERFINV {
            let back = statrs::function::erf::erf(inverse_erf(y).unwrap());
            assert!(rel(back, y) <= 1e-10, "y={y}: {back}");
        }
    }

    #[test]
    fn quantile_values() {
        let q = normal_quantile(0.975).unwrap();
        assert!(rel(q, 1.9599639845400538) <= 4e-16, "{q}");
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!(rel(normal_quantile(0.025).unwrap(), -q) <= 4e-16);
    }

    #[test]
    fn uniform_map_examples() {
        let out = uniform_to_normal(&[vec![0.5, 0.5, 0.5]]).unwrap();
        assert_eq!(out[0], vec![0.0, 0.0, 0.0]);
        let a = uniform_coordinate_to_normal(0.6).unwrap();
        let b = uniform_coordinate_to_normal(0.4).unwrap();
        assert!(a > b);
        assert!(uniform_coordinate_to_normal(0.0).unwrap().is_finite());
        assert!(uniform_coordinate_to_normal(1.0).unwrap().is_finite());
        assert!(uniform_coordinate_to_normal(1.0 + 1e-9).is_err());
        assert!(uniform_coordinate_to_normal(-1e-9).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        // Above x ~ 4 the CDF value is within a few ulps of 1 and no inverse
        // can recover x to 1e-12; the bound there follows the conditioning
        // ulp(1) / phi(x).
        for k in 0..=1200 {
            let x = -6.0 + k as f64 * 0.01;
            let back = uniform_coordinate_to_normal(normal_cdf(x)).unwrap();
            let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let tol = if x <= 4.0 {
                1e-12
            } else {
                2.0 * f64::EPSILON / pdf
            };
            assert!((back - x).abs() < tol, "x={x}: {back}");
        }
    }
}
