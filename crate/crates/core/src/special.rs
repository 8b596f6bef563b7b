//! Special functions not covered by `statrs`.

use crate::quadrature::{integrate_with_breaks, QuadratureSpec};
use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::PI;

/// Bessel function of the first kind, order zero, from its integral
/// representation `(1/π) ∫₀^π cos(x sin θ) dθ`.
pub fn bessel_j0(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let spec = QuadratureSpec {
        rel_tol: 1e-12,
        abs_tol: 1e-12,
        max_subdivisions: 2000,
        ..QuadratureSpec::default()
    };
    let pieces = (x.abs() / PI).ceil().max(1.0) as usize;
    let breaks: Vec<f64> = (1..pieces).map(|k| PI * k as f64 / pieces as f64).collect();
    let est = integrate_with_breaks(|t: f64| (x * t.sin()).cos(), 0.0, PI, &breaks, &spec)
        .map(|e| e.value)
        .unwrap_or_else(|e| e.partial_estimate().unwrap_or(f64::NAN));
    est / PI
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Gaussian upper tail `Q(x) = P{Z > x}`.
pub fn q_function(x: f64) -> f64 {
    standard_normal().sf(x)
}

/// Inverse of [`q_function`] on `(0, 1)`.
pub fn q_inverse(p: f64) -> f64 {
    standard_normal().inverse_cdf(1.0 - p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j0_reference_values() {
        assert_eq!(bessel_j0(0.0), 1.0);
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-10);
        assert!((bessel_j0(2.404_825_557_695_773) - 0.0).abs() < 1e-10);
        assert!((bessel_j0(10.0) - (-0.245_935_764_451_348_3)).abs() < 1e-10);
        assert!((bessel_j0(-3.0) - bessel_j0(3.0)).abs() < 1e-14);
    }

    #[test]
    fn q_function_symmetry_and_inverse() {
        assert!((q_function(0.0) - 0.5).abs() < 1e-15);
        assert!((q_function(1.0) + q_function(-1.0) - 1.0).abs() < 1e-14);
        assert!(q_inverse(0.5).abs() < 1e-12);
        assert!((q_inverse(1e-3) - 3.090_232_306_167_813).abs() < 1e-7);
    }
}
