//! Complex special functions: Bessel K of real order, Chebyshev polynomials,
//! the right-half-plane square root and the distinguished logarithm.

mod bessel;
mod chebyshev;
mod log_track;
pub(crate) mod quadrature;

pub use bessel::{bessel_k, scaled_bessel_k, BesselRoute, ScaledK, MAX_ORDER as BESSEL_MAX_ORDER};
pub use chebyshev::{chebyshev_t, chebyshev_t_reversed, MAX_DEGREE as CHEBYSHEV_MAX_DEGREE};
pub(crate) use log_track::continue_to;
pub use log_track::{distinguished_log, log_on_uniform_grid, LogTrack, StepPolicy};

use num_complex::Complex64;

/// Square root with `Re w >= 0`, and `Im w >= 0` when `Re w = 0`.
///
/// Zero maps to zero; callers that need a strictly positive real part
/// check for it themselves.
pub fn principal_sqrt_right(z: Complex64) -> Complex64 {
    let w = z.sqrt();
    if w.re < 0.0 || (w.re == 0.0 && w.im < 0.0) {
        -w
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_branch() {
        assert_eq!(principal_sqrt_right(Complex64::new(4.0, 0.0)), Complex64::new(2.0, 0.0));
        assert_eq!(principal_sqrt_right(Complex64::new(-1.0, 0.0)), Complex64::new(0.0, 1.0));
        assert_eq!(principal_sqrt_right(Complex64::new(-1.0, -0.0)), Complex64::new(0.0, 1.0));
        // alpha = 1, beta = 0, t = 1: alpha^2 - (i t + beta)^2 = 2
        let (alpha, beta, t) = (1.0f64, 0.0f64, 1.0f64);
        let arg = Complex64::from(alpha * alpha) - Complex64::new(beta, t).powi(2);
        let w = principal_sqrt_right(arg);
        assert!((w - Complex64::new(2f64.sqrt(), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn sqrt_squares_back() {
        for &(re, im) in &[(3.0, -4.0), (-2.0, 0.5), (-2.0, -0.5), (0.0, -1.0), (1e-10, 7.0)] {
            let z = Complex64::new(re, im);
            let w = principal_sqrt_right(z);
            assert!(w.re >= 0.0);
            assert!((w * w - z).norm() <= 1e-14 * z.norm().max(1.0));
        }
    }
}
