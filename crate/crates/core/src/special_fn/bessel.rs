//! Modified Bessel function of the second kind, real order, complex argument
//! in the open right half-plane.
//!
//! The workhorse is the integral representation
//!
//! ```text
//! K_v(z) = int_0^inf exp(-z cosh u) cosh(v u) du,   Re z > 0,
//! ```
//!
//! evaluated in scaled form `K_v(z) e^z` so that large arguments do not
//! underflow. Half-integer order `|v| = 1/2` has the exact form
//! `sqrt(pi / 2z)`, and large `|z|` uses the Hankel expansion when it
//! converges to working precision.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::quadrature;
use crate::error::{Error, Result};

/// Largest supported `|order|`.
pub const MAX_ORDER: f64 = 50.0;

const OP: &str = "special_fn::bessel_k";

/// Evaluation route for [`scaled_bessel_k`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BesselRoute {
    /// Closed form, asymptotic expansion or quadrature, whichever applies.
    #[default]
    Auto,
    /// Always integrate the integral representation.
    Quadrature,
}

/// `K_v(z) e^z` represented as `exp(log_scale) * mantissa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledK {
    pub log_scale: f64,
    pub mantissa: Complex64,
}

impl ScaledK {
    /// Principal-branch logarithm of `K_v(z) e^z`.
    pub fn ln(&self) -> Complex64 {
        self.mantissa.ln() + self.log_scale
    }
}

fn check_args(order: f64, z: Complex64) -> Result<()> {
    if !order.is_finite() || order.abs() > MAX_ORDER {
        return Err(Error::domain(OP, format!("order {order} outside supported range |v| <= {MAX_ORDER}")));
    }
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::domain(OP, "non-finite argument"));
    }
    if z.re <= 0.0 {
        return Err(Error::domain(OP, format!("argument {z} has non-positive real part")));
    }
    Ok(())
}

/// `K_order(z)` for `Re z > 0` and `|order| <= 50`.
pub fn bessel_k(order: f64, z: Complex64) -> Result<Complex64> {
    let s = scaled_bessel_k(order, z, BesselRoute::Auto)?;
    let log_mag = s.log_scale - z.re;
    if log_mag + s.mantissa.norm().ln() > 709.0 {
        return Err(Error::range(OP, format!("K_{order}({z}) overflows")));
    }
    Ok(s.mantissa * Complex64::new(log_mag, -z.im).exp())
}

/// `K_order(z) e^z` in overflow-safe form.
pub fn scaled_bessel_k(order: f64, z: Complex64, route: BesselRoute) -> Result<ScaledK> {
    check_args(order, z)?;
    let nu = order.abs();
    if route == BesselRoute::Auto {
        if nu == 0.5 {
            return Ok(ScaledK { log_scale: 0.0, mantissa: (Complex64::from(PI) / (2.0 * z)).sqrt() });
        }
        if let Some(m) = hankel_expansion(nu, z) {
            return Ok(ScaledK { log_scale: 0.0, mantissa: m });
        }
    }
    integral_representation(nu, z)
}

/// Hankel asymptotic series; `None` when it does not reach full precision
/// before its terms start to grow.
fn hankel_expansion(nu: f64, z: Complex64) -> Option<Complex64> {
    if z.norm() < 25.0 {
        return None;
    }
    let mu = 4.0 * nu * nu;
    let inv_8z = 1.0 / (8.0 * z);
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let mut last = 1.0_f64;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / k as f64 * inv_8z;
        let size = term.norm();
        sum += term;
        if size <= 1e-17 * sum.norm() {
            return Some(sum * (Complex64::from(PI) / (2.0 * z)).sqrt());
        }
        if size > last && k > 2 {
            return None;
        }
        last = size;
    }
    None
}

/// Real part of the exponent of the dominant half of the integrand after
/// the `e^z` scaling: `-x (cosh u - 1) + nu u`.
fn envelope_exponent(x: f64, nu: f64, u: f64) -> f64 {
    -x * (u.cosh() - 1.0) + nu * u
}

fn integral_representation(nu: f64, z: Complex64) -> Result<ScaledK> {
    let x = z.re;
    let peak = if nu > 0.0 { (nu / x).asinh() } else { 0.0 };
    let log_scale = envelope_exponent(x, nu, peak);

    // Integrate until the envelope has fallen by e^-60 from its peak.
    let mut width = 1.0;
    while envelope_exponent(x, nu, peak + width) - log_scale > -60.0 {
        width *= 1.5;
        if width > 1e3 {
            return Err(Error::convergence(OP, "cannot bound integration range"));
        }
    }
    let upper = peak + width;

    // Enough initial panels to resolve the oscillation exp(-i y (cosh u - 1)).
    let phase = z.im.abs() * (upper.cosh() - 1.0);
    let panels = ((phase / PI).ceil() as usize).clamp(8, 4000);
    let mut breaks = Vec::with_capacity(panels + 2);
    if peak > 0.0 {
        let lower_panels = 4;
        for i in 0..lower_panels {
            breaks.push(peak * i as f64 / lower_panels as f64);
        }
    }
    for i in 0..=panels {
        breaks.push(peak + width * i as f64 / panels as f64);
    }

    let integrand = |u: f64| {
        let e = -z * (u.cosh() - 1.0) + (nu * u - log_scale);
        e.exp() * (0.5 * (1.0 + (-2.0 * nu * u).exp()))
    };
    let r = quadrature::integrate(integrand, &breaks, 0.0, 1e-14, 20_000).map_err(|e| match e {
        Error::Convergence { msg, .. } => Error::convergence(OP, msg),
        other => other,
    })?;
    if r.value.norm() == 0.0 || !r.value.re.is_finite() {
        return Err(Error::convergence(OP, format!("degenerate integral for v={nu}, z={z}")));
    }
    Ok(ScaledK { log_scale, mantissa: r.value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    // Independent oracle: the full-line trapezoid rule for the even integrand
    // exp(-z cosh u) cosh(v u) converges geometrically in the step size.
    fn trapezoid_oracle(nu: f64, z: Complex64) -> Complex64 {
        let h = 1.0 / 256.0;
        let mut sum = 0.5 * (-z).exp();
        let mut k = 1;
        loop {
            let u = k as f64 * h;
            let term = (-z * u.cosh()).exp() * (nu * u).cosh();
            sum += term;
            if term.norm() < 1e-300 || (u > 5.0 && term.norm() < 1e-22 * sum.norm()) {
                break;
            }
            k += 1;
        }
        sum * h
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn half_order_closed_form() {
        let k = bessel_k(0.5, c(1.0, 0.0)).unwrap();
        let expected = (PI / 2.0).sqrt() * (-1.0f64).exp();
        assert!((k.re - expected).abs() < 1e-15);
        assert!((expected - 0.4610685).abs() < 1e-7);
    }

    #[test]
    fn order_one_at_one() {
        let k = bessel_k(1.0, c(1.0, 0.0)).unwrap();
        let oracle = trapezoid_oracle(1.0, c(1.0, 0.0));
        assert!(rel(k, oracle) < 1e-12);
        assert!((k.re - 0.601_907_230_197_234_6).abs() < 1e-13);
        assert!((k.re - 0.6019072).abs() < 1e-7);
    }

    #[test]
    fn quadrature_route_matches_half_integer_closed_form() {
        for &z in &[c(0.05, 0.0), c(1.0, 0.7), c(3.0, -2.5), c(12.0, 11.0), c(40.0, 3.0)] {
            let q = scaled_bessel_k(0.5, z, BesselRoute::Quadrature).unwrap();
            let a = scaled_bessel_k(0.5, z, BesselRoute::Auto).unwrap();
            let qv = q.mantissa * q.log_scale.exp();
            assert!(rel(qv, a.mantissa) < 1e-12, "z={z}");
        }
    }

    #[test]
    fn conjugate_symmetry() {
        for &nu in &[0.0, 0.3, 1.0, 2.7, 10.0] {
            let z = c(1.3, 0.9);
            let a = bessel_k(nu, z).unwrap();
            let b = bessel_k(nu, z.conj()).unwrap();
            assert!(rel(b, a.conj()) < 1e-14);
        }
    }

    #[test]
    fn matches_trapezoid_oracle_on_grid() {
        for &nu in &[0.0, 0.25, 1.0, 1.5, 3.3, 7.0, 15.5] {
            for &(re, im) in &[(0.2, 0.0), (0.5, 0.4), (1.0, -1.0), (2.5, 1.7), (6.0, 5.0), (20.0, -3.0)] {
                let z = c(re, im);
                let k = bessel_k(nu, z).unwrap();
                let o = trapezoid_oracle(nu, z);
                assert!(rel(k, o) < 1e-10, "nu={nu} z={z} k={k} oracle={o}");
            }
        }
    }

    #[test]
    fn recurrence_in_order() {
        for &nu in &[0.3, 1.0, 2.5, 6.2] {
            for &z in &[c(0.7, 0.2), c(3.0, -2.0), c(9.0, 4.0), c(35.0, 10.0)] {
                let lo = bessel_k(nu - 1.0, z).unwrap();
                let mid = bessel_k(nu, z).unwrap();
                let hi = bessel_k(nu + 1.0, z).unwrap();
                let rhs = lo + mid * (2.0 * nu) / z;
                assert!(rel(hi, rhs) < 1e-8, "nu={nu} z={z}");
            }
        }
    }

    #[test]
    fn hankel_agrees_with_quadrature() {
        for &nu in &[0.0, 1.0, 3.7] {
            for &z in &[c(30.0, 5.0), c(80.0, -40.0), c(500.0, 20.0)] {
                let a = scaled_bessel_k(nu, z, BesselRoute::Auto).unwrap();
                let q = scaled_bessel_k(nu, z, BesselRoute::Quadrature).unwrap();
                let qv = q.mantissa * q.log_scale.exp();
                assert!(rel(a.mantissa * a.log_scale.exp(), qv) < 1e-11, "nu={nu} z={z}");
            }
        }
    }

    #[test]
    fn large_order_small_argument_stays_finite_in_log_form() {
        let s = scaled_bessel_k(50.0, c(1e-6, 0.0), BesselRoute::Auto).unwrap();
        // K_v(x) ~ Gamma(v)/2 (2/x)^v for small x
        let approx = statrs::function::gamma::ln_gamma(50.0) - 2f64.ln() + 50.0 * (2e6f64).ln();
        assert!((s.ln().re - approx).abs() < 1e-6);
        assert!(matches!(bessel_k(50.0, c(1e-6, 0.0)), Err(Error::Range { .. })));
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(bessel_k(1.0, c(0.0, 1.0)), Err(Error::Domain { .. })));
        assert!(matches!(bessel_k(1.0, c(-1.0, 0.0)), Err(Error::Domain { .. })));
        assert!(matches!(bessel_k(51.0, c(1.0, 0.0)), Err(Error::Domain { .. })));
    }

    #[test]
    fn symmetric_in_order() {
        let z = c(2.0, 1.0);
        assert!(rel(bessel_k(-2.3, z).unwrap(), bessel_k(2.3, z).unwrap()) < 1e-15);
    }
}
