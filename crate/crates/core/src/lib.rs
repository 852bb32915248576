//! Random-sum generalized hyperbolic distributions.
//!
//! A generalized hyperbolic (GH) characteristic function `f` is mapped to
//! `g(t) = phi(-log f(t))`, where `phi` is the Laplace transform of the
//! mixing law of a random-summation scheme: `1/(1+s)` for geometric
//! summation and `1/cosh(sqrt(2s))` for the Chebyshev scheme. The crate
//! evaluates these characteristic functions, inverts them to densities and
//! distribution functions, samples them exactly (NIG base) or by inversion,
//! verifies the random-sum stability identities by Monte Carlo and fits the
//! NIG-based models to return series by maximum likelihood.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fitting;
pub mod gh;
pub mod inversion;
pub mod montecarlo;
pub mod nu_families;
pub mod nu_transform;
pub mod special_fn;
pub mod suite;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use num_complex::Complex64;

/// Characteristic function of a real random variable.
pub trait CharFn: Sync {
    fn eval(&self, t: f64) -> Result<Complex64>;

    /// Values at `t_k = k * dt`, `k = 0..count`.
    fn eval_grid(&self, dt: f64, count: usize) -> Result<Vec<Complex64>> {
        (0..count).map(|k| self.eval(k as f64 * dt)).collect()
    }
}

impl<F> CharFn for F
where
    F: Fn(f64) -> Complex64 + Sync,
{
    fn eval(&self, t: f64) -> Result<Complex64> {
        Ok(self(t))
    }
}
