//! The classical generalized hyperbolic law: parameters, characteristic
//! function, its distinguished logarithm and numerical moments.
//!
//! With `gamma = sqrt(alpha^2 - beta^2)` and
//! `z(t) = delta sqrt(alpha^2 - (i t + beta)^2)` (right-half-plane root),
//!
//! ```text
//! f(t) = e^{i t mu} (gamma delta)^lambda K_lambda(z(t)) / (z(t)^lambda K_lambda(gamma delta)).
//! ```
//!
//! Everything is evaluated in log form using the scaled Bessel function, so
//! `f` can be tracked far beyond the point where it underflows.

use std::f64::consts::{FRAC_PI_4, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special_fn::{
    log_on_uniform_grid, principal_sqrt_right, scaled_bessel_k, BesselRoute, LogTrack, StepPolicy,
};
use crate::CharFn;

/// Supported range of the index `lambda`.
pub const LAMBDA_LIMIT: f64 = 25.0;

/// NIG index.
pub const NIG_LAMBDA: f64 = -0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhParams {
    lambda: f64,
    alpha: f64,
    beta: f64,
    delta: f64,
    mu: f64,
}

impl GhParams {
    /// Validates the interior parameter domain: `alpha > 0`, `|beta| < alpha`,
    /// `delta > 0`, `|lambda| <= 25`, all finite. The error lists every
    /// violated constraint.
    pub fn new(lambda: f64, alpha: f64, beta: f64, delta: f64, mu: f64) -> Result<Self> {
        let mut violations = Vec::new();
        for (name, v) in [("lambda", lambda), ("alpha", alpha), ("beta", beta), ("delta", delta), ("mu", mu)] {
            if !v.is_finite() {
                violations.push(format!("{name} = {v} is not finite"));
            }
        }
        if violations.is_empty() {
            if lambda.abs() > LAMBDA_LIMIT {
                violations.push(format!("|lambda| = {} exceeds {LAMBDA_LIMIT}", lambda.abs()));
            }
            if alpha <= 0.0 {
                violations.push(format!("alpha = {alpha} must be > 0"));
            }
            if beta.abs() >= alpha {
                violations.push(format!("|beta| = {} must be < alpha = {alpha}", beta.abs()));
            }
            if delta <= 0.0 {
                violations.push(format!("delta = {delta} must be > 0"));
            }
        }
        if violations.is_empty() {
            Ok(GhParams { lambda, alpha, beta, delta, mu })
        } else {
            Err(Error::domain("gh::validate_params", violations.join("; ")))
        }
    }

    /// Normal inverse Gaussian parameters (`lambda = -1/2`).
    pub fn nig(alpha: f64, beta: f64, delta: f64, mu: f64) -> Result<Self> {
        Self::new(NIG_LAMBDA, alpha, beta, delta, mu)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn gamma(&self) -> f64 {
        (self.alpha * self.alpha - self.beta * self.beta).sqrt()
    }

    pub fn is_nig(&self) -> bool {
        self.lambda == NIG_LAMBDA
    }
}

/// One evaluation of a characteristic function together with its
/// distinguished logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfEvaluation {
    pub t: f64,
    pub value: Complex64,
    pub log_value: Complex64,
}

/// Longest initial track built at construction, in base steps.
const HEAD_LIMIT_STEPS: f64 = 4096.0;

/// GH characteristic function with the t-independent normalisation cached.
///
/// Beyond `t_s`, where `|z(t)| >= max(30, 2 lambda^2)`, the scaled Bessel
/// factor stays within a quarter turn of `sqrt(pi / 2z)`, so the local log
/// differs from the distinguished one by a fixed number of turns. The
/// track up to `t_s` is built once; larger `t` are evaluated directly.
#[derive(Debug, Clone)]
pub struct GhCf {
    params: GhParams,
    route: BesselRoute,
    /// `lambda ln(gamma delta) - ln(K_lambda(gamma delta) e^{gamma delta}) + gamma delta`
    ln_norm: Complex64,
    policy: StepPolicy,
    head: Arc<LogTrack>,
    /// `(t_s, turns)` when the direct regime was reached by the head track.
    stable: Option<(f64, f64)>,
}

impl GhCf {
    pub fn new(params: GhParams) -> Result<Self> {
        Self::with_route(params, BesselRoute::Auto)
    }

    pub fn with_route(params: GhParams, route: BesselRoute) -> Result<Self> {
        let z0 = params.gamma() * params.delta;
        let k0 = scaled_bessel_k(params.lambda, Complex64::new(z0, 0.0), route)?;
        let ln_norm = params.lambda * z0.ln() - k0.ln() + z0;
        // Phase velocity is bounded by the drift plus terms of order
        // delta alpha / gamma; keep base steps well below a quarter turn.
        let velocity =
            params.mu.abs() + (params.delta * params.alpha + params.lambda.abs() + 1.0) * params.alpha / params.gamma();
        let policy = StepPolicy::with_base_step((FRAC_PI_4 / velocity).min(0.25));
        let mut cf = GhCf {
            params,
            route,
            ln_norm,
            policy,
            head: Arc::new(LogTrack::from_local_log(|_| Ok(Complex64::new(0.0, 0.0)), 0.0, policy)?),
            stable: None,
        };
        let t_s = cf.direct_regime_start();
        let limit = HEAD_LIMIT_STEPS * policy.base_step;
        let head_end = if t_s <= limit { t_s } else { 64.0 * policy.base_step };
        let head = LogTrack::from_local_log(|t| cf.local_log(t), head_end, policy)?;
        if t_s <= limit {
            let tracked = *head.log_values().last().expect("non-empty track");
            let local = cf.local_log(head.t_max())?;
            cf.stable = Some((head.t_max(), ((tracked.im - local.im) / TAU).round()));
        }
        cf.head = Arc::new(head);
        Ok(cf)
    }

    /// Smallest `t >= 0` with `|z(t)| >= max(30, 2 lambda^2)`; 0 for
    /// `|lambda| = 1/2`, where the scaled factor is exactly `sqrt(pi / 2z)`.
    fn direct_regime_start(&self) -> f64 {
        let p = &self.params;
        if p.lambda.abs() == 0.5 && self.route == BesselRoute::Auto {
            return 0.0;
        }
        let r = (2.0 * p.lambda * p.lambda).max(30.0) / p.delta;
        // |z/delta|^4 = (gamma^2 + t^2)^2 + 4 beta^2 t^2, increasing in t
        let g2 = p.gamma().powi(2);
        let c = g2 * g2 - r.powi(4);
        if c >= 0.0 {
            return 0.0;
        }
        let b = 2.0 * g2 + 4.0 * p.beta * p.beta;
        let u = -0.5 * b + (0.25 * b * b - c).sqrt();
        u.sqrt()
    }

    pub fn params(&self) -> &GhParams {
        &self.params
    }

    pub fn step_policy(&self) -> StepPolicy {
        self.policy
    }

    /// Bessel argument `delta sqrt(alpha^2 - (i t + beta)^2)`.
    pub fn bessel_argument(&self, t: f64) -> Complex64 {
        let p = &self.params;
        let inner = Complex64::from(p.alpha * p.alpha) - Complex64::new(p.beta, t).powi(2);
        p.delta * principal_sqrt_right(inner)
    }

    /// A logarithm of `f(t)` built from principal-branch pieces; it may
    /// differ from the distinguished log by multiples of `2 pi i`.
    pub fn local_log(&self, t: f64) -> Result<Complex64> {
        let p = &self.params;
        let z = self.bessel_argument(t);
        let k = scaled_bessel_k(p.lambda, z, self.route)?;
        Ok(Complex64::new(0.0, p.mu * t) - p.lambda * z.ln() + k.ln() - z + self.ln_norm)
    }

    /// Distinguished logarithm on `[0, t_max]`.
    pub fn log_track(&self, t_max: f64) -> Result<LogTrack> {
        if !(t_max > 0.0) {
            return Err(Error::domain("gh::log_track", format!("t_max = {t_max} must be > 0")));
        }
        LogTrack::from_local_log(|t| self.local_log(t), t_max, self.policy)
    }

    /// Distinguished log at a single point.
    pub fn log_cf(&self, t: f64) -> Result<Complex64> {
        let s = t.abs();
        let l = match self.stable {
            Some((t_s, turns)) if s >= t_s => self.local_log(s)? + Complex64::new(0.0, turns * TAU),
            _ => self.head.value_at(&|u| self.local_log(u), s)?,
        };
        Ok(if t < 0.0 { l.conj() } else { l })
    }

    /// `f(t)` together with its distinguished logarithm.
    pub fn evaluate(&self, t: f64) -> Result<CfEvaluation> {
        let log_value = self.log_cf(t)?;
        Ok(CfEvaluation { t, value: log_value.exp(), log_value })
    }

    /// Distinguished log at `t_k = k dt`.
    pub fn log_on_grid(&self, dt: f64, count: usize) -> Result<Vec<Complex64>> {
        let Some((t_s, turns)) = self.stable else {
            return log_on_uniform_grid(|t| self.local_log(t), dt, count, &self.policy);
        };
        let split = ((t_s / dt).ceil() as usize).min(count);
        let mut out = log_on_uniform_grid(|t| self.local_log(t), dt, split, &self.policy)?;
        let shift = Complex64::new(0.0, turns * TAU);
        let direct: Vec<Complex64> = (split..count)
            .into_par_iter()
            .map(|k| Ok(self.local_log(k as f64 * dt)? + shift))
            .collect::<Result<_>>()?;
        out.extend(direct);
        Ok(out)
    }
}

impl CharFn for GhCf {
    fn eval(&self, t: f64) -> Result<Complex64> {
        Ok(self.log_cf(t)?.exp())
    }

    fn eval_grid(&self, dt: f64, count: usize) -> Result<Vec<Complex64>> {
        Ok(self.log_on_grid(dt, count)?.into_iter().map(|l| l.exp()).collect())
    }
}

/// `f(t)` for the given parameters.
pub fn gh_cf(params: &GhParams, t: f64) -> Result<CfEvaluation> {
    GhCf::new(*params)?.evaluate(t)
}

/// NIG parameters of the `x`-th convolution power: `delta -> x delta`,
/// `mu -> x mu`.
pub fn nig_convolution_power(params: &GhParams, x: f64) -> Result<GhParams> {
    if !params.is_nig() {
        return Err(Error::domain(
            "gh::nig_convolution_power",
            format!("lambda = {} but convolution powers need lambda = -1/2", params.lambda),
        ));
    }
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("gh::nig_convolution_power", format!("power x = {x} must be > 0")));
    }
    GhParams::nig(params.alpha, params.beta, x * params.delta, x * params.mu)
}

/// Base steps (multiplied by 1e-3) for derivative orders 1 to 4.
const MOMENT_STEP_SCALE: [f64; 4] = [1.0, 10.0, 30.0, 50.0];

fn central_difference(cf: &dyn CharFn, order: usize, h: f64) -> Result<Complex64> {
    let f = |t: f64| cf.eval(t);
    Ok(match order {
        1 => (f(h)? - f(-h)?) / (2.0 * h),
        2 => (f(h)? - 2.0 * f(0.0)? + f(-h)?) / (h * h),
        3 => (f(2.0 * h)? - 2.0 * f(h)? + 2.0 * f(-h)? - f(-2.0 * h)?) / (2.0 * h * h * h),
        4 => (f(2.0 * h)? - 4.0 * f(h)? + 6.0 * f(0.0)? - 4.0 * f(-h)? + f(-2.0 * h)?) / (h * h * h * h),
        _ => unreachable!("order checked by caller"),
    })
}

/// Raw moments `E X^k`, `k = 1..=max_order`, from central differences of
/// the characteristic function at 0 with three-level Richardson
/// extrapolation.
pub fn moments_from_cf(cf: &dyn CharFn, max_order: usize) -> Result<Vec<f64>> {
    if !(1..=4).contains(&max_order) {
        return Err(Error::domain("gh::moments_from_cf", format!("max_order {max_order} outside 1..=4")));
    }
    let mut out = Vec::with_capacity(max_order);
    for k in 1..=max_order {
        let h = 1e-3 * MOMENT_STEP_SCALE[k - 1];
        let d: Vec<Complex64> =
            (0..3).map(|i| central_difference(cf, k, h / f64::powi(2.0, i))).collect::<Result<_>>()?;
        let r1a = (4.0 * d[1] - d[0]) / 3.0;
        let r1b = (4.0 * d[2] - d[1]) / 3.0;
        let r2 = (16.0 * r1b - r1a) / 15.0;
        let spread = (r2 - r1b).norm();
        if !r2.re.is_finite() || spread > 1e-3 * r2.norm().max(1.0) {
            return Err(Error::convergence(
                "gh::moments_from_cf",
                format!("Richardson table unstable for order {k}: spread {spread:.3e}"),
            ));
        }
        // E X^k = (-i)^k f^(k)(0)
        let rot = Complex64::new(0.0, -1.0).powu(k as u32);
        out.push((rot * r2).re);
    }
    Ok(out)
}
