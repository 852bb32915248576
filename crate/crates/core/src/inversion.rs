//! Inversion of characteristic functions: densities on uniform grids, the
//! distribution function, quantiles and an exponential-tail diagnostic.
//!
//! Densities come from Poisson summation on the periodic grid
//! `x_j = a + j L / N`, `L = b - a`, with CF samples at `t_k = 2 pi k / L`:
//!
//! ```text
//! p(x_j) = (1/L) sum_k g(t_k) e^{-i t_k x_j}.
//! ```
//!
//! Frequencies beyond `N` are folded onto the FFT bins. The tail
//! `sum_{k >= M} g_k r^k`, `r = e^{-i dt x_j}`, is summed by parts,
//!
//! ```text
//! sum_{k >= M} g_k r^k = r^M / (1 - r) sum_m (r / (1 - r))^m Delta^m g_M,
//! ```
//!
//! truncated at the smallest term. This keeps CFs with slow power decay
//! (geometric ν-GH laws decay like `1/|t|`) tractable. Near `x = 0 mod L`,
//! where `r` is close to 1, Euler-Maclaurin with an explicit tail integral
//! is used instead.

use std::cell::RefCell;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gh::moments_from_cf;
use crate::special_fn::quadrature::{integrate, integrate_real};
use crate::CharFn;

/// Smallest accepted grid size.
pub const MIN_POINTS: usize = 1 << 10;

/// Highest finite difference used by the tail correction.
const MAX_DIFF_ORDER: usize = 24;

/// Grid points within this many spacings of `x = 0 mod L` may stay
/// unresolved (a log singularity sits at the origin for geometric laws).
const SINGULAR_ZONE: f64 = 4.0;

const MAX_PANELS: usize = 5000;

/// Most grid points per round given the Euler-Maclaurin tail.
const MAX_CORRECTED_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionConfig {
    /// Cap on the number of CF samples (before folding).
    pub max_terms: usize,
    /// Target bound on the neglected CF tail, in density units.
    pub tolerance: f64,
    /// CF magnitude below which the tail is negligible outright.
    pub cf_floor: f64,
    /// Verify `F(b) - F(a)` against 1 by Gil-Pelaez inversion.
    pub check_mass: bool,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig { max_terms: 1 << 18, tolerance: 1e-10, cf_floor: 1e-12, check_mass: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityGrid {
    pub x: Vec<f64>,
    pub pdf: Vec<f64>,
    /// `F(b) - F(a)` from Gil-Pelaez inversion (NaN when not checked).
    pub total_mass: f64,
    /// Largest tail bound over resolved points.
    pub truncation_bound: f64,
    /// Highest frequency sampled.
    pub t_cutoff: f64,
    /// Points near the origin whose tail correction did not converge.
    pub unresolved: Vec<usize>,
}

impl DensityGrid {
    pub fn dx(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    /// Linear interpolation; 0 outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let dx = self.dx();
        let u = (x - self.x[0]) / dx;
        if !(u >= 0.0) || u > (self.x.len() - 1) as f64 {
            return 0.0;
        }
        let i = (u.floor() as usize).min(self.x.len() - 2);
        let w = u - i as f64;
        (1.0 - w) * self.pdf[i] + w * self.pdf[i + 1]
    }

    /// Replaces unresolved values by the mean of their neighbours.
    pub fn fill_unresolved(&mut self) {
        for &j in &self.unresolved {
            let l = if j > 0 { self.pdf[j - 1] } else { 0.0 };
            let r = self.pdf.get(j + 1).copied().unwrap_or(0.0);
            self.pdf[j] = 0.5 * (l + r);
        }
    }

    /// Cumulative trapezoid integral from the left end.
    pub fn cumulative(&self) -> Vec<f64> {
        let dx = self.dx();
        let mut out = Vec::with_capacity(self.pdf.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in self.pdf.windows(2) {
            acc += 0.5 * dx * (w[0] + w[1]);
            out.push(acc);
        }
        out
    }
}

/// `(mean - 40 sd, mean + 40 sd)` from numerical moments.
pub fn default_x_range(cf: &dyn CharFn) -> Result<(f64, f64)> {
    let m = moments_from_cf(cf, 2)?;
    let var = m[1] - m[0] * m[0];
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::convergence("inversion::default_x_range", format!("variance estimate {var} not positive")));
    }
    let sd = var.sqrt();
    Ok((m[0] - 40.0 * sd, m[0] + 40.0 * sd))
}

/// Density on `n_points` equispaced abscissae in `[a, b)`.
pub fn pdf_grid(cf: &dyn CharFn, x_range: (f64, f64), n_points: usize, t_cutoff: Option<f64>) -> Result<DensityGrid> {
    pdf_grid_with(cf, x_range, n_points, t_cutoff, &InversionConfig::default())
}

fn forward_differences(v: &[Complex64]) -> Vec<Complex64> {
    let mut work = v.to_vec();
    let mut out = Vec::with_capacity(v.len());
    out.push(work[0]);
    while work.len() > 1 {
        for i in 0..work.len() - 1 {
            work[i] = work[i + 1] - work[i];
        }
        work.pop();
        out.push(work[0]);
    }
    out
}

/// Summation by parts with optimal truncation; returns the tail and the
/// magnitude of the smallest term used.
fn summed_by_parts(r: Complex64, one_minus_r: Complex64, r_m: Complex64, diffs: &[Complex64]) -> (Complex64, f64) {
    if one_minus_r.norm() < 1e-12 {
        return (Complex64::new(0.0, 0.0), f64::INFINITY);
    }
    let q = r / one_minus_r;
    let mut factor = r_m / one_minus_r;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut last = f64::INFINITY;
    for d in diffs {
        let term = factor * d;
        let size = term.norm();
        if size > last {
            break;
        }
        sum += term;
        last = size;
        if size <= 1e-17 * sum.norm() {
            break;
        }
        factor *= q;
    }
    (sum, last)
}

/// `int_{t0}^inf w(t) g(t) e^{-i t x} dt` with `w = 1` or `w = 1/t`, for
/// `t0 > 0`. Returns the value and an error estimate.
fn fourier_tail(cf: &dyn CharFn, t0: f64, x: f64, inv_t: bool, tol: f64) -> Result<(Complex64, f64)> {
    let f = |t: f64| -> Result<Complex64> {
        let v = cf.eval(t)?;
        Ok(if inv_t { v / t } else { v })
    };
    let mut failure: Option<Error> = None;
    if x == 0.0 {
        // t = t0 / s maps the half line onto (0, 1]
        let r = integrate(
            |s| {
                if s <= 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                match f(t0 / s) {
                    Ok(v) => v * (t0 / (s * s)),
                    Err(e) => {
                        failure.get_or_insert(e);
                        Complex64::new(0.0, 0.0)
                    }
                }
            },
            &[0.0, 0.125, 0.25, 0.5, 1.0],
            tol,
            1e-12,
            2000,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let r = r?;
        return Ok((r.value, r.abs_error));
    }

    let ax = x.abs();
    let mut t = t0;
    let mut total = Complex64::new(0.0, 0.0);
    let mut err = 0.0;
    for _ in 0..MAX_PANELS {
        if ax * t >= 20.0 {
            let (v, e) = parts_tail(&f, t, x)?;
            if e <= tol {
                return Ok((total + v, err + e));
            }
        }
        let width = (0.25 * t).max(1.0).min(8.0 * PI / ax);
        let r = integrate(
            |u| match f(u) {
                Ok(v) => v * Complex64::from_polar(1.0, -u * x),
                Err(e) => {
                    failure.get_or_insert(e);
                    Complex64::new(0.0, 0.0)
                }
            },
            &[t, t + 0.5 * width, t + width],
            0.01 * tol,
            1e-12,
            500,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let r = r?;
        total += r.value;
        err += r.abs_error;
        t += width;
        if f(t)?.norm() * t <= 0.1 * tol {
            return Ok((total, err));
        }
    }
    Err(Error::convergence("inversion::fourier_tail", format!("tail at x={x} not converged by t={t:.3e}")))
}

/// Integration by parts, `e^{-itx} sum_{m<3} F^(m)(t) / (ix)^{m+1}`, with
/// derivatives from central differences.
fn parts_tail<F: Fn(f64) -> Result<Complex64>>(f: &F, t: f64, x: f64) -> Result<(Complex64, f64)> {
    let h = 0.01 * t;
    let (fm2, fm1, f0, fp1, fp2) = (f(t - 2.0 * h)?, f(t - h)?, f(t)?, f(t + h)?, f(t + 2.0 * h)?);
    let d1 = (fp1 - fm1) / (2.0 * h);
    let d2 = (fp1 - 2.0 * f0 + fm1) / (h * h);
    let d3 = (fp2 - 2.0 * fp1 + 2.0 * fm1 - fm2) / (2.0 * h * h * h);
    let ix = Complex64::new(0.0, x);
    let v = Complex64::from_polar(1.0, -t * x) * (f0 / ix + d1 / (ix * ix) + d2 / (ix * ix * ix));
    let ax = x.abs();
    let e = d3.norm() / ax.powi(4) * (1.0 + 1e-3 * t * ax);
    Ok((v, e))
}

/// Euler-Maclaurin for `sum_{k >= M} g_k r^k` near `r = 1`.
fn euler_maclaurin_tail(
    cf: &dyn CharFn,
    tail: &[Complex64],
    m: usize,
    dt: f64,
    x: f64,
    tol: f64,
) -> Result<(Complex64, f64)> {
    let t0 = m as f64 * dt;
    let (integral, qerr) = fourier_tail(cf, t0, x, false, tol * dt)?;
    if !integral.re.is_finite() || !integral.im.is_finite() {
        return Err(Error::convergence("inversion::euler_maclaurin", "tail integral not finite"));
    }
    let rm = Complex64::from_polar(1.0, -t0 * x);
    let step = Complex64::from_polar(1.0, -dt * x);
    let mut rk = rm;
    let samples: Vec<Complex64> = tail[..8]
        .iter()
        .map(|g| {
            let v = g * rk;
            rk *= step;
            v
        })
        .collect();
    let d = forward_differences(&samples);
    let d1 = d[1] - d[2] / 2.0 + d[3] / 3.0 - d[4] / 4.0 + d[5] / 5.0;
    let d3 = d[3] - 1.5 * d[4] + 1.75 * d[5];
    let sum = integral / dt + samples[0] / 2.0 - d1 / 12.0 + d3 / 720.0;
    let bound = qerr / dt + d3.norm() / 720.0 + d[5].norm() / 30240.0;
    Ok((sum, bound))
}

/// [`pdf_grid`] with explicit numerical settings.
pub fn pdf_grid_with(
    cf: &dyn CharFn,
    x_range: (f64, f64),
    n_points: usize,
    t_cutoff: Option<f64>,
    cfg: &InversionConfig,
) -> Result<DensityGrid> {
    const OP: &str = "inversion::pdf_grid";
    let (a, b) = x_range;
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::domain(OP, format!("invalid x range ({a}, {b})")));
    }
    if !n_points.is_power_of_two() || n_points < MIN_POINTS {
        return Err(Error::domain(OP, format!("n_points = {n_points} must be a power of two >= {MIN_POINTS}")));
    }
    if let Some(tc) = t_cutoff {
        if !(tc > 0.0) || !tc.is_finite() {
            return Err(Error::domain(OP, format!("t_cutoff = {tc} must be > 0")));
        }
    }
    let n = n_points;
    let len = b - a;
    let dx = len / n as f64;
    let dt = TAU / len;
    let frac = a / len;
    let x: Vec<f64> = (0..n).map(|j| a + j as f64 * dx).collect();
    // dt x_j reduced to (-pi, pi]
    let theta: Vec<f64> = (0..n)
        .map(|j| {
            let u = frac + j as f64 / n as f64;
            TAU * (u - u.round())
        })
        .collect();
    let zone = SINGULAR_ZONE * TAU / n as f64;
    let cap = cfg.max_terms.max(n);
    let fft = FftPlanner::new().plan_fft_forward(n);

    let mut m = match t_cutoff {
        Some(tc) => ((tc / dt).ceil() as usize).max(2),
        None => n,
    };
    loop {
        let g = cf.eval_grid(dt, m + MAX_DIFF_ORDER + 1)?;
        if (g[0] - 1.0).norm() > 1e-10 {
            return Err(Error::domain(OP, format!("cf(0) = {} is not 1", g[0])));
        }
        let mut bins = vec![Complex64::new(0.0, 0.0); n];
        for (k, v) in g.iter().enumerate().take(m).skip(1) {
            bins[k % n] += v * Complex64::from_polar(1.0, -TAU * (k as f64 * frac).fract());
        }
        fft.process(&mut bins);

        let tail = &g[m..];
        let diffs = forward_differences(tail);
        let negligible = tail.iter().all(|v| v.norm() < cfg.cf_floor);
        let m_frac = (m as f64 * frac).fract();
        let mut tails = vec![Complex64::new(0.0, 0.0); n];
        let mut bounds = vec![0.0; n];
        for j in 0..n {
            let th = theta[j];
            let r = Complex64::from_polar(1.0, -th);
            let s = (0.5 * th).sin();
            let one_minus_r = Complex64::new(2.0 * s * s, th.sin());
            let phase = m_frac + ((m as u64 * j as u64) % n as u64) as f64 / n as f64;
            let r_m = Complex64::from_polar(1.0, -TAU * phase);
            let (v, e) = summed_by_parts(r, one_minus_r, r_m, &diffs);
            tails[j] = v;
            bounds[j] = 2.0 * e / len;
        }
        // Euler-Maclaurin for the few points the differences cannot handle;
        // with a fixed cutoff only the zone around the origin qualifies
        if !negligible {
            let failing: Vec<usize> = (0..n)
                .filter(|&j| bounds[j] > cfg.tolerance && (t_cutoff.is_none() || theta[j].abs() <= zone))
                .collect();
            if failing.len() <= MAX_CORRECTED_POINTS {
                for j in failing {
                    if let Ok((v, e)) = euler_maclaurin_tail(cf, tail, m, dt, x[j], 0.5 * cfg.tolerance * len) {
                        if 2.0 * e / len < bounds[j] {
                            tails[j] = v;
                            bounds[j] = 2.0 * e / len;
                        }
                    }
                }
            }
        }
        let worst = (0..n).filter(|&j| theta[j].abs() > zone).map(|j| bounds[j]).fold(0.0, f64::max);
        let converged = negligible || worst <= cfg.tolerance;
        if !converged && t_cutoff.is_none() && m < cap {
            m = (2 * m).min(cap);
            continue;
        }
        if !converged {
            return Err(Error::Truncation {
                op: OP,
                msg: format!(
                    "CF tail bound {worst:.3e} above {:.1e} with {m} terms (t = {:.3e})",
                    cfg.tolerance,
                    m as f64 * dt
                ),
            });
        }
        let unresolved: Vec<usize> =
            if negligible { Vec::new() } else { (0..n).filter(|&j| !(bounds[j] <= cfg.tolerance)).collect() };
        let mut pdf: Vec<f64> = (0..n).map(|j| (g[0].re + 2.0 * (bins[j] + tails[j]).re) / len).collect();
        let truncation_bound = if negligible {
            0.0
        } else {
            (0..n).filter(|j| !unresolved.contains(j)).map(|j| bounds[j]).fold(0.0, f64::max)
        };
        if let Some((j, v)) = pdf.iter().enumerate().filter(|(j, _)| !unresolved.contains(j)).find(|(_, &v)| v < -1e-10)
        {
            return Err(Error::Alias {
                op: OP,
                msg: format!("negative density {v:.3e} at x = {}; widen the x range or add points", x[j]),
            });
        }
        for v in pdf.iter_mut() {
            *v = v.max(0.0);
        }
        let total_mass = if cfg.check_mass { cdf_at(cf, b, None)? - cdf_at(cf, a, None)? } else { f64::NAN };
        if cfg.check_mass && (total_mass - 1.0).abs() > 1e-6 {
            return Err(Error::Alias {
                op: OP,
                msg: format!("mass on [{a}, {b}] is {total_mass:.9}; widen the x range"),
            });
        }
        return Ok(DensityGrid { x, pdf, total_mass, truncation_bound, t_cutoff: m as f64 * dt, unresolved });
    }
}

/// Distribution function by Gil-Pelaez inversion,
/// `F(x) = 1/2 - (1/pi) int_0^inf Im(e^{-itx} g(t)) / t dt`, clamped to
/// `[0, 1]`. With `t_cutoff` the integral is truncated there.
pub fn cdf_at(cf: &dyn CharFn, x: f64, t_cutoff: Option<f64>) -> Result<f64> {
    const OP: &str = "inversion::cdf_at";
    if !x.is_finite() {
        return Err(Error::domain(OP, format!("x = {x} is not finite")));
    }
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let h = |t: f64| -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match cf.eval(t) {
            Ok(v) => (Complex64::from_polar(1.0, -t * x) * v).im / t,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let first_failure = |e: Error| failure.borrow().clone().unwrap_or(e);
    let head_end = (TAU / x.abs()).min(1.0);
    let head_end = t_cutoff.map_or(head_end, |tc| tc.min(head_end));
    let (head, _) = integrate_real(h, &[0.0, 0.5 * head_end, head_end], 1e-15, 1e-13, 500).map_err(first_failure)?;
    let rest = match t_cutoff {
        Some(tc) if tc > head_end => {
            let width = if x == 0.0 { 1.0 } else { (4.0 * PI / x.abs()).min(1.0) };
            let panels = ((tc - head_end) / width).ceil().max(1.0) as usize;
            let breaks: Vec<f64> =
                (0..=panels).map(|i| head_end + (tc - head_end) * i as f64 / panels as f64).collect();
            integrate_real(h, &breaks, 1e-14, 1e-12, 20 * panels + 100).map_err(first_failure)?.0
        }
        Some(_) => 0.0,
        None => {
            fourier_tail(cf, head_end, x, true, 1e-13)
                .map_err(|e| match e {
                    Error::Convergence { msg, .. } => Error::convergence(OP, msg),
                    other => other,
                })?
                .0
                .im
        }
    };
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let f = 0.5 - (head + rest) / PI;
    if !f.is_finite() {
        return Err(Error::convergence(OP, format!("non-finite value at x={x}")));
    }
    Ok(f.clamp(0.0, 1.0))
}

/// `x` with `F(x) = q`, by doubling a bracket from 0 and bisecting.
pub fn quantile(cf: &dyn CharFn, q: f64, t_cutoff: Option<f64>) -> Result<f64> {
    const OP: &str = "inversion::quantile";
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(OP, format!("q = {q} must lie in (0, 1)")));
    }
    let f = |x: f64| cdf_at(cf, x, t_cutoff);
    let f0 = f(0.0)?;
    if f0 == q {
        return Ok(0.0);
    }
    let dir = if f0 < q { 1.0 } else { -1.0 };
    let (mut lo, mut hi) = (0.0, 0.0);
    let mut step = 1.0;
    loop {
        let probe = dir * step;
        let fp = f(probe)?;
        if (dir > 0.0 && fp >= q) || (dir < 0.0 && fp <= q) {
            if dir > 0.0 {
                hi = probe;
            } else {
                lo = probe;
            }
            break;
        }
        if dir > 0.0 {
            lo = probe;
        } else {
            hi = probe;
        }
        step *= 2.0;
        if step > 1e15 {
            return Err(Error::Bracket { op: OP, msg: format!("no bracket for q = {q} within |x| <= 1e15") });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if (fm - q).abs() <= 1e-12 || hi - lo <= 1e-10 * mid.abs().max(1.0) {
            return Ok(mid);
        }
        if fm < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailSide {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub side: TailSide,
    /// Slope of `ln pdf` against `x` (negative on the right).
    pub slope: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Least-squares line through `ln pdf` on the tail window between the
/// quantile levels `window.0 < window.1` (measured from the given side).
pub fn tail_diagnostic(grid: &DensityGrid, side: TailSide, window: (f64, f64)) -> Result<TailReport> {
    const OP: &str = "inversion::tail_diagnostic";
    let (q1, q2) = window;
    if !(0.5 <= q1 && q1 < q2 && q2 < 1.0) {
        return Err(Error::domain(OP, format!("window ({q1}, {q2}) must satisfy 0.5 <= q1 < q2 < 1")));
    }
    let cum = grid.cumulative();
    let total = *cum.last().expect("non-empty grid");
    let n = grid.x.len();
    let outer_mass = |j: usize| match side {
        TailSide::Right => (total - cum[j]) / total,
        TailSide::Left => cum[j] / total,
    };
    let idx: Vec<usize> = (0..n)
        .filter(|&j| {
            let s = outer_mass(j);
            s <= 1.0 - q1 && s >= 1.0 - q2 && grid.pdf[j] > 0.0 && !grid.unresolved.contains(&j)
        })
        .collect();
    if idx.len() < 50 {
        return Err(Error::range(OP, format!("only {} grid points in the tail window; refine the grid", idx.len())));
    }
    let xs: Vec<f64> = idx.iter().map(|&j| grid.x[j]).collect();
    let ys: Vec<f64> = idx.iter().map(|&j| grid.pdf[j].ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    Ok(TailReport { side, slope, r2, window: (lo, hi), points: idx.len() })
}
