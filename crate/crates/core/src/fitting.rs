//! Maximum-likelihood fitting of ν-GH models to return series.
//!
//! The density comes from FFT inversion of the ν-GH characteristic function
//! with linear interpolation between grid nodes. The optimizer is a
//! Nelder-Mead simplex over the unconstrained coordinates
//!
//! ```text
//! beta = b,  alpha = |b| + e^a,  delta = e^d,  mu,  lambda = 25 tanh(l / 25)
//! ```
//!
//! with `lambda` fixed at -1/2 unless requested otherwise.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::gh::{GhParams, LAMBDA_LIMIT, NIG_LAMBDA};
use crate::inversion::{default_x_range, pdf_grid_with, DensityGrid, InversionConfig};
use crate::montecarlo::stream_rng;
use crate::nu_families::NuFamily;
use crate::nu_transform::NuGhChar;

/// Fewest observations accepted for fitting.
pub const MIN_OBSERVATIONS: usize = 100;

const GRID_POINTS: usize = 1 << 13;
const PDF_FLOOR: f64 = 1e-300;
const CACHE_QUANTUM: f64 = 1e-8;
const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnSeries {
    values: Vec<f64>,
    source: String,
}

impl ReturnSeries {
    pub fn new(values: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse { row: i + 1, reason: format!("non-finite value {}", values[i]) });
        }
        Ok(ReturnSeries { values, source: source.into() })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesFormat {
    Returns,
    Prices,
}

impl FromStr for SeriesFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "returns" => Ok(SeriesFormat::Returns),
            "prices" => Ok(SeriesFormat::Prices),
            _ => Err(Error::domain("fitting::ingest_series", format!("unknown format '{s}' (returns|prices)"))),
        }
    }
}

impl fmt::Display for SeriesFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeriesFormat::Returns => "returns",
            SeriesFormat::Prices => "prices",
        })
    }
}

/// Differences of the natural logs of consecutive prices.
pub fn log_returns(prices: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = prices.iter().position(|&p| !(p > 0.0)) {
        return Err(Error::Parse { row: i + 1, reason: format!("price {} is not positive", prices[i]) });
    }
    Ok(prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// Parses one numeric column. Values may be separated by newlines, commas or
/// whitespace; a non-numeric first line is taken as a header. Rows are
/// numbered from 1 as lines of the input.
pub fn parse_series(text: &str, format: SeriesFormat, source: &str) -> Result<ReturnSeries> {
    let lines: Vec<&str> = text.lines().collect();
    let last = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(0, |i| i + 1);
    let mut raw = Vec::new();
    for (i, line) in lines[..last].iter().enumerate() {
        let row = i + 1;
        let tokens: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).collect();
        if tokens.is_empty() {
            return Err(Error::Parse { row, reason: "blank row".into() });
        }
        let parsed: std::result::Result<Vec<f64>, _> = tokens.iter().map(|t| t.parse::<f64>()).collect();
        match parsed {
            Ok(vs) => {
                if let Some(v) = vs.iter().find(|v| !v.is_finite()) {
                    return Err(Error::Parse { row, reason: format!("non-finite value {v}") });
                }
                raw.extend(vs.into_iter().map(|v| (row, v)));
            }
            Err(_) if row == 1 => {}
            Err(_) => {
                let bad = tokens.iter().find(|t| t.parse::<f64>().is_err()).expect("a token failed");
                return Err(Error::Parse { row, reason: format!("'{bad}' is not a number") });
            }
        }
    }
    let values = match format {
        SeriesFormat::Returns => raw.into_iter().map(|(_, v)| v).collect(),
        SeriesFormat::Prices => {
            if let Some(&(row, p)) = raw.iter().find(|(_, p)| !(*p > 0.0)) {
                return Err(Error::Parse { row, reason: format!("price {p} is not positive") });
            }
            let prices: Vec<f64> = raw.into_iter().map(|(_, v)| v).collect();
            log_returns(&prices)?
        }
    };
    if values.len() < MIN_OBSERVATIONS {
        return Err(Error::InsufficientData { n: values.len(), min: MIN_OBSERVATIONS });
    }
    ReturnSeries::new(values, source)
}

pub fn ingest_series(path: &Path, format: SeriesFormat) -> Result<ReturnSeries> {
    let text = std::fs::read_to_string(path)?;
    parse_series(&text, format, &path.display().to_string())
}

/// Model density for the likelihood: an inversion grid over the model's
/// default range, widened to `40 / (alpha - |beta|)` around its mean.
///
/// For geometric laws and `t > 0`, `g(t) = 1/(a t) - b/(a^2 t^2) + ...` with
/// `a = delta - i mu` (and `b = 1 - delta gamma - i delta beta` for NIG), so
/// near the origin the density carries
///
/// ```text
/// -A ln|x| + (B/2) sign(x) + C |x| + D x ln|x|,
/// A = Re(1/a) / pi,  B = Im(1/a),  C = Re(b/a^2) / 2,  D = Im(b/a^2) / pi.
/// ```
///
/// That part is subtracted before interpolating and added back afterwards.
#[derive(Debug, Clone)]
pub struct ModelDensity {
    grid: DensityGrid,
    remainder: Vec<f64>,
    /// `(A, B, C, D)` above; zero when the density is smooth.
    singular: [f64; 4],
}

impl ModelDensity {
    pub fn new(family: NuFamily, params: &GhParams) -> Result<Self> {
        let cf = NuGhChar::new(family, *params)?;
        let (a, b) = default_x_range(&cf)?;
        let mid = 0.5 * (a + b);
        let half = (0.5 * (b - a)).max(40.0 / (params.alpha() - params.beta().abs()));
        let cfg = InversionConfig { tolerance: 1e-8, check_mass: false, ..Default::default() };
        let grid = pdf_grid_with(&cf, (mid - half, mid + half), GRID_POINTS, None, &cfg)?;
        let singular = match family {
            NuFamily::Geometric => {
                let a = Complex64::new(params.delta(), -params.mu());
                let inv = a.inv();
                let q = if params.is_nig() {
                    let b = Complex64::new(1.0 - params.delta() * params.gamma(), -params.delta() * params.beta());
                    b * inv * inv
                } else {
                    Complex64::new(0.0, 0.0)
                };
                [inv.re / PI, inv.im, 0.5 * q.re, q.im / PI]
            }
            NuFamily::Chebyshev => [0.0; 4],
        };
        let mut md = ModelDensity { remainder: Vec::new(), grid, singular };
        let mut rem: Vec<f64> = md.grid.x.iter().zip(&md.grid.pdf).map(|(&x, &p)| p - md.singular_part(x)).collect();
        let mut bad = md.grid.unresolved.clone();
        if singular[0] != 0.0 {
            bad.extend(md.grid.x.iter().position(|&x| x == 0.0));
        }
        for j in bad {
            // linear extrapolation from the left neighbours
            rem[j] = if j >= 2 { 2.0 * rem[j - 1] - rem[j - 2] } else { rem[j + 1] };
        }
        md.remainder = rem;
        Ok(md)
    }

    fn singular_part(&self, x: f64) -> f64 {
        let [a, b, c, d] = self.singular;
        if a == 0.0 || x == 0.0 {
            return 0.0;
        }
        let l = x.abs().ln();
        -a * l + 0.5 * b * x.signum() + c * x.abs() + d * x * l
    }

    pub fn grid(&self) -> &DensityGrid {
        &self.grid
    }

    /// Density at `x`; `None` outside the grid.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        let xs = &self.grid.x;
        let dx = self.grid.dx();
        let u = (x - xs[0]) / dx;
        if !(u >= 0.0) || u > (xs.len() - 1) as f64 {
            return None;
        }
        let i = (u.floor() as usize).min(xs.len() - 2);
        let w = u - i as f64;
        let r = (1.0 - w) * self.remainder[i] + w * self.remainder[i + 1];
        if x == 0.0 && self.singular[0] != 0.0 {
            return Some(f64::INFINITY);
        }
        Some((r + self.singular_part(x)).max(0.0))
    }

    /// `-sum ln pdf(x_i)`, with the density floored at 1e-300.
    pub fn neg_log_lik(&self, data: &ReturnSeries) -> Result<f64> {
        let mut total = 0.0;
        for &x in data.values() {
            let p = self.pdf(x).ok_or_else(|| Error::Alias {
                op: "fitting::neg_log_lik",
                msg: format!(
                    "observation {x} outside the inversion grid [{}, {}]",
                    self.grid.x[0],
                    self.grid.x[self.grid.x.len() - 1]
                ),
            })?;
            total -= p.max(PDF_FLOOR).ln();
        }
        Ok(total)
    }
}

pub fn neg_log_lik(family: NuFamily, params: &GhParams, data: &ReturnSeries) -> Result<f64> {
    ModelDensity::new(family, params)?.neg_log_lik(data)
}

/// Unconstrained coordinates `(a, b, d, mu[, l])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reparam {
    pub free_lambda: bool,
}

impl Reparam {
    pub fn dim(&self) -> usize {
        if self.free_lambda {
            5
        } else {
            4
        }
    }

    pub fn to_params(&self, x: &[f64]) -> Result<GhParams> {
        let beta = x[1];
        let alpha = beta.abs() + x[0].exp();
        let lambda = if self.free_lambda { LAMBDA_LIMIT * (x[4] / LAMBDA_LIMIT).tanh() } else { NIG_LAMBDA };
        GhParams::new(lambda, alpha, beta, x[2].exp(), x[3])
    }

    pub fn from_params(&self, p: &GhParams) -> Vec<f64> {
        let mut x = vec![(p.alpha() - p.beta().abs()).ln(), p.beta(), p.delta().ln(), p.mu()];
        if self.free_lambda {
            x.push(LAMBDA_LIMIT * (p.lambda() / LAMBDA_LIMIT).atanh());
        }
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub starts: usize,
    pub seed: u64,
    pub free_lambda: bool,
    /// Iteration cap per start.
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { starts: 5, seed: crate::montecarlo::DEFAULT_SEED, free_lambda: false, max_iterations: 3000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FitResult {
    pub family: NuFamily,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub mu: f64,
    pub neg_log_lik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub seed: u64,
    pub seed_grid: String,
}

impl FitResult {
    pub fn params(&self) -> Result<GhParams> {
        GhParams::new(self.lambda, self.alpha, self.beta, self.delta, self.mu)
    }
}

struct Minimum {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

/// Nelder-Mead with standard coefficients; stops when the largest vertex
/// distance (max norm) drops below `tol`.
fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], steps: &[f64], tol: f64, max_iter: usize) -> Minimum {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        let fv = f(&v);
        simplex.push((v, fv));
    }
    let diameter = |s: &[(Vec<f64>, f64)]| {
        s.iter()
            .skip(1)
            .map(|(v, _)| v.iter().zip(&s[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    };
    let point = |c: &[f64], w: &[f64], k: f64| -> Vec<f64> { c.iter().zip(w).map(|(c, w)| c + k * (w - c)).collect() };
    let mut iterations = 0;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if diameter(&simplex) < tol {
            return Minimum { x: simplex[0].0.clone(), f: simplex[0].1, iterations, converged: true };
        }
        if iterations >= max_iter {
            return Minimum { x: simplex[0].0.clone(), f: simplex[0].1, iterations, converged: false };
        }
        iterations += 1;
        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let (worst, fw) = simplex[n].clone();
        let (fb, fsecond) = (simplex[0].1, simplex[n - 1].1);
        let xr = point(&centroid, &worst, -1.0);
        let fr = f(&xr);
        if fr < fb {
            let xe = point(&centroid, &worst, -2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < fsecond {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < fw {
            let xc = point(&centroid, &xr, 0.5);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = point(&centroid, &worst, 0.5);
            let fc = f(&xc);
            (xc, fc)
        };
        if fc < fr.min(fw) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for (v, fv) in simplex.iter_mut().skip(1) {
            *v = point(&best, v, 0.5);
            *fv = f(v);
        }
    }
}

/// Objective over unconstrained coordinates with a cache keyed by the
/// coordinates rounded to `CACHE_QUANTUM`. Numerical failures (aliasing,
/// truncation) count as `+inf`.
struct Objective<'a, M: Fn(&[f64]) -> Result<GhParams>> {
    family: NuFamily,
    data: &'a ReturnSeries,
    map: M,
    cache: HashMap<Vec<i64>, f64>,
}

impl<M: Fn(&[f64]) -> Result<GhParams>> Objective<'_, M> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        let key: Vec<i64> = x.iter().map(|v| (v / CACHE_QUANTUM).round() as i64).collect();
        if let Some(&v) = self.cache.get(&key) {
            return v;
        }
        let v = match (self.map)(x) {
            Ok(p) => neg_log_lik(self.family, &p, self.data).unwrap_or(f64::INFINITY),
            Err(e) => panic!("reparametrization left the parameter domain at {x:?}: {e}"),
        };
        let v = if v.is_nan() { f64::INFINITY } else { v };
        self.cache.insert(key, v);
        v
    }
}

fn summary(data: &ReturnSeries) -> Result<(f64, f64)> {
    let v = data.values();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(Error::domain("fitting::fit_mle", "degenerate series: zero sample variance"));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((sorted[sorted.len() / 2], sd))
}

/// Maximum-likelihood fit; the best of `opts.starts` Nelder-Mead runs.
/// Start 0 is a moment-based guess; start `k > 0` perturbs it with
/// standard normal noise of scale 0.5 drawn from stream `k` of the seed.
pub fn fit_mle(family: NuFamily, data: &ReturnSeries, opts: &FitOptions) -> Result<FitResult> {
    const OP: &str = "fitting::fit_mle";
    if data.n() < MIN_OBSERVATIONS {
        return Err(Error::InsufficientData { n: data.n(), min: MIN_OBSERVATIONS });
    }
    if opts.starts == 0 {
        return Err(Error::domain(OP, "at least one start is required"));
    }
    let (median, sd) = summary(data)?;
    let rp = Reparam { free_lambda: opts.free_lambda };
    let guess = GhParams::new(NIG_LAMBDA, 1.0 / sd, 0.0, sd, median)?;
    let x0 = rp.from_params(&guess);
    let mut steps = vec![0.5, 0.5 / sd, 0.5, 0.25 * sd];
    if opts.free_lambda {
        steps.push(1.0);
    }

    let runs: Vec<Minimum> = (0..opts.starts)
        .into_par_iter()
        .map(|k| {
            let mut start = x0.clone();
            if k > 0 {
                let mut rng = stream_rng(opts.seed, k as u64);
                for (x, s) in start.iter_mut().zip(&steps) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *x += z * s;
                }
            }
            let mut obj = Objective { family, data, map: |x: &[f64]| rp.to_params(x), cache: HashMap::new() };
            nelder_mead(|x| obj.eval(x), &start, &steps, SIMPLEX_TOLERANCE, opts.max_iterations)
        })
        .collect();
    let best = runs
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.f.total_cmp(&b.f).then(i.cmp(j)))
        .map(|(_, m)| m)
        .expect("at least one start");
    if !best.f.is_finite() {
        return Err(Error::NoConvergence { op: OP, msg: "no start reached a finite likelihood".into() });
    }
    let p = rp.to_params(&best.x)?;
    Ok(FitResult {
        family,
        lambda: p.lambda(),
        alpha: p.alpha(),
        beta: p.beta(),
        delta: p.delta(),
        mu: p.mu(),
        neg_log_lik: best.f,
        converged: best.converged,
        iterations: best.iterations,
        seed: opts.seed,
        seed_grid: format!(
            "{} starts: moment guess (alpha = 1/sd, beta = 0, delta = sd, mu = median) plus N(0, 0.5^2) step-scaled perturbations from streams 1..{}",
            opts.starts,
            opts.starts - 1
        ),
    })
}

/// Natural parameter fixed in a profile likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FitParam {
    Alpha,
    Beta,
    Delta,
    Mu,
}

type ParamMap = Box<dyn Fn(&[f64]) -> Result<GhParams> + Sync>;

/// Profile negative log-likelihood with one NIG parameter held at `value`,
/// minimized over the others from the fitted point.
pub fn profile_neg_log_lik(
    family: NuFamily,
    data: &ReturnSeries,
    fit: &FitResult,
    param: FitParam,
    value: f64,
) -> Result<f64> {
    let p = fit.params()?;
    let (al, be, de, mu) = (p.alpha(), p.beta(), p.delta(), p.mu());
    let lambda = p.lambda();
    // coordinates for the three free parameters
    let (x0, map): (Vec<f64>, ParamMap) = match param {
        FitParam::Alpha => {
            let c = (be / value).clamp(-0.99, 0.99).atanh();
            (
                vec![c, de.ln(), mu],
                Box::new(move |x| GhParams::new(lambda, value, value * x[0].tanh(), x[1].exp(), x[2])),
            )
        }
        FitParam::Beta => (
            vec![(al - be.abs()).max(value.abs() * 0.01 + 1e-3).ln(), de.ln(), mu],
            Box::new(move |x| GhParams::new(lambda, value.abs() + x[0].exp(), value, x[1].exp(), x[2])),
        ),
        FitParam::Delta => (
            vec![(al - be.abs()).ln(), be, mu],
            Box::new(move |x| GhParams::new(lambda, x[1].abs() + x[0].exp(), x[1], value, x[2])),
        ),
        FitParam::Mu => (
            vec![(al - be.abs()).ln(), be, de.ln()],
            Box::new(move |x| GhParams::new(lambda, x[1].abs() + x[0].exp(), x[1], x[2].exp(), value)),
        ),
    };
    let (_, sd) = summary(data)?;
    let steps = vec![0.2, 0.2, 0.1 * sd];
    let mut obj = Objective { family, data, map: |x: &[f64]| map(x), cache: HashMap::new() };
    let m = nelder_mead(|x| obj.eval(x), &x0, &steps, 1e-5, 2000);
    Ok(m.f)
}

/// Whether `value` lies inside the 95% profile-likelihood interval.
pub fn in_profile_interval(
    family: NuFamily,
    data: &ReturnSeries,
    fit: &FitResult,
    param: FitParam,
    value: f64,
) -> Result<bool> {
    let half_chi2 = 0.5 * ChiSquared::new(1.0).expect("one degree of freedom").inverse_cdf(0.95);
    Ok(profile_neg_log_lik(family, data, fit, param, value)? - fit.neg_log_lik <= half_chi2)
}
