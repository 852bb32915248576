//! Samplers for the base laws and ν-GH mixtures, random sums, and
//! Kolmogorov-Smirnov checks of the random-sum identities.
//!
//! Parallel sampling splits the work into chunks. Chunk `c` of stream `s`
//! reads the ChaCha8 keystream for `(seed, s)` starting at word
//! `c * CHUNK_WORDS`, so results do not depend on the thread count.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, InverseGaussian, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::gh::{GhCf, GhParams};
use crate::inversion::{cdf_at, default_x_range, pdf_grid, DensityGrid};
use crate::nu_families::{sample_mixing, sample_nu, NuFamily};
use crate::nu_transform::NuGhChar;
use crate::CharFn;

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_240_229;

/// Critical value of the KS statistic at the 1% level (times `sqrt(n)`).
pub const KS_CRITICAL_1PCT: f64 = 1.628;

const CHUNK: usize = 4096;
const KS_STRIDE: usize = 16;
const CHUNK_WORDS: u128 = 1 << 40;
const INVERSE_CDF_POINTS: usize = 1 << 15;

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` draws of `draw`, computed in parallel over disjoint keystream chunks.
pub fn par_sample<F>(n: usize, seed: u64, stream: u64, draw: F) -> Result<Vec<f64>>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let chunks: Vec<Result<Vec<f64>>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, stream);
            rng.set_word_pos(c as u128 * CHUNK_WORDS);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum BaseLaw {
    /// Centered normal with standard deviation `sigma`.
    Gaussian {
        sigma: f64,
    },
    /// CF `1 / (1 + t^2)`.
    Laplace,
    /// Hyperbolic secant, CF `1 / cosh t`.
    HSecant,
    /// CF `1 / (1 + |t|^alpha)`.
    Linnik {
        alpha: f64,
    },
    Nig {
        params: GhParams,
    },
    NuGh {
        family: NuFamily,
        params: GhParams,
    },
}

impl BaseLaw {
    pub fn validate(&self) -> Result<()> {
        const OP: &str = "montecarlo::sample_base";
        match *self {
            BaseLaw::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::domain(OP, format!("sigma = {sigma} must be positive")))
            }
            BaseLaw::Linnik { alpha } if !(alpha > 0.0 && alpha <= 2.0) => {
                Err(Error::domain(OP, format!("Linnik index {alpha} outside (0, 2]")))
            }
            BaseLaw::Nig { params } if !params.is_nig() => {
                Err(Error::domain(OP, format!("NIG law needs lambda = -1/2, got {}", params.lambda())))
            }
            _ => Ok(()),
        }
    }

    /// Characteristic function at `t`.
    pub fn cf(&self, t: f64) -> Result<Complex64> {
        Ok(match *self {
            BaseLaw::Gaussian { sigma } => Complex64::new((-0.5 * sigma * sigma * t * t).exp(), 0.0),
            BaseLaw::Laplace => Complex64::new(1.0 / (1.0 + t * t), 0.0),
            BaseLaw::HSecant => Complex64::new(1.0 / t.cosh(), 0.0),
            BaseLaw::Linnik { alpha } => Complex64::new(1.0 / (1.0 + t.abs().powf(alpha)), 0.0),
            BaseLaw::Nig { params } => GhCf::new(params)?.evaluate(t)?.value,
            BaseLaw::NuGh { family, params } => NuGhChar::new(family, params)?.eval_at(t)?,
        })
    }

    /// Closed-form distribution function, where one exists.
    pub fn closed_cdf(&self, x: f64) -> Option<f64> {
        match *self {
            BaseLaw::Gaussian { sigma } => Some(Normal::new(0.0, sigma).ok()?.cdf(x)),
            BaseLaw::Laplace => Some(if x < 0.0 { 0.5 * x.exp() } else { 1.0 - 0.5 * (-x).exp() }),
            BaseLaw::HSecant => Some((2.0 / PI) * (FRAC_PI_2 * x).exp().atan()),
            BaseLaw::Linnik { alpha: 2.0 } => BaseLaw::Laplace.closed_cdf(x),
            _ => None,
        }
    }
}

/// Symmetric strictly stable draw with CF `exp(-|t|^alpha)`
/// (Chambers-Mallows-Stuck).
pub fn sample_symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = PI * (rng.random::<f64>() - 0.5);
    if alpha == 1.0 {
        return v.tan();
    }
    let w: f64 = Exp1.sample(rng);
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

fn sample_nig<R: Rng + ?Sized>(alpha: f64, beta: f64, delta: f64, mu: f64, rng: &mut R) -> Result<f64> {
    let gamma = (alpha * alpha - beta * beta).sqrt();
    let ig = InverseGaussian::new(delta / gamma, delta * delta)
        .map_err(|e| Error::domain("montecarlo::sample_base", format!("inverse Gaussian: {e}")))?;
    let z = ig.sample(rng);
    let n: f64 = StandardNormal.sample(rng);
    Ok(mu + beta * z + z.sqrt() * n)
}

/// Piecewise-linear inverse of the distribution function tabulated from an
/// inversion grid.
#[derive(Debug, Clone)]
pub struct InverseCdf {
    x: Vec<f64>,
    cum: Vec<f64>,
}

impl InverseCdf {
    pub fn from_grid(grid: &DensityGrid) -> Self {
        let mut filled = grid.clone();
        filled.fill_unresolved();
        let pdf = filled.pdf;
        let dx = grid.dx();
        let mut cum = Vec::with_capacity(pdf.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in pdf.windows(2) {
            acc += 0.5 * dx * (w[0].max(0.0) + w[1].max(0.0));
            cum.push(acc);
        }
        let total = acc;
        cum.iter_mut().for_each(|c| *c /= total);
        InverseCdf { x: grid.x.clone(), cum }
    }

    pub fn build(cf: &dyn CharFn) -> Result<Self> {
        let range = default_x_range(cf)?;
        Ok(Self::from_grid(&pdf_grid(cf, range, INVERSE_CDF_POINTS, None)?))
    }

    pub fn invert(&self, u: f64) -> f64 {
        let i = self.cum.partition_point(|&c| c < u).clamp(1, self.cum.len() - 1);
        let (c0, c1) = (self.cum[i - 1], self.cum[i]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.x[i - 1] + w * (self.x[i] - self.x[i - 1])
    }
}

/// Sampler for a base law, with any preprocessing done up front.
#[derive(Debug, Clone)]
pub struct BaseSampler {
    law: BaseLaw,
    table: Option<InverseCdf>,
}

impl BaseSampler {
    pub fn new(law: BaseLaw) -> Result<Self> {
        law.validate()?;
        let table = match law {
            BaseLaw::NuGh { family, params } if !params.is_nig() => {
                Some(InverseCdf::build(&NuGhChar::new(family, params)?)?)
            }
            _ => None,
        };
        Ok(BaseSampler { law, table })
    }

    pub fn law(&self) -> &BaseLaw {
        &self.law
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        Ok(match self.law {
            BaseLaw::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            BaseLaw::Laplace => {
                let e: f64 = Exp1.sample(rng);
                if rng.random::<bool>() {
                    e
                } else {
                    -e
                }
            }
            BaseLaw::HSecant => {
                let u: f64 = rng.random();
                (2.0 / PI) * (FRAC_PI_2 * u).tan().ln()
            }
            BaseLaw::Linnik { alpha } => {
                let w: f64 = Exp1.sample(rng);
                sample_symmetric_stable(alpha, rng) * w.powf(1.0 / alpha)
            }
            BaseLaw::Nig { params: p } => sample_nig(p.alpha(), p.beta(), p.delta(), p.mu(), rng)?,
            BaseLaw::NuGh { family, params: p } => match &self.table {
                Some(table) => table.invert(rng.random()),
                None => {
                    let t = sample_mixing(family, rng)?;
                    sample_nig(p.alpha(), p.beta(), t * p.delta(), t * p.mu(), rng)?
                }
            },
        })
    }
}

/// `n` i.i.d. draws from `law` using `rng`.
pub fn sample_base<R: Rng + ?Sized>(law: BaseLaw, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let sampler = BaseSampler::new(law)?;
    (0..n).map(|_| sampler.sample(rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RandomSumSpec {
    pub family: NuFamily,
    pub p: f64,
    /// Summands are scaled by `p^(1 / stability_index)`.
    pub stability_index: f64,
}

impl RandomSumSpec {
    pub fn new(family: NuFamily, p: f64, stability_index: f64) -> Result<Self> {
        family.check_p(p)?;
        if !(stability_index > 0.0 && stability_index <= 2.0) {
            return Err(Error::domain(
                "montecarlo::RandomSumSpec",
                format!("stability index {stability_index} outside (0, 2]"),
            ));
        }
        Ok(RandomSumSpec { family, p, stability_index })
    }

    pub fn draw<R: Rng + ?Sized>(&self, base: &BaseSampler, rng: &mut R) -> Result<f64> {
        let nu = sample_nu(self.family, self.p, rng)?;
        let mut s = 0.0;
        for _ in 0..nu {
            s += base.sample(rng)?;
        }
        Ok(self.p.powf(1.0 / self.stability_index) * s)
    }
}

/// `n` realizations of `p^(1/index) * sum_{j <= nu_p} X_j`.
pub fn random_sum_sample<R: Rng + ?Sized>(
    spec: &RandomSumSpec,
    base: &BaseSampler,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    (0..n).map(|_| spec.draw(base, rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KSReport {
    pub n: usize,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Exact one-sample KS statistic against `cdf`, at the 1% level.
///
/// The CDF is evaluated on every `KS_STRIDE`-th order statistic first.
/// Monotonicity bounds the contribution of the samples in between, and a
/// gap is evaluated in full only when its bound exceeds the running maximum.
pub fn ks_statistic<C>(samples: &[f64], cdf: C) -> Result<KSReport>
where
    C: Fn(f64) -> Result<f64> + Sync,
{
    let n = samples.len();
    if n < 100 {
        return Err(Error::InsufficientData { n, min: 100 });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let term = |i: usize, fi: f64| (fi - i as f64 / nf).max((i + 1) as f64 / nf - fi);

    let nodes: Vec<usize> = (0..n).step_by(KS_STRIDE).chain(std::iter::once(n - 1)).collect();
    let fnode: Vec<f64> = nodes.par_iter().map(|&i| cdf(xs[i])).collect::<Result<_>>()?;
    let mut d = nodes.iter().zip(&fnode).map(|(&i, &f)| term(i, f)).fold(0.0, f64::max);

    let mut gaps: Vec<(f64, usize, usize)> = nodes
        .windows(2)
        .zip(fnode.windows(2))
        .filter(|(w, _)| w[1] > w[0] + 1)
        .map(|(w, f)| {
            let (lo, hi) = (w[0] + 1, w[1] - 1);
            let bound = (f[1] - lo as f64 / nf).max((hi + 1) as f64 / nf - f[0]);
            (bound, lo, hi)
        })
        .collect();
    gaps.sort_by(|a, b| b.0.total_cmp(&a.0));
    for &(bound, lo, hi) in &gaps {
        if bound <= d {
            break;
        }
        let fs: Vec<f64> = (lo..=hi).into_par_iter().map(|i| cdf(xs[i])).collect::<Result<_>>()?;
        d = (lo..=hi).zip(fs).map(|(i, f)| term(i, f)).fold(d, f64::max);
    }
    let threshold = KS_CRITICAL_1PCT / nf.sqrt();
    Ok(KSReport { n, statistic: d, threshold, pass: d < threshold })
}

/// Distribution function of `law`: closed form when available, else
/// Gil-Pelaez inversion of its CF.
pub fn law_cdf(law: BaseLaw) -> Result<impl Fn(f64) -> Result<f64> + Sync> {
    law.validate()?;
    let nu = match law {
        BaseLaw::NuGh { family, params } => Some(NuGhChar::new(family, params)?),
        _ => None,
    };
    let nig = match law {
        BaseLaw::Nig { params } => Some(GhCf::new(params)?),
        _ => None,
    };
    Ok(move |x: f64| {
        if let Some(v) = law.closed_cdf(x) {
            return Ok(v);
        }
        if let Some(cf) = &nu {
            return cdf_at(cf, x, None);
        }
        if let Some(cf) = &nig {
            return cdf_at(cf, x, None);
        }
        let cf = |t: f64| law.cf(t).expect("closed-form CF");
        cdf_at(&cf, x, None)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IdentityReport {
    pub spec: RandomSumSpec,
    pub base: BaseLaw,
    pub fixed_point: BaseLaw,
    pub seed: u64,
    /// Stream of the attempt reported in `ks`.
    pub stream: u64,
    pub attempts: usize,
    pub ks: KSReport,
}

/// Samples the random sum of `base` draws and tests it against the fixed
/// point law. A failed attempt is repeated once on the next stream.
pub fn identity_suite(
    spec: &RandomSumSpec,
    base: BaseLaw,
    fixed_point: BaseLaw,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<IdentityReport> {
    let sampler = BaseSampler::new(base)?;
    let cdf = law_cdf(fixed_point)?;
    let mut report = None;
    for attempt in 0..2 {
        let s = stream + attempt as u64;
        let xs = par_sample(n, seed, s, |rng| spec.draw(&sampler, rng))?;
        let ks = ks_statistic(&xs, &cdf)?;
        let r = IdentityReport { spec: *spec, base, fixed_point, seed, stream: s, attempts: attempt + 1, ks };
        let pass = ks.pass;
        report = Some(r);
        if pass {
            break;
        }
    }
    Ok(report.expect("at least one attempt"))
}

/// Empirical CF at `t` with standard errors of its real and imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalCf {
    pub t: f64,
    pub value: Complex64,
    pub se_re: f64,
    pub se_im: f64,
}

impl EmpiricalCf {
    /// Largest deviation from `target` in standard errors.
    pub fn z_score(&self, target: Complex64) -> f64 {
        let d = self.value - target;
        (d.re.abs() / self.se_re.max(f64::MIN_POSITIVE)).max(d.im.abs() / self.se_im.max(f64::MIN_POSITIVE))
    }
}

pub fn empirical_cf(samples: &[f64], t: f64) -> EmpiricalCf {
    let n = samples.len() as f64;
    let (mut sc, mut ss, mut sc2, mut ss2) = (0.0, 0.0, 0.0, 0.0);
    for &x in samples {
        let (s, c) = (t * x).sin_cos();
        sc += c;
        ss += s;
        sc2 += c * c;
        ss2 += s * s;
    }
    let (mc, ms) = (sc / n, ss / n);
    let var_c = (sc2 / n - mc * mc).max(0.0);
    let var_s = (ss2 / n - ms * ms).max(0.0);
    EmpiricalCf { t, value: Complex64::new(mc, ms), se_re: (var_c / n).sqrt(), se_im: (var_s / n).sqrt() }
}
