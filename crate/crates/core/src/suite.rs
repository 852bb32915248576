//! The property suite behind the `check` command: Poincaré residuals,
//! normalization, CF axioms, closed-form agreement, inversion consistency,
//! tail shape and the random-sum identities.
//!
//! Every item records the measured value next to its tolerance. Nothing in
//! the report depends on timing or thread count, so a fixed seed gives a
//! byte-identical serialization.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;
use crate::gh::{GhCf, GhParams};
use crate::inversion::{cdf_at, default_x_range, pdf_grid, tail_diagnostic, DensityGrid, TailSide};
use crate::montecarlo::{empirical_cf, identity_suite, ks_statistic, par_sample, BaseLaw, BaseSampler, RandomSumSpec};
use crate::nu_families::{
    default_cutoff, nu_probabilities, pgf_eval, phi_eval, sample_mixing, sample_nu, verify_poincare, NuFamily,
};
use crate::nu_transform::{
    cheb_gh_closed_form, geo_gh_closed_form, mean_of_nu_gh, nu_gaussian_cf, NuComposed, NuGaussianChar, NuGhChar,
};
use crate::CharFn;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub module: &'static str,
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub families: Vec<NuFamily>,
    pub seed: u64,
    pub samples: usize,
    pub items: Vec<CheckItem>,
    pub passed: usize,
    pub failed: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckConfig {
    pub families: Vec<NuFamily>,
    pub seed: u64,
    /// Monte Carlo sample size.
    pub samples: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { families: NuFamily::ALL.to_vec(), seed: crate::montecarlo::DEFAULT_SEED, samples: 100_000 }
    }
}

/// GH fixtures for the transform checks; the last two are asymmetric.
pub fn gh_fixtures() -> Vec<GhParams> {
    [
        (-0.5, 1.0, 0.0, 1.0, 0.0),
        (1.0, 2.0, 0.5, 1.0, 0.0),
        (-2.5, 1.5, -0.7, 0.6, 0.4),
        (3.0, 1.0, 0.3, 2.0, -1.2),
        (-0.5, 2.5, 1.2, 0.8, 2.0),
    ]
    .iter()
    .map(|&(l, a, b, d, m)| GhParams::new(l, a, b, d, m).expect("valid fixture"))
    .collect()
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

struct Items(Vec<CheckItem>);

impl Items {
    /// Records `value <= tolerance`.
    fn at_most(&mut self, module: &'static str, name: impl Into<String>, value: Result<f64>, tolerance: f64) {
        self.push(module, name.into(), value, tolerance, |v| v <= tolerance);
    }

    /// Records `value >= tolerance`.
    fn at_least(&mut self, module: &'static str, name: impl Into<String>, value: Result<f64>, tolerance: f64) {
        self.push(module, name.into(), value, tolerance, |v| v >= tolerance);
    }

    fn push(
        &mut self,
        module: &'static str,
        name: String,
        value: Result<f64>,
        tolerance: f64,
        ok: impl Fn(f64) -> bool,
    ) {
        let item = match value {
            Ok(v) => CheckItem { module, name, value: v, tolerance, pass: ok(v), error: None },
            Err(e) => CheckItem { module, name, value: f64::NAN, tolerance, pass: false, error: Some(e.to_string()) },
        };
        self.0.push(item);
    }
}

fn max_over<I: IntoIterator<Item = Result<f64>>>(it: I) -> Result<f64> {
    it.into_iter().try_fold(0.0_f64, |m, v| Ok(m.max(v?)))
}

fn nu_family_checks(items: &mut Items, family: NuFamily, cfg: &CheckConfig) {
    const M: &str = "nu_families";
    let ps = family.reference_p_values();
    let grid = linspace(0.0, 50.0, 200);
    items.at_most(
        M,
        format!("{family}: Poincare residual"),
        verify_poincare(family, &ps, &grid).map(|r| r.max_residual),
        1e-12,
    );

    items.at_most(M, format!("{family}: phi(0) = 1"), phi_eval(family, 0.0.into()).map(|v| (v - 1.0).norm()), 0.0);
    let phi = |w: f64| phi_eval(family, w.into()).map(|v| v.re);
    // fourth-order one-sided difference; phi is defined for Re w >= 0 only
    let slope = (|| {
        let h = 1e-4;
        let d = (-25.0 * phi(0.0)? + 48.0 * phi(h)? - 36.0 * phi(2.0 * h)? + 16.0 * phi(3.0 * h)?
            - 3.0 * phi(4.0 * h)?)
            / (12.0 * h);
        Ok((d + 1.0).abs())
    })();
    items.at_most(M, format!("{family}: phi'(0) = -1"), slope, 1e-6);

    let mean_identity = max_over(ps.iter().map(|&p| {
        let pgf = |z: f64| pgf_eval(family, p, z.into()).map(|v| v.re);
        let h = 1e-5;
        let d = (25.0 * pgf(1.0)? - 48.0 * pgf(1.0 - h)? + 36.0 * pgf(1.0 - 2.0 * h)? - 16.0 * pgf(1.0 - 3.0 * h)?
            + 3.0 * pgf(1.0 - 4.0 * h)?)
            / (12.0 * h);
        Ok((d - 1.0 / p).abs())
    }));
    items.at_most(M, format!("{family}: P_p'(1) = 1/p"), mean_identity, 1e-6);

    let round_trip = max_over(ps.iter().flat_map(|&p| {
        [0.3, 0.6, 0.9].map(move |z: f64| -> Result<f64> {
            let probs = nu_probabilities(family, p, default_cutoff(family, p)?)?;
            let series: f64 = probs.iter().map(|&(k, q)| q * z.powi(k as i32)).sum();
            Ok((series - pgf_eval(family, p, z.into())?.re).abs())
        })
    }));
    items.at_most(M, format!("{family}: probabilities reproduce the p.g.f."), round_trip, 1e-10);

    let p = ps[ps.len() - 1];
    let nu_mean = par_sample(cfg.samples, cfg.seed, 11, |r| sample_nu(family, p, r).map(|k| k as f64)).map(|xs| {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m - 1.0 / p).abs() / (var / n).sqrt()
    });
    items.at_most(M, format!("{family}: mean of nu_p = 1/p at p = {p} (standard errors)"), nu_mean, 4.0);

    let mixing = par_sample(cfg.samples, cfg.seed, 12, |r| sample_mixing(family, r)).and_then(|ts| {
        max_over([0.5, 1.0, 2.0].map(|lam: f64| {
            let n = ts.len() as f64;
            let vals: Vec<f64> = ts.iter().map(|t| (-lam * t).exp()).collect();
            let m = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
            Ok((m - phi_eval(family, lam.into())?.re).abs() / (var / n).sqrt())
        }))
    });
    items.at_most(M, format!("{family}: mixing law matches phi (standard errors)"), mixing, 4.0);
}

fn transform_checks(items: &mut Items, family: NuFamily) {
    const M: &str = "nu_transform";
    let ts = linspace(-20.0, 20.0, 401);
    let closed = |gh: &GhParams, t: f64| match family {
        NuFamily::Geometric => geo_gh_closed_form(gh, t),
        NuFamily::Chebyshev => cheb_gh_closed_form(gh, t),
    };
    let fixtures: Vec<Result<NuGhChar>> = gh_fixtures().into_iter().map(|p| NuGhChar::new(family, p)).collect();
    let agreement = max_over(fixtures.iter().zip(gh_fixtures()).flat_map(|(g, p)| {
        ts.iter().map(move |&t| {
            let g = g.as_ref().map_err(Clone::clone)?;
            Ok((g.eval_at(t)? - closed(&p, t)?).norm())
        })
    }));
    items.at_most(M, format!("{family}: composition equals closed form on [-20, 20]"), agreement, 1e-12);

    let at_zero = max_over(fixtures.iter().map(|g| Ok((g.as_ref().map_err(Clone::clone)?.eval_at(0.0)? - 1.0).norm())));
    items.at_most(M, format!("{family}: g(0) = 1"), at_zero, 1e-15);
    let modulus = max_over(
        fixtures
            .iter()
            .flat_map(|g| ts.iter().map(move |&t| Ok(g.as_ref().map_err(Clone::clone)?.eval_at(t)?.norm() - 1.0))),
    );
    items.at_most(M, format!("{family}: |g| <= 1"), modulus, 1e-12);
    let hermitian = max_over(fixtures.iter().flat_map(|g| {
        ts.iter().map(move |&t| {
            let g = g.as_ref().map_err(Clone::clone)?;
            Ok((g.eval_at(-t)? - g.eval_at(t)?.conj()).norm())
        })
    }));
    items.at_most(M, format!("{family}: g(-t) = conj g(t)"), hermitian, 1e-12);

    let gauss = NuComposed::new(family, |t: f64| Complex64::new((-0.5 * t * t).exp(), 0.0));
    let expected = |t: f64| match family {
        NuFamily::Geometric => 1.0 / (1.0 + 0.5 * t * t),
        NuFamily::Chebyshev => 1.0 / t.cosh(),
    };
    let tol = match family {
        NuFamily::Geometric => 1e-14,
        NuFamily::Chebyshev => 1e-12,
    };
    let gs = linspace(-10.0, 10.0, 201);
    let special = max_over(gs.iter().map(|&t| Ok((gauss.eval(t)? - expected(t)).norm())));
    items.at_most(M, format!("{family}: transform of exp(-t^2/2)"), special, tol);
    let strict = NuGaussianChar::new(family, 0.5)
        .map(|s| gs.iter().map(|&t| (nu_gaussian_cf(&s, t) - expected(t)).norm()).fold(0.0, f64::max));
    items.at_most(M, format!("{family}: phi(t^2/2) equals the transform"), strict, tol);

    let means = max_over(fixtures.iter().zip(gh_fixtures()).map(|(g, p)| {
        let base = crate::gh::moments_from_cf(&GhCf::new(p)?, 1)?[0];
        Ok((mean_of_nu_gh(g.as_ref().map_err(Clone::clone)?)? - base).abs())
    }));
    items.at_most(M, format!("{family}: mean preserved"), means, 1e-4);
}

fn round_trip(cf: &dyn CharFn, grid: &DensityGrid, count: usize) -> Result<f64> {
    let dx = grid.dx();
    let len = dx * grid.x.len() as f64;
    max_over((0..count).map(|l| {
        let t = l as f64 * TAU / len;
        let dft: Complex64 =
            grid.x.iter().zip(&grid.pdf).map(|(x, p)| p * Complex64::from_polar(1.0, t * x)).sum::<Complex64>() * dx;
        Ok((dft - cf.eval(t)?).norm())
    }))
}

fn inversion_checks(items: &mut Items, family: NuFamily) {
    const M: &str = "inversion";
    let base = GhParams::nig(1.0, 0.3, 1.0, -0.5).expect("valid fixture");
    let cf = match NuGhChar::new(family, base) {
        Ok(cf) => cf,
        Err(e) => return items.at_most(M, format!("{family}: fixture"), Err(e), 0.0),
    };
    let grid = default_x_range(&cf).and_then(|r| pdf_grid(&cf, r, 1 << 13, None));
    // geo-GH densities are log-singular at 0, so their samples cannot carry
    // the CF; the geometric transform of N(0, 2) (Laplace) stands in
    let rt = match family {
        NuFamily::Chebyshev => grid.as_ref().map_err(Clone::clone).and_then(|g| round_trip(&cf, g, 256)),
        NuFamily::Geometric => {
            let s = 40.0 * 2f64.sqrt();
            NuGaussianChar::new(family, 1.0)
                .and_then(|laplace| round_trip(&laplace, &pdf_grid(&laplace, (-s, s), 1 << 16, None)?, 256))
        }
    };
    items.at_most(M, format!("{family}: DFT of the density reproduces the CF"), rt, 1e-6);

    let monotone = (|| {
        let mut prev = 0.0;
        let mut worst = 0.0_f64;
        for i in -40..=40 {
            let v = cdf_at(&cf, i as f64 * 0.25, None)?;
            worst = worst.max(prev - v);
            prev = v;
        }
        Ok(worst)
    })();
    items.at_most(M, format!("{family}: CDF nondecreasing"), monotone, 1e-9);

    let window = match family {
        NuFamily::Chebyshev => (-2.0, 1.0),
        NuFamily::Geometric => (0.5, 4.0),
    };
    let consistency = grid.as_ref().map_err(Clone::clone).and_then(|g| {
        let cum = g.cumulative();
        let i = g.x.iter().position(|&x| x >= window.0).expect("window inside grid");
        let k = g.x.iter().position(|&x| x >= window.1).expect("window inside grid");
        Ok((cum[k] - cum[i] - (cdf_at(&cf, g.x[k], None)? - cdf_at(&cf, g.x[i], None)?)).abs())
    });
    items.at_most(M, format!("{family}: trapezoid mass matches CDF differences"), consistency, 1e-5);

    let w = (0.995, 0.9999);
    match family {
        NuFamily::Geometric => {
            for (label, p) in [
                ("NIG(1, 0, 1, 0)", GhParams::nig(1.0, 0.0, 1.0, 0.0)),
                ("NIG(2, 0.5, 1, 0)", GhParams::nig(2.0, 0.5, 1.0, 0.0)),
            ] {
                let r2 = p.and_then(|p| {
                    let cf = NuGhChar::new(family, p)?;
                    let g = pdf_grid(&cf, default_x_range(&cf)?, 1 << 14, None)?;
                    Ok(tail_diagnostic(&g, TailSide::Right, w)?.r2)
                });
                items.at_least(M, format!("{family}: exponential right tail of {label}, r^2"), r2, 0.999);
            }
        }
        NuFamily::Chebyshev => {
            let gap = (|| {
                let p = GhParams::nig(1.0, 0.0, 0.25, 0.0)?;
                let cheb = NuGhChar::new(family, p)?;
                let base = GhCf::new(p)?;
                let range = default_x_range(&cheb)?;
                let slope = |cf: &dyn CharFn| -> Result<f64> {
                    Ok(tail_diagnostic(&pdf_grid(cf, range, 1 << 15, None)?, TailSide::Right, w)?.slope)
                };
                let (b, c) = (slope(&base)?, slope(&cheb)?);
                Ok(((c - b) / b).abs())
            })();
            items.at_most(M, format!("{family}: tail slope matches base NIG(1, 0, 0.25, 0)"), gap, 0.05);
        }
    }
}

const REPLICATES: u64 = 100;

fn montecarlo_checks(items: &mut Items, family: NuFamily, cfg: &CheckConfig) {
    const M: &str = "montecarlo";
    let n = cfg.samples;
    let fixed_point = match family {
        NuFamily::Geometric => BaseLaw::Laplace,
        NuFamily::Chebyshev => BaseLaw::HSecant,
    };
    for (k, p) in family.reference_p_values().into_iter().enumerate() {
        let r = RandomSumSpec::new(family, p, 2.0)
            .and_then(|spec| identity_suite(&spec, fixed_point, fixed_point, n, cfg.seed, 100 + 2 * k as u64));
        let ks = r.map(|r| r.ks.statistic / r.ks.threshold);
        items.at_most(M, format!("{family}: fixed point at p = {p}, KS / critical value"), ks, 1.0);
    }
    if family == NuFamily::Geometric {
        let g = BaseLaw::Gaussian { sigma: 1.0 };
        let r = RandomSumSpec::new(family, 0.5, 2.0).and_then(|spec| identity_suite(&spec, g, g, n, cfg.seed, 120));
        items.at_least(
            M,
            format!("{family}: Gaussian is rejected, KS / critical value"),
            r.map(|r| r.ks.statistic / r.ks.threshold),
            1.0,
        );

        let linnik = BaseLaw::Linnik { alpha: 1.0 };
        let r = RandomSumSpec::new(family, 0.25, 1.0)
            .and_then(|spec| identity_suite(&spec, linnik, linnik, n, cfg.seed, 130));
        items.at_most(
            M,
            format!("{family}: Linnik(1) fixed point, KS / critical value"),
            r.map(|r| r.ks.statistic / r.ks.threshold),
            1.0,
        );
    }

    let p = GhParams::nig(2.0, 0.5, 1.0, 0.0).expect("valid fixture");
    let mixture = (|| {
        let s = BaseSampler::new(BaseLaw::NuGh { family, params: p })?;
        let xs = par_sample(n, cfg.seed, 140, |r| s.sample(r))?;
        let cf = NuGhChar::new(family, p)?;
        max_over([0.5, 1.0, 2.0].map(|t| Ok(empirical_cf(&xs, t).z_score(cf.eval_at(t)?))))
    })();
    items.at_most(M, format!("{family}: mixture samples match the CF (standard errors)"), mixture, 4.0);

    let scaling = (|| {
        let s = BaseSampler::new(fixed_point)?;
        let cdf = |x: f64| Ok(fixed_point.closed_cdf(x).expect("closed form"));
        let mean = |m: usize, stream: u64| -> Result<f64> {
            let mut acc = 0.0;
            for k in 0..REPLICATES {
                let xs = par_sample(m, cfg.seed, stream + k, |r| s.sample(r))?;
                acc += ks_statistic(&xs, cdf)?.statistic;
            }
            Ok(acc / REPLICATES as f64)
        };
        let ratio = mean(2_000, 1_000)? / mean(4_000, 2_000)?;
        Ok((ratio / 2f64.sqrt() - 1.0).abs())
    })();
    items.at_most(M, format!("{family}: mean KS shrinks by sqrt(2) when n doubles (relative deviation)"), scaling, 0.2);

    let determinism = (|| {
        let s = BaseSampler::new(BaseLaw::NuGh { family, params: p })?;
        let a = par_sample(10_000, cfg.seed, 150, |r| s.sample(r))?;
        let b = par_sample(10_000, cfg.seed, 150, |r| s.sample(r))?;
        Ok(a.iter().zip(&b).filter(|(x, y)| x.to_bits() != y.to_bits()).count() as f64)
    })();
    items.at_most(M, format!("{family}: identical seed and stream reproduce samples (mismatches)"), determinism, 0.0);
}

/// Runs the suite for the configured families.
pub fn run_check(cfg: &CheckConfig) -> CheckReport {
    let mut items = Items(Vec::new());
    for &family in &cfg.families {
        nu_family_checks(&mut items, family, cfg);
        transform_checks(&mut items, family);
        inversion_checks(&mut items, family);
        montecarlo_checks(&mut items, family, cfg);
    }
    let items = items.0;
    let passed = items.iter().filter(|i| i.pass).count();
    let failed = items.len() - passed;
    CheckReport {
        families: cfg.families.clone(),
        seed: cfg.seed,
        samples: cfg.samples,
        items,
        passed,
        failed,
        pass: failed == 0,
    }
}
