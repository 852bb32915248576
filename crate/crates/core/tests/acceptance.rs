//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero when any
//! criterion fails.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::Instant;

use nugh::fitting::{fit_mle, in_profile_interval, neg_log_lik, FitOptions, FitParam, ReturnSeries};
use nugh::gh::{GhCf, GhParams};
use nugh::inversion::{cdf_at, default_x_range, pdf_grid, tail_diagnostic, DensityGrid, TailSide};
use nugh::montecarlo::{empirical_cf, identity_suite, par_sample, BaseLaw, BaseSampler, RandomSumSpec, DEFAULT_SEED};
use nugh::nu_families::{phi_eval, sample_mixing, verify_poincare, NuFamily};
use nugh::nu_transform::{
    cheb_gh_closed_form, geo_gh_closed_form, nu_gaussian_cf, NuComposed, NuGaussianChar, NuGhChar,
};
use nugh::suite::{gh_fixtures, run_check, CheckConfig};
use nugh::{CharFn, Complex64, Result};

const N_MC: usize = 100_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn poincare() -> Result<Outcome> {
    let t = linspace(0.0, 50.0, 200);
    let geo = verify_poincare(NuFamily::Geometric, &[0.5, 0.1, 0.01], &t)?.max_residual;
    let cheb = verify_poincare(NuFamily::Chebyshev, &[1.0, 0.25, 1.0 / 9.0, 0.04], &t)?.max_residual;
    outcome(geo <= 1e-12 && cheb <= 1e-12, format!("max residual geo {geo:.2e}, cheb {cheb:.2e} (tol 1e-12)"))
}

fn initial_conditions() -> Result<Outcome> {
    let mut detail = Vec::new();
    let mut pass = true;
    for family in NuFamily::ALL {
        let phi = |w: f64| phi_eval(family, w.into()).map(|v| v.re);
        let at_zero = phi_eval(family, Complex64::new(0.0, 0.0))?;
        let h = 1e-4;
        let slope = (-25.0 * phi(0.0)? + 48.0 * phi(h)? - 36.0 * phi(2.0 * h)? + 16.0 * phi(3.0 * h)?
            - 3.0 * phi(4.0 * h)?)
            / (12.0 * h);
        pass &= at_zero == Complex64::new(1.0, 0.0) && (slope + 1.0).abs() <= 1e-6;
        detail.push(format!("{family}: phi(0) = {}, phi'(0) + 1 = {:.1e}", at_zero.re, slope + 1.0));
    }
    outcome(pass, detail.join("; "))
}

fn gaussian_special_case() -> Result<Outcome> {
    let ts = linspace(-10.0, 10.0, 401);
    let mut pass = true;
    let mut detail = Vec::new();
    for (family, tol) in [(NuFamily::Geometric, 1e-14), (NuFamily::Chebyshev, 1e-12)] {
        let composed = NuComposed::new(family, |t: f64| Complex64::new((-0.5 * t * t).exp(), 0.0));
        let strict = NuGaussianChar::new(family, 0.5)?;
        let (mut e1, mut e2) = (0.0_f64, 0.0_f64);
        for &t in &ts {
            let exact = match family {
                NuFamily::Geometric => 1.0 / (1.0 + 0.5 * t * t),
                NuFamily::Chebyshev => 1.0 / t.cosh(),
            };
            let g = composed.eval(t)?;
            e1 = e1.max((g - exact).norm());
            e2 = e2.max((g - nu_gaussian_cf(&strict, t)).norm());
        }
        pass &= e1 <= tol && e2 <= tol;
        detail.push(format!("{family}: {e1:.1e} vs closed, {e2:.1e} vs phi(t^2/2) (tol {tol:.0e})"));
    }
    outcome(pass, detail.join("; "))
}

fn closed_form_agreement() -> Result<Outcome> {
    let ts = linspace(-20.0, 20.0, 801);
    let fixtures = gh_fixtures();
    let asymmetric = fixtures.iter().any(|p| p.beta() != 0.0 && p.mu() != 0.0);
    let mut worst = [0.0_f64; 2];
    for p in &fixtures {
        for (k, family) in NuFamily::ALL.into_iter().enumerate() {
            let cf = NuGhChar::new(family, *p)?;
            for &t in &ts {
                let closed = match family {
                    NuFamily::Geometric => geo_gh_closed_form(p, t)?,
                    NuFamily::Chebyshev => cheb_gh_closed_form(p, t)?,
                };
                worst[k] = worst[k].max((cf.eval_at(t)? - closed).norm());
            }
        }
    }
    outcome(
        asymmetric && worst.iter().all(|&w| w <= 1e-12),
        format!(
            "{} fixtures, max |composed - closed| geo {:.1e}, cheb {:.1e} (tol 1e-12)",
            fixtures.len(),
            worst[0],
            worst[1]
        ),
    )
}

fn cf_axioms() -> Result<Outcome> {
    let ts = linspace(-20.0, 20.0, 801);
    let (mut zero, mut modulus, mut herm) = (0.0_f64, 0.0_f64, 0.0_f64);
    for p in gh_fixtures() {
        for family in NuFamily::ALL {
            let cf = NuGhChar::new(family, p)?;
            zero = zero.max((cf.eval_at(0.0)? - 1.0).norm());
            for &t in &ts {
                let g = cf.eval_at(t)?;
                modulus = modulus.max(g.norm() - 1.0);
                herm = herm.max((cf.eval_at(-t)? - g.conj()).norm());
            }
        }
    }
    outcome(
        zero == 0.0 && modulus <= 1e-12 && herm <= 1e-12,
        format!("|g(0) - 1| = {zero:.1e}, max |g| - 1 = {modulus:.1e}, hermitian {herm:.1e}"),
    )
}

fn fixed_points() -> Result<Outcome> {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    let cases = [
        (NuFamily::Geometric, 0.5, BaseLaw::Laplace),
        (NuFamily::Geometric, 0.1, BaseLaw::Laplace),
        (NuFamily::Geometric, 0.01, BaseLaw::Laplace),
        (NuFamily::Chebyshev, 0.25, BaseLaw::HSecant),
        (NuFamily::Chebyshev, 1.0 / 9.0, BaseLaw::HSecant),
    ];
    for (k, (family, p, law)) in cases.into_iter().enumerate() {
        let spec = RandomSumSpec::new(family, p, 2.0)?;
        let r = identity_suite(&spec, law, law, N_MC, DEFAULT_SEED, 10 * k as u64)?;
        pass &= r.ks.pass;
        detail.push(format!("{family} p={p:.3}: D={:.4}", r.ks.statistic));
    }
    let gauss = BaseLaw::Gaussian { sigma: 1.0 };
    let control =
        identity_suite(&RandomSumSpec::new(NuFamily::Geometric, 0.5, 2.0)?, gauss, gauss, N_MC, DEFAULT_SEED, 90)?;
    pass &= !control.ks.pass;
    let secs = start.elapsed().as_secs_f64();
    pass &= secs <= 30.0;
    detail.push(format!("Gaussian control D={:.4} (rejected: {})", control.ks.statistic, !control.ks.pass));
    outcome(pass, format!("{}; threshold {:.4}; {secs:.1} s (limit 30 s)", detail.join(", "), control.ks.threshold))
}

fn linnik_fixed_point() -> Result<Outcome> {
    let law = BaseLaw::Linnik { alpha: 1.0 };
    let r = identity_suite(&RandomSumSpec::new(NuFamily::Geometric, 0.25, 1.0)?, law, law, N_MC, DEFAULT_SEED, 100)?;
    outcome(r.ks.pass, format!("D={:.4}, threshold {:.4}, attempts {}", r.ks.statistic, r.ks.threshold, r.attempts))
}

fn mixture_representation() -> Result<Outcome> {
    let params = GhParams::nig(2.0, 0.5, 1.0, 0.3)?;
    let mut worst_cf = 0.0_f64;
    let mut worst_mix = 0.0_f64;
    for (k, family) in NuFamily::ALL.into_iter().enumerate() {
        let s = BaseSampler::new(BaseLaw::NuGh { family, params })?;
        let xs = par_sample(N_MC, DEFAULT_SEED, 200 + k as u64, |r| s.sample(r))?;
        let cf = NuGhChar::new(family, params)?;
        let ts = par_sample(N_MC, DEFAULT_SEED, 210 + k as u64, |r| sample_mixing(family, r))?;
        for t in [0.5, 1.0, 2.0] {
            worst_cf = worst_cf.max(empirical_cf(&xs, t).z_score(cf.eval_at(t)?));
            let vals: Vec<f64> = ts.iter().map(|s| (-t * s).exp()).collect();
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            let se = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
            worst_mix = worst_mix.max((m - phi_eval(family, t.into())?.re).abs() / se);
        }
    }
    outcome(
        worst_cf <= 4.0 && worst_mix <= 4.0,
        format!("max z: empirical CF {worst_cf:.2}, mixing Laplace transform {worst_mix:.2} (limit 4)"),
    )
}

fn value_at(grid: &DensityGrid, x: f64) -> f64 {
    let j = grid.x.iter().position(|&v| (v - x).abs() < 1e-9).expect("abscissa on the grid");
    grid.pdf[j]
}

fn round_trip(cf: &dyn CharFn, grid: &DensityGrid) -> Result<f64> {
    let dx = grid.dx();
    let len = dx * grid.x.len() as f64;
    (0..256).try_fold(0.0_f64, |worst, l| {
        let t = l as f64 * TAU / len;
        let dft: Complex64 =
            grid.x.iter().zip(&grid.pdf).map(|(x, p)| p * Complex64::from_polar(1.0, t * x)).sum::<Complex64>() * dx;
        Ok(worst.max((dft - cf.eval(t)?).norm()))
    })
}

fn inversion_oracles() -> Result<Outcome> {
    let normal = |t: f64| Complex64::new((-0.5 * t * t).exp(), 0.0);
    let laplace = |t: f64| Complex64::new(1.0 / (1.0 + t * t), 0.0);
    let s = 40.0 * 2f64.sqrt();
    let ng = pdf_grid(&normal, (-40.0, 40.0), 1 << 12, None)?;
    let lg = pdf_grid(&laplace, (-s, s), 1 << 16, None)?;
    let n0 = value_at(&ng, 0.0);
    let l0 = value_at(&lg, 0.0);
    let l1 = cdf_at(&laplace, 1.0, None)?;
    let nig = GhCf::new(GhParams::nig(1.5, 0.5, 1.0, 0.2)?)?;
    let cheb = NuGhChar::new(NuFamily::Chebyshev, GhParams::nig(1.0, 0.3, 1.0, -0.5)?)?;
    let rt = [
        round_trip(&normal, &ng)?,
        round_trip(&laplace, &lg)?,
        round_trip(&nig, &pdf_grid(&nig, default_x_range(&nig)?, 1 << 12, None)?)?,
        round_trip(&cheb, &pdf_grid(&cheb, default_x_range(&cheb)?, 1 << 13, None)?)?,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let pass = (n0 - 0.398942).abs() <= 1e-6 && (l0 - 0.5).abs() <= 1e-6 && (l1 - 0.81606).abs() <= 1e-5 && rt <= 1e-6;
    outcome(pass, format!("normal pdf(0) {n0:.8}, Laplace pdf(0) {l0:.8}, Laplace CDF(1) {l1:.7}, round trip {rt:.1e}"))
}

fn tail_slope(cf: &dyn CharFn, range: (f64, f64)) -> Result<f64> {
    Ok(tail_diagnostic(&pdf_grid(cf, range, 1 << 15, None)?, TailSide::Right, (0.995, 0.9999))?.slope)
}

fn tails() -> Result<Outcome> {
    let mut pass = true;
    let mut detail = Vec::new();
    for p in [GhParams::nig(1.0, 0.0, 1.0, 0.0)?, GhParams::nig(2.0, 0.5, 1.0, 0.0)?] {
        let cf = NuGhChar::new(NuFamily::Geometric, p)?;
        let r =
            tail_diagnostic(&pdf_grid(&cf, default_x_range(&cf)?, 1 << 14, None)?, TailSide::Right, (0.995, 0.9999))?;
        pass &= r.r2 > 0.999;
        detail.push(format!("geo-NIG({}, {}, 1, 0) r2 {:.6} slope {:.4}", p.alpha(), p.beta(), r.r2, r.slope));
    }
    let gap = |p: GhParams| -> Result<(f64, f64)> {
        let cheb = NuGhChar::new(NuFamily::Chebyshev, p)?;
        let range = default_x_range(&cheb)?;
        Ok((tail_slope(&cheb, range)?, tail_slope(&GhCf::new(p)?, range)?))
    };
    let (c, b) = gap(GhParams::nig(1.0, 0.0, 0.25, 0.0)?)?;
    let rel = ((c - b) / b).abs();
    pass &= rel <= 0.05;
    detail.push(format!("cheb-NIG(1, 0, 0.25, 0) slope {c:.4} vs base {b:.4}, gap {:.1}%", 100.0 * rel));
    let (c, b) = gap(GhParams::nig(1.0, 0.0, 1.0, 0.0)?)?;
    detail.push(format!("info: delta*gamma = 1 gap {:.1}% on this window", 100.0 * ((c - b) / b).abs()));
    outcome(pass, detail.join("; "))
}

fn fit_self_consistency() -> Result<Outcome> {
    let start = Instant::now();
    let truth = GhParams::nig(2.0, 0.5, 1.0, 0.0)?;
    let family = NuFamily::Geometric;
    let s = BaseSampler::new(BaseLaw::NuGh { family, params: truth })?;
    let data = ReturnSeries::new(par_sample(20_000, DEFAULT_SEED, 300, |r| s.sample(r))?, "synthetic geo-NIG")?;
    let opts = FitOptions::default();
    let fit = fit_mle(family, &data, &opts)?;
    let at_truth = neg_log_lik(family, &truth, &data)?;
    let mut pass = fit.converged && fit.neg_log_lik <= at_truth + 0.5;
    let mut detail = vec![format!("nll fit {:.3} vs truth {:.3}", fit.neg_log_lik, at_truth)];
    for (param, got, want) in [
        (FitParam::Alpha, fit.alpha, truth.alpha()),
        (FitParam::Beta, fit.beta, truth.beta()),
        (FitParam::Delta, fit.delta, truth.delta()),
        (FitParam::Mu, fit.mu, truth.mu()),
    ] {
        let close = (got - want).abs() <= 0.15 * want.abs();
        let ok = close || in_profile_interval(family, &data, &fit, param, want)?;
        pass &= ok;
        detail.push(format!(
            "{param:?} {got:.4} ({})",
            if close {
                "15%"
            } else if ok {
                "profile"
            } else {
                "outside"
            }
        ));
    }
    let same = fit_mle(family, &data, &opts)? == fit;
    let secs = start.elapsed().as_secs_f64();
    pass &= same && secs <= 180.0;
    detail.push(format!("repeat identical: {same}; {secs:.0} s (limit 180 s)"));
    outcome(pass, detail.join(", "))
}

fn check_command() -> Result<Outcome> {
    let cfg = CheckConfig::default();
    let a = run_check(&cfg);
    let first = serde_json::to_string_pretty(&a).expect("report serializes");
    let second = serde_json::to_string_pretty(&run_check(&cfg)).expect("report serializes");
    let failing: Vec<&str> = a.items.iter().filter(|i| !i.pass).map(|i| i.name.as_str()).collect();
    outcome(
        a.pass && first == second,
        format!(
            "{} items, {} failed {:?}; byte-identical rerun: {}",
            a.items.len(),
            a.failed,
            failing,
            first == second
        ),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Result<Outcome>);
    let criteria: [Criterion; 12] = [
        ("Poincare functional equation", poincare),
        ("initial conditions phi(0) = 1, phi'(0) = -1", initial_conditions),
        ("Gaussian special case", gaussian_special_case),
        ("closed-form agreement", closed_form_agreement),
        ("CF axioms", cf_axioms),
        ("random-sum fixed points (index 2)", fixed_points),
        ("geometric Linnik(1) fixed point", linnik_fixed_point),
        ("mixture representation", mixture_representation),
        ("inversion oracles", inversion_oracles),
        ("exponential tails", tails),
        ("fit self-consistency", fit_self_consistency),
        ("check suite", check_command),
    ];
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failures += usize::from(!pass);
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict} {:>2} {name}: {detail} [{:.1} s]", k + 1, start.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
