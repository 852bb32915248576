//! The ν-transform `g(t) = phi(-log f(t))` of an infinitely divisible
//! characteristic function `f`, with `log` the distinguished logarithm.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gh::{moments_from_cf, GhCf, GhParams};
use crate::nu_families::{phi_eval, NuFamily};
use crate::special_fn::{bessel_k, continue_to, log_on_uniform_grid, principal_sqrt_right, LogTrack, StepPolicy};
use crate::CharFn;

/// Track growth unit, in base steps.
pub const TRACK_CHUNK: usize = 64;

/// `phi(-l)` where `l` is a distinguished log of `f(t)`.
pub fn nu_transform_log(family: NuFamily, log_f: Complex64) -> Result<Complex64> {
    phi_eval(family, -log_f)
}

/// ν-GH characteristic function: a family together with GH parameters and
/// a precomputed track of `log f`.
///
/// The value is immutable; [`NuGhChar::extended`] returns a copy whose
/// track covers a larger range. Evaluation beyond the track still works
/// through a transient continuation.
#[derive(Debug, Clone)]
pub struct NuGhChar {
    family: NuFamily,
    gh: GhCf,
    track: LogTrack,
}

fn chunked_range(base_step: f64, t: f64) -> f64 {
    let chunk = TRACK_CHUNK as f64 * base_step;
    ((t / chunk).floor() + 1.0) * chunk
}

impl NuGhChar {
    pub fn new(family: NuFamily, params: GhParams) -> Result<Self> {
        Self::from_cf(family, GhCf::new(params)?)
    }

    pub fn from_cf(family: NuFamily, gh: GhCf) -> Result<Self> {
        let t_max = chunked_range(gh.step_policy().base_step, 0.0);
        let track = gh.log_track(t_max)?;
        Ok(NuGhChar { family, gh, track })
    }

    /// Copy whose track covers `|t| <= t` plus at least one chunk.
    pub fn extended(&self, t: f64) -> Result<Self> {
        let t = t.abs();
        if t <= self.track.t_max() {
            return Ok(self.clone());
        }
        let mut track = self.track.clone();
        let target = chunked_range(self.gh.step_policy().base_step, t);
        track.extend_with(&|u| self.gh.local_log(u), target)?;
        Ok(NuGhChar { family: self.family, gh: self.gh.clone(), track })
    }

    pub fn family(&self) -> NuFamily {
        self.family
    }

    pub fn params(&self) -> &GhParams {
        self.gh.params()
    }

    pub fn base(&self) -> &GhCf {
        &self.gh
    }

    pub fn track(&self) -> &LogTrack {
        &self.track
    }

    /// Distinguished `log f(t)` of the base GH law.
    pub fn base_log(&self, t: f64) -> Result<Complex64> {
        if t.abs() <= self.track.t_max() {
            self.track.value_at(&|u| self.gh.local_log(u), t)
        } else {
            self.gh.log_cf(t)
        }
    }

    pub fn eval_at(&self, t: f64) -> Result<Complex64> {
        nu_transform_log(self.family, self.base_log(t)?)
    }
}

impl CharFn for NuGhChar {
    fn eval(&self, t: f64) -> Result<Complex64> {
        self.eval_at(t)
    }

    fn eval_grid(&self, dt: f64, count: usize) -> Result<Vec<Complex64>> {
        self.gh.log_on_grid(dt, count)?.into_iter().map(|l| nu_transform_log(self.family, l)).collect()
    }
}

/// `g(t)` for a ν-GH spec.
pub fn nu_gh_cf(spec: &NuGhChar, t: f64) -> Result<Complex64> {
    spec.eval_at(t)
}

/// ν-transform of an arbitrary non-vanishing characteristic function given
/// by its values; the log is tracked from the principal branch at 0.
pub struct NuComposed<F> {
    family: NuFamily,
    cf: F,
    policy: StepPolicy,
}

impl<F: Fn(f64) -> Complex64 + Sync> NuComposed<F> {
    pub fn new(family: NuFamily, cf: F) -> Self {
        NuComposed { family, cf, policy: StepPolicy::default() }
    }

    pub fn with_policy(family: NuFamily, cf: F, policy: StepPolicy) -> Self {
        NuComposed { family, cf, policy }
    }

    fn local_log(&self, t: f64) -> Result<Complex64> {
        let v = (self.cf)(t);
        if v.norm() == 0.0 {
            return Err(Error::Branch { op: "nu_transform::compose", msg: format!("base CF vanishes at t={t}") });
        }
        Ok(v.ln())
    }
}

impl<F: Fn(f64) -> Complex64 + Sync> CharFn for NuComposed<F> {
    fn eval(&self, t: f64) -> Result<Complex64> {
        let s = t.abs();
        let l0 = self.local_log(0.0)?;
        let l = continue_to(&|u| self.local_log(u), 0.0, l0, s, &self.policy, &mut |_, _, _| {})?;
        nu_transform_log(self.family, if t < 0.0 { l.conj() } else { l })
    }

    fn eval_grid(&self, dt: f64, count: usize) -> Result<Vec<Complex64>> {
        log_on_uniform_grid(|u| self.local_log(u), dt, count, &self.policy)?
            .into_iter()
            .map(|l| nu_transform_log(self.family, l))
            .collect()
    }
}

/// GH characteristic function computed directly in the value domain:
/// `e^{i t mu} (gamma delta)^lambda K(z) / (z^lambda K(gamma delta))` with
/// `z = delta sqrt(alpha^2 + (t - i beta)^2)`.
fn gh_value_ratio(gh: &GhParams, t: f64) -> Result<Complex64> {
    let z0 = gh.gamma() * gh.delta();
    let z = gh.delta() * principal_sqrt_right(gh.alpha() * gh.alpha() + Complex64::new(t, -gh.beta()).powi(2));
    let lam = gh.lambda();
    let k = bessel_k(lam, z)?;
    let k0 = bessel_k(lam, Complex64::from(z0))?;
    let ratio = Complex64::new(0.0, t * gh.mu()).exp() * z0.powf(lam) * k / (z.powf(lam) * k0);
    if ratio.norm() == 0.0 || !ratio.re.is_finite() {
        return Err(Error::range("nu_transform::closed_form", format!("GH ratio not representable at t={t}")));
    }
    Ok(ratio)
}

/// Principal log of the value-domain ratio, moved to the branch of the
/// tracked logarithm.
fn closed_form_log(gh: &GhParams, t: f64) -> Result<Complex64> {
    let principal = gh_value_ratio(gh, t)?.ln();
    let tracked = GhCf::new(*gh)?.log_cf(t)?;
    let k = ((tracked.im - principal.im) / std::f64::consts::TAU).round();
    Ok(principal + Complex64::new(0.0, k * std::f64::consts::TAU))
}

/// Geometric-GH characteristic function `1/(1 - log f(t))`.
pub fn geo_gh_closed_form(gh: &GhParams, t: f64) -> Result<Complex64> {
    Ok(1.0 / (1.0 - closed_form_log(gh, t)?))
}

/// Chebyshev-GH characteristic function `sec(sqrt(2) log^{1/2} f(t))`.
/// Cosine is even, so the choice of square root does not matter.
pub fn cheb_gh_closed_form(gh: &GhParams, t: f64) -> Result<Complex64> {
    let mut s = 2f64.sqrt() * closed_form_log(gh, t)?.sqrt();
    if s.im < 0.0 {
        s = -s;
    }
    // sec(s) = 2 e^{is} / (1 + e^{2is}), |e^{is}| <= 1
    let e = (Complex64::i() * s).exp();
    Ok(2.0 * e / (1.0 + e * e))
}

/// ν-strictly Gaussian characteristic function `phi(a t^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuGaussianChar {
    family: NuFamily,
    a: f64,
}

impl NuGaussianChar {
    pub fn new(family: NuFamily, a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::domain("nu_transform::nu_gaussian", format!("a = {a} must be > 0")));
        }
        Ok(NuGaussianChar { family, a })
    }

    pub fn family(&self) -> NuFamily {
        self.family
    }

    pub fn a(&self) -> f64 {
        self.a
    }
}

pub fn nu_gaussian_cf(spec: &NuGaussianChar, t: f64) -> Complex64 {
    phi_eval(spec.family, Complex64::from(spec.a * t * t)).expect("non-negative argument")
}

impl CharFn for NuGaussianChar {
    fn eval(&self, t: f64) -> Result<Complex64> {
        Ok(nu_gaussian_cf(self, t))
    }
}

/// Mean of a ν-GH law from the derivative of `g` at 0.
pub fn mean_of_nu_gh(spec: &NuGhChar) -> Result<f64> {
    Ok(moments_from_cf(spec, 1)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixtures() -> Vec<GhParams> {
        vec![
            GhParams::nig(1.0, 0.0, 1.0, 0.0).unwrap(),
            GhParams::new(1.0, 2.0, 0.5, 1.0, 0.0).unwrap(),
            GhParams::new(-2.5, 1.5, -0.7, 0.6, 0.4).unwrap(),
            GhParams::new(3.0, 1.0, 0.3, 2.0, -1.2).unwrap(),
            GhParams::nig(2.5, 1.2, 0.8, 2.0).unwrap(),
        ]
    }

    #[test]
    fn zero_and_basic_values() {
        let nig = GhParams::nig(1.0, 0.0, 1.0, 0.0).unwrap();
        for fam in NuFamily::ALL {
            let g = NuGhChar::new(fam, nig).unwrap();
            assert!((g.eval(0.0).unwrap() - 1.0).norm() < 1e-15);
        }
        let geo = NuGhChar::new(NuFamily::Geometric, nig).unwrap();
        assert!((geo.eval(1.0).unwrap().re - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((geo_gh_closed_form(&nig, 1.0).unwrap().re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        let cheb = NuGhChar::new(NuFamily::Chebyshev, nig).unwrap();
        let expect = 1.0 / (2.0 * (2f64.sqrt() - 1.0)).sqrt().cosh();
        assert!((cheb.eval(1.0).unwrap().re - expect).abs() < 1e-14);
        assert!((cheb_gh_closed_form(&nig, 1.0).unwrap().re - 0.692_708).abs() < 1e-6);
        assert!((geo_gh_closed_form(&nig, 0.0).unwrap() - 1.0).norm() < 1e-15);
        assert!((cheb_gh_closed_form(&nig, 0.0).unwrap() - 1.0).norm() < 1e-15);
    }

    #[test]
    fn closed_forms_match_composition() {
        for p in fixtures() {
            let geo = NuGhChar::new(NuFamily::Geometric, p).unwrap().extended(20.0).unwrap();
            let cheb = NuGhChar::new(NuFamily::Chebyshev, p).unwrap().extended(20.0).unwrap();
            for i in -80..=80 {
                let t = i as f64 * 0.25;
                let a = geo_gh_closed_form(&p, t).unwrap();
                let b = geo.eval(t).unwrap();
                assert!((a - b).norm() <= 1e-12, "geo {p:?} t={t}: {a} vs {b}");
                let a = cheb_gh_closed_form(&p, t).unwrap();
                let b = cheb.eval(t).unwrap();
                assert!((a - b).norm() <= 1e-12, "cheb {p:?} t={t}: {a} vs {b}");
            }
        }
        let p = GhParams::new(1.0, 2.0, 0.5, 1.0, 0.0).unwrap();
        let g = NuGhChar::new(NuFamily::Geometric, p).unwrap();
        assert!((geo_gh_closed_form(&p, 0.7).unwrap() - g.eval(0.7).unwrap()).norm() <= 1e-12);
    }

    #[test]
    fn cf_axioms_for_transform() {
        for p in fixtures() {
            for fam in NuFamily::ALL {
                let g = NuGhChar::new(fam, p).unwrap();
                for i in 0..=120 {
                    let t = i as f64 * 0.25;
                    let a = g.eval(t).unwrap();
                    let b = g.eval(-t).unwrap();
                    assert!(a.norm() <= 1.0 + 1e-12);
                    assert!((b - a.conj()).norm() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn symmetric_chebyshev_is_real_in_unit_interval() {
        let p = GhParams::new(2.0, 1.3, 0.0, 0.9, 0.0).unwrap();
        for i in 0..40 {
            let v = cheb_gh_closed_form(&p, i as f64 * 0.5).unwrap();
            assert!(v.im.abs() < 1e-14 && v.re > 0.0 && v.re <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn gaussian_special_case() {
        let geo = NuComposed::new(NuFamily::Geometric, |t: f64| Complex64::new((-t * t / 2.0).exp(), 0.0));
        let cheb = NuComposed::new(NuFamily::Chebyshev, |t: f64| Complex64::new((-t * t / 2.0).exp(), 0.0));
        let lap = NuGaussianChar::new(NuFamily::Geometric, 0.5).unwrap();
        let hs = NuGaussianChar::new(NuFamily::Chebyshev, 0.5).unwrap();
        for i in -80..=80 {
            let t = i as f64 * 0.25;
            let a = geo.eval(t).unwrap();
            assert!((a - 1.0 / (1.0 + t * t / 2.0)).norm() <= 1e-14);
            assert!((a - nu_gaussian_cf(&lap, t)).norm() <= 1e-14);
            let b = cheb.eval(t).unwrap();
            assert!((b - 1.0 / t.cosh()).norm() <= 1e-12);
            assert!((b - nu_gaussian_cf(&hs, t)).norm() <= 1e-12);
        }
        let grid = geo.eval_grid(0.5, 10).unwrap();
        assert!((grid[3] - 1.0 / (1.0 + 1.125)).norm() < 1e-14);
    }

    #[test]
    fn nu_gaussian_examples() {
        let s = NuGaussianChar::new(NuFamily::Geometric, 1.0).unwrap();
        assert!((nu_gaussian_cf(&s, 1.0).re - 0.5).abs() < 1e-15);
        let s = NuGaussianChar::new(NuFamily::Chebyshev, 0.5).unwrap();
        assert!((nu_gaussian_cf(&s, 1.0).re - 0.648_05).abs() < 1e-5);
        assert_eq!(nu_gaussian_cf(&s, 0.0), Complex64::new(1.0, 0.0));
        assert!(NuGaussianChar::new(NuFamily::Chebyshev, 0.0).is_err());
    }

    #[test]
    fn mean_preservation() {
        for p in fixtures() {
            let base = moments_from_cf(&GhCf::new(p).unwrap(), 1).unwrap()[0];
            for fam in NuFamily::ALL {
                let m = mean_of_nu_gh(&NuGhChar::new(fam, p).unwrap()).unwrap();
                assert!((m - base).abs() <= 1e-4, "{fam} {p:?}: {m} vs {base}");
            }
        }
        let sym = GhParams::new(1.5, 1.0, 0.0, 1.0, 0.0).unwrap();
        for fam in NuFamily::ALL {
            assert!(mean_of_nu_gh(&NuGhChar::new(fam, sym).unwrap()).unwrap().abs() < 1e-8);
        }
        let drift = GhParams::nig(1.0, 0.0, 1.0, 3.0).unwrap();
        let m = mean_of_nu_gh(&NuGhChar::new(NuFamily::Geometric, drift).unwrap()).unwrap();
        assert!((m - 3.0).abs() < 1e-4);
        let skew = GhParams::nig(1.0, 0.3, 1.0, 0.0).unwrap();
        let base = moments_from_cf(&GhCf::new(skew).unwrap(), 1).unwrap()[0];
        let m = mean_of_nu_gh(&NuGhChar::new(NuFamily::Chebyshev, skew).unwrap()).unwrap();
        assert!((m - base).abs() < 1e-4);
    }

    #[test]
    fn extension_keeps_values_and_grid_matches_pointwise() {
        let p = GhParams::new(-2.5, 1.5, -0.7, 0.6, 0.4).unwrap();
        let g = NuGhChar::new(NuFamily::Chebyshev, p).unwrap();
        let e = g.extended(100.0).unwrap();
        assert!(e.track().t_max() >= 100.0);
        assert_eq!(&e.track().log_values()[..g.track().grid().len()], g.track().log_values());
        assert!((g.eval(90.0).unwrap() - e.eval(90.0).unwrap()).norm() < 1e-14);
        let grid = e.eval_grid(0.37, 200).unwrap();
        for (k, v) in grid.iter().enumerate().step_by(17) {
            assert!((v - e.eval(k as f64 * 0.37).unwrap()).norm() < 1e-13);
        }
    }
}
