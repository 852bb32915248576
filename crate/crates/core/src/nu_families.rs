//! The two random-summation families: geometric and Chebyshev.
//!
//! Each family provides the probability generating function `P_p` of the
//! number of summands `nu_p` (with `E nu_p = 1/p`), the standard solution
//! `phi` of the Poincare equation `phi(t) = P_p(phi(p t))`, and the mixing
//! law whose Laplace transform is `phi`.
//!
//! * Geometric: `p in (0, 1)`, `P(nu = k) = p (1-p)^(k-1)`,
//!   `phi(s) = 1/(1+s)`, mixing law standard exponential.
//! * Chebyshev: `p = 1/n^2`, `P_p(z) = 1/T_n(1/z)`, `phi(s) = 1/cosh(sqrt(2s))`,
//!   mixing law the exit time of standard Brownian motion from `(-1, 1)`.
//!   `nu_p` is the exit time of a simple symmetric random walk from
//!   `(-n, n)`, whose generating function is exactly `1/T_n(1/z)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special_fn::{chebyshev_t_reversed, principal_sqrt_right};

/// Largest Chebyshev index `n` (so the smallest `p` is `1/64^2`).
pub const CHEBYSHEV_MAX_N: u64 = 64;

/// Tail mass allowed beyond a probability table's cutoff.
pub const TAIL_MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NuFamily {
    Geometric,
    Chebyshev,
}

impl fmt::Display for NuFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NuFamily::Geometric => "geometric",
            NuFamily::Chebyshev => "chebyshev",
        })
    }
}

impl FromStr for NuFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "geo" | "geometric" => Ok(NuFamily::Geometric),
            "cheb" | "chebyshev" => Ok(NuFamily::Chebyshev),
            other => Err(Error::domain("nu_families::parse", format!("unknown family '{other}'"))),
        }
    }
}

impl NuFamily {
    pub const ALL: [NuFamily; 2] = [NuFamily::Geometric, NuFamily::Chebyshev];

    /// Parameter values used by the verification suites.
    pub fn reference_p_values(self) -> Vec<f64> {
        match self {
            NuFamily::Geometric => vec![0.5, 0.1, 0.01],
            NuFamily::Chebyshev => vec![1.0, 0.25, 1.0 / 9.0, 1.0 / 25.0],
        }
    }

    /// Chebyshev index `n = 1/sqrt(p)` for `p` in the admissible set.
    pub fn chebyshev_index(p: f64) -> Result<u64> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::domain("nu_families", format!("p = {p} is not of the form 1/n^2")));
        }
        let n = (1.0 / p.sqrt()).round();
        if n < 1.0 || n > CHEBYSHEV_MAX_N as f64 || ((1.0 / (n * n)) - p).abs() > 1e-12 * p {
            return Err(Error::domain("nu_families", format!("p = {p} is not 1/n^2 with 1 <= n <= {CHEBYSHEV_MAX_N}")));
        }
        Ok(n as u64)
    }

    /// Validates `p` against the family's parameter set.
    pub fn check_p(self, p: f64) -> Result<()> {
        match self {
            NuFamily::Geometric => {
                if p > 0.0 && p < 1.0 {
                    Ok(())
                } else {
                    Err(Error::domain("nu_families", format!("geometric p = {p} outside (0, 1)")))
                }
            }
            NuFamily::Chebyshev => Self::chebyshev_index(p).map(|_| ()),
        }
    }
}

/// Probability generating function `P_p(z)` for `|z| <= 1`.
pub fn pgf_eval(family: NuFamily, p: f64, z: Complex64) -> Result<Complex64> {
    family.check_p(p)?;
    if !(z.norm() <= 1.0 + 1e-15) {
        return Err(Error::domain("nu_families::pgf_eval", format!("|z| = {} > 1", z.norm())));
    }
    match family {
        NuFamily::Geometric => Ok(p * z / (1.0 - (1.0 - p) * z)),
        NuFamily::Chebyshev => {
            // 1/T_n(1/z) = z^n / (z^n T_n(1/z))
            let n = NuFamily::chebyshev_index(p)?;
            let rev = chebyshev_t_reversed(n, z)?;
            Ok(z.powu(n as u32) / rev)
        }
    }
}

/// Standard Poincare solution `phi(w)`, extended to `Re w >= 0`.
pub fn phi_eval(family: NuFamily, w: Complex64) -> Result<Complex64> {
    if w.re < -1e-12 || w.re.is_nan() || w.im.is_nan() {
        return Err(Error::domain("nu_families::phi_eval", format!("argument {w} has negative real part")));
    }
    Ok(match family {
        NuFamily::Geometric => 1.0 / (1.0 + w),
        NuFamily::Chebyshev => sech(principal_sqrt_right(2.0 * w)),
    })
}

/// `1/cosh(s)` for `Re s >= 0` without overflow.
pub(crate) fn sech(s: Complex64) -> Complex64 {
    let e = (-s).exp();
    2.0 * e / (1.0 + e * e)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoincareReport {
    pub family: NuFamily,
    pub p_values: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub max_residual: f64,
}

/// Maximum of `|phi(t) - P_p(phi(p t))|` over the given `p` values and grid.
pub fn verify_poincare(family: NuFamily, p_values: &[f64], t_grid: &[f64]) -> Result<PoincareReport> {
    let mut max_residual = 0.0_f64;
    for &p in p_values {
        family.check_p(p)?;
        for &t in t_grid {
            let lhs = phi_eval(family, t.into())?;
            let rhs = pgf_eval(family, p, phi_eval(family, (p * t).into())?)?;
            max_residual = max_residual.max((lhs - rhs).norm());
        }
    }
    Ok(PoincareReport { family, p_values: p_values.to_vec(), t_grid: t_grid.to_vec(), max_residual })
}

/// A cutoff for [`nu_probabilities`] that leaves less than
/// [`TAIL_MASS_TOLERANCE`] of mass beyond it.
pub fn default_cutoff(family: NuFamily, p: f64) -> Result<usize> {
    family.check_p(p)?;
    Ok(match family {
        NuFamily::Geometric => (TAIL_MASS_TOLERANCE.ln() / (1.0 - p).ln()).ceil() as usize + 1,
        NuFamily::Chebyshev => {
            let n = NuFamily::chebyshev_index(p)? as usize;
            // survival decays like (4/pi) cos(pi/2n)^k
            let rate = -(PI / (2.0 * n as f64)).cos().ln();
            if rate == 0.0 {
                n
            } else {
                ((((4.0 / PI) / TAIL_MASS_TOLERANCE).ln() / rate).ceil() as usize).max(n) + 2
            }
        }
    })
}

/// `(k, P(nu_p = k))` for `k = 1..=cutoff`, dropping zero-probability
/// values of `k`. Fails with a range error if more than
/// [`TAIL_MASS_TOLERANCE`] of mass lies beyond the cutoff.
pub fn nu_probabilities(family: NuFamily, p: f64, cutoff: usize) -> Result<Vec<(u64, f64)>> {
    family.check_p(p)?;
    let (probs, tail) = match family {
        NuFamily::Geometric => {
            let q = 1.0 - p;
            let probs: Vec<(u64, f64)> = (1..=cutoff as u64).map(|k| (k, p * q.powi((k - 1) as i32))).collect();
            (probs, q.powi(cutoff as i32))
        }
        NuFamily::Chebyshev => chebyshev_walk_probabilities(NuFamily::chebyshev_index(p)? as usize, cutoff),
    };
    if tail >= TAIL_MASS_TOLERANCE {
        return Err(Error::range(
            "nu_families::nu_probabilities",
            format!("cutoff {cutoff} leaves tail mass {tail:.3e}"),
        ));
    }
    Ok(probs)
}

/// Absorption probabilities of `|S_k|` for a simple symmetric random walk
/// started at 0 and stopped at `n`. Returns the table and the mass still
/// unabsorbed after `cutoff` steps.
fn chebyshev_walk_probabilities(n: usize, cutoff: usize) -> (Vec<(u64, f64)>, f64) {
    let mut mass = vec![0.0_f64; n];
    mass[0] = 1.0;
    let mut next = vec![0.0_f64; n];
    let mut out = Vec::new();
    let mut remaining = 1.0;
    for step in 1..=cutoff {
        next.iter_mut().for_each(|m| *m = 0.0);
        let mut absorbed = 0.0;
        for (j, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            if j == 0 {
                // both directions lead to |S| = 1
                if n == 1 {
                    absorbed += m;
                } else {
                    next[1] += m;
                }
                continue;
            }
            next[j - 1] += 0.5 * m;
            if j + 1 == n {
                absorbed += 0.5 * m;
            } else {
                next[j + 1] += 0.5 * m;
            }
        }
        std::mem::swap(&mut mass, &mut next);
        if absorbed > 0.0 {
            out.push((step as u64, absorbed));
        }
        remaining = mass.iter().sum();
        if remaining == 0.0 {
            break;
        }
    }
    (out, remaining)
}

/// Draws `nu_p`.
pub fn sample_nu<R: Rng + ?Sized>(family: NuFamily, p: f64, rng: &mut R) -> Result<u64> {
    family.check_p(p)?;
    match family {
        NuFamily::Geometric => {
            let g = Geometric::new(p).map_err(|e| Error::domain("nu_families::sample_nu", e.to_string()))?;
            Ok(1 + g.sample(rng))
        }
        NuFamily::Chebyshev => {
            let n = NuFamily::chebyshev_index(p)? as i64;
            if n == 1 {
                return Ok(1);
            }
            Ok(sample_walk_exit(n, rng))
        }
    }
}

/// Exit time of a simple symmetric random walk from `(-n, n)`.
fn sample_walk_exit<R: Rng + ?Sized>(n: i64, rng: &mut R) -> u64 {
    let mut pos = 0i64;
    let mut steps = 0u64;
    loop {
        let mut bits: u64 = rng.random();
        for _ in 0..64 {
            pos += if bits & 1 == 1 { 1 } else { -1 };
            bits >>= 1;
            steps += 1;
            if pos.abs() == n {
                return steps;
            }
        }
    }
}

/// Draws from the mixing law whose Laplace transform is `phi`.
pub fn sample_mixing<R: Rng + ?Sized>(family: NuFamily, rng: &mut R) -> Result<f64> {
    match family {
        NuFamily::Geometric => Ok(Exp1.sample(rng)),
        NuFamily::Chebyshev => sample_exit_time(rng),
    }
}

// Switch point between the two series representations of the exit-time
// density; both are alternating with decreasing terms on their side.
const SERIES_SWITCH: f64 = 0.64;
const MAX_SERIES_TERMS: usize = 1000;

/// n-th term of the alternating series for the density of the exit time of
/// Brownian motion from (-1, 1).
fn exit_time_term(n: usize, x: f64) -> f64 {
    let h = n as f64 + 0.5;
    if x > SERIES_SWITCH {
        PI * h * (-0.5 * h * h * PI * PI * x).exp()
    } else {
        PI * h * (2.0 / (PI * x)).powf(1.5) * (-2.0 * h * h / x).exp()
    }
}

/// Alternating-series rejection sampler for the exit time `T` of standard
/// Brownian motion from `(-1, 1)`, `E exp(-s T) = 1/cosh(sqrt(2 s))`.
///
/// The proposal is the first series term: a truncated exponential right of
/// the switch point and the law of `1/Z^2`, `|Z| > 1/sqrt(switch)`, left of it.
fn sample_exit_time<R: Rng + ?Sized>(rng: &mut R) -> Result<f64> {
    let k = PI * PI / 8.0;
    let t = SERIES_SWITCH;
    let right_mass = (4.0 / PI) * (-k * t).exp();
    let left_mass = 4.0 * statrs::function::erf::erfc(1.0 / (2.0 * t).sqrt()) / 2.0;
    let p_right = right_mass / (right_mass + left_mass);
    let threshold = 1.0 / t.sqrt();
    loop {
        let x = if rng.random::<f64>() < p_right {
            let e: f64 = Exp1.sample(rng);
            t + e / k
        } else {
            loop {
                let z: f64 = StandardNormal.sample(rng);
                if z.abs() > threshold {
                    break 1.0 / (z * z);
                }
            }
        };
        let mut s = exit_time_term(0, x);
        let y = rng.random::<f64>() * s;
        let mut accepted = None;
        for n in 1..MAX_SERIES_TERMS {
            if n % 2 == 1 {
                s -= exit_time_term(n, x);
                if y <= s {
                    accepted = Some(true);
                    break;
                }
            } else {
                s += exit_time_term(n, x);
                if y > s {
                    accepted = Some(false);
                    break;
                }
            }
        }
        match accepted {
            Some(true) => return Ok(x),
            Some(false) => continue,
            None => {
                return Err(Error::convergence(
                    "nu_families::sample_mixing",
                    format!("series did not certify acceptance at x = {x}"),
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn pgf_examples() {
        assert!((pgf_eval(NuFamily::Geometric, 0.5, c(0.5)).unwrap() - c(1.0 / 3.0)).norm() < 1e-15);
        for fam in NuFamily::ALL {
            for p in fam.reference_p_values() {
                assert!((pgf_eval(fam, p, c(1.0)).unwrap() - c(1.0)).norm() < 1e-14);
            }
        }
        let v = pgf_eval(NuFamily::Chebyshev, 0.25, c(0.5)).unwrap();
        assert!((v - c(1.0 / 7.0)).norm() < 1e-15);
        assert_eq!(pgf_eval(NuFamily::Chebyshev, 0.25, c(0.0)).unwrap(), c(0.0));
    }

    #[test]
    fn pgf_domain_errors() {
        assert!(pgf_eval(NuFamily::Geometric, 1.0, c(0.5)).is_err());
        assert!(pgf_eval(NuFamily::Geometric, 0.5, c(1.5)).is_err());
        assert!(pgf_eval(NuFamily::Chebyshev, 0.3, c(0.5)).is_err());
        assert!(pgf_eval(NuFamily::Chebyshev, 1.0 / (65.0 * 65.0), c(0.5)).is_err());
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi_eval(NuFamily::Geometric, c(1.0)).unwrap(), c(0.5));
        assert_eq!(phi_eval(NuFamily::Chebyshev, c(0.0)).unwrap(), c(1.0));
        let v = phi_eval(NuFamily::Chebyshev, c(PI * PI / 8.0)).unwrap();
        assert!((v.re - 1.0 / (PI / 2.0).cosh()).abs() < 1e-15);
        assert!((v.re - 0.39854).abs() < 1e-5);
        assert!(phi_eval(NuFamily::Geometric, c(-0.1)).is_err());
        // huge arguments underflow to zero instead of overflowing
        assert!(phi_eval(NuFamily::Chebyshev, c(1e6)).unwrap().norm() < 1e-300);
    }

    #[test]
    fn poincare_examples() {
        let r = verify_poincare(NuFamily::Geometric, &[0.5], &[2.0]).unwrap();
        assert!(r.max_residual <= 1e-14);
        let r = verify_poincare(NuFamily::Chebyshev, &[0.25], &[3.0]).unwrap();
        assert!(r.max_residual <= 1e-12);
        let r = verify_poincare(NuFamily::Chebyshev, &[1.0 / 9.0], &[1.0]).unwrap();
        assert!(r.max_residual <= 1e-12);
    }

    #[test]
    fn poincare_on_wide_grid() {
        let grid: Vec<f64> = (0..200).map(|i| 50.0 * i as f64 / 199.0).collect();
        for fam in NuFamily::ALL {
            let r = verify_poincare(fam, &fam.reference_p_values(), &grid).unwrap();
            assert!(r.max_residual <= 1e-12, "{fam}: {}", r.max_residual);
        }
    }

    #[test]
    fn initial_conditions() {
        let h = 1e-4;
        for fam in NuFamily::ALL {
            let phi = |s: f64| phi_eval(fam, c(s)).unwrap().re;
            assert_eq!(phi(0.0), 1.0);
            let d = (-3.0 * phi(0.0) + 4.0 * phi(h) - phi(2.0 * h)) / (2.0 * h);
            assert!((d + 1.0).abs() < 1e-6, "{fam}: {d}");
        }
    }

    #[test]
    fn mean_identity_from_pgf_derivative() {
        let h = 1e-5;
        for fam in NuFamily::ALL {
            for p in fam.reference_p_values() {
                let f = |z: f64| pgf_eval(fam, p, c(z)).unwrap().re;
                let d = (3.0 * f(1.0) - 4.0 * f(1.0 - h) + f(1.0 - 2.0 * h)) / (2.0 * h);
                assert!((d - 1.0 / p).abs() <= 1e-6 * (1.0 / p).max(1.0) * 10.0, "{fam} p={p}: {d}");
            }
        }
    }

    #[test]
    fn probability_examples() {
        let g = nu_probabilities(NuFamily::Geometric, 0.5, 60).unwrap();
        assert_eq!(g[0], (1, 0.5));
        assert_eq!(g[1], (2, 0.25));
        let ch = nu_probabilities(NuFamily::Chebyshev, 0.25, 100).unwrap();
        for (i, &(k, pr)) in ch.iter().take(20).enumerate() {
            assert_eq!(k, 2 * (i as u64 + 1));
            assert!((pr - 0.5f64.powi(i as i32 + 1)).abs() < 1e-16);
        }
        assert_eq!(nu_probabilities(NuFamily::Chebyshev, 1.0, 5).unwrap(), vec![(1, 1.0)]);
        assert!(matches!(nu_probabilities(NuFamily::Geometric, 0.01, 100), Err(Error::Range { .. })));
    }

    #[test]
    fn probabilities_reconstruct_pgf() {
        for fam in NuFamily::ALL {
            for p in fam
                .reference_p_values()
                .into_iter()
                .chain([1.0 / (64.0 * 64.0)].into_iter().filter(|_| fam == NuFamily::Chebyshev))
            {
                let cutoff = default_cutoff(fam, p).unwrap();
                let probs = nu_probabilities(fam, p, cutoff).unwrap();
                let total: f64 = probs.iter().map(|x| x.1).sum();
                assert!((total - 1.0).abs() < 1e-11, "{fam} p={p}: total {total}");
                assert!(probs.iter().all(|x| x.1 >= 0.0));
                for z in [0.3f64, 0.6, 0.9] {
                    let series: f64 = probs.iter().map(|&(k, pr)| pr * z.powi(k as i32)).sum();
                    let direct = pgf_eval(fam, p, c(z)).unwrap().re;
                    assert!((series - direct).abs() < 1e-10, "{fam} p={p} z={z}");
                }
            }
        }
    }

    fn mean_within_3_sigma(fam: NuFamily, p: f64, var: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_nu(fam, p, &mut rng).unwrap() as f64).sum::<f64>() / n as f64;
        let sigma = (var / n as f64).sqrt();
        assert!((mean - 1.0 / p).abs() < 3.0 * sigma, "{fam} p={p}: mean {mean}");
    }

    #[test]
    fn nu_sample_means() {
        mean_within_3_sigma(NuFamily::Geometric, 0.5, 0.5 / 0.25);
        // Var of the walk exit time from (-n, n) is 2 n^2 (n^2 - 1) / 3
        mean_within_3_sigma(NuFamily::Chebyshev, 0.25, 2.0 * 4.0 * 3.0 / 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..1000).all(|_| sample_nu(NuFamily::Chebyshev, 1.0, &mut rng).unwrap() == 1));
    }

    fn laplace_transform_check(fam: NuFamily, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_mixing(fam, &mut rng).unwrap()).collect();
        assert!(draws.iter().all(|&x| x > 0.0));
        for lambda in [0.5, 1.0, 2.0] {
            let vals: Vec<f64> = draws.iter().map(|&x| (-lambda * x).exp()).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let se = (var / n as f64).sqrt();
            let target = phi_eval(fam, c(lambda)).unwrap().re;
            assert!((mean - target).abs() < 4.0 * se, "{fam} lambda={lambda}: {mean} vs {target}");
        }
    }

    #[test]
    fn mixing_laws_match_laplace_transforms() {
        laplace_transform_check(NuFamily::Geometric, 5);
        laplace_transform_check(NuFamily::Chebyshev, 6);
        let sech_sqrt2 = 2.0 / (2f64.sqrt().exp() + (-(2f64.sqrt())).exp());
        assert!((phi_eval(NuFamily::Chebyshev, c(1.0)).unwrap().re - sech_sqrt2).abs() < 1e-15);
        assert!((sech_sqrt2 - 0.459098).abs() < 1e-6);
    }

    #[test]
    fn family_parsing() {
        assert_eq!("geo".parse::<NuFamily>().unwrap(), NuFamily::Geometric);
        assert_eq!("Chebyshev".parse::<NuFamily>().unwrap(), NuFamily::Chebyshev);
        assert!("poisson".parse::<NuFamily>().is_err());
    }
}
