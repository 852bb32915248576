//! Adaptive Gauss-Kronrod (7/15) quadrature for complex-valued integrands.

use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Debug, Clone, Copy)]
pub(crate) struct QuadResult {
    pub value: Complex64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
    abs: f64,
}

fn gk15<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut fv = [Complex64::new(0.0, 0.0); 15];
    fv[7] = f(center);
    for j in 0..7 {
        let dx = half * XGK[j];
        fv[j] = f(center - dx);
        fv[14 - j] = f(center + dx);
    }
    let weight = |i: usize| WGK[if i <= 7 { i } else { 14 - i }];
    let mut kronrod = Complex64::new(0.0, 0.0);
    let mut abs = 0.0;
    for (i, v) in fv.iter().enumerate() {
        kronrod += v * weight(i);
        abs += v.norm() * weight(i);
    }
    let mut gauss = fv[7] * WG[3];
    for j in [1usize, 3, 5] {
        gauss += (fv[j] + fv[14 - j]) * WG[j / 2];
    }
    let mean = kronrod * 0.5;
    let asc: f64 = fv.iter().enumerate().map(|(i, v)| (v - mean).norm() * weight(i)).sum::<f64>() * half.abs();
    let value = kronrod * half;
    let abs = abs * half.abs();
    let mut error = ((kronrod - gauss) * half).norm();
    if asc > 0.0 && error > 0.0 {
        error = asc * (200.0 * error / asc).powf(1.5).min(1.0);
    }
    Segment { a, b, value, error, abs }
}

/// Integrates `f` over the consecutive intervals defined by `breakpoints`
/// (at least two ascending points), refining the worst segment until the
/// summed error estimate is below `max(epsabs, epsrel * |I|)`.
pub(crate) fn integrate<F: FnMut(f64) -> Complex64>(
    mut f: F,
    breakpoints: &[f64],
    epsabs: f64,
    epsrel: f64,
    max_segments: usize,
) -> Result<QuadResult> {
    debug_assert!(breakpoints.len() >= 2);
    let mut segments: Vec<Segment> =
        breakpoints.windows(2).filter(|w| w[1] > w[0]).map(|w| gk15(&mut f, w[0], w[1])).collect();
    loop {
        let value: Complex64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        let abs: f64 = segments.iter().map(|s| s.abs).sum();
        let floor = 50.0 * f64::EPSILON * abs;
        let tol = epsabs.max(epsrel * value.norm()).max(floor);
        if error <= tol {
            return Ok(QuadResult { value, abs_error: error });
        }
        if !value.re.is_finite() || !value.im.is_finite() {
            return Err(Error::convergence("quadrature", "non-finite integrand"));
        }
        if segments.len() >= max_segments {
            return Err(Error::convergence(
                "quadrature",
                format!("error estimate {error:.3e} above tolerance {tol:.3e} after {max_segments} segments"),
            ));
        }
        let (worst, _) =
            segments.iter().enumerate().max_by(|x, y| x.1.error.total_cmp(&y.1.error)).expect("at least one segment");
        if segments[worst].error <= 50.0 * f64::EPSILON * segments[worst].abs {
            // roundoff limited: further bisection cannot help
            return Ok(QuadResult { value, abs_error: error });
        }
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            return Err(Error::convergence("quadrature", "segment width below machine resolution"));
        }
        segments.push(gk15(&mut f, seg.a, mid));
        segments.push(gk15(&mut f, mid, seg.b));
    }
}

/// Real-valued convenience wrapper.
pub(crate) fn integrate_real<F: FnMut(f64) -> f64>(
    mut f: F,
    breakpoints: &[f64],
    epsabs: f64,
    epsrel: f64,
    max_segments: usize,
) -> Result<(f64, f64)> {
    let r = integrate(|x| Complex64::new(f(x), 0.0), breakpoints, epsabs, epsrel, max_segments)?;
    Ok((r.value.re, r.abs_error))
}
