use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest supported polynomial degree.
pub const MAX_DEGREE: u64 = 1_000_000;

/// Chebyshev polynomial of the first kind `T_n(x)` by the three-term
/// recurrence `T_{k+1} = 2x T_k - T_{k-1}`.
pub fn chebyshev_t(n: u64, x: Complex64) -> Result<Complex64> {
    if n > MAX_DEGREE {
        return Err(Error::domain("special_fn::chebyshev_t", format!("degree {n} exceeds {MAX_DEGREE}")));
    }
    let mut prev = Complex64::new(1.0, 0.0);
    if n == 0 {
        return Ok(prev);
    }
    let mut cur = x;
    for _ in 1..n {
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
        if !cur.re.is_finite() || !cur.im.is_finite() {
            return Err(Error::range("special_fn::chebyshev_t", format!("T_{n}({x}) overflows")));
        }
    }
    Ok(cur)
}

/// Reversed polynomial `z^n T_n(1/z)`, finite at `z = 0`.
///
/// Satisfies `R_{k+1} = 2 R_k - z^2 R_{k-1}` with `R_0 = R_1 = 1`.
pub fn chebyshev_t_reversed(n: u64, z: Complex64) -> Result<Complex64> {
    if n > MAX_DEGREE {
        return Err(Error::domain("special_fn::chebyshev_t_reversed", format!("degree {n} exceeds {MAX_DEGREE}")));
    }
    let z2 = z * z;
    let mut prev = Complex64::new(1.0, 0.0);
    let mut cur = Complex64::new(1.0, 0.0);
    if n == 0 {
        return Ok(prev);
    }
    for _ in 1..n {
        let next = 2.0 * cur - z2 * prev;
        prev = cur;
        cur = next;
        if !cur.re.is_finite() || !cur.im.is_finite() {
            return Err(Error::range("special_fn::chebyshev_t_reversed", format!("R_{n}({z}) overflows")));
        }
    }
    Ok(cur)
}
