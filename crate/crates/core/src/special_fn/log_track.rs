//! Continuous (distinguished) logarithm of a non-vanishing function on
//! `[0, t_max]`.
//!
//! Callers supply a *local* logarithm: any function whose exponential is the
//! tracked function, typically with the imaginary part reduced to the
//! principal branch. The tracker adds multiples of `2 pi i` so the imaginary
//! part is continuous, bisecting a step whenever the phase increment exceeds
//! the configured cap.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};

const OP: &str = "special_fn::distinguished_log";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPolicy {
    /// Largest step taken between consecutive abscissae.
    pub base_step: f64,
    /// Largest accepted phase increment between consecutive abscissae.
    pub max_phase_step: f64,
    /// Refinement floor; hitting it raises a branch error.
    pub min_step: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy { base_step: 0.25, max_phase_step: FRAC_PI_2, min_step: 1e-9 }
    }
}

impl StepPolicy {
    pub fn with_base_step(base_step: f64) -> Self {
        StepPolicy { base_step, ..Default::default() }
    }
}

/// Sampled distinguished logarithm.
#[derive(Debug, Clone, PartialEq)]
pub struct LogTrack {
    grid: Vec<f64>,
    log_values: Vec<Complex64>,
    /// Number of `2 pi` turns added to the local log at each node.
    windings: Vec<i64>,
    policy: StepPolicy,
}

/// Moves the branch of `local` to the one nearest `reference`.
fn nearest_branch(local: Complex64, reference: Complex64) -> (Complex64, i64) {
    let k = ((reference.im - local.im) / TAU).round();
    (Complex64::new(local.re, local.im + k * TAU), k as i64)
}

/// Continues the distinguished log from `(t0, l0)` to `t1`, pushing any
/// intermediate nodes (and the final one) through `emit`.
pub(crate) fn continue_to<F, E>(
    local_log: &F,
    t0: f64,
    l0: Complex64,
    t1: f64,
    policy: &StepPolicy,
    emit: &mut E,
) -> Result<Complex64>
where
    F: Fn(f64) -> Result<Complex64>,
    E: FnMut(f64, Complex64, i64),
{
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(l0);
    }
    let pieces = (span.abs() / policy.base_step).ceil().max(1.0) as usize;
    let mut t = t0;
    let mut l = l0;
    for i in 1..=pieces {
        let next = if i == pieces { t1 } else { t0 + span * i as f64 / pieces as f64 };
        l = refine(local_log, t, l, next, policy, emit)?;
        t = next;
    }
    Ok(l)
}

fn refine<F, E>(local_log: &F, t0: f64, l0: Complex64, t1: f64, policy: &StepPolicy, emit: &mut E) -> Result<Complex64>
where
    F: Fn(f64) -> Result<Complex64>,
    E: FnMut(f64, Complex64, i64),
{
    let raw = local_log(t1)?;
    if !raw.re.is_finite() || !raw.im.is_finite() {
        return Err(Error::Branch { op: OP, msg: format!("non-finite log at t={t1} (function vanishes?)") });
    }
    let (cand, k) = nearest_branch(raw, l0);
    if (cand.im - l0.im).abs() <= policy.max_phase_step {
        emit(t1, cand, k);
        return Ok(cand);
    }
    if (t1 - t0).abs() < policy.min_step {
        return Err(Error::Branch {
            op: OP,
            msg: format!("phase increment {:.3} at t={t1} with step below {:e}", cand.im - l0.im, policy.min_step),
        });
    }
    let mid = 0.5 * (t0 + t1);
    let lm = refine(local_log, t0, l0, mid, policy, emit)?;
    refine(local_log, mid, lm, t1, policy, emit)
}

impl LogTrack {
    /// Builds a track on `[0, t_max]` from a local logarithm. The value at
    /// `t = 0` is taken as is (branch 0).
    pub fn from_local_log<F>(local_log: F, t_max: f64, policy: StepPolicy) -> Result<Self>
    where
        F: Fn(f64) -> Result<Complex64>,
    {
        if !(t_max >= 0.0) || !t_max.is_finite() {
            return Err(Error::domain(OP, format!("t_max = {t_max} must be finite and >= 0")));
        }
        let l0 = local_log(0.0)?;
        let mut track = LogTrack { grid: vec![0.0], log_values: vec![l0], windings: vec![0], policy };
        track.extend_with(&local_log, t_max)?;
        Ok(track)
    }

    /// Extends the track up to `t_max` (no-op if already covered).
    pub(crate) fn extend_with<F>(&mut self, local_log: &F, t_max: f64) -> Result<()>
    where
        F: Fn(f64) -> Result<Complex64>,
    {
        let t0 = self.t_max();
        if t_max <= t0 {
            return Ok(());
        }
        let l0 = *self.log_values.last().expect("non-empty track");
        let policy = self.policy;
        let (grid, logs, winds) = (&mut self.grid, &mut self.log_values, &mut self.windings);
        continue_to(local_log, t0, l0, t_max, &policy, &mut |t, l, k| {
            grid.push(t);
            logs.push(l);
            winds.push(k);
        })?;
        Ok(())
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn log_values(&self) -> &[Complex64] {
        &self.log_values
    }

    pub fn windings(&self) -> &[i64] {
        &self.windings
    }

    pub fn policy(&self) -> &StepPolicy {
        &self.policy
    }

    pub fn t_max(&self) -> f64 {
        *self.grid.last().expect("non-empty track")
    }

    /// Distinguished log at an arbitrary `t`, continuing from the nearest
    /// node at or below `|t|`. Negative `t` uses conjugate symmetry; points
    /// beyond the track are reached by a transient continuation that does
    /// not modify the track.
    pub fn value_at<F>(&self, local_log: &F, t: f64) -> Result<Complex64>
    where
        F: Fn(f64) -> Result<Complex64>,
    {
        let s = t.abs();
        let idx = self.grid.partition_point(|&g| g <= s).saturating_sub(1);
        let (t0, l0) = (self.grid[idx], self.log_values[idx]);
        let v = if t0 == s { l0 } else { continue_to(local_log, t0, l0, s, &self.policy, &mut |_, _, _| {})? };
        Ok(if t < 0.0 { v.conj() } else { v })
    }
}

/// Distinguished logarithm of a characteristic function given by its values.
/// The local log is the principal logarithm of `cf(t)`.
pub fn distinguished_log<F>(cf: F, t_max: f64, policy: StepPolicy) -> Result<LogTrack>
where
    F: Fn(f64) -> Complex64,
{
    let local = |t: f64| {
        let v = cf(t);
        if v.norm() == 0.0 {
            return Err(Error::Branch { op: OP, msg: format!("function vanishes at t={t}") });
        }
        Ok(v.ln())
    };
    LogTrack::from_local_log(local, t_max, policy)
}

/// Samples the distinguished log at `t_k = k * dt`, `k = 0..count`, with
/// refinement between samples as needed.
pub fn log_on_uniform_grid<F>(local_log: F, dt: f64, count: usize, policy: &StepPolicy) -> Result<Vec<Complex64>>
where
    F: Fn(f64) -> Result<Complex64>,
{
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    let mut l = local_log(0.0)?;
    out.push(l);
    let mut t = 0.0;
    for k in 1..count {
        let next = k as f64 * dt;
        l = continue_to(&local_log, t, l, next, policy, &mut |_, _, _| {})?;
        out.push(l);
        t = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_real_cf() {
        let track =
            distinguished_log(|t| Complex64::new((-t * t / 2.0).exp(), 0.0), 2.0, StepPolicy::default()).unwrap();
        let l = *track.log_values().last().unwrap();
        assert!((l - Complex64::new(-2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn unwinds_pure_rotation() {
        let cf = |t: f64| Complex64::new(0.0, t).exp();
        let track = distinguished_log(cf, 7.0, StepPolicy::default()).unwrap();
        let l = *track.log_values().last().unwrap();
        assert!((l - Complex64::new(0.0, 7.0)).norm() < 1e-12);
        // the principal branch would give 7 - 2 pi
        assert!((cf(7.0).ln().im - (7.0 - TAU)).abs() < 1e-12);
        assert!(track.windings().last().copied().unwrap() == 1);
    }

    #[test]
    fn exp_reproduces_function_and_phase_is_continuous() {
        let cf = |t: f64| Complex64::new(-0.1 * t, 3.3 * t).exp() / (1.0 + Complex64::new(0.0, t));
        let track = distinguished_log(cf, 40.0, StepPolicy::default()).unwrap();
        for (t, l) in track.grid().iter().zip(track.log_values()) {
            let v = cf(*t);
            assert!((l.exp() - v).norm() <= 1e-12 * v.norm().max(1e-300) + 1e-15);
        }
        for w in track.log_values().windows(2) {
            assert!((w[1].im - w[0].im).abs() <= FRAC_PI_2);
        }
    }

    #[test]
    fn small_base_step_resolves_fast_rotation() {
        // phase velocity 20 rad per unit needs steps far below the base step
        let cf = |t: f64| Complex64::new(0.0, 20.0 * t).exp();
        let policy = StepPolicy::with_base_step(0.05);
        let track = distinguished_log(cf, 3.0, policy).unwrap();
        assert!((track.log_values().last().unwrap().im - 60.0).abs() < 1e-10);
    }

    #[test]
    fn vanishing_function_is_a_branch_error() {
        let cf = |t: f64| Complex64::new(1.0 - t, 0.0);
        let e = distinguished_log(cf, 2.0, StepPolicy::with_base_step(0.25));
        assert!(matches!(e, Err(Error::Branch { .. })));
    }

    #[test]
    fn value_at_off_grid_and_negative() {
        let cf = |t: f64| Complex64::new(0.0, t).exp();
        let local = |t: f64| Ok(cf(t).ln());
        let track = distinguished_log(cf, 10.0, StepPolicy::default()).unwrap();
        let v = track.value_at(&local, 6.9).unwrap();
        assert!((v.im - 6.9).abs() < 1e-12);
        let v = track.value_at(&local, -6.9).unwrap();
        assert!((v.im + 6.9).abs() < 1e-12);
        let v = track.value_at(&local, 13.0).unwrap();
        assert!((v.im - 13.0).abs() < 1e-12);
        assert_eq!(track.t_max(), 10.0);
    }

    #[test]
    fn uniform_grid_matches_track() {
        let local = |t: f64| Ok(Complex64::new(-t, 2.5 * t).exp().ln() - (1.0 + t * t).ln());
        let grid = log_on_uniform_grid(local, 0.9, 30, &StepPolicy::default()).unwrap();
        for (k, l) in grid.iter().enumerate() {
            let t = k as f64 * 0.9;
            assert!((l.im - 2.5 * t).abs() < 1e-12);
        }
    }
}
