//! Explicit Runge–Kutta integrators for small linear systems.
//!
//! [`dopri5`] is the Dormand–Prince 5(4) pair with PI step-size control; it is
//! the production integrator. [`rk4_fixed`] is classical fixed-step RK4 and
//! exists to serve as an independent brute-force reference.
//!
//! Both integrators restart at every breakpoint handed to them, so piecewise
//! smooth coefficients never force a step across a kink.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A fixed-size state vector the integrators can work with.
pub trait OdeState: Copy + Send + Sync {
    fn zero() -> Self;
    /// Returns `self + h * k`.
    fn add_scaled(&self, h: f64, k: &Self) -> Self;
    fn scale(&self, s: f64) -> Self;
    /// Largest component modulus.
    fn max_abs(&self) -> f64;
    /// RMS of `err / (atol + rtol * max(|y0|, |y1|))` over the components.
    fn err_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64;
    fn all_finite(&self) -> bool;
}

impl<const N: usize> OdeState for [f64; N] {
    fn zero() -> Self {
        [0.0; N]
    }

    fn add_scaled(&self, h: f64, k: &Self) -> Self {
        let mut out = *self;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += h * ki;
        }
        out
    }

    fn scale(&self, s: f64) -> Self {
        self.map(|x| x * s)
    }

    fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn err_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let sc = atol + rtol * y0[i].abs().max(y1[i].abs());
            acc += (err[i] / sc).powi(2);
        }
        (acc / N as f64).sqrt()
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

impl<const N: usize> OdeState for [Complex64; N] {
    fn zero() -> Self {
        [Complex64::new(0.0, 0.0); N]
    }

    fn add_scaled(&self, h: f64, k: &Self) -> Self {
        let mut out = *self;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += ki * h;
        }
        out
    }

    fn scale(&self, s: f64) -> Self {
        self.map(|x| x * s)
    }

    fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, x| m.max(x.norm()))
    }

    fn err_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let sc = atol + rtol * y0[i].norm().max(y1[i].norm());
            acc += (err[i].norm() / sc).powi(2);
        }
        (acc / N as f64).sqrt()
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.re.is_finite() && x.im.is_finite())
    }
}

/// Settings for [`dopri5`].
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Steps smaller than `h_min * max(1, |t|)` are treated as underflow.
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl AdaptiveOptions {
    pub fn with_tol(tol: f64) -> Self {
        AdaptiveOptions {
            rtol: tol,
            atol: tol,
            ..Default::default()
        }
    }
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            rtol: 1e-10,
            atol: 1e-10,
            h_min: 1e-14,
            h_max: f64::INFINITY,
            max_steps: 5_000_000,
        }
    }
}

/// Step statistics of one [`dopri5`] call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Splits `[t0, t1]` at the breakpoints that fall strictly inside it.
fn segments(t0: f64, t1: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&b| b > t0 && b < t1)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut a = t0;
    for c in cuts {
        if c - a > 1e-13 * (1.0 + a.abs()) {
            out.push((a, c));
            a = c;
        }
    }
    out.push((a, t1));
    out
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` with the Dormand–Prince 5(4)
/// pair, restarting at each breakpoint.
pub fn dopri5<S, F>(f: F, t0: f64, t1: f64, y0: S, breaks: &[f64], opts: &AdaptiveOptions) -> Result<S>
where
    S: OdeState,
    F: Fn(f64, &S) -> S,
{
    dopri5_with_stats(f, t0, t1, y0, breaks, opts).map(|(y, _)| y)
}

pub fn dopri5_with_stats<S, F>(
    f: F,
    t0: f64,
    t1: f64,
    y0: S,
    breaks: &[f64],
    opts: &AdaptiveOptions,
) -> Result<(S, StepStats)>
where
    S: OdeState,
    F: Fn(f64, &S) -> S,
{
    if !(t1 >= t0) {
        return Err(Error::InvalidArgument(format!(
            "integration interval [{t0}, {t1}] is reversed"
        )));
    }
    let mut stats = StepStats::default();
    let mut y = y0;
    if t1 == t0 {
        return Ok((y, stats));
    }
    for (a, b) in segments(t0, t1, breaks) {
        y = dopri5_segment(&f, a, b, y, opts, &mut stats)?;
    }
    Ok((y, stats))
}

fn initial_step<S, F>(f: &F, t: f64, y: &S, k1: &S, span: f64, opts: &AdaptiveOptions) -> f64
where
    S: OdeState,
    F: Fn(f64, &S) -> S,
{
    let zero = S::zero();
    let d0 = S::err_norm(y, &zero, y, opts.atol, opts.rtol);
    let d1 = S::err_norm(k1, &zero, y, opts.atol, opts.rtol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1 = y.add_scaled(h0, k1);
    let k2 = f(t + h0, &y1);
    let mut diff = k2;
    diff = diff.add_scaled(-1.0, k1);
    let d2 = S::err_norm(&diff, &zero, y, opts.atol, opts.rtol) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span).min(opts.h_max)
}

fn dopri5_segment<S, F>(f: &F, t0: f64, t1: f64, y0: S, opts: &AdaptiveOptions, stats: &mut StepStats) -> Result<S>
where
    S: OdeState,
    F: Fn(f64, &S) -> S,
{
    const SAFE: f64 = 0.9;
    const BETA: f64 = 0.04;
    const EXPO1: f64 = 0.2 - BETA * 0.75;
    const FAC_MIN: f64 = 0.2; // largest shrink is 1/5
    const FAC_MAX: f64 = 10.0;

    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    if !k1.all_finite() || !y.all_finite() {
        return Err(Error::NonFinite { t });
    }
    let mut h = initial_step(f, t, &y, &k1, span, opts);
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    let mut steps = 0usize;

    loop {
        let remaining = t1 - t;
        if remaining <= 1e-15 * (1.0 + t1.abs()) {
            return Ok(y);
        }
        if steps >= opts.max_steps {
            return Err(Error::TooManySteps { t });
        }
        steps += 1;
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        if h < opts.h_min * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t });
        }

        let y2 = y.add_scaled(h * A21, &k1);
        let k2 = f(t + C2 * h, &y2);
        let y3 = y.add_scaled(h * A31, &k1).add_scaled(h * A32, &k2);
        let k3 = f(t + C3 * h, &y3);
        let y4 = y
            .add_scaled(h * A41, &k1)
            .add_scaled(h * A42, &k2)
            .add_scaled(h * A43, &k3);
        let k4 = f(t + C4 * h, &y4);
        let y5 = y
            .add_scaled(h * A51, &k1)
            .add_scaled(h * A52, &k2)
            .add_scaled(h * A53, &k3)
            .add_scaled(h * A54, &k4);
        let k5 = f(t + C5 * h, &y5);
        let y6 = y
            .add_scaled(h * A61, &k1)
            .add_scaled(h * A62, &k2)
            .add_scaled(h * A63, &k3)
            .add_scaled(h * A64, &k4)
            .add_scaled(h * A65, &k5);
        let t_new = if last { t1 } else { t + h };
        let k6 = f(t_new, &y6);
        let y_new = y
            .add_scaled(h * A71, &k1)
            .add_scaled(h * A73, &k3)
            .add_scaled(h * A74, &k4)
            .add_scaled(h * A75, &k5)
            .add_scaled(h * A76, &k6);
        let k7 = f(t_new, &y_new);
        let err_vec = S::zero()
            .add_scaled(h * E1, &k1)
            .add_scaled(h * E3, &k3)
            .add_scaled(h * E4, &k4)
            .add_scaled(h * E5, &k5)
            .add_scaled(h * E6, &k6)
            .add_scaled(h * E7, &k7);
        if !y_new.all_finite() || !k7.all_finite() {
            // Shrink and retry; a genuinely non-finite field shows up again at tiny h.
            if h < 1e3 * opts.h_min * t.abs().max(1.0) {
                return Err(Error::NonFinite { t });
            }
            h *= 0.25;
            last_rejected = true;
            stats.rejected += 1;
            continue;
        }
        let err = S::err_norm(&err_vec, &y, &y_new, opts.atol, opts.rtol);

        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            let mut fac = fac11 / facold.powf(BETA);
            fac = (fac / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = (h / fac).min(opts.h_max);
            if last_rejected {
                h_new = h_new.min(h);
            }
            facold = err.max(1e-4);
            stats.accepted += 1;
            y = y_new;
            k1 = k7;
            t = t_new;
            h = h_new;
            last_rejected = false;
            if last {
                return Ok(y);
            }
        } else {
            h /= (fac11 / SAFE).min(1.0 / FAC_MIN);
            last_rejected = true;
            stats.rejected += 1;
        }
    }
}

/// Classical fixed-step RK4 with step at most `h`, restarting at breakpoints.
pub fn rk4_fixed<S, F>(f: F, t0: f64, t1: f64, y0: S, h: f64, breaks: &[f64]) -> Result<S>
where
    S: OdeState,
    F: Fn(f64, &S) -> S,
{
    if !(t1 >= t0) || !(h > 0.0) {
        return Err(Error::InvalidArgument("rk4 needs t1 >= t0 and h > 0".into()));
    }
    let mut y = y0;
    if t1 == t0 {
        return Ok(y);
    }
    for (a, b) in segments(t0, t1, breaks) {
        let n = ((b - a) / h).ceil().max(1.0) as usize;
        let step = (b - a) / n as f64;
        for i in 0..n {
            let t = a + i as f64 * step;
            let k1 = f(t, &y);
            let k2 = f(t + 0.5 * step, &y.add_scaled(0.5 * step, &k1));
            let k3 = f(t + 0.5 * step, &y.add_scaled(0.5 * step, &k2));
            let k4 = f(t + step, &y.add_scaled(step, &k3));
            y = y
                .add_scaled(step / 6.0, &k1)
                .add_scaled(step / 3.0, &k2)
                .add_scaled(step / 3.0, &k3)
                .add_scaled(step / 6.0, &k4);
        }
        if !y.all_finite() {
            return Err(Error::NonFinite { t: b });
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_matches_closed_form() {
        let f = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let opts = AdaptiveOptions::with_tol(1e-12);
        let y = dopri5(f, 0.0, 10.0, [1.0, 0.0], &[], &opts).unwrap();
        assert!((y[0] - 10f64.cos()).abs() < 1e-10);
        assert!((y[1] + 10f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn exponential_growth_complex() {
        let lam = Complex64::new(0.3, 2.0);
        let f = move |_t: f64, y: &[Complex64; 1]| [lam * y[0]];
        let y = dopri5(f, 0.0, 3.0, [Complex64::new(1.0, 0.0)], &[], &AdaptiveOptions::default()).unwrap();
        let exact = (lam * 3.0).exp();
        assert!((y[0] - exact).norm() < 1e-8 * exact.norm());
    }

    #[test]
    fn breakpoints_are_respected() {
        // |t - 1| has a kink at 1; integrate y' = |t - 1| on [0, 3] -> 0.5 + 2.
        let f = |t: f64, _y: &[f64; 1]| [(t - 1.0).abs()];
        let y = dopri5(f, 0.0, 3.0, [0.0], &[1.0], &AdaptiveOptions::default()).unwrap();
        assert!((y[0] - 2.5).abs() < 1e-12);
        let y4 = rk4_fixed(f, 0.0, 3.0, [0.0], 0.1, &[1.0]).unwrap();
        assert!((y4[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let f = |_t: f64, y: &[f64; 1]| [y[0]];
        let e1 = (rk4_fixed(f, 0.0, 1.0, [1.0], 0.1, &[]).unwrap()[0] - 1f64.exp()).abs();
        let e2 = (rk4_fixed(f, 0.0, 1.0, [1.0], 0.05, &[]).unwrap()[0] - 1f64.exp()).abs();
        let ratio = e1 / e2;
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    #[test]
    fn reversed_interval_rejected() {
        let f = |_t: f64, y: &[f64; 1]| [y[0]];
        assert!(dopri5(f, 1.0, 0.0, [1.0], &[], &AdaptiveOptions::default()).is_err());
    }

    #[test]
    fn non_finite_field_reported() {
        let f = |t: f64, _y: &[f64; 1]| [if t > 0.5 { f64::NAN } else { 1.0 }];
        let err = dopri5(f, 0.0, 1.0, [0.0], &[], &AdaptiveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }), "{err:?}");
    }
}
