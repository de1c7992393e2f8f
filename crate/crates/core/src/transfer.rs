//! Transfer matrices, monodromy matrices and solution propagation.
//!
//! Internally everything is integrated in the `(u, pu′)` frame, where the
//! generator is trace-free and transfer matrices have unit determinant.
//! Results in the `(u, u′)` frame are obtained by conjugating with
//! `diag(1, p(t))` at the endpoints.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mat2::{Mat2, Vec2};
use crate::ode::{self, AdaptiveOptions, OdeState};
use crate::params::{BoundaryVector, ModulationKind, SLParams};

pub const DEFAULT_TOL: f64 = 1e-10;

/// Magnitude above which propagated vectors are rescaled.
const RESCALE_ABOVE: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    /// `(u, u′)`.
    DPrime,
    /// `(u, pu′)`.
    PDPrime,
}

impl Frame {
    /// `(u, u′)` for modulated families, `(u, pu′)` otherwise.
    pub fn natural(params: &SLParams) -> Frame {
        match params.kind() {
            ModulationKind::PeriodicallyModulated => Frame::DPrime,
            _ => Frame::PDPrime,
        }
    }

    /// Re-expresses a transfer matrix over `[t0, t1]` from the `(u, pu′)`
    /// frame in `self`.
    pub fn from_pd(self, m: Mat2, p_t0: f64, p_t1: f64) -> Mat2 {
        match self {
            Frame::PDPrime => m,
            Frame::DPrime => Mat2::new(m.a11, m.a12 * p_t0, m.a21 / p_t1, m.a22 * (p_t0 / p_t1)),
        }
    }

    /// Inverse of [`Frame::from_pd`].
    pub fn to_pd(self, m: Mat2, p_t0: f64, p_t1: f64) -> Mat2 {
        match self {
            Frame::PDPrime => m,
            Frame::DPrime => Mat2::new(m.a11, m.a12 / p_t0, m.a21 * p_t1, m.a22 * (p_t1 / p_t0)),
        }
    }

    /// Converts a `(u, pu′)` vector at a point where the coefficient is `p`.
    pub fn vec_from_pd(self, v: Vec2, p: f64) -> Vec2 {
        match self {
            Frame::PDPrime => v,
            Frame::DPrime => [v[0], v[1] / p],
        }
    }

    pub fn vec_to_pd(self, v: Vec2, p: f64) -> Vec2 {
        match self {
            Frame::PDPrime => v,
            Frame::DPrime => [v[0], v[1] * p],
        }
    }
}

pub(crate) fn options(tol: f64) -> Result<AdaptiveOptions> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    Ok(AdaptiveOptions::with_tol(tol))
}

fn check_interval(t0: f64, t1: f64) -> Result<()> {
    if !(t0 >= 0.0 && t1 >= t0 && t1.is_finite()) {
        return Err(Error::InvalidArgument(format!("need 0 <= t0 <= t1, got [{t0}, {t1}]")));
    }
    Ok(())
}

/// Right-hand side of `Y′ = b Y` for the 2×2 matrix state in column layout.
#[inline]
fn pd_matrix_rhs(params: &SLParams, z: Complex64, t: f64, y: &[Complex64; 4]) -> [Complex64; 4] {
    let inv_p = 1.0 / params.p(t);
    let pot = params.q(t) - z * params.w(t);
    [y[1] * inv_p, pot * y[0], y[3] * inv_p, pot * y[2]]
}

/// Transfer matrix in the `(u, pu′)` frame over `[t0, t1]`.
fn pd_transfer(params: &SLParams, t0: f64, t1: f64, z: Complex64, opts: &AdaptiveOptions) -> Result<Mat2> {
    let breaks = params.breakpoints(t0, t1);
    let y = ode::dopri5(
        |t, y: &[Complex64; 4]| pd_matrix_rhs(params, z, t, y),
        t0,
        t1,
        Mat2::IDENTITY.to_columns(),
        &breaks,
        opts,
    )?;
    Ok(Mat2::from_columns(&y))
}

/// `T(t1; z) T(t0; z)⁻¹` by adaptive integration from the identity at `t0`.
pub fn transfer_matrix(params: &SLParams, t0: f64, t1: f64, z: Complex64, frame: Frame, tol: f64) -> Result<Mat2> {
    check_interval(t0, t1)?;
    let opts = options(tol)?;
    let m = pd_transfer(params, t0, t1, z, &opts)?;
    Ok(frame.from_pd(m, params.p(t0), params.p(t1)))
}

/// Transfer matrix of the periodic limit over one period, `𝔗(ω; z)`.
pub fn monodromy(params: &SLParams, z: Complex64, frame: Frame, tol: f64) -> Result<Mat2> {
    let lim = params.periodic_limit();
    transfer_matrix(&lim, 0.0, lim.period(), z, frame, tol)
}

/// `tr 𝔗(ω; λ)` at real `λ`.
pub fn monodromy_trace(params: &SLParams, lambda: f64, tol: f64) -> Result<f64> {
    Ok(monodromy(params, lambda.into(), Frame::PDPrime, tol)?.trace().re)
}

/// `(𝔗(ω; z), ∂_z 𝔗(ω; z))` from the variational system
/// `∂Y′ = b ∂Y + (∂_z b) Y`, integrated alongside `Y′ = b Y`.
pub fn monodromy_with_dz(params: &SLParams, z: Complex64, frame: Frame, tol: f64) -> Result<(Mat2, Mat2)> {
    let lim = params.periodic_limit();
    let opts = options(tol)?;
    let omega = lim.period();
    let breaks = lim.breakpoints(0.0, omega);
    let mut y0 = [Complex64::new(0.0, 0.0); 8];
    y0[..4].copy_from_slice(&Mat2::IDENTITY.to_columns());
    let y = ode::dopri5(
        |t, y: &[Complex64; 8]| {
            let inv_p = 1.0 / lim.p(t);
            let w = lim.w(t);
            let pot = lim.q(t) - z * w;
            [
                y[1] * inv_p,
                pot * y[0],
                y[3] * inv_p,
                pot * y[2],
                y[5] * inv_p,
                pot * y[4] - w * y[0],
                y[7] * inv_p,
                pot * y[6] - w * y[2],
            ]
        },
        0.0,
        omega,
        y0,
        &breaks,
        &opts,
    )?;
    let m = Mat2::from_columns(&[y[0], y[1], y[2], y[3]]);
    let dm = Mat2::from_columns(&[y[4], y[5], y[6], y[7]]);
    let (p0, p1) = (lim.p(0.0), lim.p(omega));
    Ok((frame.from_pd(m, p0, p1), frame.from_pd(dm, p0, p1)))
}

/// `∂_z 𝔗(ω; z)`.
pub fn monodromy_dz(params: &SLParams, z: Complex64, frame: Frame, tol: f64) -> Result<Mat2> {
    monodromy_with_dz(params, z, frame, tol).map(|(_, dm)| dm)
}

/// Period-shift matrix `X_n(t; z) = T(t + (n+1)ω; z) T(t + nω; z)⁻¹`,
/// integrated directly over one period.
pub fn shift_matrix_xn(params: &SLParams, n: usize, t: f64, z: Complex64, frame: Frame, tol: f64) -> Result<Mat2> {
    let omega = params.period();
    let a = t + n as f64 * omega;
    transfer_matrix(params, a, a + omega, z, frame, tol)
}

/// A solution sampled on a grid with log-scaled storage: the true value at
/// `grid[i]` is `values[i] · exp(log_scales[i])`.
#[derive(Debug, Clone)]
pub struct SolutionTrace {
    pub grid: Vec<f64>,
    pub values: Vec<Vec2>,
    pub log_scales: Vec<f64>,
    pub z: Complex64,
    pub eta: BoundaryVector,
    pub frame: Frame,
}

impl SolutionTrace {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Unscaled value; may overflow to infinity for strongly growing solutions.
    pub fn value(&self, i: usize) -> Vec2 {
        let s = self.log_scales[i].exp();
        [self.values[i][0] * s, self.values[i][1] * s]
    }

    /// `log ‖value(i)‖` without overflow.
    pub fn log_norm(&self, i: usize) -> f64 {
        let v = self.values[i];
        v[0].norm().hypot(v[1].norm()).ln() + self.log_scales[i]
    }
}

/// Propagates `(u, pu′)` over `[t0, t1]` in chunks no longer than one
/// period, rescaling when the magnitude grows large. Returns the scaled
/// vector and the accumulated log scale.
pub(crate) fn propagate_pd(
    params: &SLParams,
    v0: Vec2,
    log0: f64,
    t0: f64,
    t1: f64,
    z: Complex64,
    opts: &AdaptiveOptions,
) -> Result<(Vec2, f64)> {
    let omega = params.period();
    let mut v = v0;
    let mut log_scale = log0;
    let mut a = t0;
    while a < t1 {
        let b = (a + omega).min(t1);
        let b = if t1 - b < 1e-12 * omega { t1 } else { b };
        let breaks = params.breakpoints(a, b);
        v = ode::dopri5(
            |t, y: &[Complex64; 2]| {
                let inv_p = 1.0 / params.p(t);
                let pot = params.q(t) - z * params.w(t);
                [y[1] * inv_p, pot * y[0]]
            },
            a,
            b,
            v,
            &breaks,
            opts,
        )?;
        if !v.all_finite() {
            return Err(Error::Overflow { t: b });
        }
        let m = v.max_abs();
        if m > RESCALE_ABOVE || (m < 1.0 / RESCALE_ABOVE && m > 0.0) {
            v = v.scale(1.0 / m);
            log_scale += m.ln();
        }
        a = b;
    }
    Ok((v, log_scale))
}

/// Propagates the solution with initial data `η` at `t = 0` through an
/// increasing grid starting at 0, by continued integration.
pub fn propagate(
    params: &SLParams,
    eta: BoundaryVector,
    t_grid: &[f64],
    z: Complex64,
    frame: Frame,
    tol: f64,
) -> Result<SolutionTrace> {
    if t_grid.first() != Some(&0.0) {
        return Err(Error::InvalidArgument("grid must start at 0".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("grid must be strictly increasing".into()));
    }
    let opts = options(tol)?;
    let p0 = params.p(0.0);
    let pd = eta.to_pd(p0);
    let mut v: Vec2 = [pd[0].into(), pd[1].into()];
    let mut log_scale = 0.0;
    let mut values = Vec::with_capacity(t_grid.len());
    let mut log_scales = Vec::with_capacity(t_grid.len());
    values.push(frame.vec_from_pd(v, p0));
    log_scales.push(0.0);
    for w in t_grid.windows(2) {
        let (nv, nl) = propagate_pd(params, v, log_scale, w[0], w[1], z, &opts)?;
        v = nv;
        log_scale = nl;
        values.push(frame.vec_from_pd(v, params.p(w[1])));
        log_scales.push(log_scale);
    }
    Ok(SolutionTrace {
        grid: t_grid.to_vec(),
        values,
        log_scales,
        z,
        eta,
        frame,
    })
}

/// Real `(u, pu′)` at `t_end` for real spectral parameter, scaled by
/// `exp(log_scale)`.
pub fn shoot_real(params: &SLParams, eta: BoundaryVector, t_end: f64, lambda: f64, tol: f64) -> Result<([f64; 2], f64)> {
    let opts = options(tol)?;
    let pd = eta.to_pd(params.p(0.0));
    let omega = params.period();
    let mut v = pd;
    let mut log_scale = 0.0;
    let mut a = 0.0;
    while a < t_end {
        let b = (a + omega).min(t_end);
        let b = if t_end - b < 1e-12 * omega { t_end } else { b };
        let breaks = params.breakpoints(a, b);
        v = ode::dopri5(
            |t, y: &[f64; 2]| {
                let inv_p = 1.0 / params.p(t);
                let pot = params.q(t) - lambda * params.w(t);
                [y[1] * inv_p, pot * y[0]]
            },
            a,
            b,
            v,
            &breaks,
            &opts,
        )?;
        let m = v.max_abs();
        if !m.is_finite() {
            return Err(Error::Overflow { t: b });
        }
        if m > RESCALE_ABOVE || (m < 1.0 / RESCALE_ABOVE && m > 0.0) {
            v = v.scale(1.0 / m);
            log_scale += m.ln();
        }
        a = b;
    }
    Ok((v, log_scale))
}

/// Fixed-step RK4 transfer matrix integrating the `(u, u′)` system
/// `b = [[0, 1], [(q − zw)/p, −p′/p]]` directly. Used as a brute-force
/// reference for [`transfer_matrix`].
pub fn transfer_matrix_rk4(params: &SLParams, t0: f64, t1: f64, z: Complex64, frame: Frame, h: f64) -> Result<Mat2> {
    check_interval(t0, t1)?;
    let breaks = params.breakpoints(t0, t1);
    let y = ode::rk4_fixed(
        |t, y: &[Complex64; 4]| {
            let p = params.p(t);
            let a21 = (params.q(t) - z * params.w(t)) / p;
            let a22 = -params.p_prime(t) / p;
            [y[1], a21 * y[0] + a22 * y[1], y[3], a21 * y[2] + a22 * y[3]]
        },
        t0,
        t1,
        Mat2::IDENTITY.to_columns(),
        h,
        &breaks,
    )?;
    let m = Mat2::from_columns(&y);
    let (p0, p1) = (params.p(t0), params.p(t1));
    Ok(match frame {
        Frame::DPrime => m,
        Frame::PDPrime => Frame::DPrime.to_pd(m, p0, p1),
    })
}
