//! Christoffel–Darboux kernels, spectral density, density of states and
//! eigenvalue counting for Dirichlet truncations.
//!
//! The normalization `ρ_L` follows the modulation kind: `∫₀ᴸ w/p` for
//! periodically modulated families and `∫₀ᴸ w` otherwise.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ode::{self, OdeState};
use crate::params::{carleman_rho, rho_schedule, BoundaryVector, ModulationKind, SLParams};
use crate::spectral::{bands, classify_matrix, trace_with_derivative, Case, EPS_CASE};
use crate::transfer::{monodromy_with_dz, options, shoot_real, Frame};

const RESCALE_ABOVE: f64 = 1e100;

/// `K_L(λ, λ; η) = ∫₀ᴸ u(t, η; λ)² w(t) dt` at each point of an increasing
/// schedule, from one pass of the augmented system `K′ = u² w`.
pub fn cd_kernel_schedule(params: &SLParams, eta: BoundaryVector, lambda: f64, schedule: &[f64], tol: f64) -> Result<Vec<f64>> {
    if schedule.is_empty() || schedule[0] <= 0.0 || schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("schedule must be positive and strictly increasing".into()));
    }
    let opts = options(tol)?;
    let omega = params.period();
    let pd = eta.to_pd(params.p(0.0));
    let mut y = [pd[0], pd[1], 0.0];
    // True state is (y₀, y₁)·e^{s} and K = y₂·e^{2s}.
    let mut log_scale = 0.0;
    let mut a = 0.0;
    let mut out = Vec::with_capacity(schedule.len());
    for &l in schedule {
        while a < l {
            let b = (a + omega).min(l);
            let b = if l - b < 1e-12 * omega { l } else { b };
            let breaks = params.breakpoints(a, b);
            y = ode::dopri5(
                |t, y: &[f64; 3]| {
                    let inv_p = 1.0 / params.p(t);
                    let w = params.w(t);
                    [y[1] * inv_p, (params.q(t) - lambda * w) * y[0], y[0] * y[0] * w]
                },
                a,
                b,
                y,
                &breaks,
                &opts,
            )?;
            let m = y[0].abs().max(y[1].abs());
            if !(m.is_finite() && y[2].is_finite()) {
                return Err(Error::Overflow { t: b });
            }
            if m > RESCALE_ABOVE {
                y = [y[0] / m, y[1] / m, y[2] / (m * m)];
                log_scale += m.ln();
            }
            a = b;
        }
        out.push(y[2] * (2.0 * log_scale).exp());
    }
    Ok(out)
}

/// `K_L(λ, λ; η)`.
pub fn cd_kernel_diag(params: &SLParams, eta: BoundaryVector, lambda: f64, l: f64, tol: f64) -> Result<f64> {
    if !(l > 0.0) {
        return Err(Error::InvalidArgument(format!("L must be positive, got {l}")));
    }
    Ok(cd_kernel_schedule(params, eta, lambda, &[l], tol)?[0])
}

/// `L = s + nω` for `n = n_lo..=n_hi`.
pub fn aligned_schedule(params: &SLParams, s: f64, n_lo: usize, n_hi: usize) -> Vec<f64> {
    let omega = params.period();
    (n_lo..=n_hi).map(|n| s + n as f64 * omega).filter(|&l| l > 0.0).collect()
}

/// Checks that `λ` lies where the limit `g(λ)` exists: Case I at `z = 0` for
/// modulated families, `|tr 𝔗(ω; λ)| < 2` otherwise.
fn check_validity(params: &SLParams, lambda: f64, tol: f64) -> Result<()> {
    if params.kind().uses_weight_over_p() {
        let (m, _) = monodromy_with_dz(params, Complex64::new(0.0, 0.0), Frame::PDPrime, tol)?;
        let label = classify_matrix(&m, EPS_CASE);
        if label.case != Case::I {
            return Err(Error::NotCaseOne {
                found: label.case.to_string(),
            });
        }
    } else {
        let (tr, _) = trace_with_derivative(params, lambda, tol)?;
        if !(tr.abs() < 2.0) {
            return Err(Error::NotInBand { lambda, trace: tr });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSample {
    pub l: f64,
    pub k: f64,
    pub rho: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GEstimate {
    pub g: f64,
    /// Half the spread of `K_L/ρ_L` over the averaged tail.
    pub error: f64,
    pub samples: Vec<KernelSample>,
    /// `(K_L − K_{L₀}) / (ρ_L − ρ_{L₀})` across the tail, which cancels the
    /// transient contribution of `[0, L₀]`.
    pub increment_ratio: f64,
}

/// Cesàro mean of `K_L/ρ_L` over the last quarter of the schedule.
pub fn g_estimate(params: &SLParams, eta: BoundaryVector, lambda: f64, schedule: &[f64], tol: f64) -> Result<GEstimate> {
    if schedule.len() < 4 {
        return Err(Error::InvalidArgument("schedule needs at least 4 points".into()));
    }
    check_validity(params, lambda, tol)?;
    let ks = cd_kernel_schedule(params, eta, lambda, schedule, tol)?;
    let rhos = rho_schedule(params, schedule, tol.max(1e-12))?;
    let samples: Vec<KernelSample> = schedule
        .iter()
        .zip(ks.iter().zip(&rhos))
        .map(|(&l, (&k, &rho))| KernelSample {
            l,
            k,
            rho,
            ratio: k / rho,
        })
        .collect();
    let start = samples.len() - samples.len() / 4;
    let tail = &samples[start..];
    let g = tail.iter().map(|s| s.ratio).sum::<f64>() / tail.len() as f64;
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.ratio), hi.max(s.ratio)));
    let first = tail[0];
    let last = *tail.last().expect("non-empty tail");
    Ok(GEstimate {
        g,
        error: 0.5 * (hi - lo),
        samples,
        increment_ratio: (last.k - first.k) / (last.rho - first.rho),
    })
}

/// Density of `ν_∞`: `(1/π) |∂_z tr 𝔗| / (γ √(4 − tr² 𝔗))`, with `𝔗` taken at
/// `z = 0` for modulated families (λ-independent) and at `z = λ` otherwise.
pub fn dos_density(params: &SLParams, lambda: f64, tol: f64) -> Result<f64> {
    let modulated = params.kind().uses_weight_over_p();
    let z = if modulated { 0.0 } else { lambda };
    let (m, dm) = monodromy_with_dz(params, z.into(), Frame::PDPrime, tol)?;
    let tr = m.trace().re;
    if modulated {
        let label = classify_matrix(&m, EPS_CASE);
        if label.case != Case::I {
            return Err(Error::NotCaseOne {
                found: label.case.to_string(),
            });
        }
    } else if !(tr.abs() < 2.0) {
        return Err(Error::NotInBand { lambda, trace: tr });
    }
    Ok(dm.trace().re.abs() / (PI * params.gamma()? * (4.0 - tr * tr).sqrt()))
}

/// Per-λ record of the kernel samples and the derived densities.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityReport {
    pub lambda: f64,
    pub samples: Vec<KernelSample>,
    pub g: f64,
    pub g_err: f64,
    pub dos: f64,
    pub mu_prime: f64,
    /// `μ′ · g_err / g`.
    pub mu_prime_err: f64,
    pub kind: ModulationKind,
}

/// `μ′(λ) = dos / g`.
pub fn spectral_density(params: &SLParams, eta: BoundaryVector, lambda: f64, schedule: &[f64], tol: f64) -> Result<DensityReport> {
    let est = g_estimate(params, eta, lambda, schedule, tol)?;
    let dos = dos_density(params, lambda, tol)?;
    if !(est.g > 0.0) {
        return Err(Error::InvalidArgument(format!("non-positive kernel limit {}", est.g)));
    }
    let mu_prime = dos / est.g;
    Ok(DensityReport {
        lambda,
        samples: est.samples,
        g: est.g,
        g_err: est.error,
        dos,
        mu_prime,
        mu_prime_err: mu_prime * est.error / est.g,
        kind: params.kind(),
    })
}

/// Sign of `u(L, η; λ)`, or `None` when `|u|` is below `1e-9 ‖(u, pu′)‖`.
fn dirichlet_sign(params: &SLParams, eta: BoundaryVector, l: f64, lambda: f64, tol: f64) -> Result<Option<bool>> {
    let (v, _) = shoot_real(params, eta, l, lambda, tol)?;
    let norm = v[0].hypot(v[1]);
    if v[0].abs() <= 1e-9 * norm {
        Ok(None)
    } else {
        Ok(Some(v[0] > 0.0))
    }
}

/// Sign at `λ`, nudged right by `step/2^j` while ambiguous.
fn resolved_sign(params: &SLParams, eta: BoundaryVector, l: f64, lambda: f64, step: f64, tol: f64) -> Result<(f64, bool)> {
    if let Some(s) = dirichlet_sign(params, eta, l, lambda, tol)? {
        return Ok((lambda, s));
    }
    for j in (1..=10).rev() {
        let x = lambda + step / f64::from(1u32 << j);
        if let Some(s) = dirichlet_sign(params, eta, l, x, tol)? {
            return Ok((x, s));
        }
    }
    Err(Error::UnresolvedCluster { lambda })
}

/// Local density of states used to size the counting grid; `None` where no
/// closed form applies.
fn local_dos(params: &SLParams, lambda: f64, tol: f64) -> Option<f64> {
    dos_density(params, lambda, tol).ok().filter(|d| d.is_finite() && *d > 0.0)
}

/// Counting grid on `[a, b]` with local step
/// `min(0.05, 0.5/(dos(λ) ρ_L))`, floored at `(b − a)·1e−6`.
pub fn default_grid(params: &SLParams, l: f64, window: (f64, f64), tol: f64) -> Result<Vec<f64>> {
    let (a, b) = window;
    let rho = carleman_rho(params, l, 1e-10)?;
    let floor = (b - a) * 1e-6;
    let modulated_dos = if params.kind().uses_weight_over_p() {
        Some(local_dos(params, 0.0, tol))
    } else {
        None
    };
    let step_at = |x: f64| {
        let d = match modulated_dos {
            Some(d) => d,
            None => local_dos(params, x, tol),
        };
        match d {
            Some(d) => (0.5 / (d * rho)).clamp(floor, 0.05),
            None => 0.05,
        }
    };
    let mut grid = vec![a];
    let mut x = a;
    while x < b {
        // Shrink until the step at the far end of the cell is no smaller.
        let mut h = step_at(x);
        for _ in 0..60 {
            let h_end = step_at((x + h).min(b));
            if h_end >= h {
                break;
            }
            h = h_end;
        }
        x = (x + h).min(b);
        if b - x < 1e-3 * h {
            x = b;
        }
        grid.push(x);
    }
    Ok(grid)
}

/// Number of `λ ∈ (a, b]` with `u(L, η; λ) = 0`, by sign changes on a grid
/// of spacing at most `step` (or [`default_grid`] when `step` is `None`).
pub fn count_eigenvalues(
    params: &SLParams,
    eta: BoundaryVector,
    l: f64,
    window: (f64, f64),
    step: Option<f64>,
    tol: f64,
) -> Result<usize> {
    Ok(scan_cells(params, eta, l, window, step, tol)?.len())
}

/// Brackets `(λ_i, λ_{i+1}]` containing a sign change of `u(L, η; ·)`.
fn scan_cells(
    params: &SLParams,
    eta: BoundaryVector,
    l: f64,
    window: (f64, f64),
    step: Option<f64>,
    tol: f64,
) -> Result<Vec<(f64, f64)>> {
    let (a, b) = window;
    if !(a < b) {
        return Err(Error::InvalidArgument(format!("window needs a < b, got ({a}, {b}]")));
    }
    if !(l > 0.0) {
        return Err(Error::InvalidArgument(format!("L must be positive, got {l}")));
    }
    let grid = match step {
        Some(h) if h > 0.0 => {
            let n = ((b - a) / h).ceil().max(1.0) as usize;
            (0..=n).map(|i| if i == n { b } else { a + (b - a) * i as f64 / n as f64 }).collect()
        }
        Some(h) => return Err(Error::InvalidArgument(format!("grid step must be positive, got {h}"))),
        None => default_grid(params, l, window, tol)?,
    };
    let cell = grid.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let signs: Vec<(f64, bool)> = grid
        .par_iter()
        .map(|&x| resolved_sign(params, eta, l, x, cell, tol))
        .collect::<Result<_>>()?;
    Ok(signs
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| (w[0].0, w[1].0))
        .collect())
}

/// Eigenvalues of the truncation to `[0, L]` with Dirichlet condition at `L`
/// in `(a, b]`, bisected to `1e-10`.
pub fn eigenvalues(
    params: &SLParams,
    eta: BoundaryVector,
    l: f64,
    window: (f64, f64),
    step: Option<f64>,
    tol: f64,
) -> Result<Vec<f64>> {
    let cells = scan_cells(params, eta, l, window, step, tol)?;
    cells
        .into_par_iter()
        .map(|(mut lo, mut hi)| {
            let (_, s_lo) = resolved_sign(params, eta, l, lo, hi - lo, tol)?;
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                match dirichlet_sign(params, eta, l, mid, tol)? {
                    None => return Ok(mid),
                    Some(s) if s == s_lo => lo = mid,
                    Some(_) => hi = mid,
                }
            }
            Ok(0.5 * (lo + hi))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountRow {
    pub l: f64,
    pub count: usize,
    pub rho: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub window: (f64, f64),
    pub rows: Vec<CountRow>,
    /// `ν_∞((a, b])`.
    pub target: f64,
}

impl CountTable {
    /// `|normalized − target| / target` of the last row.
    pub fn final_deviation(&self) -> f64 {
        let last = self.rows.last().expect("non-empty table");
        (last.normalized - self.target).abs() / self.target
    }
}

/// `ν_∞((a, b])` from the closed-form density: `dos·(b − a)` for modulated
/// families, `(1/(πγ)) Σ |Δ arccos(tr/2)|` over the bands otherwise.
pub fn nu_infinity(params: &SLParams, window: (f64, f64), tol: f64) -> Result<f64> {
    let (a, b) = window;
    if params.kind().uses_weight_over_p() {
        return Ok(dos_density(params, 0.0, tol)? * (b - a));
    }
    let gamma = params.gamma()?;
    let list = bands(params, a, b, (b - a) / 2000.0, 1e-11)?;
    let mut total = 0.0;
    for band in &list.intervals {
        let (t0, _) = trace_with_derivative(params, band.lower, tol)?;
        let (t1, _) = trace_with_derivative(params, band.upper, tol)?;
        total += ((t1 / 2.0).clamp(-1.0, 1.0).acos() - (t0 / 2.0).clamp(-1.0, 1.0).acos()).abs();
    }
    Ok(total / (PI * gamma))
}

/// Normalized eigenvalue counts along an `L` schedule.
pub fn dos_convergence(
    params: &SLParams,
    eta: BoundaryVector,
    window: (f64, f64),
    schedule: &[f64],
    tol: f64,
) -> Result<CountTable> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty L schedule".into()));
    }
    let target = nu_infinity(params, window, tol)?;
    let rows = schedule
        .par_iter()
        .map(|&l| {
            let count = count_eigenvalues(params, eta, l, window, None, tol)?;
            let rho = carleman_rho(params, l, 1e-10)?;
            Ok(CountRow {
                l,
                count,
                rho,
                normalized: count as f64 / rho,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CountTable { window, rows, target })
}

/// `−∂_z u(L, η; z) / u(L, η; z)` from the augmented variational system.
pub fn cauchy_transform(params: &SLParams, eta: BoundaryVector, l: f64, z: Complex64, tol: f64) -> Result<Complex64> {
    if z.im == 0.0 {
        return Err(Error::InvalidArgument("cauchy transform needs Im z != 0".into()));
    }
    if !(l > 0.0) {
        return Err(Error::InvalidArgument(format!("L must be positive, got {l}")));
    }
    let opts = options(tol)?;
    let omega = params.period();
    let pd = eta.to_pd(params.p(0.0));
    let zero = Complex64::new(0.0, 0.0);
    let mut y = [pd[0].into(), pd[1].into(), zero, zero];
    let mut a = 0.0;
    while a < l {
        let b = (a + omega).min(l);
        let b = if l - b < 1e-12 * omega { l } else { b };
        let breaks = params.breakpoints(a, b);
        y = ode::dopri5(
            |t, y: &[Complex64; 4]| {
                let inv_p = 1.0 / params.p(t);
                let w = params.w(t);
                let pot = params.q(t) - z * w;
                [y[1] * inv_p, pot * y[0], y[3] * inv_p, pot * y[2] - w * y[0]]
            },
            a,
            b,
            y,
            &breaks,
            &opts,
        )?;
        let m = y.max_abs();
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::Overflow { t: b });
        }
        y = y.scale(1.0 / m);
        a = b;
    }
    if y[0].norm() == 0.0 {
        return Err(Error::NonFinite { t: l });
    }
    Ok(-y[2] / y[0])
}

/// `(1/γ) ∂_z tr 𝔗(ω; 0) / (i √(−discr 𝔗(ω; 0)))`, the limit of the
/// normalized Cauchy transform for modulated Case I families.
pub fn cauchy_limit(params: &SLParams, tol: f64) -> Result<Complex64> {
    let (m, dm) = monodromy_with_dz(params, Complex64::new(0.0, 0.0), Frame::PDPrime, tol)?;
    let d = m.discr().re;
    if !(d < 0.0) {
        return Err(Error::NotCaseOne {
            found: classify_matrix(&m, EPS_CASE).case.to_string(),
        });
    }
    let gamma = params.gamma()?;
    Ok(dm.trace() / (Complex64::new(0.0, (-d).sqrt()) * gamma))
}

/// One evaluation of the free-family identity `𝒟(t; λ) μ′(λ) = sin(√λ ω)/π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example1Row {
    pub t: f64,
    pub lambda: f64,
    /// `u(t+ω) u′(t) − u(t) u′(t+ω)`.
    pub turan: f64,
    pub mu_prime: f64,
    pub product: f64,
    pub expected: f64,
}

/// Evaluates the identity with `μ′` from the kernel pipeline on the free
/// family of period `ω`.
pub fn example1_check(omega: f64, eta: BoundaryVector, t: f64, lambda: f64, schedule: &[f64], tol: f64) -> Result<Example1Row> {
    let params = crate::params::free_family(omega)?;
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("t must be non-negative, got {t}")));
    }
    let grid: Vec<f64> = if t > 0.0 { vec![0.0, t, t + omega] } else { vec![0.0, omega] };
    let tr = crate::transfer::propagate(&params, eta, &grid, lambda.into(), Frame::PDPrime, tol)?;
    let (a, b) = (tr.value(grid.len() - 2), tr.value(grid.len() - 1));
    let turan = (b[0] * a[1] - a[0] * b[1]).re;
    let mu_prime = spectral_density(&params, eta, lambda, schedule, tol)?.mu_prime;
    Ok(Example1Row {
        t,
        lambda,
        turan,
        mu_prime,
        product: turan * mu_prime,
        expected: (lambda.sqrt() * omega).sin() / PI,
    })
}
