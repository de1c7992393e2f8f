//! Eigenvalues of 2×2 transfer matrices, case classification at `z = 0`,
//! band structure of the periodic limit and monodromy trace scans.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mat2::Mat2;
use crate::params::{make_family, NamedValues, SLParams};
use crate::transfer::{monodromy, monodromy_with_dz, Frame};

/// Default half-width of the collar around `|tr| = 2`.
pub const EPS_CASE: f64 = 1e-6;
/// Threshold below which `|discr|` counts as degenerate in [`eigen_pm`].
pub const DEGENERATE_DISCR: f64 = 1e-12;
/// Default pivot threshold for [`diagonalize`].
pub const DEFAULT_DELTA: f64 = 1e-3;

/// `(tr M)² − 4 det M`.
pub fn discr(m: &Mat2) -> Complex64 {
    m.discr()
}

/// Roots of `ξ² − 2vξ + 1 = 0`, `ξ₊ = v + √(v−1)√(v+1)` with principal square
/// roots. On `(−1, 1)` this is the limit from the upper half-plane.
pub fn xi_pm(v: Complex64) -> (Complex64, Complex64) {
    // A signed zero imaginary part would pick the lower-half-plane limit.
    let v = if v.im == 0.0 { Complex64::new(v.re, 0.0) } else { v };
    let plus = v + (v - 1.0).sqrt() * (v + 1.0).sqrt();
    let minus = if plus.norm() >= 1.0 { 1.0 / plus } else { 2.0 * v - plus };
    (plus, minus)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenPair {
    pub plus: Complex64,
    pub minus: Complex64,
    /// Set when `det X` is not a positive real, so `√det` used the principal
    /// branch of a complex number.
    pub complex_branch: bool,
}

/// `λ± = √(det X) ξ±(tr X / (2√(det X)))`.
pub fn eigen_pm(x: &Mat2) -> Result<EigenPair> {
    let d = x.discr();
    if d.norm() < DEGENERATE_DISCR {
        return Err(Error::DegenerateSpectrum { discr: d.norm() });
    }
    let det = x.det();
    let sd = det.sqrt();
    let (xp, xm) = xi_pm(x.trace() / (2.0 * sd));
    Ok(EigenPair {
        plus: sd * xp,
        minus: sd * xm,
        complex_branch: det.im != 0.0 || det.re <= 0.0,
    })
}

/// `X = C D C⁻¹` with `D = diag(λ⁺, λ⁻)` and eigenvector columns of `C`
/// normalized to first entry 1.
pub fn diagonalize(x: &Mat2, delta: f64) -> Result<(Mat2, Mat2)> {
    if x.a12.norm() <= delta {
        return Err(Error::Pivot {
            value: x.a12.norm(),
            delta,
        });
    }
    let d = x.discr().norm();
    if d <= delta {
        return Err(Error::DegenerateSpectrum { discr: d });
    }
    let e = eigen_pm(x)?;
    let c = Mat2::new(
        Complex64::new(1.0, 0.0),
        Complex64::new(1.0, 0.0),
        (e.plus - x.a11) / x.a12,
        (e.minus - x.a11) / x.a12,
    );
    Ok((c, Mat2::diag(e.plus, e.minus)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Case {
    I,
    IIa,
    IIb,
    III,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::I => "I",
            Case::IIa => "IIa",
            Case::IIb => "IIb",
            Case::III => "III",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseLabel {
    pub case: Case,
    pub trace_value: f64,
    /// `|2 − |tr||`.
    pub distance_to_boundary: f64,
    /// Set for IIa/IIb, which are only decided up to the collar width.
    pub marginal: bool,
}

/// Classifies `𝔗(ω; 0)` by its trace, with a collar of half-width `eps_case`
/// around `|tr| = 2`.
pub fn classify_matrix(m: &Mat2, eps_case: f64) -> CaseLabel {
    let tr = m.trace().re;
    let dist = (2.0 - tr.abs()).abs();
    let case = if tr.abs() < 2.0 - eps_case {
        Case::I
    } else if tr.abs() > 2.0 + eps_case {
        Case::III
    } else {
        let sign = tr.signum();
        let id = Mat2::IDENTITY.scale(Complex64::new(sign, 0.0));
        if m.max_abs_diff(&id) < eps_case {
            Case::IIa
        } else {
            Case::IIb
        }
    };
    CaseLabel {
        case,
        trace_value: tr,
        distance_to_boundary: dist,
        marginal: matches!(case, Case::IIa | Case::IIb),
    }
}

pub fn classify(params: &SLParams, frame: Frame, eps_case: f64, tol: f64) -> Result<CaseLabel> {
    if !(eps_case > 0.0) {
        return Err(Error::InvalidArgument("eps_case must be positive".into()));
    }
    let m = monodromy(params, Complex64::new(0.0, 0.0), frame, tol)?;
    Ok(classify_matrix(&m, eps_case))
}

/// `(tr 𝔗(ω; λ), ∂_λ tr 𝔗(ω; λ))` at real `λ`.
pub fn trace_with_derivative(params: &SLParams, lambda: f64, tol: f64) -> Result<(f64, f64)> {
    let (m, dm) = monodromy_with_dz(params, lambda.into(), Frame::PDPrime, tol)?;
    Ok((m.trace().re, dm.trace().re))
}

/// One open band `(lower, upper)`; the clipped flags mark ends cut off by
/// the scan range rather than located by bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
    pub lower_clipped: bool,
    pub upper_clipped: bool,
}

impl Band {
    pub fn contains(&self, x: f64) -> bool {
        self.lower < x && x < self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandList {
    pub intervals: Vec<Band>,
    pub resolution: f64,
    pub edge_tol: f64,
}

impl BandList {
    /// Band edges located inside the scan range.
    pub fn edges(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for b in &self.intervals {
            if !b.lower_clipped {
                out.push(b.lower);
            }
            if !b.upper_clipped {
                out.push(b.upper);
            }
        }
        out.dedup();
        out
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|b| b.contains(x))
    }
}

#[derive(Clone, Copy)]
struct Sample {
    x: f64,
    /// `tr² − 4`, negative inside bands.
    f: f64,
    /// `∂_λ (tr² − 4)`.
    df: f64,
}

fn sample(params: &SLParams, x: f64, tol: f64) -> Result<Sample> {
    let (g, dg) = trace_with_derivative(params, x, tol)?;
    Ok(Sample {
        x,
        f: g * g - 4.0,
        df: 2.0 * g * dg,
    })
}

/// Bisects `[a, b]` on the sign of `key` until the bracket is below `xtol`.
fn bisect<F: Fn(f64) -> Result<f64>>(key: F, mut a: f64, mut b: f64, xtol: f64) -> Result<f64> {
    let mut ka = key(a)?;
    while b - a > xtol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let km = key(m)?;
        if (km < 0.0) == (ka < 0.0) {
            a = m;
            ka = km;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Bisects a band edge until the bracket is below `xtol` and `|tr² − 4|`
/// is below `4 xtol`, which bounds `||tr| − 2|` by `xtol`.
fn bisect_edge<F: Fn(f64) -> Result<f64>>(f: F, mut a: f64, mut b: f64, xtol: f64) -> Result<f64> {
    let mut fa = f(a)?;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            return Ok(m);
        }
        let fm = f(m)?;
        if b - a <= xtol && fm.abs() <= 4.0 * xtol {
            return Ok(m);
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Values of `tr² − 4` within this of zero at a local maximum count as
/// touching bands.
const TOUCH_TOL: f64 = 1e-8;

/// Extracts the bands `{λ : |tr 𝔗(ω; λ)| < 2}` of the periodic limit inside
/// `[lo, hi]`.
///
/// Sign changes of `tr² − 4` on the scan grid are bisected to `edge_tol`.
/// Extrema of `tr² − 4` between grid points are located from the sign of
/// its derivative, which catches touching bands and gaps or bands narrower
/// than the grid.
pub fn bands(params: &SLParams, lo: f64, hi: f64, scan_step: f64, edge_tol: f64) -> Result<BandList> {
    bands_with_tol(params, lo, hi, scan_step, edge_tol, 1e-12)
}

pub fn bands_with_tol(params: &SLParams, lo: f64, hi: f64, scan_step: f64, edge_tol: f64, tol: f64) -> Result<BandList> {
    if !(lo < hi) || !(scan_step > 0.0) || !(edge_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bands needs lo < hi, scan_step > 0 and edge_tol > 0 (got [{lo}, {hi}], {scan_step}, {edge_tol})"
        )));
    }
    let n = ((hi - lo) / scan_step).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=n).map(|i| if i == n { hi } else { lo + i as f64 * (hi - lo) / n as f64 }).collect();
    let samples: Vec<Sample> = grid.par_iter().map(|&x| sample(params, x, tol)).collect::<Result<_>>()?;
    let fkey = |x: f64| sample(params, x, tol).map(|s| s.f);
    let dkey = |x: f64| sample(params, x, tol).map(|s| -s.df);

    // Ordered list of interior edges: (position, band lies above).
    let mut edges: Vec<(f64, bool)> = Vec::new();
    for w in samples.windows(2) {
        let (a, b) = (w[0], w[1]);
        let in_a = a.f < 0.0;
        let in_b = b.f < 0.0;
        if in_a != in_b {
            edges.push((bisect_edge(fkey, a.x, b.x, edge_tol)?, in_b));
            continue;
        }
        if in_a && a.df > 0.0 && b.df < 0.0 {
            // Interior maximum inside a band: touching point or hidden gap.
            let xm = bisect(dkey, a.x, b.x, edge_tol * 1e-2)?;
            let fm = fkey(xm)?;
            if fm.abs() <= TOUCH_TOL {
                edges.push((xm, false));
                edges.push((xm, true));
            } else if fm > 0.0 {
                edges.push((bisect_edge(fkey, a.x, xm, edge_tol)?, false));
                edges.push((bisect_edge(fkey, xm, b.x, edge_tol)?, true));
            }
        } else if !in_a && a.df < 0.0 && b.df > 0.0 {
            // Interior minimum inside a gap: possibly a hidden band.
            let xm = bisect(|x| dkey(x).map(|v| -v), a.x, b.x, edge_tol * 1e-2)?;
            let fm = fkey(xm)?;
            if fm < -TOUCH_TOL {
                edges.push((bisect_edge(fkey, a.x, xm, edge_tol)?, true));
                edges.push((bisect_edge(fkey, xm, b.x, edge_tol)?, false));
            }
        }
    }

    let mut intervals = Vec::new();
    let mut open: Option<(f64, bool)> = if samples[0].f < 0.0 { Some((lo, true)) } else { None };
    for (x, starts) in edges {
        match (starts, open) {
            (true, None) => open = Some((x, false)),
            (false, Some((l, clipped))) => {
                if x > l {
                    intervals.push(Band {
                        lower: l,
                        upper: x,
                        lower_clipped: clipped,
                        upper_clipped: false,
                    });
                }
                open = None;
            }
            _ => {}
        }
    }
    if let Some((l, clipped)) = open {
        if hi > l {
            intervals.push(Band {
                lower: l,
                upper: hi,
                lower_clipped: clipped,
                upper_clipped: true,
            });
        }
    }
    Ok(BandList {
        intervals,
        resolution: (hi - lo) / n as f64,
        edge_tol,
    })
}

/// `(lo, hi, count)` sweep of one named family parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: String,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Sweep {
    pub fn points(&self) -> Vec<f64> {
        let n = self.count - 1;
        (0..self.count)
            .map(|i| {
                if i == n {
                    self.hi
                } else {
                    self.lo + (self.hi - self.lo) * i as f64 / n as f64
                }
            })
            .collect()
    }
}

fn trace_at(family: &str, param: &str, x: f64, fixed: &NamedValues, tol: f64) -> Result<f64> {
    let mut vals = fixed.clone();
    vals.insert(param.to_string(), x);
    let params = make_family(family, &vals)?;
    Ok(monodromy(&params, Complex64::new(0.0, 0.0), Frame::PDPrime, tol)?.trace().re)
}

/// `tr 𝔗(ω; 0)` along a parameter sweep; points are independent and run in
/// parallel. Failed points yield NaN.
pub fn trace_scan(family: &str, sweep: &Sweep, fixed: &NamedValues, tol: f64) -> Result<Vec<(f64, f64)>> {
    if sweep.count < 2 {
        return Err(Error::InvalidArgument("sweep needs at least 2 points".into()));
    }
    make_family(family, &{
        let mut v = fixed.clone();
        v.insert(sweep.param.clone(), sweep.lo);
        v
    })?;
    Ok(sweep
        .points()
        .into_par_iter()
        .map(|x| (x, trace_at(family, &sweep.param, x, fixed, tol).unwrap_or(f64::NAN)))
        .collect())
}

/// Parameter values where a trace scan crosses `target`, refined by
/// bisection to `xtol`.
pub fn trace_crossings(
    family: &str,
    sweep: &Sweep,
    fixed: &NamedValues,
    target: f64,
    xtol: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let series = trace_scan(family, sweep, fixed, tol)?;
    let brackets: Vec<(f64, f64)> = series
        .windows(2)
        .filter(|w| w[0].1.is_finite() && w[1].1.is_finite() && ((w[0].1 - target) < 0.0) != ((w[1].1 - target) < 0.0))
        .map(|w| (w[0].0, w[1].0))
        .collect();
    brackets
        .into_par_iter()
        .map(|(a, b)| bisect(|x| trace_at(family, &sweep.param, x, fixed, tol).map(|t| t - target), a, b, xtol))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{constant_q_family, free_family, make_family, power_law_family, values};
    use crate::transfer::monodromy_trace;
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn discr_examples() {
        assert_eq!(discr(&Mat2::IDENTITY).re, 0.0);
        assert!((discr(&Mat2::real(2.0, 1.0, 0.0, 0.5)).re - 2.25).abs() < 1e-15);
        assert_eq!(discr(&Mat2::real(0.0, -1.0, 1.0, 0.0)).re, -4.0);
    }

    #[test]
    fn xi_examples() {
        let (p, m) = xi_pm(cx(0.0, 0.0));
        assert!((p - cx(0.0, 1.0)).norm() < 1e-15 && (m - cx(0.0, -1.0)).norm() < 1e-15);
        let (p, m) = xi_pm(cx(2.0, 0.0));
        assert!((p.re - (2.0 + 3f64.sqrt())).abs() < 1e-14 && (m.re - (2.0 - 3f64.sqrt())).abs() < 1e-14);
        let (p, m) = xi_pm(cx(0.385, 0.0));
        assert!((p - cx(0.385, 0.922_916_572_610_980_9)).norm() < 1e-12);
        assert!((m - p.conj()).norm() < 1e-15);
        // Negative zero imaginary part still gives the upper limit.
        let (p, _) = xi_pm(cx(0.2, -0.0));
        assert!(p.im > 0.0);
    }

    #[test]
    fn eigen_examples() {
        let e = eigen_pm(&Mat2::real(0.0, 1.0, -1.0, 0.0)).unwrap();
        assert!((e.plus - cx(0.0, 1.0)).norm() < 1e-15 && (e.minus - cx(0.0, -1.0)).norm() < 1e-15);
        let e = eigen_pm(&Mat2::real(3.0, 1.0, -1.0, 0.0)).unwrap();
        assert!((e.plus.re - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-14);
        assert!((e.minus.re - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-14);
        assert!(!e.complex_branch);
        assert!(matches!(eigen_pm(&Mat2::IDENTITY), Err(Error::DegenerateSpectrum { .. })));
    }

    #[test]
    fn eigen_of_shift_matrix() {
        let p = power_law_family(0.5, 0.0).unwrap();
        let x = crate::transfer::shift_matrix_xn(&p, 50, 0.0, cx(0.0, 0.0), Frame::DPrime, 1e-11).unwrap();
        let e = eigen_pm(&x).unwrap();
        let om = p.period();
        let expect = (p.p(50.0 * om) / p.p(51.0 * om)).sqrt();
        assert!((e.plus.norm() - expect).abs() < 1e-9);
        assert!(e.plus.im > 0.0);
        assert!((e.minus - e.plus.conj()).norm() < 1e-12);
    }

    #[test]
    fn diagonalize_examples() {
        let (c, d) = diagonalize(&Mat2::real(0.0, 1.0, -1.0, 0.0), DEFAULT_DELTA).unwrap();
        assert!(c.max_abs_diff(&Mat2::new(cx(1.0, 0.0), cx(1.0, 0.0), cx(0.0, 1.0), cx(0.0, -1.0))) < 1e-15);
        assert!(d.max_abs_diff(&Mat2::diag(cx(0.0, 1.0), cx(0.0, -1.0))) < 1e-15);
        let x = Mat2::real(1.0, 1.0, 0.0, 2.0);
        let (c, d) = diagonalize(&x, DEFAULT_DELTA).unwrap();
        assert!(d.max_abs_diff(&Mat2::diag(cx(2.0, 0.0), cx(1.0, 0.0))) < 1e-14);
        assert!((c * d * c.inverse().unwrap()).max_abs_diff(&x) < 1e-14);
        assert!(matches!(diagonalize(&Mat2::real(1.0, 0.0, 1.0, 2.0), 1e-3), Err(Error::Pivot { .. })));
    }

    #[test]
    fn classify_examples() {
        let q0 = constant_q_family(0.0, PI).unwrap();
        let l = classify(&q0, Frame::DPrime, EPS_CASE, 1e-12).unwrap();
        assert_eq!(l.case, Case::IIb);
        assert!(l.marginal);
        let qm = constant_q_family(-1.0, PI).unwrap();
        assert_eq!(classify(&qm, Frame::DPrime, EPS_CASE, 1e-12).unwrap().case, Case::IIa);
        let e1 = power_law_family(0.5, 0.0).unwrap();
        let l = classify(&e1, Frame::DPrime, EPS_CASE, 1e-10).unwrap();
        assert_eq!(l.case, Case::I);
        assert!((l.trace_value - 0.77).abs() < 0.01);
        let e3 = power_law_family(0.5, 1.0).unwrap();
        assert_eq!(classify(&e3, Frame::DPrime, EPS_CASE, 1e-10).unwrap().case, Case::III);
    }

    #[test]
    fn free_bands() {
        let f = free_family(PI).unwrap();
        let b = bands(&f, -1.0, 10.0, 11.0 / 2000.0, 1e-9).unwrap();
        let expect = [(0.0, 1.0), (1.0, 4.0), (4.0, 9.0)];
        assert_eq!(b.intervals.len(), 4, "{:?}", b.intervals);
        for (band, (l, u)) in b.intervals.iter().zip(expect) {
            assert!((band.lower - l).abs() < 1e-8 && (band.upper - u).abs() < 1e-8, "{band:?}");
        }
        let last = b.intervals[3];
        assert!((last.lower - 9.0).abs() < 1e-8 && last.upper == 10.0 && last.upper_clipped);
        for e in b.edges() {
            let tr = monodromy_trace(&f, e, 1e-12).unwrap();
            assert!((tr.abs() - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn shifted_bands() {
        let f = constant_q_family(5.0, PI).unwrap();
        let b = bands(&f, 0.0, 10.0, 0.005, 1e-9).unwrap();
        let lows: Vec<f64> = b.intervals.iter().map(|x| x.lower).collect();
        assert_eq!(lows.len(), 3);
        for (l, e) in lows.iter().zip([5.0, 6.0, 9.0]) {
            assert!((l - e).abs() < 1e-8);
        }
        assert!(b.intervals[2].upper_clipped && b.intervals[2].upper == 10.0);
    }

    #[test]
    fn example4_band_contains_zero() {
        let p = power_law_family(0.5, 0.0).unwrap();
        let b = bands(&p, -1.0, 2.0, 3.0 / 2000.0, 1e-9).unwrap();
        assert!(b.contains(0.0));
        for band in &b.intervals {
            let mid = 0.5 * (band.lower + band.upper);
            let m = monodromy(&p, mid.into(), Frame::PDPrime, 1e-12).unwrap();
            assert!(m.discr().re < 0.0);
        }
    }

    #[test]
    fn hidden_gap_detected() {
        // A narrow gap whose width is well below the scan step.
        let p = make_family("example2", &values(&[("kappa", 0.5), ("c", 0.0), ("omega", TAU)])).unwrap();
        let fine = bands(&p, -1.0, 3.0, 0.0005, 1e-10).unwrap();
        let coarse = bands(&p, -1.0, 3.0, 0.05, 1e-10).unwrap();
        for band in fine.intervals.iter().filter(|b| b.width() > 0.1) {
            assert!(
                coarse.intervals.iter().any(|c| (c.lower - band.lower).abs() < 1e-8 && (c.upper - band.upper).abs() < 1e-8),
                "missing {band:?} in {:?}",
                coarse.intervals
            );
        }
    }

    #[test]
    fn bands_reject_bad_input() {
        let f = free_family(1.0).unwrap();
        assert!(bands(&f, 1.0, 0.0, 0.1, 1e-9).is_err());
        assert!(bands(&f, 0.0, 1.0, 0.0, 1e-9).is_err());
    }

    #[test]
    fn classification_matches_bands() {
        let fams = [
            free_family(1.0).unwrap(),
            constant_q_family(-1.0, 1.0).unwrap(),
            constant_q_family(1.0, 1.0).unwrap(),
            power_law_family(0.5, 0.0).unwrap(),
            power_law_family(0.5, 1.0).unwrap(),
            make_family("example5", &values(&[("a", 0.3), ("b", 0.7)])).unwrap(),
            make_family("appendix-asymptotic", &values(&[])).unwrap(),
        ];
        for f in &fams {
            let label = classify(f, Frame::PDPrime, EPS_CASE, 1e-12).unwrap();
            let b = bands(f, -2.0, 2.0, 0.004, 1e-10).unwrap();
            let inside = b.intervals.iter().any(|x| x.lower < -1e-6 && x.upper > 1e-6 && x.contains(0.0));
            assert_eq!(label.case == Case::I, inside, "{:?}: {label:?} {:?}", f.family(), b.intervals);
        }
    }

    #[test]
    fn trace_scan_examples() {
        let fixed = values(&[("kappa", 0.5), ("omega", TAU)]);
        let sweep = Sweep {
            param: "c".into(),
            lo: -0.75,
            hi: 20.0,
            count: 84,
        };
        let s = trace_scan("example4", &sweep, &fixed, 1e-10).unwrap();
        assert_eq!(s.len(), 84);
        let at0 = s.iter().find(|(c, _)| c.abs() < 1e-12).unwrap();
        assert!((at0.1 - 0.77).abs() < 0.01);
        let at1 = s.iter().find(|(c, _)| (c - 1.0).abs() < 1e-12).unwrap();
        assert!((at1.1 + 2.61).abs() < 0.01);

        let free = trace_scan(
            "free",
            &Sweep {
                param: "omega".into(),
                lo: 1.0,
                hi: 3.0,
                count: 11,
            },
            &values(&[]),
            1e-12,
        )
        .unwrap();
        assert!(free.iter().all(|(_, t)| (t - 2.0).abs() < 1e-10));
    }

    #[test]
    fn trace_scan_failed_points_are_nan() {
        let sweep = Sweep {
            param: "kappa".into(),
            lo: 0.5,
            hi: 1.5,
            count: 3,
        };
        let s = trace_scan("example2", &sweep, &values(&[("c", 0.0), ("omega", TAU)]), 1e-10).unwrap();
        assert!(s[0].1.is_finite() && s[1].1.is_finite() && s[2].1.is_nan());
    }

    #[test]
    fn critical_kappa() {
        let sweep = Sweep {
            param: "kappa".into(),
            lo: 0.05,
            hi: 0.95,
            count: 46,
        };
        let roots = trace_crossings("example2", &sweep, &values(&[("c", 0.0), ("omega", TAU)]), -2.0, 1e-8, 1e-10).unwrap();
        assert_eq!(roots.len(), 1, "{roots:?}");
        let k = roots[0];
        // Independent DOP853 reference: 0.326188.
        assert!((k - 0.326188).abs() < 1e-5, "{k}");
        assert!((2.0 * k / (1.0 - k) - 0.968).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn xi_identities(re in -5.0f64..5.0, im in -5.0f64..5.0) {
            let v = cx(re, im);
            let (p, m) = xi_pm(v);
            prop_assert!((p * m - 1.0).norm() < 1e-12 * (1.0 + p.norm()));
            prop_assert!((p + m - 2.0 * v).norm() < 1e-12 * (1.0 + v.norm()));
        }

        #[test]
        fn xi_preserves_half_planes(re in -5.0f64..5.0, im in 1e-6f64..5.0) {
            prop_assert!(xi_pm(cx(re, im)).0.im > 0.0);
            prop_assert!(xi_pm(cx(re, -im)).0.im < 0.0);
        }

        #[test]
        fn eigen_consistency(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0, im in -1.0f64..1.0) {
            let x = Mat2::new(cx(a, im), cx(b, 0.0), cx(c, 0.0), cx(d, -im));
            prop_assume!(x.discr().norm() > 1e-6);
            let e = eigen_pm(&x).unwrap();
            let scale = 1.0 + x.max_abs().powi(2);
            prop_assert!((e.plus + e.minus - x.trace()).norm() < 1e-10 * scale);
            prop_assert!((e.plus * e.minus - x.det()).norm() < 1e-10 * scale);
        }

        #[test]
        fn elliptic_reconstruction(a in -2.0f64..2.0, b in 0.01f64..3.0, d in -2.0f64..2.0, s in -1.0f64..1.0) {
            // Real matrices with negative discriminant: c chosen so (a−d)² + 4bc < 0.
            let c = -((a - d).powi(2) + 0.05) / (4.0 * b) - s.abs();
            let sign = if s < 0.0 { -1.0 } else { 1.0 };
            let x = Mat2::real(a, sign * b, sign * c, d);
            let (cm, dm) = diagonalize(&x, 1e-3).unwrap();
            let back = cm * dm * cm.inverse().unwrap();
            prop_assert!(back.max_abs_diff(&x) < 1e-10 * x.max_abs());
            let e = eigen_pm(&x).unwrap();
            prop_assert!(e.plus.im > 0.0);
            prop_assert!((e.minus - e.plus.conj()).norm() < 1e-12 * x.max_abs());
        }
    }
}
