//! Sturm–Liouville coefficient families.
//!
//! A parameter set carries the coefficients `(p, p', q, w)` of
//! `τu = (−(pu′)′ + qu)/w` on the half-line, the period `ω`, and the
//! `ω`-periodic limit coefficients the monodromy matrix is built from.
//!
//! Builtin families:
//!
//! | name | coefficients | kind |
//! |------|--------------|------|
//! | `free` | `p = 1, q = 0, w = 1` | exactly periodic |
//! | `constant-q` | `p = 1, q = q0, w = 1` | exactly periodic |
//! | `example2` (alias `example4`) | `p = c_κ²(1+t)^{2κ}`, `q = (1+t)^{2κ} 𝔮 + q_cor`, `w = 1` | periodically modulated |
//! | `example5` | `p` oscillating between `t^a` and `t^b`, `q = p 𝔮`, `w = 1` | periodically modulated |
//! | `appendix-asymptotic` | `p = 1, q = 1, w = 2 + sin(log log t)/log t` | asymptotically periodic |
//!
//! In the modulated families `𝔮(t) = −c + sin(2πt/ω)`, which is `−c + sin t`
//! for the default `ω = 2π`.

use std::collections::BTreeMap;
use std::f64::consts::{E, TAU};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad;

/// Default relative tolerance for coefficient quadratures.
pub const QUAD_TOL: f64 = 1e-10;

type Eval = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    Smooth,
    PiecewiseSmooth,
}

/// A real coefficient `t ↦ f(t)` on `[0, ∞)` together with the points where
/// it fails to be smooth.
#[derive(Clone)]
pub struct CoefficientFn {
    eval: Eval,
    /// Kinks repeating with the period, as offsets in `[0, ω)`.
    periodic_breaks: Vec<f64>,
    /// One-off kinks at absolute times.
    isolated_breaks: Vec<f64>,
    smoothness: Smoothness,
}

impl fmt::Debug for CoefficientFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientFn")
            .field("periodic_breaks", &self.periodic_breaks)
            .field("isolated_breaks", &self.isolated_breaks)
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

impl CoefficientFn {
    pub fn smooth(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        CoefficientFn {
            eval: Arc::new(f),
            periodic_breaks: Vec::new(),
            isolated_breaks: Vec::new(),
            smoothness: Smoothness::Smooth,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::smooth(move |_| c)
    }

    /// Marks kinks at the given absolute times.
    pub fn with_isolated_breaks(mut self, mut breaks: Vec<f64>) -> Self {
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        self.isolated_breaks = breaks;
        self.smoothness = Smoothness::PiecewiseSmooth;
        self
    }

    /// Marks kinks repeating every period; offsets must lie in `[0, period)`
    /// and be strictly increasing.
    pub fn with_periodic_breaks(mut self, breaks: Vec<f64>, period: f64) -> Result<Self> {
        let increasing = breaks.windows(2).all(|w| w[0] < w[1]);
        if !increasing || breaks.iter().any(|&b| !(0.0..period).contains(&b)) {
            return Err(Error::InvalidArgument(
                "periodic breakpoints must be strictly increasing in [0, period)".into(),
            ));
        }
        self.periodic_breaks = breaks;
        self.smoothness = Smoothness::PiecewiseSmooth;
        Ok(self)
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn periodic_breaks(&self) -> &[f64] {
        &self.periodic_breaks
    }

    fn push_breaks(&self, t0: f64, t1: f64, period: f64, out: &mut Vec<f64>) {
        out.extend(self.isolated_breaks.iter().copied().filter(|&b| b > t0 && b < t1));
        if !self.periodic_breaks.is_empty() {
            let first = (t0 / period).floor() as i64;
            let last = (t1 / period).ceil() as i64;
            for n in first..=last {
                for &b in &self.periodic_breaks {
                    let x = n as f64 * period + b;
                    if x > t0 && x < t1 {
                        out.push(x);
                    }
                }
            }
        }
    }
}

/// The coefficient quadruple `(p, p', q, w)`.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub p: CoefficientFn,
    pub p_prime: CoefficientFn,
    pub q: CoefficientFn,
    pub w: CoefficientFn,
}

impl Coefficients {
    pub fn constant(p: f64, q: f64, w: f64) -> Self {
        Coefficients {
            p: CoefficientFn::constant(p),
            p_prime: CoefficientFn::constant(0.0),
            q: CoefficientFn::constant(q),
            w: CoefficientFn::constant(w),
        }
    }

    /// All kinks of the four coefficients strictly inside `(t0, t1)`.
    pub fn breakpoints(&self, t0: f64, t1: f64, period: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for c in [&self.p, &self.p_prime, &self.q, &self.w] {
            c.push_breaks(t0, t1, period, &mut out);
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModulationKind {
    ExactlyPeriodic,
    PeriodicallyModulated,
    AsymptoticallyPeriodic,
}

impl ModulationKind {
    /// The modulated frame normalizes by `∫ w/p`; the others by `∫ w`.
    pub fn uses_weight_over_p(self) -> bool {
        self == ModulationKind::PeriodicallyModulated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Free,
    ConstantQ,
    Example2,
    Example5,
    AppendixAsymptotic,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Free => "free",
            Family::ConstantQ => "constant-q",
            Family::Example2 => "example2",
            Family::Example5 => "example5",
            Family::AppendixAsymptotic => "appendix-asymptotic",
        }
    }

    pub const ALL: [Family; 5] = [
        Family::Free,
        Family::ConstantQ,
        Family::Example2,
        Family::Example5,
        Family::AppendixAsymptotic,
    ];
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free" => Ok(Family::Free),
            "constant-q" => Ok(Family::ConstantQ),
            "example2" | "example4" => Ok(Family::Example2),
            "example5" => Ok(Family::Example5),
            "appendix-asymptotic" => Ok(Family::AppendixAsymptotic),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }
}

/// Named real parameters of a family (`kappa`, `c`, `omega`, `a`, `b`, `q0`).
pub type NamedValues = BTreeMap<String, f64>;

/// An immutable, evaluable Sturm–Liouville parameter set.
#[derive(Debug, Clone)]
pub struct SLParams {
    family: Option<Family>,
    values: NamedValues,
    coeffs: Coefficients,
    limit: Coefficients,
    period: f64,
    kind: ModulationKind,
}

impl SLParams {
    /// Assembles a custom parameter set.
    pub fn new(coeffs: Coefficients, limit: Coefficients, period: f64, kind: ModulationKind) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::OutOfRange {
                param: "omega".into(),
                value: period,
                reason: "period must be positive".into(),
            });
        }
        Ok(SLParams {
            family: None,
            values: NamedValues::new(),
            coeffs,
            limit,
            period,
            kind,
        })
    }

    pub fn family(&self) -> Option<Family> {
        self.family
    }

    /// The construction parameters with defaults filled in.
    pub fn values(&self) -> &NamedValues {
        &self.values
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn kind(&self) -> ModulationKind {
        self.kind
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    pub fn limit(&self) -> &Coefficients {
        &self.limit
    }

    #[inline]
    pub fn p(&self, t: f64) -> f64 {
        self.coeffs.p.eval(t)
    }

    #[inline]
    pub fn p_prime(&self, t: f64) -> f64 {
        self.coeffs.p_prime.eval(t)
    }

    #[inline]
    pub fn q(&self, t: f64) -> f64 {
        self.coeffs.q.eval(t)
    }

    #[inline]
    pub fn w(&self, t: f64) -> f64 {
        self.coeffs.w.eval(t)
    }

    /// The periodic limit viewed as an exactly periodic parameter set.
    pub fn periodic_limit(&self) -> SLParams {
        SLParams {
            family: self.family,
            values: self.values.clone(),
            coeffs: self.limit.clone(),
            limit: self.limit.clone(),
            period: self.period,
            kind: ModulationKind::ExactlyPeriodic,
        }
    }

    pub fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        self.coeffs.breakpoints(t0, t1, self.period)
    }

    /// Integrand of the normalization `ρ_L`: `w/p` for modulated families,
    /// `w` otherwise.
    pub fn rho_density(&self, t: f64) -> f64 {
        if self.kind.uses_weight_over_p() {
            self.w(t) / self.p(t)
        } else {
            self.w(t)
        }
    }

    /// `γ = ∫₀^ω 𝔴/𝔭` (modulated) or `∫₀^ω 𝔴` (otherwise).
    pub fn gamma(&self) -> Result<f64> {
        let lim = &self.limit;
        let modulated = self.kind.uses_weight_over_p();
        let breaks = lim.breakpoints(0.0, self.period, self.period);
        quad::integrate(
            |t| {
                if modulated {
                    lim.w.eval(t) / lim.p.eval(t)
                } else {
                    lim.w.eval(t)
                }
            },
            0.0,
            self.period,
            &breaks,
            QUAD_TOL,
            1e-14,
        )
    }
}

/// Which frame a boundary vector is normalized in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaFrame {
    /// `η = (u(0), u′(0))` with `|η₁|² + |p(0) η₂|² = 1`.
    Stilde,
    /// `η = (u(0), (pu′)(0))` on the unit circle.
    S1,
}

/// Boundary data at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryVector {
    pub eta1: f64,
    pub eta2: f64,
    pub frame: EtaFrame,
}

impl BoundaryVector {
    /// Checks the normalization of the declared frame to within `1e-12`.
    pub fn new(eta1: f64, eta2: f64, frame: EtaFrame, p0: f64) -> Result<Self> {
        let norm = match frame {
            EtaFrame::Stilde => eta1 * eta1 + (p0 * eta2).powi(2),
            EtaFrame::S1 => eta1 * eta1 + eta2 * eta2,
        };
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "boundary vector ({eta1}, {eta2}) is not normalized in the {frame:?} frame (norm² = {norm})"
            )));
        }
        Ok(BoundaryVector { eta1, eta2, frame })
    }

    /// Scales `(eta1, eta2)` onto the unit sphere of the frame.
    pub fn normalized(eta1: f64, eta2: f64, frame: EtaFrame, p0: f64) -> Result<Self> {
        let norm = match frame {
            EtaFrame::Stilde => (eta1 * eta1 + (p0 * eta2).powi(2)).sqrt(),
            EtaFrame::S1 => eta1.hypot(eta2),
        };
        if !(norm > 0.0) {
            return Err(Error::InvalidArgument("boundary vector must be non-zero".into()));
        }
        Ok(BoundaryVector {
            eta1: eta1 / norm,
            eta2: eta2 / norm,
            frame,
        })
    }

    /// `u(0) = 0`, `(pu′)(0) = 1`.
    pub fn dirichlet() -> Self {
        BoundaryVector {
            eta1: 0.0,
            eta2: 1.0,
            frame: EtaFrame::S1,
        }
    }

    /// `u(0) = 1`, `u′(0) = 0`.
    pub fn neumann() -> Self {
        BoundaryVector {
            eta1: 1.0,
            eta2: 0.0,
            frame: EtaFrame::S1,
        }
    }

    /// `(u(0), (pu′)(0))`.
    pub fn to_pd(&self, p0: f64) -> [f64; 2] {
        match self.frame {
            EtaFrame::S1 => [self.eta1, self.eta2],
            EtaFrame::Stilde => [self.eta1, p0 * self.eta2],
        }
    }

    /// `(u(0), u′(0))`.
    pub fn to_d(&self, p0: f64) -> [f64; 2] {
        match self.frame {
            EtaFrame::S1 => [self.eta1, self.eta2 / p0],
            EtaFrame::Stilde => [self.eta1, self.eta2],
        }
    }
}

fn require(family: Family, values: &NamedValues, key: &str) -> Result<f64> {
    values.get(key).copied().ok_or_else(|| Error::MissingParameter {
        family: family.name().into(),
        param: key.into(),
    })
}

fn check_known(family: Family, values: &NamedValues, allowed: &[&str]) -> Result<()> {
    for key in values.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "parameter `{key}` is not used by family `{}`",
                family.name()
            )));
        }
    }
    Ok(())
}

fn positive_omega(omega: f64) -> Result<f64> {
    if omega > 0.0 && omega.is_finite() {
        Ok(omega)
    } else {
        Err(Error::OutOfRange {
            param: "omega".into(),
            value: omega,
            reason: "must be positive".into(),
        })
    }
}

/// `c_κ` of the power-law family.
pub fn c_kappa(kappa: f64) -> f64 {
    if kappa < 1.0 {
        1.0 / (1.0 - kappa)
    } else {
        1.0
    }
}

/// The modulating periodic potential `𝔮(t) = −c + sin(2πt/ω)`.
fn sine_potential(c: f64, omega: f64) -> CoefficientFn {
    let k = TAU / omega;
    CoefficientFn::smooth(move |t| -c + (k * t.rem_euclid(omega)).sin())
}

/// Threshold past which the oscillating power law of `example5` is used.
pub fn example5_threshold() -> f64 {
    E.exp()
}

/// Builds one of the builtin families.
///
/// Required keys: `constant-q` needs `q0` and `omega`; `example2` needs
/// `kappa`, `c` and `omega`; `example5` needs `a` and `b`. Remaining keys
/// default to `omega = 1` (`free`, `appendix-asymptotic`), `omega = 2π`
/// (`example5`) and `c = 0` (`example5`).
pub fn make_family(name: &str, values: &NamedValues) -> Result<SLParams> {
    let family: Family = name.parse()?;
    make(family, values)
}

pub fn make(family: Family, values: &NamedValues) -> Result<SLParams> {
    let mut filled = values.clone();
    let (coeffs, limit, period, kind) = match family {
        Family::Free => {
            check_known(family, values, &["omega"])?;
            let omega = positive_omega(*filled.entry("omega".into()).or_insert(1.0))?;
            (
                Coefficients::constant(1.0, 0.0, 1.0),
                Coefficients::constant(1.0, 0.0, 1.0),
                omega,
                ModulationKind::ExactlyPeriodic,
            )
        }
        Family::ConstantQ => {
            check_known(family, values, &["q0", "omega"])?;
            let q0 = require(family, values, "q0")?;
            let omega = positive_omega(require(family, values, "omega")?)?;
            (
                Coefficients::constant(1.0, q0, 1.0),
                Coefficients::constant(1.0, q0, 1.0),
                omega,
                ModulationKind::ExactlyPeriodic,
            )
        }
        Family::Example2 => {
            check_known(family, values, &["kappa", "c", "omega"])?;
            let kappa = require(family, values, "kappa")?;
            let c = require(family, values, "c")?;
            let omega = positive_omega(require(family, values, "omega")?)?;
            if !(kappa > 0.0 && kappa <= 1.0) {
                return Err(Error::OutOfRange {
                    param: "kappa".into(),
                    value: kappa,
                    reason: "must lie in (0, 1]".into(),
                });
            }
            let (coeffs, limit) = power_law(kappa, c, omega);
            (coeffs, limit, omega, ModulationKind::PeriodicallyModulated)
        }
        Family::Example5 => {
            check_known(family, values, &["a", "b", "c", "omega"])?;
            let a = require(family, values, "a")?;
            let b = require(family, values, "b")?;
            let c = *filled.entry("c".into()).or_insert(0.0);
            let omega = positive_omega(*filled.entry("omega".into()).or_insert(TAU))?;
            if !(0.0 < a && a < b && b < 1.0) {
                return Err(Error::OutOfRange {
                    param: "a".into(),
                    value: a,
                    reason: format!("need 0 < a < b < 1, got a = {a}, b = {b}"),
                });
            }
            let (coeffs, limit) = oscillating_power(a, b, c, omega);
            (coeffs, limit, omega, ModulationKind::PeriodicallyModulated)
        }
        Family::AppendixAsymptotic => {
            check_known(family, values, &["omega"])?;
            let omega = positive_omega(*filled.entry("omega".into()).or_insert(1.0))?;
            let t0 = example5_threshold();
            let w = CoefficientFn::smooth(move |t| {
                if t > t0 {
                    let lt = t.ln();
                    2.0 + lt.ln().sin() / lt
                } else {
                    2.0
                }
            })
            .with_isolated_breaks(vec![t0]);
            let coeffs = Coefficients {
                p: CoefficientFn::constant(1.0),
                p_prime: CoefficientFn::constant(0.0),
                q: CoefficientFn::constant(1.0),
                w,
            };
            (
                coeffs,
                Coefficients::constant(1.0, 1.0, 2.0),
                omega,
                ModulationKind::AsymptoticallyPeriodic,
            )
        }
    };
    Ok(SLParams {
        family: Some(family),
        values: filled,
        coeffs,
        limit,
        period,
        kind,
    })
}

fn power_law(kappa: f64, c: f64, omega: f64) -> (Coefficients, Coefficients) {
    let ck2 = c_kappa(kappa).powi(2);
    let two_k = 2.0 * kappa;
    let frak_q = sine_potential(c, omega);
    let fq = frak_q.clone();
    let cor = if kappa < 1.0 {
        -ck2 / 4.0 * kappa * (3.0 * kappa - 2.0)
    } else {
        -ck2 / 4.0
    };
    let cor_exp = if kappa < 1.0 { two_k - 2.0 } else { 0.0 };
    let coeffs = Coefficients {
        p: CoefficientFn::smooth(move |t| ck2 * (1.0 + t).powf(two_k)),
        p_prime: CoefficientFn::smooth(move |t| ck2 * two_k * (1.0 + t).powf(two_k - 1.0)),
        q: CoefficientFn::smooth(move |t| (1.0 + t).powf(two_k) * fq.eval(t) + cor * (1.0 + t).powf(cor_exp)),
        w: CoefficientFn::constant(1.0),
    };
    let limit = Coefficients {
        p: CoefficientFn::constant(ck2),
        p_prime: CoefficientFn::constant(0.0),
        q: frak_q,
        w: CoefficientFn::constant(1.0),
    };
    (coeffs, limit)
}

/// `log p` and `(log p)′` of the oscillating power law for `t > e^e`.
fn osc_log_p(a: f64, b: f64, t: f64) -> (f64, f64) {
    let lt = t.ln();
    let llt = lt.ln();
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let log_p = lt * (mid + half * llt.sin());
    let dlog_p = (mid + half * (llt.sin() + llt.cos())) / t;
    (log_p, dlog_p)
}

/// Oscillating power law `p`, extended to `[0, e^e]`.
///
/// Below `T₀ = e^e` the coefficient is held at `P = p(T₀)` on `[0, T₀ − 1]`
/// and joined to the power law by the cubic Hermite ramp
/// `P + p′(T₀)(s³ − s²)`, `s = t − T₀ + 1`, which matches value and slope at
/// both ends. The ramp dips by at most `4p′(T₀)/27 < P`, so `p` stays positive.
fn oscillating_power(a: f64, b: f64, c: f64, omega: f64) -> (Coefficients, Coefficients) {
    let t0 = example5_threshold();
    let (lp0, dlp0) = osc_log_p(a, b, t0);
    let p_at = lp0.exp();
    let slope = p_at * dlp0;
    let p = move |t: f64| -> f64 {
        if t > t0 {
            osc_log_p(a, b, t).0.exp()
        } else if t > t0 - 1.0 {
            let s = t - t0 + 1.0;
            p_at + slope * (s * s * s - s * s)
        } else {
            p_at
        }
    };
    let dp = move |t: f64| -> f64 {
        if t > t0 {
            let (lp, dlp) = osc_log_p(a, b, t);
            lp.exp() * dlp
        } else if t > t0 - 1.0 {
            let s = t - t0 + 1.0;
            slope * (3.0 * s * s - 2.0 * s)
        } else {
            0.0
        }
    };
    let frak_q = sine_potential(c, omega);
    let fq = frak_q.clone();
    let breaks = vec![t0 - 1.0, t0];
    let coeffs = Coefficients {
        p: CoefficientFn::smooth(p).with_isolated_breaks(breaks.clone()),
        p_prime: CoefficientFn::smooth(dp).with_isolated_breaks(breaks.clone()),
        q: CoefficientFn::smooth(move |t| p(t) * fq.eval(t)).with_isolated_breaks(breaks),
        w: CoefficientFn::constant(1.0),
    };
    let limit = Coefficients {
        p: CoefficientFn::constant(1.0),
        p_prime: CoefficientFn::constant(0.0),
        q: frak_q,
        w: CoefficientFn::constant(1.0),
    };
    (coeffs, limit)
}

/// `ρ_L = ∫₀ᴸ w/p` (modulated) or `∫₀ᴸ w` (otherwise).
pub fn carleman_rho(params: &SLParams, l: f64, tol: f64) -> Result<f64> {
    if !(l > 0.0) {
        return Err(Error::InvalidArgument(format!("L must be positive, got {l}")));
    }
    rho_increment(params, 0.0, l, tol)
}

/// `ρ` over `[a, b]`, split into period-sized panels.
pub fn rho_increment(params: &SLParams, a: f64, b: f64, tol: f64) -> Result<f64> {
    let omega = params.period();
    let mut breaks = params.breakpoints(a, b);
    let first = (a / omega).ceil() as i64;
    let last = (b / omega).floor() as i64;
    breaks.extend((first..=last).map(|n| n as f64 * omega).filter(|&x| x > a && x < b));
    quad::integrate(|t| params.rho_density(t), a, b, &breaks, tol, 1e-15)
}

/// `ρ` at each point of an increasing schedule.
pub fn rho_schedule(params: &SLParams, schedule: &[f64], tol: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(schedule.len());
    let mut acc = 0.0;
    let mut prev = 0.0;
    for &l in schedule {
        if l < prev {
            return Err(Error::InvalidArgument("schedule must be increasing".into()));
        }
        acc += rho_increment(params, prev, l, tol)?;
        out.push(acc);
        prev = l;
    }
    Ok(out)
}

/// Which ratio the Stolz-class diagnostic inspects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StolzSelector {
    QOverP,
    WOverP,
    PPrimeOverP,
    Q,
    W,
    InvP,
}

impl StolzSelector {
    fn eval(self, params: &SLParams, t: f64) -> f64 {
        match self {
            StolzSelector::QOverP => params.q(t) / params.p(t),
            StolzSelector::WOverP => params.w(t) / params.p(t),
            StolzSelector::PPrimeOverP => params.p_prime(t) / params.p(t),
            StolzSelector::Q => params.q(t),
            StolzSelector::W => params.w(t),
            StolzSelector::InvP => 1.0 / params.p(t),
        }
    }
}

impl FromStr for StolzSelector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q/p" => Ok(StolzSelector::QOverP),
            "w/p" => Ok(StolzSelector::WOverP),
            "p'/p" => Ok(StolzSelector::PPrimeOverP),
            "q" => Ok(StolzSelector::Q),
            "w" => Ok(StolzSelector::W),
            "1/p" => Ok(StolzSelector::InvP),
            other => Err(Error::InvalidArgument(format!("unknown selector `{other}`"))),
        }
    }
}

/// Partial sums `Σ_{n=1}^{N} ∫₀^ω |f((n+1)ω + s) − f(nω + s)| ds` for
/// `N = 1..=n_max`. Bounded, slowly saturating sums indicate Stolz-class
/// membership; no verdict is drawn.
pub fn stolz_defect(params: &SLParams, selector: StolzSelector, n_max: usize) -> Result<Vec<f64>> {
    if n_max < 1 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let omega = params.period();
    let mut sums = Vec::with_capacity(n_max);
    let mut acc = 0.0;
    for n in 1..=n_max {
        let base = n as f64 * omega;
        let mut breaks: Vec<f64> = params.breakpoints(base, base + omega);
        breaks.extend(params.breakpoints(base + omega, base + 2.0 * omega).into_iter().map(|b| b - omega));
        let breaks: Vec<f64> = breaks.into_iter().map(|b| b - base).collect();
        let term = quad::integrate(
            |s| (selector.eval(params, base + omega + s) - selector.eval(params, base + s)).abs(),
            0.0,
            omega,
            &breaks,
            1e-8,
            1e-15,
        )?;
        acc += term;
        sums.push(acc);
    }
    Ok(sums)
}

/// The three defects of the modulation condition on period `n`:
/// `∫₀^ω w_n/p_n`, `∫₀^ω |q_n/p_n − 𝔮/𝔭|` and `∫₀^ω |p′_n/p_n − 𝔭′/𝔭|`.
pub fn modulation_defects(params: &SLParams, n: usize) -> Result<[f64; 3]> {
    let omega = params.period();
    let base = n as f64 * omega;
    let lim = params.limit();
    let breaks: Vec<f64> = params.breakpoints(base, base + omega).into_iter().map(|b| b - base).collect();
    let w_over_p = quad::integrate(|s| params.w(base + s) / params.p(base + s), 0.0, omega, &breaks, 1e-10, 1e-15)?;
    let q_dev = quad::integrate(
        |s| (params.q(base + s) / params.p(base + s) - lim.q.eval(s) / lim.p.eval(s)).abs(),
        0.0,
        omega,
        &breaks,
        1e-8,
        1e-15,
    )?;
    let p_dev = quad::integrate(
        |s| (params.p_prime(base + s) / params.p(base + s) - lim.p_prime.eval(s) / lim.p.eval(s)).abs(),
        0.0,
        omega,
        &breaks,
        1e-8,
        1e-15,
    )?;
    Ok([w_over_p, q_dev, p_dev])
}

/// Potential `V(x)` of the Schrödinger operator unitarily equivalent to the
/// power-law family under the Liouville transformation.
pub fn liouville_potential(params: &SLParams, x: f64) -> Result<f64> {
    if params.family() != Some(Family::Example2) {
        return Err(Error::WrongFamily(
            params.family().map_or("custom".to_string(), |f| f.name().to_string()),
        ));
    }
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!("x must be non-negative, got {x}")));
    }
    let kappa = params.value("kappa").expect("example2 stores kappa");
    let t = if kappa < 1.0 {
        (1.0 + x).powf(1.0 / (1.0 - kappa)) - 1.0
    } else {
        x.exp() - 1.0
    };
    Ok((1.0 + t).powf(2.0 * kappa) * params.limit().q.eval(t))
}

/// Convenience for building a [`NamedValues`] map.
pub fn values(pairs: &[(&str, f64)]) -> NamedValues {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// `example2` with the default `ω = 2π`.
pub fn power_law_family(kappa: f64, c: f64) -> Result<SLParams> {
    make(Family::Example2, &values(&[("kappa", kappa), ("c", c), ("omega", TAU)]))
}

/// `free` with period `omega`.
pub fn free_family(omega: f64) -> Result<SLParams> {
    make(Family::Free, &values(&[("omega", omega)]))
}

/// `constant-q` with potential `q0` and period `omega`.
pub fn constant_q_family(q0: f64, omega: f64) -> Result<SLParams> {
    make(Family::ConstantQ, &values(&[("q0", q0), ("omega", omega)]))
}
