//! Run configuration: a strict TOML document with a top-level `command`, a
//! `[params]` family block, an optional `[boundary]` block and one section
//! per command.
//!
//! ```toml
//! command = "trace-scan"
//!
//! [params]
//! family = "example2"
//! kappa = 0.5
//!
//! [sweep]
//! param = "c"
//! lo = -0.75
//! hi = 20.0
//! count = 401
//! ```

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Deserialize;
use slmod::params::{make_family, EtaFrame, Family, NamedValues};
use slmod::{BoundaryVector, Error as CoreError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError { line: Some(l), message } => write!(f, "line {l}: {message}"),
            ConfigError { line: None, message } => f.write_str(message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Classify,
    TraceScan,
    Bands,
    Turan,
    Phi,
    Density,
    Dos,
    Eigcount,
    Cauchy,
    Example1Check,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::Classify,
        Command::TraceScan,
        Command::Bands,
        Command::Turan,
        Command::Phi,
        Command::Density,
        Command::Dos,
        Command::Eigcount,
        Command::Cauchy,
        Command::Example1Check,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::TraceScan => "trace-scan",
            Command::Bands => "bands",
            Command::Turan => "turan",
            Command::Phi => "phi",
            Command::Density => "density",
            Command::Dos => "dos",
            Command::Eigcount => "eigcount",
            Command::Cauchy => "cauchy",
            Command::Example1Check => "example1-check",
        }
    }

    /// Section holding the command's options.
    fn section(self) -> &'static str {
        match self {
            Command::TraceScan => "sweep",
            Command::Example1Check => "example1",
            other => other.name(),
        }
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

/// A number or one of `pi`, `k*pi`, `pi/k`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Num {
    F(f64),
    I(i64),
    S(String),
}

impl Num {
    fn value(&self) -> Result<f64, String> {
        match self {
            Num::F(x) => Ok(*x),
            Num::I(i) => Ok(*i as f64),
            Num::S(s) => parse_pi_expr(s).ok_or_else(|| format!("cannot read `{s}` as a number")),
        }
    }
}

fn parse_pi_expr(s: &str) -> Option<f64> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if s == "pi" {
        return Some(PI);
    }
    if let Some(k) = s.strip_suffix("*pi") {
        return k.parse::<f64>().ok().map(|k| k * PI);
    }
    if let Some(k) = s.strip_prefix("pi/") {
        return k.parse::<f64>().ok().filter(|k| *k != 0.0).map(|k| PI / k);
    }
    s.parse().ok()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: String,
    tol: Option<f64>,
    plot: Option<bool>,
    out: Option<String>,
    jobs: Option<usize>,
    params: RawParams,
    boundary: Option<RawBoundary>,
    classify: Option<RawClassify>,
    sweep: Option<RawSweep>,
    bands: Option<RawBands>,
    turan: Option<RawTuran>,
    phi: Option<RawPhi>,
    density: Option<RawDensity>,
    dos: Option<RawDos>,
    eigcount: Option<RawEigcount>,
    cauchy: Option<RawCauchy>,
    example1: Option<RawExample1>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    family: String,
    kappa: Option<Num>,
    c: Option<Num>,
    omega: Option<Num>,
    a: Option<Num>,
    b: Option<Num>,
    q0: Option<Num>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    eta1: Option<f64>,
    eta2: Option<f64>,
    frame: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClassify {
    eps_case: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    param: Option<String>,
    lo: Option<f64>,
    hi: Option<f64>,
    count: Option<usize>,
    target: Option<f64>,
    xtol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBands {
    lo: Option<f64>,
    hi: Option<f64>,
    step: Option<f64>,
    edge_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTuran {
    t: Option<f64>,
    z_re: Option<f64>,
    z_im: Option<f64>,
    n_max: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhi {
    t: Option<f64>,
    z_re: Option<f64>,
    z_im: Option<f64>,
    n_max: Option<usize>,
    delta: Option<f64>,
    floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDensity {
    lambdas: Option<Vec<f64>>,
    s: Option<f64>,
    n_lo: Option<usize>,
    n_hi: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDos {
    a: Option<f64>,
    b: Option<f64>,
    s: Option<f64>,
    periods: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEigcount {
    a: Option<f64>,
    b: Option<f64>,
    s: Option<f64>,
    periods: Option<f64>,
    step: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCauchy {
    z_re: Option<f64>,
    z_im: Option<f64>,
    s: Option<f64>,
    periods: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExample1 {
    t: Option<f64>,
    lambdas: Option<Vec<f64>>,
    n_hi: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Options {
    Classify {
        eps_case: f64,
    },
    TraceScan {
        param: String,
        lo: f64,
        hi: f64,
        count: usize,
        target: Option<f64>,
        xtol: f64,
    },
    Bands {
        lo: f64,
        hi: f64,
        step: f64,
        edge_tol: f64,
    },
    Turan {
        t: f64,
        z: (f64, f64),
        n_max: usize,
    },
    Phi {
        t: f64,
        z: (f64, f64),
        n_max: usize,
        delta: f64,
        floor: f64,
    },
    Density {
        lambdas: Vec<f64>,
        s: f64,
        n_lo: usize,
        n_hi: usize,
    },
    Dos {
        a: f64,
        b: f64,
        s: f64,
        periods: Vec<f64>,
    },
    Eigcount {
        a: f64,
        b: f64,
        s: f64,
        periods: f64,
        step: Option<f64>,
    },
    Cauchy {
        z: (f64, f64),
        s: f64,
        periods: Vec<f64>,
    },
    Example1Check {
        t: f64,
        lambdas: Vec<f64>,
        n_hi: usize,
    },
}

/// Fully materialized run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    /// Family name as written.
    pub family: String,
    /// Family parameters with defaults filled in.
    pub params: NamedValues,
    pub eta: BoundaryVector,
    pub tol: f64,
    pub plot: bool,
    pub out: PathBuf,
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
    pub options: Options,
}

fn fmt_num(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_list(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|x| fmt_num(*x)).collect();
    format!("[{}]", items.join(", "))
}

impl RunConfig {
    /// `key = value` lines describing every effective setting, in a fixed
    /// order.
    pub fn echo(&self) -> Vec<String> {
        let mut out = vec![
            format!("command = {}", self.command.name()),
            format!("tol = {}", fmt_num(self.tol)),
            format!("plot = {}", self.plot),
            format!("family = {}", self.family),
        ];
        for (k, v) in &self.params {
            out.push(format!("{k} = {}", fmt_num(*v)));
        }
        out.push(format!(
            "eta = ({}, {}) {:?}",
            fmt_num(self.eta.eta1),
            fmt_num(self.eta.eta2),
            self.eta.frame
        ));
        let opts: Vec<(&str, String)> = match &self.options {
            Options::Classify { eps_case } => vec![("eps_case", fmt_num(*eps_case))],
            Options::TraceScan {
                param,
                lo,
                hi,
                count,
                target,
                xtol,
            } => vec![
                ("param", param.clone()),
                ("lo", fmt_num(*lo)),
                ("hi", fmt_num(*hi)),
                ("count", count.to_string()),
                ("target", target.map_or("none".into(), fmt_num)),
                ("xtol", fmt_num(*xtol)),
            ],
            Options::Bands { lo, hi, step, edge_tol } => vec![
                ("lo", fmt_num(*lo)),
                ("hi", fmt_num(*hi)),
                ("step", fmt_num(*step)),
                ("edge_tol", fmt_num(*edge_tol)),
            ],
            Options::Turan { t, z, n_max } => vec![
                ("t", fmt_num(*t)),
                ("z", format!("{} + {}i", fmt_num(z.0), fmt_num(z.1))),
                ("n_max", n_max.to_string()),
            ],
            Options::Phi {
                t,
                z,
                n_max,
                delta,
                floor,
            } => vec![
                ("t", fmt_num(*t)),
                ("z", format!("{} + {}i", fmt_num(z.0), fmt_num(z.1))),
                ("n_max", n_max.to_string()),
                ("delta", fmt_num(*delta)),
                ("floor", fmt_num(*floor)),
            ],
            Options::Density { lambdas, s, n_lo, n_hi } => vec![
                ("lambdas", fmt_list(lambdas)),
                ("s", fmt_num(*s)),
                ("n_lo", n_lo.to_string()),
                ("n_hi", n_hi.to_string()),
            ],
            Options::Dos { a, b, s, periods } => vec![
                ("window", format!("({}, {}]", fmt_num(*a), fmt_num(*b))),
                ("s", fmt_num(*s)),
                ("periods", fmt_list(periods)),
            ],
            Options::Eigcount { a, b, s, periods, step } => vec![
                ("window", format!("({}, {}]", fmt_num(*a), fmt_num(*b))),
                ("s", fmt_num(*s)),
                ("periods", fmt_num(*periods)),
                ("step", step.map_or("auto".into(), fmt_num)),
            ],
            Options::Cauchy { z, s, periods } => vec![
                ("z", format!("{} + {}i", fmt_num(z.0), fmt_num(z.1))),
                ("s", fmt_num(*s)),
                ("periods", fmt_list(periods)),
            ],
            Options::Example1Check { t, lambdas, n_hi } => vec![
                ("t", fmt_num(*t)),
                ("lambdas", fmt_list(lambdas)),
                ("n_hi", n_hi.to_string()),
            ],
        };
        let section = self.command.section();
        out.extend(opts.into_iter().map(|(k, v)| format!("{section}.{k} = {v}")));
        out
    }
}

/// Line (1-based) of `key` inside `[section]` (or at top level for `None`).
fn locate(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            continue;
        }
        if current.as_deref() != section {
            continue;
        }
        if let Some(rest) = line.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return Some(i + 1);
            }
        }
    }
    None
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

struct Ctx<'a> {
    text: &'a str,
    section: &'static str,
}

impl Ctx<'_> {
    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: locate(self.text, Some(self.section), key).or_else(|| locate(self.text, None, &format!("[{}]", self.section))),
            message: message.into(),
        }
    }

    fn required<T>(&self, key: &str, v: Option<T>) -> Result<T, ConfigError> {
        v.ok_or_else(|| ConfigError {
            line: section_line(self.text, self.section),
            message: format!("missing required key `{}.{key}`", self.section),
        })
    }

    fn positive(&self, key: &str, v: f64) -> Result<f64, ConfigError> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(key, format!("`{}.{key}` must be positive, got {v}", self.section)))
        }
    }

    fn at_least(&self, key: &str, v: usize, min: usize) -> Result<usize, ConfigError> {
        if v >= min {
            Ok(v)
        } else {
            Err(self.err(key, format!("`{}.{key}` must be at least {min}, got {v}", self.section)))
        }
    }

    fn window(&self, a: f64, b: f64) -> Result<(f64, f64), ConfigError> {
        if a < b {
            Ok((a, b))
        } else {
            Err(self.err("b", format!("`{}` window needs a < b, got ({a}, {b}]", self.section)))
        }
    }

    fn periods(&self, key: &str, v: &[f64]) -> Result<(), ConfigError> {
        if v.is_empty() || v.iter().any(|p| !(*p > 0.0)) || v.windows(2).any(|w| !(w[1] > w[0])) {
            Err(self.err(key, format!("`{}.{key}` must be a non-empty increasing list of positive numbers", self.section)))
        } else {
            Ok(())
        }
    }
}

fn section_line(text: &str, section: &str) -> Option<usize> {
    text.lines().position(|l| l.trim() == format!("[{section}]")).map(|i| i + 1)
}

/// Parses and validates a run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
        line: e.span().map(|s| line_of_offset(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    let command: Command = raw.command.parse().map_err(|m| ConfigError {
        line: locate(text, None, "command"),
        message: m,
    })?;

    // Every section other than the command's own is rejected.
    let present = [
        ("classify", raw.classify.is_some()),
        ("sweep", raw.sweep.is_some()),
        ("bands", raw.bands.is_some()),
        ("turan", raw.turan.is_some()),
        ("phi", raw.phi.is_some()),
        ("density", raw.density.is_some()),
        ("dos", raw.dos.is_some()),
        ("eigcount", raw.eigcount.is_some()),
        ("cauchy", raw.cauchy.is_some()),
        ("example1", raw.example1.is_some()),
    ];
    for (name, is_set) in present {
        if is_set && name != command.section() {
            return Err(ConfigError {
                line: section_line(text, name),
                message: format!("section `[{name}]` does not apply to command `{}`", command.name()),
            });
        }
    }

    let tol = raw.tol.unwrap_or(1e-10);
    if !(tol > 0.0 && tol < 1e-2) {
        return Err(ConfigError {
            line: locate(text, None, "tol"),
            message: format!("`tol` must lie in (0, 0.01), got {tol}"),
        });
    }

    let pctx = Ctx { text, section: "params" };
    let family: Family = raw.params.family.parse().map_err(|e: CoreError| pctx.err("family", e.to_string()))?;
    let mut params: BTreeMap<String, f64> = BTreeMap::new();
    let p = &raw.params;
    for (key, v) in [("kappa", &p.kappa), ("c", &p.c), ("omega", &p.omega), ("a", &p.a), ("b", &p.b), ("q0", &p.q0)] {
        if let Some(v) = v {
            let x = v.value().map_err(|m| pctx.err(key, m))?;
            params.insert(key.to_string(), x);
        }
    }
    if family == Family::Example2 && !params.contains_key("omega") {
        params.insert("omega".into(), 2.0 * PI);
    }

    let swept = match (&command, &raw.sweep) {
        (Command::TraceScan, Some(s)) => s.param.clone(),
        _ => None,
    };
    let built = {
        let mut probe = params.clone();
        if let (Some(name), Some(lo)) = (&swept, raw.sweep.as_ref().and_then(|s| s.lo)) {
            probe.insert(name.clone(), lo);
        }
        make_family(&raw.params.family, &probe)
    };
    let built = built.map_err(|e| {
        let key = match &e {
            CoreError::OutOfRange { param, .. } => Some(param.clone()),
            CoreError::MissingParameter { .. } => None,
            CoreError::InvalidArgument(m) => ["kappa", "c", "omega", "a", "b", "q0"]
                .into_iter()
                .find(|k| m.contains(&format!("`{k}`")) || m.contains(k))
                .map(String::from),
            _ => None,
        };
        match key {
            Some(k) => pctx.err(&k, e.to_string()),
            None => ConfigError {
                line: section_line(text, "params"),
                message: e.to_string(),
            },
        }
    })?;
    for (k, v) in built.values() {
        if swept.as_deref() != Some(k.as_str()) {
            params.insert(k.clone(), *v);
        }
    }

    let bctx = Ctx { text, section: "boundary" };
    let b = raw.boundary.unwrap_or_default();
    let frame = match b.frame.as_deref().unwrap_or("s1") {
        "s1" => EtaFrame::S1,
        "stilde" => EtaFrame::Stilde,
        other => return Err(bctx.err("frame", format!("unknown boundary frame `{other}` (expected s1 or stilde)"))),
    };
    let eta = BoundaryVector::normalized(b.eta1.unwrap_or(0.0), b.eta2.unwrap_or(1.0), frame, built.p(0.0))
        .map_err(|e| bctx.err("eta1", e.to_string()))?;

    let ctx = Ctx {
        text,
        section: command.section(),
    };
    let options = match command {
        Command::Classify => {
            let r = raw.classify.unwrap_or_default();
            Options::Classify {
                eps_case: ctx.positive("eps_case", r.eps_case.unwrap_or(1e-6))?,
            }
        }
        Command::TraceScan => {
            let r = raw.sweep.unwrap_or_default();
            let param = ctx.required("param", r.param)?;
            if !["kappa", "c", "omega", "a", "b", "q0"].contains(&param.as_str()) {
                return Err(ctx.err("param", format!("cannot sweep `{param}`")));
            }
            let lo = ctx.required("lo", r.lo)?;
            let hi = ctx.required("hi", r.hi)?;
            if !(lo < hi) {
                return Err(ctx.err("hi", format!("sweep needs lo < hi, got [{lo}, {hi}]")));
            }
            Options::TraceScan {
                param,
                lo,
                hi,
                count: ctx.at_least("count", r.count.unwrap_or(201), 2)?,
                target: r.target,
                xtol: ctx.positive("xtol", r.xtol.unwrap_or(1e-8))?,
            }
        }
        Command::Bands => {
            let r = raw.bands.unwrap_or_default();
            let (lo, hi) = ctx.window(ctx.required("lo", r.lo)?, ctx.required("hi", r.hi)?)?;
            Options::Bands {
                lo,
                hi,
                step: ctx.positive("step", r.step.unwrap_or(0.01))?,
                edge_tol: ctx.positive("edge_tol", r.edge_tol.unwrap_or(1e-10))?,
            }
        }
        Command::Turan => {
            let r = raw.turan.unwrap_or_default();
            Options::Turan {
                t: r.t.unwrap_or(0.0),
                z: (r.z_re.unwrap_or(0.0), r.z_im.unwrap_or(0.0)),
                n_max: ctx.at_least("n_max", r.n_max.unwrap_or(200), 1)?,
            }
        }
        Command::Phi => {
            let r = raw.phi.unwrap_or_default();
            Options::Phi {
                t: r.t.unwrap_or(0.0),
                z: (r.z_re.unwrap_or(0.0), r.z_im.unwrap_or(0.0)),
                n_max: ctx.at_least("n_max", r.n_max.unwrap_or(200), 2)?,
                delta: ctx.positive("delta", r.delta.unwrap_or(1e-3))?,
                floor: ctx.positive("floor", r.floor.unwrap_or(1e-8))?,
            }
        }
        Command::Density => {
            let r = raw.density.unwrap_or_default();
            let lambdas = ctx.required("lambdas", r.lambdas)?;
            if lambdas.is_empty() {
                return Err(ctx.err("lambdas", "`density.lambdas` must not be empty"));
            }
            let n_lo = ctx.at_least("n_lo", r.n_lo.unwrap_or(1), 1)?;
            let n_hi = r.n_hi.unwrap_or(400);
            if n_hi < n_lo + 3 {
                return Err(ctx.err("n_hi", format!("`density.n_hi` must be at least n_lo + 3, got {n_hi}")));
            }
            Options::Density {
                lambdas,
                s: r.s.unwrap_or(0.0),
                n_lo,
                n_hi,
            }
        }
        Command::Dos => {
            let r = raw.dos.unwrap_or_default();
            let (a, b) = ctx.window(ctx.required("a", r.a)?, ctx.required("b", r.b)?)?;
            let periods = r.periods.unwrap_or_else(|| vec![50.0, 100.0, 200.0]);
            ctx.periods("periods", &periods)?;
            Options::Dos {
                a,
                b,
                s: r.s.unwrap_or(0.0),
                periods,
            }
        }
        Command::Eigcount => {
            let r = raw.eigcount.unwrap_or_default();
            let (a, b) = ctx.window(ctx.required("a", r.a)?, ctx.required("b", r.b)?)?;
            let step = match r.step {
                Some(h) => Some(ctx.positive("step", h)?),
                None => None,
            };
            Options::Eigcount {
                a,
                b,
                s: r.s.unwrap_or(0.0),
                periods: ctx.positive("periods", r.periods.unwrap_or(200.0))?,
                step,
            }
        }
        Command::Cauchy => {
            let r = raw.cauchy.unwrap_or_default();
            let z_im = r.z_im.unwrap_or(1.0);
            if z_im == 0.0 {
                return Err(ctx.err("z_im", "`cauchy.z_im` must be non-zero"));
            }
            let periods = r.periods.unwrap_or_else(|| vec![50.0, 100.0, 200.0]);
            ctx.periods("periods", &periods)?;
            Options::Cauchy {
                z: (r.z_re.unwrap_or(0.0), z_im),
                s: r.s.unwrap_or(0.0),
                periods,
            }
        }
        Command::Example1Check => {
            if family != Family::Free {
                return Err(pctx.err("family", "`example1-check` runs on the free family"));
            }
            let r = raw.example1.unwrap_or_default();
            let t = r.t.unwrap_or(0.0);
            if !(t >= 0.0) {
                return Err(ctx.err("t", format!("`example1.t` must be non-negative, got {t}")));
            }
            Options::Example1Check {
                t,
                lambdas: r.lambdas.unwrap_or_else(|| vec![0.5, 1.0, 2.0]),
                n_hi: ctx.at_least("n_hi", r.n_hi.unwrap_or(400), 4)?,
            }
        }
    };

    Ok(RunConfig {
        command,
        family: raw.params.family,
        params,
        eta,
        tol,
        plot: raw.plot.unwrap_or(false),
        out: PathBuf::from(raw.out.unwrap_or_else(|| ".".into())),
        jobs: raw.jobs.unwrap_or(0),
        options,
    })
}
