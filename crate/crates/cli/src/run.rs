//! Command dispatch. [`run`] is pure; [`write_artifacts`] does the IO.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use slmod::asymptotics::{phi_estimate_with, turan_seq};
use slmod::density::{aligned_schedule, cauchy_limit, cauchy_transform, dos_convergence, eigenvalues, example1_check, spectral_density};
use slmod::params::{carleman_rho, make_family, Family};
use slmod::spectral::{bands_with_tol, classify, trace_crossings, trace_scan, Case, CaseLabel, Sweep, DEFAULT_DELTA};
use slmod::transfer::{monodromy_trace, Frame};
use slmod::SLParams;

use crate::config::{Options, RunConfig};
use crate::output::{line_chart, sci, Cell, Table};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Numeric(#[from] slmod::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Output of one run: the CSV, an optional chart, and lines for stdout.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub stem: &'static str,
    pub csv: String,
    pub svg: Option<String>,
    pub summary: Vec<String>,
}

struct Chart {
    title: String,
    x: &'static str,
    y: &'static str,
    points: Vec<(f64, f64)>,
}

fn build(cfg: &RunConfig) -> Result<SLParams, RunError> {
    Ok(make_family(&cfg.family, &cfg.params)?)
}

fn z_of(z: (f64, f64)) -> Complex64 {
    Complex64::new(z.0, z.1)
}

/// Verdict line for a classification, with the κ threshold for the
/// power-law family.
pub fn verdict(family: Option<Family>, kappa: Option<f64>, label: &CaseLabel) -> String {
    let tr = sci(label.trace_value);
    match (family, kappa, label.case) {
        (Some(Family::Example2), Some(k), Case::I) if k <= 0.5 => {
            format!("Case I (tr = {tr}, kappa = {k} <= 1/2): sigma_ac = R")
        }
        (Some(Family::Example2), Some(k), Case::I) => {
            format!("Case I (tr = {tr}, kappa = {k} > 1/2): limit circle")
        }
        (_, _, Case::III) => "Case III: all self-adjoint extensions have no essential spectrum".to_string(),
        (_, _, case) if label.marginal => format!("Case {case} (tr = {tr}, marginal)"),
        (_, _, case) => format!("Case {case} (tr = {tr})"),
    }
}

/// Runs the configured command.
pub fn run(cfg: &RunConfig) -> Result<Artifacts, RunError> {
    let mut notes: Vec<String> = Vec::new();
    let mut adaptive: Option<(usize, f64)> = None;
    let mut summary = Vec::new();
    let mut chart: Option<Chart> = None;
    let tol = cfg.tol;

    let mut table = match &cfg.options {
        Options::Classify { eps_case } => {
            let params = build(cfg)?;
            let frame = Frame::natural(&params);
            let label = classify(&params, frame, *eps_case, tol)?;
            let line = verdict(params.family(), params.value("kappa"), &label);
            let mut t = Table::new(&["family", "trace", "distance_to_boundary", "case", "marginal"]);
            t.push(vec![
                Cell::S(cfg.family.clone()),
                Cell::F(label.trace_value),
                Cell::F(label.distance_to_boundary),
                Cell::S(label.case.to_string()),
                Cell::B(label.marginal),
            ]);
            notes.push(format!("verdict = {line}"));
            summary.push(line);
            t
        }
        Options::TraceScan {
            param,
            lo,
            hi,
            count,
            target,
            xtol,
        } => {
            let sweep = Sweep {
                param: param.clone(),
                lo: *lo,
                hi: *hi,
                count: *count,
            };
            let series = trace_scan(&cfg.family, &sweep, &cfg.params, tol)?;
            if let Some(target) = target {
                let roots = trace_crossings(&cfg.family, &sweep, &cfg.params, *target, *xtol, tol)?;
                for r in &roots {
                    notes.push(format!("crossing {param} = {} (trace = {})", sci(*r), sci(*target)));
                    summary.push(format!("trace crosses {target} at {param} = {}", sci(*r)));
                }
                if roots.is_empty() {
                    notes.push(format!("crossing {param} = none"));
                    summary.push(format!("trace does not cross {target} on the sweep"));
                }
            }
            let mut t = Table::new(&["param", "trace"]);
            for &(x, tr) in &series {
                t.push(vec![Cell::F(x), Cell::F(tr)]);
            }
            chart = Some(Chart {
                title: format!("monodromy trace along {param}"),
                x: "parameter",
                y: "trace",
                points: series,
            });
            t
        }
        Options::Bands { lo, hi, step, edge_tol } => {
            let params = build(cfg)?;
            let list = bands_with_tol(&params, *lo, *hi, *step, *edge_tol, tol.min(1e-12))?;
            let mut t = Table::new(&["lower", "upper", "lower_clipped", "upper_clipped"]);
            for b in &list.intervals {
                t.push(vec![Cell::F(b.lower), Cell::F(b.upper), Cell::B(b.lower_clipped), Cell::B(b.upper_clipped)]);
            }
            summary.push(format!("{} band(s) in [{lo}, {hi}]", list.intervals.len()));
            if cfg.plot {
                let n = (((hi - lo) / step).ceil() as usize).clamp(2, 2000);
                let points: Vec<(f64, f64)> = (0..=n)
                    .into_par_iter()
                    .map(|i| {
                        let x = lo + (hi - lo) * i as f64 / n as f64;
                        (x, monodromy_trace(&params, x, tol).unwrap_or(f64::NAN))
                    })
                    .collect();
                chart = Some(Chart {
                    title: "monodromy trace".into(),
                    x: "lambda",
                    y: "trace",
                    points,
                });
            }
            t
        }
        Options::Turan { t, z, n_max } => {
            let params = build(cfg)?;
            let seq = turan_seq(&params, cfg.eta, *t, z_of(*z), *n_max, tol)?;
            let mut tab = Table::new(&["n", "turan"]);
            for (n, v) in seq.values.iter().enumerate() {
                tab.push(vec![Cell::U(n), Cell::F(*v)]);
            }
            notes.push(format!("tail_estimate = {}", sci(seq.tail_estimate())));
            notes.push(format!("last_increment = {}", sci(seq.last_increment())));
            summary.push(format!(
                "Turan tail {} (last increment {})",
                sci(seq.tail_estimate()),
                sci(seq.last_increment())
            ));
            chart = Some(Chart {
                title: "Turan determinants".into(),
                x: "n",
                y: "D_n",
                points: seq.values.iter().enumerate().map(|(n, v)| (n as f64, *v)).collect(),
            });
            tab
        }
        Options::Phi {
            t,
            z,
            n_max,
            delta,
            floor,
        } => {
            let params = build(cfg)?;
            let r = phi_estimate_with(&params, cfg.eta, *t, z_of(*z), *n_max, *delta, *floor, tol)?;
            adaptive = Some((r.m, r.delta));
            let mut tab = Table::new(&["n", "phi_re", "phi_im", "abs_phi", "residual"]);
            for (i, (p, e)) in r.phi_seq.iter().zip(&r.residuals).enumerate() {
                tab.push(vec![Cell::U(r.m + i), Cell::F(p.re), Cell::F(p.im), Cell::F(p.norm()), Cell::F(*e)]);
            }
            notes.push(format!("phi = {} + {}i", sci(r.phi.re), sci(r.phi.im)));
            notes.push(format!("amplitude = {}", sci(r.amplitude)));
            notes.push(format!("limit_trace = {}", sci(r.limit_trace)));
            notes.push(format!("residual = {}", sci(r.residual)));
            notes.push(format!("possibly_vanishing = {}", r.possibly_vanishing));
            summary.push(format!("phi = {} (|phi| = {}), M = {}", r.phi, sci(r.phi.norm()), r.m));
            if r.possibly_vanishing {
                summary.push("warning: |phi| below floor, possibly vanishing".into());
            }
            chart = Some(Chart {
                title: "|phi_n|".into(),
                x: "n",
                y: "|phi_n|",
                points: r.phi_seq.iter().enumerate().map(|(i, p)| ((r.m + i) as f64, p.norm())).collect(),
            });
            tab
        }
        Options::Density { lambdas, s, n_lo, n_hi } => {
            let params = build(cfg)?;
            let sched = aligned_schedule(&params, *s, *n_lo, *n_hi);
            let reports = lambdas
                .par_iter()
                .map(|&lam| spectral_density(&params, cfg.eta, lam, &sched, tol))
                .collect::<Result<Vec<_>, _>>()?;
            let mut t = Table::new(&["lambda", "L", "K_L", "rho_L", "ratio", "g", "g_err", "dos", "mu_prime"]);
            for r in &reports {
                for smp in &r.samples {
                    t.push(vec![
                        Cell::F(r.lambda),
                        Cell::F(smp.l),
                        Cell::F(smp.k),
                        Cell::F(smp.rho),
                        Cell::F(smp.ratio),
                        Cell::F(r.g),
                        Cell::F(r.g_err),
                        Cell::F(r.dos),
                        Cell::F(r.mu_prime),
                    ]);
                }
                summary.push(format!(
                    "lambda = {}: g = {} +- {}, dos = {}, mu' = {}",
                    r.lambda,
                    sci(r.g),
                    sci(r.g_err),
                    sci(r.dos),
                    sci(r.mu_prime)
                ));
            }
            chart = Some(Chart {
                title: "spectral density".into(),
                x: "lambda",
                y: "mu'",
                points: reports.iter().map(|r| (r.lambda, r.mu_prime)).collect(),
            });
            t
        }
        Options::Dos { a, b, s, periods } => {
            let params = build(cfg)?;
            let sched: Vec<f64> = periods.iter().map(|n| s + n * params.period()).collect();
            let table = dos_convergence(&params, cfg.eta, (*a, *b), &sched, tol)?;
            let mut t = Table::new(&["L", "count", "rho_L", "normalized", "target"]);
            for row in &table.rows {
                t.push(vec![Cell::F(row.l), Cell::U(row.count), Cell::F(row.rho), Cell::F(row.normalized), Cell::F(table.target)]);
            }
            summary.push(format!(
                "normalized count {} vs target {} (deviation {})",
                sci(table.rows.last().map_or(f64::NAN, |r| r.normalized)),
                sci(table.target),
                sci(table.final_deviation())
            ));
            chart = Some(Chart {
                title: "normalized eigenvalue counts".into(),
                x: "L",
                y: "count / rho_L",
                points: table.rows.iter().map(|r| (r.l, r.normalized)).collect(),
            });
            t
        }
        Options::Eigcount { a, b, s, periods, step } => {
            let params = build(cfg)?;
            let l = s + periods * params.period();
            let ev = eigenvalues(&params, cfg.eta, l, (*a, *b), *step, tol)?;
            let rho = carleman_rho(&params, l, 1e-10)?;
            let mut t = Table::new(&["index", "lambda"]);
            for (i, x) in ev.iter().enumerate() {
                t.push(vec![Cell::U(i), Cell::F(*x)]);
            }
            notes.push(format!("L = {}", sci(l)));
            notes.push(format!("count = {}", ev.len()));
            notes.push(format!("rho_L = {}", sci(rho)));
            summary.push(format!("{} eigenvalue(s) in ({a}, {b}] at L = {}, rho_L = {}", ev.len(), sci(l), sci(rho)));
            chart = Some(Chart {
                title: "eigenvalues".into(),
                x: "index",
                y: "lambda",
                points: ev.iter().enumerate().map(|(i, x)| (i as f64, *x)).collect(),
            });
            t
        }
        Options::Cauchy { z, s, periods } => {
            let params = build(cfg)?;
            let zc = z_of(*z);
            let rows = periods
                .par_iter()
                .map(|n| {
                    let l = s + n * params.period();
                    let w = cauchy_transform(&params, cfg.eta, l, zc, tol)?;
                    Ok((l, carleman_rho(&params, l, 1e-10)?, w))
                })
                .collect::<Result<Vec<_>, slmod::Error>>()?;
            if let Ok(lim) = cauchy_limit(&params, tol) {
                notes.push(format!("limit = {} + {}i", sci(lim.re), sci(lim.im)));
            }
            let mut t = Table::new(&["L", "rho_L", "re", "im", "re_over_rho", "im_over_rho"]);
            for (l, rho, w) in &rows {
                t.push(vec![Cell::F(*l), Cell::F(*rho), Cell::F(w.re), Cell::F(w.im), Cell::F(w.re / rho), Cell::F(w.im / rho)]);
            }
            if let Some((_, rho, w)) = rows.last() {
                summary.push(format!("normalized Cauchy transform {}", w / rho));
            }
            chart = Some(Chart {
                title: "normalized Cauchy transform".into(),
                x: "L",
                y: "Im / rho_L",
                points: rows.iter().map(|(l, rho, w)| (*l, w.im / rho)).collect(),
            });
            t
        }
        Options::Example1Check { t, lambdas, n_hi } => {
            let omega = cfg.params["omega"];
            let sched: Vec<f64> = (1..=*n_hi).map(|n| n as f64 * omega).collect();
            let rows = lambdas
                .par_iter()
                .map(|&lam| example1_check(omega, cfg.eta, *t, lam, &sched, tol))
                .collect::<Result<Vec<_>, _>>()?;
            let mut tab = Table::new(&["t", "lambda", "turan", "mu_prime", "product", "expected"]);
            for r in &rows {
                tab.push(vec![
                    Cell::F(r.t),
                    Cell::F(r.lambda),
                    Cell::F(r.turan),
                    Cell::F(r.mu_prime),
                    Cell::F(r.product),
                    Cell::F(r.expected),
                ]);
                summary.push(format!("lambda = {}: product {} vs {}", r.lambda, sci(r.product), sci(r.expected)));
            }
            chart = Some(Chart {
                title: "D mu' against sin(sqrt(lambda) omega)/pi".into(),
                x: "lambda",
                y: "D mu'",
                points: rows.iter().map(|r| (r.lambda, r.product)).collect(),
            });
            tab
        }
    };

    let mut comments = vec![format!("slmod {}", cfg.command.name())];
    comments.extend(cfg.echo());
    match adaptive {
        Some((m, delta)) => {
            comments.push(format!("adaptive_m = {m}"));
            comments.push(format!("delta = {delta:?}"));
        }
        None => {
            comments.push("adaptive_m = unused".into());
            comments.push(format!("delta = {DEFAULT_DELTA:?} (unused)"));
        }
    }
    comments.extend(notes);
    table.comments = comments;

    let svg = if cfg.plot {
        chart.map(|c| line_chart(&c.title, c.x, c.y, &c.points))
    } else {
        None
    };
    Ok(Artifacts {
        stem: cfg.command.name(),
        csv: table.render(),
        svg,
        summary,
    })
}

/// Writes `<stem>.csv` (and `<stem>.svg`) into `dir`, returning the paths.
pub fn write_artifacts(dir: &Path, art: &Artifacts) -> Result<Vec<PathBuf>, RunError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    let csv = dir.join(format!("{}.csv", art.stem));
    fs::write(&csv, &art.csv).map_err(io(&csv))?;
    written.push(csv);
    if let Some(svg) = &art.svg {
        let path = dir.join(format!("{}.svg", art.stem));
        fs::write(&path, svg).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}
