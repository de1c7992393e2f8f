//! Acceptance gate: runs every criterion in sequence, prints one line per
//! criterion and exits non-zero if any fails.

use std::f64::consts::{PI, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command as Proc, ExitCode};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slmod::asymptotics::{minimal_solution, product_identity, turan_seq};
use slmod::density::{aligned_schedule, dos_convergence, dos_density, spectral_density};
use slmod::params::{constant_q_family, free_family, make_family, power_law_family, values};
use slmod::spectral::{bands, trace_crossings, Sweep};
use slmod::transfer::{monodromy, monodromy_trace, monodromy_with_dz, transfer_matrix, transfer_matrix_rk4, Frame};
use slmod::{BoundaryVector, EtaFrame, SLParams};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, budget_s: f64) -> bool {
    elapsed.as_secs_f64() < budget_s
}

fn traces() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for (c, expect) in [(0.0, 0.77), (1.0, -2.61)] {
        let start = Instant::now();
        let p = power_law_family(0.5, c).map_err(|e| e.to_string())?;
        let tr = monodromy(&p, Complex64::new(0.0, 0.0), Frame::DPrime, 1e-10).map_err(|e| e.to_string())?.trace().re;
        let dt = start.elapsed();
        ok &= (tr - expect).abs() <= 0.01 && within(dt, 1.0);
        detail.push(format!("c = {c}: tr = {tr:.5} ({:.3} s)", dt.as_secs_f64()));
    }
    check(ok, detail.join("; "))
}

fn critical_kappa() -> Outcome {
    let start = Instant::now();
    let sweep = Sweep {
        param: "kappa".into(),
        lo: 0.005,
        hi: 0.995,
        count: 200,
    };
    let fixed = values(&[("c", 0.0), ("omega", TAU)]);
    let roots = trace_crossings("example2", &sweep, &fixed, -2.0, 1e-9, 1e-10).map_err(|e| e.to_string())?;
    let dt = start.elapsed();
    let root = roots
        .iter()
        .copied()
        .min_by(|a, b| (a - 0.326).abs().total_cmp(&(b - 0.326).abs()))
        .ok_or("no crossing of tr = -2")?;
    let a_crit = 2.0 * root / (1.0 - root);
    check(
        (root - 0.326).abs() <= 0.005 && (a_crit - 0.968).abs() <= 0.01 && within(dt, 30.0),
        format!("roots {roots:?}, kappa = {root:.6}, 2k/(1-k) = {a_crit:.5} ({:.2} s)", dt.as_secs_f64()),
    )
}

fn builtin_families() -> Vec<SLParams> {
    vec![
        free_family(1.0).unwrap(),
        constant_q_family(1.0, 1.0).unwrap(),
        power_law_family(0.5, 0.0).unwrap(),
        power_law_family(0.3, 1.0).unwrap(),
        make_family("example5", &values(&[("a", 0.3), ("b", 0.7)])).unwrap(),
        make_family("appendix-asymptotic", &values(&[])).unwrap(),
    ]
}

fn oracle_equivalence() -> Outcome {
    let fams = builtin_families();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut worst_det: f64 = 0.0;
    for _ in 0..50 {
        let p = &fams[rng.gen_range(0..fams.len())];
        let z = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0));
        let t0 = rng.gen_range(0.0..20.0);
        let t1 = t0 + rng.gen_range(0.1..p.period());
        let a = transfer_matrix(p, t0, t1, z, Frame::DPrime, 1e-12).map_err(|e| e.to_string())?;
        let b = transfer_matrix_rk4(p, t0, t1, z, Frame::DPrime, 1e-4).map_err(|e| e.to_string())?;
        worst = worst.max(a.max_abs_diff(&b));
        let det = a.det() * (p.p(t1) / p.p(t0));
        worst_det = worst_det.max((det - 1.0).norm());
    }
    check(
        worst <= 1e-8 && worst_det <= 1e-8,
        format!("max entry gap {worst:.2e}, max |det p/p0 - 1| {worst_det:.2e}"),
    )
}

fn free_density() -> Outcome {
    let start = Instant::now();
    let f = free_family(1.0).map_err(|e| e.to_string())?;
    let sched = aligned_schedule(&f, 0.0, 1, 400);
    let mut worst: f64 = 0.0;
    for lam in [0.5, 1.0, 2.0, 4.0] {
        let r = spectral_density(&f, BoundaryVector::dirichlet(), lam, &sched, 1e-11).map_err(|e| e.to_string())?;
        let exact = f64::sqrt(lam) / PI;
        worst = worst.max((r.mu_prime - exact).abs() / exact);
    }
    let dt = start.elapsed();
    check(
        worst < 0.02 && within(dt, 60.0),
        format!("max relative error {worst:.2e} ({:.2} s)", dt.as_secs_f64()),
    )
}

fn free_dos() -> Outcome {
    let start = Instant::now();
    let f = free_family(1.0).map_err(|e| e.to_string())?;
    let mut dos_err: f64 = 0.0;
    for lam in [0.25, 0.5, 1.0, 2.0, 4.0, 7.0] {
        let d = dos_density(&f, lam, 1e-12).map_err(|e| e.to_string())?;
        dos_err = dos_err.max((d - 1.0 / (2.0 * PI * f64::sqrt(lam))).abs() * 2.0 * PI * f64::sqrt(lam));
    }
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for (a, b) in [(0.0, 4.0), (1.0, 4.0), (0.5, 2.0)] {
        let t = dos_convergence(&f, BoundaryVector::dirichlet(), (a, b), &[40.0 * PI], 1e-11).map_err(|e| e.to_string())?;
        let target = (f64::sqrt(b) - f64::sqrt(a)) / PI;
        let row = t.rows[0];
        worst = worst.max((row.normalized - target).abs() / target);
        rows.push(format!("({a}, {b}]: {} eigenvalues", row.count));
    }
    let dt = start.elapsed();
    check(
        dos_err < 1e-9 && worst < 0.02 && within(dt, 60.0),
        format!(
            "dos relative error {dos_err:.1e}; {}; max count deviation {worst:.2e} ({:.2} s)",
            rows.join(", "),
            dt.as_secs_f64()
        ),
    )
}

fn free_bands() -> Outcome {
    let f = free_family(PI).map_err(|e| e.to_string())?;
    let edge_tol = 1e-10;
    let list = bands(&f, -0.5, 30.5, 0.01, edge_tol).map_err(|e| e.to_string())?;
    let edges = list.edges();
    let expect: Vec<f64> = (0..=5).map(|k| (k * k) as f64).collect();
    let mut ok = edges.len() == expect.len();
    let mut worst: f64 = 0.0;
    for (e, k) in edges.iter().zip(&expect) {
        worst = worst.max((e - k).abs());
    }
    ok &= worst <= 1e-8;
    let mut worst_tr: f64 = 0.0;
    for e in &edges {
        let tr = monodromy_trace(&f, *e, 1e-13).map_err(|e| e.to_string())?;
        worst_tr = worst_tr.max((tr.abs() - 2.0).abs());
    }
    ok &= worst_tr <= edge_tol;
    check(
        ok,
        format!("edges {edges:?}, max |edge - k^2| {worst:.1e}, max ||tr| - 2| {worst_tr:.1e}"),
    )
}

fn product_identity_check() -> Outcome {
    let p = power_law_family(0.5, 0.0).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut ms = Vec::new();
    for z in [-1.0, 0.0, 1.0] {
        let (m, res) = product_identity(&p, 0.0, Complex64::new(z, 0.0), 200, 1e-12).map_err(|e| e.to_string())?;
        ms.push(m);
        worst = res.iter().fold(worst, |w, r| w.max(*r));
    }
    check(worst <= 1e-6, format!("max relative residual {worst:.2e} to n = 200 (M = {ms:?})"))
}

fn turan_convergence() -> Outcome {
    let p = power_law_family(0.5, 0.0).map_err(|e| e.to_string())?;
    let etas = [
        BoundaryVector::dirichlet(),
        BoundaryVector::neumann(),
        BoundaryVector::normalized(1.0, 1.0, EtaFrame::S1, 1.0).unwrap(),
    ];
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for eta in etas {
        for z in [-0.5, 0.0, 0.3] {
            for t in [0.0, 1.0] {
                let seq = turan_seq(&p, eta, t, Complex64::new(z, 0.0), 200, 1e-11).map_err(|e| e.to_string())?;
                let (v100, v200) = (seq.values[100], seq.values[200]);
                let tail_positive = seq.values[100..].iter().all(|v| *v > 0.0);
                let rel = (v200 - v100).abs() / v100;
                ok &= tail_positive && rel < 0.02;
                worst = worst.max(rel);
                cases += 1;
            }
        }
    }
    check(ok, format!("{cases} (eta, z, t) cases, max |v200 - v100|/v100 = {worst:.2e}"))
}

fn eigen_counts() -> Outcome {
    let start = Instant::now();
    let p = power_law_family(0.5, 0.0).map_err(|e| e.to_string())?;
    let l = 200.0 * p.period();
    let t = dos_convergence(&p, BoundaryVector::dirichlet(), (-0.5, 0.5), &[l], 1e-10).map_err(|e| e.to_string())?;
    let dos = dos_density(&p, 0.0, 1e-10).map_err(|e| e.to_string())?;
    let row = t.rows[0];
    let dev = (row.normalized - dos).abs() / dos;
    let dt = start.elapsed();
    check(
        dev <= 0.15 && within(dt, 600.0),
        format!(
            "count {} at rho_L = {:.4}: normalized {:.4} vs dos {:.4}, deviation {:.1}% ({:.2} s)",
            row.count,
            row.rho,
            row.normalized,
            dos,
            100.0 * dev,
            dt.as_secs_f64()
        ),
    )
}

fn case_three_decay() -> Outcome {
    let start = Instant::now();
    let p = power_law_family(0.5, 1.0).map_err(|e| e.to_string())?;
    let ms = minimal_solution(&p, Complex64::new(0.0, 0.0), 200, 1e-11).map_err(|e| e.to_string())?;
    let target = (2.61 - f64::sqrt(2.61 * 2.61 - 4.0)) / 2.0;
    let dev = (ms.decay_rate - target).abs() / target;
    let dt = start.elapsed();
    check(
        dev < 0.02 && within(dt, 30.0),
        format!(
            "decay rate {:.5} (empirical {:.5}) vs {target:.5}, deviation {:.2}% ({:.2} s)",
            ms.decay_rate,
            ms.empirical_rate,
            100.0 * dev,
            dt.as_secs_f64()
        ),
    )
}

fn trace_derivative() -> Outcome {
    let fams: Vec<(String, SLParams)> = vec![
        ("free".into(), free_family(1.0).unwrap()),
        ("free(pi)".into(), free_family(PI).unwrap()),
        ("constant-q(1)".into(), constant_q_family(1.0, 1.0).unwrap()),
        ("constant-q(-1)".into(), constant_q_family(-1.0, 2.0).unwrap()),
        ("example2 limit".into(), power_law_family(0.5, 0.0).unwrap().periodic_limit()),
        (
            "example5 limit".into(),
            make_family("example5", &values(&[("a", 0.3), ("b", 0.7)])).unwrap().periodic_limit(),
        ),
        (
            "appendix limit".into(),
            make_family("appendix-asymptotic", &values(&[])).unwrap().periodic_limit(),
        ),
    ];
    let mut ok = true;
    let mut report = Vec::new();
    for (name, p) in &fams {
        let mut inside = 0;
        let mut min_d = f64::INFINITY;
        for i in 0..100 {
            let z = -3.0 + 28.0 * i as f64 / 99.0;
            let (m, dm) = monodromy_with_dz(p, z.into(), Frame::PDPrime, 1e-11).map_err(|e| e.to_string())?;
            let tr = m.trace().re;
            if tr.abs() < 1.9 {
                inside += 1;
                min_d = min_d.min(dm.trace().norm());
            }
        }
        ok &= inside > 0 && min_d > 1e-6;
        report.push(format!("{name}: {inside} pts, min |dtr| {min_d:.2e}"));
    }
    check(ok, report.join("; "))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("traces.toml");
    std::fs::write(
        &cfg,
        "command = \"trace-scan\"\n\n[params]\nfamily = \"example4\"\nkappa = 0.5\n\n[sweep]\nparam = \"c\"\nlo = 0.0\nhi = 1.0\ncount = 2\n",
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for (i, jobs) in ["1", "4", "1"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let status = Proc::new(env!("CARGO_BIN_EXE_slmod"))
            .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", jobs])
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("run {i} failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        outputs.push(std::fs::read(out.join("trace-scan.csv")).map_err(|e| e.to_string())?);
    }
    let text = String::from_utf8_lossy(&outputs[0]).to_string();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    check(identical && rows.len() == 2, format!("3 runs ({} bytes), rows {rows:?}", outputs[0].len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("monodromy traces", traces),
        ("critical kappa", critical_kappa),
        ("adaptive vs fixed-step transfer matrices", oracle_equivalence),
        ("free spectral density", free_density),
        ("free density of states and counts", free_dos),
        ("free band edges", free_bands),
        ("product identity", product_identity_check),
        ("Turan convergence", turan_convergence),
        ("eigenvalue counts at L = 200 omega", eigen_counts),
        ("Case III decay rate", case_three_decay),
        ("trace derivative inside bands", trace_derivative),
        ("deterministic CSV", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(d) => println!("criterion {:2}: PASS {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:2}: FAIL {name}: {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
