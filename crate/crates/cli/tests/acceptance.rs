//! Acceptance run: evaluates every release criterion, prints one PASS/FAIL
//! line per criterion and exits non-zero if any of them fails.
//!
//! Tolerances are the published ones; nothing here is loosened to make a
//! criterion pass.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use pplr::dataio::{prostate_analysis, prostate_standardized};
use pplr::distribution::{chi2_quantile, noncentral_chi2_cdf};
use pplr::simulate::{run_study, Example, Execution, SimDesign, SimReport, StudyOptions};
use pplr::{
    linear_transform, olr_test, pplr_test, Dataset, Family, Method, PenaltyKind, PenaltySpec,
    SolverOptions, TestOptions, Tuning,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

// ---------------------------------------------------------------- criterion 1

/// Penalty written out from its piecewise definition, independently of the
/// library implementation.
fn reference_penalty(kind: PenaltyKind, lambda: f64, a: f64, t: f64) -> f64 {
    match kind {
        PenaltyKind::Scad if t <= lambda => lambda * t,
        PenaltyKind::Scad if t <= a * lambda => {
            (2.0 * a * lambda * t - t * t - lambda * lambda) / (2.0 * (a - 1.0))
        }
        PenaltyKind::Scad => lambda * lambda * (a + 1.0) / 2.0,
        PenaltyKind::Mcp if t <= a * lambda => lambda * t - t * t / (2.0 * a),
        PenaltyKind::Mcp => a * lambda * lambda / 2.0,
        PenaltyKind::Lasso => lambda * t,
        PenaltyKind::None => 0.0,
    }
}

fn prox_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases = 10_000;
    let step = 1e-4;
    let (mut worst_arg, mut worst_obj, mut bad) = (0.0f64, 0.0f64, 0);
    for i in 0..cases {
        let kind = if i % 2 == 0 {
            PenaltyKind::Scad
        } else {
            PenaltyKind::Mcp
        };
        let z: f64 = rng.random_range(-4.0..4.0);
        let lambda: f64 = rng.random_range(0.05..1.5);
        let a: f64 = match kind {
            PenaltyKind::Scad => rng.random_range(2.1..6.0),
            _ => rng.random_range(1.1..6.0),
        };
        let w: f64 = rng.random_range(0.2..2.0);
        let spec = PenaltySpec::new(kind, lambda, a).expect("valid penalty");
        let prox = spec.prox(z, w).expect("valid curvature");
        let f = |b: f64| 0.5 * w * (z - b).powi(2) + reference_penalty(kind, lambda, a, b.abs());
        // The minimizer lies between 0 and z; scan a 1e-4 grid over
        // [-|z| - 0.01, |z| + 0.01] to be safe.
        let reach = ((z.abs() + 0.01) / step).ceil() as i64;
        let (mut best_b, mut best_f) = (0.0, f(0.0));
        for k in -reach..=reach {
            let b = k as f64 * step;
            let v = f(b);
            if v < best_f {
                best_f = v;
                best_b = b;
            }
        }
        let darg = (prox - best_b).abs();
        let dobj = (f(prox) - best_f).abs();
        worst_arg = worst_arg.max(darg);
        worst_obj = worst_obj.max(dobj);
        if darg > 2e-4 || dobj > 1e-8 {
            bad += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        bad == 0 && secs < 10.0,
        format!("{cases} cases, {bad} outside tolerance, max |arg diff| {worst_arg:.2e}, max |obj diff| {worst_obj:.2e}, {secs:.2} s"),
    )
}

// ------------------------------------------------------------ criteria 2 and 3

const NAMES: [&str; 8] = [
    "lcavol", "lweight", "age", "lbph", "svi", "lcp", "gleason", "pgg45",
];
const REFERENCE_LS: [f64; 8] = [
    0.6651, 0.2665, -0.1582, 0.1403, 0.3153, -0.1483, 0.0355, 0.1257,
];
const REFERENCE_LR: [f64; 8] = [
    0.0000, 0.0303, 0.1800, 0.2427, 0.0272, 0.4092, 0.8248, 0.4751,
];

fn prostate_report() -> pplr::dataio::ProstateReport {
    prostate_analysis(
        PenaltySpec::scad(1.0).expect("valid"),
        &TestOptions::default(),
    )
    .expect("prostate analysis runs")
}

fn prostate_coefficients(report: &pplr::dataio::ProstateReport) -> Verdict {
    let c = &report.coefficients;
    assert_eq!(c.names, NAMES);
    let mut failures = Vec::new();
    let mut detail = String::new();

    // SCAD-PPL with svi unpenalized.
    for (name, target) in [("lcavol", 0.6324), ("lweight", 0.2312), ("svi", 0.2786)] {
        let j = NAMES.iter().position(|n| *n == name).unwrap();
        let v = c.ppl[j];
        let _ = write!(detail, "ppl {name} {v:.4} (target {target}); ");
        if !within(v, target, 0.02) {
            failures.push(format!("ppl {name}"));
        }
    }
    for name in ["age", "lcp", "gleason", "pgg45"] {
        let j = NAMES.iter().position(|n| *n == name).unwrap();
        if c.ppl[j] != 0.0 {
            failures.push(format!("ppl {name} = {:.4} not zero", c.ppl[j]));
        }
    }

    // Least squares: closed form from the normal equations, then the reference values.
    let data = prostate_standardized().expect("fixture");
    let ls = data
        .x()
        .clone()
        .svd(true, true)
        .solve(data.y(), 1e-12)
        .expect("full rank");
    let mut worst_ls = 0.0f64;
    for j in 0..8 {
        if !within(c.ls[j], ls[j], 1e-6) {
            failures.push(format!("ls {} differs from the normal equations", NAMES[j]));
        }
        worst_ls = worst_ls.max((ls[j] - REFERENCE_LS[j]).abs());
    }
    let _ = write!(detail, "max |LS - reference| {worst_ls:.1e}; ");
    if worst_ls > 1e-3 {
        failures.push("ls column".into());
    }

    for (label, v, target) in [
        ("LS", c.r2_ls, 0.6633),
        ("PL", c.r2_pl, 0.6052),
        ("PPL", c.r2_ppl, 0.6208),
    ] {
        let _ = write!(detail, "R2 {label} {v:.4} (target {target}); ");
        if !within(v, target, 0.01) {
            failures.push(format!("R2 {label}"));
        }
    }
    if !failures.is_empty() {
        let _ = write!(detail, "out of tolerance: {}", failures.join(", "));
    }
    verdict(failures.is_empty(), detail)
}

fn prostate_p_values(report: &pplr::dataio::ProstateReport) -> Verdict {
    let mut failures = Vec::new();
    let mut worst_lr = 0.0f64;
    for (j, row) in report.p_values.iter().enumerate() {
        let significant = matches!(row.name.as_str(), "lcavol" | "lweight" | "svi");
        if significant != (row.pplr < 0.05) {
            failures.push(format!("pplr {} p = {:.4}", row.name, row.pplr));
        }
        worst_lr = worst_lr.max((row.lr - REFERENCE_LR[j]).abs());
    }
    let svi = report.p_values.iter().find(|r| r.name == "svi").unwrap();
    if svi.plr <= 0.05 {
        failures.push(format!("plr svi p = {:.4} should exceed 0.05", svi.plr));
    }
    if worst_lr > 0.03 {
        failures.push(format!("LR column off by {worst_lr:.4}"));
    }
    let pplr: Vec<String> = report
        .p_values
        .iter()
        .map(|r| format!("{:.4}", r.pplr))
        .collect();
    let mut detail = format!(
        "pplr p-values [{}]; plr svi {:.4}; max |LR - reference| {worst_lr:.4}",
        pplr.join(", "),
        svi.plr
    );
    if !failures.is_empty() {
        let _ = write!(detail, "; failing: {}", failures.join(", "));
    }
    verdict(failures.is_empty(), detail)
}

// ----------------------------------------------------------- criteria 4 to 7

fn linear(n: usize, p: usize, delta: f64, n_reps: usize, seed: u64) -> SimDesign {
    SimDesign {
        example: Example::LinearEx1,
        n,
        p,
        delta,
        n_reps,
        seed,
        alpha: 0.05,
    }
}

fn study(design: &SimDesign, methods: &[Method]) -> SimReport {
    let opts = StudyOptions {
        methods: methods.to_vec(),
        ..StudyOptions::default()
    };
    let report = run_study(design, &opts, Execution::Parallel).expect("study runs");
    assert_eq!(
        report.failures, 0,
        "replicates failed: {:?}",
        report.failure_reasons
    );
    report
}

fn rate(r: &SimReport, m: Method) -> f64 {
    r.method(m).expect("method run").rejection_rate
}

fn empirical_size() -> Verdict {
    let band = 3.0 * (0.05f64 * 0.95 / 500.0).sqrt();
    let mut pass = true;
    let mut detail = String::new();
    for (n, p) in [(100, 11), (200, 20)] {
        let start = Instant::now();
        let r = study(
            &linear(n, p, 0.0, 500, 4_000 + n as u64),
            &[Method::Pplr, Method::Plr, Method::Olr],
        );
        let (pplr, plr, olr) = (
            rate(&r, Method::Pplr),
            rate(&r, Method::Plr),
            rate(&r, Method::Olr),
        );
        pass &= within(pplr, 0.05, band) && within(olr, 0.05, band) && plr <= 0.01;
        let _ = write!(
            detail,
            "({n},{p}) pplr {pplr:.3} olr {olr:.3} plr {plr:.3} [{:.1} s]; ",
            start.elapsed().as_secs_f64()
        );
    }
    let _ = write!(detail, "band 0.05 +/- {band:.3}, plr <= 0.01");
    verdict(pass, detail)
}

fn power_curve() -> Verdict {
    let q = chi2_quantile(0.95, 1);
    let mut pass = true;
    let mut detail = String::new();
    for (delta, target) in [(2.0, 0.483), (3.0, 0.840), (4.0, 0.972)] {
        let r = study(&linear(100, 11, delta, 500, 5_000), &[Method::Pplr]);
        let emp = rate(&r, Method::Pplr);
        let theory = 1.0 - noncentral_chi2_cdf(q, 1, delta * delta);
        pass &= within(emp, target, 0.07) && within(emp, theory, 0.07);
        let _ = write!(
            detail,
            "delta {delta}: {emp:.3} (reference {target}, theory {theory:.3}); "
        );
    }
    verdict(pass, detail.trim_end_matches("; ").to_string())
}

fn null_shape() -> Verdict {
    let critical = 1.358 / 500f64.sqrt();
    let mut pplr_ok = 0;
    let mut plr_fail = 0;
    let mut pplr_ks = Vec::new();
    let mut plr_ks = Vec::new();
    for batch in 0..10 {
        let r = study(
            &linear(100, 11, 0.0, 500, 6_000 + batch),
            &[Method::Pplr, Method::Plr],
        );
        let a = r.method(Method::Pplr).unwrap().ks_chi2;
        let b = r.method(Method::Plr).unwrap().ks_chi2;
        pplr_ok += usize::from(a < critical);
        plr_fail += usize::from(b >= critical);
        pplr_ks.push(format!("{a:.3}"));
        plr_ks.push(format!("{b:.2}"));
    }
    verdict(
        pplr_ok >= 9 && plr_fail == 10,
        format!(
            "critical {critical:.4}; pplr below in {pplr_ok}/10 [{}]; plr above in {plr_fail}/10 [{}]",
            pplr_ks.join(" "),
            plr_ks.join(" ")
        ),
    )
}

fn oracle_property() -> Verdict {
    let mut failures = Vec::new();
    let mut detail = String::new();
    for (delta, target_ic) in [(1.0, 0.805), (2.0, 0.435), (3.0, 0.123)] {
        let r = study(
            &linear(400, 30, delta, 200, 7_000),
            &[Method::Pplr, Method::Plr],
        );
        let ppl = r.method(Method::Pplr).unwrap();
        let pl = r.method(Method::Plr).unwrap();
        let (ppl_ic, pl_ic, l2) = (ppl.ic.unwrap().mean, pl.ic.unwrap().mean, ppl.l2.mean);
        let _ = write!(
            detail,
            "delta {delta}: ppl IC {ppl_ic:.3}, pl IC {pl_ic:.3} (reference {target_ic}), ppl L2 {l2:.3}; "
        );
        if ppl_ic > 0.02 {
            failures.push(format!("ppl IC at delta {delta}"));
        }
        if !within(pl_ic, target_ic, 0.12) {
            failures.push(format!("pl IC at delta {delta}"));
        }
        if !within(l2, 0.113, 0.02) {
            failures.push(format!("ppl L2 at delta {delta}"));
        }
    }
    if !failures.is_empty() {
        let _ = write!(detail, "out of tolerance: {}", failures.join(", "));
    }
    verdict(
        failures.is_empty(),
        detail.trim_end_matches("; ").to_string(),
    )
}

// ---------------------------------------------------------------- criterion 8

fn random_instance(rng: &mut ChaCha8Rng, family: Family) -> Dataset {
    let n = rng.random_range(60..150);
    let p = rng.random_range(4..10);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let beta = DVector::from_fn(p, |j, _| if j < 2 { 0.8 } else { 0.0 });
    let eta = &x * beta;
    let y = match family {
        Family::Gaussian => eta.map(|e| e + rng.sample::<f64, _>(StandardNormal)),
        Family::Logistic => eta.map(|e| {
            if rng.random::<f64>() < 1.0 / (1.0 + (-e).exp()) {
                1.0
            } else {
                0.0
            }
        }),
    };
    Dataset::new(x, y, family).expect("finite data")
}

fn rss(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let b = x.clone().svd(true, true).solve(y, 1e-12).expect("solvable");
    (y - x * b).norm_squared()
}

fn identities() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tight = SolverOptions {
        tol: 1e-12,
        max_iter: 100_000,
        ..SolverOptions::default()
    };
    let at_zero = TestOptions {
        tuning: Tuning::Fixed(0.0),
        solver: tight,
        ..TestOptions::default()
    };
    let scad = PenaltySpec::scad(1.0).expect("valid");

    let mut pplr_gap = 0.0f64;
    for i in 0..50 {
        let family = if i % 2 == 0 {
            Family::Gaussian
        } else {
            Family::Logistic
        };
        let data = random_instance(&mut rng, family);
        let j = rng.random_range(0..data.p());
        let a = pplr_test(&data, &[j], scad, &at_zero).expect("pplr");
        let b = olr_test(&data, &[j], &at_zero).expect("olr");
        pplr_gap = pplr_gap.max((a.statistic - b.statistic).abs());
    }

    // The Gaussian likelihood ratio against the residual-sum-of-squares
    // closed forms: the ratio form n log(RSS0/RSS1) and the unit-variance
    // difference RSS0 - RSS1.
    let (mut ratio_gap, mut diff_gap) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let data = random_instance(&mut rng, Family::Gaussian);
        let j = rng.random_range(0..data.p());
        let t = olr_test(&data, &[j], &at_zero).expect("olr").statistic;
        let keep: Vec<_> = (0..data.p())
            .filter(|&k| k != j)
            .map(|k| data.x().column(k))
            .collect();
        let (rss1, rss0) = (
            rss(data.x(), data.y()),
            rss(&DMatrix::from_columns(&keep), data.y()),
        );
        let n = data.n() as f64;
        ratio_gap = ratio_gap.max((t - n * (rss0 / rss1).ln()).abs());
        diff_gap = diff_gap.max((t - (rss0 - rss1)).abs());
    }

    let mut orth_gap = 0.0f64;
    for _ in 0..50 {
        let p = rng.random_range(2..12);
        let d = rng.random_range(1..p);
        let g = DMatrix::from_fn(p, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = g.qr().q().transpose();
        let t = linear_transform(&a).expect("completion");
        let m = &t.matrix;
        orth_gap = orth_gap.max((m * m.transpose() - DMatrix::identity(p, p)).amax());
        orth_gap = orth_gap.max((m.rows(0, d) - &a).amax());
    }

    let pass = pplr_gap <= 1e-6 && ratio_gap <= 1e-6 && orth_gap <= 1e-10;
    verdict(
        pass,
        format!(
            "max |PPLR(lambda=0) - OLR| {pplr_gap:.1e}; max |OLR - n log(RSS0/RSS1)| {ratio_gap:.1e} \
             (|OLR - (RSS0 - RSS1)| {diff_gap:.1e}); max |A~A~^T - I| {orth_gap:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- criterion 9

fn simulate_into(dir: &Path, threads: &str) {
    let status = Command::new(env!("CARGO_BIN_EXE_pplr"))
        .args([
            "simulate", "--reps", "100", "--delta", "0,1,2", "--seed", "99", "--out",
        ])
        .arg(dir)
        .env("PPLR_THREADS", threads)
        .status()
        .expect("binary runs");
    assert!(status.success(), "simulate exited with {status}");
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .expect("output dir")
        .map(|e| {
            let e = e.expect("entry");
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).expect("readable"),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let runs: Vec<(&str, tempfile::TempDir)> = ["1", "1", "4", "4"]
        .into_iter()
        .map(|t| (t, tempfile::TempDir::new().expect("temp dir")))
        .collect();
    for (threads, dir) in &runs {
        simulate_into(dir.path(), threads);
    }
    let reference = snapshot(runs[0].1.path());
    let identical = runs[1..]
        .iter()
        .all(|(_, d)| snapshot(d.path()) == reference);
    verdict(
        identical && !reference.is_empty(),
        format!(
            "{} files compared over 2 runs each at PPLR_THREADS=1 and 4: {}",
            reference.len(),
            if identical {
                "byte-identical"
            } else {
                "outputs differ"
            }
        ),
    )
}

type Check<'a> = Box<dyn FnOnce() -> Verdict + 'a>;

fn main() {
    let report = prostate_report();
    let criteria: Vec<(&str, Check)> = vec![
        ("prox operator matches grid oracle", Box::new(prox_oracle)),
        (
            "prostate coefficients and R2",
            Box::new(|| prostate_coefficients(&report)),
        ),
        ("prostate p-values", Box::new(|| prostate_p_values(&report))),
        ("empirical size", Box::new(empirical_size)),
        ("power curve", Box::new(power_curve)),
        ("null distribution shape", Box::new(null_shape)),
        ("oracle property at (400,30)", Box::new(oracle_property)),
        ("consistency identities", Box::new(identities)),
        ("determinism across runs and threads", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let v = check();
        failed += usize::from(!v.pass);
        println!(
            "criterion {} {}: {} -- {}",
            i + 1,
            name,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
