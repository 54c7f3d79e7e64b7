use log::info;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use pplr::dataio::{self, Scaling, TableSpec};
use pplr::inference::{olr_test, partial_test, plr_test};
use pplr::simulate::{run_study, Example, Execution, SimDesign, SimReport, StudyOptions};
use pplr::solver::{bic, fit_path, lambda_grid, lambda_max, select_bic};
use pplr::{
    fit_tuned, Dataset, Family, FitProblem, FitResult, Method, PathOptions, PenaltyKind,
    PenaltySpec, SolverOptions, TestOptions, TestReport, Tuning,
};

use crate::output::{fmt, Outputs};
use crate::{ModelArgs, ProstateArgs, ScalingArg, SimulateArgs, TestArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] pplr::Error),
    #[error("{0}")]
    NotConverged(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot encode JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use pplr::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::NotConverged(_) => 3,
            CliError::Io(_) | CliError::Json(_) => 1,
            CliError::Core(e) => match e {
                E::Divergence(_) | E::NonFinite | E::NegativeStatistic(_) => 3,
                E::Io(_) => 1,
                _ => 2,
            },
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}

fn parse<T: std::str::FromStr<Err = pplr::Error>>(s: &str) -> Result<T> {
    Ok(s.parse::<T>()?)
}

fn load(args: &ModelArgs) -> Result<Dataset> {
    let family: Family = parse(&args.family)?;
    let spec = TableSpec {
        path: args.data.clone(),
        response: args.response.clone(),
        predictors: args.predictors.clone(),
        family,
    };
    let raw = dataio::load_csv(&spec)?;
    let data = match args.scaling {
        ScalingArg::N => dataio::standardize(&raw, Scaling::SumSquaresN)?.0,
        ScalingArg::Sample => dataio::standardize(&raw, Scaling::UnitSampleVariance)?.0,
        ScalingArg::None => raw,
    };
    info!("loaded {} rows, {} predictors", data.n(), data.p());
    Ok(data)
}

fn penalty(kind: &str, shape: Option<f64>) -> Result<PenaltySpec> {
    let kind: PenaltyKind = parse(kind)?;
    if kind == PenaltyKind::None {
        return Ok(PenaltySpec::none());
    }
    Ok(PenaltySpec::new(
        kind,
        0.0,
        shape.unwrap_or_else(|| kind.default_shape()),
    )?)
}

fn indices(data: &Dataset, names: &[String], flag: &str) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let j = data
            .column_index(name)
            .ok_or_else(|| CliError::Usage(format!("{flag}: no predictor named '{name}'")))?;
        if out.contains(&j) {
            return usage(format!("{flag}: '{name}' listed twice"));
        }
        out.push(j);
    }
    Ok(out)
}

fn test_options(args: &ModelArgs) -> Result<TestOptions> {
    // --tune only accepts "bic", which is also the default.
    let tuning = match args.lambda {
        Some(l) if !(l.is_finite() && l >= 0.0) => {
            return usage(format!("--lambda must be >= 0, got {l}"))
        }
        Some(l) => Tuning::Fixed(l),
        None => Tuning::Bic,
    };
    Ok(TestOptions {
        tuning,
        path: PathOptions {
            bic: args.bic.into(),
            ..PathOptions::default()
        },
        solver: SolverOptions::default(),
    })
}

fn coefficient_rows(data: &Dataset, fit: &FitResult) -> Vec<Vec<String>> {
    data.names()
        .iter()
        .zip(fit.beta.iter())
        .map(|(n, b)| vec![n.clone(), fmt(*b)])
        .collect()
}

pub fn fit(args: &ModelArgs) -> Result<()> {
    let data = load(args)?;
    let spec = penalty(&args.penalty, args.shape)?;
    let unpen = indices(&data, &args.unpenalized, "--unpenalized")?;
    let opts = test_options(args)?;
    let problem = if spec.kind == PenaltyKind::None {
        FitProblem::unpenalized(&data)
    } else {
        FitProblem::partial(&data, spec, &unpen)?
    };
    let result = fit_tuned(&problem, opts.tuning, &opts.path, &opts.solver)?;

    let out = Outputs::new(&args.output)?;
    out.csv(
        "coefficients.csv",
        &["name", "estimate"],
        &coefficient_rows(&data, &result),
    )?;
    let doc = json!({
        "family": data.family(),
        "penalty": spec.kind,
        "shape": spec.a,
        "n": data.n(),
        "p": data.p(),
        "unpenalized": args.unpenalized,
        "tuning": tuning_label(&opts.tuning),
        "lambda": result.lambda,
        "objective": result.objective,
        "loglik": result.loglik,
        "df": result.df,
        "iterations": result.iterations,
        "converged": result.converged,
        "coefficients": named(&data, &result),
    });
    out.json("fit.json", &doc)?;
    converged_or(
        result.converged,
        "coordinate ascent hit the iteration limit",
    )
}

fn tuning_label(t: &Tuning) -> &'static str {
    match t {
        Tuning::Bic => "bic",
        Tuning::Fixed(_) => "fixed",
    }
}

fn named(data: &Dataset, fit: &FitResult) -> Vec<serde_json::Value> {
    data.names()
        .iter()
        .zip(fit.beta.iter())
        .map(|(n, b)| json!({ "name": n, "estimate": b }))
        .collect()
}

fn converged_or(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::NotConverged(msg.to_string()))
    }
}

pub fn test(args: &TestArgs) -> Result<()> {
    let m = &args.model;
    let data = load(m)?;
    let method: Method = parse(&args.method)?;
    let spec = penalty(&m.penalty, m.shape)?;
    let tested = indices(&data, &args.test, "--test")?;
    let unpen = indices(&data, &m.unpenalized, "--unpenalized")?;
    let opts = test_options(m)?;

    let report: TestReport = match method {
        Method::Pplr => {
            if spec.kind == PenaltyKind::None {
                return usage("--method pplr needs a penalty other than none");
            }
            let unpen = if unpen.is_empty() {
                tested.clone()
            } else {
                unpen
            };
            if let Some(j) = tested.iter().find(|j| !unpen.contains(j)) {
                return usage(format!(
                    "--method pplr requires --test to be a subset of --unpenalized ('{}' is penalized)",
                    data.names()[*j]
                ));
            }
            partial_test(&data, &tested, &unpen, spec, &opts)?
        }
        Method::Plr => {
            if spec.kind == PenaltyKind::None {
                return usage("--method plr needs a penalty other than none");
            }
            plr_test(&data, &tested, spec, &opts)?
        }
        Method::Olr => olr_test(&data, &tested, &opts)?,
    };

    let out = Outputs::new(&m.output)?;
    let doc = json!({
        "method": report.method,
        "tested": args.test,
        "statistic": report.statistic,
        "df": report.df,
        "p_value": report.p_value,
        "lambda_used": report.lambda_used,
        "full_objective": report.full_fit.objective,
        "null_objective": report.null_fit.objective,
        "converged": report.converged(),
    });
    out.json("test.json", &doc)?;
    out.csv("coefficients.csv", &["name", "full", "null"], &{
        data.names()
            .iter()
            .enumerate()
            .map(|(j, n)| {
                vec![
                    n.clone(),
                    fmt(report.full_fit.beta[j]),
                    fmt(report.null_fit.beta[j]),
                ]
            })
            .collect::<Vec<_>>()
    })?;
    converged_or(report.converged(), "a fit hit the iteration limit")
}

pub fn path(args: &ModelArgs) -> Result<()> {
    let data = load(args)?;
    let spec = penalty(&args.penalty, args.shape)?;
    if spec.kind == PenaltyKind::None {
        return usage("path needs a penalty other than none");
    }
    let unpen = indices(&data, &args.unpenalized, "--unpenalized")?;
    let opts = test_options(args)?;
    let problem = FitProblem::partial(&data, spec, &unpen)?;
    let grid = match args.lambda {
        Some(l) => vec![l],
        None => lambda_grid(lambda_max(&problem, &opts.solver)?, &opts.path),
    };
    let path = fit_path(&problem, &grid, &opts.solver)?;
    let kind = opts.path.bic;
    let (selected, _) = select_bic(&path, &data, kind)?;

    let mut header: Vec<&str> = vec!["lambda", "df", "objective", "loglik", "bic", "converged"];
    header.extend(data.names().iter().map(String::as_str));
    let rows: Vec<Vec<String>> = path
        .iter()
        .map(|f| {
            let mut r = vec![
                fmt(f.lambda),
                f.df.to_string(),
                fmt(f.objective),
                fmt(f.loglik),
                fmt(bic(f, &data, kind)),
                f.converged.to_string(),
            ];
            r.extend(f.beta.iter().map(|b| fmt(*b)));
            r
        })
        .collect();
    let out = Outputs::new(&args.output)?;
    out.csv("path.csv", &header, &rows)?;
    let points: Vec<_> = path
        .iter()
        .map(|f| {
            json!({
                "lambda": f.lambda,
                "df": f.df,
                "objective": f.objective,
                "bic": bic(f, &data, kind),
                "converged": f.converged,
            })
        })
        .collect();
    out.json(
        "path.json",
        &json!({ "selected_lambda": selected, "points": points }),
    )?;
    converged_or(
        path.iter().all(|f| f.converged),
        "a path fit hit the iteration limit",
    )
}

fn estimator(m: Method) -> &'static str {
    match m {
        Method::Pplr => "ppl",
        Method::Plr => "pl",
        Method::Olr => "ol",
    }
}

#[derive(Serialize)]
struct SimulationDoc<'a> {
    example: Example,
    n: usize,
    p: usize,
    reps: usize,
    seed: u64,
    alpha: f64,
    penalty: PenaltyKind,
    studies: &'a [SimReport],
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let example: Example = parse(&args.example)?;
    let methods = args
        .methods
        .iter()
        .map(|s| parse::<Method>(s))
        .collect::<Result<Vec<_>>>()?;
    if methods.is_empty() {
        return usage("--methods is empty");
    }
    if args.delta.is_empty() {
        return usage("--delta is empty");
    }
    let spec = penalty(&args.penalty, None)?;
    if spec.kind == PenaltyKind::None && methods.iter().any(|m| *m != Method::Olr) {
        return usage("penalized tests need a penalty other than none");
    }
    let exec = Execution::from_env()?;
    let opts = StudyOptions {
        methods: methods.clone(),
        penalty: spec,
        test: TestOptions {
            path: PathOptions {
                bic: args.bic.into(),
                ..PathOptions::default()
            },
            ..TestOptions::default()
        },
        ..StudyOptions::default()
    };

    let mut reports = Vec::with_capacity(args.delta.len());
    for &delta in &args.delta {
        let design = SimDesign {
            example,
            n: args.n,
            p: args.p,
            delta,
            n_reps: args.reps,
            seed: args.seed,
            alpha: args.alpha,
        };
        info!("simulating delta = {delta}");
        reports.push(run_study(&design, &opts, exec)?);
    }

    let out = Outputs::new(&args.output)?;
    write_estimation(&out, &methods, &reports, args.reps > 1)?;
    write_rejection(&out, &methods, &reports, &args.delta)?;
    for &m in &methods {
        for r in &reports {
            let name = if reports.len() == 1 {
                format!("qq_{}.csv", m.as_str())
            } else {
                format!("qq_{}_delta_{}.csv", m.as_str(), fmt(r.design.delta))
            };
            let s = r.method(m).expect("requested method is reported");
            let rows: Vec<Vec<String>> = s
                .qq_points
                .iter()
                .map(|(t, v)| vec![fmt(*t), fmt(*v)])
                .collect();
            out.csv(&name, &["theoretical", "observed"], &rows)?;
        }
    }
    let doc = SimulationDoc {
        example,
        n: args.n,
        p: args.p,
        reps: args.reps,
        seed: args.seed,
        alpha: args.alpha,
        penalty: spec.kind,
        studies: &reports,
    };
    out.json("simulation.json", &serde_json::to_value(&doc)?)?;

    let failed: usize = reports.iter().map(|r| r.failures).sum();
    if failed > 0 {
        return Err(CliError::NotConverged(format!(
            "{failed} replicate(s) failed and were excluded; see simulation.json"
        )));
    }
    Ok(())
}

fn write_estimation(
    out: &Outputs,
    methods: &[Method],
    reports: &[SimReport],
    with_sd: bool,
) -> Result<()> {
    let mut header: Vec<String> = vec!["n".into(), "p".into(), "delta".into()];
    for &m in methods {
        let e = estimator(m);
        let mut measures = vec!["l2", "l1"];
        if m != Method::Olr {
            measures.extend(["c", "ic"]);
        }
        for q in measures {
            header.push(format!("{e}_{q}_mean"));
            if with_sd {
                header.push(format!("{e}_{q}_sd"));
            }
        }
    }
    header.extend(["completed".into(), "failures".into()]);
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![
                r.design.n.to_string(),
                r.design.p.to_string(),
                fmt(r.design.delta),
            ];
            for &m in methods {
                let s = r.method(m).expect("requested method is reported");
                let mut cells = vec![s.l2, s.l1];
                cells.extend(s.c);
                cells.extend(s.ic);
                for c in cells {
                    row.push(fmt(c.mean));
                    if with_sd {
                        row.push(c.sd.map(fmt).unwrap_or_default());
                    }
                }
            }
            row.push(r.completed.to_string());
            row.push(r.failures.to_string());
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("estimation.csv", &header, &rows)
}

fn write_rejection(
    out: &Outputs,
    methods: &[Method],
    reports: &[SimReport],
    deltas: &[f64],
) -> Result<()> {
    let mut header = vec!["test".to_string()];
    header.extend(deltas.iter().map(|d| fmt(*d)));
    let mut rows: Vec<Vec<String>> = methods
        .iter()
        .map(|&m| {
            let mut row = vec![m.as_str().to_string()];
            row.extend(
                reports
                    .iter()
                    .map(|r| fmt(r.method(m).expect("reported").rejection_rate)),
            );
            row
        })
        .collect();
    let mut theory = vec!["theory".to_string()];
    theory.extend(reports.iter().map(|r| fmt(r.theoretical_power)));
    rows.push(theory);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("rejection.csv", &header, &rows)
}

pub fn prostate(args: &ProstateArgs) -> Result<()> {
    let spec = penalty(&args.penalty, None)?;
    if spec.kind == PenaltyKind::None {
        return usage("the prostate analysis needs a penalty other than none");
    }
    let opts = TestOptions {
        path: PathOptions {
            bic: args.bic.into(),
            ..PathOptions::default()
        },
        ..TestOptions::default()
    };
    let report = dataio::prostate_analysis(spec, &opts)?;
    let c = &report.coefficients;
    let mut rows: Vec<Vec<String>> = c
        .names
        .iter()
        .enumerate()
        .map(|(j, n)| vec![n.clone(), fmt(c.ls[j]), fmt(c.pl[j]), fmt(c.ppl[j])])
        .collect();
    rows.push(vec!["R2".into(), fmt(c.r2_ls), fmt(c.r2_pl), fmt(c.r2_ppl)]);
    let out = Outputs::new(&args.output)?;
    out.csv("coefficients.csv", &["variable", "ls", "pl", "ppl"], &rows)?;
    let rows: Vec<Vec<String>> = report
        .p_values
        .iter()
        .map(|r| vec![r.name.clone(), fmt(r.lr), fmt(r.plr), fmt(r.pplr)])
        .collect();
    out.csv("pvalues.csv", &["variable", "lr", "plr", "pplr"], &rows)?;
    out.json("prostate.json", &serde_json::to_value(&report)?)?;
    Ok(())
}
