//! Monte Carlo studies of estimation accuracy, selection and test size/power
//! under local alternatives `beta_1 = delta / sqrt(n)`.
//!
//! Every replicate draws from its own ChaCha stream keyed by
//! `(seed, replicate, attempt, role)`, so a study gives bit-identical results
//! whether replicates run sequentially or on a thread pool of any size.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::{standardize, Scaling};
use crate::distribution::{chi2_cdf, chi2_power, chi2_quantile, ks_distance};
use crate::error::{contract, Error, Result};
use crate::glm::{sigmoid, Dataset, Family};
use crate::inference::{noncentral_param_from_information, run_test, Method, TestOptions};
use crate::penalty::PenaltySpec;

/// Nonzero nuisance coefficients following the tested one.
pub const SIGNAL: [f64; 4] = [3.0, 1.5, 2.0, 1.0];

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "PPLR_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Example {
    /// Linear model with standard normal errors.
    LinearEx1,
    /// Logistic model.
    LogisticEx2,
}

impl Example {
    pub fn family(self) -> Family {
        match self {
            Example::LinearEx1 => Family::Gaussian,
            Example::LogisticEx2 => Family::Logistic,
        }
    }
}

impl std::str::FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "linear" => Ok(Example::LinearEx1),
            "2" | "logistic" => Ok(Example::LogisticEx2),
            other => contract(format!("unknown example '{other}' (expected 1 or 2)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub example: Example,
    pub n: usize,
    pub p: usize,
    pub delta: f64,
    pub n_reps: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        if self.p < 5 {
            return contract(format!("p must be at least 5, got {}", self.p));
        }
        if self.n <= self.p {
            return contract(format!("n must exceed p (n = {}, p = {})", self.n, self.p));
        }
        if self.n_reps == 0 {
            return contract("n_reps must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return contract(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !self.delta.is_finite() {
            return contract("delta must be finite");
        }
        Ok(())
    }

    /// `(delta / sqrt(n), 3, 1.5, 2, 1, 0, ..., 0)`.
    pub fn true_beta(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.p);
        b[0] = self.delta / (self.n as f64).sqrt();
        for (j, v) in SIGNAL.iter().enumerate() {
            b[j + 1] = *v;
        }
        b
    }
}

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Role {
    Design = 0,
    Response = 1,
}

fn stream(seed: u64, rep: usize, attempt: usize, role: Role) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((rep as u64) << 24) | ((attempt as u64) << 8) | role as u64);
    rng
}

/// One simulated sample with the coefficients that generated it.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub data: Dataset,
    pub beta_true: DVector<f64>,
}

/// Draw replicate `rep` (first attempt).
pub fn generate(design: &SimDesign, rep: usize) -> Result<Replicate> {
    generate_attempt(design, rep, 0)
}

/// Draw replicate `rep` from substream `attempt`; attempts after the first
/// replace samples that could not be fitted.
pub fn generate_attempt(design: &SimDesign, rep: usize, attempt: usize) -> Result<Replicate> {
    design.validate()?;
    let (n, p) = (design.n, design.p);
    let beta = design.true_beta();
    let mut xr = stream(design.seed, rep, attempt, Role::Design);
    let raw_x = DMatrix::from_fn(n, p, |_, _| xr.sample::<f64, _>(StandardNormal));
    // Standardize first so that beta is exactly the coefficient vector of the
    // design the estimators see.
    let placeholder = Dataset::new(raw_x, DVector::zeros(n), Family::Gaussian)?;
    let x = standardize(&placeholder, Scaling::SumSquaresN)?
        .0
        .x()
        .clone();
    let eta = &x * &beta;
    let mut yr = stream(design.seed, rep, attempt, Role::Response);
    let data = match design.example {
        Example::LinearEx1 => {
            let mut y = eta.map(|e| e + yr.sample::<f64, _>(StandardNormal));
            let m = y.mean();
            y.add_scalar_mut(-m);
            Dataset::new(x, y, Family::Gaussian)?
        }
        Example::LogisticEx2 => {
            let y = eta.map(|e| {
                if yr.random::<f64>() < sigmoid(e) {
                    1.0
                } else {
                    0.0
                }
            });
            Dataset::new(x, y, Family::Logistic)?
        }
    };
    Ok(Replicate {
        data,
        beta_true: beta,
    })
}

/// Estimation and selection accuracy of one fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub l2: f64,
    pub l1: f64,
    /// True zeros estimated as zero.
    pub c: usize,
    /// True nonzeros estimated as zero.
    pub ic: usize,
}

pub fn metrics(beta_hat: &DVector<f64>, beta_true: &DVector<f64>) -> Result<Metrics> {
    if beta_hat.len() != beta_true.len() {
        return Err(Error::Dimension(
            "estimate and truth differ in length".into(),
        ));
    }
    let err = beta_hat - beta_true;
    let mut c = 0;
    let mut ic = 0;
    for (b, t) in beta_hat.iter().zip(beta_true.iter()) {
        if *b == 0.0 {
            if *t == 0.0 {
                c += 1;
            } else {
                ic += 1;
            }
        }
    }
    Ok(Metrics {
        l2: err.norm(),
        l1: err.lp_norm(1),
        c,
        ic,
    })
}

/// `(chi^2_d quantile at (i - 0.5)/m, i-th smallest statistic)` pairs.
pub fn qq_data(statistics: &[f64], d: usize) -> Result<Vec<(f64, f64)>> {
    if statistics.is_empty() {
        return contract("QQ data needs at least one statistic");
    }
    let mut s = statistics.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() as f64;
    Ok(s.into_iter()
        .enumerate()
        .map(|(i, v)| (chi2_quantile((i as f64 + 0.5) / m, d), v))
        .collect())
}

/// Expected per-observation information `E[w(x^T beta) x x^T]` for
/// `x ~ N(0, I)`, evaluated on the coordinates `order`.
///
/// For the logistic model the expectation only involves the projection on
/// `beta`: with `s = |beta|`, `u = beta / s` and `Z ~ N(0, 1)` it equals
/// `E[w(sZ)] (I - u u^T) + E[w(sZ) Z^2] u u^T`, computed by quadrature.
pub fn population_information(
    family: Family,
    beta: &DVector<f64>,
    order: &[usize],
) -> DMatrix<f64> {
    let k = order.len();
    match family {
        Family::Gaussian => DMatrix::identity(k, k),
        Family::Logistic => {
            let s = beta.norm();
            let (a, b) = normal_weight_moments(s);
            let mut info = DMatrix::identity(k, k) * a;
            if s > 0.0 {
                let u = DVector::from_fn(k, |i, _| beta[order[i]] / s);
                info += &u * u.transpose() * (b - a);
            }
            info
        }
    }
}

/// `(E[w(sZ)], E[w(sZ) Z^2])` for the logistic variance `w = mu (1 - mu)`.
fn normal_weight_moments(s: f64) -> (f64, f64) {
    // composite Simpson on [-12, 12]
    let m = 4000;
    let h = 24.0 / m as f64;
    let mut a = 0.0;
    let mut b = 0.0;
    for i in 0..=m {
        let z = -12.0 + i as f64 * h;
        let coef = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let mu = sigmoid(s * z);
        let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let f = mu * (1.0 - mu) * phi;
        a += coef * f;
        b += coef * f * z * z;
    }
    (a * h / 3.0, b * h / 3.0)
}

/// Noncentrality of the partially penalized statistic for `H0: beta_1 = 0`
/// under the design: `delta^2 C_{11.2}` from the population information on
/// the tested coefficient and the true signal.
pub fn design_noncentrality(design: &SimDesign) -> Result<f64> {
    let order: Vec<usize> = (0..=SIGNAL.len()).collect();
    let info = population_information(design.example.family(), &design.true_beta(), &order);
    noncentral_param_from_information(&info, &DVector::from_element(1, design.delta))
}

/// What a study fits and tests in each replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub methods: Vec<Method>,
    pub penalty: PenaltySpec,
    pub test: TestOptions,
    /// Samples drawn per replicate before giving up on separation.
    pub max_attempts: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            methods: vec![Method::Pplr, Method::Plr, Method::Olr],
            penalty: PenaltySpec::scad(1.0).expect("valid default penalty"),
            test: TestOptions::default(),
            max_attempts: 10,
        }
    }
}

/// Per-method result of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub metrics: Metrics,
    pub statistic: f64,
    pub p_value: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplicateOutcome {
    Done {
        /// Aligned with [`StudyOptions::methods`].
        results: Vec<MethodOutcome>,
        /// Samples discarded for separation before this one.
        retries: usize,
    },
    /// Excluded from the aggregates.
    Failed { reason: String, retries: usize },
}

fn fit_replicate(rep: &Replicate, opts: &StudyOptions) -> Result<Vec<MethodOutcome>> {
    opts.methods
        .iter()
        .map(|&m| {
            let r = run_test(&rep.data, m, &[0], opts.penalty, &opts.test)?;
            if !r.converged() {
                return Err(Error::Contract(format!(
                    "{} fit did not converge",
                    m.as_str()
                )));
            }
            Ok(MethodOutcome {
                metrics: metrics(&r.full_fit.beta, &rep.beta_true)?,
                statistic: r.statistic,
                p_value: r.p_value,
                lambda: r.lambda_used,
            })
        })
        .collect()
}

/// Simulate and analyse replicate `rep`.
pub fn run_replicate(design: &SimDesign, rep: usize, opts: &StudyOptions) -> ReplicateOutcome {
    let mut retries = 0;
    for attempt in 0..opts.max_attempts.max(1) {
        let outcome = generate_attempt(design, rep, attempt).and_then(|r| fit_replicate(&r, opts));
        match outcome {
            Ok(results) => return ReplicateOutcome::Done { results, retries },
            Err(Error::Divergence(msg)) => {
                debug!("replicate {rep} attempt {attempt}: {msg}; redrawing");
                retries += 1;
            }
            Err(e) => {
                return ReplicateOutcome::Failed {
                    reason: e.to_string(),
                    retries,
                }
            }
        }
    }
    ReplicateOutcome::Failed {
        reason: format!("no separable-free sample in {} attempts", opts.max_attempts),
        retries,
    }
}

/// How replicates are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Thread pool capped at `threads` (all cores when `None`). Without the
    /// `parallel` feature this runs sequentially.
    #[default]
    Parallel,
    ParallelWith(usize),
}

impl Execution {
    /// Parallel execution capped by `PPLR_THREADS` when set.
    pub fn from_env() -> Result<Self> {
        match std::env::var(THREADS_ENV) {
            Ok(v) => {
                let t: usize = v.trim().parse().map_err(|_| {
                    Error::Contract(format!(
                        "{THREADS_ENV} must be a positive integer, got '{v}'"
                    ))
                })?;
                if t == 0 {
                    return contract(format!("{THREADS_ENV} must be at least 1"));
                }
                Ok(Execution::ParallelWith(t))
            }
            Err(_) => Ok(Execution::Parallel),
        }
    }
}

/// Run `job` for `0..count`, collecting results in index order.
pub fn map_replicates<T, F>(count: usize, exec: Execution, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => Ok((0..count).map(job).collect()),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            Ok((0..count).into_par_iter().map(job).collect())
        }
        #[cfg(feature = "parallel")]
        Execution::ParallelWith(t) => {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Contract(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(|| (0..count).into_par_iter().map(job).collect()))
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel | Execution::ParallelWith(_) => Ok((0..count).map(job).collect()),
    }
}

/// Mean and (for two or more values) sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let sd = (values.len() > 1)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt());
        Summary { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub l2: Summary,
    pub l1: Summary,
    /// Selection counts; absent for the unpenalized estimator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ic: Option<Summary>,
    pub rejection_rate: f64,
    /// KS distance of the statistics to `chi^2_1`.
    pub ks_chi2: f64,
    /// Per-replicate statistics in replicate order.
    pub statistics: Vec<f64>,
    pub qq_points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub design: SimDesign,
    pub completed: usize,
    pub failures: usize,
    /// Samples redrawn because a fit diverged (logistic separation).
    pub retries: usize,
    pub failure_reasons: Vec<String>,
    /// Asymptotic noncentrality and power of the level-alpha PPLR test.
    pub noncentrality: f64,
    pub theoretical_power: f64,
    pub methods: Vec<MethodSummary>,
}

impl SimReport {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

/// Run all replicates of `design` and aggregate them in replicate order.
pub fn run_study(design: &SimDesign, opts: &StudyOptions, exec: Execution) -> Result<SimReport> {
    design.validate()?;
    if opts.methods.is_empty() {
        return contract("no methods requested");
    }
    let outcomes = map_replicates(design.n_reps, exec, |rep| run_replicate(design, rep, opts))?;
    aggregate(design, opts, &outcomes)
}

fn aggregate(
    design: &SimDesign,
    opts: &StudyOptions,
    outcomes: &[ReplicateOutcome],
) -> Result<SimReport> {
    let mut done: Vec<&Vec<MethodOutcome>> = Vec::new();
    let mut retries = 0;
    let mut reasons = Vec::new();
    for (rep, o) in outcomes.iter().enumerate() {
        match o {
            ReplicateOutcome::Done {
                results,
                retries: r,
            } => {
                done.push(results);
                retries += r;
            }
            ReplicateOutcome::Failed { reason, retries: r } => {
                reasons.push(format!("replicate {rep}: {reason}"));
                retries += r;
            }
        }
    }
    if done.is_empty() {
        return Err(Error::Contract(format!(
            "all {} replicates failed; first: {}",
            outcomes.len(),
            reasons.first().map(String::as_str).unwrap_or("")
        )));
    }
    let mut methods = Vec::with_capacity(opts.methods.len());
    for (k, &m) in opts.methods.iter().enumerate() {
        let col: Vec<&MethodOutcome> = done.iter().map(|r| &r[k]).collect();
        let pick = |f: &dyn Fn(&MethodOutcome) -> f64| {
            Summary::of(&col.iter().map(|o| f(o)).collect::<Vec<_>>())
        };
        let statistics: Vec<f64> = col.iter().map(|o| o.statistic).collect();
        let penalized = m != Method::Olr;
        methods.push(MethodSummary {
            method: m,
            l2: pick(&|o| o.metrics.l2),
            l1: pick(&|o| o.metrics.l1),
            c: penalized.then(|| pick(&|o| o.metrics.c as f64)),
            ic: penalized.then(|| pick(&|o| o.metrics.ic as f64)),
            rejection_rate: col.iter().filter(|o| o.p_value < design.alpha).count() as f64
                / col.len() as f64,
            ks_chi2: ks_distance(&statistics, |x| chi2_cdf(x, 1)),
            qq_points: qq_data(&statistics, 1)?,
            statistics,
        });
    }
    let noncentrality = design_noncentrality(design)?;
    Ok(SimReport {
        design: *design,
        completed: done.len(),
        failures: reasons.len(),
        retries,
        failure_reasons: reasons,
        noncentrality,
        theoretical_power: chi2_power(design.alpha, 1, noncentrality),
        methods,
    })
}
