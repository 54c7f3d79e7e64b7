//! Likelihood ratio tests built on penalized fits.
//!
//! Three statistics of the form `T = 2 (sup PQ - sup_{H0} PQ)` are provided:
//!
//! * [`Method::Pplr`]: the tested coefficients are left unpenalized and the
//!   remaining (nuisance) coefficients carry the sparsity penalty;
//! * [`Method::Plr`]: every coefficient is penalized;
//! * [`Method::Olr`]: nothing is penalized (classical likelihood ratio).
//!
//! For the penalized versions `lambda` is chosen on the unconstrained fit and
//! reused unchanged for the null-constrained fit. Under the null hypothesis
//! the partially penalized statistic is asymptotically `chi^2_d`; under local
//! alternatives `beta_1 = delta / sqrt(n)` it is `chi^2_d(gamma)` with
//! `gamma = delta^T C_{11.2} delta` (see [`noncentral_param`]).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distribution::chi2_sf;
use crate::error::{contract, Error, Result};
use crate::glm::Dataset;
use crate::penalty::PenaltySpec;
use crate::solver::{fit, fit_tuned, FitProblem, FitResult, PathOptions, SolverOptions, Tuning};

/// Statistics within this distance below zero are rounding noise and reported as 0.
pub const NEGATIVE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pplr,
    Plr,
    Olr,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pplr => "pplr",
            Method::Plr => "plr",
            Method::Olr => "olr",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pplr" => Ok(Method::Pplr),
            "plr" => Ok(Method::Plr),
            "olr" | "lr" => Ok(Method::Olr),
            other => contract(format!("unknown test method '{other}'")),
        }
    }
}

/// Null hypothesis: a set of coefficients is zero, or `A beta = 0` with
/// orthonormal rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Hypothesis {
    ZeroSubset(Vec<usize>),
    Linear(DMatrix<f64>),
}

impl Hypothesis {
    pub fn validate(&self, p: usize) -> Result<()> {
        match self {
            Hypothesis::ZeroSubset(idx) => validate_subset(idx, p),
            Hypothesis::Linear(a) => {
                if a.ncols() != p {
                    return Err(Error::Dimension(format!(
                        "A has {} columns, p = {p}",
                        a.ncols()
                    )));
                }
                if a.nrows() == 0 || a.nrows() >= p {
                    return contract("A must have between 1 and p - 1 rows");
                }
                let gram = a * a.transpose();
                if (gram - DMatrix::identity(a.nrows(), a.nrows())).amax() > 1e-10 {
                    return contract("rows of A must be orthonormal");
                }
                Ok(())
            }
        }
    }

    pub fn df(&self) -> usize {
        match self {
            Hypothesis::ZeroSubset(idx) => idx.len(),
            Hypothesis::Linear(a) => a.nrows(),
        }
    }
}

fn validate_subset(idx: &[usize], p: usize) -> Result<()> {
    if idx.is_empty() || idx.len() >= p {
        return contract(format!(
            "tested set must have between 1 and p - 1 = {} elements, got {}",
            p.saturating_sub(1),
            idx.len()
        ));
    }
    let mut s = idx.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() != idx.len() {
        return contract("tested indices must be distinct");
    }
    if let Some(&bad) = s.iter().find(|&&j| j >= p) {
        return contract(format!("tested index {bad} out of range for p = {p}"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TestOptions {
    pub tuning: Tuning,
    pub path: PathOptions,
    pub solver: SolverOptions,
}

/// Result of one likelihood ratio test.
#[derive(Debug, Clone)]
pub struct TestReport {
    pub method: Method,
    /// Clamped at 0.
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub lambda_used: f64,
    pub full_fit: FitResult,
    pub null_fit: FitResult,
}

impl TestReport {
    pub fn converged(&self) -> bool {
        self.full_fit.converged && self.null_fit.converged
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Core routine: fit the unconstrained problem (tuning `lambda` if asked), then
/// the problem with `tested` pinned at zero at the same `lambda`.
fn ratio_test(
    problem: FitProblem<'_>,
    tested: &[usize],
    method: Method,
    opts: &TestOptions,
) -> Result<TestReport> {
    let mut full = fit_tuned(&problem, opts.tuning, &opts.path, &opts.solver)?;
    let lambda = full.lambda;

    let mut zeroed = problem.fixed_zero.clone();
    zeroed.extend_from_slice(tested);
    let mut start = full.beta.clone();
    for &j in tested {
        start[j] = 0.0;
    }
    let null_problem = problem
        .clone()
        .with_lambda(lambda)
        .with_fixed_zero(&zeroed)?
        .with_init(start);
    let mut null = fit(&null_problem, &opts.solver)?;

    // The null solution is feasible for the unconstrained problem; polishing
    // from it keeps the unconstrained maximum at least as high.
    if null.objective > full.objective {
        let polished = fit(
            &problem
                .clone()
                .with_lambda(lambda)
                .with_init(null.beta.clone()),
            &opts.solver,
        )?;
        if polished.objective > full.objective {
            full = polished;
        }
    }

    // A full fit that already satisfies the null is also the null maximum.
    if tested.iter().all(|&j| full.beta[j] == 0.0) && full.objective >= null.objective {
        null = full.clone();
    }

    let raw = 2.0 * (full.objective - null.objective);
    if raw < -NEGATIVE_SLACK {
        return Err(Error::NegativeStatistic(raw));
    }
    let statistic = raw.max(0.0);
    let df = tested.len();
    Ok(TestReport {
        method,
        statistic,
        df,
        p_value: chi2_sf(statistic, df),
        lambda_used: lambda,
        full_fit: full,
        null_fit: null,
    })
}

/// Partially penalized test of `beta_j = 0, j in tested`, with `tested` and
/// any extra `unpenalized` coordinates left free of the penalty.
pub fn partial_test(
    data: &Dataset,
    tested: &[usize],
    unpenalized: &[usize],
    penalty: PenaltySpec,
    opts: &TestOptions,
) -> Result<TestReport> {
    validate_subset(tested, data.p())?;
    if let Some(j) = tested.iter().find(|j| !unpenalized.contains(j)) {
        return contract(format!(
            "tested coefficient {j} must be unpenalized for the PPLR test"
        ));
    }
    if unpenalized.len() >= data.p() {
        return contract("PPLR needs at least one penalized coefficient");
    }
    let problem = FitProblem::partial(data, penalty, unpenalized)?;
    ratio_test(problem, tested, Method::Pplr, opts)
}

/// Partially penalized likelihood ratio test: exactly the tested coefficients
/// are unpenalized.
pub fn pplr_test(
    data: &Dataset,
    tested: &[usize],
    penalty: PenaltySpec,
    opts: &TestOptions,
) -> Result<TestReport> {
    partial_test(data, tested, tested, penalty, opts)
}

/// Fully penalized likelihood ratio test.
pub fn plr_test(
    data: &Dataset,
    tested: &[usize],
    penalty: PenaltySpec,
    opts: &TestOptions,
) -> Result<TestReport> {
    validate_subset(tested, data.p())?;
    ratio_test(FitProblem::new(data, penalty), tested, Method::Plr, opts)
}

/// Classical likelihood ratio test from unpenalized fits.
pub fn olr_test(data: &Dataset, tested: &[usize], opts: &TestOptions) -> Result<TestReport> {
    validate_subset(tested, data.p())?;
    if data.n() <= data.p() {
        return contract(format!(
            "OLR needs n > p (n = {}, p = {})",
            data.n(),
            data.p()
        ));
    }
    let o = TestOptions {
        tuning: Tuning::Fixed(0.0),
        ..*opts
    };
    ratio_test(FitProblem::unpenalized(data), tested, Method::Olr, &o)
}

/// Dispatch on `method`.
pub fn run_test(
    data: &Dataset,
    method: Method,
    tested: &[usize],
    penalty: PenaltySpec,
    opts: &TestOptions,
) -> Result<TestReport> {
    match method {
        Method::Pplr => pplr_test(data, tested, penalty, opts),
        Method::Plr => plr_test(data, tested, penalty, opts),
        Method::Olr => olr_test(data, tested, opts),
    }
}

/// Orthogonal reparametrization `beta~ = A~ beta` whose first `d` rows are a
/// given orthonormal `A`; the remaining rows span the orthogonal complement.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTransform {
    pub matrix: DMatrix<f64>,
    pub d: usize,
}

/// Complete orthonormal rows `A` (d x p) to an orthogonal `p x p` matrix.
/// Complement rows come from Gram-Schmidt on the standard basis, taking at
/// each step the basis vector with the largest residual (lowest index on ties).
pub fn linear_transform(a: &DMatrix<f64>) -> Result<LinearTransform> {
    let (d, p) = a.shape();
    if d == 0 || d > p {
        return contract("A must have between 1 and p rows");
    }
    let gram = a * a.transpose();
    if (gram - DMatrix::identity(d, d)).amax() > 1e-10 {
        return Err(Error::Contract(
            "A must have orthonormal rows (rank-deficient or unnormalized)".into(),
        ));
    }
    let mut rows: Vec<DVector<f64>> = (0..d).map(|i| a.row(i).transpose()).collect();
    let mut used = vec![false; p];
    while rows.len() < p {
        let mut best: Option<(usize, DVector<f64>, f64)> = None;
        for (j, &taken) in used.iter().enumerate() {
            if taken {
                continue;
            }
            let mut r = DVector::zeros(p);
            r[j] = 1.0;
            for _ in 0..2 {
                for q in &rows {
                    let c = q.dot(&r);
                    r.axpy(-c, q, 1.0);
                }
            }
            let norm = r.norm();
            if best.as_ref().is_none_or(|b| norm > b.2 + 1e-12) {
                best = Some((j, r, norm));
            }
        }
        let (j, r, norm) =
            best.ok_or_else(|| Error::Singular("orthogonal completion failed".into()))?;
        if norm < 1e-8 {
            return Err(Error::Singular("orthogonal completion failed".into()));
        }
        used[j] = true;
        rows.push(r / norm);
    }
    let matrix = DMatrix::from_fn(p, p, |i, j| rows[i][j]);
    Ok(LinearTransform { matrix, d })
}

impl LinearTransform {
    /// Design for the transformed coefficients: `X A~^T`, so `X beta = X~ beta~`.
    pub fn transform_dataset(&self, data: &Dataset) -> Result<Dataset> {
        if data.p() != self.matrix.ncols() {
            return Err(Error::Dimension("transform size does not match p".into()));
        }
        let x = data.x() * self.matrix.transpose();
        let names = (0..data.p())
            .map(|j| {
                if j < self.d {
                    format!("h{}", j + 1)
                } else {
                    format!("c{}", j + 1 - self.d)
                }
            })
            .collect();
        data.with_design(x, names)
    }

    pub fn to_original(&self, beta_t: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(beta_t)
    }

    pub fn to_transformed(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.matrix * beta
    }
}

/// Test `A beta = 0` by testing the first `d` transformed coefficients.
pub fn linear_test(
    data: &Dataset,
    a: &DMatrix<f64>,
    method: Method,
    penalty: PenaltySpec,
    opts: &TestOptions,
) -> Result<TestReport> {
    Hypothesis::Linear(a.clone()).validate(data.p())?;
    let t = linear_transform(a)?;
    let td = t.transform_dataset(data)?;
    let tested: Vec<usize> = (0..t.d).collect();
    run_test(&td, method, &tested, penalty, opts)
}

/// Blocks of the active-set information, tested coordinates first.
#[derive(Debug, Clone)]
pub struct FisherBlocks {
    pub c11: DMatrix<f64>,
    pub c12: DMatrix<f64>,
    pub c21: DMatrix<f64>,
    pub c22: DMatrix<f64>,
    /// `C11 - C12 C22^{-1} C21`.
    pub c11_2: DMatrix<f64>,
}

impl FisherBlocks {
    /// Partition `info` with the first `d` rows/columns as the tested block.
    pub fn from_information(info: &DMatrix<f64>, d: usize) -> Result<Self> {
        let k = info.nrows();
        if d == 0 || d > k || info.ncols() != k {
            return contract("invalid information partition");
        }
        let s = k - d;
        let c11 = info.view((0, 0), (d, d)).into_owned();
        let c12 = info.view((0, d), (d, s)).into_owned();
        let c21 = info.view((d, 0), (s, d)).into_owned();
        let c22 = info.view((d, d), (s, s)).into_owned();
        let c11_2 = if s == 0 {
            c11.clone()
        } else {
            let chol = c22.clone().cholesky().ok_or_else(|| {
                Error::Singular("nuisance information block is not positive definite".into())
            })?;
            &c11 - &c12 * chol.solve(&c21)
        };
        Ok(FisherBlocks {
            c11,
            c12,
            c21,
            c22,
            c11_2,
        })
    }
}

/// `delta^T C11.2 delta` from the information at `beta0` on the active set.
pub fn noncentral_param(
    data: &Dataset,
    beta0: &DVector<f64>,
    active: &[usize],
    tested: &[usize],
    delta: &DVector<f64>,
) -> Result<f64> {
    if delta.len() != tested.len() {
        return Err(Error::Dimension(
            "delta length must equal the number of tested coefficients".into(),
        ));
    }
    if let Some(j) = tested.iter().find(|j| !active.contains(j)) {
        return contract(format!("tested index {j} is not in the active set"));
    }
    let mut order: Vec<usize> = tested.to_vec();
    order.extend(active.iter().copied().filter(|j| !tested.contains(j)));
    let info = data.fisher_information(beta0, &order)?;
    noncentral_param_from_information(&info, delta)
}

/// `delta^T C11.2 delta` for an information matrix already ordered tested-first.
pub fn noncentral_param_from_information(info: &DMatrix<f64>, delta: &DVector<f64>) -> Result<f64> {
    let blocks = FisherBlocks::from_information(info, delta.len())?;
    Ok((delta.transpose() * &blocks.c11_2 * delta)[(0, 0)])
}
