//! Cyclic coordinate ascent for the partially penalized likelihood
//!
//! `PQ(beta) = L(beta) - n * sum_{j penalized} p_lambda(|beta_j|)`,
//!
//! with optional coefficients pinned at zero, warm-started regularization
//! paths and BIC selection of `lambda`.

use log::warn;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::glm::{mean, obs_loglik, variance, Dataset, Family};
use crate::penalty::PenaltySpec;

/// Linear predictors beyond this magnitude are treated as divergence
/// (fitted probabilities within `exp(-50)` of 0 or 1).
const ETA_LIMIT: f64 = 50.0;
const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop when the largest coordinate change in a sweep falls below this.
    pub tol: f64,
    /// Maximum number of full sweeps.
    pub max_iter: usize,
    /// Record the objective after every sweep in [`FitResult::trace`].
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-7,
            max_iter: 10_000,
            record_trace: false,
        }
    }
}

/// One maximization problem: data, penalty, which coordinates are penalized
/// and which are constrained to zero.
#[derive(Debug, Clone)]
pub struct FitProblem<'a> {
    pub data: &'a Dataset,
    pub penalty: PenaltySpec,
    pub penalized: Vec<bool>,
    pub fixed_zero: Vec<usize>,
    pub init: Option<DVector<f64>>,
}

impl<'a> FitProblem<'a> {
    /// Every coordinate penalized.
    pub fn new(data: &'a Dataset, penalty: PenaltySpec) -> Self {
        FitProblem {
            data,
            penalty,
            penalized: vec![true; data.p()],
            fixed_zero: Vec::new(),
            init: None,
        }
    }

    /// Every coordinate penalized except `unpenalized`.
    pub fn partial(data: &'a Dataset, penalty: PenaltySpec, unpenalized: &[usize]) -> Result<Self> {
        let mut problem = Self::new(data, penalty);
        for &j in unpenalized {
            if j >= data.p() {
                return contract(format!(
                    "unpenalized index {j} out of range for p = {}",
                    data.p()
                ));
            }
            problem.penalized[j] = false;
        }
        Ok(problem)
    }

    /// Plain maximum likelihood.
    pub fn unpenalized(data: &'a Dataset) -> Self {
        FitProblem {
            data,
            penalty: PenaltySpec::none(),
            penalized: vec![false; data.p()],
            fixed_zero: Vec::new(),
            init: None,
        }
    }

    pub fn with_fixed_zero(mut self, idx: &[usize]) -> Result<Self> {
        let mut v = idx.to_vec();
        v.sort_unstable();
        v.dedup();
        if let Some(&bad) = v.iter().find(|&&j| j >= self.data.p()) {
            return contract(format!("fixed-zero index {bad} out of range"));
        }
        self.fixed_zero = v;
        Ok(self)
    }

    pub fn with_init(mut self, init: DVector<f64>) -> Self {
        self.init = Some(init);
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.penalty = self.penalty.with_lambda(lambda);
        self
    }

    pub fn unpenalized_indices(&self) -> Vec<usize> {
        (0..self.penalized.len())
            .filter(|&j| !self.penalized[j])
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let p = self.data.p();
        if self.penalized.len() != p {
            return Err(Error::Dimension(format!(
                "penalization mask has length {} but p = {p}",
                self.penalized.len()
            )));
        }
        if let Some(init) = &self.init {
            if init.len() != p {
                return Err(Error::Dimension(format!(
                    "init has length {} but p = {p}",
                    init.len()
                )));
            }
            if init.iter().any(|v| !v.is_finite()) {
                return contract("init must be finite");
            }
        }
        Ok(())
    }

    /// `PQ(beta)` for this problem.
    pub fn objective(&self, beta: &DVector<f64>) -> Result<f64> {
        let ll = self.data.log_likelihood(beta)?;
        Ok(ll - self.penalty_total(beta))
    }

    fn penalty_total(&self, beta: &DVector<f64>) -> f64 {
        let n = self.data.n() as f64;
        let s: f64 = beta
            .iter()
            .zip(&self.penalized)
            .filter(|(_, &pen)| pen)
            .map(|(b, _)| self.penalty.value_abs(b.abs()))
            .sum();
        n * s
    }
}

/// Outcome of one coordinate-ascent run.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta: DVector<f64>,
    pub lambda: f64,
    /// `PQ` at `beta`.
    pub objective: f64,
    pub loglik: f64,
    /// Number of nonzero coefficients.
    pub df: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each sweep, if requested.
    pub trace: Vec<f64>,
}

impl FitResult {
    pub fn support(&self) -> Vec<usize> {
        (0..self.beta.len())
            .filter(|&j| self.beta[j] != 0.0)
            .collect()
    }
}

/// Maximize `PQ` by cyclic coordinate ascent.
pub fn fit(problem: &FitProblem<'_>, opts: &SolverOptions) -> Result<FitResult> {
    problem.validate()?;
    let data = problem.data;
    let (n, p) = (data.n(), data.p());
    let nf = n as f64;
    let x = data.x();
    let y = data.y();

    let mut free = vec![true; p];
    for &j in &problem.fixed_zero {
        free[j] = false;
    }
    let sumsq: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared()).collect();
    for j in 0..p {
        if free[j] && sumsq[j] <= 1e-14 * nf {
            warn!(
                "column '{}' is constant zero; coefficient pinned to 0",
                data.names()[j]
            );
            free[j] = false;
        }
    }
    let mut beta = problem.init.clone().unwrap_or_else(|| DVector::zeros(p));
    for j in 0..p {
        if !free[j] {
            beta[j] = 0.0;
        }
    }
    let specs: Vec<PenaltySpec> = problem
        .penalized
        .iter()
        .map(|&pen| {
            if pen {
                problem.penalty
            } else {
                PenaltySpec::none()
            }
        })
        .collect();

    let mut eta = x * &beta;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let family = data.family();

    // Gaussian keeps the residual, logistic keeps the current log-likelihood.
    let mut resid: DVector<f64> = y - &eta;
    let mut loglik_cur = match family {
        Family::Logistic => crate::glm::log_likelihood_from_eta(family, y, &eta),
        Family::Gaussian => 0.0,
    };

    while iterations < opts.max_iter {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if !free[j] {
                continue;
            }
            let col = x.column(j);
            let old = beta[j];
            let new = match family {
                Family::Gaussian => {
                    let w = sumsq[j] / nf;
                    let z = old + col.dot(&resid) / sumsq[j];
                    let new = specs[j].prox_unchecked(z, w);
                    if new != old {
                        resid.axpy(-(new - old), &col, 1.0);
                    }
                    new
                }
                Family::Logistic => {
                    let (mut g, mut h) = (0.0, 0.0);
                    for i in 0..n {
                        let m = mean(family, eta[i]);
                        g += col[i] * (y[i] - m);
                        h += variance(family, m) * col[i] * col[i];
                    }
                    let w = (h / nf).max(1e-10);
                    let z = old + g / (nf * w);
                    let cand = specs[j].prox_unchecked(z, w);
                    let base = loglik_cur - nf * specs[j].value_abs(old.abs());
                    let mut step = cand - old;
                    let mut accepted = old;
                    for _ in 0..=MAX_HALVINGS {
                        if step == 0.0 {
                            break;
                        }
                        let trial = old + step;
                        let ll: f64 = (0..n)
                            .map(|i| obs_loglik(family, y[i], eta[i] + col[i] * step))
                            .sum();
                        if !ll.is_finite() {
                            return Err(Error::NonFinite);
                        }
                        if ll - nf * specs[j].value_abs(trial.abs()) >= base {
                            accepted = trial;
                            loglik_cur = ll;
                            break;
                        }
                        step *= 0.5;
                    }
                    if accepted != old {
                        eta.axpy(accepted - old, &col, 1.0);
                        if eta.iter().any(|e| e.abs() > ETA_LIMIT) {
                            return Err(Error::Divergence(format!(
                                "linear predictor exceeded {ETA_LIMIT} while updating '{}'",
                                data.names()[j]
                            )));
                        }
                    }
                    accepted
                }
            };
            beta[j] = new;
            max_change = max_change.max((new - old).abs());
        }
        if opts.record_trace {
            trace.push(problem.objective(&beta)?);
        }
        if !max_change.is_finite() {
            return Err(Error::NonFinite);
        }
        if max_change < opts.tol {
            converged = true;
            break;
        }
    }

    let loglik = data.log_likelihood(&beta)?;
    let objective = loglik - problem.penalty_total(&beta);
    if !objective.is_finite() {
        return Err(Error::NonFinite);
    }
    let df = beta.iter().filter(|b| **b != 0.0).count();
    Ok(FitResult {
        beta,
        lambda: problem.penalty.lambda,
        objective,
        loglik,
        df,
        iterations,
        converged,
        trace,
    })
}

/// Grid construction for [`fit_path`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathOptions {
    pub n_lambda: usize,
    /// Smallest lambda as a fraction of the largest.
    pub min_ratio: f64,
    pub bic: BicFit,
}

/// Goodness-of-fit term of the BIC criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BicFit {
    /// `-2 L(beta_hat(lambda))` with the Gaussian scale profiled out,
    /// `n log(RSS / n)`; the plain deviance for logistic models.
    #[default]
    ProfileLikelihood,
    /// `-2 L(beta_hat(lambda))`: the log-likelihood at the penalized estimate
    /// (unit error variance for Gaussian models).
    LogLikelihood,
    /// `-2 PQ(beta_hat(lambda))`: the penalized objective itself, so the
    /// penalty paid by large coefficients also enters the criterion.
    PenalizedObjective,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions {
            n_lambda: 100,
            min_ratio: 1e-3,
            bic: BicFit::default(),
        }
    }
}

/// Smallest `lambda` at which every penalized coefficient is zero: the
/// largest `|x_j^T (y - mu)| / n` over free penalized columns, with `mu`
/// taken from the fit of the unpenalized coordinates alone.
pub fn lambda_max(problem: &FitProblem<'_>, opts: &SolverOptions) -> Result<f64> {
    let data = problem.data;
    let p = data.p();
    let mut zeroed: Vec<usize> = problem.fixed_zero.clone();
    zeroed.extend((0..p).filter(|&j| problem.penalized[j]));
    let base = FitProblem {
        data,
        penalty: PenaltySpec::none(),
        penalized: vec![false; p],
        fixed_zero: Vec::new(),
        init: None,
    }
    .with_fixed_zero(&zeroed)?;
    let beta = if zeroed.len() == p {
        DVector::zeros(p)
    } else {
        fit(&base, opts)?.beta
    };
    let eta = data.linear_predictor(&beta)?;
    let resid = DVector::from_iterator(
        data.n(),
        data.y()
            .iter()
            .zip(eta.iter())
            .map(|(&y, &e)| y - mean(data.family(), e)),
    );
    let nf = data.n() as f64;
    let lmax = (0..p)
        .filter(|&j| problem.penalized[j] && !problem.fixed_zero.contains(&j))
        .map(|j| data.x().column(j).dot(&resid).abs() / nf)
        .fold(0.0, f64::max);
    Ok(lmax)
}

/// Log-spaced descending grid from `lambda_max` to `min_ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, popts: &PathOptions) -> Vec<f64> {
    let top = lambda_max.max(1e-10);
    let k = popts.n_lambda.max(1);
    if k == 1 {
        return vec![top];
    }
    let (hi, lo) = (top.ln(), (top * popts.min_ratio).ln());
    (0..k)
        .map(|i| (hi + (lo - hi) * i as f64 / (k - 1) as f64).exp())
        .collect()
}

/// Warm-started fits along a strictly positive, descending grid.
pub fn fit_path(
    template: &FitProblem<'_>,
    lambdas: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<FitResult>> {
    if lambdas.is_empty() {
        return contract("lambda grid is empty");
    }
    if lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return contract("lambda grid must be strictly positive");
    }
    if lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return contract("lambda grid must be strictly descending");
    }
    let mut out: Vec<FitResult> = Vec::with_capacity(lambdas.len());
    for &lam in lambdas {
        let mut problem = template.clone().with_lambda(lam);
        if let Some(prev) = out.last() {
            problem.init = Some(prev.beta.clone());
        }
        out.push(fit(&problem, opts)?);
    }
    Ok(out)
}

/// Model-size weight `max(log log p, 1)` of the BIC criterion.
pub fn bic_scale(p: usize) -> f64 {
    (p as f64).ln().ln().max(1.0)
}

/// `-2 fit + C_n log(n) df`, with the fit term chosen by `kind`.
pub fn bic(fit: &FitResult, data: &Dataset, kind: BicFit) -> f64 {
    let n = data.n() as f64;
    let deviance = match (kind, data.family()) {
        (BicFit::ProfileLikelihood, Family::Gaussian) => {
            // -2 L = n log(2 pi) + RSS with unit variance
            let rss = -2.0 * fit.loglik - n * (2.0 * std::f64::consts::PI).ln();
            n * (rss.max(f64::MIN_POSITIVE) / n).ln()
        }
        (BicFit::ProfileLikelihood | BicFit::LogLikelihood, _) => -2.0 * fit.loglik,
        (BicFit::PenalizedObjective, _) => -2.0 * fit.objective,
    };
    deviance + bic_scale(data.p()) * n.ln() * fit.df as f64
}

/// Path point with the smallest BIC; ties go to the larger lambda.
pub fn select_bic(path: &[FitResult], data: &Dataset, kind: BicFit) -> Result<(f64, FitResult)> {
    let mut best: Option<(f64, &FitResult)> = None;
    for f in path {
        let b = bic(f, data, kind);
        best = match best {
            None => Some((b, f)),
            Some((bb, bf)) if b < bb || (b == bb && f.lambda > bf.lambda) => Some((b, f)),
            keep => keep,
        };
    }
    let (_, f) = best.ok_or_else(|| Error::Contract("cannot select from an empty path".into()))?;
    Ok((f.lambda, f.clone()))
}

/// How `lambda` is chosen for a penalized fit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tuning {
    /// Minimize BIC over the default grid.
    #[default]
    Bic,
    Fixed(f64),
}

/// Fit with `lambda` chosen per `tuning`. Problems without a penalized free
/// coordinate (or with no penalty) are fitted once.
pub fn fit_tuned(
    problem: &FitProblem<'_>,
    tuning: Tuning,
    popts: &PathOptions,
    opts: &SolverOptions,
) -> Result<FitResult> {
    let has_penalized = problem.penalty.kind != crate::penalty::PenaltyKind::None
        && (0..problem.data.p()).any(|j| problem.penalized[j] && !problem.fixed_zero.contains(&j));
    match tuning {
        Tuning::Fixed(l) => {
            if !(l >= 0.0 && l.is_finite()) {
                return contract(format!("lambda must be finite and >= 0, got {l}"));
            }
            fit(&problem.clone().with_lambda(l), opts)
        }
        Tuning::Bic if !has_penalized => fit(problem, opts),
        Tuning::Bic => {
            let lmax = lambda_max(problem, opts)?;
            let grid = lambda_grid(lmax, popts);
            let path = fit_path(problem, &grid, opts)?;
            Ok(select_bic(&path, problem.data, popts.bic)?.1)
        }
    }
}
