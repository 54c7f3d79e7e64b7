//! Log-likelihood, score and information for the two canonical-link families.
//!
//! Only the Gaussian (identity link, unit variance) and Bernoulli (logit link)
//! families are provided. Adding a family means extending [`Family`] and the
//! three per-observation quantities below: the log density, the mean
//! `mu(eta)` and the variance function `v(mu)`; with a canonical link the
//! score is always `X^T (y - mu)` and the information `X^T diag(v) X`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Linear model with identity link and error variance fixed at 1.
    Gaussian,
    /// Bernoulli response with logit link.
    Logistic,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "linear" => Ok(Family::Gaussian),
            "logistic" | "binomial" | "bernoulli" => Ok(Family::Logistic),
            other => contract(format!("unknown family '{other}'")),
        }
    }
}

/// Design matrix, response and family for `n` independent observations.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    family: Family,
    names: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, family: Family) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(x, y, family, names)
    }

    pub fn with_names(
        x: DMatrix<f64>,
        y: DVector<f64>,
        family: Family,
        names: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return contract("dataset needs at least one row and one column");
        }
        if y.len() != n {
            return Err(Error::Dimension(format!(
                "response has length {} but design has {n} rows",
                y.len()
            )));
        }
        if names.len() != p {
            return Err(Error::Dimension(format!(
                "{} column names for {p} columns",
                names.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return contract("dataset contains non-finite values");
        }
        if family == Family::Logistic && y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return contract("logistic response must be coded 0/1");
        }
        Ok(Dataset {
            x,
            y,
            family,
            names,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Index of the column called `name`.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|c| c == name)
    }

    /// Same observations with the design replaced (used by reparametrized tests).
    pub fn with_design(&self, x: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        Self::with_names(x, self.y.clone(), self.family, names)
    }

    fn check_beta(&self, beta: &DVector<f64>) -> Result<()> {
        if beta.len() != self.p() {
            return Err(Error::Dimension(format!(
                "coefficient vector has length {} but p = {}",
                beta.len(),
                self.p()
            )));
        }
        Ok(())
    }

    /// Linear predictor `X beta`.
    pub fn linear_predictor(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_beta(beta)?;
        Ok(&self.x * beta)
    }

    /// Log-likelihood summed over observations, in natural-log units.
    pub fn log_likelihood(&self, beta: &DVector<f64>) -> Result<f64> {
        let eta = self.linear_predictor(beta)?;
        Ok(log_likelihood_from_eta(self.family, &self.y, &eta))
    }

    /// Gradient of the log-likelihood, `X^T (y - mu)`.
    pub fn score(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        let eta = self.linear_predictor(beta)?;
        let resid = DVector::from_iterator(
            self.n(),
            self.y
                .iter()
                .zip(eta.iter())
                .map(|(&y, &e)| y - mean(self.family, e)),
        );
        Ok(self.x.tr_mul(&resid))
    }

    /// Log-likelihood, score and observed information in one pass.
    pub fn evaluate(&self, beta: &DVector<f64>) -> Result<LikelihoodEval> {
        let eta = self.linear_predictor(beta)?;
        let loglik = log_likelihood_from_eta(self.family, &self.y, &eta);
        let mu = eta.map(|e| mean(self.family, e));
        let score = self.x.tr_mul(&(&self.y - &mu));
        let weights = mu.map(|m| variance(self.family, m));
        let neg_hessian = weighted_gram(&self.x, &weights, None);
        Ok(LikelihoodEval {
            loglik,
            score,
            neg_hessian,
        })
    }

    /// Per-observation information `(1/n) X^T W X` restricted to `subset`
    /// (rows and columns in the order given). Observed and expected
    /// information coincide for canonical links.
    pub fn fisher_information(
        &self,
        beta: &DVector<f64>,
        subset: &[usize],
    ) -> Result<DMatrix<f64>> {
        if subset.is_empty() {
            return contract("fisher_information needs a non-empty subset");
        }
        if let Some(&bad) = subset.iter().find(|&&j| j >= self.p()) {
            return contract(format!(
                "subset index {bad} out of range for p = {}",
                self.p()
            ));
        }
        let eta = self.linear_predictor(beta)?;
        let weights = eta.map(|e| variance(self.family, mean(self.family, e)));
        let mut info = weighted_gram(&self.x, &weights, Some(subset));
        info /= self.n() as f64;
        Ok(info)
    }
}

/// Log-likelihood, score and negative Hessian at one coefficient vector.
#[derive(Debug, Clone)]
pub struct LikelihoodEval {
    pub loglik: f64,
    pub score: DVector<f64>,
    pub neg_hessian: DMatrix<f64>,
}

/// `log(1 + exp(eta))` without overflow.
#[inline]
pub fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn mean(family: Family, eta: f64) -> f64 {
    match family {
        Family::Gaussian => eta,
        Family::Logistic => sigmoid(eta),
    }
}

#[inline]
pub(crate) fn variance(family: Family, mu: f64) -> f64 {
    match family {
        Family::Gaussian => 1.0,
        Family::Logistic => mu * (1.0 - mu),
    }
}

/// Contribution of a single observation to the log-likelihood.
#[inline]
pub(crate) fn obs_loglik(family: Family, y: f64, eta: f64) -> f64 {
    match family {
        Family::Gaussian => {
            let r = y - eta;
            -0.5 * r * r - 0.5 * LN_2PI
        }
        Family::Logistic => y * eta - softplus(eta),
    }
}

pub(crate) fn log_likelihood_from_eta(family: Family, y: &DVector<f64>, eta: &DVector<f64>) -> f64 {
    y.iter()
        .zip(eta.iter())
        .map(|(&yi, &ei)| obs_loglik(family, yi, ei))
        .sum()
}

fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>, subset: Option<&[usize]>) -> DMatrix<f64> {
    let cols: Vec<usize> = match subset {
        Some(s) => s.to_vec(),
        None => (0..x.ncols()).collect(),
    };
    let k = cols.len();
    let mut out = DMatrix::zeros(k, k);
    for a in 0..k {
        let ca = x.column(cols[a]);
        for b in a..k {
            let cb = x.column(cols[b]);
            let v: f64 = ca
                .iter()
                .zip(cb.iter())
                .zip(w.iter())
                .map(|((&u, &v), &wi)| u * v * wi)
                .sum();
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize, family: Family) -> Dataset {
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(n, |_, _| match family {
            Family::Gaussian => rng.random_range(-3.0..3.0),
            Family::Logistic => f64::from(rng.random_bool(0.5) as u8),
        });
        Dataset::new(x, y, family).unwrap()
    }

    #[test]
    fn gaussian_zero_residual_is_constant_term() {
        let d = Dataset::new(DMatrix::zeros(1, 1), DVector::zeros(1), Family::Gaussian).unwrap();
        let ll = d.log_likelihood(&DVector::zeros(1)).unwrap();
        assert!((ll + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
        assert!((ll + 0.9189).abs() < 1e-4);
    }

    #[test]
    fn logistic_zero_predictor_is_log_half() {
        let d = Dataset::new(
            DMatrix::zeros(1, 1),
            DVector::from_element(1, 1.0),
            Family::Logistic,
        )
        .unwrap();
        for b in [-5.0, 0.0, 12.0] {
            let ll = d.log_likelihood(&DVector::from_element(1, b)).unwrap();
            assert!((ll - 0.5f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn logistic_two_point_value() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let y = DVector::from_column_slice(&[1.0, 0.0]);
        let d = Dataset::new(x, y, Family::Logistic).unwrap();
        let ll = d.log_likelihood(&DVector::from_element(1, 2.0)).unwrap();
        // y=1 at eta=2 and y=0 at eta=-2 both contribute log(sigmoid(2))
        let oracle = 2.0 * (1.0 / (1.0 + (-2.0f64).exp())).ln();
        assert!((ll - oracle).abs() < 1e-14);
        assert!((ll + 0.2538).abs() < 1e-4);
    }

    #[test]
    fn logistic_is_stable_for_huge_eta() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let y = DVector::from_column_slice(&[0.0, 1.0]);
        let d = Dataset::new(x, y, Family::Logistic).unwrap();
        let ll = d.log_likelihood(&DVector::from_element(1, 800.0)).unwrap();
        assert!(ll.is_finite());
        assert!((ll + 1600.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_score_vanishes_at_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_dataset(&mut rng, 40, 4, Family::Gaussian);
        let xtx = d.x().tr_mul(d.x());
        let beta = xtx.cholesky().unwrap().solve(&d.x().tr_mul(d.y()));
        let s = d.score(&beta).unwrap();
        assert!(s.amax() < 1e-8);
    }

    #[test]
    fn score_and_hessian_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for case in 0..100 {
            let family = if case % 2 == 0 {
                Family::Gaussian
            } else {
                Family::Logistic
            };
            let n = rng.random_range(5..30);
            let p = rng.random_range(1..5);
            let d = random_dataset(&mut rng, n, p, family);
            let beta = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
            let eval = d.evaluate(&beta).unwrap();
            for j in 0..p {
                let mut up = beta.clone();
                let mut dn = beta.clone();
                up[j] += h;
                dn[j] -= h;
                let fd =
                    (d.log_likelihood(&up).unwrap() - d.log_likelihood(&dn).unwrap()) / (2.0 * h);
                assert!(
                    (eval.score[j] - fd).abs() <= 1e-5,
                    "score {j}: {} vs {fd}",
                    eval.score[j]
                );
                let ds = (d.score(&up).unwrap() - d.score(&dn).unwrap()) / (2.0 * h);
                for k in 0..p {
                    assert!((eval.neg_hessian[(k, j)] + ds[k]).abs() <= 1e-4);
                }
            }
            let nh = &eval.neg_hessian;
            let scale = nh.amax().max(1.0);
            assert!((nh - nh.transpose()).amax() <= 1e-12 * scale);
        }
    }

    #[test]
    fn gaussian_hessian_is_gram_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_dataset(&mut rng, 20, 3, Family::Gaussian);
        let eval = d.evaluate(&DVector::from_element(3, 0.7)).unwrap();
        assert!((eval.neg_hessian - d.x().tr_mul(d.x())).amax() < 1e-12);
    }

    #[test]
    fn fisher_matches_outer_product_accumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = random_dataset(&mut rng, 25, 5, Family::Logistic);
        let beta = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let subset = [3, 0, 4];
        let info = d.fisher_information(&beta, &subset).unwrap();
        let mut oracle = DMatrix::<f64>::zeros(3, 3);
        for i in 0..d.n() {
            let eta: f64 = (0..5).map(|j| d.x()[(i, j)] * beta[j]).sum();
            let m = 1.0 / (1.0 + (-eta).exp());
            for (a, &ja) in subset.iter().enumerate() {
                for (b, &jb) in subset.iter().enumerate() {
                    oracle[(a, b)] += m * (1.0 - m) * d.x()[(i, ja)] * d.x()[(i, jb)];
                }
            }
        }
        oracle /= d.n() as f64;
        assert!((info - oracle).amax() < 1e-10);
    }

    #[test]
    fn logistic_fisher_at_zero_is_quarter_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = random_dataset(&mut rng, 30, 3, Family::Logistic);
        let info = d
            .fisher_information(&DVector::zeros(3), &[0, 1, 2])
            .unwrap();
        let oracle = d.x().tr_mul(d.x()) * (0.25 / 30.0);
        assert!((info - oracle).amax() < 1e-14);
    }

    #[test]
    fn loglik_invariant_under_row_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = random_dataset(&mut rng, 15, 3, Family::Logistic);
        let beta = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let perm: Vec<usize> = (0..15).rev().collect();
        let x = DMatrix::from_fn(15, 3, |i, j| d.x()[(perm[i], j)]);
        let y = DVector::from_fn(15, |i, _| d.y()[perm[i]]);
        let dp = Dataset::new(x, y, Family::Logistic).unwrap();
        let a = d.log_likelihood(&beta).unwrap();
        let b = dp.log_likelihood(&beta).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(a <= 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Dataset::new(DMatrix::zeros(2, 1), DVector::zeros(3), Family::Gaussian).is_err());
        assert!(Dataset::new(
            DMatrix::zeros(2, 1),
            DVector::from_column_slice(&[0.0, 0.5]),
            Family::Logistic
        )
        .is_err());
        let d = Dataset::new(DMatrix::zeros(2, 2), DVector::zeros(2), Family::Gaussian).unwrap();
        assert!(d.log_likelihood(&DVector::zeros(3)).is_err());
        assert!(d.fisher_information(&DVector::zeros(2), &[]).is_err());
    }
}
