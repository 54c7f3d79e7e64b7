//! CSV ingestion, standardization and the bundled prostate cancer workflow.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::glm::{Dataset, Family};
use crate::inference::{olr_test, plr_test, pplr_test, TestOptions};
use crate::penalty::PenaltySpec;
use crate::solver::{fit, fit_tuned, FitProblem};

/// Which columns of a CSV file make up a regression problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub path: PathBuf,
    pub response: String,
    /// Design columns in the order they should appear; empty means "every
    /// column except the response, in header order".
    pub predictors: Vec<String>,
    pub family: Family,
}

impl TableSpec {
    pub fn new(
        path: impl Into<PathBuf>,
        response: impl Into<String>,
        predictors: &[&str],
        family: Family,
    ) -> Self {
        TableSpec {
            path: path.into(),
            response: response.into(),
            predictors: predictors.iter().map(|s| s.to_string()).collect(),
            family,
        }
    }
}

/// Read the file named in `spec`.
pub fn load_csv(spec: &TableSpec) -> Result<Dataset> {
    let label = spec.path.display().to_string();
    let text = std::fs::read_to_string(&spec.path).map_err(|e| Error::Load {
        path: label.clone(),
        message: e.to_string(),
    })?;
    parse_csv(&text, &label, &spec.response, &spec.predictors, spec.family)
}

/// Parse CSV text; `source` labels error messages.
pub fn parse_csv(
    text: &str,
    source: &str,
    response: &str,
    predictors: &[String],
    family: Family,
) -> Result<Dataset> {
    let fail = |message: String| Error::Load {
        path: source.to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| fail(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| fail(format!("column '{name}' not found in header")))
    };

    let names: Vec<String> = if predictors.is_empty() {
        header.iter().filter(|h| *h != response).cloned().collect()
    } else {
        predictors.to_vec()
    };
    if names.iter().any(|c| c == response) {
        return Err(fail(format!(
            "response '{response}' is also listed as a predictor"
        )));
    }
    let y_col = find(response)?;
    let x_cols = names.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut ys = Vec::new();
    let mut xs: Vec<f64> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| fail(format!("data row {row}: {e}")))?;
        let cell = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("");
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                return Err(fail(format!(
                    "data row {row}, column '{}': missing value",
                    header[c]
                )));
            }
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(fail(format!(
                    "data row {row}, column '{}': cannot parse '{raw}' as a number",
                    header[c]
                ))),
            }
        };
        ys.push(cell(y_col)?);
        for &c in &x_cols {
            xs.push(cell(c)?);
        }
    }
    if ys.is_empty() {
        return Err(fail("no data rows".into()));
    }
    let x = DMatrix::from_row_slice(ys.len(), x_cols.len(), &xs);
    Dataset::with_names(x, DVector::from_vec(ys), family, names).map_err(|e| fail(e.to_string()))
}

/// Column scaling convention used by [`standardize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Centered columns with `sum x^2 = n`.
    #[default]
    SumSquaresN,
    /// Centered columns with unit sample variance (`sum x^2 = n - 1`).
    UnitSampleVariance,
}

/// Means and scales removed by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Subtracted from a Gaussian response; 0 for logistic data.
    pub y_mean: f64,
    pub scaling: Scaling,
}

/// Center and scale every column; center the response of a Gaussian model.
pub fn standardize(data: &Dataset, scaling: Scaling) -> Result<(Dataset, Standardization)> {
    let n = data.n();
    let denom = match scaling {
        Scaling::SumSquaresN => n as f64,
        Scaling::UnitSampleVariance => {
            if n < 2 {
                return contract("unit sample variance needs at least two rows");
            }
            (n - 1) as f64
        }
    };
    let mut x = data.x().clone();
    let mut means = Vec::with_capacity(data.p());
    let mut scales = Vec::with_capacity(data.p());
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let m = col.mean();
        col.add_scalar_mut(-m);
        let s = (col.norm_squared() / denom).sqrt();
        if !(s > 1e-12 * m.abs().max(1.0)) {
            return contract(format!("column '{}' has zero variance", data.names()[j]));
        }
        col /= s;
        means.push(m);
        scales.push(s);
    }
    let mut y = data.y().clone();
    let y_mean = match data.family() {
        Family::Gaussian => {
            let m = y.mean();
            y.add_scalar_mut(-m);
            m
        }
        Family::Logistic => 0.0,
    };
    let out = Dataset::with_names(x, y, data.family(), data.names().to_vec())?;
    Ok((
        out,
        Standardization {
            means,
            scales,
            y_mean,
            scaling,
        },
    ))
}

impl Standardization {
    /// Intercept and slopes on the original measurement scale for
    /// coefficients fitted on the standardized design.
    pub fn to_original(&self, beta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        if beta.len() != self.scales.len() {
            return Err(Error::Dimension(
                "coefficient length does not match the transform".into(),
            ));
        }
        let slopes = DVector::from_fn(beta.len(), |j, _| beta[j] / self.scales[j]);
        let shift: f64 = slopes.iter().zip(&self.means).map(|(b, m)| b * m).sum();
        Ok((self.y_mean - shift, slopes))
    }

    /// Linear predictor for raw rows `x_raw` (on the response scale for
    /// Gaussian data, i.e. including the response mean).
    pub fn predict(&self, x_raw: &DMatrix<f64>, beta: &DVector<f64>) -> Result<DVector<f64>> {
        let (b0, slopes) = self.to_original(beta)?;
        if x_raw.ncols() != slopes.len() {
            return Err(Error::Dimension(
                "raw design width does not match the transform".into(),
            ));
        }
        Ok((x_raw * slopes).add_scalar(b0))
    }
}

/// Explained-variance ratio `||X beta||^2 / ||y - ybar||^2` on centered data.
pub fn r_squared(data: &Dataset, beta: &DVector<f64>) -> Result<f64> {
    let fitted = data.linear_predictor(beta)?;
    let ybar = data.y().mean();
    let ss_tot: f64 = data.y().iter().map(|v| (v - ybar).powi(2)).sum();
    if ss_tot == 0.0 {
        return contract("response is constant");
    }
    Ok(fitted.norm_squared() / ss_tot)
}

const PROSTATE_CSV: &str = include_str!("../../../data/prostate.csv");

pub const PROSTATE_RESPONSE: &str = "lpsa";
pub const PROSTATE_PREDICTORS: [&str; 8] = [
    "lcavol", "lweight", "age", "lbph", "svi", "lcp", "gleason", "pgg45",
];

/// The bundled prostate cancer table (97 men, raw scale).
pub fn prostate_fixture() -> Result<Dataset> {
    let predictors: Vec<String> = PROSTATE_PREDICTORS.iter().map(|s| s.to_string()).collect();
    parse_csv(
        PROSTATE_CSV,
        "data/prostate.csv",
        PROSTATE_RESPONSE,
        &predictors,
        Family::Gaussian,
    )
}

/// Prostate data as analysed: predictors with unit sample variance, centered response.
pub fn prostate_standardized() -> Result<Dataset> {
    Ok(standardize(&prostate_fixture()?, Scaling::UnitSampleVariance)?.0)
}

/// Coefficients of the least squares, fully penalized and partially
/// penalized fits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub names: Vec<String>,
    pub ls: Vec<f64>,
    pub pl: Vec<f64>,
    pub ppl: Vec<f64>,
    pub r2_ls: f64,
    pub r2_pl: f64,
    pub r2_ppl: f64,
    pub lambda_pl: f64,
    pub lambda_ppl: f64,
    /// Predictors left unpenalized in the partially penalized fit.
    pub ppl_unpenalized: Vec<String>,
}

/// Per-predictor tests of `beta_j = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PValueRow {
    pub name: String,
    pub lr: f64,
    pub plr: f64,
    pub pplr: f64,
    pub lr_statistic: f64,
    pub plr_statistic: f64,
    pub pplr_statistic: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProstateReport {
    pub coefficients: CoefficientTable,
    pub p_values: Vec<PValueRow>,
}

/// Analyse any standardized Gaussian dataset the way the prostate study
/// does: LS, fully penalized and partially penalized fits (with
/// `unpenalized` free of the penalty), then per-predictor LR, PLR and PPLR
/// tests where each PPLR test leaves only its own predictor unpenalized.
pub fn penalized_analysis(
    data: &Dataset,
    penalty: PenaltySpec,
    unpenalized: &[usize],
    opts: &TestOptions,
) -> Result<ProstateReport> {
    let ls = fit(&FitProblem::unpenalized(data), &opts.solver)?;
    let pl = fit_tuned(
        &FitProblem::new(data, penalty),
        opts.tuning,
        &opts.path,
        &opts.solver,
    )?;
    let ppl = fit_tuned(
        &FitProblem::partial(data, penalty, unpenalized)?,
        opts.tuning,
        &opts.path,
        &opts.solver,
    )?;
    let coefficients = CoefficientTable {
        names: data.names().to_vec(),
        r2_ls: r_squared(data, &ls.beta)?,
        r2_pl: r_squared(data, &pl.beta)?,
        r2_ppl: r_squared(data, &ppl.beta)?,
        ls: ls.beta.iter().copied().collect(),
        pl: pl.beta.iter().copied().collect(),
        ppl: ppl.beta.iter().copied().collect(),
        lambda_pl: pl.lambda,
        lambda_ppl: ppl.lambda,
        ppl_unpenalized: unpenalized
            .iter()
            .map(|&j| data.names()[j].clone())
            .collect(),
    };
    let mut p_values = Vec::with_capacity(data.p());
    for j in 0..data.p() {
        let lr = olr_test(data, &[j], opts)?;
        let plr = plr_test(data, &[j], penalty, opts)?;
        let pplr = pplr_test(data, &[j], penalty, opts)?;
        p_values.push(PValueRow {
            name: data.names()[j].clone(),
            lr: lr.p_value,
            plr: plr.p_value,
            pplr: pplr.p_value,
            lr_statistic: lr.statistic,
            plr_statistic: plr.statistic,
            pplr_statistic: pplr.statistic,
        });
    }
    Ok(ProstateReport {
        coefficients,
        p_values,
    })
}

/// The prostate cancer study with `svi` unpenalized in the partial fit.
pub fn prostate_analysis(penalty: PenaltySpec, opts: &TestOptions) -> Result<ProstateReport> {
    let data = prostate_standardized()?;
    let svi = data.column_index("svi").expect("fixture has svi");
    penalized_analysis(&data, penalty, &[svi], opts)
}

/// Write a header and rows of numbers as CSV.
pub fn write_csv<P: AsRef<Path>>(path: P, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| Error::Load {
        path: path.as_ref().display().to_string(),
        message: e.to_string(),
    })?;
    let wrap = |e: csv::Error| Error::Load {
        path: path.as_ref().display().to_string(),
        message: e.to_string(),
    };
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(r).map_err(wrap)?;
    }
    w.flush()?;
    Ok(())
}
