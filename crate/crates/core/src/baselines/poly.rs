//! Full quadratic response surface in three factors, fitted by ordinary least squares.

use nalgebra::{DMatrix, DVector, Dyn, SVD};

use crate::dataset::Dataset;
use crate::document::Document;
use crate::error::{domain, Error, Result};

pub const N_TERMS: usize = 10;

/// Term order of the coefficient vector.
pub const TERM_NAMES: [&str; N_TERMS] = ["1", "A", "B", "C", "AB", "AC", "BC", "A^2", "B^2", "C^2"];

/// Relative singular-value threshold below which the design counts as rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialModel {
    /// Intercept, A, B, C, AB, AC, BC, A², B², C².
    pub betas: [f64; N_TERMS],
}

pub fn terms(x: &[f64]) -> [f64; N_TERMS] {
    let (a, b, c) = (x[0], x[1], x[2]);
    [1.0, a, b, c, a * b, a * c, b * c, a * a, b * b, c * c]
}

fn model_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), N_TERMS, |i, j| terms(&rows[i])[j])
}

fn check_input(dataset: &Dataset) -> Result<()> {
    if dataset.n_factors() != 3 {
        return domain(format!(
            "the quadratic model needs 3 factors, dataset has {}",
            dataset.n_factors()
        ));
    }
    if dataset.n_runs() < N_TERMS {
        return domain(format!(
            "the quadratic model needs at least {N_TERMS} runs, got {}",
            dataset.n_runs()
        ));
    }
    Ok(())
}

/// Factors the model matrix, rejecting rank-deficient designs and naming the
/// columns involved in the near-null directions.
fn factored(dataset: &Dataset) -> Result<SVD<f64, Dyn, Dyn>> {
    let svd = SVD::new(model_matrix(dataset.rows()), true, true);
    let smax = svd.singular_values.max();
    let v_t = svd.v_t.as_ref().expect("V requested");
    let mut collinear = vec![false; N_TERMS];
    let mut deficient = false;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= RANK_TOL * smax {
            deficient = true;
            for j in 0..N_TERMS {
                if v_t[(k, j)].abs() > 1e-6 {
                    collinear[j] = true;
                }
            }
        }
    }
    if deficient {
        return Err(Error::SingularDesign {
            columns: (0..N_TERMS)
                .filter(|&j| collinear[j])
                .map(|j| TERM_NAMES[j].to_string())
                .collect(),
        });
    }
    Ok(svd)
}

pub fn poly_fit(dataset: &Dataset) -> Result<PolynomialModel> {
    check_input(dataset)?;
    let svd = factored(dataset)?;
    let y = DVector::from_column_slice(&dataset.responses);
    let beta = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::Domain(format!("least-squares solve failed: {e}")))?;
    let mut betas = [0.0; N_TERMS];
    betas.copy_from_slice(beta.as_slice());
    Ok(PolynomialModel { betas })
}

/// OLS standard errors `sqrt(diag(s^2 (X^T X)^{-1}))`, `s^2 = RSS / (n - 10)`.
pub fn poly_standard_errors(dataset: &Dataset, model: &PolynomialModel) -> Result<[f64; N_TERMS]> {
    check_input(dataset)?;
    let n = dataset.n_runs();
    if n <= N_TERMS {
        return domain("standard errors need more runs than coefficients");
    }
    let svd = factored(dataset)?;
    let rss: f64 = dataset
        .rows()
        .iter()
        .zip(&dataset.responses)
        .map(|(x, y)| (y - poly_predict(model, x)).powi(2))
        .sum();
    let s2 = rss / (n - N_TERMS) as f64;
    let v_t = svd.v_t.as_ref().expect("V requested");
    let mut se = [0.0; N_TERMS];
    for (j, out) in se.iter_mut().enumerate() {
        let var: f64 = svd
            .singular_values
            .iter()
            .enumerate()
            .map(|(k, s)| (v_t[(k, j)] / s).powi(2))
            .sum();
        *out = (s2 * var).sqrt();
    }
    Ok(se)
}

/// Unclamped polynomial value; may leave `[0, 1]`.
pub fn poly_predict(model: &PolynomialModel, x: &[f64]) -> f64 {
    terms(x).iter().zip(&model.betas).map(|(t, b)| t * b).sum()
}

impl PolynomialModel {
    pub fn to_document(&self) -> Document {
        let mut doc = Document::new("polynomial");
        doc.push("terms", TERM_NAMES.join(" "));
        doc.push_floats("betas", &self.betas);
        doc
    }

    pub fn from_document(doc: &Document) -> Result<Self> {
        doc.expect_kind("polynomial")?;
        let v = doc.get_floats("betas")?;
        let betas: [f64; N_TERMS] = v
            .try_into()
            .map_err(|v: Vec<f64>| Error::Parse(format!("expected {N_TERMS} coefficients, got {}", v.len())))?;
        Ok(PolynomialModel { betas })
    }
}
