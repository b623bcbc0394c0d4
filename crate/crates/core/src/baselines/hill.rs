//! Hill-based combination model.
//!
//! With total dose `c = c1 + c2 + c3` and proportions `t_i = c_i / c`,
//!
//! ```text
//! y = 1 / (1 + (c / IC50(t))^gamma(t))
//! IC50(t)  = a0 + a1 t1 + a2 t2 + a3 t1 t2 + a4 t1^2 + a5 t2^2
//! gamma(t) = b0 + b1 t1 + b2 t2 + b3 t1 t2 + b4 t1^2 + b5 t2^2
//! ```
//!
//! Doses are actual dosages, recovered from standardized design rows through
//! the dose grid. Zero total dose is defined to give `y = 1`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::Dataset;
use crate::designs::DoseGrid;
use crate::document::Document;
use crate::error::{domain, Error, Result};
use crate::optim::{levenberg_marquardt, LeastSquaresProblem, LmOptions, LmTermination};

pub const N_PARAMS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct HillModel {
    pub a: [f64; 6],
    pub b: [f64; 6],
    pub dose_scale: DoseGrid,
}

/// Quadratic basis in the first two dose proportions.
fn basis(t1: f64, t2: f64) -> [f64; 6] {
    [1.0, t1, t2, t1 * t2, t1 * t1, t2 * t2]
}

fn dot6(c: &[f64], phi: &[f64; 6]) -> f64 {
    c.iter().zip(phi).map(|(a, b)| a * b).sum()
}

/// Total dose and the proportion basis for one run of actual dosages.
/// `None` for zero total dose.
fn dose_features(doses: &[f64]) -> Option<(f64, [f64; 6])> {
    let c: f64 = doses.iter().sum();
    if c == 0.0 {
        return None;
    }
    Some((c, basis(doses[0] / c, doses[1] / c)))
}

/// `1 / (1 + exp(gamma ln(c / ic50)))`, requiring `ic50 > 0`.
fn hill_response(c: f64, ic50: f64, gamma: f64) -> f64 {
    1.0 / (1.0 + (gamma * (c / ic50).ln()).exp())
}

fn doses_of(grid: &DoseGrid, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != 3 || grid.n_factors() != 3 {
        return domain("the Hill-based model needs exactly 3 factors");
    }
    let doses: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(j, &v)| grid.unstandardize(j, v))
        .collect();
    if doses.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return domain(format!("point {x:?} maps to a negative dose"));
    }
    Ok(doses)
}

impl HillModel {
    pub fn ic50(&self, t1: f64, t2: f64) -> f64 {
        dot6(&self.a, &basis(t1, t2))
    }

    pub fn gamma(&self, t1: f64, t2: f64) -> f64 {
        dot6(&self.b, &basis(t1, t2))
    }

    /// Response at actual dosages.
    pub fn predict_doses(&self, doses: &[f64]) -> Result<f64> {
        let Some((c, phi)) = dose_features(doses) else {
            return Ok(1.0);
        };
        let ic50 = dot6(&self.a, &phi);
        if !(ic50 > 0.0) || !ic50.is_finite() {
            return Err(Error::HillEvaluation(format!(
                "IC50 = {ic50} is not positive at doses {doses:?}"
            )));
        }
        Ok(hill_response(c, ic50, dot6(&self.b, &phi)))
    }

    /// Proportion-simplex points `(t1, t2)` with `t1 + t2 <= 1` where `IC50 <= 0`.
    pub fn ic50_violations(&self, step: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for i in 0..=step {
            for j in 0..=(step - i) {
                let (t1, t2) = (i as f64 / step as f64, j as f64 / step as f64);
                let v = self.ic50(t1, t2);
                if !(v > 0.0) || !v.is_finite() {
                    out.push((t1, t2));
                }
            }
        }
        out
    }

    pub fn params(&self) -> [f64; N_PARAMS] {
        let mut p = [0.0; N_PARAMS];
        p[..6].copy_from_slice(&self.a);
        p[6..].copy_from_slice(&self.b);
        p
    }

    fn from_params(p: &[f64], dose_scale: DoseGrid) -> Self {
        let mut a = [0.0; 6];
        let mut b = [0.0; 6];
        a.copy_from_slice(&p[..6]);
        b.copy_from_slice(&p[6..N_PARAMS]);
        HillModel { a, b, dose_scale }
    }

    pub fn to_document(&self) -> Document {
        let mut doc = Document::new("hill");
        doc.push_floats("a", &self.a);
        doc.push_floats("b", &self.b);
        for (name, lv) in self.dose_scale.factor_names.iter().zip(&self.dose_scale.levels) {
            doc.push("factor", name.clone());
            doc.push_floats("levels", lv);
        }
        doc
    }

    pub fn from_document(doc: &Document) -> Result<Self> {
        doc.expect_kind("hill")?;
        let a = doc.get_floats("a")?;
        let b = doc.get_floats("b")?;
        if a.len() != 6 || b.len() != 6 {
            return Err(Error::Parse("Hill model needs 6 a and 6 b coefficients".into()));
        }
        let names: Vec<String> = doc.get_all("factor").map(str::to_string).collect();
        let levels = doc
            .get_all("levels")
            .map(Document::parse_floats)
            .collect::<Result<Vec<_>>>()?;
        let grid = DoseGrid::new(names, levels)?;
        let p: Vec<f64> = a.into_iter().chain(b).collect();
        Ok(HillModel::from_params(&p, grid))
    }
}

/// Response at a standardized design point; always in `(0, 1]` when it succeeds.
pub fn hill_predict(model: &HillModel, x: &[f64]) -> Result<f64> {
    let doses = doses_of(&model.dose_scale, x)?;
    model.predict_doses(&doses)
}

#[derive(Debug, Clone)]
pub struct HillFitConfig {
    pub n_starts: usize,
    pub seed: u64,
    pub lm: LmOptions,
    /// Fits with any coefficient larger than this in magnitude count as diverged.
    pub max_abs_param: f64,
    /// Resolution of the proportion-simplex grid used for the IC50 check.
    pub simplex_steps: usize,
}

impl Default for HillFitConfig {
    fn default() -> Self {
        HillFitConfig {
            n_starts: 4,
            seed: 0,
            lm: LmOptions::default(),
            max_abs_param: 1e6,
            simplex_steps: 20,
        }
    }
}

struct HillProblem {
    /// Total dose and proportion basis per run; `None` for zero dose.
    features: Vec<Option<(f64, [f64; 6])>>,
    y: Vec<f64>,
}

impl LeastSquaresProblem for HillProblem {
    fn residuals(&self, p: &[f64]) -> Option<DVector<f64>> {
        let mut r = DVector::zeros(self.y.len());
        for (i, (f, y)) in self.features.iter().zip(&self.y).enumerate() {
            let pred = match f {
                None => 1.0,
                Some((c, phi)) => {
                    let ic50 = dot6(&p[..6], phi);
                    if !(ic50 > 0.0) {
                        return None;
                    }
                    hill_response(*c, ic50, dot6(&p[6..], phi))
                }
            };
            if !pred.is_finite() {
                return None;
            }
            r[i] = pred - y;
        }
        Some(r)
    }

    fn jacobian(&self, p: &[f64]) -> Option<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(self.y.len(), N_PARAMS);
        for (i, f) in self.features.iter().enumerate() {
            let Some((c, phi)) = f else { continue };
            let ic50 = dot6(&p[..6], phi);
            if !(ic50 > 0.0) {
                return None;
            }
            let gamma = dot6(&p[6..], phi);
            let log_u = (c / ic50).ln();
            let pw = (gamma * log_u).exp();
            let h = 1.0 / (1.0 + pw);
            // dh/dpw = -h^2; dpw/dic50 = -pw gamma / ic50; dpw/dgamma = pw ln u
            let (d_ic50, d_gamma) = if pw.is_finite() {
                (h * h * pw * gamma / ic50, -h * h * pw * log_u)
            } else {
                (0.0, 0.0)
            };
            for k in 0..6 {
                jac[(i, k)] = d_ic50 * phi[k];
                jac[(i, 6 + k)] = d_gamma * phi[k];
            }
        }
        if jac.iter().all(|v| v.is_finite()) {
            Some(jac)
        } else {
            None
        }
    }
}

/// Flags fits whose coefficients the data cannot pin down: either every
/// prediction is saturated (the Jacobian vanishes) or the column-scaled
/// Jacobian is numerically rank deficient.
fn unidentified(problem: &HillProblem, p: &[f64]) -> Option<String> {
    let Some(mut jac) = problem.jacobian(p) else {
        return Some("Jacobian not finite at the solution".into());
    };
    if jac.amax() < 1e-10 {
        return Some("predictions saturated, coefficients unidentified".into());
    }
    for k in 0..N_PARAMS {
        let norm = jac.column(k).norm();
        if norm > 0.0 {
            jac.column_mut(k).scale_mut(1.0 / norm);
        }
    }
    let sv = jac.singular_values();
    let ratio = sv.min() / sv.max();
    (ratio < 1e-10).then(|| format!("Jacobian rank deficient (singular value ratio {ratio:.1e}), coefficients unidentified"))
}

/// Nonlinear least-squares fit over `(a, b)` from several seeded starts.
///
/// A start fails when Levenberg–Marquardt does not converge, the coefficients
/// blow past `max_abs_param`, the fitted IC50 is not positive over the
/// proportion simplex, or the solution is unidentified (saturated or
/// rank-deficient Jacobian). When every start fails the result is
/// [`Error::FitFailed`] carrying one diagnostic per start.
pub fn hill_fit(dataset: &Dataset, grid: &DoseGrid, config: &HillFitConfig) -> Result<HillModel> {
    if dataset.n_runs() < N_PARAMS {
        return domain(format!(
            "the Hill-based model needs at least {N_PARAMS} runs, got {}",
            dataset.n_runs()
        ));
    }
    if config.n_starts == 0 {
        return domain("n_starts must be at least 1");
    }
    let doses = dataset
        .rows()
        .iter()
        .map(|x| doses_of(grid, x))
        .collect::<Result<Vec<_>>>()?;
    let problem = HillProblem {
        features: doses.iter().map(|d| dose_features(d)).collect(),
        y: dataset.responses.clone(),
    };

    let mut totals: Vec<f64> = doses.iter().map(|d| d.iter().sum()).collect();
    totals.sort_by(f64::total_cmp);
    let median = {
        let m = totals.len();
        if m % 2 == 1 {
            totals[m / 2]
        } else {
            0.5 * (totals[m / 2 - 1] + totals[m / 2])
        }
    };
    let a0 = if median > 0.0 { median } else { totals[totals.len() - 1].max(1.0) };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let jitter: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    let mut diagnostics = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in 0..config.n_starts {
        let mut start = vec![0.0; N_PARAMS];
        start[0] = a0;
        start[6] = 1.0;
        if s > 0 {
            start[0] = a0 * (0.5 * jitter.sample(&mut rng)).exp();
            start[6] = (0.3 * jitter.sample(&mut rng)).exp();
            for k in 1..6 {
                start[k] = 0.1 * start[0] * jitter.sample(&mut rng);
                start[6 + k] = 0.1 * jitter.sample(&mut rng);
            }
        }
        let rep = levenberg_marquardt(&problem, &start, &config.lm);
        let reason = match rep.termination {
            LmTermination::Converged | LmTermination::ZeroResidual => None,
            LmTermination::MaxIterations => Some("did not converge".to_string()),
            LmTermination::Stalled => Some("no descent step".to_string()),
            LmTermination::NonFiniteStart => Some("non-finite residuals at start".to_string()),
        }
        .or_else(|| {
            rep.params
                .iter()
                .any(|v| !v.is_finite() || v.abs() > config.max_abs_param)
                .then(|| "coefficients diverged".to_string())
        })
        .or_else(|| {
            let m = HillModel::from_params(&rep.params, grid.clone());
            let bad = m.ic50_violations(config.simplex_steps);
            (!bad.is_empty()).then(|| format!("IC50 not positive at {} simplex points", bad.len()))
        })
        .or_else(|| unidentified(&problem, &rep.params));
        match reason {
            Some(r) => diagnostics.push(format!(
                "seed {} start {s}: {r} (cost {:.3e}, {} iterations)",
                config.seed, rep.cost, rep.iterations
            )),
            None => {
                if best.as_ref().is_none_or(|(c, _)| rep.cost < *c) {
                    best = Some((rep.cost, rep.params));
                }
            }
        }
    }
    match best {
        Some((_, p)) => Ok(HillModel::from_params(&p, grid.clone())),
        None => Err(Error::FitFailed { diagnostics }),
    }
}
