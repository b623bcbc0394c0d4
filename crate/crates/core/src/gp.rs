//! Ordinary Kriging with a homogeneous noise (nugget) term.
//!
//! The model is `y(x) = mu + Z(x) + eps`, with `Z` a zero-mean Gaussian
//! process whose covariance is the product kernel of [`crate::kernels`] scaled
//! by `sigma2`, and `eps ~ N(0, tau2)`. The trend `mu` is always profiled out
//! by generalized least squares; `thetas` and `sigma2` are found by
//! multi-start maximum likelihood in log space with `tau2` held fixed.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::Dataset;
use crate::document::Document;
use crate::error::{domain, Error, Result};
use crate::kernels::{correlation_product, KernelSpec};
use crate::optim::{latin_hypercube, nelder_mead, NelderMeadOptions};

/// Jitter levels tried in turn, as fractions of the mean diagonal of `C`.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

pub const DEFAULT_TAU2: f64 = 1e-4;
pub const DEFAULT_THETA_BOUNDS: (f64, f64) = (1e-3, 1e2);
pub const DEFAULT_SIGMA2_BOUNDS: (f64, f64) = (1e-6, 1e2);

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Fixed noise variance.
    pub tau2: f64,
    /// Per-dimension `(lo, hi)` range bounds. Empty means the default for
    /// every dimension; a single pair is applied to every dimension.
    pub theta_bounds: Vec<(f64, f64)>,
    pub sigma2_bounds: (f64, f64),
    pub n_restarts: usize,
    pub seed: u64,
    /// Likelihood evaluations allowed per local search.
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            tau2: DEFAULT_TAU2,
            theta_bounds: Vec::new(),
            sigma2_bounds: DEFAULT_SIGMA2_BOUNDS,
            n_restarts: 10,
            seed: 0,
            max_iters: 1500,
            tol: 1e-10,
        }
    }
}

impl FitConfig {
    fn validate(&self, d: usize) -> Result<Vec<(f64, f64)>> {
        if !(self.tau2 >= 0.0) || !self.tau2.is_finite() {
            return domain(format!("tau2 must be non-negative, got {}", self.tau2));
        }
        if self.n_restarts == 0 {
            return domain("n_restarts must be at least 1");
        }
        let bounds = match self.theta_bounds.len() {
            0 => vec![DEFAULT_THETA_BOUNDS; d],
            1 => vec![self.theta_bounds[0]; d],
            k if k == d => self.theta_bounds.clone(),
            k => return domain(format!("{k} theta bounds given for {d} dimensions")),
        };
        for &(lo, hi) in bounds.iter().chain(std::iter::once(&self.sigma2_bounds)) {
            if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
                return domain(format!("invalid bounds [{lo}, {hi}]"));
            }
        }
        Ok(bounds)
    }
}

/// Cholesky factor of `C` plus the quantities every downstream step needs.
struct Factored {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    /// `L^{-1} 1`
    l_inv_one: DVector<f64>,
    mu_hat: f64,
    /// `C^{-1} (y - mu_hat 1)`
    alpha: DVector<f64>,
    /// `(y - mu 1)^T C^{-1} (y - mu 1)`
    quad: f64,
    log_det: f64,
}

fn covariance_matrix(kernel: KernelSpec, rows: &[Vec<f64>], thetas: &[f64], sigma2: f64, tau2: f64) -> DMatrix<f64> {
    let n = rows.len();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = sigma2 + tau2;
        for j in 0..i {
            let v = sigma2 * correlation_product(kernel, &rows[i], &rows[j], thetas);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Cholesky with the escalating-jitter policy of [`JITTER_LADDER`].
fn cholesky_with_jitter(c: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = c.nrows();
    let mean_diag = c.diagonal().sum() / n as f64;
    let mut tried = Vec::new();
    for &level in &JITTER_LADDER {
        let jitter = level * mean_diag;
        let mut m = c.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(m) {
            if ch.l_dirty().diagonal().iter().all(|v| v.is_finite() && *v > 0.0) {
                return Ok((ch, jitter));
            }
        }
        tried.push(jitter);
    }
    Err(Error::IllConditioned { jitters: tried })
}

fn factor(kernel: KernelSpec, rows: &[Vec<f64>], y: &[f64], thetas: &[f64], sigma2: f64, tau2: f64) -> Result<Factored> {
    let c = covariance_matrix(kernel, rows, thetas, sigma2, tau2);
    let (chol, jitter) = cholesky_with_jitter(c)?;
    let n = rows.len();
    let l = chol.l_dirty();
    let a = l
        .solve_lower_triangular(&DVector::from_element(n, 1.0))
        .ok_or_else(|| Error::IllConditioned { jitters: vec![jitter] })?;
    let b = l
        .solve_lower_triangular(&DVector::from_column_slice(y))
        .ok_or_else(|| Error::IllConditioned { jitters: vec![jitter] })?;
    let mu_hat = a.dot(&b) / a.dot(&a);
    let w = &b - &a * mu_hat;
    let quad = w.norm_squared();
    let alpha = chol.solve(&DVector::from_iterator(n, y.iter().map(|v| v - mu_hat)));
    let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(Factored {
        chol,
        jitter,
        l_inv_one: a,
        mu_hat,
        alpha,
        quad,
        log_det,
    })
}

fn check_dataset(dataset: &Dataset) -> Result<()> {
    if dataset.n_runs() < 2 {
        return domain(format!(
            "Kriging needs at least 2 runs to profile the trend, got {}",
            dataset.n_runs()
        ));
    }
    Ok(())
}

fn check_params(d: usize, thetas: &[f64], sigma2: f64, tau2: f64) -> Result<()> {
    if thetas.len() != d {
        return domain(format!("{} ranges given for {d} dimensions", thetas.len()));
    }
    if thetas.iter().any(|t| !t.is_finite() || *t <= 0.0) {
        return domain("ranges must be positive and finite");
    }
    if !sigma2.is_finite() || sigma2 <= 0.0 {
        return domain(format!("sigma2 must be positive, got {sigma2}"));
    }
    if !tau2.is_finite() || tau2 < 0.0 {
        return domain(format!("tau2 must be non-negative, got {tau2}"));
    }
    Ok(())
}

/// Negative log-likelihood with the trend profiled out:
/// `1/2 [ln det C + (y - mu 1)^T C^{-1} (y - mu 1) + n ln 2 pi]`.
pub fn neg_log_likelihood(
    dataset: &Dataset,
    kernel: KernelSpec,
    thetas: &[f64],
    sigma2: f64,
    tau2: f64,
) -> Result<f64> {
    check_dataset(dataset)?;
    kernel.validate()?;
    check_params(dataset.n_factors(), thetas, sigma2, tau2)?;
    let f = factor(kernel, dataset.rows(), &dataset.responses, thetas, sigma2, tau2)?;
    Ok(nll_from(&f, dataset.n_runs()))
}

fn nll_from(f: &Factored, n: usize) -> f64 {
    0.5 * (f.log_det + f.quad + n as f64 * (2.0 * PI).ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: Option<f64>,
}

/// A fitted (or hand-specified) Kriging model. Immutable once built.
#[derive(Clone)]
pub struct KrigingModel {
    pub kernel: KernelSpec,
    pub thetas: Vec<f64>,
    pub sigma2: f64,
    pub tau2: f64,
    pub mu_hat: f64,
    pub design: Vec<Vec<f64>>,
    pub responses: Vec<f64>,
    /// Diagonal jitter that had to be added to factor `C`.
    pub jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    l_inv_one: DVector<f64>,
}

impl std::fmt::Debug for KrigingModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KrigingModel")
            .field("kernel", &self.kernel)
            .field("thetas", &self.thetas)
            .field("sigma2", &self.sigma2)
            .field("tau2", &self.tau2)
            .field("mu_hat", &self.mu_hat)
            .field("n", &self.design.len())
            .field("jitter", &self.jitter)
            .finish()
    }
}

impl KrigingModel {
    /// Builds a model at fixed parameters; the trend is the GLS estimate.
    pub fn new(
        kernel: KernelSpec,
        thetas: Vec<f64>,
        sigma2: f64,
        tau2: f64,
        design: Vec<Vec<f64>>,
        responses: Vec<f64>,
    ) -> Result<Self> {
        let dataset = Dataset::from_points(design, responses)?;
        Self::from_dataset(&dataset, kernel, thetas, sigma2, tau2)
    }

    pub fn from_dataset(dataset: &Dataset, kernel: KernelSpec, thetas: Vec<f64>, sigma2: f64, tau2: f64) -> Result<Self> {
        check_dataset(dataset)?;
        kernel.validate()?;
        check_params(dataset.n_factors(), &thetas, sigma2, tau2)?;
        let f = factor(kernel, dataset.rows(), &dataset.responses, &thetas, sigma2, tau2)?;
        Ok(KrigingModel {
            kernel,
            thetas,
            sigma2,
            tau2,
            mu_hat: f.mu_hat,
            design: dataset.rows().to_vec(),
            responses: dataset.responses.clone(),
            jitter: f.jitter,
            chol: f.chol,
            alpha: f.alpha,
            l_inv_one: f.l_inv_one,
        })
    }

    pub fn dimension(&self) -> usize {
        self.thetas.len()
    }

    /// Lower-triangular factor of `C = Phi + tau2 I` (plus any jitter).
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        covariance_matrix(self.kernel, &self.design, &self.thetas, self.sigma2, self.tau2)
    }

    fn gamma(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.design.len(),
            self.design
                .iter()
                .map(|xi| self.sigma2 * correlation_product(self.kernel, x, xi, &self.thetas)),
        )
    }

    /// BLUP `mu + gamma^T C^{-1} (y - mu 1)`; the variance, when requested, is
    /// that of a new noisy observation at `x` and includes the correction for
    /// estimating the trend.
    pub fn predict(&self, x: &[f64], with_variance: bool) -> Result<Prediction> {
        if x.len() != self.dimension() {
            return domain(format!(
                "point has {} coordinates, model has {}",
                x.len(),
                self.dimension()
            ));
        }
        let gamma = self.gamma(x);
        let mean = self.mu_hat + gamma.dot(&self.alpha);
        let variance = if with_variance {
            let v = self
                .chol
                .l_dirty()
                .solve_lower_triangular(&gamma)
                .ok_or_else(|| Error::IllConditioned { jitters: vec![self.jitter] })?;
            let one_c_one = self.l_inv_one.norm_squared();
            let u = 1.0 - self.l_inv_one.dot(&v);
            let s2 = self.sigma2 + self.tau2 - v.norm_squared() + u * u / one_c_one;
            Some(s2.max(0.0))
        } else {
            None
        };
        Ok(Prediction { mean, variance })
    }

    pub fn predict_batch(&self, points: &[Vec<f64>], with_variance: bool) -> Result<Vec<Prediction>> {
        points.iter().map(|x| self.predict(x, with_variance)).collect()
    }

    pub fn neg_log_likelihood(&self) -> f64 {
        let n = self.design.len();
        let l = self.chol.l_dirty();
        let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let resid = DVector::from_iterator(n, self.responses.iter().map(|y| y - self.mu_hat));
        0.5 * (log_det + resid.dot(&self.alpha) + n as f64 * (2.0 * PI).ln())
    }

    /// Draws responses at the design points from `N(mu_hat 1, C)`.
    pub fn simulate_at_design(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.design.len();
        let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
        let draw = self.chol.l_dirty().lower_triangle() * z;
        draw.iter().map(|v| v + self.mu_hat).collect()
    }

    pub fn to_document(&self) -> Document {
        let mut doc = Document::new("kriging");
        match self.kernel {
            KernelSpec::Gaussian => doc.push("kernel", "gaussian"),
            KernelSpec::Matern { p } => {
                doc.push("kernel", "matern");
                doc.push("p", p.to_string());
            }
        }
        doc.push_floats("thetas", &self.thetas);
        doc.push_float("sigma2", self.sigma2);
        doc.push_float("tau2", self.tau2);
        doc.push_float("mu_hat", self.mu_hat);
        doc.push("n", self.design.len().to_string());
        for row in &self.design {
            doc.push_floats("row", row);
        }
        doc.push_floats("responses", &self.responses);
        doc
    }

    /// Rebuilds the model and its Cholesky factor from a saved document.
    pub fn from_document(doc: &Document) -> Result<Self> {
        doc.expect_kind("kriging")?;
        let kernel = match doc.get("kernel")? {
            "gaussian" => KernelSpec::Gaussian,
            "matern" => KernelSpec::Matern {
                p: doc.get_parsed("p")?,
            },
            other => return Err(Error::Parse(format!("unknown kernel family {other:?}"))),
        };
        let thetas = doc.get_floats("thetas")?;
        let sigma2 = doc.get_float("sigma2")?;
        let tau2 = doc.get_float("tau2")?;
        let mu_hat = doc.get_float("mu_hat")?;
        let n: usize = doc.get_parsed("n")?;
        let rows = doc
            .get_all("row")
            .map(Document::parse_floats)
            .collect::<Result<Vec<_>>>()?;
        if rows.len() != n {
            return Err(Error::Parse(format!("expected {n} rows, found {}", rows.len())));
        }
        let responses = doc.get_floats("responses")?;
        let model = KrigingModel::new(kernel, thetas, sigma2, tau2, rows, responses)?;
        if (model.mu_hat - mu_hat).abs() > 1e-8 * (1.0 + mu_hat.abs()) {
            return Err(Error::Parse(format!(
                "stored trend {mu_hat} disagrees with recomputed {}",
                model.mu_hat
            )));
        }
        Ok(model)
    }
}

/// Outcome of one local search in [`fit_with_diagnostics`].
#[derive(Debug, Clone)]
pub struct RestartSummary {
    pub index: usize,
    pub start: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Maximum-likelihood fit. See [`fit_with_diagnostics`].
pub fn fit(dataset: &Dataset, kernel: KernelSpec, config: &FitConfig) -> Result<KrigingModel> {
    fit_with_diagnostics(dataset, kernel, config).map(|(m, _)| m)
}

/// Multi-start Nelder–Mead over `(ln theta_1, ..., ln theta_d, ln sigma2)`.
///
/// Starts are a seeded Latin hypercube over the log-bounds box; the best local
/// optimum (ties to the lowest restart index) is polished by one more search.
pub fn fit_with_diagnostics(
    dataset: &Dataset,
    kernel: KernelSpec,
    config: &FitConfig,
) -> Result<(KrigingModel, Vec<RestartSummary>)> {
    check_dataset(dataset)?;
    kernel.validate()?;
    let d = dataset.n_factors();
    let theta_bounds = config.validate(d)?;
    let mut lower: Vec<f64> = theta_bounds.iter().map(|b| b.0.ln()).collect();
    let mut upper: Vec<f64> = theta_bounds.iter().map(|b| b.1.ln()).collect();
    lower.push(config.sigma2_bounds.0.ln());
    upper.push(config.sigma2_bounds.1.ln());

    let rows = dataset.rows();
    let y = &dataset.responses;
    let n = dataset.n_runs();
    let tau2 = config.tau2;
    let objective = |z: &[f64]| -> f64 {
        let thetas: Vec<f64> = z[..d].iter().map(|v| v.exp()).collect();
        let sigma2 = z[d].exp();
        match factor(kernel, rows, y, &thetas, sigma2, tau2) {
            Ok(f) => nll_from(&f, n),
            Err(_) => f64::INFINITY,
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let starts: Vec<Vec<f64>> = latin_hypercube(&mut rng, config.n_restarts, d + 1)
        .into_iter()
        .map(|u| {
            let mut z: Vec<f64> = u
                .iter()
                .zip(lower.iter().zip(&upper))
                .map(|(u, (lo, hi))| lo + u * (hi - lo))
                .collect();
            // Start the variance at its noise-free profile optimum for these
            // ranges; the likelihood is badly scaled far from it.
            let thetas: Vec<f64> = z[..d].iter().map(|v| v.exp()).collect();
            if let Ok(f) = factor(kernel, rows, y, &thetas, 1.0, 0.0) {
                let s = (f.quad / n as f64).ln();
                if s.is_finite() {
                    z[d] = s.clamp(lower[d], upper[d]);
                }
            }
            z
        })
        .collect();

    let opts = NelderMeadOptions {
        max_evals: config.max_iters,
        f_tol: config.tol,
        x_tol: 1e-6,
        initial_step: 1.0,
    };
    let mut summaries = Vec::with_capacity(starts.len());
    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    for (index, start) in starts.into_iter().enumerate() {
        let m = nelder_mead(objective, &start, &lower, &upper, &opts);
        if m.value.is_finite() && best.as_ref().is_none_or(|b| m.value < b.2) {
            best = Some((index, m.x.clone(), m.value));
        }
        summaries.push(RestartSummary {
            index,
            start,
            value: m.value,
            evals: m.evals,
            converged: m.converged,
        });
    }

    let Some((_, mut z, mut value)) = best else {
        return Err(Error::FitFailed {
            diagnostics: summaries
                .iter()
                .map(|s| format!("restart {}: no finite likelihood from start {:?}", s.index, s.start))
                .collect(),
        });
    };
    let polish = NelderMeadOptions {
        initial_step: 0.05,
        ..opts
    };
    let m = nelder_mead(objective, &z, &lower, &upper, &polish);
    if m.value < value {
        z = m.x;
        value = m.value;
    }
    debug_assert!(value.is_finite());

    let thetas: Vec<f64> = z[..d].iter().map(|v| v.exp()).collect();
    let model = KrigingModel::from_dataset(dataset, kernel, thetas, z[d].exp(), tau2)?;
    Ok((model, summaries))
}

/// Fitted parameters in `theta_1..theta_d, sigma2, trend` order, with
/// optional bootstrap standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterReport {
    pub thetas: Vec<f64>,
    pub sigma2: f64,
    pub trend: f64,
    pub sds: Option<Vec<f64>>,
}

impl ParameterReport {
    pub fn values(&self) -> Vec<f64> {
        let mut v = self.thetas.clone();
        v.push(self.sigma2);
        v.push(self.trend);
        v
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.thetas.len())
            .map(|j| format!("theta_{}", crate::designs::factor_label(j)))
            .collect();
        names.push("sigma2".into());
        names.push("trend".into());
        names
    }

    /// One line per parameter, `value(sd)` when SDs are present.
    pub fn render(&self) -> String {
        let vals = self.values();
        let cells: Vec<String> = match &self.sds {
            Some(sds) => vals.iter().zip(sds).map(|(v, s)| format!("{v:.2}({s:.2})")).collect(),
            None => vals.iter().map(|v| format!("{v:.2}")).collect(),
        };
        format!("{}\n{}\n", self.column_names().join("\t"), cells.join("\t"))
    }
}

pub fn parameter_report(model: &KrigingModel) -> ParameterReport {
    ParameterReport {
        thetas: model.thetas.clone(),
        sigma2: model.sigma2,
        trend: model.mu_hat,
        sds: None,
    }
}

/// Parametric bootstrap: draw `n_resamples` response vectors from the fitted
/// model at its own design points, refit each, and report the SD of every
/// parameter across refits. Zero resamples leaves `sds` empty.
pub fn parameter_report_bootstrap(
    model: &KrigingModel,
    config: &FitConfig,
    n_resamples: usize,
    seed: u64,
) -> Result<ParameterReport> {
    let mut report = parameter_report(model);
    if n_resamples == 0 {
        return Ok(report);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws: Vec<Vec<f64>> = Vec::with_capacity(n_resamples);
    for k in 0..n_resamples {
        let y = model.simulate_at_design(&mut rng);
        let data = Dataset::from_points(model.design.clone(), y)?;
        let cfg = FitConfig {
            tau2: model.tau2,
            seed: crate::evaluation::split_seed(seed, k as u64),
            ..config.clone()
        };
        if let Ok(refit) = fit(&data, model.kernel, &cfg) {
            draws.push(parameter_report(&refit).values());
        }
    }
    if draws.len() < 2 {
        return Err(Error::FitFailed {
            diagnostics: vec![format!("only {} of {n_resamples} bootstrap refits succeeded", draws.len())],
        });
    }
    let m = draws.len() as f64;
    let k = draws[0].len();
    let sds = (0..k)
        .map(|j| {
            let mean = draws.iter().map(|v| v[j]).sum::<f64>() / m;
            (draws.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        })
        .collect();
    report.sds = Some(sds);
    Ok(report)
}
