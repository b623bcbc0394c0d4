//! Single-hidden-layer perceptron: three inputs, four sigmoid hidden units and
//! a linear output, with bias nodes on both layers (21 weights).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::document::Document;
use crate::error::{domain, Error, Result};
use crate::evaluation::split_seed;

pub const N_INPUTS: usize = 3;
pub const N_HIDDEN: usize = 4;
pub const N_WEIGHTS: usize = (N_INPUTS + 1) * N_HIDDEN + N_HIDDEN + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    /// `hidden_weights[i][j]`: from input `i` (row 0 is the bias node) to hidden unit `j`.
    pub hidden_weights: [[f64; N_HIDDEN]; N_INPUTS + 1],
    /// Output bias followed by one weight per hidden unit.
    pub output_weights: [f64; N_HIDDEN + 1],
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl MlpModel {
    pub fn zeros() -> Self {
        MlpModel {
            hidden_weights: [[0.0; N_HIDDEN]; N_INPUTS + 1],
            output_weights: [0.0; N_HIDDEN + 1],
        }
    }

    /// Hidden-unit activations for one input.
    pub fn hidden(&self, x: &[f64]) -> [f64; N_HIDDEN] {
        let mut h = [0.0; N_HIDDEN];
        for (j, hj) in h.iter_mut().enumerate() {
            let mut z = self.hidden_weights[0][j];
            for i in 0..N_INPUTS {
                z += self.hidden_weights[i + 1][j] * x[i];
            }
            *hj = sigmoid(z);
        }
        h
    }

    /// Flat weight vector: hidden weights row by row, then output weights.
    pub fn to_params(&self) -> [f64; N_WEIGHTS] {
        let mut p = [0.0; N_WEIGHTS];
        let mut k = 0;
        for row in &self.hidden_weights {
            for &w in row {
                p[k] = w;
                k += 1;
            }
        }
        p[k..].copy_from_slice(&self.output_weights);
        p
    }

    pub fn from_params(p: &[f64]) -> Self {
        let mut m = MlpModel::zeros();
        let mut k = 0;
        for row in m.hidden_weights.iter_mut() {
            for w in row.iter_mut() {
                *w = p[k];
                k += 1;
            }
        }
        m.output_weights.copy_from_slice(&p[k..N_WEIGHTS]);
        m
    }

    /// Mean squared error over `(xs, ys)` and its gradient by back-propagation.
    pub fn loss_and_gradient(&self, xs: &[Vec<f64>], ys: &[f64]) -> (f64, [f64; N_WEIGHTS]) {
        let n = xs.len() as f64;
        let mut loss = 0.0;
        let mut g_hidden = [[0.0; N_HIDDEN]; N_INPUTS + 1];
        let mut g_out = [0.0; N_HIDDEN + 1];
        for (x, y) in xs.iter().zip(ys) {
            let h = self.hidden(x);
            let mut out = self.output_weights[0];
            for j in 0..N_HIDDEN {
                out += self.output_weights[j + 1] * h[j];
            }
            let err = out - y;
            loss += err * err;
            let delta = 2.0 * err / n;
            g_out[0] += delta;
            for j in 0..N_HIDDEN {
                g_out[j + 1] += delta * h[j];
                let dj = delta * self.output_weights[j + 1] * h[j] * (1.0 - h[j]);
                g_hidden[0][j] += dj;
                for i in 0..N_INPUTS {
                    g_hidden[i + 1][j] += dj * x[i];
                }
            }
        }
        let grad = MlpModel {
            hidden_weights: g_hidden,
            output_weights: g_out,
        }
        .to_params();
        (loss / n, grad)
    }

    pub fn to_document(&self) -> Document {
        let mut doc = Document::new("mlp");
        for row in &self.hidden_weights {
            doc.push_floats("hidden", row);
        }
        doc.push_floats("output", &self.output_weights);
        doc
    }

    pub fn from_document(doc: &Document) -> Result<Self> {
        doc.expect_kind("mlp")?;
        let mut p = Vec::with_capacity(N_WEIGHTS);
        let mut rows = 0;
        for row in doc.get_all("hidden") {
            let v = Document::parse_floats(row)?;
            if v.len() != N_HIDDEN {
                return Err(Error::Parse(format!("hidden row needs {N_HIDDEN} weights")));
            }
            p.extend(v);
            rows += 1;
        }
        let out = doc.get_floats("output")?;
        if rows != N_INPUTS + 1 || out.len() != N_HIDDEN + 1 {
            return Err(Error::Parse("MLP document has the wrong number of weights".into()));
        }
        p.extend(out);
        Ok(MlpModel::from_params(&p))
    }
}

/// Network output; not clamped to `[0, 1]`.
pub fn mlp_forward(model: &MlpModel, x: &[f64]) -> f64 {
    let h = model.hidden(x);
    model.output_weights[0]
        + h.iter()
            .zip(&model.output_weights[1..])
            .map(|(a, w)| a * w)
            .sum::<f64>()
}

/// Weight-update rule used by [`mlp_train`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlpTrainer {
    /// Resilient back-propagation with weight backtracking (Rprop+), run
    /// until the largest gradient of half the sum of squared errors drops
    /// below `threshold` or `epochs` is reached.
    Rprop,
    /// Gradient descent with heavy-ball momentum and a step-decay schedule,
    /// always run for exactly `epochs` epochs.
    GradientDescent,
}

impl MlpTrainer {
    /// Epoch budget used when none is given: the gradient-descent schedule
    /// length, or the Rprop cap.
    pub fn default_epochs(&self) -> usize {
        match self {
            MlpTrainer::Rprop => 20_000,
            MlpTrainer::GradientDescent => 2_000,
        }
    }
}

impl std::str::FromStr for MlpTrainer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rprop" | "rprop+" => Ok(MlpTrainer::Rprop),
            "gd" | "gradient-descent" => Ok(MlpTrainer::GradientDescent),
            other => Err(Error::Parse(format!("unknown MLP trainer {other:?}"))),
        }
    }
}

impl std::fmt::Display for MlpTrainer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MlpTrainer::Rprop => "rprop",
            MlpTrainer::GradientDescent => "gd",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub trainer: MlpTrainer,
    pub restarts: usize,
    /// Epoch cap (Rprop) or exact epoch count (gradient descent).
    pub epochs: usize,
    /// Rprop stopping rule on `max |dE/dw|`, `E` half the sum of squared errors.
    pub threshold: f64,
    pub learning_rate: f64,
    /// Heavy-ball momentum coefficient.
    pub momentum: f64,
    /// The learning rate is multiplied by `decay_factor` every `decay_every` epochs.
    pub decay_every: usize,
    pub decay_factor: f64,
    /// Initial weights are uniform on `[-init_scale, init_scale]`.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            trainer: MlpTrainer::GradientDescent,
            restarts: 100,
            epochs: MlpTrainer::GradientDescent.default_epochs(),
            threshold: 0.01,
            learning_rate: 0.5,
            momentum: 0.9,
            decay_every: 1000,
            decay_factor: 0.5,
            init_scale: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpFit {
    pub model: MlpModel,
    pub training_mse: f64,
    /// Index of the restart that produced `model`.
    pub best_restart: usize,
    /// Restarts dropped because the loss became non-finite.
    pub discarded: usize,
}

fn initial_weights(config: &MlpConfig, seed: u64) -> [f64; N_WEIGHTS] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = [0.0; N_WEIGHTS];
    for w in params.iter_mut() {
        *w = rng.random_range(-config.init_scale..=config.init_scale);
    }
    params
}

fn train_gd(xs: &[Vec<f64>], ys: &[f64], config: &MlpConfig, mut params: [f64; N_WEIGHTS]) -> Option<[f64; N_WEIGHTS]> {
    let mut velocity = [0.0; N_WEIGHTS];
    let mut lr = config.learning_rate;
    for epoch in 0..config.epochs {
        if config.decay_every > 0 && epoch > 0 && epoch % config.decay_every == 0 {
            lr *= config.decay_factor;
        }
        let (loss, grad) = MlpModel::from_params(&params).loss_and_gradient(xs, ys);
        if !loss.is_finite() {
            return None;
        }
        for k in 0..N_WEIGHTS {
            velocity[k] = config.momentum * velocity[k] - lr * grad[k];
            params[k] += velocity[k];
        }
    }
    Some(params)
}

const RPROP_INCREASE: f64 = 1.2;
const RPROP_DECREASE: f64 = 0.5;
const RPROP_INITIAL_STEP: f64 = 0.1;
const RPROP_MAX_STEP: f64 = 50.0;
const RPROP_MIN_STEP: f64 = 1e-10;

fn train_rprop(xs: &[Vec<f64>], ys: &[f64], config: &MlpConfig, mut params: [f64; N_WEIGHTS]) -> Option<[f64; N_WEIGHTS]> {
    // Gradients of E = SSE / 2 are n/2 times the MSE gradients.
    let half_n = xs.len() as f64 / 2.0;
    let mut step = [RPROP_INITIAL_STEP; N_WEIGHTS];
    let mut last_grad = [0.0; N_WEIGHTS];
    let mut last_delta = [0.0; N_WEIGHTS];
    for _ in 0..config.epochs {
        let (loss, mut grad) = MlpModel::from_params(&params).loss_and_gradient(xs, ys);
        if !loss.is_finite() {
            return None;
        }
        grad.iter_mut().for_each(|g| *g *= half_n);
        if grad.iter().all(|g| g.abs() < config.threshold) {
            break;
        }
        for k in 0..N_WEIGHTS {
            let sign = grad[k] * last_grad[k];
            if sign > 0.0 {
                step[k] = (step[k] * RPROP_INCREASE).min(RPROP_MAX_STEP);
                last_delta[k] = -grad[k].signum() * step[k];
                params[k] += last_delta[k];
                last_grad[k] = grad[k];
            } else if sign < 0.0 {
                step[k] = (step[k] * RPROP_DECREASE).max(RPROP_MIN_STEP);
                params[k] -= last_delta[k];
                last_delta[k] = 0.0;
                last_grad[k] = 0.0;
            } else {
                last_delta[k] = -grad[k].signum() * step[k];
                params[k] += last_delta[k];
                last_grad[k] = grad[k];
            }
        }
    }
    Some(params)
}

fn train_once(xs: &[Vec<f64>], ys: &[f64], config: &MlpConfig, seed: u64) -> Option<(MlpModel, f64)> {
    let start = initial_weights(config, seed);
    let params = match config.trainer {
        MlpTrainer::Rprop => train_rprop(xs, ys, config, start)?,
        MlpTrainer::GradientDescent => train_gd(xs, ys, config, start)?,
    };
    let model = MlpModel::from_params(&params);
    let (loss, _) = model.loss_and_gradient(xs, ys);
    loss.is_finite().then_some((model, loss))
}

/// Full-batch training from `restarts` seeded initializations; the network
/// with the lowest training MSE wins (ties to the earliest restart).
pub fn mlp_train(dataset: &Dataset, config: &MlpConfig) -> Result<MlpFit> {
    if dataset.n_factors() != N_INPUTS {
        return domain(format!(
            "the network takes {N_INPUTS} inputs, dataset has {} factors",
            dataset.n_factors()
        ));
    }
    if dataset.n_runs() == 0 || config.restarts == 0 || config.epochs == 0 {
        return domain("training needs data, at least one restart and one epoch");
    }
    let xs = dataset.rows();
    let ys = &dataset.responses;
    let mut best: Option<(usize, MlpModel, f64)> = None;
    let mut discarded = 0;
    for r in 0..config.restarts {
        match train_once(xs, ys, config, split_seed(config.seed, r as u64)) {
            Some((m, loss)) => {
                if best.as_ref().is_none_or(|b| loss < b.2) {
                    best = Some((r, m, loss));
                }
            }
            None => discarded += 1,
        }
    }
    match best {
        Some((best_restart, model, training_mse)) => Ok(MlpFit {
            model,
            training_mse,
            best_restart,
            discarded,
        }),
        None => Err(Error::FitFailed {
            diagnostics: vec![format!("all {} restarts produced non-finite loss", config.restarts)],
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{full_factorial, DoseGrid};

    #[test]
    fn forward_examples() {
        let z = MlpModel::zeros();
        assert_eq!(z.hidden(&[0.3, 0.1, 0.9]), [0.5; 4]);
        assert_eq!(mlp_forward(&z, &[0.3, 0.1, 0.9]), 0.0);

        let mut bias = MlpModel::zeros();
        bias.output_weights[0] = 0.7;
        bias.hidden_weights[2][1] = 5.0;
        assert_eq!(mlp_forward(&bias, &[0.2, 0.4, 0.6]), 0.7);

        let mut one = MlpModel::zeros();
        one.hidden_weights[1][0] = 3f64.ln();
        one.output_weights = [0.0, 1.0, 0.0, 0.0, 0.0];
        assert!((mlp_forward(&one, &[1.0, 0.0, 0.0]) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn params_round_trip() {
        let p: Vec<f64> = (0..N_WEIGHTS).map(|k| k as f64 * 0.1 - 1.0).collect();
        let m = MlpModel::from_params(&p);
        assert_eq!(m.to_params().to_vec(), p);
        assert_eq!(N_WEIGHTS, 21);
        let back = MlpModel::from_document(&m.to_document().to_string().parse().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn constant_response_is_learned() {
        let full = full_factorial(&DoseGrid::default_grid());
        let data = Dataset::new(full.clone(), vec![0.42; 512]).unwrap();
        let cfg = MlpConfig { restarts: 20, ..Default::default() };
        let fit = mlp_train(&data, &cfg).unwrap();
        for x in &full.rows {
            assert!((mlp_forward(&fit.model, x) - 0.42).abs() < 1e-3);
        }
    }

    #[test]
    fn both_trainers_learn_a_constant() {
        let data = Dataset::new(full_factorial(&DoseGrid::default_grid()), vec![0.42; 512]).unwrap();
        for trainer in [MlpTrainer::Rprop, MlpTrainer::GradientDescent] {
            let cfg = MlpConfig { trainer, restarts: 5, epochs: trainer.default_epochs(), ..Default::default() };
            let fit = mlp_train(&data, &cfg).unwrap();
            assert!(fit.training_mse < 1e-5, "{trainer}: {}", fit.training_mse);
        }
    }

    #[test]
    fn more_restarts_never_worse() {
        let full = full_factorial(&DoseGrid::default_grid());
        let y = full.rows.iter().map(|x| 1.0 / (1.0 + 4.0 * x[0] + 2.0 * x[1] * x[2])).collect();
        let data = Dataset::new(full, y).unwrap();
        let one = mlp_train(&data, &MlpConfig { restarts: 1, epochs: 200, ..Default::default() }).unwrap();
        let many = mlp_train(&data, &MlpConfig { restarts: 8, epochs: 200, ..Default::default() }).unwrap();
        assert!(many.training_mse <= one.training_mse);
    }
}
