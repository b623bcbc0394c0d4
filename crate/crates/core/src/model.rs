//! Uniform handling of the four model kinds: fitting, prediction and
//! document (de)serialization.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{
    hill_fit, hill_predict, mlp_forward, mlp_train, poly_fit, poly_predict, HillFitConfig, HillModel, MlpConfig,
    MlpModel, PolynomialModel,
};
use crate::dataset::Dataset;
use crate::designs::DoseGrid;
use crate::document::Document;
use crate::error::{Error, Result};
use crate::gp::{self, FitConfig, KrigingModel};
use crate::kernels::KernelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Kriging,
    NeuralNetwork,
    Polynomial,
    HillBased,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Kriging,
        ModelKind::NeuralNetwork,
        ModelKind::Polynomial,
        ModelKind::HillBased,
    ];

    /// Short machine name used in CSVs, file names and flags.
    pub fn key(&self) -> &'static str {
        match self {
            ModelKind::Kriging => "kriging",
            ModelKind::NeuralNetwork => "mlp",
            ModelKind::Polynomial => "polynomial",
            ModelKind::HillBased => "hill",
        }
    }

    /// Row label in comparison tables.
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Kriging => "Kriging",
            ModelKind::NeuralNetwork => "Neural network",
            ModelKind::Polynomial => "Polynomial",
            ModelKind::HillBased => "Hill-based",
        }
    }

    /// Number of estimated parameters for `d` inputs.
    pub fn n_params(&self, d: usize) -> usize {
        match self {
            ModelKind::Kriging => d + 2,
            ModelKind::NeuralNetwork => crate::baselines::mlp::N_WEIGHTS,
            ModelKind::Polynomial => crate::baselines::poly::N_TERMS,
            ModelKind::HillBased => crate::baselines::hill::N_PARAMS,
        }
    }

    /// Smallest design this model can be fitted on. The network trains on
    /// fewer runs than weights, so only its hard minimum is enforced.
    pub fn min_runs(&self, d: usize) -> usize {
        match self {
            ModelKind::NeuralNetwork => 1,
            other => other.n_params(d),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kriging" | "ok" => Ok(ModelKind::Kriging),
            "mlp" | "nn" | "neural" | "neural-network" => Ok(ModelKind::NeuralNetwork),
            "polynomial" | "poly" | "quadratic" => Ok(ModelKind::Polynomial),
            "hill" | "hill-based" => Ok(ModelKind::HillBased),
            other => Err(Error::Parse(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Per-kind fitting controls. Seeds inside are overridden per fit.
#[derive(Debug, Clone)]
pub struct ModelSettings {
    pub kernel: KernelSpec,
    pub kriging: FitConfig,
    pub mlp: MlpConfig,
    pub hill: HillFitConfig,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            kernel: KernelSpec::default(),
            kriging: FitConfig::default(),
            mlp: MlpConfig::default(),
            hill: HillFitConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Kriging(KrigingModel),
    NeuralNetwork(MlpModel),
    Polynomial(PolynomialModel),
    HillBased(HillModel),
}

impl FittedModel {
    pub fn fit(kind: ModelKind, data: &Dataset, grid: &DoseGrid, settings: &ModelSettings, seed: u64) -> Result<Self> {
        Ok(match kind {
            ModelKind::Kriging => {
                let cfg = FitConfig {
                    seed,
                    ..settings.kriging.clone()
                };
                FittedModel::Kriging(gp::fit(data, settings.kernel, &cfg)?)
            }
            ModelKind::NeuralNetwork => {
                let cfg = MlpConfig {
                    seed,
                    ..settings.mlp.clone()
                };
                FittedModel::NeuralNetwork(mlp_train(data, &cfg)?.model)
            }
            ModelKind::Polynomial => FittedModel::Polynomial(poly_fit(data)?),
            ModelKind::HillBased => {
                let cfg = HillFitConfig {
                    seed,
                    ..settings.hill.clone()
                };
                FittedModel::HillBased(hill_fit(data, grid, &cfg)?)
            }
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Kriging(_) => ModelKind::Kriging,
            FittedModel::NeuralNetwork(_) => ModelKind::NeuralNetwork,
            FittedModel::Polynomial(_) => ModelKind::Polynomial,
            FittedModel::HillBased(_) => ModelKind::HillBased,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            FittedModel::Kriging(m) => m.predict(x, false).map(|p| p.mean),
            FittedModel::NeuralNetwork(m) => Ok(mlp_forward(m, x)),
            FittedModel::Polynomial(m) => Ok(poly_predict(m, x)),
            FittedModel::HillBased(m) => hill_predict(m, x),
        }
    }

    pub fn predict_batch(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        points.iter().map(|x| self.predict(x)).collect()
    }

    pub fn to_document(&self) -> Document {
        match self {
            FittedModel::Kriging(m) => m.to_document(),
            FittedModel::NeuralNetwork(m) => m.to_document(),
            FittedModel::Polynomial(m) => m.to_document(),
            FittedModel::HillBased(m) => m.to_document(),
        }
    }

    pub fn from_document(doc: &Document) -> Result<Self> {
        Ok(match doc.kind()? {
            "kriging" => FittedModel::Kriging(KrigingModel::from_document(doc)?),
            "mlp" => FittedModel::NeuralNetwork(MlpModel::from_document(doc)?),
            "polynomial" => FittedModel::Polynomial(PolynomialModel::from_document(doc)?),
            "hill" => FittedModel::HillBased(HillModel::from_document(doc)?),
            other => return Err(Error::Parse(format!("unknown model kind {other:?}"))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse_and_count() {
        for k in ModelKind::ALL {
            assert_eq!(k.key().parse::<ModelKind>().unwrap(), k);
        }
        let counts: Vec<usize> = ModelKind::ALL.iter().map(|k| k.n_params(3)).collect();
        assert_eq!(counts, vec![5, 21, 10, 12]);
        assert!("forest".parse::<ModelKind>().is_err());
    }
}
