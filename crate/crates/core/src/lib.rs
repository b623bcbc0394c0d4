//! Response-surface modeling for drug-combination experiments.
//!
//! Ordinary Kriging with a nugget term ([`gp`]) on product Matérn/Gaussian
//! kernels ([`kernels`]), three baseline models ([`baselines`]), factorial
//! designs over a dose grid ([`designs`]) and a harness that fits every model
//! on every design and scores predictions over the full grid ([`evaluation`]).

pub mod baselines;
pub mod dataset;
pub mod designs;
pub mod document;
pub mod error;
pub mod evaluation;
pub mod gp;
pub mod kernels;
pub mod model;
pub mod optim;
pub mod synthetic;

pub use dataset::Dataset;
pub use designs::{full_factorial, level_subset_factorial, random_subdesign, Design, DoseGrid, Provenance};
pub use error::{Error, Result};
pub use gp::{fit, neg_log_likelihood, FitConfig, KrigingModel, Prediction};
pub use kernels::KernelSpec;
pub use model::{FittedModel, ModelKind, ModelSettings};
