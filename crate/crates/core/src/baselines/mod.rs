//! The comparison models: quadratic polynomial, Hill-based nonlinear model and
//! a small multilayer perceptron.

pub mod hill;
pub mod mlp;
pub mod poly;

pub use hill::{hill_fit, hill_predict, HillFitConfig, HillModel};
pub use mlp::{mlp_forward, mlp_train, MlpConfig, MlpFit, MlpModel, MlpTrainer};
pub use poly::{poly_fit, poly_predict, poly_standard_errors, PolynomialModel};
