//! Statistical reconstruction of historical temperature from proxy records:
//! data handling, Lasso and principal-component regression, ARMA and
//! pseudo-proxy null models, block holdout evaluation and a Bayesian
//! autoregressive backcast with pathwise uncertainty.

pub mod bayes;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod lasso;
pub mod modelzoo;
pub mod nullmodels;
pub mod numerics;
pub mod optim;
pub mod rng;

pub use error::{ReconError, Result};
