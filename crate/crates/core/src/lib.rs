//! News topic exposures and intraday/overnight return forecasting.
//!
//! The pipeline ingests company news, trains a return-supervised topic model
//! by branching collapsed Gibbs sampling, aggregates document-topic weights
//! into firm-level exposure panels, fits rolling lasso forecasts of annual
//! intraday and overnight returns, and evaluates the resulting stock
//! selections against daily return data.

pub mod corpus;
pub mod topicmodel;
pub mod econometrics;
pub mod exposure;
pub mod forecast;
pub mod backtest;
pub mod linalg;
pub mod rng;
