//! Estimation of two-stage Armington (CES) substitution elasticities for meat
//! imports.
//!
//! The crate covers the whole chain: effective tariffs under ad valorem,
//! gate-price and tariff-rate-quota regimes ([`tariff`]), the country-by-month
//! import panel ([`trade_data`]), fixed-effects LS/2SLS with HAC covariance
//! and instrument diagnostics ([`econometrics`]), the annual second stage
//! ([`timeseries`]), the CES model with a synthetic-economy simulator
//! ([`ces`]), and the configuration-driven pipeline ([`pipeline`]).

pub mod ces;
pub mod econometrics;
pub mod error;
pub mod linalg;
pub mod period;
pub mod pipeline;
pub mod tariff;
pub mod timeseries;
pub mod trade_data;

pub use error::{Error, Result};
pub use period::Period;
