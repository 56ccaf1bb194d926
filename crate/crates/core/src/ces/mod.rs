//! Two-stage CES (Armington) aggregators, their dual price indices, and a
//! synthetic-economy simulator with known parameters.

mod simulate;

pub use simulate::{simulate_panel, DomesticSim, GroundTruth, SimConfig, SimOutput};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_TOLERANCE: f64 = 1e-9;

/// Microelasticity and import-source preference weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStageParams {
    sigma: f64,
    alpha: Vec<f64>,
}

impl FirstStageParams {
    pub fn new(sigma: f64, alpha: Vec<f64>) -> Result<Self> {
        check_elasticity("sigma", sigma)?;
        if alpha.is_empty() {
            return Err(Error::InvalidParameter("alpha must have at least one weight".into()));
        }
        if alpha.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha weights must be non-negative: {alpha:?}")));
        }
        let total: f64 = alpha.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::InvalidParameter(format!("alpha weights sum to {total}, not 1")));
        }
        Ok(Self { sigma, alpha })
    }

    /// Equal weights over `n` sources.
    pub fn uniform(sigma: f64, n: usize) -> Result<Self> {
        Self::new(sigma, vec![1.0 / n as f64; n])
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `gamma = 1 - sigma`, the coefficient on log price in the share equation.
    pub fn gamma(&self) -> f64 {
        1.0 - self.sigma
    }
}

/// Macroelasticity and the domestic preference weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondStageParams {
    rho: f64,
    beta: f64,
}

impl SecondStageParams {
    pub fn new(rho: f64, beta: f64) -> Result<Self> {
        check_elasticity("rho", rho)?;
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidParameter(format!("beta {beta} outside [0, 1]")));
        }
        Ok(Self { rho, beta })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `phi = ln(beta / (1 - beta))`, the intercept of the annual regression.
    pub fn phi(&self) -> f64 {
        (self.beta / (1.0 - self.beta)).ln()
    }
}

fn check_elasticity(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {value}")));
    }
    if value == 1.0 {
        return Err(Error::InvalidParameter(format!(
            "{name} = 1 is the Cobb-Douglas limit, which is not supported"
        )));
    }
    Ok(())
}

fn check_prices(prices: &[f64], n: usize) -> Result<()> {
    if prices.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{} prices for {n} preference weights",
            prices.len()
        )));
    }
    if let Some(p) = prices.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
        return Err(Error::InvalidParameter(format!("prices must be positive, got {p}")));
    }
    Ok(())
}

/// Dual first-stage price index `q = (sum_i alpha_i p_i^(1-sigma))^(1/(1-sigma))`.
pub fn price_index(prices: &[f64], params: &FirstStageParams) -> Result<f64> {
    check_prices(prices, params.alpha.len())?;
    Ok(ces_index(prices, &params.alpha, params.sigma))
}

/// `(sum_i w_i p_i^(1-e))^(1/(1-e))`, evaluated on the log scale.
fn ces_index(prices: &[f64], weights: &[f64], elasticity: f64) -> f64 {
    let g = 1.0 - elasticity;
    let terms: Vec<f64> = prices
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(p, w)| w.ln() + g * p.ln())
        .collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    (lse / g).exp()
}

/// Value shares `s_i = alpha_i (p_i / q)^(1-sigma)`.
pub fn shares(prices: &[f64], params: &FirstStageParams) -> Result<Vec<f64>> {
    let q = price_index(prices, params)?;
    let g = params.gamma();
    Ok(prices
        .iter()
        .zip(&params.alpha)
        .map(|(p, a)| if *a > 0.0 { a * (p / q).powf(g) } else { 0.0 })
        .collect())
}

/// Quantity aggregate `y` of the first-stage aggregator.
pub fn quantity_aggregate(quantities: &[f64], params: &FirstStageParams) -> Result<f64> {
    let s = params.sigma;
    let e = (s - 1.0) / s;
    let total: f64 = quantities
        .iter()
        .zip(&params.alpha)
        .map(|(x, a)| a.powf(1.0 / s) * x.powf(e))
        .sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("quantity aggregate is not positive".into()));
    }
    Ok(total.powf(1.0 / e))
}

/// Import quantities demanded at `prices` when the aggregate is `y`.
pub fn import_demands(prices: &[f64], y: f64, params: &FirstStageParams) -> Result<Vec<f64>> {
    let q = price_index(prices, params)?;
    Ok(prices
        .iter()
        .zip(&params.alpha)
        .map(|(p, a)| a * (p / q).powf(-params.sigma) * y)
        .collect())
}

/// Dual second-stage price index `v` over the domestic price `r` and `q`.
pub fn utility_price_index(r: f64, q: f64, params: &SecondStageParams) -> Result<f64> {
    check_prices(&[r, q], 2)?;
    Ok(ces_index(&[r, q], &[params.beta, 1.0 - params.beta], params.rho))
}

/// Second-stage utility `u` from domestic quantity `z` and aggregate `y`.
pub fn utility(z: f64, y: f64, params: &SecondStageParams) -> Result<f64> {
    let rho = params.rho;
    let e = (rho - 1.0) / rho;
    let total = params.beta.powf(1.0 / rho) * z.powf(e) + (1.0 - params.beta).powf(1.0 / rho) * y.powf(e);
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("utility is not positive".into()));
    }
    Ok(total.powf(1.0 / e))
}

/// Domestic quantity `z` and import aggregate `y` demanded for utility `u`.
pub fn second_stage_demands(r: f64, q: f64, u: f64, params: &SecondStageParams) -> Result<(f64, f64)> {
    let v = utility_price_index(r, q, params)?;
    let rho = params.rho;
    Ok((params.beta * (r / v).powf(-rho) * u, (1.0 - params.beta) * (q / v).powf(-rho) * u))
}

/// Relative residuals of the two duality identities, `vu = rz + qy` and
/// `qy = sum_i p_i x_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityResidual {
    pub total: f64,
    pub imports: f64,
}

impl DualityResidual {
    pub fn max(&self) -> f64 {
        self.total.abs().max(self.imports.abs())
    }
}

pub fn duality_check(
    prices: &[f64],
    quantities: &[f64],
    r: f64,
    z: f64,
    first: &FirstStageParams,
    second: &SecondStageParams,
) -> Result<DualityResidual> {
    let q = price_index(prices, first)?;
    let y = quantity_aggregate(quantities, first)?;
    let v = utility_price_index(r, q, second)?;
    let u = utility(z, y, second)?;
    let spend: f64 = prices.iter().zip(quantities).map(|(p, x)| p * x).sum();
    let relative = |a: f64, b: f64| (a - b) / a.abs().max(b.abs());
    Ok(DualityResidual {
        total: relative(v * u, r * z + q * y),
        imports: relative(q * y, spend),
    })
}
