use super::fe::FeEstimate;
use crate::error::{Error, Result};

/// A transformed parameter with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transformed {
    pub estimate: f64,
    pub se: f64,
}

/// `sigma = 1 - gamma`; the standard error carries over unchanged.
pub fn sigma_from_gamma(gamma: f64, se: f64) -> Transformed {
    Transformed {
        estimate: 1.0 - gamma,
        se,
    }
}

/// `rho = 1 - eta`; the standard error carries over unchanged.
pub fn rho_from_eta(eta: f64, se: f64) -> Transformed {
    Transformed { estimate: 1.0 - eta, se }
}

/// `beta = e^phi / (1 + e^phi)` with `se = beta (1 - beta) se(phi)`.
pub fn beta_from_phi(phi: f64, se: f64) -> Transformed {
    let beta = if phi >= 0.0 {
        1.0 / (1.0 + (-phi).exp())
    } else {
        let e = phi.exp();
        e / (1.0 + e)
    };
    Transformed {
        estimate: beta,
        se: beta * (1.0 - beta) * se,
    }
}

/// Microelasticity from the coefficient `coef` on log price.
pub fn delta_sigma(est: &FeEstimate, coef: &str) -> Result<Transformed> {
    let gamma = est
        .coef_of(coef)
        .ok_or_else(|| Error::InvalidParameter(format!("estimate has no coefficient {coef}")))?;
    Ok(sigma_from_gamma(gamma, est.se_of(coef).expect("same index")))
}

/// One month of the retrieved aggregate; `q` is `None` for a time with no
/// observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatePoint {
    pub time: i64,
    pub q: Option<f64>,
    pub se: Option<f64>,
}

/// First-stage aggregates `q_t = exp(-(mu_t - mu_J) / gamma)`, indexed so
/// the base time has `q = 1` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSeries {
    pub points: Vec<AggregatePoint>,
}

impl AggregateSeries {
    pub fn get(&self, time: i64) -> Option<&AggregatePoint> {
        let first = self.points.first()?.time;
        self.points.get(usize::try_from(time - first).ok()?)
    }

    pub fn gaps(&self) -> Vec<i64> {
        self.points.iter().filter(|p| p.q.is_none()).map(|p| p.time).collect()
    }
}

/// Retrieve `q_t` from the time effects of `est` and the coefficient
/// `coef` (gamma). Standard errors use the joint covariance of gamma and the
/// time effects when it is available.
pub fn recover_aggregates(est: &FeEstimate, coef: &str) -> Result<AggregateSeries> {
    let gi = est
        .index(coef)
        .ok_or_else(|| Error::InvalidParameter(format!("estimate has no coefficient {coef}")))?;
    let gamma = est.coef[gi];
    if gamma == 0.0 || !gamma.is_finite() {
        return Err(Error::UndefinedAggregate(format!("coefficient {coef} is {gamma}")));
    }
    let te = est
        .time_effects
        .as_ref()
        .ok_or_else(|| Error::UndefinedAggregate("estimate has no time effects".into()))?;
    let k = est.coef.len();
    let j1 = te.times.len() - 1;
    let (first, last) = (te.times[0], te.times[j1]);
    let mut points: Vec<AggregatePoint> = (first..=last)
        .map(|time| AggregatePoint { time, q: None, se: None })
        .collect();
    for (j, (&time, &d)) in te.times.iter().zip(&te.delta).enumerate() {
        let q = (-d / gamma).exp();
        let se = if j == j1 {
            Some(0.0)
        } else {
            te.joint_vcov.as_ref().map(|v| {
                // gradient of exp(-d / gamma) in (gamma, d)
                let dg = q * d / (gamma * gamma);
                let dd = -q / gamma;
                let var = dg * dg * v[(gi, gi)] + 2.0 * dg * dd * v[(gi, k + j)] + dd * dd * v[(k + j, k + j)];
                var.max(0.0).sqrt()
            })
        };
        points[(time - first) as usize] = AggregatePoint {
            time,
            q: Some(if j == j1 { 1.0 } else { q }),
            se,
        };
    }
    Ok(AggregateSeries { points })
}
