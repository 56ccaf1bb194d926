use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SpdFactor;

/// Deterministic terms in the Dickey-Fuller regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deterministic {
    None,
    Constant,
    ConstantTrend,
}

impl Deterministic {
    fn count(self) -> usize {
        match self {
            Deterministic::None => 0,
            Deterministic::Constant => 1,
            Deterministic::ConstantTrend => 2,
        }
    }
}

impl FromStr for Deterministic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "n" | "none" => Ok(Deterministic::None),
            "c" | "constant" => Ok(Deterministic::Constant),
            "ct" | "trend" => Ok(Deterministic::ConstantTrend),
            other => Err(Error::Config(format!("unknown ADF deterministic spec {other:?}"))),
        }
    }
}

impl fmt::Display for Deterministic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Deterministic::None => "n",
            Deterministic::Constant => "c",
            Deterministic::ConstantTrend => "ct",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagSelection {
    Fixed(usize),
    /// Minimize AIC over `0..=max` on a common sample, then refit.
    Aic { max: usize },
}

impl LagSelection {
    fn max(self) -> usize {
        match self {
            LagSelection::Fixed(p) | LagSelection::Aic { max: p } => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdfSpec {
    pub deterministic: Deterministic,
    pub lags: LagSelection,
}

impl Default for AdfSpec {
    fn default() -> Self {
        Self {
            deterministic: Deterministic::Constant,
            lags: LagSelection::Aic { max: 4 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdfResult {
    pub stat: f64,
    pub lags: usize,
    pub nobs: usize,
    /// Critical values at 1%, 5% and 10%.
    pub critical: [f64; 3],
}

impl AdfResult {
    pub fn critical_at(&self, significance: f64) -> Result<f64> {
        critical_index(significance).map(|i| self.critical[i])
    }

    /// Whether the unit-root null is rejected at `significance`.
    pub fn rejects(&self, significance: f64) -> Result<bool> {
        Ok(self.stat < self.critical_at(significance)?)
    }
}

fn critical_index(significance: f64) -> Result<usize> {
    [0.01, 0.05, 0.10]
        .iter()
        .position(|s| (s - significance).abs() < 1e-12)
        .ok_or_else(|| Error::Config(format!("critical values exist for 0.01, 0.05 and 0.10, not {significance}")))
}

/// MacKinnon (2010) response-surface coefficients `[b0, b1, b2, b3]` for the
/// 1%, 5% and 10% levels.
fn surface(n_vars: usize, det: Deterministic) -> Result<[[f64; 4]; 3]> {
    Ok(match (n_vars, det) {
        (1, Deterministic::None) => [
            [-2.56574, -2.2358, -3.627, 0.0],
            [-1.94100, -0.2686, -3.365, 31.223],
            [-1.61682, 0.2656, -2.714, 25.364],
        ],
        (1, Deterministic::Constant) => [
            [-3.43035, -6.5393, -16.786, -79.433],
            [-2.86154, -2.8903, -4.234, -40.040],
            [-2.56677, -1.5384, -2.809, 0.0],
        ],
        (1, Deterministic::ConstantTrend) => [
            [-3.95877, -9.0531, -28.428, -134.155],
            [-3.41049, -4.3904, -9.036, -45.374],
            [-3.12705, -2.5856, -3.925, -22.380],
        ],
        (2, Deterministic::Constant) => [
            [-3.89644, -10.9519, -33.527, 0.0],
            [-3.33613, -6.1101, -6.823, 0.0],
            [-3.04445, -4.2412, -2.720, 0.0],
        ],
        (2, Deterministic::ConstantTrend) => [
            [-4.32762, -15.4387, -35.679, 0.0],
            [-3.78057, -9.5106, -12.074, 0.0],
            [-3.49631, -7.0815, -7.538, 21.892],
        ],
        (n, d) => {
            return Err(Error::InvalidParameter(format!(
                "no critical values tabulated for {n} variables with deterministic spec {d}"
            )))
        }
    })
}

/// Critical values at 1%, 5%, 10% for `n_vars` integrated series (1 for the
/// unit-root test, 2 for a bivariate cointegration test) at sample size `nobs`.
pub fn mackinnon_critical(n_vars: usize, det: Deterministic, nobs: usize) -> Result<[f64; 3]> {
    let table = surface(n_vars, det)?;
    let inv = 1.0 / nobs as f64;
    Ok(table.map(|b| b[0] + b[1] * inv + b[2] * inv * inv + b[3] * inv * inv * inv))
}

struct OlsFit {
    beta: DVector<f64>,
    se: DVector<f64>,
    ssr: f64,
    nobs: usize,
}

impl OlsFit {
    fn aic(&self) -> f64 {
        let n = self.nobs as f64;
        let llf = -n / 2.0 * ((2.0 * std::f64::consts::PI).ln() + (self.ssr / n).ln() + 1.0);
        -2.0 * llf + 2.0 * self.beta.len() as f64
    }
}

fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, k) = x.shape();
    let f = SpdFactor::new(x.tr_mul(x), |j| format!("adf regressor {j}"))?;
    let beta = f.solve(&x.tr_mul(y));
    let resid = y - x * &beta;
    let ssr = resid.norm_squared();
    let s2 = ssr / (n - k) as f64;
    let inv = f.inverse();
    let se = DVector::from_fn(k, |j, _| (s2 * inv[(j, j)]).sqrt());
    Ok(OlsFit { beta, se, ssr, nobs: n })
}

/// Regress `dy_t` on `[y_{t-1}, dy_{t-1}..dy_{t-lags}, deterministic]` over
/// the last `nobs` differences.
fn df_regression(y: &[f64], lags: usize, nobs: usize, det: Deterministic) -> Result<OlsFit> {
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let m = dy.len();
    let k = 1 + lags + det.count();
    let x = DMatrix::from_fn(nobs, k, |r, c| {
        let t = m - nobs + r; // index into dy
        match c {
            0 => y[t],
            c if c <= lags => dy[t - c],
            c if c == lags + 1 => 1.0,
            _ => (t + 1) as f64,
        }
    });
    let yv = DVector::from_fn(nobs, |r, _| dy[m - nobs + r]);
    ols(&x, &yv)
}

/// Augmented Dickey-Fuller test of a unit root in `y`.
pub fn adf_test(y: &[f64], spec: &AdfSpec) -> Result<AdfResult> {
    let max = spec.lags.max();
    let required = max + 10;
    if y.len() < required {
        return Err(Error::SeriesTooShort {
            len: y.len(),
            required,
        });
    }
    let lags = match spec.lags {
        LagSelection::Fixed(p) => p,
        LagSelection::Aic { max } => {
            let common = y.len() - 1 - max;
            let mut best = (f64::INFINITY, 0);
            for p in 0..=max {
                let aic = df_regression(y, p, common, spec.deterministic)?.aic();
                if aic < best.0 {
                    best = (aic, p);
                }
            }
            best.1
        }
    };
    let nobs = y.len() - 1 - lags;
    let fit = df_regression(y, lags, nobs, spec.deterministic)?;
    let stat = if fit.se[0] > 0.0 {
        fit.beta[0] / fit.se[0]
    } else if fit.beta[0] < 0.0 {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    };
    Ok(AdfResult {
        stat,
        lags,
        nobs,
        critical: mackinnon_critical(1, spec.deterministic, nobs)?,
    })
}

/// Engle-Granger cointegration test of `y` on `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgResult {
    pub stat: f64,
    pub lags: usize,
    /// Critical values at 1%, 5% and 10%.
    pub critical: [f64; 3],
    pub slope: f64,
}

impl EgResult {
    /// Whether the no-cointegration null is rejected at `significance`.
    pub fn cointegrated(&self, significance: f64) -> Result<bool> {
        Ok(self.stat < self.critical[critical_index(significance)?])
    }
}

/// Regress `y` on a constant and `x`, then run the Dickey-Fuller regression
/// without deterministic terms on the residuals, with two-variable critical
/// values. An exact fit gives a statistic of negative infinity.
pub fn engle_granger(y: &[f64], x: &[f64], lags: LagSelection) -> Result<EgResult> {
    if y.len() != x.len() {
        return Err(Error::InvalidParameter(format!(
            "cointegration test on series of length {} and {}",
            y.len(),
            x.len()
        )));
    }
    let n = y.len();
    let design = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { x[r] });
    let fit = ols(&design, &DVector::from_column_slice(y))?;
    let resid: Vec<f64> = (0..n).map(|r| y[r] - fit.beta[0] - fit.beta[1] * x[r]).collect();
    let critical = mackinnon_critical(2, Deterministic::Constant, n - 1)?;
    let scale: f64 = y.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let ssr: f64 = resid.iter().map(|e| e * e).sum();
    if ssr <= 1e-24 * scale {
        return Ok(EgResult {
            stat: f64::NEG_INFINITY,
            lags: 0,
            critical,
            slope: fit.beta[1],
        });
    }
    let adf = adf_test(
        &resid,
        &AdfSpec {
            deterministic: Deterministic::None,
            lags,
        },
    )?;
    Ok(EgResult {
        stat: adf.stat,
        lags: adf.lags,
        critical,
        slope: fit.beta[1],
    })
}

/// Levels or first differences for the annual regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecondSpec {
    Levels,
    FirstDifferences,
}

impl fmt::Display for SecondSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SecondSpec::Levels => "levels",
            SecondSpec::FirstDifferences => "first differences",
        })
    }
}

/// Unit-root tests for one variable in levels and in first differences.
#[derive(Debug, Clone, PartialEq)]
pub struct VariablePretest {
    pub name: String,
    pub level: AdfResult,
    pub difference: AdfResult,
}

impl VariablePretest {
    pub fn run(name: impl Into<String>, y: &[f64], spec: &AdfSpec) -> Result<Self> {
        let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self {
            name: name.into(),
            level: adf_test(y, spec)?,
            difference: adf_test(&dy, spec)?,
        })
    }
}

/// Stationary in levels → levels; all I(1) and cointegrated → levels; all
/// I(1) without cointegration → first differences. Any other pattern is a
/// conflict: it is logged and resolved to first differences.
pub fn select_spec(vars: &[VariablePretest], eg: Option<&EgResult>, significance: f64) -> Result<SecondSpec> {
    let mut stationary = Vec::with_capacity(vars.len());
    let mut integrated = Vec::with_capacity(vars.len());
    for v in vars {
        let level = v.level.rejects(significance)?;
        stationary.push(level);
        integrated.push(!level && v.difference.rejects(significance)?);
    }
    if stationary.iter().all(|s| *s) {
        return Ok(SecondSpec::Levels);
    }
    if integrated.iter().all(|i| *i) {
        let cointegrated = match eg {
            Some(eg) => eg.cointegrated(significance)?,
            None => false,
        };
        return Ok(if cointegrated {
            SecondSpec::Levels
        } else {
            SecondSpec::FirstDifferences
        });
    }
    let names: Vec<String> = vars
        .iter()
        .zip(stationary.iter().zip(&integrated))
        .map(|(v, (s, i))| {
            let class = if *s {
                "I(0)"
            } else if *i {
                "I(1)"
            } else {
                "I(2) or undetermined"
            };
            format!("{} {class}", v.name)
        })
        .collect();
    log::warn!("pretests conflict ({}); using first differences", names.join(", "));
    Ok(SecondSpec::FirstDifferences)
}
