//! Second stage: annual aggregation, unit-root and cointegration pretests,
//! the annual regression and the channel tests.

mod adf;
mod second;

pub use adf::{
    adf_test, engle_granger, mackinnon_critical, select_spec, AdfResult, AdfSpec, Deterministic, EgResult,
    LagSelection, SecondSpec, VariablePretest,
};
pub use second::{
    channel_test, estimate_second, t_test_p, ChannelMode, ChannelTest, SecondOptions, SecondStageResult,
};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::period::Period;

/// Domestic production for one calendar year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomesticRecord {
    pub year: i32,
    #[serde(rename = "price_jpy_per_kg")]
    pub price: f64,
    #[serde(rename = "quantity_kg")]
    pub quantity: f64,
}

pub fn read_domestic(path: impl AsRef<Path>) -> Result<Vec<DomesticRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<DomesticRecord>().enumerate() {
        let row = row.map_err(|e| Error::parse(path, format!("row {}: {e}", i + 1)))?;
        if !(row.price > 0.0) || !(row.quantity >= 0.0) {
            return Err(Error::parse(path, format!("row {}: price must be positive and quantity non-negative", i + 1)));
        }
        out.push(row);
    }
    out.sort_by_key(|r| r.year);
    if let Some(pair) = out.windows(2).find(|p| p[0].year == p[1].year) {
        return Err(Error::parse(path, format!("year {} appears twice", pair[0].year)));
    }
    Ok(out)
}

pub fn write_domestic(path: impl AsRef<Path>, records: &[DomesticRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Weighted harmonic mean `sum w / sum (w / q)`.
pub fn harmonic_mean(q: &[f64], w: &[f64]) -> Result<f64> {
    if q.len() != w.len() || q.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "harmonic mean of {} values with {} weights",
            q.len(),
            w.len()
        )));
    }
    if q.iter().any(|v| !(*v > 0.0)) || w.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidParameter("harmonic mean needs positive values and non-negative weights".into()));
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("harmonic mean weights sum to zero".into()));
    }
    Ok(total / q.iter().zip(w).map(|(q, w)| w / q).sum::<f64>())
}

/// Annual variables of the second-stage regression, all in logs except
/// `imports`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnualSeries {
    pub years: Vec<i32>,
    /// `ln(r z / sum_i w_ik)`
    pub h: Vec<f64>,
    /// Log domestic price.
    pub r: Vec<f64>,
    /// Log annual first-stage aggregate.
    pub q: Vec<f64>,
    /// Post-tariff import value per year, JPY.
    pub imports: Vec<f64>,
}

impl AnnualSeries {
    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    /// Relative price `R - Q`.
    pub fn relative_price(&self) -> Vec<f64> {
        self.r.iter().zip(&self.q).map(|(r, q)| r - q).collect()
    }
}

/// Aggregate monthly `q_t` (weights `w_t`) to calendar years with the
/// weighted harmonic mean and pair them with the domestic records.
///
/// A year is used when the domestic file has it and at least one month has
/// an aggregate; such a year must then have all twelve months.
pub fn annualize(
    q_hat: &BTreeMap<Period, f64>,
    weights: &BTreeMap<Period, f64>,
    domestic: &[DomesticRecord],
) -> Result<AnnualSeries> {
    let mut out = AnnualSeries {
        years: Vec::new(),
        h: Vec::new(),
        r: Vec::new(),
        q: Vec::new(),
        imports: Vec::new(),
    };
    for rec in domestic {
        let months: Vec<Period> = (1..=12).map(|m| Period::new(rec.year, m).expect("valid month")).collect();
        let have: Vec<bool> = months
            .iter()
            .map(|m| q_hat.contains_key(m) && weights.contains_key(m))
            .collect();
        if have.iter().all(|h| !h) {
            continue;
        }
        let missing: Vec<u32> = months.iter().zip(&have).filter(|(_, h)| !**h).map(|(m, _)| m.month()).collect();
        if !missing.is_empty() {
            return Err(Error::MissingMonths {
                year: rec.year,
                months: missing,
            });
        }
        let q: Vec<f64> = months.iter().map(|m| q_hat[m]).collect();
        let w: Vec<f64> = months.iter().map(|m| weights[m]).collect();
        let qk = harmonic_mean(&q, &w)?;
        let imports: f64 = w.iter().sum();
        out.years.push(rec.year);
        out.h.push((rec.price * rec.quantity / imports).ln());
        out.r.push(rec.price.ln());
        out.q.push(qk.ln());
        out.imports.push(imports);
    }
    if out.is_empty() {
        return Err(Error::EmptyPanel("no year has both aggregates and domestic data".into()));
    }
    if let Some(pair) = out.years.windows(2).find(|p| p[1] != p[0] + 1) {
        return Err(Error::InvalidParameter(format!(
            "annual series is not contiguous between {} and {}",
            pair[0], pair[1]
        )));
    }
    Ok(out)
}
