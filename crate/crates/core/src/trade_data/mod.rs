//! Monthly import transactions, their aggregation to meat types, and the
//! country-by-month estimation panel.

mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::period::Period;

pub use io::{
    read_exchange_rates, read_transactions, write_exchange_rates, write_panel, write_transactions,
};

/// One monthly import incident for a single item from a single origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub period: Period,
    pub country: String,
    pub item: u16,
    /// JPY.
    pub value: f64,
    /// kg.
    pub quantity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Meat {
    Beef,
    Pork,
    Chicken,
}

impl Meat {
    pub const ALL: [Meat; 3] = [Meat::Beef, Meat::Pork, Meat::Chicken];
}

impl fmt::Display for Meat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Meat::Beef => "beef",
            Meat::Pork => "pork",
            Meat::Chicken => "chicken",
        })
    }
}

impl FromStr for Meat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "beef" => Ok(Meat::Beef),
            "pork" => Ok(Meat::Pork),
            "chicken" => Ok(Meat::Chicken),
            other => Err(Error::InvalidParameter(format!("unknown meat {other:?}"))),
        }
    }
}

/// The item IDs that make up one meat type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeatGroup {
    pub meat: Meat,
    pub items: BTreeSet<u16>,
}

impl MeatGroup {
    /// Item ranges of the customs item table: beef 1..=16, pork 28..=48,
    /// chicken 68..=74.
    pub fn default_for(meat: Meat) -> Self {
        let items = match meat {
            Meat::Beef => 1..=16,
            Meat::Pork => 28..=48,
            Meat::Chicken => 68..=74,
        };
        Self {
            meat,
            items: items.collect(),
        }
    }

    pub fn contains(&self, item: u16) -> bool {
        self.items.contains(&item)
    }
}

/// `(country, month)` coordinates of a panel cell.
pub type CellKey = (String, Period);

/// Summed value and quantity of a meat group for one `(country, month)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellAggregate {
    pub value: f64,
    pub quantity: f64,
}

impl CellAggregate {
    /// CIF price in JPY/kg.
    pub fn cif(&self) -> f64 {
        self.value / self.quantity
    }
}

fn malformed(country: &str, period: Period, reason: &str) -> Error {
    Error::MalformedRecord {
        country: country.to_string(),
        period,
        reason: reason.to_string(),
    }
}

/// Check one record's invariants: non-negative value, positive quantity
/// whenever the value is positive.
pub fn validate_record(r: &TransactionRecord) -> Result<()> {
    if !(r.value >= 0.0) || !r.value.is_finite() {
        return Err(malformed(&r.country, r.period, "negative or non-finite value"));
    }
    if !(r.quantity >= 0.0) || !r.quantity.is_finite() {
        return Err(malformed(&r.country, r.period, "negative or non-finite quantity"));
    }
    if r.quantity == 0.0 && r.value > 0.0 {
        return Err(malformed(&r.country, r.period, "zero quantity with positive value"));
    }
    Ok(())
}

/// Sum item-level values and quantities of `group` into `(country, month)`
/// cells. Records outside the group are ignored; zero/zero records are
/// skipped; cells without quantity are absent from the output.
pub fn aggregate_items(
    records: &[TransactionRecord],
    group: &MeatGroup,
) -> Result<BTreeMap<CellKey, CellAggregate>> {
    let mut cells: BTreeMap<CellKey, CellAggregate> = BTreeMap::new();
    for r in records.iter().filter(|r| group.contains(r.item)) {
        validate_record(r)?;
        if r.quantity == 0.0 {
            continue;
        }
        let cell = cells.entry((r.country.clone(), r.period)).or_default();
        cell.value += r.value;
        cell.quantity += r.quantity;
    }
    Ok(cells)
}

/// Value shares `p x / sum(p x)` for the countries observed in one period.
pub fn compute_shares(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("share computation over an empty period".into()));
    }
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "post-tariff values must be positive and finite".into(),
        ));
    }
    let total: f64 = values.iter().sum();
    Ok(values.iter().map(|v| v / total).collect())
}

/// JPY per unit of local currency, by `(country, month)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExchangeRates {
    rates: BTreeMap<CellKey, f64>,
}

impl ExchangeRates {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, country: &str, period: Period, jpy_per_lcu: f64) -> Result<()> {
        if !(jpy_per_lcu > 0.0) || !jpy_per_lcu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "exchange rate for {country} at {period} must be positive, got {jpy_per_lcu}"
            )));
        }
        self.rates.insert((country.to_string(), period), jpy_per_lcu);
        Ok(())
    }

    pub fn get(&self, country: &str, period: Period) -> Option<f64> {
        self.rates.get(&(country.to_string(), period)).copied()
    }

    pub fn log(&self, country: &str, period: Period) -> Option<f64> {
        self.get(country, period).map(f64::ln)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellKey, &f64)> {
        self.rates.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

/// One `(country, month)` observation. All of `s`, `p`, `c`, `t`, `e` are
/// natural logs; `x` is kg and `w` the post-tariff value in JPY.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelObservation {
    pub country: String,
    pub period: Period,
    pub s: f64,
    pub p: f64,
    pub c: f64,
    pub t: f64,
    /// Missing when no exchange rate is on file for the cell.
    pub e: Option<f64>,
    pub x: f64,
    pub w: f64,
}

impl PanelObservation {
    /// CIF price level in JPY/kg.
    pub fn cif(&self) -> f64 {
        self.c.exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub meat: Meat,
    pub label: String,
    pub start: Period,
    pub end: Period,
    observations: Vec<PanelObservation>,
}

impl PanelDataset {
    /// Observations are sorted by `(country, period)`; duplicates are rejected.
    pub fn new(
        meat: Meat,
        label: impl Into<String>,
        start: Period,
        end: Period,
        mut observations: Vec<PanelObservation>,
    ) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidParameter(format!("window {start}..{end} is empty")));
        }
        observations.sort_by(|a, b| (&a.country, a.period).cmp(&(&b.country, b.period)));
        for pair in observations.windows(2) {
            if pair[0].country == pair[1].country && pair[0].period == pair[1].period {
                return Err(malformed(&pair[0].country, pair[0].period, "duplicate panel cell"));
            }
        }
        if let Some(o) = observations.iter().find(|o| o.period < start || o.period > end) {
            return Err(malformed(&o.country, o.period, "outside the panel window"));
        }
        Ok(Self {
            meat,
            label: label.into(),
            start,
            end,
            observations,
        })
    }

    pub fn observations(&self) -> &[PanelObservation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Number of months in the window (J).
    pub fn n_periods(&self) -> usize {
        (self.start.months_until(self.end) + 1) as usize
    }

    /// Index of `period` within the window.
    pub fn period_index(&self, period: Period) -> usize {
        self.start.months_until(period) as usize
    }

    pub fn period_at(&self, index: usize) -> Period {
        self.start.offset(index as i64)
    }

    pub fn countries(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for o in &self.observations {
            if out.last() != Some(&o.country.as_str()) {
                out.push(&o.country);
            }
        }
        out
    }

    pub fn n_countries(&self) -> usize {
        self.countries().len()
    }

    pub fn counts_by_country(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for o in &self.observations {
            *counts.entry(o.country.as_str()).or_insert(0) += 1;
        }
        counts
    }

    /// Total post-tariff import value per month, `w_t = sum_i p_it x_it`.
    pub fn monthly_values(&self) -> BTreeMap<Period, f64> {
        let mut out = BTreeMap::new();
        for o in &self.observations {
            *out.entry(o.period).or_insert(0.0) += o.w;
        }
        out
    }

    fn with_observations(&self, label: String, observations: Vec<PanelObservation>) -> Self {
        Self {
            meat: self.meat,
            label,
            start: self.start,
            end: self.end,
            observations,
        }
    }
}

/// Assemble the panel from aggregated cells and their log tariff factors.
///
/// Shares are computed per month over every country present, before any
/// sparse filtering. Every cell needs a tariff; exchange rates may be
/// missing and are carried as `None`.
pub fn build_panel(
    meat: Meat,
    window: (Period, Period),
    cells: &BTreeMap<CellKey, CellAggregate>,
    tariffs: &BTreeMap<CellKey, f64>,
    fx: &ExchangeRates,
) -> Result<PanelDataset> {
    let (start, end) = window;
    let mut by_period: BTreeMap<Period, Vec<(&String, CellAggregate, f64)>> = BTreeMap::new();
    for ((country, period), cell) in cells {
        if *period < start || *period > end {
            continue;
        }
        if cell.value <= 0.0 {
            log::warn!("skipping {country} {period}: zero import value");
            continue;
        }
        let t = *tariffs
            .get(&(country.clone(), *period))
            .ok_or_else(|| Error::MissingTariff {
                country: country.clone(),
                period: *period,
            })?;
        by_period.entry(*period).or_default().push((country, *cell, t));
    }

    let mut observations = Vec::with_capacity(cells.len());
    for (period, rows) in by_period {
        let post_tariff: Vec<f64> = rows
            .iter()
            .map(|(_, cell, t)| cell.value * t.exp())
            .collect();
        let shares = compute_shares(&post_tariff)?;
        for ((country, cell, t), (s, w)) in rows.into_iter().zip(shares.into_iter().zip(post_tariff)) {
            let c = cell.cif().ln();
            observations.push(PanelObservation {
                country: country.clone(),
                period,
                s: s.ln(),
                p: c + t,
                c,
                t,
                e: fx.log(country, period),
                x: cell.quantity,
                w,
            });
        }
    }
    PanelDataset::new(meat, meat.to_string(), start, end, observations)
}

/// Keep only countries with more than `min_obs` observations. Shares are
/// left as computed on the full country set.
pub fn filter_sparse(panel: &PanelDataset, min_obs: usize) -> Result<PanelDataset> {
    let counts = panel.counts_by_country();
    let kept: Vec<PanelObservation> = panel
        .observations
        .iter()
        .filter(|o| counts[o.country.as_str()] > min_obs)
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyPanel(format!(
            "{}: no country has more than {min_obs} observations",
            panel.label
        )));
    }
    Ok(panel.with_observations(panel.label.clone(), kept))
}

/// Split pork observations at a CIF price threshold given in KJPY/kg.
/// Prices strictly below the threshold are "regular", the rest "prime".
pub fn split_pork(panel: &PanelDataset, threshold_kjpy: f64) -> (PanelDataset, PanelDataset) {
    let log_threshold = (threshold_kjpy * 1000.0).ln();
    let (regular, prime): (Vec<_>, Vec<_>) = panel
        .observations
        .iter()
        .cloned()
        .partition(|o| o.c < log_threshold);
    (
        panel.with_observations(format!("{} (regular)", panel.label), regular),
        panel.with_observations(format!("{} (prime)", panel.label), prime),
    )
}
