use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::{Column, FeDesign, TimeLabels};
use crate::error::{Error, Result};
use crate::period::Period;
use crate::trade_data::{ExchangeRates, PanelDataset};

/// Instrument built from the exchange rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstrumentKind {
    Fx,
    LogFx,
    /// Cumulated exchange rate, see [`Cumulation`].
    FxCum,
    LogFxCum,
}

impl InstrumentKind {
    pub fn name(self) -> &'static str {
        match self {
            InstrumentKind::Fx => "fx",
            InstrumentKind::LogFx => "log_fx",
            InstrumentKind::FxCum => "fx_cum",
            InstrumentKind::LogFxCum => "log_fx_cum",
        }
    }
}

impl fmt::Display for InstrumentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InstrumentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fx" => Ok(InstrumentKind::Fx),
            "log_fx" => Ok(InstrumentKind::LogFx),
            "fx_cum" => Ok(InstrumentKind::FxCum),
            "log_fx_cum" => Ok(InstrumentKind::LogFxCum),
            other => Err(Error::Config(format!("unknown instrument {other:?}"))),
        }
    }
}

/// How the monthly exchange rate is cumulated over the year.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cumulation {
    /// Running mean from April of the fiscal year through the month.
    JfyMean,
    /// Running sum from April through the month.
    JfySum,
    /// Mean over the month and the eleven before it.
    Rolling12,
}

impl FromStr for Cumulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "jfy_mean" => Ok(Cumulation::JfyMean),
            "jfy_sum" => Ok(Cumulation::JfySum),
            "rolling12" => Ok(Cumulation::Rolling12),
            other => Err(Error::Config(format!("unknown cumulation {other:?}"))),
        }
    }
}

impl fmt::Display for Cumulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cumulation::JfyMean => "jfy_mean",
            Cumulation::JfySum => "jfy_sum",
            Cumulation::Rolling12 => "rolling12",
        })
    }
}

/// Cumulated exchange rate for `country` at `period`, over the months of the
/// window that have a rate on file. `None` when the month itself has none.
pub fn cumulated_fx(fx: &ExchangeRates, country: &str, period: Period, how: Cumulation) -> Option<f64> {
    fx.get(country, period)?;
    let from = match how {
        Cumulation::JfyMean | Cumulation::JfySum => Period::fiscal_year_start(period.fiscal_year()),
        Cumulation::Rolling12 => period.offset(-11),
    };
    let values: Vec<f64> = Period::range(from, period).filter_map(|m| fx.get(country, m)).collect();
    let sum: f64 = values.iter().sum();
    Some(match how {
        Cumulation::JfySum => sum,
        _ => sum / values.len() as f64,
    })
}

/// Designs for the share regression `S ~ P + time effects + entity effects`.
#[derive(Debug, Clone)]
pub struct FirstStageDesigns {
    /// Every panel row, `P` as an ordinary regressor.
    pub ls: FeDesign,
    /// Rows with every instrument available, `P` endogenous.
    pub iv: FeDesign,
    /// Country code per entity id.
    pub entities: Vec<String>,
    /// Rows dropped from the IV design for missing instruments.
    pub dropped: usize,
}

/// Build the LS and IV designs from a panel. Times are month ordinals.
pub fn first_stage_designs(
    panel: &PanelDataset,
    fx: &ExchangeRates,
    instruments: &[InstrumentKind],
    cumulation: Cumulation,
) -> Result<FirstStageDesigns> {
    if panel.is_empty() {
        return Err(Error::EmptyPanel(panel.label.clone()));
    }
    let obs = panel.observations();
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut entities = Vec::new();
    let entity: Vec<usize> = obs
        .iter()
        .map(|o| {
            *ids.entry(o.country.as_str()).or_insert_with(|| {
                entities.push(o.country.clone());
                entities.len() - 1
            })
        })
        .collect();
    let time: Vec<i64> = obs.iter().map(|o| o.period.ordinal()).collect();
    let s = Column::new("S", obs.iter().map(|o| o.s).collect());
    let p = Column::new("P", obs.iter().map(|o| o.p).collect());

    let ls = FeDesign::new(entity.clone(), time.clone(), s.clone())
        .exogenous(p.clone())
        .time_effects(true)
        .time_labels(TimeLabels::Month);

    let mut columns: Vec<Vec<Option<f64>>> = Vec::new();
    for kind in instruments {
        columns.push(
            obs.iter()
                .map(|o| match kind {
                    InstrumentKind::Fx => fx.get(&o.country, o.period),
                    InstrumentKind::LogFx => fx.log(&o.country, o.period),
                    InstrumentKind::FxCum => cumulated_fx(fx, &o.country, o.period, cumulation),
                    InstrumentKind::LogFxCum => cumulated_fx(fx, &o.country, o.period, cumulation).map(f64::ln),
                })
                .collect(),
        );
    }
    let keep: Vec<bool> = (0..obs.len()).map(|r| columns.iter().all(|c| c[r].is_some())).collect();
    let dropped = keep.iter().filter(|k| !**k).count();
    let mut iv = FeDesign::new(entity, time, s)
        .endogenous(p)
        .time_effects(true)
        .time_labels(TimeLabels::Month);
    for (kind, col) in instruments.iter().zip(columns) {
        iv = iv.instrument(Column::new(kind.name(), col.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect()));
    }
    let iv = iv.select_rows(&keep);
    if iv.is_empty() {
        return Err(Error::InvalidInstruments(format!(
            "{}: no observation has every instrument",
            panel.label
        )));
    }
    Ok(FirstStageDesigns {
        ls,
        iv,
        entities,
        dropped,
    })
}
