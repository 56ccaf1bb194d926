use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExchangeRates, PanelDataset, TransactionRecord};
use crate::error::{Error, Result};
use crate::period::Period;

#[derive(Debug, Serialize, Deserialize)]
struct TransactionRow {
    period: Period,
    country: String,
    item_id: u16,
    value_jpy: f64,
    quantity_kg: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FxRow {
    period: Period,
    country: String,
    jpy_per_lcu: f64,
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))
}

/// Read `period,country,item_id,value_jpy,quantity_kg`.
pub fn read_transactions(path: impl AsRef<Path>) -> Result<Vec<TransactionRecord>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (line, row) in reader(path)?.deserialize::<TransactionRow>().enumerate() {
        let row = row.map_err(|e| Error::parse(path, format!("row {}: {e}", line + 2)))?;
        out.push(TransactionRecord {
            period: row.period,
            country: row.country,
            item: row.item_id,
            value: row.value_jpy,
            quantity: row.quantity_kg,
        });
    }
    Ok(out)
}

pub fn write_transactions(path: impl AsRef<Path>, records: &[TransactionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(TransactionRow {
            period: r.period,
            country: r.country.clone(),
            item_id: r.item,
            value_jpy: r.value,
            quantity_kg: r.quantity,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Read `period,country,jpy_per_lcu`.
pub fn read_exchange_rates(path: impl AsRef<Path>) -> Result<ExchangeRates> {
    let path = path.as_ref();
    let mut fx = ExchangeRates::new();
    for (line, row) in reader(path)?.deserialize::<FxRow>().enumerate() {
        let row = row.map_err(|e| Error::parse(path, format!("row {}: {e}", line + 2)))?;
        fx.insert(&row.country, row.period, row.jpy_per_lcu)
            .map_err(|e| Error::parse(path, format!("row {}: {e}", line + 2)))?;
    }
    Ok(fx)
}

pub fn write_exchange_rates(path: impl AsRef<Path>, fx: &ExchangeRates) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for ((country, period), rate) in fx.iter() {
        w.serialize(FxRow {
            period: *period,
            country: country.clone(),
            jpy_per_lcu: *rate,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Write the panel in long form; log variables as stored.
pub fn write_panel(path: impl AsRef<Path>, panel: &PanelDataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["country", "period", "S", "P", "C", "T", "E", "x_kg", "w_jpy"])?;
    for o in panel.observations() {
        w.write_record([
            o.country.clone(),
            o.period.to_string(),
            o.s.to_string(),
            o.p.to_string(),
            o.c.to_string(),
            o.t.to_string(),
            o.e.map(|e| e.to_string()).unwrap_or_default(),
            o.x.to_string(),
            o.w.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
