use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::gps::{gps_duty, scale_for_carcass};
use super::quota::{trq_resolve, QuotaLedger, QuotaSchedule, QuotaStatus};
use super::schedule::{RateKind, RateSchedule, ScheduleEntry};
use crate::error::{Error, Result};
use crate::period::Period;
use crate::trade_data::{validate_record, CellKey, MeatGroup, TransactionRecord};

/// Pork items whose GPS boundaries are scaled to 3/4 for meat content.
pub const CARCASS_PORK_ITEMS: [u16; 4] = [28, 29, 37, 38];

/// Log tariff factor `T = ln(p / c)` for a single rate applied at CIF price `cif`.
pub fn effective_t(cif: f64, rate: &RateKind) -> Result<f64> {
    if !(cif > 0.0) || !cif.is_finite() {
        return Err(Error::InvalidParameter(format!("CIF price must be positive, got {cif}")));
    }
    Ok(match rate {
        RateKind::AdValorem(r) => r.ln_1p(),
        RateKind::Specific(d) => ((cif + d) / cif).ln(),
        RateKind::Gps(b) => ((cif + gps_duty(cif, b)) / cif).ln(),
        RateKind::Exempt => 0.0,
    })
}

/// Tariff outcome for one `(country, month)` cell of a meat group.
#[derive(Debug, Clone, PartialEq)]
pub struct TariffCell {
    pub value: f64,
    pub quantity: f64,
    /// Total duty in JPY over all items in the cell.
    pub duty: f64,
    /// `ln((value + duty) / value)`.
    pub t: f64,
    /// Schedule entries applied, `;`-separated when items differ.
    pub audit: String,
}

impl TariffCell {
    pub fn cif(&self) -> f64 {
        self.value / self.quantity
    }
}

pub type TariffTable = BTreeMap<CellKey, TariffCell>;

#[derive(Debug, Clone)]
pub struct TariffEngine {
    pub schedule: RateSchedule,
    pub quotas: Vec<QuotaSchedule>,
    pub carcass_items: BTreeSet<u16>,
}

impl TariffEngine {
    pub fn new(schedule: RateSchedule, quotas: Vec<QuotaSchedule>) -> Self {
        Self {
            schedule,
            quotas,
            carcass_items: CARCASS_PORK_ITEMS.into_iter().collect(),
        }
    }

    /// Walk each quota's partner volumes month by month through a ledger.
    /// Volumes count every tagged item from the partner, whatever meat group
    /// is being evaluated.
    pub fn quota_statuses(
        &self,
        records: &[TransactionRecord],
    ) -> Result<BTreeMap<(usize, Period), QuotaStatus>> {
        let mut out = BTreeMap::new();
        let mut ledger = QuotaLedger::new();
        for (qi, quota) in self.quotas.iter().enumerate() {
            let mut volumes: BTreeMap<Period, f64> = BTreeMap::new();
            for r in records.iter().filter(|r| quota.covers(&r.country, r.item)) {
                *volumes.entry(r.period).or_default() += r.quantity;
            }
            let (Some(first), Some(last)) = (volumes.keys().next().copied(), volumes.keys().last().copied())
            else {
                continue;
            };
            for month in Period::range(first, last) {
                let v = volumes.get(&month).copied().unwrap_or(0.0);
                out.insert((qi, month), trq_resolve(&mut ledger, quota, month, v)?);
            }
        }
        Ok(out)
    }

    /// Effective tariff per `(country, month)` cell of `group`.
    ///
    /// Ad valorem duty is charged on each item's own value and specific duty
    /// on its quantity. GPS levies are evaluated at the cell's aggregated CIF
    /// price. The cell factor is `ln((v + duty) / v)`.
    pub fn evaluate(&self, records: &[TransactionRecord], group: &MeatGroup) -> Result<TariffTable> {
        let statuses = self.quota_statuses(records)?;
        let mut cells: BTreeMap<CellKey, Vec<&TransactionRecord>> = BTreeMap::new();
        for r in records.iter().filter(|r| group.contains(r.item)) {
            validate_record(r)?;
            if r.quantity > 0.0 {
                cells.entry((r.country.clone(), r.period)).or_default().push(r);
            }
        }

        let mut table = TariffTable::new();
        for ((country, period), items) in cells {
            let value: f64 = items.iter().map(|r| r.value).sum();
            let quantity: f64 = items.iter().map(|r| r.quantity).sum();
            if value <= 0.0 {
                continue;
            }
            let cif = value / quantity;
            let mut duty = 0.0;
            let mut audit = BTreeSet::new();
            for r in items {
                let quota_open = |entry: &ScheduleEntry| -> Result<bool> {
                    let _ = entry;
                    Ok(self
                        .quotas
                        .iter()
                        .enumerate()
                        .find(|(_, q)| q.covers(&country, r.item) && q.limits.contains_key(&period.fiscal_year()))
                        .and_then(|(qi, _)| statuses.get(&(qi, period)))
                        == Some(&QuotaStatus::InQuota))
                };
                let (rate, trail) = self.schedule.resolve(&country, r.item, period, quota_open)?;
                let rate = match rate {
                    RateKind::Gps(b) if self.carcass_items.contains(&r.item) => {
                        RateKind::Gps(scale_for_carcass(&b)?)
                    }
                    other => other,
                };
                duty += match &rate {
                    RateKind::AdValorem(rv) => rv * r.value,
                    RateKind::Specific(d) => d * r.quantity,
                    RateKind::Gps(b) => gps_duty(cif, b) * r.quantity,
                    RateKind::Exempt => 0.0,
                };
                audit.insert(trail);
            }
            table.insert(
                (country, period),
                TariffCell {
                    value,
                    quantity,
                    duty,
                    t: (duty / value).ln_1p(),
                    audit: audit.into_iter().collect::<Vec<_>>().join("; "),
                },
            );
        }
        Ok(table)
    }
}

pub fn write_tariff_table(path: impl AsRef<Path>, table: &TariffTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["country", "period", "cif_jpy_per_kg", "value_jpy", "quantity_kg", "duty_jpy", "T", "audit"])?;
    for ((country, period), cell) in table {
        w.write_record([
            country.clone(),
            period.to_string(),
            cell.cif().to_string(),
            cell.value.to_string(),
            cell.quantity.to_string(),
            cell.duty.to_string(),
            cell.t.to_string(),
            cell.audit.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tariff::{parse_quotas, GpsBoundary};
    use crate::trade_data::Meat;

    fn rec(country: &str, period: &str, item: u16, value: f64, quantity: f64) -> TransactionRecord {
        TransactionRecord {
            period: period.parse().unwrap(),
            country: country.into(),
            item,
            value,
            quantity,
        }
    }

    const PORK: &str = "country_selector,item_selector,from,to,kind,params,priority
*,28-48,JFY2000,*,gps,G=524;F=546.35;D=482;r=0.043,0
LDC,*,*,*,exempt,,50
";

    #[test]
    fn effective_t_examples() {
        assert!((effective_t(100.0, &RateKind::AdValorem(0.043)).unwrap() - 0.042101176018635).abs() < 1e-12);
        assert_eq!(effective_t(100.0, &RateKind::Exempt).unwrap(), 0.0);
        let b = GpsBoundary::pork_jfy2000();
        assert!((effective_t(400.0, &RateKind::Gps(b)).unwrap() - (546.35f64 / 400.0).ln()).abs() < 1e-12);
        assert!(effective_t(0.0, &RateKind::Exempt).is_err());
        // ad valorem factor does not depend on price
        let a = effective_t(3.0, &RateKind::AdValorem(0.2)).unwrap();
        let b = effective_t(3000.0, &RateKind::AdValorem(0.2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gps_cell_and_carcass_item() {
        let engine = TariffEngine::new(RateSchedule::parse_csv(PORK).unwrap(), vec![]);
        let group = MeatGroup::default_for(Meat::Pork);
        let records = vec![
            rec("USA", "2005-01", 30, 400.0 * 10.0, 10.0),
            rec("CAN", "2005-01", 28, 300.0 * 10.0, 10.0),
            rec("LDC", "2005-01", 30, 100.0, 1.0),
        ];
        let table = engine.evaluate(&records, &group).unwrap();
        let usa = &table[&("USA".to_string(), "2005-01".parse().unwrap())];
        assert!((usa.t - (546.35f64 / 400.0).ln()).abs() < 1e-12);
        assert_eq!(usa.audit, "#1 gps");
        let can = &table[&("CAN".to_string(), "2005-01".parse().unwrap())];
        // carcass boundary: G = 393, so c = 300 sits on the floor arm at 409.7625
        assert!((can.t - (409.7625f64 / 300.0).ln()).abs() < 1e-12);
        let ldc = &table[&("LDC".to_string(), "2005-01".parse().unwrap())];
        assert_eq!(ldc.t, 0.0);
        assert_eq!(ldc.audit, "#2 exempt");
    }

    #[test]
    fn unmatched_cell_reports_coordinates() {
        let engine = TariffEngine::new(RateSchedule::parse_csv(PORK).unwrap(), vec![]);
        let group = MeatGroup::default_for(Meat::Pork);
        let err = engine
            .evaluate(&[rec("USA", "1999-01", 30, 1.0, 1.0)], &group)
            .unwrap_err();
        assert!(matches!(err, Error::UnmatchedSchedule { item: 30, .. }), "{err}");
    }

    #[test]
    fn quota_crossing_switches_rate() {
        let schedule = RateSchedule::parse_csv(
            "country_selector,item_selector,from,to,kind,params,priority
*,1-16,*,*,ad_valorem,r=0.385,0
MEX,5-8,JFY2007,*,trq:ad_valorem,r=0.308,10
",
        )
        .unwrap();
        let quotas = parse_quotas("country,jfy,limit_kg,item_tags\nMEX,2010,10000,5-8|17\n").unwrap();
        let engine = TariffEngine::new(schedule, quotas);
        let group = MeatGroup::default_for(Meat::Beef);
        // item 17 is outside the beef group but counts toward the quota
        let records = vec![
            rec("MEX", "2010-04", 5, 4000.0, 4000.0),
            rec("MEX", "2010-05", 5, 2000.0, 2000.0),
            rec("MEX", "2010-05", 17, 2000.0, 2000.0),
            rec("MEX", "2010-06", 6, 4000.0, 4000.0),
            rec("MEX", "2010-07", 6, 4000.0, 4000.0),
            rec("MEX", "2011-04", 6, 4000.0, 4000.0),
        ];
        let table = engine.evaluate(&records, &group).unwrap();
        let t = |m: &str| table[&("MEX".to_string(), m.parse().unwrap())].clone();
        assert!((t("2010-06").t - 0.308f64.ln_1p()).abs() < 1e-12);
        assert!((t("2010-07").t - 0.385f64.ln_1p()).abs() < 1e-12);
        assert_eq!(t("2010-07").audit, "#2 trq:ad_valorem(out)>#1 ad_valorem");
        // no quota row for JFY2011: out-quota fallback
        assert!((t("2011-04").t - 0.385f64.ln_1p()).abs() < 1e-12);
    }

    #[test]
    fn mixed_items_weight_by_value() {
        let schedule = RateSchedule::parse_csv(
            "country_selector,item_selector,from,to,kind,params,priority
*,68|69,*,*,ad_valorem,r=0.14,0
*,70,*,*,ad_valorem,r=0.2,0
",
        )
        .unwrap();
        let engine = TariffEngine::new(schedule, vec![]);
        let group = MeatGroup::default_for(Meat::Chicken);
        let records = vec![rec("BRA", "2001-01", 68, 100.0, 10.0), rec("BRA", "2001-01", 70, 300.0, 10.0)];
        let table = engine.evaluate(&records, &group).unwrap();
        let cell = table.values().next().unwrap();
        assert!((cell.duty - (14.0 + 60.0)).abs() < 1e-12);
        assert!((cell.t - (474.0f64 / 400.0).ln()).abs() < 1e-12);
        assert_eq!(cell.audit, "#1 ad_valorem; #2 ad_valorem");
    }
}
