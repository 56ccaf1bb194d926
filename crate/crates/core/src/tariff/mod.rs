//! Effective tariff factors under ad valorem, gate-price (GPS) and
//! tariff-rate-quota (TRQ) regimes.

mod engine;
mod gps;
mod quota;
mod schedule;

pub use engine::{effective_t, write_tariff_table, TariffCell, TariffEngine, TariffTable, CARCASS_PORK_ITEMS};
pub use gps::{gps_duty, scale_for_carcass, GpsBoundary};
pub use quota::{parse_quotas, read_quotas, trq_resolve, LedgerState, QuotaLedger, QuotaSchedule, QuotaStatus};
pub use schedule::{CountrySelector, EntryKind, ItemSelector, RateKind, RateSchedule, ScheduleEntry};
