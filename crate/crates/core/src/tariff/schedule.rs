use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::gps::GpsBoundary;
use crate::error::{Error, Result};
use crate::period::Period;

/// How duty is levied on an item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    AdValorem(f64),
    /// JPY per kg.
    Specific(f64),
    Gps(GpsBoundary),
    Exempt,
}

impl RateKind {
    pub fn name(&self) -> &'static str {
        match self {
            RateKind::AdValorem(_) => "ad_valorem",
            RateKind::Specific(_) => "specific",
            RateKind::Gps(_) => "gps",
            RateKind::Exempt => "exempt",
        }
    }

    /// Parameters in the schedule file's `key=value;...` form.
    pub fn params(&self) -> String {
        match self {
            RateKind::AdValorem(r) => format!("r={r}"),
            RateKind::Specific(d) => format!("d={d}"),
            RateKind::Gps(b) => format!("G={};F={};D={};r={}", b.gate, b.floor, b.specific_duty, b.ad_valorem),
            RateKind::Exempt => String::new(),
        }
    }

    /// Parse a kind name and its `key=value;...` parameters.
    pub fn parse(kind: &str, params: &str) -> Result<Self> {
        let params = Params::parse(params)?;
        let kind = match kind {
            "ad_valorem" => {
                let r = params.get("r")?;
                if !(0.0..).contains(&r) {
                    return Err(Error::InvalidParameter(format!("ad valorem rate {r} < 0")));
                }
                RateKind::AdValorem(r)
            }
            "specific" => RateKind::Specific(params.get("d")?),
            "gps" => RateKind::Gps(GpsBoundary::from_floor(
                params.get("G")?,
                params.get("F")?,
                params.get("D")?,
                params.get("r")?,
            )?),
            "exempt" => RateKind::Exempt,
            other => return Err(Error::InvalidParameter(format!("unknown rate kind {other:?}"))),
        };
        Ok(kind)
    }
}

impl fmt::Display for RateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateKind::AdValorem(r) => write!(f, "ad_valorem r={r}"),
            RateKind::Specific(d) => write!(f, "specific d={d}"),
            RateKind::Gps(b) => write!(
                f,
                "gps G={} F={} D={} r={}{}",
                b.gate,
                b.floor,
                b.specific_duty,
                b.ad_valorem,
                if b.carcass_scaled { " (carcass)" } else { "" }
            ),
            RateKind::Exempt => f.write_str("exempt"),
        }
    }
}

struct Params(Vec<(String, f64)>);

impl Params {
    fn parse(s: &str) -> Result<Self> {
        let mut out = Vec::new();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("parameter {part:?} is not key=value")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("parameter {part:?} is not numeric")))?;
            out.push((k.trim().to_string(), v));
        }
        Ok(Self(out))
    }

    fn get(&self, key: &str) -> Result<f64> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::InvalidParameter(format!("missing parameter {key}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CountrySelector {
    All,
    Only(BTreeSet<String>),
    AllExcept(BTreeSet<String>),
}

impl CountrySelector {
    pub fn matches(&self, country: &str) -> bool {
        match self {
            CountrySelector::All => true,
            CountrySelector::Only(set) => set.contains(country),
            CountrySelector::AllExcept(set) => !set.contains(country),
        }
    }
}

impl FromStr for CountrySelector {
    type Err = Error;

    /// `*`, `AUS|USA`, or `!MEX|CHL` (everything except the listed).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "*" {
            return Ok(CountrySelector::All);
        }
        let (negate, list) = match s.strip_prefix('!') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let set: BTreeSet<String> = list
            .split('|')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(String::from)
            .collect();
        if set.is_empty() {
            return Err(Error::InvalidParameter(format!("empty country selector {s:?}")));
        }
        Ok(if negate {
            CountrySelector::AllExcept(set)
        } else {
            CountrySelector::Only(set)
        })
    }
}

/// `*` or a `|`-separated list of item IDs and inclusive ranges, e.g. `2|5-8|10`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ItemSelector {
    All,
    Only(BTreeSet<u16>),
}

impl ItemSelector {
    pub fn matches(&self, item: u16) -> bool {
        match self {
            ItemSelector::All => true,
            ItemSelector::Only(set) => set.contains(&item),
        }
    }
}

impl FromStr for ItemSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "*" {
            return Ok(ItemSelector::All);
        }
        let bad = |p: &str| Error::InvalidParameter(format!("bad item selector element {p:?}"));
        let mut set = BTreeSet::new();
        for part in s.split('|').map(str::trim).filter(|p| !p.is_empty()) {
            match part.split_once('-') {
                Some((a, b)) => {
                    let a: u16 = a.trim().parse().map_err(|_| bad(part))?;
                    let b: u16 = b.trim().parse().map_err(|_| bad(part))?;
                    if b < a {
                        return Err(bad(part));
                    }
                    set.extend(a..=b);
                }
                None => {
                    set.insert(part.parse().map_err(|_| bad(part))?);
                }
            }
        }
        if set.is_empty() {
            return Err(Error::InvalidParameter(format!("empty item selector {s:?}")));
        }
        Ok(ItemSelector::Only(set))
    }
}

/// What a schedule entry charges: a plain rate, or an in-quota rate that
/// applies only while the partner's quota is open. When the quota is
/// exhausted the next matching entry by priority applies.
#[derive(Debug, Clone, PartialEq)]
pub enum EntryKind {
    Rate(RateKind),
    Quota(RateKind),
}

impl EntryKind {
    pub fn label(&self) -> String {
        match self {
            EntryKind::Rate(k) => k.name().to_string(),
            EntryKind::Quota(k) => format!("trq:{}", k.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleEntry {
    /// 1-based data row in the schedule file; used in audit trails.
    pub id: usize,
    pub countries: CountrySelector,
    pub items: ItemSelector,
    pub from: Option<Period>,
    pub to: Option<Period>,
    pub kind: EntryKind,
    pub priority: i32,
}

impl ScheduleEntry {
    pub fn matches(&self, country: &str, item: u16, period: Period) -> bool {
        self.countries.matches(country)
            && self.items.matches(item)
            && self.from.map_or(true, |f| period >= f)
            && self.to.map_or(true, |t| period <= t)
    }

    pub fn audit_label(&self) -> String {
        format!("#{} {}", self.id, self.kind.label())
    }
}

/// `YYYY-MM`, `JFYyyyy`, or `*`/empty for an open end. A fiscal year maps to
/// April for the start of a window and to the following March for its end.
fn parse_bound(s: &str, is_end: bool) -> Result<Option<Period>> {
    let s = s.trim();
    if s.is_empty() || s == "*" {
        return Ok(None);
    }
    if let Some(y) = s.strip_prefix("JFY") {
        let jfy: i32 = y
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad fiscal year {s:?}")))?;
        return Ok(Some(if is_end {
            Period::fiscal_year_end(jfy)
        } else {
            Period::fiscal_year_start(jfy)
        }));
    }
    s.parse().map(Some)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateSchedule {
    pub entries: Vec<ScheduleEntry>,
}

impl RateSchedule {
    pub fn new(entries: Vec<ScheduleEntry>) -> Self {
        Self { entries }
    }

    /// Read `country_selector,item_selector,from,to,kind,params,priority`.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let expected = ["country_selector", "item_selector", "from", "to", "kind", "params", "priority"];
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::InvalidParameter(format!(
                "schedule header must be {}",
                expected.join(",")
            )));
        }
        let mut entries = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let id = i + 1;
            let ctx = |e: Error| Error::InvalidParameter(format!("schedule row {id}: {e}"));
            let kind_field = &row[4];
            let kind = match kind_field.strip_prefix("trq:") {
                Some(inner) => EntryKind::Quota(RateKind::parse(inner, &row[5]).map_err(ctx)?),
                None => EntryKind::Rate(RateKind::parse(kind_field, &row[5]).map_err(ctx)?),
            };
            entries.push(ScheduleEntry {
                id,
                countries: row[0].parse().map_err(ctx)?,
                items: row[1].parse().map_err(ctx)?,
                from: parse_bound(&row[2], false).map_err(ctx)?,
                to: parse_bound(&row[3], true).map_err(ctx)?,
                kind,
                priority: row[6]
                    .parse()
                    .map_err(|_| ctx(Error::InvalidParameter("priority must be an integer".into())))?,
            });
        }
        Ok(Self { entries })
    }

    /// Matching entries, highest priority first.
    pub fn candidates(&self, country: &str, item: u16, period: Period) -> Vec<&ScheduleEntry> {
        let mut found: Vec<&ScheduleEntry> = self
            .entries
            .iter()
            .filter(|e| e.matches(country, item, period))
            .collect();
        found.sort_by(|a, b| b.priority.cmp(&a.priority).then(a.id.cmp(&b.id)));
        found
    }

    /// Select the rate for one item-month. Quota entries are taken only when
    /// `quota_open` says the partner's quota is still open; otherwise the
    /// walk falls through to the next priority level. Returns the rate and an
    /// audit trail of the entries visited.
    pub fn resolve(
        &self,
        country: &str,
        item: u16,
        period: Period,
        mut quota_open: impl FnMut(&ScheduleEntry) -> Result<bool>,
    ) -> Result<(RateKind, String)> {
        let found = self.candidates(country, item, period);
        let mut trail = Vec::new();
        for (k, entry) in found.iter().enumerate() {
            if let Some(next) = found.get(k + 1) {
                if next.priority == entry.priority {
                    return Err(Error::AmbiguousSchedule {
                        first: entry.id,
                        second: next.id,
                        priority: entry.priority,
                        country: country.to_string(),
                        item,
                        period,
                    });
                }
            }
            match &entry.kind {
                EntryKind::Rate(rate) => {
                    trail.push(entry.audit_label());
                    return Ok((rate.clone(), trail.join(">")));
                }
                EntryKind::Quota(rate) => {
                    if quota_open(entry)? {
                        trail.push(format!("{}(in)", entry.audit_label()));
                        return Ok((rate.clone(), trail.join(">")));
                    }
                    trail.push(format!("{}(out)", entry.audit_label()));
                }
            }
        }
        Err(Error::UnmatchedSchedule {
            country: country.to_string(),
            item,
            period,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEMO: &str = "country_selector,item_selector,from,to,kind,params,priority
*,1-16,*,*,ad_valorem,r=0.385,0
!MEX|CHL|AUS,1-16,2003-08,2004-03,ad_valorem,r=0.5,10
MEX,2|5-8|10|13-15,JFY2007,*,trq:ad_valorem,r=0.308,20
LDC1|LDC2,*,JFY2007,*,exempt,,30
";

    fn p(s: &str) -> Period {
        s.parse().unwrap()
    }

    #[test]
    fn parses_and_resolves_priorities() {
        let s = RateSchedule::parse_csv(DEMO).unwrap();
        assert_eq!(s.entries.len(), 4);
        assert_eq!(s.entries[2].from, Some(p("2007-04")));
        let c = s.candidates("USA", 3, p("2003-09"));
        assert_eq!(c[0].id, 2);
        assert_eq!(c[1].id, 1);
        assert_eq!(s.candidates("MEX", 3, p("2003-09"))[0].id, 1);
        let open = |_: &ScheduleEntry| Ok(true);
        let closed = |_: &ScheduleEntry| Ok(false);
        let (rate, audit) = s.resolve("MEX", 5, p("2010-01"), open).unwrap();
        assert_eq!(rate, RateKind::AdValorem(0.308));
        assert_eq!(audit, "#3 trq:ad_valorem(in)");
        let (rate, audit) = s.resolve("MEX", 5, p("2010-01"), closed).unwrap();
        assert_eq!(rate, RateKind::AdValorem(0.385));
        assert_eq!(audit, "#3 trq:ad_valorem(out)>#1 ad_valorem");
        let (rate, _) = s.resolve("LDC1", 5, p("2007-04"), open).unwrap();
        assert_eq!(rate, RateKind::Exempt);
        let (_, audit) = s.resolve("LDC1", 5, p("2007-03"), open).unwrap();
        assert_eq!(audit, "#1 ad_valorem");
    }

    #[test]
    fn unmatched_and_ambiguous() {
        let s = RateSchedule::parse_csv(DEMO).unwrap();
        assert!(matches!(
            s.resolve("USA", 70, p("2003-09"), |_| Ok(true)),
            Err(Error::UnmatchedSchedule { item: 70, .. })
        ));
        let tie = "country_selector,item_selector,from,to,kind,params,priority
*,*,*,*,exempt,,1
USA,*,*,*,ad_valorem,r=0.1,1
";
        let s = RateSchedule::parse_csv(tie).unwrap();
        assert!(matches!(
            s.resolve("USA", 1, p("2000-01"), |_| Ok(true)),
            Err(Error::AmbiguousSchedule { .. })
        ));
        assert!(s.resolve("AUS", 1, p("2000-01"), |_| Ok(true)).is_ok());
    }

    #[test]
    fn gps_entry_derives_threshold() {
        let text = "country_selector,item_selector,from,to,kind,params,priority
*,28-48,JFY2000,*,gps,G=524;F=546.35;D=482;r=0.043,0
";
        let s = RateSchedule::parse_csv(text).unwrap();
        match &s.entries[0].kind {
            EntryKind::Rate(RateKind::Gps(b)) => assert!((b.threshold - 64.35).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_rows() {
        let bad_header = "a,b\n";
        assert!(RateSchedule::parse_csv(bad_header).is_err());
        let bad_kind = "country_selector,item_selector,from,to,kind,params,priority\n*,*,*,*,levy,,0\n";
        let err = RateSchedule::parse_csv(bad_kind).unwrap_err().to_string();
        assert!(err.contains("row 1"), "{err}");
        let bad_gps = "country_selector,item_selector,from,to,kind,params,priority\n*,*,*,*,gps,G=524;F=546.35,0\n";
        assert!(RateSchedule::parse_csv(bad_gps).is_err());
    }

    #[test]
    fn selectors() {
        let c: CountrySelector = "!MEX|CHL".parse().unwrap();
        assert!(c.matches("USA") && !c.matches("MEX"));
        let i: ItemSelector = "2|5-8".parse().unwrap();
        assert!(i.matches(2) && i.matches(7) && !i.matches(4));
        assert!("8-5".parse::<ItemSelector>().is_err());
    }
}
