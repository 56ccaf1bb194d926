use std::path::{Path, PathBuf};

use crate::ces::SimConfig;
use crate::econometrics::{Cumulation, InstrumentKind};
use crate::error::{Error, Result};
use crate::period::Period;
use crate::tariff::RateKind;
use crate::timeseries::{AdfSpec, Deterministic, LagSelection};
use crate::trade_data::Meat;

/// Parameters of a synthetic run beyond [`SimConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub config: SimConfig,
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            config: SimConfig::default(),
            sigma: 4.0,
            rho: 1.2,
            beta: 0.6,
        }
    }
}

/// Settings of one run, read from a flat `key = value` file. Relative paths
/// are resolved against the directory holding the file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub transactions: Option<PathBuf>,
    pub exchange_rates: Option<PathBuf>,
    pub schedule: Option<PathBuf>,
    pub quotas: Option<PathBuf>,
    /// Domestic CSV path; `{meat}` is replaced by the meat name.
    pub domestic: Option<String>,
    /// `None` runs every meat with transactions on file.
    pub meat: Option<Meat>,
    pub start: Option<Period>,
    pub end: Option<Period>,
    /// KJPY/kg.
    pub pork_threshold: f64,
    pub min_obs: usize,
    pub bandwidth: usize,
    pub instruments: Vec<InstrumentKind>,
    pub cumulation: Cumulation,
    pub significance: f64,
    pub weak_iv_floor: f64,
    pub seed: u64,
    pub adf: AdfSpec,
    pub output_dir: PathBuf,
    pub sim: SimSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            transactions: None,
            exchange_rates: None,
            schedule: None,
            quotas: None,
            domestic: None,
            meat: None,
            start: None,
            end: None,
            pork_threshold: 0.8,
            min_obs: 9,
            bandwidth: 5,
            instruments: vec![InstrumentKind::LogFx, InstrumentKind::LogFxCum],
            cumulation: Cumulation::JfyMean,
            significance: 0.05,
            weak_iv_floor: 10.0,
            seed: 1,
            adf: AdfSpec::default(),
            output_dir: PathBuf::from("output"),
            sim: SimSettings::default(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let resolve = |v: &str| base.join(v);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value, &resolve)
                .map_err(|e| Error::Config(format!("line {}: {}", lineno + 1, strip_prefix(e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, resolve: &dyn Fn(&str) -> PathBuf) -> Result<()> {
        match key {
            "transactions" => self.transactions = Some(resolve(value)),
            "exchange_rates" => self.exchange_rates = Some(resolve(value)),
            "schedule" => self.schedule = Some(resolve(value)),
            "quotas" => self.quotas = Some(resolve(value)),
            "domestic" => self.domestic = Some(resolve(value).to_string_lossy().into_owned()),
            "output_dir" => self.output_dir = resolve(value),
            "meat" => self.meat = if value == "all" { None } else { Some(value.parse()?) },
            "start" => self.start = Some(value.parse()?),
            "end" => self.end = Some(value.parse()?),
            "pork_threshold" => self.pork_threshold = num(key, value)?,
            "min_obs" => self.min_obs = num(key, value)?,
            "bandwidth" => self.bandwidth = num(key, value)?,
            "instruments" => {
                self.instruments = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "cumulation" => self.cumulation = value.parse()?,
            "significance" => self.significance = num(key, value)?,
            "weak_iv_floor" => self.weak_iv_floor = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "adf_max_lags" => self.adf.lags = LagSelection::Aic { max: num(key, value)? },
            "adf_lags" => self.adf.lags = LagSelection::Fixed(num(key, value)?),
            "adf_trend" => self.adf.deterministic = value.parse::<Deterministic>()?,
            k if k.starts_with("sim.") => self.set_sim(&k[4..], value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    fn set_sim(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.sim;
        let c = &mut s.config;
        match key {
            "sigma" => s.sigma = num(key, value)?,
            "rho" => s.rho = num(key, value)?,
            "beta" => s.beta = num(key, value)?,
            "countries" => c.countries = num(key, value)?,
            "months" => c.months = num(key, value)?,
            "start" => c.start = value.parse()?,
            "demand_sd" => c.demand_sd = num(key, value)?,
            "supply_sd" => c.supply_sd = num(key, value)?,
            "supply_elasticity" => {
                c.supply_elasticity = match value {
                    "none" | "inf" => None,
                    v => Some(num(key, v)?),
                }
            }
            "fx_persistence" => c.fx_persistence = num(key, value)?,
            "fx_sd" => c.fx_sd = num(key, value)?,
            "fob_level" => c.fob_level = num(key, value)?,
            "fob_dispersion" => c.fob_dispersion = num(key, value)?,
            "expenditure" => c.expenditure = num(key, value)?,
            "expenditure_sd" => c.expenditure_sd = num(key, value)?,
            "tariff" => {
                let (kind, params) = value.split_once(char::is_whitespace).unwrap_or((value, ""));
                c.tariff = RateKind::parse(kind, params.trim())?;
            }
            "domestic_price" => c.domestic.price = num(key, value)?,
            "domestic_price_sd" => c.domestic.price_sd = num(key, value)?,
            "domestic_shock_sd" => c.domestic.shock_sd = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key \"sim.{other}\""))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pork_threshold > 0.0) {
            return Err(Error::Config(format!("pork_threshold must be positive, got {}", self.pork_threshold)));
        }
        if self.bandwidth == 0 {
            return Err(Error::Config("bandwidth must be at least 1".into()));
        }
        if ![0.01, 0.05, 0.10].iter().any(|s| (s - self.significance).abs() < 1e-12) {
            return Err(Error::Config(format!(
                "significance must be 0.01, 0.05 or 0.10, got {}",
                self.significance
            )));
        }
        if !(self.weak_iv_floor >= 0.0) {
            return Err(Error::Config("weak_iv_floor must be non-negative".into()));
        }
        if self.instruments.is_empty() {
            return Err(Error::Config("at least one instrument is required".into()));
        }
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if e < s {
                return Err(Error::Config(format!("end {e} precedes start {s}")));
            }
        }
        Ok(())
    }

    /// Path of a required input file, checked to exist.
    pub fn input(&self, key: &str) -> Result<&Path> {
        let path = match key {
            "transactions" => self.transactions.as_deref(),
            "exchange_rates" => self.exchange_rates.as_deref(),
            "schedule" => self.schedule.as_deref(),
            "quotas" => self.quotas.as_deref(),
            _ => None,
        }
        .ok_or_else(|| Error::Config(format!("{key} is not set")))?;
        if !path.is_file() {
            return Err(Error::Config(format!("{key} file {} does not exist", path.display())));
        }
        Ok(path)
    }

    pub fn domestic_path(&self, meat: Meat) -> Option<PathBuf> {
        self.domestic
            .as_ref()
            .map(|t| PathBuf::from(t.replace("{meat}", &meat.to_string())))
    }
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
