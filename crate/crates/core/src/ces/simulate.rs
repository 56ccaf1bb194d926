use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ces_index, FirstStageParams, SecondStageParams};
use crate::error::{Error, Result};
use crate::period::Period;
use crate::tariff::{effective_t, RateKind};
use crate::timeseries::{harmonic_mean, DomesticRecord};
use crate::trade_data::{
    aggregate_items, build_panel, ExchangeRates, Meat, MeatGroup, PanelDataset, TransactionRecord,
};

/// Domestic side of the synthetic economy, at annual frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomesticSim {
    /// Domestic price in the first year, JPY/kg.
    pub price: f64,
    /// Innovation sd of the log domestic price random walk.
    pub price_sd: f64,
    /// sd of the annual demand shock.
    pub shock_sd: f64,
}

impl Default for DomesticSim {
    fn default() -> Self {
        Self {
            price: 1500.0,
            price_sd: 0.08,
            shock_sd: 0.05,
        }
    }
}

/// Synthetic economy settings. Log FOB prices follow the inverse supply curve
/// `F = f_i + xi + (ln x - ln x_i) / e_s`, so a demand shock that raises
/// `x` also raises the price; with `supply_elasticity = None` supply is
/// perfectly elastic and prices are exogenous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub countries: usize,
    pub months: usize,
    pub start: Period,
    pub meat: Meat,
    /// sd of the taste shock `epsilon` in log shares.
    pub demand_sd: f64,
    /// sd of the FOB supply shock `xi`.
    pub supply_sd: f64,
    pub supply_elasticity: Option<f64>,
    /// AR(1) coefficient of each log exchange rate.
    pub fx_persistence: f64,
    pub fx_sd: f64,
    /// Typical CIF price, JPY/kg.
    pub fob_level: f64,
    /// sd of log FOB price levels across countries.
    pub fob_dispersion: f64,
    /// Mean log CIF/FOB discrepancy and its monthly noise.
    pub discrepancy: f64,
    pub discrepancy_sd: f64,
    /// Monthly import expenditure at pre-shock levels, JPY.
    pub expenditure: f64,
    pub expenditure_sd: f64,
    pub tariff: RateKind,
    pub domestic: DomesticSim,
    /// Redraws allowed for a month whose equilibrium is not finite.
    pub max_retries: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            countries: 10,
            months: 300,
            start: Period::new(1990, 1).expect("valid month"),
            meat: Meat::Beef,
            demand_sd: 0.3,
            supply_sd: 0.1,
            supply_elasticity: Some(2.0),
            fx_persistence: 0.9,
            fx_sd: 0.06,
            fob_level: 600.0,
            fob_dispersion: 0.3,
            discrepancy: 0.05,
            discrepancy_sd: 0.02,
            expenditure: 2.0e10,
            expenditure_sd: 0.1,
            tariff: RateKind::AdValorem(0.385),
            domestic: DomesticSim::default(),
            max_retries: 100,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.countries < 2 || self.months < 2 {
            return Err(Error::InvalidParameter(format!(
                "simulation needs at least 2 countries and 2 months, got {} and {}",
                self.countries, self.months
            )));
        }
        let sds = [
            ("demand_sd", self.demand_sd),
            ("supply_sd", self.supply_sd),
            ("fx_sd", self.fx_sd),
            ("fob_dispersion", self.fob_dispersion),
            ("discrepancy_sd", self.discrepancy_sd),
            ("expenditure_sd", self.expenditure_sd),
            ("domestic.price_sd", self.domestic.price_sd),
            ("domestic.shock_sd", self.domestic.shock_sd),
        ];
        if let Some((name, v)) = sds.iter().find(|(_, v)| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} must be a non-negative sd, got {v}")));
        }
        if let Some(e) = self.supply_elasticity {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::InvalidParameter(format!("supply elasticity must be positive, got {e}")));
            }
        }
        if !(self.fx_persistence.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "fx persistence {} makes the exchange rate non-stationary",
                self.fx_persistence
            )));
        }
        for (name, v) in [
            ("fob_level", self.fob_level),
            ("expenditure", self.expenditure),
            ("domestic.price", self.domestic.price),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if let RateKind::Gps(b) = &self.tariff {
            b.validate()?;
        }
        Ok(())
    }

    /// Item code used for every synthetic transaction: the first item of the
    /// meat group that carries full (non-carcass) GPS boundaries.
    pub fn item(&self) -> u16 {
        let group = MeatGroup::default_for(self.meat);
        group
            .items
            .iter()
            .copied()
            .find(|i| !crate::tariff::CARCASS_PORK_ITEMS.contains(i))
            .expect("meat groups have non-carcass items")
    }

    pub fn end(&self) -> Period {
        self.start.offset(self.months as i64 - 1)
    }

    pub fn country_code(i: usize) -> String {
        format!("C{:02}", i + 1)
    }
}

/// Parameters and shock draws behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub alpha: Vec<f64>,
    pub countries: Vec<String>,
    pub supply_elasticity: Option<f64>,
    /// Monthly aggregate `q_t`, standardized so the last month is 1.
    pub q: Vec<f64>,
    /// `demand_shocks[i][t]`
    pub demand_shocks: Vec<Vec<f64>>,
    pub supply_shocks: Vec<Vec<f64>>,
    pub expenditure_shocks: Vec<f64>,
    pub domestic_shocks: Vec<f64>,
    /// Months redrawn because their equilibrium was not finite.
    pub retries: usize,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub config: SimConfig,
    pub records: Vec<TransactionRecord>,
    pub fx: ExchangeRates,
    pub panel: PanelDataset,
    pub domestic: Vec<DomesticRecord>,
    pub truth: GroundTruth,
}

struct Country {
    /// Log FOB level in local currency.
    fob: f64,
    /// Mean log exchange rate.
    fx_mean: f64,
    /// Log reference supply quantity.
    supply_ref: f64,
}

struct MonthDraw {
    demand: Vec<f64>,
    supply: Vec<f64>,
    discrepancy: Vec<f64>,
    expenditure: f64,
}

struct MonthOutcome {
    log_c: Vec<f64>,
    log_x: Vec<f64>,
    t: Vec<f64>,
    log_q: f64,
}

fn normal<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    sd * rng.sample::<f64, _>(StandardNormal)
}

/// Generate a synthetic panel with known `(sigma, rho, alpha, beta)`.
///
/// The first-stage weights `alpha` in `first` are the long-run preference
/// weights; each month they are perturbed by `exp(epsilon_it)` and
/// renormalized. Exchange rates are independent of every demand shock.
pub fn simulate_panel<R: Rng + ?Sized>(
    cfg: &SimConfig,
    first: &FirstStageParams,
    second: &SecondStageParams,
    rng: &mut R,
) -> Result<SimOutput> {
    cfg.validate()?;
    let n = cfg.countries;
    if first.alpha().len() != n {
        return Err(Error::InvalidParameter(format!(
            "{} preference weights for {n} countries",
            first.alpha().len()
        )));
    }
    let sigma = first.sigma();
    let alpha = first.alpha();

    let countries: Vec<Country> = alpha
        .iter()
        .map(|a| {
            let fx_mean = (50.0f64).ln() + normal(rng, 1.5);
            Country {
                fob: cfg.fob_level.ln() - fx_mean - cfg.discrepancy + normal(rng, cfg.fob_dispersion),
                fx_mean,
                supply_ref: a.ln() + (cfg.expenditure / cfg.fob_level).ln(),
            }
        })
        .collect();

    let stationary_sd = cfg.fx_sd / (1.0 - cfg.fx_persistence.powi(2)).sqrt();
    let mut fx_dev: Vec<f64> = (0..n).map(|_| normal(rng, stationary_sd)).collect();

    let mut fx = ExchangeRates::new();
    let mut records = Vec::with_capacity(n * cfg.months);
    let mut demand_shocks = vec![Vec::with_capacity(cfg.months); n];
    let mut supply_shocks = vec![Vec::with_capacity(cfg.months); n];
    let mut expenditure_shocks = Vec::with_capacity(cfg.months);
    let mut log_q = Vec::with_capacity(cfg.months);
    let mut monthly_w: BTreeMap<Period, f64> = BTreeMap::new();
    let mut retries = 0;
    let item = cfg.item();

    for t in 0..cfg.months {
        let period = cfg.start.offset(t as i64);
        if t > 0 {
            for dev in fx_dev.iter_mut() {
                *dev = cfg.fx_persistence * *dev + normal(rng, cfg.fx_sd);
            }
        }
        let log_e: Vec<f64> = countries.iter().zip(&fx_dev).map(|(c, d)| c.fx_mean + d).collect();

        let mut attempt = 0;
        let (draw, outcome) = loop {
            let draw = MonthDraw {
                demand: (0..n).map(|_| normal(rng, cfg.demand_sd)).collect(),
                supply: (0..n).map(|_| normal(rng, cfg.supply_sd)).collect(),
                discrepancy: (0..n).map(|_| cfg.discrepancy + normal(rng, cfg.discrepancy_sd)).collect(),
                expenditure: normal(rng, cfg.expenditure_sd),
            };
            match solve_month(cfg, sigma, alpha, &countries, &log_e, &draw) {
                Some(outcome) => break (draw, outcome),
                None if attempt < cfg.max_retries => {
                    attempt += 1;
                    retries += 1;
                    log::debug!("simulation: redrawing {period} (attempt {attempt})");
                }
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "simulation: no finite equilibrium for {period} after {} redraws",
                        cfg.max_retries
                    )))
                }
            }
        };

        let mut w_t = 0.0;
        for i in 0..n {
            let country = SimConfig::country_code(i);
            let cif = outcome.log_c[i].exp();
            let quantity = outcome.log_x[i].exp();
            records.push(TransactionRecord {
                period,
                country: country.clone(),
                item,
                value: cif * quantity,
                quantity,
            });
            fx.insert(&country, period, log_e[i].exp())?;
            w_t += cif * quantity * outcome.t[i].exp();
            demand_shocks[i].push(draw.demand[i]);
            supply_shocks[i].push(draw.supply[i]);
        }
        monthly_w.insert(period, w_t);
        expenditure_shocks.push(draw.expenditure);
        log_q.push(outcome.log_q);
    }

    let base = *log_q.last().expect("at least two months");
    let q: Vec<f64> = log_q.iter().map(|l| (l - base).exp()).collect();

    let group = MeatGroup::default_for(cfg.meat);
    let cells = aggregate_items(&records, &group)?;
    let tariffs = cells
        .iter()
        .map(|(key, cell)| Ok((key.clone(), effective_t(cell.cif(), &cfg.tariff)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let panel = build_panel(cfg.meat, (cfg.start, cfg.end()), &cells, &tariffs, &fx)?;

    let (domestic, domestic_shocks) = simulate_domestic(cfg, second, &q, &monthly_w, rng)?;

    Ok(SimOutput {
        config: cfg.clone(),
        records,
        fx,
        panel,
        domestic,
        truth: GroundTruth {
            sigma,
            rho: second.rho(),
            beta: second.beta(),
            alpha: alpha.to_vec(),
            countries: (0..n).map(SimConfig::country_code).collect(),
            supply_elasticity: cfg.supply_elasticity,
            q,
            demand_shocks,
            supply_shocks,
            expenditure_shocks,
            domestic_shocks,
            retries,
        },
    })
}

/// Market clearing for one month. Returns `None` when the equilibrium is not
/// finite and positive.
fn solve_month(
    cfg: &SimConfig,
    sigma: f64,
    alpha: &[f64],
    countries: &[Country],
    log_e: &[f64],
    draw: &MonthDraw,
) -> Option<MonthOutcome> {
    let n = countries.len();
    let taste: Vec<f64> = alpha.iter().zip(&draw.demand).map(|(a, e)| a * e.exp()).collect();
    let total: f64 = taste.iter().sum();
    let taste: Vec<f64> = taste.iter().map(|a| a / total).collect();
    let log_spend = cfg.expenditure.ln() + draw.expenditure;
    // cost-side log CIF price before any supply response
    let base: Vec<f64> = (0..n)
        .map(|i| countries[i].fob + draw.supply[i] + log_e[i] + draw.discrepancy[i])
        .collect();

    // Given K = (sigma - 1) ln q + ln(qy), each country's price solves its
    // own supply curve; ln x = ln a~ - sigma P + K.
    let prices_at = |k: f64| -> Option<(Vec<f64>, Vec<f64>)> {
        let mut log_c = Vec::with_capacity(n);
        let mut tf = Vec::with_capacity(n);
        for i in 0..n {
            let c = match cfg.supply_elasticity {
                None => base[i],
                Some(es) => {
                    let demand = taste[i].ln() - countries[i].supply_ref + k;
                    solve_supply(base[i], demand, sigma, es, &cfg.tariff)?
                }
            };
            tf.push(effective_t(c.exp(), &cfg.tariff).ok()?);
            log_c.push(c);
        }
        Some((log_c, tf))
    };
    let k_of = |k: f64| -> Option<(f64, Vec<f64>, Vec<f64>, f64)> {
        let (log_c, tf) = prices_at(k)?;
        let p: Vec<f64> = log_c.iter().zip(&tf).map(|(c, t)| (c + t).exp()).collect();
        let lq = ces_index(&p, &taste, sigma).ln();
        Some(((sigma - 1.0) * lq + log_spend, log_c, tf, lq))
    };

    let (k, log_c, tf, lq) = if cfg.supply_elasticity.is_none() {
        k_of(0.0)?
    } else {
        // g(K) = K - k_of(K) is strictly increasing; bracket then bisect.
        let g = |k: f64| k_of(k).map(|(v, ..)| k - v);
        let start = k_of(0.0)?.0;
        let (mut lo, mut hi) = (start - 1.0, start + 1.0);
        let mut step = 1.0;
        while g(lo)? > 0.0 {
            step *= 2.0;
            lo -= step;
            if step > 1e6 {
                return None;
            }
        }
        step = 1.0;
        while g(hi)? < 0.0 {
            step *= 2.0;
            hi += step;
            if step > 1e6 {
                return None;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid)? > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-13 * (1.0 + mid.abs()) {
                break;
            }
        }
        let k = 0.5 * (lo + hi);
        let (_, log_c, tf, lq) = k_of(k)?;
        (k, log_c, tf, lq)
    };

    let log_x: Vec<f64> = (0..n)
        .map(|i| taste[i].ln() - sigma * (log_c[i] + tf[i]) + k)
        .collect();
    let finite = log_c.iter().chain(&log_x).chain(&tf).all(|v| v.is_finite()) && lq.is_finite();
    if !finite || log_x.iter().any(|x| x.exp() <= 0.0) || log_c.iter().any(|c| c.exp() <= 0.0) {
        return None;
    }
    Some(MonthOutcome { log_c, log_x, t: tf, log_q: lq })
}

/// Solve `C = base + (demand - sigma (C + T(C))) / e_s` for the log CIF price.
fn solve_supply(base: f64, demand: f64, sigma: f64, es: f64, tariff: &RateKind) -> Option<f64> {
    if let RateKind::AdValorem(r) = tariff {
        let t = r.ln_1p();
        return Some((es * base + demand - sigma * t) / (es + sigma));
    }
    // h is strictly increasing because the post-tariff price is non-decreasing in C
    let h = |c: f64| -> Option<f64> {
        let t = effective_t(c.exp(), tariff).ok()?;
        Some(c - base - (demand - sigma * (c + t)) / es)
    };
    let (mut lo, mut hi) = (base - 1.0, base + 1.0);
    let mut width = 1.0;
    while h(lo)? > 0.0 {
        width *= 2.0;
        lo = base - width;
        if width > 256.0 {
            return None;
        }
    }
    width = 1.0;
    while h(hi)? < 0.0 {
        width *= 2.0;
        hi = base + width;
        if width > 256.0 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Annual domestic price and quantity generated from
/// `H = phi + (1 - rho)(R - Q) + nu`, with `Q` the harmonic annual mean of
/// the standardized `q_t` over complete calendar years.
fn simulate_domestic<R: Rng + ?Sized>(
    cfg: &SimConfig,
    second: &SecondStageParams,
    q: &[f64],
    monthly_w: &BTreeMap<Period, f64>,
    rng: &mut R,
) -> Result<(Vec<DomesticRecord>, Vec<f64>)> {
    let mut by_year: BTreeMap<i32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (t, (period, w)) in monthly_w.iter().enumerate() {
        let entry = by_year.entry(period.year()).or_default();
        entry.0.push(q[t]);
        entry.1.push(*w);
    }
    let eta = 1.0 - second.rho();
    let mut log_r = cfg.domestic.price.ln();
    let mut out = Vec::new();
    let mut shocks = Vec::new();
    for (year, (qs, ws)) in by_year.into_iter().filter(|(_, (qs, _))| qs.len() == 12) {
        if !out.is_empty() {
            log_r += normal(rng, cfg.domestic.price_sd);
        }
        let nu = normal(rng, cfg.domestic.shock_sd);
        let big_q = harmonic_mean(&qs, &ws)?.ln();
        let h = second.phi() + eta * (log_r - big_q) + nu;
        let imports: f64 = ws.iter().sum();
        let price = log_r.exp();
        out.push(DomesticRecord {
            year,
            price,
            quantity: h.exp() * imports / price,
        });
        shocks.push(nu);
    }
    Ok((out, shocks))
}
