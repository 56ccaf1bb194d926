//! Configuration-driven runs: ingestion, tariff evaluation, simulation and
//! the two estimation stages, with text and CSV reports.

mod config;
mod report;

pub use config::{RunConfig, SimSettings};
pub use report::{render_report, write_outputs, Sections};

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ces::{simulate_panel, FirstStageParams, SecondStageParams};
use crate::econometrics::{
    delta_sigma, first_stage_designs, iv_diagnostics, recover_aggregates, within_fe_2sls, within_fe_ls,
    AggregateSeries, Estimator, FeEstimate, FeOptions, IvDiagnostics, Transformed,
};
use crate::error::{Error, Result};
use crate::period::Period;
use crate::tariff::{read_quotas, write_tariff_table, RateSchedule, TariffEngine};
use crate::timeseries::{
    annualize, channel_test, engle_granger, estimate_second, read_domestic, select_spec, write_domestic,
    AnnualSeries, ChannelMode, ChannelTest, EgResult, SecondOptions, SecondStageResult,
    VariablePretest,
};
use crate::trade_data::{
    aggregate_items, build_panel, filter_sparse, read_exchange_rates, read_transactions, split_pork,
    write_exchange_rates, write_panel, write_transactions, ExchangeRates, Meat, MeatGroup, PanelDataset,
    TransactionRecord,
};

/// First-stage outcome for one panel segment.
#[derive(Debug, Clone)]
pub struct FirstStageResult {
    pub panel_obs: usize,
    pub countries: usize,
    /// Countries removed for having too few observations.
    pub dropped_countries: Vec<String>,
    pub ls: FeEstimate,
    /// `None` when IV failed or was suppressed for weak instruments.
    pub iv: Option<FeEstimate>,
    pub iv_rows_dropped: usize,
    pub diagnostics: Option<IvDiagnostics>,
    /// Reported in place of IV when the instruments are weak.
    pub channel: Option<ChannelTest>,
    pub chosen: Estimator,
    pub note: String,
    pub sigma: Transformed,
    pub aggregates: std::result::Result<AggregateSeries, String>,
    /// Post-tariff import value per month over the unfiltered segment.
    pub weights: BTreeMap<Period, f64>,
}

impl FirstStageResult {
    pub fn chosen_estimate(&self) -> &FeEstimate {
        match (self.chosen, &self.iv) {
            (Estimator::Iv, Some(iv)) => iv,
            _ => &self.ls,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SecondStageReport {
    pub annual: AnnualSeries,
    pub pretests: Vec<VariablePretest>,
    pub eg: Option<EgResult>,
    pub result: SecondStageResult,
    /// `Q` on `R` in differences, reported when the instruments are weak.
    pub channel: Option<ChannelTest>,
}

#[derive(Debug, Clone)]
pub struct SegmentResult {
    pub label: String,
    pub slug: String,
    pub meat: Meat,
    pub window: (Period, Period),
    pub panel: PanelDataset,
    pub first: FirstStageResult,
    pub second: std::result::Result<SecondStageReport, String>,
}

fn slug(label: &str) -> String {
    label
        .chars()
        .filter_map(|c| match c {
            'a'..='z' | '0'..='9' => Some(c),
            'A'..='Z' => Some(c.to_ascii_lowercase()),
            ' ' => Some('_'),
            _ => None,
        })
        .collect()
}

fn meats(cfg: &RunConfig, records: &[TransactionRecord]) -> Vec<Meat> {
    match cfg.meat {
        Some(m) => vec![m],
        None => Meat::ALL
            .into_iter()
            .filter(|m| {
                let g = MeatGroup::default_for(*m);
                records.iter().any(|r| g.contains(r.item))
            })
            .collect(),
    }
}

fn window(cfg: &RunConfig, records: &[TransactionRecord], group: &MeatGroup) -> Result<(Period, Period)> {
    let periods = records.iter().filter(|r| group.contains(r.item)).map(|r| r.period);
    let (lo, hi) = periods.fold((None, None), |(lo, hi): (Option<Period>, Option<Period>), p| {
        (Some(lo.map_or(p, |l| l.min(p))), Some(hi.map_or(p, |h| h.max(p))))
    });
    let start = cfg.start.or(lo);
    let end = cfg.end.or(hi);
    match (start, end) {
        (Some(s), Some(e)) => Ok((s, e)),
        _ => Err(Error::EmptyPanel(format!("no {} transactions", group.meat))),
    }
}

struct Inputs {
    records: Vec<TransactionRecord>,
    fx: ExchangeRates,
    engine: TariffEngine,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let records = read_transactions(cfg.input("transactions")?)?;
    let fx = read_exchange_rates(cfg.input("exchange_rates")?)?;
    Ok(Inputs {
        records,
        fx,
        engine: load_engine(cfg)?,
    })
}

fn load_engine(cfg: &RunConfig) -> Result<TariffEngine> {
    let schedule = RateSchedule::from_csv(cfg.input("schedule")?)?;
    let quotas = match cfg.quotas {
        Some(_) => read_quotas(cfg.input("quotas")?)?,
        None => Vec::new(),
    };
    Ok(TariffEngine::new(schedule, quotas))
}

/// Build the panel of one meat; pork is split into regular and prime.
fn segment_panels(cfg: &RunConfig, inputs: &Inputs, meat: Meat) -> Result<Vec<PanelDataset>> {
    let group = MeatGroup::default_for(meat);
    let win = window(cfg, &inputs.records, &group)?;
    let cells = aggregate_items(&inputs.records, &group)?;
    let table = inputs.engine.evaluate(&inputs.records, &group)?;
    let tariffs = table.iter().map(|(k, cell)| (k.clone(), cell.t)).collect();
    let panel = build_panel(meat, win, &cells, &tariffs, &inputs.fx)?;
    Ok(match meat {
        Meat::Pork => {
            let (regular, prime) = split_pork(&panel, cfg.pork_threshold);
            vec![regular, prime]
        }
        _ => vec![panel],
    })
}

fn run_first_stage(cfg: &RunConfig, fx: &ExchangeRates, full: &PanelDataset) -> Result<(PanelDataset, FirstStageResult)> {
    let weights = full.monthly_values();
    let panel = filter_sparse(full, cfg.min_obs)?;
    let kept = panel.countries();
    let dropped_countries: Vec<String> = full
        .countries()
        .into_iter()
        .filter(|c| !kept.contains(c))
        .map(String::from)
        .collect();
    let opts = FeOptions {
        bandwidth: cfg.bandwidth,
        full_covariance: true,
    };
    let designs = first_stage_designs(&panel, fx, &cfg.instruments, cfg.cumulation)?;
    let ls = within_fe_ls(&designs.ls, &opts)?;

    let mut note = String::new();
    let iv = match within_fe_2sls(&designs.iv, &opts) {
        Ok(iv) => Some(iv),
        Err(e) => {
            log::warn!("{}: IV not estimated: {e}", panel.label);
            note = format!("IV not estimated: {e}");
            None
        }
    };
    let diagnostics = match &iv {
        Some(_) => match iv_diagnostics(&designs.iv, &opts) {
            Ok(d) => Some(d),
            Err(e) => {
                note = format!("diagnostics unavailable: {e}");
                None
            }
        },
        None => None,
    };

    let mut channel = None;
    let (iv, chosen) = match (iv, &diagnostics) {
        (Some(_), Some(d)) if d.kp_wald_f < cfg.weak_iv_floor => {
            // instruments irrelevant: test the exchange-rate channel directly
            let rows: Vec<_> = panel.observations().iter().filter(|o| o.e.is_some()).collect();
            let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
            let entity: Vec<usize> = rows
                .iter()
                .map(|o| {
                    let next = ids.len();
                    *ids.entry(o.country.as_str()).or_insert(next)
                })
                .collect();
            let e: Vec<f64> = rows.iter().map(|o| o.e.expect("filtered")).collect();
            let ce: Vec<f64> = rows.iter().map(|o| o.c - o.e.expect("filtered")).collect();
            let test = channel_test(&e, &ce, &ChannelMode::FixedEffects { entity }, cfg.significance)?;
            note = format!(
                "weak instruments (Wald F {:.3} < {}): IV suppressed, LS used; channel test p = {:.3}",
                d.kp_wald_f, cfg.weak_iv_floor, test.p
            );
            channel = Some(test);
            (None, Estimator::Ls)
        }
        (Some(iv), Some(d)) => match d.endogeneity.p {
            Some(p) if p < cfg.significance => {
                note = format!("endogeneity test p = {p:.3} < {}: IV used", cfg.significance);
                (Some(iv), Estimator::Iv)
            }
            Some(p) => {
                note = format!("endogeneity test p = {p:.3} >= {}: LS used", cfg.significance);
                (Some(iv), Estimator::Ls)
            }
            None => (Some(iv), Estimator::Ls),
        },
        (iv, _) => (iv, Estimator::Ls),
    };

    let est = match (chosen, &iv) {
        (Estimator::Iv, Some(iv)) => iv,
        _ => &ls,
    };
    let sigma = delta_sigma(est, "P")?;
    let aggregates = recover_aggregates(est, "P").map_err(|e| e.to_string());
    let result = FirstStageResult {
        panel_obs: panel.len(),
        countries: panel.n_countries(),
        dropped_countries,
        ls,
        iv,
        iv_rows_dropped: designs.dropped,
        diagnostics,
        channel,
        chosen,
        note,
        sigma,
        aggregates,
        weights,
    };
    Ok((panel, result))
}

fn run_second_stage(cfg: &RunConfig, meat: Meat, first: &FirstStageResult) -> std::result::Result<SecondStageReport, String> {
    let path = cfg
        .domestic_path(meat)
        .ok_or_else(|| "no domestic data configured".to_string())?;
    if !path.is_file() {
        return Err(format!("domestic data file {} not found", file_name(&path)));
    }
    let domestic = read_domestic(&path).map_err(|e| e.to_string())?;
    let aggregates = first.aggregates.as_ref().map_err(|e| format!("no first-stage aggregates: {e}"))?;
    let q_hat: BTreeMap<Period, f64> = aggregates
        .points
        .iter()
        .filter_map(|p| p.q.map(|q| (Period::from_ordinal(p.time), q)))
        .collect();
    let annual = annualize(&q_hat, &first.weights, &domestic).map_err(|e| e.to_string())?;
    let rq = annual.relative_price();
    let pretests = vec![
        VariablePretest::run("H", &annual.h, &cfg.adf).map_err(|e| format!("pretest on H: {e}"))?,
        VariablePretest::run("R-Q", &rq, &cfg.adf).map_err(|e| format!("pretest on R-Q: {e}"))?,
    ];
    let eg = engle_granger(&annual.h, &rq, cfg.adf.lags).map_err(|e| format!("cointegration test: {e}"))?;
    let spec = select_spec(&pretests, Some(&eg), cfg.significance).map_err(|e| e.to_string())?;
    let opts = SecondOptions {
        significance: cfg.significance,
        weak_iv_floor: cfg.weak_iv_floor,
    };
    let result = estimate_second(&annual, spec, &opts).map_err(|e| e.to_string())?;
    let channel = match &result.diagnostics {
        Some(d) if d.kp_wald_f < cfg.weak_iv_floor => Some(
            channel_test(&annual.q, &annual.r, &ChannelMode::FirstDifferences, cfg.significance)
                .map_err(|e| format!("channel test: {e}"))?,
        ),
        _ => None,
    };
    Ok(SecondStageReport {
        annual,
        pretests,
        eg: Some(eg),
        result,
        channel,
    })
}

fn file_name(path: &std::path::Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Run both stages for every selected segment.
pub fn run_estimate(cfg: &RunConfig) -> Result<Vec<SegmentResult>> {
    let inputs = load_inputs(cfg)?;
    let mut out = Vec::new();
    for meat in meats(cfg, &inputs.records) {
        for full in segment_panels(cfg, &inputs, meat)? {
            if full.is_empty() {
                log::warn!("{}: no observations", full.label);
                continue;
            }
            let window = (full.start, full.end);
            let label = full.label.clone();
            let (panel, first) = run_first_stage(cfg, &inputs.fx, &full)?;
            let second = run_second_stage(cfg, meat, &first);
            if let Err(e) = &second {
                log::warn!("{label}: second stage not estimated: {e}");
            }
            out.push(SegmentResult {
                slug: slug(&label),
                label,
                meat,
                window,
                panel,
                first,
                second,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyPanel("no segment has observations".into()));
    }
    Ok(out)
}

/// Estimate and write the report sections to the output directory.
pub fn cmd_estimate(cfg: &RunConfig, sections: Sections) -> Result<Vec<PathBuf>> {
    let results = run_estimate(cfg)?;
    write_outputs(cfg, &results, sections)
}

/// Write the per-cell item aggregation of each selected meat.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let records = read_transactions(cfg.input("transactions")?)?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut written = Vec::new();
    for meat in meats(cfg, &records) {
        let group = MeatGroup::default_for(meat);
        let cells = aggregate_items(&records, &group)?;
        let path = cfg.output_dir.join(format!("cells_{meat}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["country", "period", "value_jpy", "quantity_kg", "cif_jpy_per_kg"])?;
        for ((country, period), cell) in &cells {
            w.write_record([
                country.clone(),
                period.to_string(),
                cell.value.to_string(),
                cell.quantity.to_string(),
                cell.cif().to_string(),
            ])?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

/// Write the effective tariff table of each selected meat.
pub fn cmd_tariff(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let records = read_transactions(cfg.input("transactions")?)?;
    let engine = load_engine(cfg)?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut written = Vec::new();
    for meat in meats(cfg, &records) {
        let table = engine.evaluate(&records, &MeatGroup::default_for(meat))?;
        let path = cfg.output_dir.join(format!("tariff_{meat}.csv"));
        write_tariff_table(&path, &table)?;
        written.push(path);
    }
    Ok(written)
}

/// Generate a synthetic dataset, its ground truth and a config that runs the
/// estimation on it.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut sim = cfg.sim.config.clone();
    if let Some(m) = cfg.meat {
        sim.meat = m;
    }
    let first = FirstStageParams::uniform(cfg.sim.sigma, sim.countries)?;
    let second = SecondStageParams::new(cfg.sim.rho, cfg.sim.beta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let out = simulate_panel(&sim, &first, &second, &mut rng)?;

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let meat = sim.meat;
    let files = [
        "transactions.csv",
        "exchange_rates.csv",
        "schedule.csv",
        "quotas.csv",
        &format!("domestic_{meat}.csv"),
        "truth.json",
        "run.cfg",
    ]
    .map(|f| dir.join(f));
    write_transactions(&files[0], &out.records)?;
    write_exchange_rates(&files[1], &out.fx)?;
    fs::write(
        &files[2],
        format!(
            "country_selector,item_selector,from,to,kind,params,priority\n*,*,,,{},{},0\n",
            sim.tariff.name(),
            sim.tariff.params()
        ),
    )?;
    fs::write(&files[3], "country,jfy,limit_kg,item_tags\n")?;
    write_domestic(&files[4], &out.domestic)?;
    let truth = serde_json::to_string_pretty(&out.truth)?;
    fs::write(&files[5], truth + "\n")?;
    let instruments: Vec<&str> = cfg.instruments.iter().map(|i| i.name()).collect();
    let run = format!(
        "# synthetic {meat} run, seed {seed}\n\
         transactions = transactions.csv\n\
         exchange_rates = exchange_rates.csv\n\
         schedule = schedule.csv\n\
         quotas = quotas.csv\n\
         domestic = domestic_{{meat}}.csv\n\
         meat = {meat}\n\
         pork_threshold = {thr}\n\
         min_obs = {min_obs}\n\
         bandwidth = {bw}\n\
         instruments = {instr}\n\
         cumulation = {cum}\n\
         significance = {sig}\n\
         weak_iv_floor = {floor}\n\
         seed = {seed}\n\
         output_dir = report\n",
        seed = cfg.seed,
        thr = cfg.pork_threshold,
        min_obs = cfg.min_obs,
        bw = cfg.bandwidth,
        instr = instruments.join(","),
        cum = cfg.cumulation,
        sig = cfg.significance,
        floor = cfg.weak_iv_floor,
    );
    fs::write(&files[6], run)?;
    // the panel as the simulator built it, for inspection
    let panel_path = dir.join(format!("panel_{meat}.csv"));
    write_panel(&panel_path, &out.panel)?;
    let mut written = files.to_vec();
    written.push(panel_path);
    Ok(written)
}
