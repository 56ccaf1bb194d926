use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use super::{FirstStageResult, RunConfig, SecondStageReport, SegmentResult};
use crate::econometrics::{Estimator, FeEstimate, IvDiagnostics, TestStat, Transformed};
use crate::error::Result;
use crate::period::Period;
use crate::timeseries::{AdfResult, ChannelTest, SecondSpec};
use crate::trade_data::write_panel;

/// Which parts of the report to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sections {
    First,
    Second,
    All,
}

impl Sections {
    fn first(self) -> bool {
        matches!(self, Sections::First | Sections::All)
    }

    fn second(self) -> bool {
        matches!(self, Sections::Second | Sections::All)
    }

    fn report_name(self) -> &'static str {
        match self {
            Sections::First => "first_stage.txt",
            Sections::Second => "second_stage.txt",
            Sections::All => "report.txt",
        }
    }
}

fn f3(v: f64) -> String {
    if v.is_nan() {
        "n/a".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        let s = format!("{v:.3}");
        if s == "-0.000" { "0.000".into() } else { s }
    }
}

fn pv(p: Option<f64>) -> String {
    match p {
        Some(p) => format!("({})", f3(p)),
        None => "(n/a)".into(),
    }
}

fn se(v: f64) -> String {
    format!("[{}]", f3(v))
}

fn coef_block(out: &mut String, columns: &[(&str, &FeEstimate)], terms: &[&str]) {
    let _ = write!(out, "  {:<14}", "");
    for (name, _) in columns {
        let _ = write!(out, "{name:>12}");
    }
    out.push('\n');
    for term in terms {
        let _ = write!(out, "  {term:<14}");
        for (_, est) in columns {
            let _ = write!(out, "{:>12}", est.coef_of(term).map(f3).unwrap_or_default());
        }
        out.push('\n');
        let _ = write!(out, "  {:<14}", "");
        for (_, est) in columns {
            let _ = write!(out, "{:>12}", est.se_of(term).map(se).unwrap_or_default());
        }
        out.push('\n');
    }
    let _ = write!(out, "  {:<14}", "observations");
    for (_, est) in columns {
        let _ = write!(out, "{:>12}", est.nobs);
    }
    out.push('\n');
}

fn test_line(out: &mut String, name: &str, t: &TestStat) {
    let df = if t.df == 0 {
        "exactly identified".to_string()
    } else {
        format!("chi2({})", t.df)
    };
    let _ = writeln!(out, "  {name:<34}{:>10}  {:<9} {df}", f3(t.stat), pv(t.p));
}

fn diagnostics_block(out: &mut String, d: &IvDiagnostics) {
    let _ = writeln!(out, " Diagnostics");
    test_line(out, "Underidentification (KP rk LM)", &d.kp_lm);
    let _ = writeln!(out, "  {:<34}{:>10}", "Weak identification (KP Wald F)", f3(d.kp_wald_f));
    test_line(out, "Overidentification (Hansen J)", &d.hansen_j);
    test_line(out, "Endogeneity (C statistic)", &d.endogeneity);
}

fn channel_block(out: &mut String, title: &str, t: &ChannelTest) {
    let _ = writeln!(out, " Channel test: {title}");
    let _ = writeln!(
        out,
        "  slope {} {} {}  df {}  -> {}",
        f3(t.slope),
        se(t.se),
        pv(Some(t.p)),
        t.df,
        if t.present { "channel present" } else { "no channel" }
    );
}

fn transformed_line(out: &mut String, name: &str, t: &Transformed) {
    let _ = writeln!(out, "  {name:<22}{:>10} {}", f3(t.estimate), se(t.se));
}

fn estimator_name(e: Estimator) -> &'static str {
    match e {
        Estimator::Ls => "LS",
        Estimator::Iv => "IV",
    }
}

fn render_first(out: &mut String, seg: &SegmentResult, cfg: &RunConfig) {
    let f: &FirstStageResult = &seg.first;
    let _ = writeln!(
        out,
        " Panel: {} observations, {} countries, {}..{}",
        f.panel_obs, f.countries, seg.window.0, seg.window.1
    );
    if !f.dropped_countries.is_empty() {
        let _ = writeln!(
            out,
            "  dropped with at most {} observations: {}",
            cfg.min_obs,
            f.dropped_countries.join(", ")
        );
    }
    let _ = writeln!(
        out,
        " First stage: S on P with country and month effects, HAC (Bartlett, bandwidth {})",
        cfg.bandwidth
    );
    let mut columns = vec![("LS", &f.ls)];
    if let Some(iv) = &f.iv {
        columns.push(("IV", iv));
    }
    coef_block(out, &columns, &["P"]);
    if f.iv.is_some() && f.iv_rows_dropped > 0 {
        let _ = writeln!(out, "  IV drops {} rows without instruments", f.iv_rows_dropped);
    }
    let instruments: Vec<&str> = cfg.instruments.iter().map(|i| i.name()).collect();
    let _ = writeln!(out, "  instruments: {} ({})", instruments.join(", "), cfg.cumulation);
    if let Some(d) = &f.diagnostics {
        diagnostics_block(out, d);
    }
    if let Some(t) = &f.channel {
        channel_block(out, "E on C-E, fixed effects", t);
    }
    let _ = writeln!(out, " Estimator: {} ({})", estimator_name(f.chosen), f.note);
    let _ = writeln!(out, " Delta method");
    transformed_line(out, "sigma = 1 - gamma", &f.sigma);
    match &f.aggregates {
        Ok(a) => {
            let present = a.points.iter().filter(|p| p.q.is_some()).count();
            let base = a.points.iter().rev().find(|p| p.q.is_some()).map(|p| Period::from_ordinal(p.time));
            let _ = writeln!(
                out,
                " Aggregates q_t: {present} months, base {}, {} gaps (aggregates_{}.csv)",
                base.map(|b| b.to_string()).unwrap_or_default(),
                a.gaps().len(),
                seg.slug
            );
        }
        Err(e) => {
            let _ = writeln!(out, " Aggregates q_t: not retrieved ({e})");
        }
    }
}

fn adf_cell(r: &AdfResult) -> String {
    format!("{} ({}) lags {}", f3(r.stat), f3(r.critical[1]), r.lags)
}

fn render_second(out: &mut String, s: &SecondStageReport, cfg: &RunConfig) {
    let a = &s.annual;
    let _ = writeln!(
        out,
        " Second stage: H on R-Q, {} years {}..{}, heteroskedasticity-robust",
        a.len(),
        a.years[0],
        a.years[a.len() - 1]
    );
    let lags = match cfg.adf.lags {
        crate::timeseries::LagSelection::Fixed(p) => format!("{p} lags"),
        crate::timeseries::LagSelection::Aic { max } => format!("AIC lags <= {max}"),
    };
    let _ = writeln!(
        out,
        "  pretests: ADF ({}, {lags}), statistic (5% critical value)",
        cfg.adf.deterministic
    );
    for v in &s.pretests {
        let _ = writeln!(out, "   {:<6} level {:<28} difference {}", v.name, adf_cell(&v.level), adf_cell(&v.difference));
    }
    if let Some(eg) = &s.eg {
        let _ = writeln!(
            out,
            "   Engle-Granger H on R-Q: {} ({})",
            f3(eg.stat),
            f3(eg.critical[1])
        );
    }
    let r = &s.result;
    let _ = writeln!(out, "  specification: {}", r.spec);
    let term = match r.spec {
        SecondSpec::Levels => "R-Q",
        SecondSpec::FirstDifferences => "d(R-Q)",
    };
    let terms: Vec<&str> = match r.spec {
        SecondSpec::Levels => vec![term, "const"],
        SecondSpec::FirstDifferences => vec![term],
    };
    let weak = s.channel.is_some();
    let mut columns = vec![("LS", &r.ls)];
    if let (Some(iv), false) = (&r.iv, weak) {
        columns.push(("IV", iv));
    }
    coef_block(out, &columns, &terms);
    if let Some(d) = &r.diagnostics {
        diagnostics_block(out, d);
    }
    if let Some(t) = &s.channel {
        channel_block(out, "Q on R, first differences", t);
    }
    let _ = writeln!(out, " Estimator: {} ({})", estimator_name(r.chosen), r.note);
    let _ = writeln!(out, " Delta method");
    transformed_line(out, "rho = 1 - eta", &r.rho);
    match &r.beta {
        Some(b) => transformed_line(out, "beta = logistic(phi)", b),
        None => {
            let _ = writeln!(out, "  {:<22}{:>10}", "beta", "not identified in differences");
        }
    }
}

/// Text report with coefficient tables, standard errors in brackets and
/// p-values in parentheses.
pub fn render_report(cfg: &RunConfig, results: &[SegmentResult], sections: Sections) -> String {
    let mut out = String::new();
    for seg in results {
        let _ = writeln!(out, "== {} ==", seg.label);
        if sections.first() {
            render_first(&mut out, seg, cfg);
        }
        if sections.second() {
            match &seg.second {
                Ok(s) => render_second(&mut out, s, cfg),
                Err(e) => {
                    let _ = writeln!(out, " Second stage: not estimated ({e})");
                }
            }
        }
        out.push('\n');
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Write the text report and the machine-readable CSVs.
pub fn write_outputs(cfg: &RunConfig, results: &[SegmentResult], sections: Sections) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let report = dir.join(sections.report_name());
    fs::write(&report, render_report(cfg, results, sections))?;
    written.push(report);

    let est_path = dir.join(match sections {
        Sections::First => "estimates_first.csv",
        Sections::Second => "estimates_second.csv",
        Sections::All => "estimates.csv",
    });
    let diag_path = dir.join(match sections {
        Sections::First => "diagnostics_first.csv",
        Sections::Second => "diagnostics_second.csv",
        Sections::All => "diagnostics.csv",
    });
    let mut est = csv::Writer::from_path(&est_path)?;
    est.write_record(["segment", "stage", "estimator", "term", "estimate", "se", "nobs", "chosen"])?;
    let mut diag = csv::Writer::from_path(&diag_path)?;
    diag.write_record(["segment", "stage", "test", "stat", "df", "p"])?;

    let write_fe = |w: &mut csv::Writer<fs::File>, seg: &str, stage: &str, e: &FeEstimate, chosen: bool| -> Result<()> {
        let se = e.se();
        for (k, name) in e.names.iter().enumerate() {
            w.write_record([
                seg.to_string(),
                stage.to_string(),
                e.estimator.to_string(),
                name.clone(),
                e.coef[k].to_string(),
                se[k].to_string(),
                e.nobs.to_string(),
                chosen.to_string(),
            ])?;
        }
        Ok(())
    };
    let write_t = |w: &mut csv::Writer<fs::File>, seg: &str, stage: &str, name: &str, t: &Transformed| -> Result<()> {
        w.write_record([
            seg.to_string(),
            stage.to_string(),
            "delta".to_string(),
            name.to_string(),
            t.estimate.to_string(),
            t.se.to_string(),
            String::new(),
            String::new(),
        ])?;
        Ok(())
    };
    let write_d = |w: &mut csv::Writer<fs::File>, seg: &str, stage: &str, d: &IvDiagnostics| -> Result<()> {
        let rows = [
            ("kp_lm", d.kp_lm.stat, d.kp_lm.df.to_string(), opt(d.kp_lm.p)),
            ("kp_wald_f", d.kp_wald_f, String::new(), String::new()),
            ("hansen_j", d.hansen_j.stat, d.hansen_j.df.to_string(), opt(d.hansen_j.p)),
            ("endogeneity", d.endogeneity.stat, d.endogeneity.df.to_string(), opt(d.endogeneity.p)),
        ];
        for (name, stat, df, p) in rows {
            w.write_record([seg.to_string(), stage.to_string(), name.to_string(), stat.to_string(), df, p])?;
        }
        Ok(())
    };
    let write_c = |w: &mut csv::Writer<fs::File>, seg: &str, stage: &str, t: &ChannelTest| -> Result<()> {
        w.write_record([
            seg.to_string(),
            stage.to_string(),
            "channel_t".to_string(),
            t.t.to_string(),
            t.df.to_string(),
            t.p.to_string(),
        ])?;
        Ok(())
    };

    for seg in results {
        let s = seg.slug.as_str();
        if sections.first() {
            let f = &seg.first;
            write_fe(&mut est, s, "first", &f.ls, f.chosen == Estimator::Ls)?;
            if let Some(iv) = &f.iv {
                write_fe(&mut est, s, "first", iv, f.chosen == Estimator::Iv)?;
            }
            write_t(&mut est, s, "first", "sigma", &f.sigma)?;
            if let Some(d) = &f.diagnostics {
                write_d(&mut diag, s, "first", d)?;
            }
            if let Some(t) = &f.channel {
                write_c(&mut diag, s, "first", t)?;
            }
            if let Ok(a) = &f.aggregates {
                let path = dir.join(format!("aggregates_{s}.csv"));
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(["period", "q", "se"])?;
                for p in &a.points {
                    w.write_record([Period::from_ordinal(p.time).to_string(), opt(p.q), opt(p.se)])?;
                }
                w.flush()?;
                written.push(path);
            }
            let path = dir.join(format!("panel_{s}.csv"));
            write_panel(&path, &seg.panel)?;
            written.push(path);
        }
        if sections.second() {
            if let Ok(sr) = &seg.second {
                let r = &sr.result;
                write_fe(&mut est, s, "second", &r.ls, r.chosen == Estimator::Ls)?;
                if let Some(iv) = &r.iv {
                    write_fe(&mut est, s, "second", iv, r.chosen == Estimator::Iv)?;
                }
                write_t(&mut est, s, "second", "rho", &r.rho)?;
                if let Some(b) = &r.beta {
                    write_t(&mut est, s, "second", "beta", b)?;
                }
                if let Some(d) = &r.diagnostics {
                    write_d(&mut diag, s, "second", d)?;
                }
                if let Some(t) = &sr.channel {
                    write_c(&mut diag, s, "second", t)?;
                }
                let path = dir.join(format!("annual_{s}.csv"));
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(["year", "H", "R", "Q", "imports_jpy"])?;
                let a = &sr.annual;
                for k in 0..a.len() {
                    w.write_record([
                        a.years[k].to_string(),
                        a.h[k].to_string(),
                        a.r[k].to_string(),
                        a.q[k].to_string(),
                        a.imports[k].to_string(),
                    ])?;
                }
                w.flush()?;
                written.push(path);
            }
        }
    }
    est.flush()?;
    diag.flush()?;
    written.push(est_path);
    written.push(diag_path);
    Ok(written)
}
