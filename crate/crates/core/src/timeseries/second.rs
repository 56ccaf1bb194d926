use statrs::distribution::{ContinuousCDF, StudentsT};

use super::adf::SecondSpec;
use super::AnnualSeries;
use crate::econometrics::{
    beta_from_phi, iv_diagnostics, rho_from_eta, within_fe_2sls, within_fe_ls, Absorb, Column, Estimator, FeDesign,
    FeEstimate, FeOptions, IvDiagnostics, Transformed,
};
use crate::error::{Error, Result};

pub const MIN_ANNUAL_OBS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOptions {
    pub significance: f64,
    /// IV is only carried forward when the weak-identification F reaches this.
    pub weak_iv_floor: f64,
}

impl Default for SecondOptions {
    fn default() -> Self {
        Self {
            significance: 0.05,
            weak_iv_floor: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SecondStageResult {
    pub spec: SecondSpec,
    pub nobs: usize,
    pub ls: FeEstimate,
    pub iv: Option<FeEstimate>,
    pub diagnostics: Option<IvDiagnostics>,
    pub chosen: Estimator,
    pub eta: Transformed,
    pub rho: Transformed,
    /// Levels only: the intercept is not identified in differences.
    pub phi: Option<Transformed>,
    pub beta: Option<Transformed>,
    /// Why the chosen estimator was chosen, or why IV is missing.
    pub note: String,
}

impl SecondStageResult {
    pub fn chosen_estimate(&self) -> &FeEstimate {
        match (self.chosen, &self.iv) {
            (Estimator::Iv, Some(iv)) => iv,
            _ => &self.ls,
        }
    }
}

pub(crate) const REGRESSOR: &str = "R-Q";
pub(crate) const REGRESSOR_D: &str = "d(R-Q)";

fn diff(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Regress `H` on `R - Q` in levels (with a constant) or first differences
/// (without), instrumenting `R - Q` with `Q` and `exp(Q)` or their
/// differences. Standard errors are heteroskedasticity-robust.
pub fn estimate_second(annual: &AnnualSeries, spec: SecondSpec, opts: &SecondOptions) -> Result<SecondStageResult> {
    let rq = annual.relative_price();
    let level_q: Vec<f64> = annual.q.iter().map(|q| q.exp()).collect();
    let (y, x, z1, z2, name) = match spec {
        SecondSpec::Levels => (annual.h.clone(), rq, annual.q.clone(), level_q, REGRESSOR),
        SecondSpec::FirstDifferences => (diff(&annual.h), diff(&rq), diff(&annual.q), diff(&level_q), REGRESSOR_D),
    };
    let n = y.len();
    if n < MIN_ANNUAL_OBS {
        return Err(Error::SeriesTooShort {
            len: n,
            required: MIN_ANNUAL_OBS,
        });
    }
    let time: Vec<i64> = match spec {
        SecondSpec::Levels => annual.years.iter().map(|y| *y as i64).collect(),
        SecondSpec::FirstDifferences => annual.years[1..].iter().map(|y| *y as i64).collect(),
    };
    let (y_name, z_names) = match spec {
        SecondSpec::Levels => ("H", ["Q", "q"]),
        SecondSpec::FirstDifferences => ("dH", ["dQ", "dq"]),
    };
    let mut base = FeDesign::new(vec![0; n], time, Column::new(y_name, y)).absorb(Absorb::Nothing);
    let mut iv_design = base.clone().endogenous(Column::new(name, x.clone()));
    base = base.exogenous(Column::new(name, x));
    if spec == SecondSpec::Levels {
        base = base.exogenous(Column::new("const", vec![1.0; n]));
        iv_design = iv_design.exogenous(Column::new("const", vec![1.0; n]));
    }
    iv_design = iv_design
        .instrument(Column::new(z_names[0], z1))
        .instrument(Column::new(z_names[1], z2));

    let fe_opts = FeOptions {
        bandwidth: 1,
        full_covariance: false,
    };
    let ls = within_fe_ls(&base, &fe_opts)?;
    let (iv, diagnostics, iv_note) = match within_fe_2sls(&iv_design, &fe_opts) {
        Ok(iv) => match iv_diagnostics(&iv_design, &fe_opts) {
            Ok(d) => (Some(iv), Some(d), None),
            Err(e) => (Some(iv), None, Some(format!("diagnostics unavailable: {e}"))),
        },
        Err(e) => (None, None, Some(format!("IV unavailable: {e}"))),
    };
    let (chosen, note) = match (&iv, &diagnostics) {
        (Some(_), Some(d)) if d.kp_wald_f < opts.weak_iv_floor => (
            Estimator::Ls,
            format!("weak instruments (F = {:.3} < {}), LS used", d.kp_wald_f, opts.weak_iv_floor),
        ),
        (Some(_), Some(d)) => match d.endogeneity.p {
            Some(p) if p < opts.significance => (Estimator::Iv, format!("endogeneity rejected exogeneity (p = {p:.3}), IV used")),
            Some(p) => (Estimator::Ls, format!("exogeneity not rejected (p = {p:.3}), LS used")),
            None => (Estimator::Ls, "endogeneity test unavailable, LS used".to_string()),
        },
        _ => (Estimator::Ls, format!("{}, LS used", iv_note.clone().unwrap_or_default())),
    };
    let est = match chosen {
        Estimator::Iv => iv.as_ref().expect("chosen IV exists"),
        Estimator::Ls => &ls,
    };
    let eta = Transformed {
        estimate: est.coef_of(name).expect("regressor present"),
        se: est.se_of(name).expect("regressor present"),
    };
    let rho = rho_from_eta(eta.estimate, eta.se);
    let phi = match spec {
        SecondSpec::Levels => Some(Transformed {
            estimate: est.coef_of("const").expect("constant present"),
            se: est.se_of("const").expect("constant present"),
        }),
        SecondSpec::FirstDifferences => None,
    };
    let beta = phi.map(|p| beta_from_phi(p.estimate, p.se));
    Ok(SecondStageResult {
        spec,
        nobs: n,
        ls,
        iv,
        diagnostics,
        chosen,
        eta,
        rho,
        phi,
        beta,
        note,
    })
}

/// How the channel-test regression removes nuisance terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChannelMode {
    /// Within transformation by the given entity ids (rows grouped by entity).
    FixedEffects { entity: Vec<usize> },
    /// First differences of both series with an intercept.
    FirstDifferences,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelTest {
    pub slope: f64,
    pub se: f64,
    pub t: f64,
    pub df: usize,
    pub p: f64,
    /// The zero-slope null is rejected: the endogeneity channel is present.
    pub present: bool,
}

/// Two-sided Student-t p-value for a zero slope.
pub fn t_test_p(slope: f64, se: f64, df: usize) -> f64 {
    if se == 0.0 {
        return if slope == 0.0 { 1.0 } else { 0.0 };
    }
    let t = (slope / se).abs();
    if df == 0 {
        return f64::NAN;
    }
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("positive df");
    (2.0 * dist.sf(t)).clamp(0.0, 1.0)
}

/// Simple regression of `dependent` on `regressor` with the classical
/// standard error, and a zero-slope t test at `significance`.
pub fn channel_test(dependent: &[f64], regressor: &[f64], mode: &ChannelMode, significance: f64) -> Result<ChannelTest> {
    if dependent.len() != regressor.len() {
        return Err(Error::InvalidParameter(format!(
            "channel test on {} and {} observations",
            dependent.len(),
            regressor.len()
        )));
    }
    let (y, x, lost) = match mode {
        ChannelMode::FirstDifferences => {
            let (mut y, mut x) = (diff(dependent), diff(regressor));
            let all = [(0, y.len())];
            demean(&mut y, &all);
            demean(&mut x, &all);
            (y, x, 1)
        }
        ChannelMode::FixedEffects { entity } => {
            if entity.len() != dependent.len() {
                return Err(Error::InvalidParameter("channel test entity ids do not match the data".into()));
            }
            let ranges = crate::econometrics::entity_ranges(entity);
            let (mut y, mut x) = (dependent.to_vec(), regressor.to_vec());
            demean(&mut y, &ranges);
            demean(&mut x, &ranges);
            (y, x, ranges.len())
        }
    };
    let n = y.len();
    let df = n.saturating_sub(lost + 1);
    if df == 0 {
        return Err(Error::SeriesTooShort {
            len: dependent.len(),
            required: dependent.len() + 1,
        });
    }
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if !(sxx > 0.0) {
        return Err(Error::RankDeficient(vec!["channel regressor".into()]));
    }
    let slope = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / sxx;
    let ssr: f64 = x.iter().zip(&y).map(|(a, b)| (b - slope * a).powi(2)).sum();
    let scale: f64 = y.iter().map(|v| v * v).sum();
    let ssr = if ssr <= 1e-24 * scale { 0.0 } else { ssr };
    let se = (ssr / df as f64 / sxx).sqrt();
    let p = t_test_p(slope, se, df);
    Ok(ChannelTest {
        slope,
        se,
        t: if se > 0.0 { slope / se } else { f64::INFINITY.copysign(slope) },
        df,
        p,
        present: p < significance,
    })
}

fn demean(v: &mut [f64], ranges: &[(usize, usize)]) {
    for &(a, b) in ranges {
        let m = v[a..b].iter().sum::<f64>() / (b - a) as f64;
        v[a..b].iter_mut().for_each(|x| *x -= m);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn annual(n: usize, rho: f64, beta: f64, noise: f64, seed: u64) -> AnnualSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = (beta / (1.0 - beta)).ln();
        let (mut r, mut q) = (7.0, 0.0);
        let mut out = AnnualSeries {
            years: Vec::new(),
            h: Vec::new(),
            r: Vec::new(),
            q: Vec::new(),
            imports: Vec::new(),
        };
        for k in 0..n {
            r += 0.05 * rng.sample::<f64, _>(StandardNormal);
            q += 0.08 * rng.sample::<f64, _>(StandardNormal);
            out.years.push(1990 + k as i32);
            out.r.push(r);
            out.q.push(q);
            out.h.push(phi + (1.0 - rho) * (r - q) + noise * rng.sample::<f64, _>(StandardNormal));
            out.imports.push(1.0);
        }
        out
    }

    #[test]
    fn noiseless_levels_recover_rho_and_beta() {
        let a = annual(25, 1.3, 0.6, 0.0, 1);
        let res = estimate_second(&a, SecondSpec::Levels, &SecondOptions::default()).unwrap();
        assert!((res.ls.coef_of(REGRESSOR).unwrap() - (1.0 - 1.3)).abs() < 1e-9);
        assert!((res.rho.estimate - 1.3).abs() < 1e-9);
        assert!((res.beta.unwrap().estimate - 0.6).abs() < 1e-9);
        assert_eq!(res.nobs, 25);
    }

    #[test]
    fn differences_have_no_beta() {
        let a = annual(25, 0.5, 0.4, 0.02, 2);
        let res = estimate_second(&a, SecondSpec::FirstDifferences, &SecondOptions::default()).unwrap();
        assert_eq!(res.nobs, 24);
        assert!(res.beta.is_none() && res.phi.is_none());
        assert_eq!(res.rho.se, res.eta.se);
        assert!(res.iv.is_some());
        let d = res.diagnostics.unwrap();
        assert_eq!(d.hansen_j.df, 1);
    }

    #[test]
    fn too_few_years() {
        let a = annual(10, 0.5, 0.4, 0.02, 3);
        assert!(estimate_second(&a, SecondSpec::Levels, &SecondOptions::default()).is_ok());
        assert!(matches!(
            estimate_second(&a, SecondSpec::FirstDifferences, &SecondOptions::default()),
            Err(Error::SeriesTooShort { len: 9, required: 10 })
        ));
    }

    #[test]
    fn table_p_values() {
        assert_eq!(format!("{:.3}", t_test_p(1.012, 0.527, 22)), "0.068");
        let p = t_test_p(0.456, 0.450, 200);
        assert!((p - 0.311).abs() < 0.01, "{p}");
        assert!(p > 0.05);
    }

    #[test]
    fn identical_series_channel_present() {
        let x: Vec<f64> = (0..20).map(|k| ((k * 7) % 11) as f64).collect();
        let t = channel_test(&x, &x, &ChannelMode::FirstDifferences, 0.05).unwrap();
        assert!((t.slope - 1.0).abs() < 1e-12);
        assert_eq!(t.p, 0.0);
        assert!(t.present);
        assert_eq!(t.df, 17);
    }

    #[test]
    fn fe_channel_matches_dummy_regression() {
        // y = a_i + 0.5 x + e; within slope equals the dummy-variable slope
        let entity = vec![0, 0, 0, 0, 1, 1, 1, 1, 1];
        let x = [1.0, 2.0, 4.0, 3.0, 0.0, 5.0, 2.0, 1.0, 6.0];
        let e = [0.1, -0.2, 0.05, 0.0, 0.3, -0.1, 0.0, -0.15, 0.1];
        let y: Vec<f64> = (0..9).map(|r| [1.0, -2.0][entity[r]] + 0.5 * x[r] + e[r]).collect();
        let t = channel_test(&y, &x, &ChannelMode::FixedEffects { entity: entity.clone() }, 0.05).unwrap();
        let design = FeDesign::new(entity, (0..9).map(|k| k as i64).collect(), Column::new("y", y))
            .exogenous(Column::new("x", x.to_vec()));
        let est = within_fe_ls(&design, &FeOptions::default()).unwrap();
        assert!((t.slope - est.coef[0]).abs() < 1e-12);
        assert_eq!(t.df, 6);
    }
}
