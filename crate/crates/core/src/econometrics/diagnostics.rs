use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::fe::{hcat, scale_rows, FeOptions, Prepared};
use super::FeDesign;
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;

/// A test statistic with its chi-squared p-value; `p` is `None` when the
/// test has no degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestStat {
    pub stat: f64,
    pub df: usize,
    pub p: Option<f64>,
}

impl TestStat {
    fn chi2(stat: f64, df: usize) -> Self {
        let stat = stat.max(0.0);
        let p = if df == 0 {
            None
        } else {
            let dist = ChiSquared::new(df as f64).expect("positive df");
            Some(dist.sf(stat).clamp(0.0, 1.0))
        };
        Self { stat, df, p }
    }
}

/// Instrument diagnostics for a model with one endogenous regressor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvDiagnostics {
    /// Underidentification: robust rank LM test, `chi2(L1)`.
    pub kp_lm: TestStat,
    /// Weak identification: robust rank Wald statistic over `L1`.
    pub kp_wald_f: f64,
    /// Overidentifying restrictions at the two-step efficient GMM estimate.
    pub hansen_j: TestStat,
    /// Difference-in-J test of treating the regressor as exogenous.
    pub endogeneity: TestStat,
    pub nobs: usize,
}

/// Run all four diagnostics. With one endogenous regressor the rank tests
/// reduce to robust score and Wald tests that the excluded instruments have
/// no coefficient in the first stage, after partialling out the exogenous
/// regressors and fixed effects.
pub fn iv_diagnostics(design: &FeDesign, opts: &FeOptions) -> Result<IvDiagnostics> {
    let prep = Prepared::new(design)?;
    if prep.k_endog != 1 {
        return Err(Error::InvalidInstruments(format!(
            "diagnostics need exactly one endogenous regressor, got {}",
            prep.k_endog
        )));
    }
    let l1 = prep.l_excl;
    if l1 == 0 {
        return Err(Error::InvalidInstruments("no excluded instruments".into()));
    }
    let bw = opts.bandwidth;
    let (kp_lm, kp_wald_f) = rank_tests(&prep, bw)?;

    let y = prep.y();
    let x = prep.x();
    let z = prep.instruments();
    // Hansen J with the weight matrix from 2SLS residuals
    let beta_2sls = gmm(&x, &z, &y, &identity_weight(&z)?)?;
    let e = &y - &x * &beta_2sls;
    let over = z.ncols() - x.ncols();
    let hansen_j = if over == 0 {
        TestStat { stat: 0.0, df: 0, p: None }
    } else {
        let s = invert(prep.hac(&scale_rows(&z, &e), bw)?, "instrument moments")?;
        let beta = gmm(&x, &z, &y, &s)?;
        TestStat::chi2(j_stat(&x, &z, &y, &beta, &s), over)
    };

    // C statistic: the restricted model adds the regressor to the instrument
    // set; both J statistics use the restricted model's moment covariance.
    let endog = prep.endog();
    let zr = hcat(&z, &endog);
    let beta_ls = gmm(&x, &zr, &y, &identity_weight(&zr)?)?;
    let e_ls = &y - &x * &beta_ls;
    let s_full = prep.hac(&scale_rows(&zr, &e_ls), bw)?;
    let l = z.ncols();
    let s_sub = s_full.view((0, 0), (l, l)).into_owned();
    let wr = invert(s_full, "restricted moments")?;
    let wu = invert(s_sub, "unrestricted moments")?;
    let jr = j_stat(&x, &zr, &y, &gmm(&x, &zr, &y, &wr)?, &wr);
    let ju = j_stat(&x, &z, &y, &gmm(&x, &z, &y, &wu)?, &wu);
    let endogeneity = TestStat::chi2(jr - ju, 1);

    Ok(IvDiagnostics {
        kp_lm,
        kp_wald_f,
        hansen_j,
        endogeneity,
        nobs: prep.n(),
    })
}

fn rank_tests(prep: &Prepared, bw: usize) -> Result<(TestStat, f64)> {
    let mut x = prep.endog().column(0).into_owned();
    let mut zx = prep.excluded();
    let w = prep.exog();
    if w.ncols() > 0 {
        let names = prep.x_names();
        let ww = SpdFactor::new(w.tr_mul(&w), |j| names[1 + j].clone())?;
        x -= &w * ww.solve(&w.tr_mul(&x));
        zx -= &w * ww.solve_mat(&w.tr_mul(&zx));
    }
    let l1 = zx.ncols();
    let zz = SpdFactor::new(zx.tr_mul(&zx), |j| format!("instrument {j}"))
        .map_err(|_| Error::InvalidInstruments("excluded instruments are collinear".into()))?;
    let zty = zx.tr_mul(&x);
    let pi = zz.solve(&zty);
    let v = &x - &zx * &pi;

    let s0 = invert(prep.hac(&scale_rows(&zx, &x), bw)?, "first-stage score")?;
    let lm = (zty.transpose() * &s0 * &zty)[(0, 0)];
    let sv = invert(prep.hac(&scale_rows(&zx, &v), bw)?, "first-stage residual")?;
    let wald = (zty.transpose() * &sv * &zty)[(0, 0)];
    Ok((TestStat::chi2(lm, l1), wald.max(0.0) / l1 as f64))
}

fn identity_weight(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    invert(z.tr_mul(z), "instrument cross-products")
}

fn invert(m: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let what = what.to_string();
    SpdFactor::new(m, |_| what.clone())
        .map(|f| f.inverse())
        .map_err(|_| Error::InvalidInstruments(format!("{what} covariance is singular")))
}

/// Linear GMM with weight `w`: `(X'Z W Z'X)^-1 X'Z W Z'y`.
fn gmm(x: &DMatrix<f64>, z: &DMatrix<f64>, y: &DVector<f64>, w: &DMatrix<f64>) -> Result<DVector<f64>> {
    let zx = z.tr_mul(x);
    let a = zx.transpose() * w * &zx;
    let b = zx.transpose() * w * z.tr_mul(y);
    let f = SpdFactor::new(a, |j| format!("regressor {j}"))
        .map_err(|_| Error::InvalidInstruments("instruments do not identify the regressors".into()))?;
    Ok(f.solve(&b))
}

fn j_stat(x: &DMatrix<f64>, z: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, w: &DMatrix<f64>) -> f64 {
    let g = z.tr_mul(&(y - x * beta));
    (g.transpose() * w * &g)[(0, 0)]
}
