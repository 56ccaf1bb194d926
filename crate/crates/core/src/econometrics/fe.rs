use std::fmt;

use nalgebra::{DMatrix, DVector};

use super::hac::hac_vcov;
use super::{entity_ranges, Absorb, FeDesign};
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Ls,
    Iv,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Ls => "LS",
            Estimator::Iv => "IV",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeOptions {
    pub bandwidth: usize,
    /// Also compute the joint covariance of the slopes and time effects.
    pub full_covariance: bool,
}

impl Default for FeOptions {
    fn default() -> Self {
        Self {
            bandwidth: 5,
            full_covariance: true,
        }
    }
}

/// Time-dummy coefficients `mu_t - mu_J`, with the last time `J` as base.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeEffects {
    /// Every time index present, ascending; the last is the base.
    pub times: Vec<i64>,
    /// One per entry of `times`; the base entry is exactly 0.
    pub delta: Vec<f64>,
    /// Joint covariance of `(slopes, delta[..J-1])` when requested.
    pub joint_vcov: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeEstimate {
    pub estimator: Estimator,
    /// Slope names: endogenous regressors first, then exogenous.
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub vcov: DMatrix<f64>,
    /// Grand-mean intercept under entity effects (`mu_J` plus the average
    /// entity effect).
    pub intercept: Option<f64>,
    pub time_effects: Option<TimeEffects>,
    pub residuals: Vec<f64>,
    pub nobs: usize,
    pub n_entities: usize,
    pub bandwidth: usize,
}

impl FeEstimate {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coef_of(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.coef[i])
    }

    pub fn se_of(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.vcov[(i, i)].sqrt())
    }

    pub fn se(&self) -> Vec<f64> {
        (0..self.coef.len()).map(|i| self.vcov[(i, i)].sqrt()).collect()
    }
}

/// Time-dummy structure of the entity-demeaned design.
pub(super) struct TimeBlock {
    /// Distinct times, ascending; the last is the base.
    pub times: Vec<i64>,
    /// Index into `times` for every row.
    pub level: Vec<usize>,
    pub factor: SpdFactor,
    /// `D'v` solved through the dummy Gram matrix, one column per data column.
    pub deltas: DMatrix<f64>,
    /// `D'v` for each data column (sums by time, base excluded).
    pub sums: DMatrix<f64>,
}

impl TimeBlock {
    fn n_dummies(&self) -> usize {
        self.times.len() - 1
    }
}

/// Design matrices after removing entity effects (`raw`) and, when time
/// effects are on, after also partialling out the time dummies (`tilde`).
/// Columns are `[y, endogenous.., exogenous.., instruments..]`.
pub(super) struct Prepared {
    pub ranges: Vec<(usize, usize)>,
    pub entity: Vec<usize>,
    pub time: Vec<i64>,
    pub tilde: DMatrix<f64>,
    pub means: DVector<f64>,
    pub names: Vec<String>,
    pub k_endog: usize,
    pub k_exog: usize,
    pub l_excl: usize,
    pub absorb: Absorb,
    pub time_block: Option<TimeBlock>,
}

impl Prepared {
    pub fn new(d: &FeDesign) -> Result<Self> {
        d.validate()?;
        let n = d.len();
        let cols: Vec<&super::Column> = std::iter::once(&d.y)
            .chain(&d.endogenous)
            .chain(&d.exogenous)
            .chain(&d.instruments)
            .collect();
        let m = cols.len();
        let names = cols.iter().map(|c| c.name.clone()).collect();
        let raw = DMatrix::from_fn(n, m, |r, c| cols[c].values[r]);
        let means = DVector::from_fn(m, |c, _| raw.column(c).mean());
        let ranges = entity_ranges(&d.entity);

        let mut demeaned = raw;
        if d.absorb == Absorb::Entity {
            for &(a, b) in &ranges {
                for c in 0..m {
                    let mut block = demeaned.view_mut((a, c), (b - a, 1));
                    let mean = block.mean();
                    block.add_scalar_mut(-mean);
                }
            }
        }

        let time_block = if d.time_effects {
            Some(time_block(d, &ranges, &demeaned)?)
        } else {
            None
        };
        let mut tilde = demeaned.clone();
        if let Some(tb) = &time_block {
            let mut row_delta = DMatrix::<f64>::zeros(n, m);
            for r in 0..n {
                if tb.level[r] < tb.n_dummies() {
                    row_delta.set_row(r, &tb.deltas.row(tb.level[r]));
                }
            }
            for &(a, b) in &ranges {
                for c in 0..m {
                    let mut block = row_delta.view_mut((a, c), (b - a, 1));
                    let mean = block.mean();
                    block.add_scalar_mut(-mean);
                }
            }
            tilde -= row_delta;
        }

        Ok(Self {
            ranges,
            entity: d.entity.clone(),
            time: d.time.clone(),
            tilde,
            means,
            names,
            k_endog: d.endogenous.len(),
            k_exog: d.exogenous.len(),
            l_excl: d.instruments.len(),
            absorb: d.absorb,
            time_block,
        })
    }

    pub fn n(&self) -> usize {
        self.tilde.nrows()
    }

    pub fn k(&self) -> usize {
        self.k_endog + self.k_exog
    }

    pub fn y(&self) -> DVector<f64> {
        self.tilde.column(0).into_owned()
    }

    /// Regressors `[endogenous, exogenous]`.
    pub fn x(&self) -> DMatrix<f64> {
        self.tilde.columns(1, self.k()).into_owned()
    }

    pub fn endog(&self) -> DMatrix<f64> {
        self.tilde.columns(1, self.k_endog).into_owned()
    }

    pub fn exog(&self) -> DMatrix<f64> {
        self.tilde.columns(1 + self.k_endog, self.k_exog).into_owned()
    }

    pub fn excluded(&self) -> DMatrix<f64> {
        self.tilde.columns(1 + self.k(), self.l_excl).into_owned()
    }

    /// Full instrument set `[excluded, exogenous]`.
    pub fn instruments(&self) -> DMatrix<f64> {
        hcat(&self.excluded(), &self.exog())
    }

    pub fn x_names(&self) -> Vec<String> {
        self.names[1..=self.k()].to_vec()
    }

    pub fn z_names(&self) -> Vec<String> {
        let mut out = self.names[1 + self.k()..].to_vec();
        out.extend_from_slice(&self.names[1 + self.k_endog..=self.k()]);
        out
    }

    pub fn hac(&self, scores: &DMatrix<f64>, bandwidth: usize) -> Result<DMatrix<f64>> {
        hac_vcov(scores, &self.entity, &self.time, bandwidth)
    }
}

pub(super) fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Scale each row of `m` by `e`.
pub(super) fn scale_rows(m: &DMatrix<f64>, e: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (r, v) in e.iter().enumerate() {
        out.row_mut(r).scale_mut(*v);
    }
    out
}

fn time_block(d: &FeDesign, ranges: &[(usize, usize)], demeaned: &DMatrix<f64>) -> Result<TimeBlock> {
    let mut times: Vec<i64> = d.time.clone();
    times.sort_unstable();
    times.dedup();
    let level: Vec<usize> = d
        .time
        .iter()
        .map(|t| times.binary_search(t).expect("time present"))
        .collect();
    let j1 = times.len() - 1;

    // D~'D~ = diag(n_l) - sum_i c_i c_i' / T_i over entity-demeaned dummies
    let mut gram = DMatrix::<f64>::zeros(j1, j1);
    for &l in &level {
        if l < j1 {
            gram[(l, l)] += 1.0;
        }
    }
    for &(a, b) in ranges {
        let inv = 1.0 / (b - a) as f64;
        let present: Vec<usize> = level[a..b].iter().copied().filter(|l| *l < j1).collect();
        for &p in &present {
            for &q in &present {
                gram[(p, q)] -= inv;
            }
        }
    }
    let labels = d.time_labels;
    let factor = SpdFactor::new(gram, |j| format!("D[{}]", labels.label(times[j])))?;

    // D~'v = D'v for entity-demeaned v
    let mut sums = DMatrix::<f64>::zeros(j1, demeaned.ncols());
    for (r, &l) in level.iter().enumerate() {
        if l < j1 {
            let row = demeaned.row(r);
            let mut target = sums.row_mut(l);
            target += row;
        }
    }
    let deltas = factor.solve_mat(&sums);
    Ok(TimeBlock {
        times,
        level,
        factor,
        deltas,
        sums,
    })
}

/// Within-transformed least squares with optional time effects.
/// Endogenous columns are treated as ordinary regressors.
pub fn within_fe_ls(design: &FeDesign, opts: &FeOptions) -> Result<FeEstimate> {
    let prep = Prepared::new(design)?;
    let x = prep.x();
    let names = prep.x_names();
    let xx = SpdFactor::new(x.tr_mul(&x), |j| names[j].clone())?;
    fit(&prep, Estimator::Ls, x, xx, opts)
}

/// Within-transformed 2SLS. Exogenous regressors instrument themselves.
pub fn within_fe_2sls(design: &FeDesign, opts: &FeOptions) -> Result<FeEstimate> {
    let prep = Prepared::new(design)?;
    if prep.k_endog == 0 {
        return Err(Error::InvalidInstruments("no endogenous regressor".into()));
    }
    if prep.l_excl < prep.k_endog {
        return Err(Error::InvalidInstruments(format!(
            "{} excluded instruments for {} endogenous regressors",
            prep.l_excl, prep.k_endog
        )));
    }
    let x = prep.x();
    let xhat = project(&prep, &x)?;
    let names = prep.x_names();
    let xx = SpdFactor::new(xhat.tr_mul(&xhat), |j| names[j].clone()).map_err(|e| match e {
        Error::RankDeficient(cols) => Error::InvalidInstruments(format!(
            "instruments do not identify {}",
            cols.join(", ")
        )),
        other => other,
    })?;
    fit(&prep, Estimator::Iv, xhat, xx, opts)
}

/// Fitted values of `x` from the full instrument set.
pub(super) fn project(prep: &Prepared, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let z = prep.instruments();
    let znames = prep.z_names();
    let zz = SpdFactor::new(z.tr_mul(&z), |j| znames[j].clone()).map_err(|e| match e {
        Error::RankDeficient(cols) => Error::InvalidInstruments(format!("collinear instruments: {}", cols.join(", "))),
        other => other,
    })?;
    Ok(&z * zz.solve_mat(&z.tr_mul(x)))
}

/// Shared LS/2SLS tail: `xhat` is `x` itself for LS and its projection on
/// the instruments for 2SLS, and `xx` factors `xhat'xhat`.
fn fit(prep: &Prepared, estimator: Estimator, xhat: DMatrix<f64>, xx: SpdFactor, opts: &FeOptions) -> Result<FeEstimate> {
    let y = prep.y();
    let x = prep.x();
    let k = prep.k();
    let beta = xx.solve(&xhat.tr_mul(&y));
    let resid = &y - &x * &beta;
    let bread = xx.inverse();
    // per-row influence columns l_r = (xhat'xhat)^-1 xhat_r
    let influence = &xhat * &bread;
    let meat = prep.hac(&scale_rows(&xhat, &resid), opts.bandwidth)?;
    let vcov = &bread * meat * &bread;

    let (intercept, time_effects) = match &prep.time_block {
        Some(tb) => {
            let j1 = tb.n_dummies();
            // delta = delta_y - sum_k beta_k delta_xk
            let mut delta = tb.deltas.column(0).into_owned();
            for c in 0..k {
                delta -= tb.deltas.column(1 + c) * beta[c];
            }
            let joint = if opts.full_covariance {
                Some(joint_vcov(prep, tb, &influence, &resid, opts.bandwidth)?)
            } else {
                None
            };
            let n = prep.n() as f64;
            let mut counts = vec![0.0; j1];
            for &l in &tb.level {
                if l < j1 {
                    counts[l] += 1.0;
                }
            }
            let dummy_mean: f64 = counts.iter().zip(delta.iter()).map(|(c, d)| c / n * d).sum();
            let x_mean: f64 = (0..k).map(|c| prep.means[1 + c] * beta[c]).sum();
            let mut all = delta.iter().copied().collect::<Vec<_>>();
            all.push(0.0);
            (
                Some(prep.means[0] - x_mean - dummy_mean),
                Some(TimeEffects {
                    times: tb.times.clone(),
                    delta: all,
                    joint_vcov: joint,
                }),
            )
        }
        None if prep.absorb == Absorb::Entity => {
            let x_mean: f64 = (0..k).map(|c| prep.means[1 + c] * beta[c]).sum();
            (Some(prep.means[0] - x_mean), None)
        }
        None => (None, None),
    };

    Ok(FeEstimate {
        estimator,
        names: prep.x_names(),
        coef: beta.iter().copied().collect(),
        vcov,
        intercept,
        time_effects,
        residuals: resid.iter().copied().collect(),
        nobs: prep.n(),
        n_entities: prep.ranges.len(),
        bandwidth: opts.bandwidth,
    })
}

/// Joint HAC covariance of `(slopes, time effects)` from the per-row
/// influence of each observation on both blocks.
fn joint_vcov(
    prep: &Prepared,
    tb: &TimeBlock,
    influence: &DMatrix<f64>,
    resid: &DVector<f64>,
    bandwidth: usize,
) -> Result<DMatrix<f64>> {
    let n = prep.n();
    let k = prep.k();
    let j1 = tb.n_dummies();
    let u = tb.factor.inverse();
    // D~'X for the entity-demeaned regressors
    let m = tb.sums.columns(1, k).into_owned();
    let um = &u * &m;
    let mut scores = DMatrix::<f64>::zeros(n, k + j1);
    for &(a, b) in &prep.ranges {
        let inv = 1.0 / (b - a) as f64;
        let mut uc = DVector::<f64>::zeros(j1);
        for r in a..b {
            if tb.level[r] < j1 {
                uc += u.column(tb.level[r]);
            }
        }
        uc *= inv;
        for r in a..b {
            let l = influence.row(r).transpose();
            let mut g = -&uc - &um * &l;
            if tb.level[r] < j1 {
                g += u.column(tb.level[r]);
            }
            let e = resid[r];
            for c in 0..k {
                scores[(r, c)] = l[c] * e;
            }
            for c in 0..j1 {
                scores[(r, k + c)] = g[c] * e;
            }
        }
    }
    prep.hac(&scores, bandwidth)
}
