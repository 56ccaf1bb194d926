//! Fixed-effects panel LS and 2SLS with time effects, HAC covariance,
//! instrument diagnostics, delta-method transforms and retrieval of the
//! first-stage aggregates.

mod aggregates;
mod diagnostics;
mod fe;
mod first_stage;
mod hac;

pub use aggregates::{
    beta_from_phi, delta_sigma, recover_aggregates, rho_from_eta, sigma_from_gamma, AggregatePoint, AggregateSeries,
    Transformed,
};
pub use diagnostics::{iv_diagnostics, IvDiagnostics, TestStat};
pub use fe::{within_fe_2sls, within_fe_ls, Estimator, FeEstimate, FeOptions, TimeEffects};
pub use first_stage::{cumulated_fx, first_stage_designs, Cumulation, FirstStageDesigns, InstrumentKind};
pub use hac::{bartlett_weight, hac_vcov};

use crate::error::{Error, Result};
use crate::period::Period;

/// A named regressor or instrument column.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

impl Column {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

/// Which entity effects are removed before estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Absorb {
    /// Within transformation by entity.
    Entity,
    /// No transformation; add a constant column explicitly if needed.
    Nothing,
}

/// How time indices are rendered in coefficient names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeLabels {
    Index,
    /// Times are month ordinals (see [`Period::ordinal`]).
    Month,
}

impl TimeLabels {
    pub fn label(self, time: i64) -> String {
        match self {
            TimeLabels::Index => time.to_string(),
            TimeLabels::Month => Period::from_ordinal(time).to_string(),
        }
    }
}

/// Regression data in long format, rows grouped by entity and ordered by
/// time within each entity.
#[derive(Debug, Clone, PartialEq)]
pub struct FeDesign {
    pub entity: Vec<usize>,
    pub time: Vec<i64>,
    pub y: Column,
    pub endogenous: Vec<Column>,
    pub exogenous: Vec<Column>,
    /// Excluded instruments.
    pub instruments: Vec<Column>,
    pub absorb: Absorb,
    /// Add a dummy for every time index except the last one present.
    pub time_effects: bool,
    pub time_labels: TimeLabels,
}

impl FeDesign {
    pub fn new(entity: Vec<usize>, time: Vec<i64>, y: Column) -> Self {
        Self {
            entity,
            time,
            y,
            endogenous: Vec::new(),
            exogenous: Vec::new(),
            instruments: Vec::new(),
            absorb: Absorb::Entity,
            time_effects: false,
            time_labels: TimeLabels::Index,
        }
    }

    pub fn endogenous(mut self, col: Column) -> Self {
        self.endogenous.push(col);
        self
    }

    pub fn exogenous(mut self, col: Column) -> Self {
        self.exogenous.push(col);
        self
    }

    pub fn instrument(mut self, col: Column) -> Self {
        self.instruments.push(col);
        self
    }

    pub fn absorb(mut self, absorb: Absorb) -> Self {
        self.absorb = absorb;
        self
    }

    pub fn time_effects(mut self, on: bool) -> Self {
        self.time_effects = on;
        self
    }

    pub fn time_labels(mut self, labels: TimeLabels) -> Self {
        self.time_labels = labels;
        self
    }

    pub fn len(&self) -> usize {
        self.y.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.values.is_empty()
    }

    pub fn n_entities(&self) -> usize {
        entity_ranges(&self.entity).len()
    }

    /// Keep only the rows where `keep` is true.
    pub fn select_rows(&self, keep: &[bool]) -> Self {
        let pick_f = |v: &[f64]| v.iter().zip(keep).filter(|(_, k)| **k).map(|(x, _)| *x).collect();
        let pick_cols = |cols: &[Column]| {
            cols.iter()
                .map(|c| Column::new(c.name.clone(), pick_f(&c.values)))
                .collect()
        };
        Self {
            entity: self.entity.iter().zip(keep).filter(|(_, k)| **k).map(|(e, _)| *e).collect(),
            time: self.time.iter().zip(keep).filter(|(_, k)| **k).map(|(t, _)| *t).collect(),
            y: Column::new(self.y.name.clone(), pick_f(&self.y.values)),
            endogenous: pick_cols(&self.endogenous),
            exogenous: pick_cols(&self.exogenous),
            instruments: pick_cols(&self.instruments),
            absorb: self.absorb,
            time_effects: self.time_effects,
            time_labels: self.time_labels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::EmptyPanel("design has no rows".into()));
        }
        if self.entity.len() != n || self.time.len() != n {
            return Err(Error::InvalidParameter(format!(
                "design has {n} responses but {} entity and {} time labels",
                self.entity.len(),
                self.time.len()
            )));
        }
        let all = std::iter::once(&self.y)
            .chain(&self.endogenous)
            .chain(&self.exogenous)
            .chain(&self.instruments);
        for col in all {
            if col.values.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "column {} has {} rows, expected {n}",
                    col.name,
                    col.values.len()
                )));
            }
            if let Some(i) = col.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("column {} row {i} is not finite", col.name)));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (k, pair) in self.entity.windows(2).enumerate() {
            if pair[0] != pair[1] {
                if !seen.insert(pair[0]) {
                    return Err(Error::InvalidParameter(format!("entity {} rows are not contiguous", pair[0])));
                }
            } else if self.time[k + 1] <= self.time[k] {
                return Err(Error::InvalidParameter(format!(
                    "entity {} times are not strictly increasing at row {}",
                    pair[0],
                    k + 1
                )));
            }
        }
        if seen.contains(self.entity.last().expect("non-empty")) {
            return Err(Error::InvalidParameter("entity rows are not contiguous".into()));
        }
        if self.time_effects && self.absorb != Absorb::Entity {
            return Err(Error::InvalidParameter("time effects require entity effects".into()));
        }
        if self.endogenous.is_empty() && self.exogenous.is_empty() {
            return Err(Error::InvalidParameter("design has no regressors".into()));
        }
        Ok(())
    }
}

/// Contiguous `[start, end)` row ranges of each entity.
pub(crate) fn entity_ranges(entity: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for r in 1..=entity.len() {
        if r == entity.len() || entity[r] != entity[start] {
            out.push((start, r));
            start = r;
        }
    }
    out
}
