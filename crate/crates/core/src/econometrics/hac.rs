use nalgebra::DMatrix;

use super::entity_ranges;
use crate::error::{Error, Result};
use crate::linalg::floor_eigenvalues;

/// Bartlett weight `1 - lag / bandwidth`, zero from `bandwidth` on.
pub fn bartlett_weight(lag: i64, bandwidth: usize) -> f64 {
    let bw = bandwidth as f64;
    let lag = lag.unsigned_abs() as f64;
    if lag >= bw {
        0.0
    } else {
        1.0 - lag / bw
    }
}

/// Kernel-weighted sum of score outer products, `sum_i G_i' W_i G_i`.
///
/// Rows of `scores` are grouped by `entity` with `time` increasing inside each
/// group. Lags are measured in time units, so gaps in an entity's series
/// reduce the weight between the rows around them, and no terms are formed
/// across entities. A bandwidth of 1 gives the heteroskedasticity-robust sum.
pub fn hac_vcov(scores: &DMatrix<f64>, entity: &[usize], time: &[i64], bandwidth: usize) -> Result<DMatrix<f64>> {
    let n = scores.nrows();
    if entity.len() != n || time.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{n} score rows but {} entity and {} time labels",
            entity.len(),
            time.len()
        )));
    }
    if bandwidth == 0 {
        return Err(Error::InvalidParameter("HAC bandwidth must be at least 1".into()));
    }
    let ranges = entity_ranges(entity);
    let longest = ranges
        .iter()
        .map(|(a, b)| (time[b - 1] - time[*a] + 1) as usize)
        .max()
        .unwrap_or(1);
    let bw = if bandwidth > longest {
        log::warn!("HAC bandwidth {bandwidth} exceeds the longest entity series ({longest}); truncated");
        longest
    } else {
        bandwidth
    };

    let mut weighted = scores.clone();
    if bw > 1 {
        for (a, b) in ranges {
            for r in a..b {
                for s in r + 1..b {
                    let w = bartlett_weight(time[s] - time[r], bw);
                    if w == 0.0 {
                        break;
                    }
                    for c in 0..scores.ncols() {
                        weighted[(r, c)] += w * scores[(s, c)];
                        weighted[(s, c)] += w * scores[(r, c)];
                    }
                }
            }
        }
    }
    let meat = scores.transpose() * weighted;
    let (meat, repaired) = floor_eigenvalues(&meat);
    if repaired {
        log::warn!("HAC covariance was not positive semidefinite; negative eigenvalues floored at 0");
    }
    Ok(meat)
}
