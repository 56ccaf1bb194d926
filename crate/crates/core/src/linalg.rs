use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a column counts as collinear with
/// the columns before it.
const PIVOT_TOLERANCE: f64 = 1e-10;

/// Cholesky factor of a symmetric positive definite cross-product matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    /// Factor `gram`, reporting every column whose Cholesky pivot collapses.
    /// `name` maps a column index to a label for the error message.
    pub fn new(gram: DMatrix<f64>, name: impl Fn(usize) -> String) -> Result<Self> {
        let collinear = collinear_columns(&gram);
        if !collinear.is_empty() {
            return Err(Error::RankDeficient(
                collinear.into_iter().map(name).collect(),
            ));
        }
        let chol = Cholesky::new(gram)
            .ok_or_else(|| Error::RankDeficient(vec!["(numerically indefinite)".into()]))?;
        Ok(Self { chol })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }
}

/// Greedy pivot scan: column j is flagged when its squared distance from the
/// span of the accepted earlier columns is negligible relative to its norm.
pub fn collinear_columns(gram: &DMatrix<f64>) -> Vec<usize> {
    let k = gram.nrows();
    let mut l = DMatrix::<f64>::zeros(k, k);
    let mut accepted: Vec<usize> = Vec::with_capacity(k);
    let mut flagged = Vec::new();
    for j in 0..k {
        let ajj = gram[(j, j)];
        let mut d = ajj;
        for &p in &accepted {
            d -= l[(j, p)] * l[(j, p)];
        }
        if !(ajj > 0.0) || d <= PIVOT_TOLERANCE * ajj {
            flagged.push(j);
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..k {
            let mut s = gram[(i, j)];
            for &p in &accepted {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / djj;
        }
        accepted.push(j);
    }
    flagged
}

/// Symmetrize and clamp negative eigenvalues to zero. Returns the repaired
/// matrix and whether any eigenvalue had to be floored.
pub fn floor_eigenvalues(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let sym = (m + m.transpose()) * 0.5;
    if Cholesky::new(sym.clone()).is_some() {
        return (sym, false);
    }
    let eig = SymmetricEigen::new(sym.clone());
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    // Eigenvalues within rounding of zero are left alone.
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    if eig.eigenvalues.iter().all(|&v| v >= -tol) {
        return (sym, false);
    }
    let floored = eig.eigenvalues.map(|v| v.max(0.0));
    let repaired = &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
    ((&repaired + repaired.transpose()) * 0.5, true)
}
