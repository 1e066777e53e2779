//! Small dense complex least-squares helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative singular-value cutoff below which columns count as dependent.
const RANK_TOL: f64 = 1e-10;

/// Solves `min ||y - sum_j c_j * columns[j]||_2` for the coefficients `c`.
pub fn least_squares(columns: &[Vec<Complex64>], y: &[Complex64]) -> Result<Vec<Complex64>> {
    let cols = columns.len();
    if cols == 0 {
        return Ok(Vec::new());
    }
    let rows = y.len();
    if columns.iter().any(|c| c.len() != rows) {
        return Err(Error::invalid("column length differs from data length"));
    }
    if rows < cols {
        return Err(Error::RankDeficient { rank: rows, cols });
    }
    let a = DMatrix::from_fn(rows, cols, |i, j| columns[j][i]);
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > smax * RANK_TOL)
        .count();
    if smax == 0.0 || rank < cols {
        return Err(Error::RankDeficient { rank, cols });
    }
    let x = svd
        .solve(&b, smax * RANK_TOL)
        .map_err(|e| Error::invalid(e.to_string()))?;
    Ok(x.iter().copied().collect())
}

#[inline]
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_combination() {
        let a: Vec<Complex64> = (0..6).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let b: Vec<Complex64> = (0..6).map(|i| Complex64::new(1.0, (i * i) as f64)).collect();
        let g = [Complex64::new(0.5, -2.0), Complex64::new(-1.5, 0.25)];
        let y: Vec<Complex64> = a.iter().zip(&b).map(|(x, z)| g[0] * x + g[1] * z).collect();
        let c = least_squares(&[a, b], &y).unwrap();
        assert!((c[0] - g[0]).norm() < 1e-12 && (c[1] - g[1]).norm() < 1e-12);
    }

    #[test]
    fn dependent_columns_rejected() {
        let a: Vec<Complex64> = (0..5).map(|i| Complex64::new(i as f64, 2.0)).collect();
        let b: Vec<Complex64> = a.iter().map(|v| v * 3.0).collect();
        let y = a.clone();
        assert!(matches!(
            least_squares(&[a, b], &y),
            Err(Error::RankDeficient { rank: 1, cols: 2 })
        ));
    }
}
