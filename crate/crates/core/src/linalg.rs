//! Weighted least squares and sandwich covariance estimators.
//!
//! Fits go through a Householder QR of the row-weighted, column-equilibrated
//! design, so polynomial bases in raw rank units stay well conditioned.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("design matrix is rank deficient (column {column})")]
    RankDeficient { column: usize },
    #[error("need at least {needed} positive-weight rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::Shape("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn scale(&mut self, factor: T) {
        for v in &mut self.data {
            *v = *v * factor;
        }
    }
}

/// Result of a weighted least-squares fit.
#[derive(Debug, Clone)]
pub struct WlsFit<T> {
    pub coefficients: Vec<T>,
    /// `(X'WX)^{-1}`.
    pub bread: Matrix<T>,
    /// `y - X b` for every row, including zero-weight rows.
    pub residuals: Vec<T>,
    /// Rows with positive weight.
    pub n_used: usize,
}

impl<T: Scalar> WlsFit<T> {
    /// Observation weights `a` with `coefficients[k] == sum_i a_i y_i`.
    pub fn influence_weights(&self, x: &Matrix<T>, w: &[T], k: usize) -> Vec<T> {
        (0..x.nrows())
            .map(|i| {
                if w[i] <= T::zero() {
                    return T::zero();
                }
                let xb: T = x
                    .row(i)
                    .iter()
                    .enumerate()
                    .map(|(j, &xij)| xij * self.bread.get(j, k))
                    .sum();
                w[i] * xb
            })
            .collect()
    }
}

/// Weighted least squares of `y` on the columns of `x`; rows with
/// non-positive weight are ignored for estimation.
pub fn wls<T: Scalar>(x: &Matrix<T>, y: &[T], w: &[T]) -> Result<WlsFit<T>, LinalgError> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n || w.len() != n {
        return Err(LinalgError::Shape(format!(
            "x has {n} rows, y {} and w {}",
            y.len(),
            w.len()
        )));
    }
    let used: Vec<usize> = (0..n).filter(|&i| w[i] > T::zero()).collect();
    let m = used.len();
    if m < p {
        return Err(LinalgError::TooFewRows { needed: p, found: m });
    }

    // Column-major copy of sqrt(w) * X, then equilibrate columns.
    let mut a: Vec<Vec<T>> = (0..p)
        .map(|j| used.iter().map(|&i| w[i].sqrt() * x.get(i, j)).collect())
        .collect();
    let mut b: Vec<T> = used.iter().map(|&i| w[i].sqrt() * y[i]).collect();
    let mut col_norm = vec![T::one(); p];
    for (j, col) in a.iter_mut().enumerate() {
        let norm = col.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm == T::zero() {
            return Err(LinalgError::RankDeficient { column: j });
        }
        col_norm[j] = norm;
        for v in col.iter_mut() {
            *v = *v / norm;
        }
    }

    let tol = T::epsilon().powf(T::lit(0.75)) * T::lit(10.0);
    let two = T::lit(2.0);
    let mut r = Matrix::zeros(p, p);
    for k in 0..p {
        let norm = a[k][k..].iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm <= tol {
            return Err(LinalgError::RankDeficient { column: k });
        }
        let alpha = if a[k][k] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = a[k][k..].to_vec();
        v[0] = v[0] - alpha;
        let vnorm2: T = v.iter().map(|&t| t * t).sum();
        if vnorm2 > T::zero() {
            for col in a.iter_mut().skip(k + 1) {
                let dot: T = v.iter().zip(&col[k..]).map(|(&vi, &ci)| vi * ci).sum();
                let f = two * dot / vnorm2;
                for (ci, &vi) in col[k..].iter_mut().zip(&v) {
                    *ci = *ci - f * vi;
                }
            }
            let dot: T = v.iter().zip(&b[k..]).map(|(&vi, &bi)| vi * bi).sum();
            let f = two * dot / vnorm2;
            for (bi, &vi) in b[k..].iter_mut().zip(&v) {
                *bi = *bi - f * vi;
            }
        }
        r.set(k, k, alpha);
        for j in k + 1..p {
            r.set(k, j, a[j][k]);
        }
    }

    // Back substitution for the equilibrated coefficients.
    let mut beta = vec![T::zero(); p];
    for k in (0..p).rev() {
        let mut acc = b[k];
        for j in k + 1..p {
            acc = acc - r.get(k, j) * beta[j];
        }
        beta[k] = acc / r.get(k, k);
    }

    // R^{-1}, upper triangular.
    let mut rinv = Matrix::zeros(p, p);
    for j in 0..p {
        rinv.set(j, j, T::one() / r.get(j, j));
        for i in (0..j).rev() {
            let mut acc = T::zero();
            for k in i + 1..=j {
                acc = acc + r.get(i, k) * rinv.get(k, j);
            }
            rinv.set(i, j, -acc / r.get(i, i));
        }
    }
    let mut bread = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let mut acc = T::zero();
            for k in i.max(j)..p {
                acc = acc + rinv.get(i, k) * rinv.get(j, k);
            }
            bread.set(i, j, acc / (col_norm[i] * col_norm[j]));
        }
    }

    let coefficients: Vec<T> = beta.iter().zip(&col_norm).map(|(&bj, &c)| bj / c).collect();
    let residuals = (0..n)
        .map(|i| {
            let fitted: T = x
                .row(i)
                .iter()
                .zip(&coefficients)
                .map(|(&xij, &c)| xij * c)
                .sum();
            y[i] - fitted
        })
        .collect();

    Ok(WlsFit {
        coefficients,
        bread,
        residuals,
        n_used: m,
    })
}

/// Number of distinct cluster labels among rows where `active` holds.
pub fn count_clusters(clusters: &[usize], active: impl Fn(usize) -> bool) -> usize {
    let mut seen: Vec<usize> = (0..clusters.len())
        .filter(|&i| active(i))
        .map(|i| clusters[i])
        .collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Liang-Zeger cluster-robust covariance of a WLS fit with small-sample
/// factor `G/(G-1)`.
pub fn cluster_covariance<T: Scalar>(
    x: &Matrix<T>,
    w: &[T],
    fit: &WlsFit<T>,
    clusters: &[usize],
) -> Matrix<T> {
    let p = x.ncols();
    let mut scores: std::collections::BTreeMap<usize, Vec<T>> = Default::default();
    for i in (0..x.nrows()).filter(|&i| w[i] > T::zero()) {
        let s = scores.entry(clusters[i]).or_insert_with(|| vec![T::zero(); p]);
        let we = w[i] * fit.residuals[i];
        for (sj, &xij) in s.iter_mut().zip(x.row(i)) {
            *sj = *sj + we * xij;
        }
    }
    let g = scores.len();
    let mut meat = Matrix::zeros(p, p);
    for s in scores.values() {
        for a in 0..p {
            for b in 0..p {
                meat.set(a, b, meat.get(a, b) + s[a] * s[b]);
            }
        }
    }
    let mut v = fit.bread.matmul(&meat).matmul(&fit.bread);
    if g > 1 {
        let gf = T::from_usize(g).unwrap();
        v.scale(gf / (gf - T::one()));
    }
    v
}

/// Heteroskedasticity-robust covariance with factor `n/(n-1)`.
pub fn hc_covariance<T: Scalar>(x: &Matrix<T>, w: &[T], fit: &WlsFit<T>) -> Matrix<T> {
    let p = x.ncols();
    let mut meat = Matrix::zeros(p, p);
    let mut n = 0usize;
    for i in (0..x.nrows()).filter(|&i| w[i] > T::zero()) {
        n += 1;
        let u = w[i] * w[i] * fit.residuals[i] * fit.residuals[i];
        let row = x.row(i);
        for a in 0..p {
            for b in 0..p {
                meat.set(a, b, meat.get(a, b) + u * row[a] * row[b]);
            }
        }
    }
    let mut v = fit.bread.matmul(&meat).matmul(&fit.bread);
    if n > 1 {
        let nf = T::from_usize(n).unwrap();
        v.scale(nf / (nf - T::one()));
    }
    v
}

/// Cluster-robust variance of the linear estimator `sum_i a_i y_i`, using
/// residuals `e`. Rows with `a_i == 0` do not count toward `G`.
pub fn clustered_variance<T: Scalar>(a: &[T], e: &[T], clusters: &[usize]) -> T {
    let mut sums: std::collections::BTreeMap<usize, T> = Default::default();
    for i in 0..a.len() {
        if a[i] != T::zero() {
            let s = sums.entry(clusters[i]).or_insert(T::zero());
            *s = *s + a[i] * e[i];
        }
    }
    let g = sums.len();
    let total: T = sums.values().map(|&s| s * s).sum();
    if g > 1 {
        let gf = T::from_usize(g).unwrap();
        total * gf / (gf - T::one())
    } else {
        total
    }
}

/// Unweighted polynomial fit; returns coefficients in increasing degree.
pub fn polyfit<T: Scalar>(x: &[T], y: &[T], degree: usize) -> Result<Vec<T>, LinalgError> {
    let rows: Vec<Vec<T>> = x
        .iter()
        .map(|&xi| (0..=degree).map(|d| xi.powi(d as i32)).collect())
        .collect();
    let design = Matrix::from_rows(&rows)?;
    let w = vec![T::one(); x.len()];
    Ok(wls(&design, y, &w)?.coefficients)
}

pub fn polyval<T: Scalar>(coefficients: &[T], x: T) -> T {
    coefficients
        .iter()
        .rev()
        .fold(T::zero(), |acc, &c| acc * x + c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn design(xs: &[f64]) -> Matrix<f64> {
        Matrix::from_rows(&xs.iter().map(|&x| vec![1.0, x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn recovers_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let fit = wls(&design(&xs), &y, &[1.0, 2.0, 0.5, 1.0, 3.0]).unwrap();
        assert_relative_eq!(fit.coefficients[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.coefficients[1], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn matches_normal_equations_for_simple_regression() {
        // Closed-form weighted simple regression.
        let xs = [1.0, 2.0, 4.0, 5.0, 7.0];
        let y = [1.2, 1.9, 4.2, 4.8, 7.5];
        let w = [1.0, 0.5, 2.0, 1.0, 0.25];
        let sw: f64 = w.iter().sum();
        let mx = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
        let my = y.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
        let sxy: f64 = (0..5).map(|i| w[i] * (xs[i] - mx) * (y[i] - my)).sum();
        let sxx: f64 = (0..5).map(|i| w[i] * (xs[i] - mx).powi(2)).sum();
        let slope = sxy / sxx;
        let fit = wls(&design(&xs), &y, &w).unwrap();
        assert_relative_eq!(fit.coefficients[1], slope, epsilon = 1e-12);
        assert_relative_eq!(fit.coefficients[0], my - slope * mx, epsilon = 1e-12);
        assert_relative_eq!(fit.bread.get(1, 1), 1.0 / sxx, epsilon = 1e-12);
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let y = [0.0, 1.0, 2.0, 100.0];
        let fit = wls(&design(&xs), &y, &[1.0, 1.0, 1.0, 0.0]).unwrap();
        assert_relative_eq!(fit.coefficients[1], 1.0, epsilon = 1e-12);
        assert_eq!(fit.n_used, 3);
        assert_relative_eq!(fit.residuals[3], 97.0, epsilon = 1e-9);
    }

    #[test]
    fn detects_collinear_columns() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64, 2.0 * i as f64]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let err = wls(&x, &[0.0; 6], &[1.0; 6]).unwrap_err();
        assert!(matches!(err, LinalgError::RankDeficient { .. }));
    }

    #[test]
    fn too_few_rows() {
        let err = wls(&design(&[1.0]), &[1.0], &[1.0]).unwrap_err();
        assert_eq!(err, LinalgError::TooFewRows { needed: 2, found: 1 });
    }

    #[test]
    fn influence_weights_reproduce_coefficients() {
        let xs = [0.5, 1.5, 2.5, 3.5, 4.5, 5.5];
        let y = [0.3, 0.1, 0.9, 1.4, 1.1, 2.0];
        let w = [0.2, 1.0, 0.7, 0.0, 1.3, 0.4];
        let x = design(&xs);
        let fit = wls(&x, &y, &w).unwrap();
        for k in 0..2 {
            let a = fit.influence_weights(&x, &w, k);
            let v: f64 = a.iter().zip(&y).map(|(a, y)| a * y).sum();
            assert_relative_eq!(v, fit.coefficients[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn singleton_clusters_equal_hc() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [0.1, 1.3, 1.7, 3.4, 3.9, 5.2, 5.8];
        let w = [1.0, 0.8, 0.6, 0.4, 0.9, 1.0, 0.3];
        let x = design(&xs);
        let fit = wls(&x, &y, &w).unwrap();
        let clusters: Vec<usize> = (0..7).collect();
        let vc = cluster_covariance(&x, &w, &fit, &clusters);
        let vh = hc_covariance(&x, &w, &fit);
        for a in 0..2 {
            for b in 0..2 {
                assert_relative_eq!(vc.get(a, b), vh.get(a, b), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn clustered_variance_matches_sandwich_diagonal() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let y = [0.1, 1.3, 1.7, 3.4, 3.9, 5.2, 5.8, 7.7];
        let w = [1.0, 0.8, 0.6, 0.4, 0.9, 1.0, 0.3, 0.5];
        let clusters = [0, 0, 1, 1, 2, 3, 3, 2];
        let x = design(&xs);
        let fit = wls(&x, &y, &w).unwrap();
        let v = cluster_covariance(&x, &w, &fit, &clusters);
        for k in 0..2 {
            let a = fit.influence_weights(&x, &w, k);
            let vk = clustered_variance(&a, &fit.residuals, &clusters);
            assert_relative_eq!(vk, v.get(k, k), epsilon = 1e-14);
        }
    }

    #[test]
    fn generic_over_f32() {
        let rows: Vec<Vec<f32>> = (0..5).map(|i| vec![1.0, i as f32]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f32> = (0..5).map(|i| 1.0 + 3.0 * i as f32).collect();
        let fit = wls(&x, &y, &[1.0f32; 5]).unwrap();
        assert!((fit.coefficients[1] - 3.0).abs() < 1e-4);
    }

    #[test]
    fn quartic_fit_in_rank_units() {
        let xs: Vec<f64> = (1..=30).map(|r| r as f64 - 30.5).collect();
        let truth = [0.4, -0.02, 0.003, 1e-4, -2e-6];
        let y: Vec<f64> = xs.iter().map(|&x| polyval(&truth, x)).collect();
        let c = polyfit(&xs, &y, 4).unwrap();
        for (a, b) in c.iter().zip(&truth) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }
}
