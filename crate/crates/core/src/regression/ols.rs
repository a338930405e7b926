//! Ordinary least squares by Householder QR.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::f_sf;

/// Column `j` is treated as linearly dependent on the preceding columns when
/// the norm of its orthogonal component falls below this fraction of its own
/// norm.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Dense column-major matrix with column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    labels: Vec<String>,
}

impl Matrix {
    /// All columns must have the same length.
    pub fn from_columns(labels: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != columns.len() {
            return Err(Error::invalid("one label per column required"));
        }
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::invalid("columns differ in length"));
        }
        let cols = columns.len();
        Ok(Matrix {
            rows,
            cols,
            data: columns.into_iter().flatten().collect(),
            labels,
        })
    }

    /// Row-major input; columns are labelled `x0`, `x1`, ...
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("rows differ in length"));
        }
        let columns = (0..cols)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        Matrix::from_columns((0..cols).map(|j| format!("x{j}")).collect(), columns)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    /// Keep only the given rows, in the given order (duplicates allowed).
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for j in 0..self.cols {
            let col = self.column(j);
            data.extend(idx.iter().map(|&i| col[i]));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
            labels: self.labels.clone(),
        }
    }

    pub fn mul_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for (j, &bj) in b.iter().enumerate() {
            if bj == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(self.column(j)) {
                *o += x * bj;
            }
        }
        out
    }
}

/// Thin QR factorization `X = QR` with `Q` stored as Householder reflectors.
#[derive(Debug, Clone)]
pub struct Qr {
    rows: usize,
    cols: usize,
    /// Upper triangle of R, column-major `cols x cols`.
    r: Vec<f64>,
    /// Reflector `k` acts on rows `k..` as `I - tau v v^T`.
    reflectors: Vec<(Vec<f64>, f64)>,
}

impl Qr {
    pub fn factor(x: &Matrix) -> Result<Self> {
        let (n, p) = (x.rows, x.cols);
        if n < p || p == 0 {
            return Err(Error::Underdetermined {
                rows: n,
                columns: p,
            });
        }
        let mut a = x.data.clone();
        let norms: Vec<f64> = (0..p).map(|j| norm(x.column(j))).collect();
        let mut reflectors = Vec::with_capacity(p);
        let mut r = vec![0.0; p * p];
        for k in 0..p {
            let col = &mut a[k * n + k..(k + 1) * n];
            let alpha_norm = norm(col);
            if norms[k] == 0.0 || alpha_norm <= RANK_TOLERANCE * norms[k] {
                return Err(Error::RankDeficient {
                    column: x.labels[k].clone(),
                });
            }
            let alpha = if col[0] > 0.0 { -alpha_norm } else { alpha_norm };
            let mut v = col.to_vec();
            v[0] -= alpha;
            let vnorm2: f64 = v.iter().map(|t| t * t).sum();
            let tau = 2.0 / vnorm2;
            r[k * p + k] = alpha;
            for j in (k + 1)..p {
                let cj = &mut a[j * n + k..(j + 1) * n];
                let s = tau * dot(&v, cj);
                for (c, vi) in cj.iter_mut().zip(&v) {
                    *c -= s * vi;
                }
                r[j * p + k] = cj[0];
            }
            reflectors.push((v, tau));
        }
        Ok(Qr {
            rows: n,
            cols: p,
            r,
            reflectors,
        })
    }

    /// `Q^T y`.
    pub fn qt_mul(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut z = y.to_vec();
        for (k, (v, tau)) in self.reflectors.iter().enumerate() {
            let seg = &mut z[k..];
            let s = tau * dot(v, seg);
            for (zi, vi) in seg.iter_mut().zip(v) {
                *zi -= s * vi;
            }
        }
        z
    }

    /// Least-squares coefficients for response `y`.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let z = self.qt_mul(y);
        let p = self.cols;
        let mut b = vec![0.0; p];
        for i in (0..p).rev() {
            let mut s = z[i];
            for j in (i + 1)..p {
                s -= self.r[j * p + i] * b[j];
            }
            b[i] = s / self.r[i * p + i];
        }
        b
    }

    /// Whether the constant vector lies in the column space.
    fn spans_constant(&self) -> bool {
        let ones = vec![1.0; self.rows];
        let z = self.qt_mul(&ones);
        let outside: f64 = z[self.cols..].iter().map(|t| t * t).sum();
        outside.sqrt() <= 1e-8 * (self.rows as f64).sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares fit and summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub r2: f64,
    #[serde(with = "crate::serde_util::float")]
    pub r2_adjusted: f64,
    #[serde(with = "crate::serde_util::float")]
    pub f_statistic: f64,
    #[serde(with = "crate::serde_util::float")]
    pub f_p_value: f64,
    /// Median of the raw residuals.
    pub median_residual: f64,
    pub median_abs_residual: f64,
    /// `sqrt(SS_res / df_residual)`.
    #[serde(with = "crate::serde_util::float")]
    pub residual_std_error: f64,
    pub df_residual: usize,
    /// Whether the constant vector lies in the column space; R² is centred
    /// when it does.
    pub has_intercept: bool,
}

impl RegressionFit {
    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.coefficients[i])
    }

    pub fn n_obs(&self) -> usize {
        self.residuals.len()
    }
}

/// Minimize `||y - X b||` by Householder QR.
pub fn ols_fit(x: &Matrix, y: &[f64]) -> Result<RegressionFit> {
    if y.len() != x.rows {
        return Err(Error::invalid(format!(
            "response has {} rows, design has {}",
            y.len(),
            x.rows
        )));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("response contains non-finite value {v}")));
    }
    let qr = Qr::factor(x)?;
    let coefficients = qr.solve(y);
    Ok(summarize(x, &qr, y, coefficients))
}

pub(crate) fn summarize(x: &Matrix, qr: &Qr, y: &[f64], coefficients: Vec<f64>) -> RegressionFit {
    let n = x.rows;
    let p = x.cols;
    let fitted = x.mul_vec(&coefficients);
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let ss_res: f64 = residuals.iter().map(|e| e * e).sum();
    let has_intercept = qr.spans_constant();
    let ss_tot: f64 = if has_intercept {
        let mean = y.iter().sum::<f64>() / n as f64;
        y.iter().map(|v| (v - mean) * (v - mean)).sum()
    } else {
        y.iter().map(|v| v * v).sum()
    };
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let df_residual = n - p;
    let df_model = if has_intercept { p - 1 } else { p };
    let dfn = if has_intercept { n - 1 } else { n } as f64;
    let (r2_adjusted, f_statistic, f_p_value, residual_std_error) = if df_residual == 0 {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    } else {
        let r2_adj = 1.0 - (1.0 - r2) * dfn / df_residual as f64;
        let (f, fp) = if df_model == 0 {
            (f64::NAN, f64::NAN)
        } else if ss_res == 0.0 {
            if ss_tot > 0.0 {
                (f64::INFINITY, 0.0)
            } else {
                (f64::NAN, f64::NAN)
            }
        } else {
            let f = ((ss_tot - ss_res).max(0.0) / df_model as f64) / (ss_res / df_residual as f64);
            (f, f_sf(f, df_model as f64, df_residual as f64))
        };
        (r2_adj, f, fp, (ss_res / df_residual as f64).sqrt())
    };
    let abs: Vec<f64> = residuals.iter().map(|e| e.abs()).collect();
    RegressionFit {
        labels: x.labels.clone(),
        coefficients,
        median_residual: median(&residuals),
        median_abs_residual: median(&abs),
        fitted,
        residuals,
        r2,
        r2_adjusted,
        f_statistic,
        f_p_value,
        residual_std_error,
        df_residual,
        has_intercept,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_design(xs: &[f64]) -> Matrix {
        Matrix::from_columns(
            vec!["intercept".into(), "x".into()],
            vec![vec![1.0; xs.len()], xs.to_vec()],
        )
        .unwrap()
    }

    #[test]
    fn perfect_line() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let fit = ols_fit(&line_design(&xs), &ys).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-10);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-10);
        assert!(fit.has_intercept);
    }

    #[test]
    fn constant_response() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let fit = ols_fit(&line_design(&xs), &[3.0; 10]).unwrap();
        assert!(fit.coefficients[1].abs() < 1e-12);
        assert_eq!(fit.r2, 0.0);
    }

    #[test]
    fn rank_deficiency_names_column() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let m = Matrix::from_columns(
            vec!["intercept".into(), "x".into(), "twice_x".into()],
            vec![vec![1.0; 10], xs.clone(), xs.iter().map(|x| 2.0 * x).collect()],
        )
        .unwrap();
        match ols_fit(&m, &xs) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, "twice_x"),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn underdetermined() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            ols_fit(&m, &[1.0]),
            Err(Error::Underdetermined { .. })
        ));
    }

    #[test]
    fn intercept_detected_through_indicators() {
        // two group indicators span the constant
        let m = Matrix::from_columns(
            vec!["g1".into(), "g2".into()],
            vec![vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]],
        )
        .unwrap();
        let fit = ols_fit(&m, &[1.0, 2.0, 5.0, 6.0]).unwrap();
        assert!(fit.has_intercept);
        assert!((fit.r2 - 16.0 / 17.0).abs() < 1e-12);
    }
}
