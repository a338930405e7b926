//! Regression assumption checks: serial correlation, residual normality,
//! homoscedasticity and multicollinearity.

use serde::{Deserialize, Serialize};

use crate::data::PropertyKey;
use crate::error::{Error, Result};
use crate::ranking::RankedDataset;
use crate::regression::{median, ExplainableFit, Matrix, Qr, RegressionFit};
use crate::special::{normal_quantile, normal_sf};

/// Variance inflation above this is flagged.
pub const VIF_FLAG: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurbinWatson {
    pub statistic: f64,
    /// Two-sided, from the normal approximation `N(2, 4/n)`.
    pub p_value: f64,
}

/// Durbin-Watson statistic of residuals in the given order.
pub fn durbin_watson(residuals: &[f64]) -> Result<DurbinWatson> {
    let n = residuals.len();
    if n < 3 {
        return Err(Error::invalid(format!("Durbin-Watson needs at least 3 residuals, got {n}")));
    }
    let ss: f64 = residuals.iter().map(|e| e * e).sum();
    if ss == 0.0 {
        return Err(Error::invalid("Durbin-Watson is undefined for all-zero residuals"));
    }
    let num: f64 = residuals.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    let statistic = num / ss;
    let z = (statistic - 2.0) / (4.0 / n as f64).sqrt();
    Ok(DurbinWatson {
        statistic,
        p_value: (2.0 * normal_sf(z.abs())).min(1.0),
    })
}

/// Normal QQ points `(Φ⁻¹((i - 0.5)/n), v_(i))`. Values are used as given;
/// pass standardized residuals to compare against the identity line.
pub fn qq_normal(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = values.len();
    if n < 3 {
        return Err(Error::invalid(format!("QQ plot needs at least 3 values, got {n}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("QQ plot input contains a non-finite value"));
    }
    if values.iter().all(|v| *v == values[0]) {
        return Err(Error::invalid("QQ plot of zero-variance values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (normal_quantile((i as f64 + 0.5) / n as f64), v))
        .collect())
}

/// Residuals divided by the residual standard error.
pub fn standardized_residuals(fit: &RegressionFit) -> Result<Vec<f64>> {
    let s = fit.residual_std_error;
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::invalid("residual variance is zero or undefined"));
    }
    Ok(fit.residuals.iter().map(|e| e / s).collect())
}

/// `(fitted, sqrt(|e / s|))`, sorted by fitted value.
pub fn scale_location(fit: &RegressionFit) -> Result<Vec<(f64, f64)>> {
    let z = standardized_residuals(fit)?;
    let mut pts: Vec<(f64, f64)> = fit
        .fitted
        .iter()
        .zip(&z)
        .map(|(f, e)| (*f, e.abs().sqrt()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(pts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifEntry {
    pub key: PropertyKey,
    /// Infinite under perfect collinearity.
    #[serde(with = "crate::serde_util::float")]
    pub vif: f64,
    pub flagged: bool,
}

/// Variance inflation of each column regressed (with intercept) on the
/// others. Columns that are exact combinations of earlier ones are dropped
/// from the regressors, so perfect collinearity shows up as `+inf` on the
/// affected keys rather than as an error.
pub fn vif_from_columns(columns: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = columns.len();
    if k < 2 {
        return Err(Error::invalid("variance inflation needs at least 2 predictors"));
    }
    let n = columns[0].len();
    if n < k + 2 {
        return Err(Error::invalid(format!(
            "variance inflation of {k} predictors needs at least {} observations, got {n}",
            k + 2
        )));
    }
    for (j, c) in columns.iter().enumerate() {
        if c.iter().all(|v| *v == c[0]) {
            return Err(Error::invalid(format!("predictor {j} is constant")));
        }
    }
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let y = &columns[j];
        let mut cols = vec![vec![1.0; n]];
        cols.extend((0..k).filter(|&i| i != j).map(|i| columns[i].clone()));
        let qr = loop {
            let labels = (0..cols.len()).map(|i| i.to_string()).collect();
            let m = Matrix::from_columns(labels, cols.clone())?;
            match Qr::factor(&m) {
                Ok(qr) => break qr,
                Err(Error::RankDeficient { column }) => {
                    let idx: usize = column.parse().expect("numeric label");
                    cols.remove(idx);
                }
                Err(e) => return Err(e),
            }
        };
        let b = qr.solve(y);
        let mean = y.iter().sum::<f64>() / n as f64;
        let mut ss_res = 0.0;
        let mut ss_tot = 0.0;
        for (i, v) in y.iter().enumerate() {
            let fit: f64 = cols.iter().zip(&b).map(|(c, bj)| c[i] * bj).sum();
            ss_res += (v - fit).powi(2);
            ss_tot += (v - mean).powi(2);
        }
        let r2 = 1.0 - ss_res / ss_tot;
        out.push(if ss_res <= 1e-12 * ss_tot {
            f64::INFINITY
        } else {
            (1.0 / (1.0 - r2)).max(1.0)
        });
    }
    Ok(out)
}

/// VIF of each key's natural-scope rank, one observation per trial.
pub fn variance_inflation(rd: &RankedDataset, keys: &[PropertyKey]) -> Result<Vec<VifEntry>> {
    let rows = rd.trial_rows();
    let mut cols = Vec::with_capacity(keys.len());
    for k in keys {
        let r = rd.property_rank(k, rd.natural_scope(k))?;
        let c: Vec<f64> = rows.iter().map(|&i| r[i]).collect();
        if c.iter().all(|v| *v == c[0]) {
            return Err(Error::invalid(format!("property `{k}` is constant")));
        }
        cols.push(c);
    }
    let vif = vif_from_columns(&cols)?;
    Ok(keys
        .iter()
        .zip(vif)
        .map(|(k, v)| VifEntry {
            key: k.clone(),
            vif: v,
            flagged: v > VIF_FLAG,
        })
        .collect())
}

/// Residual order for the Durbin-Watson test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualOrder {
    /// Sorted by (program, trial, fuzzer).
    #[default]
    Sorted,
    /// As the rows appear in the dataset.
    Observed,
    /// Sorted by (program, fuzzer, trial): each fuzzer's run of trials is
    /// contiguous, so neighbouring residuals come from different trials.
    ProgramFuzzerTrial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub durbin_watson: f64,
    pub dw_p_value: f64,
    pub dw_order: ResidualOrder,
    /// Theoretical normal quantile against standardized residual.
    pub qq_points: Vec<(f64, f64)>,
    pub scale_location: Vec<(f64, f64)>,
    pub vif: Vec<VifEntry>,
    pub r2: f64,
    #[serde(with = "crate::serde_util::float")]
    pub r2_adjusted: f64,
    pub median_residual: f64,
    pub median_abs_residual: f64,
}

pub fn diagnose(
    model: &ExplainableFit,
    rd: &RankedDataset,
    order: ResidualOrder,
) -> Result<DiagnosticsReport> {
    let fit = &model.fit;
    let mut idx: Vec<usize> = (0..fit.residuals.len()).collect();
    if order != ResidualOrder::Observed {
        let t = rd.base().trials();
        let rows = &model.rows;
        if rows.len() != idx.len() {
            return Err(Error::invalid("fit rows do not match its residuals"));
        }
        idx.sort_by(|&a, &b| {
            let (ra, rb) = (&t[rows[a]], &t[rows[b]]);
            if order == ResidualOrder::Sorted {
                (&ra.program, ra.trial, &ra.fuzzer).cmp(&(&rb.program, rb.trial, &rb.fuzzer))
            } else {
                (&ra.program, &ra.fuzzer, ra.trial).cmp(&(&rb.program, &rb.fuzzer, rb.trial))
            }
        });
    }
    let ordered: Vec<f64> = idx.iter().map(|&i| fit.residuals[i]).collect();
    let dw = durbin_watson(&ordered)?;
    let z = standardized_residuals(fit)?;
    let vif = if model.design.properties.len() >= 2 {
        variance_inflation(rd, &model.design.properties)?
    } else {
        Vec::new()
    };
    Ok(DiagnosticsReport {
        durbin_watson: dw.statistic,
        dw_p_value: dw.p_value,
        dw_order: order,
        qq_points: qq_normal(&z)?,
        scale_location: scale_location(fit)?,
        vif,
        r2: fit.r2,
        r2_adjusted: fit.r2_adjusted,
        median_residual: median(&fit.residuals),
        median_abs_residual: fit.median_abs_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alternating_residuals() {
        let dw = durbin_watson(&[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(dw.statistic, 3.0);
        assert!(durbin_watson(&[0.0; 5]).is_err());
        assert!(durbin_watson(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn qq_of_normal_quantiles_is_identity() {
        let n = 50;
        let v: Vec<f64> = (0..n)
            .rev()
            .map(|i| normal_quantile((i as f64 + 0.5) / n as f64))
            .collect();
        for (t, s) in qq_normal(&v).unwrap() {
            assert!((t - s).abs() < 1e-6);
        }
        assert!(qq_normal(&[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn duplicated_column_is_infinite() {
        let a: Vec<f64> = (0..20).map(|i| (i * 7 % 20) as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| (i * 3 % 20) as f64).collect();
        let v = vif_from_columns(&[a.clone(), a.clone(), b]).unwrap();
        assert!(v[0].is_infinite() && v[1].is_infinite());
        assert!(v[2].is_finite());
    }

    #[test]
    fn two_predictor_closed_form() {
        let a: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..40).map(|i| i as f64 + if i % 2 == 0 { 6.0 } else { -6.0 }).collect();
        let rho = crate::stats::pearson(&a, &b).unwrap();
        let v = vif_from_columns(&[a, b]).unwrap();
        let want = 1.0 / (1.0 - rho * rho);
        assert!((v[0] - want).abs() < 1e-9 * want);
        assert!((v[1] - want).abs() < 1e-9 * want);
    }

    #[test]
    fn orthogonal_columns_have_unit_vif() {
        let a = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let b = vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let c = vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
        for v in vif_from_columns(&[a, b, c]).unwrap() {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn dw_reversal_symmetric(e in prop::collection::vec(-10.0f64..10.0, 3..60)) {
            prop_assume!(e.iter().any(|v| v.abs() > 1e-3));
            let mut r = e.clone();
            r.reverse();
            let a = durbin_watson(&e).unwrap().statistic;
            let b = durbin_watson(&r).unwrap().statistic;
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            prop_assert!((0.0..=4.0).contains(&a));
        }

        #[test]
        fn qq_monotone(e in prop::collection::vec(-10.0f64..10.0, 3..60)) {
            prop_assume!(e.iter().any(|v| *v != e[0]));
            let q = qq_normal(&e).unwrap();
            for w in q.windows(2) {
                prop_assert!(w[0].0 < w[1].0);
                prop_assert!(w[0].1 <= w[1].1);
            }
        }

        #[test]
        fn vif_of_orthogonalized_complement_is_one(
            a in prop::collection::vec(-5.0f64..5.0, 8..30),
            b0 in prop::collection::vec(-5.0f64..5.0, 30),
        ) {
            let n = a.len();
            let b0 = &b0[..n];
            let ma = a.iter().sum::<f64>() / n as f64;
            let ac: Vec<f64> = a.iter().map(|v| v - ma).collect();
            let aa: f64 = ac.iter().map(|v| v * v).sum();
            prop_assume!(aa > 1e-3);
            let mb = b0.iter().sum::<f64>() / n as f64;
            let bc: Vec<f64> = b0.iter().map(|v| v - mb).collect();
            let proj: f64 = ac.iter().zip(&bc).map(|(x, y)| x * y).sum::<f64>() / aa;
            let b: Vec<f64> = bc.iter().zip(&ac).map(|(y, x)| y - proj * x).collect();
            prop_assume!(b.iter().map(|v| v * v).sum::<f64>() > 1e-3);
            for v in vif_from_columns(&[a.clone(), b]).unwrap() {
                prop_assert!((v - 1.0).abs() < 1e-9);
            }
        }
    }
}
