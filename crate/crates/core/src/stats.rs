//! Nonparametric statistics: Vargha-Delaney Â12, Spearman's rho, the
//! Mann-Whitney U test and pairwise comparison tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::PropertyKey;
use crate::error::{Error, Result};
use crate::ranking::{ranks_unchecked, RankedDataset};
use crate::special::normal_sf;

/// Default significance level.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Samples with `n1 + n2` at most this large and no ties use the exact U
/// distribution.
pub const EXACT_U_MAX_N: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    FirstBetter,
    SecondBetter,
    NoDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub a12: f64,
    pub magnitude: Magnitude,
    pub direction: Direction,
}

impl EffectSize {
    /// Classify with the usual 0.56 / 0.64 / 0.71 thresholds, symmetric
    /// around 0.5.
    pub fn from_a12(a12: f64) -> Self {
        let magnitude = if a12 >= 0.71 || a12 <= 0.29 {
            Magnitude::Large
        } else if a12 >= 0.64 || a12 <= 0.36 {
            Magnitude::Medium
        } else if a12 >= 0.56 || a12 <= 0.44 {
            Magnitude::Small
        } else {
            Magnitude::Negligible
        };
        let direction = if a12 > 0.5 {
            Direction::FirstBetter
        } else if a12 < 0.5 {
            Direction::SecondBetter
        } else {
            Direction::NoDifference
        };
        EffectSize {
            a12,
            magnitude,
            direction,
        }
    }
}

fn require_non_empty(x: &[f64], name: &str) -> Result<()> {
    if x.is_empty() {
        return Err(Error::invalid(format!("sample `{name}` is empty")));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid(format!("sample `{name}` contains NaN")));
    }
    Ok(())
}

/// Probability that a random draw from `x` exceeds one from `y`, ties
/// counting half.
pub fn vargha_delaney_a12(x: &[f64], y: &[f64]) -> Result<f64> {
    require_non_empty(x, "x")?;
    require_non_empty(y, "y")?;
    // Â12 = (R_x / n1 - (n1 + 1) / 2) / n2 with mid-ranks in the pooled sample.
    let n1 = x.len();
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = ranks_unchecked(&pooled);
    let rank_sum: f64 = ranks[..n1].iter().sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok(u / (n1 as f64 * y.len() as f64))
}

/// Spearman's rank correlation (Pearson correlation of fractional ranks).
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::invalid("spearman needs at least 2 pairs"));
    }
    require_non_empty(x, "x")?;
    require_non_empty(y, "y")?;
    pearson(&ranks_unchecked(x), &ranks_unchecked(y))
}

pub(crate) fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("correlation of a constant sample is undefined"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// `x` is stochastically greater than `y`.
    Greater,
    /// `x` is stochastically smaller than `y`.
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UMethod {
    /// Exact when small and tie-free, normal approximation otherwise.
    #[default]
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample: pairs with `x > y`, ties counting half.
    pub u: f64,
    pub p: f64,
    pub exact: bool,
}

/// Two-sided Mann-Whitney U test.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<MannWhitney> {
    mann_whitney_u_with(x, y, Alternative::TwoSided, UMethod::Auto)
}

pub fn mann_whitney_u_with(
    x: &[f64],
    y: &[f64],
    alternative: Alternative,
    method: UMethod,
) -> Result<MannWhitney> {
    require_non_empty(x, "x")?;
    require_non_empty(y, "y")?;
    let (n1, n2) = (x.len(), y.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = ranks_unchecked(&pooled);
    let rank_sum: f64 = ranks[..n1].iter().sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;

    let tie_term = tie_correction(&pooled);
    let has_ties = tie_term > 0.0;
    let exact = match method {
        UMethod::Exact => {
            if has_ties {
                return Err(Error::invalid("exact U distribution requires tie-free samples"));
            }
            true
        }
        UMethod::Normal => false,
        UMethod::Auto => !has_ties && n <= EXACT_U_MAX_N,
    };

    let p = if exact {
        exact_p(u, n1, n2, alternative)
    } else {
        let nf = n as f64;
        let (f1, f2) = (n1 as f64, n2 as f64);
        let mean = f1 * f2 / 2.0;
        let var = f1 * f2 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
        if var <= 0.0 {
            // every value identical
            1.0
        } else {
            let sd = var.sqrt();
            let d = u - mean;
            match alternative {
                Alternative::TwoSided => {
                    let z = (d.abs() - 0.5).max(0.0) / sd;
                    (2.0 * normal_sf(z)).min(1.0)
                }
                Alternative::Greater => normal_sf((d - 0.5) / sd),
                Alternative::Less => normal_sf((-d - 0.5) / sd),
            }
        }
    };
    Ok(MannWhitney {
        u,
        p: p.clamp(0.0, 1.0),
        exact,
    })
}

fn tie_correction(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        total += t * t * t - t;
        i = j + 1;
    }
    total
}

/// Exact null distribution of U by enumerating every assignment of `n1`
/// labels among `n1 + n2` tie-free positions.
fn exact_p(u: f64, n1: usize, n2: usize, alternative: Alternative) -> f64 {
    let counts = u_distribution(n1, n2);
    let total: f64 = counts.iter().sum();
    // u is integral for tie-free data
    let u_obs = u.round() as usize;
    let le: f64 = counts[..=u_obs].iter().sum::<f64>() / total;
    let ge: f64 = counts[u_obs..].iter().sum::<f64>() / total;
    match alternative {
        Alternative::TwoSided => (2.0 * le.min(ge)).min(1.0),
        Alternative::Greater => ge,
        Alternative::Less => le,
    }
}

fn u_distribution(n1: usize, n2: usize) -> Vec<f64> {
    let n = n1 + n2;
    let mut counts = vec![0.0; n1 * n2 + 1];
    // positions 0..n in ascending order; choosing position i for a member of
    // the first sample contributes (i - already chosen) pairs it exceeds.
    fn recurse(pos: usize, n: usize, left: usize, chosen: usize, acc: usize, counts: &mut [f64]) {
        if left == 0 {
            counts[acc] += 1.0;
            return;
        }
        if n - pos < left {
            return;
        }
        recurse(pos + 1, n, left - 1, chosen + 1, acc + (pos - chosen), counts);
        recurse(pos + 1, n, left, chosen, acc, counts);
    }
    recurse(0, n, n1, 0, 0, &mut counts);
    counts
}

/// Pairwise Â12 and Mann-Whitney p-values between groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTable {
    pub labels: Vec<String>,
    /// `a12[i][j]` compares row `i` against column `j`.
    pub a12: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub significant: Vec<Vec<bool>>,
    pub alpha: f64,
    pub alternative: Alternative,
}

impl PairwiseTable {
    pub fn effect(&self, i: usize, j: usize) -> EffectSize {
        EffectSize::from_a12(self.a12[i][j])
    }
}

pub fn pairwise_table(groups: &[(String, Vec<f64>)], alpha: f64) -> Result<PairwiseTable> {
    pairwise_table_with(groups, alpha, Alternative::TwoSided)
}

pub fn pairwise_table_with(
    groups: &[(String, Vec<f64>)],
    alpha: f64,
    alternative: Alternative,
) -> Result<PairwiseTable> {
    if groups.len() < 2 {
        return Err(Error::invalid("pairwise comparison needs at least 2 groups"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    let k = groups.len();
    let mut a12 = vec![vec![0.5; k]; k];
    let mut p = vec![vec![1.0; k]; k];
    for (i, (name, g)) in groups.iter().enumerate() {
        require_non_empty(g, name)?;
        for j in 0..k {
            if i == j {
                continue;
            }
            let h = &groups[j].1;
            if j > i {
                a12[i][j] = vargha_delaney_a12(g, h)?;
                a12[j][i] = 1.0 - a12[i][j];
            }
            if j > i || alternative != Alternative::TwoSided {
                let test = mann_whitney_u_with(g, h, alternative, UMethod::Auto)?;
                p[i][j] = test.p;
                if alternative == Alternative::TwoSided {
                    p[j][i] = test.p;
                }
            }
        }
    }
    let significant = p
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &pv)| i != j && pv < alpha)
                .collect()
        })
        .collect();
    Ok(PairwiseTable {
        labels: groups.iter().map(|(l, _)| l.clone()).collect(),
        a12,
        p,
        significant,
        alpha,
        alternative,
    })
}

/// Spearman correlation matrix of property ranks at each property's natural
/// scope, over trial-level observations pooled across programs.
pub fn correlation_matrix(rd: &RankedDataset, keys: &[PropertyKey]) -> Result<Vec<Vec<f64>>> {
    if keys.len() < 2 {
        return Err(Error::invalid("correlation matrix needs at least 2 keys"));
    }
    let rows = rd.trial_rows();
    let mut columns = Vec::with_capacity(keys.len());
    for k in keys {
        let ranks = rd.property_rank(k, rd.natural_scope(k))?;
        let col: Vec<f64> = rows.iter().map(|&i| ranks[i]).collect();
        if col.iter().all(|&v| v == col[0]) {
            return Err(Error::invalid(format!("property `{k}` is constant")));
        }
        columns.push(col);
    }
    let m = keys.len();
    let mut out = vec![vec![1.0; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let rho = spearman_rho(&columns[i], &columns[j])?;
            out[i][j] = rho;
            out[j][i] = rho;
        }
    }
    Ok(out)
}

/// Spearman's rho between a property's rank and the performance rank over
/// all rows, at one scope.
pub fn property_performance_rho(
    rd: &RankedDataset,
    key: &PropertyKey,
    property_scope: crate::ranking::RankScope,
    perf_scope: crate::ranking::RankScope,
) -> Result<f64> {
    spearman_rho(rd.property_rank(key, property_scope)?, rd.perf_rank(perf_scope)?)
}

/// Group rows' performance by fuzzer, optionally restricted to one program.
pub fn performance_by_fuzzer(
    d: &crate::data::Dataset,
    program: Option<&str>,
) -> Result<Vec<(String, Vec<f64>)>> {
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for t in d.trials() {
        if program.is_none_or(|p| p == t.program) {
            groups.entry(&t.fuzzer).or_default().push(t.performance);
        }
    }
    if groups.is_empty() {
        return Err(Error::Unknown {
            kind: "program",
            name: program.unwrap_or_default().to_string(),
        });
    }
    Ok(d.fuzzers()
        .iter()
        .filter_map(|f| groups.remove(f.as_str()).map(|v| (f.clone(), v)))
        .collect())
}
