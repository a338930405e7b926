//! Resampling engine: pairs bootstrap, wild bootstrap and percentile
//! confidence intervals.
//!
//! Every replicate draws from its own generator seeded by
//! [`derive_replicate_seed`], and replicate outputs are aggregated in index
//! order, so results depend only on `(seed, replicates, method)` and never on
//! thread count or scheduling.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::{ols_fit, Matrix, Qr};

pub const DEFAULT_REPLICATES: usize = 2000;
pub const DEFAULT_CI_LEVEL: f64 = 0.95;
/// Retries of a failing replicate before it is skipped.
pub const MAX_RETRIES: u64 = 10;
/// Largest tolerated fraction of skipped replicates.
pub const MAX_SKIP_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMethod {
    Pairs,
    Wild,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WildWeights {
    /// ±1 with equal probability.
    #[default]
    Rademacher,
    /// Mammen's two-point distribution (mean 0, variance 1, skewness 1).
    Mammen,
}

/// What the model bootstrap resamples or reweights as one unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleUnit {
    /// Each observation independently.
    Observation,
    /// All observations of one (program, trial) together. Fuzzer ranks
    /// within a trial always sum to the same total, so their errors are
    /// dependent.
    #[default]
    Trial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub replicates: usize,
    pub seed: u64,
    pub method: BootstrapMethod,
    #[serde(default)]
    pub wild_weights: WildWeights,
    pub ci_level: f64,
    /// Unit for the fuzzer-by-property model; simple regressions always
    /// resample observations.
    #[serde(default)]
    pub unit: ResampleUnit,
    /// Run replicates on the rayon pool. Output is identical either way.
    #[serde(default = "default_parallel", skip_serializing)]
    pub parallel: bool,
}

fn default_parallel() -> bool {
    true
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        BootstrapSpec {
            replicates: DEFAULT_REPLICATES,
            seed: 0,
            method: BootstrapMethod::Wild,
            wild_weights: WildWeights::Rademacher,
            ci_level: DEFAULT_CI_LEVEL,
            unit: ResampleUnit::Trial,
            parallel: true,
        }
    }
}

impl BootstrapSpec {
    pub fn pairs(replicates: usize, seed: u64) -> Self {
        BootstrapSpec {
            replicates,
            seed,
            method: BootstrapMethod::Pairs,
            ..Default::default()
        }
    }

    pub fn wild(replicates: usize, seed: u64) -> Self {
        BootstrapSpec {
            replicates,
            seed,
            method: BootstrapMethod::Wild,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 100 {
            return Err(Error::Bootstrap(format!(
                "at least 100 replicates required, got {}",
                self.replicates
            )));
        }
        if !(self.ci_level > 0.5 && self.ci_level < 1.0) {
            return Err(Error::Bootstrap(format!(
                "ci_level {} outside (0.5, 1)",
                self.ci_level
            )));
        }
        Ok(())
    }

    /// Same parameters with an independent seed for a named sub-analysis.
    pub fn for_stream(&self, stream: &str) -> Self {
        BootstrapSpec {
            seed: stream_seed(self.seed, stream),
            ..self.clone()
        }
    }
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replicate `index` of a run seeded with `seed`.
///
/// For a fixed `seed` this is a bijection of `index` (an odd multiplier and a
/// bijective finalizer), so distinct replicates never share a seed.
pub fn derive_replicate_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed).wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Seed for a named stream, e.g. one bootstrap per fuzzer.
pub fn stream_seed(seed: u64, stream: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    derive_replicate_seed(seed ^ mix64(h), u64::MAX)
}

fn replicate_rng(seed: u64, index: u64, attempt: u64) -> ChaCha8Rng {
    let s = derive_replicate_seed(seed, index);
    let s = if attempt == 0 {
        s
    } else {
        derive_replicate_seed(s, attempt)
    };
    ChaCha8Rng::seed_from_u64(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiEntry {
    pub term: String,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// The interval excludes zero.
    pub significant: bool,
}

impl CiEntry {
    pub fn contains(&self, v: f64) -> bool {
        self.ci_low <= v && v <= self.ci_high
    }
}

/// Point estimates with percentile bootstrap intervals, in term order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiTable {
    pub entries: Vec<CiEntry>,
    pub method: BootstrapMethod,
    pub replicates: usize,
    pub ci_level: f64,
    pub seed: u64,
    /// Replicates dropped after exhausting their retries.
    pub skipped: usize,
}

impl CiTable {
    pub fn get(&self, term: &str) -> Option<&CiEntry> {
        self.entries.iter().find(|e| e.term == term)
    }

    /// `term,estimate,ci_low,ci_high,significant`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("term,estimate,ci_low,ci_high,significant\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.term, e.estimate, e.ci_low, e.ci_high, e.significant
            );
        }
        out
    }
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn build_table(
    labels: &[String],
    estimate: &[f64],
    replicates: Vec<Vec<f64>>,
    spec: &BootstrapSpec,
    skipped: usize,
) -> Result<CiTable> {
    if replicates.is_empty() {
        return Err(Error::Bootstrap("no successful replicates".into()));
    }
    let lower_q = (1.0 - spec.ci_level) / 2.0;
    let upper_q = 1.0 - lower_q;
    let mut entries = Vec::with_capacity(labels.len());
    for (j, term) in labels.iter().enumerate() {
        let mut col: Vec<f64> = replicates.iter().map(|r| r[j]).collect();
        col.sort_by(f64::total_cmp);
        let ci_low = quantile_sorted(&col, lower_q);
        let ci_high = quantile_sorted(&col, upper_q);
        entries.push(CiEntry {
            term: term.clone(),
            estimate: estimate[j],
            ci_low,
            ci_high,
            significant: ci_low > 0.0 || ci_high < 0.0,
        });
    }
    Ok(CiTable {
        entries,
        method: spec.method,
        replicates: spec.replicates,
        ci_level: spec.ci_level,
        seed: spec.seed,
        skipped,
    })
}

fn run_replicates<R, F>(spec: &BootstrapSpec, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u64) -> R + Sync + Send,
{
    let n = spec.replicates as u64;
    if spec.parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// Resample rows with replacement, evaluate `statistic` on each resample and
/// report percentile intervals. `statistic(data)` gives the point estimates.
///
/// A replicate whose statistic fails is retried with a fresh derived seed up
/// to [`MAX_RETRIES`] times and then skipped; more than
/// [`MAX_SKIP_FRACTION`] skipped replicates is an error.
pub fn pairs_bootstrap<T, F>(
    data: &[T],
    labels: &[String],
    statistic: F,
    spec: &BootstrapSpec,
) -> Result<CiTable>
where
    T: Clone + Sync,
    F: Fn(&[T]) -> Result<Vec<f64>> + Sync,
{
    spec.validate()?;
    if data.len() < 3 {
        return Err(Error::Bootstrap(format!(
            "at least 3 observations required, got {}",
            data.len()
        )));
    }
    let estimate = statistic(data)?;
    if estimate.len() != labels.len() {
        return Err(Error::Bootstrap(format!(
            "statistic returned {} values for {} labels",
            estimate.len(),
            labels.len()
        )));
    }
    let n = data.len();
    let results: Vec<Option<Vec<f64>>> = run_replicates(spec, |i| {
        for attempt in 0..=MAX_RETRIES {
            let mut rng = replicate_rng(spec.seed, i, attempt);
            let sample: Vec<T> = (0..n).map(|_| data[rng.random_range(0..n)].clone()).collect();
            if let Ok(v) = statistic(&sample) {
                if v.len() == labels.len() && v.iter().all(|x| x.is_finite()) {
                    return Some(v);
                }
            }
        }
        None
    });
    let skipped = results.iter().filter(|r| r.is_none()).count();
    if skipped as f64 > MAX_SKIP_FRACTION * spec.replicates as f64 {
        return Err(Error::Bootstrap(format!(
            "{skipped} of {} replicates failed",
            spec.replicates
        )));
    }
    build_table(labels, &estimate, results.into_iter().flatten().collect(), spec, skipped)
}

/// Draw one wild-bootstrap weight.
pub fn wild_weight<R: Rng + ?Sized>(kind: WildWeights, rng: &mut R) -> f64 {
    match kind {
        WildWeights::Rademacher => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        WildWeights::Mammen => {
            let s5 = 5f64.sqrt();
            let p = (s5 + 1.0) / (2.0 * s5);
            if rng.random::<f64>() < p {
                -(s5 - 1.0) / 2.0
            } else {
                (s5 + 1.0) / 2.0
            }
        }
    }
}

/// Wild bootstrap of OLS coefficients: each replicate refits on
/// `fitted + residual * w` with i.i.d. mean-zero, unit-variance weights `w`.
/// The design is fixed, so its QR factorization is computed once.
pub fn wild_bootstrap(x: &Matrix, y: &[f64], spec: &BootstrapSpec) -> Result<CiTable> {
    wild_inner(x, y, None, spec)
}

/// Wild bootstrap with one weight per cluster; `clusters[i]` is the cluster
/// of row `i`.
pub fn wild_bootstrap_clustered(
    x: &Matrix,
    y: &[f64],
    clusters: &[usize],
    spec: &BootstrapSpec,
) -> Result<CiTable> {
    wild_inner(x, y, Some(clusters), spec)
}

fn dense_clusters(clusters: &[usize], n: usize) -> Result<(Vec<usize>, usize)> {
    if clusters.len() != n {
        return Err(Error::Bootstrap(format!(
            "{} cluster labels for {n} observations",
            clusters.len()
        )));
    }
    let mut ids = std::collections::HashMap::new();
    let dense: Vec<usize> = clusters
        .iter()
        .map(|c| {
            let next = ids.len();
            *ids.entry(*c).or_insert(next)
        })
        .collect();
    Ok((dense, ids.len()))
}

fn wild_inner(
    x: &Matrix,
    y: &[f64],
    clusters: Option<&[usize]>,
    spec: &BootstrapSpec,
) -> Result<CiTable> {
    spec.validate()?;
    let fit = ols_fit(x, y)?;
    let qr = Qr::factor(x)?;
    let clusters = clusters.map(|c| dense_clusters(c, y.len())).transpose()?;
    let reps: Vec<Vec<f64>> = run_replicates(spec, |i| {
        let mut rng = replicate_rng(spec.seed, i, 0);
        let ystar: Vec<f64> = match &clusters {
            None => fit
                .fitted
                .iter()
                .zip(&fit.residuals)
                .map(|(f, e)| f + e * wild_weight(spec.wild_weights, &mut rng))
                .collect(),
            Some((ids, k)) => {
                let w: Vec<f64> = (0..*k).map(|_| wild_weight(spec.wild_weights, &mut rng)).collect();
                (0..y.len())
                    .map(|r| fit.fitted[r] + fit.residuals[r] * w[ids[r]])
                    .collect()
            }
        };
        qr.solve(&ystar)
    });
    build_table(x.labels(), &fit.coefficients, reps, spec, 0)
}

/// Pairs bootstrap of OLS coefficients (rows resampled, design refit).
pub fn pairs_ols_bootstrap(x: &Matrix, y: &[f64], spec: &BootstrapSpec) -> Result<CiTable> {
    let groups: Vec<Vec<usize>> = (0..x.rows()).map(|i| vec![i]).collect();
    pairs_groups(x, y, &groups, spec)
}

/// Pairs bootstrap resampling whole clusters.
pub fn pairs_ols_bootstrap_clustered(
    x: &Matrix,
    y: &[f64],
    clusters: &[usize],
    spec: &BootstrapSpec,
) -> Result<CiTable> {
    let (ids, k) = dense_clusters(clusters, y.len())?;
    let mut groups = vec![Vec::new(); k];
    for (r, c) in ids.into_iter().enumerate() {
        groups[c].push(r);
    }
    pairs_groups(x, y, &groups, spec)
}

fn pairs_groups(x: &Matrix, y: &[f64], groups: &[Vec<usize>], spec: &BootstrapSpec) -> Result<CiTable> {
    let labels = x.labels().to_vec();
    pairs_bootstrap(
        groups,
        &labels,
        |gs| {
            let idx: Vec<usize> = gs.iter().flatten().copied().collect();
            let xs = x.select_rows(&idx);
            let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            Ok(ols_fit(&xs, &ys)?.coefficients)
        },
        spec,
    )
}

/// Bootstrap OLS coefficients with `spec.method`, observation-wise.
pub fn bootstrap_ols(x: &Matrix, y: &[f64], spec: &BootstrapSpec) -> Result<CiTable> {
    match spec.method {
        BootstrapMethod::Wild => wild_bootstrap(x, y, spec),
        BootstrapMethod::Pairs => pairs_ols_bootstrap(x, y, spec),
    }
}

/// Bootstrap OLS coefficients with `spec.method`, treating rows with equal
/// cluster labels as one unit.
pub fn bootstrap_ols_clustered(
    x: &Matrix,
    y: &[f64],
    clusters: &[usize],
    spec: &BootstrapSpec,
) -> Result<CiTable> {
    match spec.method {
        BootstrapMethod::Wild => wild_bootstrap_clustered(x, y, clusters, spec),
        BootstrapMethod::Pairs => pairs_ols_bootstrap_clustered(x, y, clusters, spec),
    }
}
