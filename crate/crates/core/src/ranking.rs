//! Rank transformation with average ranks for ties.
//!
//! Ranks are ascending: the smallest value gets rank 1. For fuzzer ranks this
//! means rank `|fuzzers|` is the fuzzer with the most coverage in a trial, so a
//! higher rank is better and a negative regression coefficient reads as
//! "ranking worsens".

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PropertyKey, PropertyLevel};
use crate::error::{Error, Result};

/// Set of observations a rank is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankScope {
    /// Over the trials of one program (1..=trials per program).
    WithinProgram,
    /// Over all trials in the dataset.
    Global,
    /// Over programs (1..=programs); only for properties that are constant
    /// within each program.
    Program,
}

impl RankScope {
    pub fn as_str(self) -> &'static str {
        match self {
            RankScope::WithinProgram => "within",
            RankScope::Global => "global",
            RankScope::Program => "program",
        }
    }
}

impl fmt::Display for RankScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RankScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "within" | "within_program" | "within-program" => Ok(RankScope::WithinProgram),
            "global" => Ok(RankScope::Global),
            "program" => Ok(RankScope::Program),
            other => Err(Error::Unknown {
                kind: "rank scope",
                name: other.to_string(),
            }),
        }
    }
}

/// Average ("fractional") ranks, ascending.
///
/// The rank of an element is the number of strictly smaller elements plus
/// `(1 + number of equal elements) / 2`.
pub fn fractional_ranks(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("cannot rank an empty sample"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("cannot rank non-finite value {v}")));
    }
    Ok(ranks_unchecked(values))
}

pub(crate) fn ranks_unchecked(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        // positions start..=end hold ranks start+1..=end+1
        let avg = (start + end + 2) as f64 / 2.0;
        for &i in &order[start..=end] {
            ranks[i] = avg;
        }
        start = end + 1;
    }
    ranks
}

/// Rank of each fuzzer among the fuzzers of its (program, trial), by
/// performance. Keyed by (program, trial, fuzzer).
pub fn fuzzer_ranks_per_trial(d: &Dataset) -> BTreeMap<(String, u64, String), f64> {
    let per_row = fuzzer_rank_rows(d);
    d.trials()
        .iter()
        .zip(per_row)
        .map(|(t, r)| ((t.program.clone(), t.trial, t.fuzzer.clone()), r))
        .collect()
}

fn fuzzer_rank_rows(d: &Dataset) -> Vec<f64> {
    let mut out = vec![0.0; d.len()];
    for unit in d.units() {
        let perf: Vec<f64> = unit.rows.iter().map(|&i| d.trials()[i].performance).collect();
        for (&i, r) in unit.rows.iter().zip(ranks_unchecked(&perf)) {
            out[i] = r;
        }
    }
    out
}

/// A dataset with rank-transformed properties and responses. All rank vectors
/// are per row, aligned with `base().trials()`.
#[derive(Debug, Clone)]
pub struct RankedDataset {
    base: Dataset,
    property_ranks: BTreeMap<(PropertyKey, RankScope), Vec<f64>>,
    perf_ranks: BTreeMap<RankScope, Vec<f64>>,
    fuzzer_rank: Vec<f64>,
}

/// Rank the requested properties at `scope`, performance at the within-program
/// and global scopes, and fuzzers within each trial.
pub fn rank_dataset(d: &Dataset, keys: &[PropertyKey], scope: RankScope) -> Result<RankedDataset> {
    let mut rd = RankedDataset::new(d.clone())?;
    rd.add_ranks(keys, scope)?;
    Ok(rd)
}

impl RankedDataset {
    pub fn new(base: Dataset) -> Result<Self> {
        if base.is_empty() {
            return Err(Error::invalid("cannot rank an empty dataset"));
        }
        let perf: Vec<f64> = base.trials().iter().map(|t| t.performance).collect();
        let mut perf_ranks = BTreeMap::new();
        perf_ranks.insert(RankScope::Global, fractional_ranks(&perf)?);
        let mut within = vec![0.0; base.len()];
        for rows in rows_by_program(&base).values() {
            let vals: Vec<f64> = rows.iter().map(|&i| perf[i]).collect();
            for (&i, r) in rows.iter().zip(ranks_unchecked(&vals)) {
                within[i] = r;
            }
        }
        perf_ranks.insert(RankScope::WithinProgram, within);
        let fuzzer_rank = fuzzer_rank_rows(&base);
        Ok(RankedDataset {
            base,
            property_ranks: BTreeMap::new(),
            perf_ranks,
            fuzzer_rank,
        })
    }

    /// Rank every key in `keys` at its natural scope: program-level
    /// properties over programs, corpus properties within programs.
    pub fn with_natural_ranks(base: Dataset, keys: &[PropertyKey]) -> Result<Self> {
        let mut rd = RankedDataset::new(base)?;
        for k in keys {
            let scope = rd.natural_scope(k);
            rd.add_ranks(std::slice::from_ref(k), scope)?;
        }
        Ok(rd)
    }

    pub fn base(&self) -> &Dataset {
        &self.base
    }

    /// Program-level properties rank over programs, everything else within
    /// programs.
    pub fn natural_scope(&self, key: &PropertyKey) -> RankScope {
        match self.base.property_level(key) {
            PropertyLevel::Program => RankScope::Program,
            PropertyLevel::Corpus => RankScope::WithinProgram,
        }
    }

    pub fn add_ranks(&mut self, keys: &[PropertyKey], scope: RankScope) -> Result<()> {
        for key in keys {
            if self.property_ranks.contains_key(&(key.clone(), scope)) {
                continue;
            }
            let ranks = rank_property(&self.base, key, scope)?;
            self.property_ranks.insert((key.clone(), scope), ranks);
        }
        Ok(())
    }

    pub fn property_rank(&self, key: &PropertyKey, scope: RankScope) -> Result<&[f64]> {
        self.property_ranks
            .get(&(key.clone(), scope))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingRank {
                key: key.to_string(),
                scope: scope.to_string(),
            })
    }

    pub fn ranked_properties(&self) -> impl Iterator<Item = &(PropertyKey, RankScope)> {
        self.property_ranks.keys()
    }

    /// Performance rank; only defined for the within-program and global scopes.
    pub fn perf_rank(&self, scope: RankScope) -> Result<&[f64]> {
        self.perf_ranks
            .get(&scope)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingRank {
                key: "performance".into(),
                scope: scope.to_string(),
            })
    }

    /// Rank of each row's fuzzer within its trial, in `[1, |fuzzers|]`.
    pub fn fuzzer_rank(&self) -> &[f64] {
        &self.fuzzer_rank
    }

    /// Mean fuzzer rank per fuzzer across all trials, in fuzzer order.
    pub fn mean_fuzzer_ranks(&self) -> Vec<(String, f64)> {
        let mut sums: HashMap<&str, (f64, usize)> = HashMap::new();
        for (t, r) in self.base.trials().iter().zip(&self.fuzzer_rank) {
            let e = sums.entry(&t.fuzzer).or_insert((0.0, 0));
            e.0 += r;
            e.1 += 1;
        }
        self.base
            .fuzzers()
            .iter()
            .map(|f| {
                let (s, n) = sums[f.as_str()];
                (f.clone(), s / n as f64)
            })
            .collect()
    }

    /// First row of each (program, trial), in order of first appearance.
    /// Properties are identical across the fuzzers of a trial, so these rows
    /// represent the trial-level observations.
    pub fn trial_rows(&self) -> Vec<usize> {
        self.base.units().into_iter().map(|u| u.rows[0]).collect()
    }
}

fn rows_by_program(d: &Dataset) -> BTreeMap<usize, Vec<usize>> {
    let index: HashMap<&str, usize> = d
        .programs()
        .iter()
        .enumerate()
        .map(|(i, p)| (p.as_str(), i))
        .collect();
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, t) in d.trials().iter().enumerate() {
        out.entry(index[t.program.as_str()]).or_default().push(i);
    }
    out
}

fn rank_property(d: &Dataset, key: &PropertyKey, scope: RankScope) -> Result<Vec<f64>> {
    let units = d.units();
    let mut unit_values = Vec::with_capacity(units.len());
    for u in &units {
        let first = &d.trials()[u.rows[0]];
        let v = first.property(key).ok_or_else(|| {
            Error::invalid(format!(
                "property `{key}` missing on program `{}` trial {}",
                u.key.program, u.key.trial
            ))
        })?;
        if !v.is_finite() {
            return Err(Error::invalid(format!("property `{key}` is not finite")));
        }
        unit_values.push(v);
    }

    let unit_ranks: Vec<f64> = match scope {
        RankScope::Global => ranks_unchecked(&unit_values),
        RankScope::WithinProgram => {
            let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (ui, u) in units.iter().enumerate() {
                groups.entry(&u.key.program).or_default().push(ui);
            }
            let mut out = vec![0.0; units.len()];
            for members in groups.values() {
                let vals: Vec<f64> = members.iter().map(|&ui| unit_values[ui]).collect();
                for (&ui, r) in members.iter().zip(ranks_unchecked(&vals)) {
                    out[ui] = r;
                }
            }
            out
        }
        RankScope::Program => {
            let mut per_program: Vec<(&str, f64)> = Vec::new();
            for (u, &v) in units.iter().zip(&unit_values) {
                match per_program.iter().find(|(p, _)| *p == u.key.program) {
                    Some(&(_, prev)) if prev != v => {
                        return Err(Error::invalid(format!(
                            "property `{key}` varies within program `{}`; \
                             program-level ranks need a per-program constant",
                            u.key.program
                        )))
                    }
                    Some(_) => {}
                    None => per_program.push((&u.key.program, v)),
                }
            }
            let vals: Vec<f64> = per_program.iter().map(|(_, v)| *v).collect();
            let ranks = ranks_unchecked(&vals);
            let lookup: HashMap<&str, f64> = per_program
                .iter()
                .zip(ranks)
                .map(|((p, _), r)| (*p, r))
                .collect();
            units.iter().map(|u| lookup[u.key.program.as_str()]).collect()
        }
    };

    let mut out = vec![0.0; d.len()];
    for (u, r) in units.iter().zip(unit_ranks) {
        for &i in &u.rows {
            out[i] = r;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TrialRecord;
    use proptest::prelude::*;

    // Counting definition, independent of the sort-and-scan path.
    fn oracle(values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .map(|&v| {
                let smaller = values.iter().filter(|&&w| w < v).count() as f64;
                let equal = values.iter().filter(|&&w| w == v).count() as f64;
                smaller + (1.0 + equal) / 2.0
            })
            .collect()
    }

    #[test]
    fn examples() {
        assert_eq!(fractional_ranks(&[10.0, 20.0, 30.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(fractional_ranks(&[3.0, 1.0, 3.0]).unwrap(), vec![2.5, 1.0, 2.5]);
        assert_eq!(fractional_ranks(&[5.0; 4]).unwrap(), vec![2.5; 4]);
    }

    #[test]
    fn errors() {
        assert!(fractional_ranks(&[]).is_err());
        assert!(fractional_ranks(&[1.0, f64::NAN]).is_err());
        assert!(fractional_ranks(&[f64::INFINITY]).is_err());
    }

    fn rec(program: &str, fuzzer: &str, trial: u64, perf: f64, props: &[(PropertyKey, f64)]) -> TrialRecord {
        TrialRecord {
            program: program.into(),
            fuzzer: fuzzer.into(),
            trial,
            properties: props.iter().cloned().collect(),
            performance: perf,
        }
    }

    #[test]
    fn within_program_seed_count() {
        let rows = [10.0, 30.0, 20.0]
            .iter()
            .enumerate()
            .flat_map(|(t, &s)| {
                ["a", "b"].map(|f| rec("p", f, t as u64, 1.0, &[(PropertyKey::SeedCount, s)]))
            })
            .collect();
        let d = Dataset::new(rows).unwrap();
        let rd = rank_dataset(&d, &[PropertyKey::SeedCount], RankScope::WithinProgram).unwrap();
        let r = rd.property_rank(&PropertyKey::SeedCount, RankScope::WithinProgram).unwrap();
        assert_eq!(r, &[1.0, 1.0, 3.0, 3.0, 2.0, 2.0]);
    }

    #[test]
    fn global_program_size_tie_blocks() {
        let mut rows = Vec::new();
        for (p, size) in [("small", 100.0), ("big", 900.0)] {
            for t in 0..2 {
                rows.push(rec(p, "a", t, 1.0, &[(PropertyKey::ProgramTextBytes, size)]));
            }
        }
        let d = Dataset::new(rows).unwrap();
        let rd = rank_dataset(&d, &[PropertyKey::ProgramTextBytes], RankScope::Global).unwrap();
        let r = rd.property_rank(&PropertyKey::ProgramTextBytes, RankScope::Global).unwrap();
        assert_eq!(r, &[1.5, 1.5, 3.5, 3.5]);
        let rd = rank_dataset(&d, &[PropertyKey::ProgramTextBytes], RankScope::Program).unwrap();
        let r = rd.property_rank(&PropertyKey::ProgramTextBytes, RankScope::Program).unwrap();
        assert_eq!(r, &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn program_scope_rejects_varying_property() {
        let rows = vec![
            rec("p", "a", 0, 1.0, &[(PropertyKey::SeedCount, 1.0)]),
            rec("p", "a", 1, 1.0, &[(PropertyKey::SeedCount, 2.0)]),
        ];
        let d = Dataset::new(rows).unwrap();
        assert!(rank_dataset(&d, &[PropertyKey::SeedCount], RankScope::Program).is_err());
    }

    #[test]
    fn missing_key_is_error() {
        let rows = vec![
            rec("p", "a", 0, 1.0, &[(PropertyKey::SeedCount, 1.0)]),
            rec("p", "a", 1, 1.0, &[]),
        ];
        let d = Dataset::new(rows).unwrap();
        assert!(rank_dataset(&d, &[PropertyKey::SeedCount], RankScope::WithinProgram).is_err());
    }

    #[test]
    fn fuzzer_rank_examples() {
        let perf = [("A", 100.0), ("B", 200.0), ("C", 150.0), ("D", 50.0)];
        let rows = perf.iter().map(|&(f, v)| rec("p", f, 0, v, &[])).collect();
        let ranks = fuzzer_ranks_per_trial(&Dataset::new(rows).unwrap());
        let get = |f: &str| ranks[&("p".to_string(), 0, f.to_string())];
        assert_eq!((get("A"), get("B"), get("C"), get("D")), (2.0, 4.0, 3.0, 1.0));

        let rows = ["A", "B", "C", "D"].iter().map(|f| rec("p", f, 0, 100.0, &[])).collect();
        let ranks = fuzzer_ranks_per_trial(&Dataset::new(rows).unwrap());
        assert!(ranks.values().all(|&r| r == 2.5));
    }

    proptest! {
        #[test]
        fn matches_counting_oracle(values in prop::collection::vec(-5i32..5, 1..30)) {
            let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
            prop_assert_eq!(fractional_ranks(&v).unwrap(), oracle(&v));
        }

        #[test]
        fn rank_sum_conserved(values in prop::collection::vec(-1e6f64..1e6, 1..50)) {
            let n = values.len() as f64;
            let s: f64 = fractional_ranks(&values).unwrap().iter().sum();
            prop_assert!((s - n * (n + 1.0) / 2.0).abs() < 1e-9);
        }

        #[test]
        fn monotone_invariance(values in prop::collection::vec(-20i32..20, 1..40), a in 0.1f64..5.0, b in -10.0f64..10.0) {
            let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
            let t: Vec<f64> = v.iter().map(|x| (a * x + b).exp().ln_1p() + x.powi(3)).collect();
            prop_assert_eq!(fractional_ranks(&v).unwrap(), fractional_ranks(&t).unwrap());
        }

        #[test]
        fn permutation_equivariance(values in prop::collection::vec(-10i32..10, 1..30), seed in any::<u64>()) {
            let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
            let mut perm: Vec<usize> = (0..v.len()).collect();
            // deterministic shuffle from the seed
            let mut s = seed;
            for i in (1..perm.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let permuted: Vec<f64> = perm.iter().map(|&i| v[i]).collect();
            let r = fractional_ranks(&v).unwrap();
            let rp = fractional_ranks(&permuted).unwrap();
            for (j, &i) in perm.iter().enumerate() {
                prop_assert_eq!(rp[j], r[i]);
            }
        }
    }
}
