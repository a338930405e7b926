//! Corpus manifests: one CSV row per seed,
//! `seed_id,size_bytes,exec_ns,covered`, where `covered` lists branch ids
//! separated by `;`. An optional first line `#universe=<N>` gives the total
//! branch count.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::data::{PropertyKey, INIT_COVERAGE_FRACTION};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub id: String,
    pub size_bytes: u64,
    pub exec_ns: f64,
    pub covered: BTreeSet<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub entries: Vec<SeedEntry>,
    pub universe: Option<u64>,
}

impl CorpusManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::invalid(format!("duplicate seed id `{}`", e.id)));
            }
            if !(e.exec_ns.is_finite() && e.exec_ns >= 0.0) {
                return Err(Error::invalid(format!(
                    "seed `{}` has invalid execution time {}",
                    e.id, e.exec_ns
                )));
            }
            if let (Some(u), Some(&max)) = (self.universe, e.covered.last()) {
                if max >= u {
                    return Err(Error::invalid(format!(
                        "seed `{}` covers branch {max}, outside the universe of {u}",
                        e.id
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn parse_manifest(text: &str) -> Result<CorpusManifest> {
    let mut universe = None;
    let mut body = text;
    let mut line_offset: u64 = 0;
    if let Some(first) = text.lines().next() {
        if let Some(rest) = first.trim().strip_prefix("#universe=") {
            universe = Some(rest.trim().parse::<u64>().map_err(|e| Error::Parse {
                line: 1,
                message: format!("invalid universe `{rest}`: {e}"),
            })?);
            body = text.split_once('\n').map_or("", |(_, b)| b);
            line_offset = 1;
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = rdr.headers()?.clone();
    let expected = ["seed_id", "size_bytes", "exec_ns", "covered"];
    if headers.iter().ne(expected) {
        return Err(Error::Parse {
            line: line_offset + 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_offset + rec.position().map_or(0, |p| p.line());
        let perr = |message: String| Error::Parse { line, message };
        let size_bytes = rec[1]
            .parse::<u64>()
            .map_err(|e| perr(format!("size_bytes `{}`: {e}", &rec[1])))?;
        let exec_ns = rec[2]
            .parse::<f64>()
            .map_err(|e| perr(format!("exec_ns `{}`: {e}", &rec[2])))?;
        let covered = rec[3]
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<u64>().map_err(|e| perr(format!("branch id `{s}`: {e}"))))
            .collect::<Result<BTreeSet<u64>>>()?;
        entries.push(SeedEntry {
            id: rec[0].to_string(),
            size_bytes,
            exec_ns,
            covered,
        });
    }
    let m = CorpusManifest { entries, universe };
    m.validate()?;
    Ok(m)
}

/// Seed count, mean seed size, mean execution time, total size and the size
/// of the union of covered branches (also as a fraction of the universe when
/// one is given).
pub fn corpus_properties(m: &CorpusManifest) -> Result<BTreeMap<PropertyKey, f64>> {
    if m.entries.is_empty() {
        return Err(Error::invalid("empty corpus manifest"));
    }
    m.validate()?;
    let n = m.entries.len() as f64;
    let total: u64 = m.entries.iter().map(|e| e.size_bytes).sum();
    let exec: f64 = m.entries.iter().map(|e| e.exec_ns).sum();
    let union: BTreeSet<u64> = m.entries.iter().flat_map(|e| e.covered.iter().copied()).collect();
    let mut out = BTreeMap::from([
        (PropertyKey::SeedCount, n),
        (PropertyKey::MeanSeedBytes, total as f64 / n),
        (PropertyKey::MeanExecNs, exec / n),
        (PropertyKey::CorpusTotalBytes, total as f64),
        (PropertyKey::InitCoverage, union.len() as f64),
    ]);
    if let Some(u) = m.universe {
        if u > 0 {
            out.insert(
                PropertyKey::Custom(INIT_COVERAGE_FRACTION.to_string()),
                union.len() as f64 / u as f64,
            );
        }
    }
    Ok(out)
}
