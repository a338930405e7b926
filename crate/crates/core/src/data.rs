//! Trial records, benchmark-property vocabulary and dataset loading.
//!
//! The canonical exchange format is a long CSV with one row per
//! (program, fuzzer, trial):
//!
//! ```text
//! program,fuzzer,trial,performance,<property columns...>
//! ```
//!
//! Benchmark properties describe the program and the initial corpus of a
//! trial, so they are duplicated on every fuzzer's row and must agree across
//! the fuzzers of a trial. An empty cell means the property is absent.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Name of a benchmark property.
///
/// The well-known properties have dedicated variants; anything else is kept
/// verbatim as [`PropertyKey::Custom`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PropertyKey {
    SeedCount,
    InitCoverage,
    MeanExecNs,
    MeanSeedBytes,
    CorpusTotalBytes,
    ProgramTextBytes,
    EqProportion,
    IneqProportion,
    ExternCallProportion,
    Custom(String),
}

/// Whether a property describes the initial corpus of a trial or the program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyLevel {
    Corpus,
    Program,
}

/// Custom key emitted by corpus analysis when the branch universe is known.
pub const INIT_COVERAGE_FRACTION: &str = "init_coverage_fraction";

impl PropertyKey {
    pub const KNOWN: [PropertyKey; 9] = [
        PropertyKey::SeedCount,
        PropertyKey::InitCoverage,
        PropertyKey::MeanExecNs,
        PropertyKey::MeanSeedBytes,
        PropertyKey::CorpusTotalBytes,
        PropertyKey::ProgramTextBytes,
        PropertyKey::EqProportion,
        PropertyKey::IneqProportion,
        PropertyKey::ExternCallProportion,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            PropertyKey::SeedCount => "seed_count",
            PropertyKey::InitCoverage => "init_coverage",
            PropertyKey::MeanExecNs => "mean_exec_ns",
            PropertyKey::MeanSeedBytes => "mean_seed_bytes",
            PropertyKey::CorpusTotalBytes => "corpus_total_bytes",
            PropertyKey::ProgramTextBytes => "program_text_bytes",
            PropertyKey::EqProportion => "eq_proportion",
            PropertyKey::IneqProportion => "ineq_proportion",
            PropertyKey::ExternCallProportion => "extern_call_proportion",
            PropertyKey::Custom(name) => name,
        }
    }

    /// Keys whose values must lie in `[0, 1]`.
    pub fn is_proportion(&self) -> bool {
        match self {
            PropertyKey::EqProportion
            | PropertyKey::IneqProportion
            | PropertyKey::ExternCallProportion => true,
            PropertyKey::Custom(name) => name == INIT_COVERAGE_FRACTION,
            _ => false,
        }
    }

    /// Level of a well-known key; `None` for custom keys.
    pub fn known_level(&self) -> Option<PropertyLevel> {
        match self {
            PropertyKey::SeedCount
            | PropertyKey::InitCoverage
            | PropertyKey::MeanExecNs
            | PropertyKey::MeanSeedBytes
            | PropertyKey::CorpusTotalBytes => Some(PropertyLevel::Corpus),
            PropertyKey::ProgramTextBytes
            | PropertyKey::EqProportion
            | PropertyKey::IneqProportion
            | PropertyKey::ExternCallProportion => Some(PropertyLevel::Program),
            PropertyKey::Custom(name) if name == INIT_COVERAGE_FRACTION => {
                Some(PropertyLevel::Corpus)
            }
            PropertyKey::Custom(_) => None,
        }
    }
}

impl fmt::Display for PropertyKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PropertyKey {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(PropertyKey::KNOWN
            .iter()
            .find(|k| k.as_str() == s)
            .cloned()
            .unwrap_or_else(|| PropertyKey::Custom(s.to_string())))
    }
}

impl From<&str> for PropertyKey {
    fn from(s: &str) -> Self {
        s.parse().unwrap()
    }
}

impl Serialize for PropertyKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for PropertyKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(PropertyKey::from(s.as_str()))
    }
}

/// One fuzzing campaign of one fuzzer on one (program, initial corpus).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub program: String,
    pub fuzzer: String,
    pub trial: u64,
    pub properties: BTreeMap<PropertyKey, f64>,
    /// Branches covered at the end of the campaign.
    pub performance: f64,
}

impl TrialRecord {
    pub fn property(&self, key: &PropertyKey) -> Option<f64> {
        self.properties.get(key).copied()
    }
}

/// File format accepted by [`load_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Json,
}

impl DataFormat {
    /// Guess from the file extension; anything but `.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => DataFormat::Json,
            _ => DataFormat::Csv,
        }
    }
}

/// Coordinates of one trial: a program and a trial index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrialKey {
    pub program: String,
    pub trial: u64,
}

/// All rows of one (program, trial): the fuzzers that started from the same
/// initial corpus.
#[derive(Debug, Clone)]
pub struct TrialUnit {
    pub key: TrialKey,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    trials: Vec<TrialRecord>,
    fuzzers: Vec<String>,
    programs: Vec<String>,
    columns: Vec<PropertyKey>,
}

impl Dataset {
    /// Build and validate. Fails with the first few diagnostics if any
    /// invariant is violated.
    pub fn new(trials: Vec<TrialRecord>) -> Result<Self> {
        let d = Self::new_unchecked(trials);
        let diags = validate_dataset(&d);
        if diags.is_empty() {
            Ok(d)
        } else {
            let shown: Vec<String> = diags.iter().take(5).map(|d| d.to_string()).collect();
            let more = diags.len().saturating_sub(shown.len());
            let mut msg = shown.join("; ");
            if more > 0 {
                msg.push_str(&format!(" (and {more} more)"));
            }
            Err(Error::InvalidDataset(msg))
        }
    }

    /// Build without checking invariants; use [`validate_dataset`] to inspect.
    pub fn new_unchecked(trials: Vec<TrialRecord>) -> Self {
        let mut fuzzers = Vec::new();
        let mut programs = Vec::new();
        let mut columns = Vec::new();
        let mut seen_f = BTreeSet::new();
        let mut seen_p = BTreeSet::new();
        let mut seen_c = BTreeSet::new();
        for t in &trials {
            if seen_f.insert(t.fuzzer.clone()) {
                fuzzers.push(t.fuzzer.clone());
            }
            if seen_p.insert(t.program.clone()) {
                programs.push(t.program.clone());
            }
            for k in t.properties.keys() {
                if seen_c.insert(k.clone()) {
                    columns.push(k.clone());
                }
            }
        }
        Dataset {
            trials,
            fuzzers,
            programs,
            columns,
        }
    }

    fn with_columns(mut self, columns: Vec<PropertyKey>) -> Self {
        // keep file order, then anything not in the header
        let mut ordered: Vec<PropertyKey> = Vec::new();
        for c in columns.into_iter().chain(self.columns.iter().cloned()) {
            if !ordered.contains(&c) {
                ordered.push(c);
            }
        }
        self.columns = ordered;
        self
    }

    pub fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Fuzzer ids in order of first appearance.
    pub fn fuzzers(&self) -> &[String] {
        &self.fuzzers
    }

    /// Program ids in order of first appearance.
    pub fn programs(&self) -> &[String] {
        &self.programs
    }

    /// Property columns in file order.
    pub fn property_keys(&self) -> &[PropertyKey] {
        &self.columns
    }

    /// Group rows by (program, trial), in order of first appearance.
    pub fn units(&self) -> Vec<TrialUnit> {
        let mut index: HashMap<TrialKey, usize> = HashMap::new();
        let mut units: Vec<TrialUnit> = Vec::new();
        for (i, t) in self.trials.iter().enumerate() {
            let key = TrialKey {
                program: t.program.clone(),
                trial: t.trial,
            };
            match index.get(&key) {
                Some(&u) => units[u].rows.push(i),
                None => {
                    index.insert(key.clone(), units.len());
                    units.push(TrialUnit { key, rows: vec![i] });
                }
            }
        }
        units
    }

    /// Level of a property in this dataset: known keys use their fixed level,
    /// custom keys are program-level when constant within every program.
    pub fn property_level(&self, key: &PropertyKey) -> PropertyLevel {
        if let Some(level) = key.known_level() {
            return level;
        }
        let mut per_program: HashMap<&str, f64> = HashMap::new();
        for t in &self.trials {
            if let Some(v) = t.property(key) {
                match per_program.get(t.program.as_str()) {
                    Some(&prev) if prev != v => return PropertyLevel::Corpus,
                    _ => {
                        per_program.insert(&t.program, v);
                    }
                }
            }
        }
        PropertyLevel::Program
    }

    /// Serialize to the canonical CSV schema.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![
            "program".to_string(),
            "fuzzer".to_string(),
            "trial".to_string(),
            "performance".to_string(),
        ];
        header.extend(self.columns.iter().map(|c| c.to_string()));
        w.write_record(&header)?;
        for t in &self.trials {
            let mut row = vec![
                t.program.clone(),
                t.fuzzer.clone(),
                t.trial.to_string(),
                format_number(t.performance),
            ];
            for c in &self.columns {
                row.push(t.property(c).map(format_number).unwrap_or_default());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Serialize to the JSON schema: an array of flat objects.
    pub fn to_json_value(&self) -> serde_json::Value {
        let rows = self
            .trials
            .iter()
            .map(|t| {
                let mut obj = serde_json::Map::new();
                obj.insert("program".into(), t.program.clone().into());
                obj.insert("fuzzer".into(), t.fuzzer.clone().into());
                obj.insert("trial".into(), t.trial.into());
                obj.insert("performance".into(), t.performance.into());
                for c in &self.columns {
                    if let Some(v) = t.property(c) {
                        obj.insert(c.to_string(), v.into());
                    }
                }
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::Value::Array(rows)
    }
}

/// Shortest decimal that round-trips to the same `f64`.
pub fn format_number(v: f64) -> String {
    format!("{v}")
}

const FIXED_COLUMNS: [&str; 4] = ["program", "fuzzer", "trial", "performance"];

/// Load and validate a dataset from a file.
pub fn load_dataset(path: &Path, format: DataFormat) -> Result<Dataset> {
    let d = read_dataset(path, format)?;
    let columns = d.columns.clone();
    Ok(Dataset::new(d.trials)?.with_columns(columns))
}

/// Parse a file without checking dataset invariants.
pub fn read_dataset(path: &Path, format: DataFormat) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_from(file, format)
}

/// Parse from any reader without checking dataset invariants.
pub fn read_dataset_from<R: Read>(reader: R, format: DataFormat) -> Result<Dataset> {
    match format {
        DataFormat::Csv => read_csv(reader),
        DataFormat::Json => read_json(reader),
    }
}

/// Parse and validate from a reader.
pub fn parse_dataset<R: Read>(reader: R, format: DataFormat) -> Result<Dataset> {
    let d = read_dataset_from(reader, format)?;
    let columns = d.columns.clone();
    Ok(Dataset::new(d.trials)?.with_columns(columns))
}

fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut col_index = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if col_index.insert(h.to_string(), i).is_some() {
            return Err(Error::Parse {
                line: 1,
                message: format!("duplicate column `{h}`"),
            });
        }
    }
    for c in FIXED_COLUMNS {
        if !col_index.contains_key(c) {
            return Err(Error::Parse {
                line: 1,
                message: format!("missing required column `{c}`"),
            });
        }
    }
    let property_cols: Vec<(usize, PropertyKey)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !FIXED_COLUMNS.contains(h))
        .map(|(i, h)| (i, PropertyKey::from(h)))
        .collect();

    let mut trials = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |name: &str| record.get(col_index[name]).unwrap_or("");
        let perr = |message: String| Error::Parse { line, message };

        let program = field("program").to_string();
        let fuzzer = field("fuzzer").to_string();
        if program.is_empty() || fuzzer.is_empty() {
            return Err(perr("empty program or fuzzer id".into()));
        }
        let trial: u64 = field("trial")
            .parse()
            .map_err(|_| perr(format!("trial `{}` is not a non-negative integer", field("trial"))))?;
        let performance: f64 = field("performance")
            .parse()
            .map_err(|_| perr(format!("performance `{}` is not a number", field("performance"))))?;
        let mut properties = BTreeMap::new();
        for (i, key) in &property_cols {
            let raw = record.get(*i).unwrap_or("");
            if raw.is_empty() {
                continue;
            }
            let v: f64 = raw
                .parse()
                .map_err(|_| perr(format!("property `{key}` value `{raw}` is not a number")))?;
            properties.insert(key.clone(), v);
        }
        trials.push(TrialRecord {
            program,
            fuzzer,
            trial,
            properties,
            performance,
        });
    }
    let columns = property_cols.into_iter().map(|(_, k)| k).collect();
    Ok(Dataset::new_unchecked(trials).with_columns(columns))
}

fn read_json<R: Read>(reader: R) -> Result<Dataset> {
    let value: serde_json::Value = serde_json::from_reader(reader)?;
    let rows = value.as_array().ok_or_else(|| Error::Parse {
        line: 0,
        message: "expected a JSON array of trial objects".into(),
    })?;
    let mut trials = Vec::with_capacity(rows.len());
    let mut columns: Vec<PropertyKey> = Vec::new();
    for (idx, row) in rows.iter().enumerate() {
        // records are numbered from 1
        let line = idx as u64 + 1;
        let perr = |message: String| Error::Parse { line, message };
        let obj = row
            .as_object()
            .ok_or_else(|| perr("record is not an object".into()))?;
        let string_field = |name: &str| -> Result<String> {
            match obj.get(name) {
                Some(serde_json::Value::String(s)) if !s.is_empty() => Ok(s.clone()),
                _ => Err(perr(format!("missing or invalid `{name}`"))),
            }
        };
        let program = string_field("program")?;
        let fuzzer = string_field("fuzzer")?;
        let trial = obj
            .get("trial")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| perr("missing or invalid `trial`".into()))?;
        let performance = json_number(obj.get("performance"))
            .ok_or_else(|| perr("missing or invalid `performance`".into()))?;
        let mut properties = BTreeMap::new();
        for (name, v) in obj {
            if FIXED_COLUMNS.contains(&name.as_str()) || v.is_null() {
                continue;
            }
            let key = PropertyKey::from(name.as_str());
            let num = json_number(Some(v))
                .ok_or_else(|| perr(format!("property `{name}` is not a number")))?;
            if !columns.contains(&key) {
                columns.push(key.clone());
            }
            properties.insert(key, num);
        }
        trials.push(TrialRecord {
            program,
            fuzzer,
            trial,
            properties,
            performance,
        });
    }
    Ok(Dataset::new_unchecked(trials).with_columns(columns))
}

fn json_number(v: Option<&serde_json::Value>) -> Option<f64> {
    match v? {
        serde_json::Value::Number(n) => n.as_f64(),
        // allow "NaN"/"inf" spelled as strings so validation can report them
        serde_json::Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Empty,
    DuplicateTrial,
    NonFinite,
    NegativePerformance,
    ProportionOutOfRange,
    UnbalancedPanel,
    PropertyMismatch,
}

/// One dataset invariant violation with its coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub program: Option<String>,
    pub trial: Option<u64>,
    pub fuzzer: Option<String>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut coords = Vec::new();
        if let Some(p) = &self.program {
            coords.push(format!("program={p}"));
        }
        if let Some(t) = self.trial {
            coords.push(format!("trial={t}"));
        }
        if let Some(z) = &self.fuzzer {
            coords.push(format!("fuzzer={z}"));
        }
        if let Some(k) = &self.key {
            coords.push(format!("key={k}"));
        }
        if coords.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "[{}] {}", coords.join(" "), self.message)
        }
    }
}

/// Check every dataset invariant and report each violation.
pub fn validate_dataset(d: &Dataset) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let diag = |kind, t: &TrialRecord, key: Option<&PropertyKey>, message: String| Diagnostic {
        kind,
        program: Some(t.program.clone()),
        trial: Some(t.trial),
        fuzzer: Some(t.fuzzer.clone()),
        key: key.map(|k| k.to_string()),
        message,
    };

    if d.is_empty() {
        out.push(Diagnostic {
            kind: DiagnosticKind::Empty,
            program: None,
            trial: None,
            fuzzer: None,
            key: None,
            message: "dataset has no trials".into(),
        });
        return out;
    }

    let mut seen = BTreeSet::new();
    for t in d.trials() {
        if !seen.insert((&t.program, &t.fuzzer, t.trial)) {
            out.push(diag(
                DiagnosticKind::DuplicateTrial,
                t,
                None,
                "duplicate (program, fuzzer, trial)".into(),
            ));
        }
        if !t.performance.is_finite() {
            out.push(diag(
                DiagnosticKind::NonFinite,
                t,
                None,
                format!("performance is not finite ({})", t.performance),
            ));
        } else if t.performance < 0.0 {
            out.push(diag(
                DiagnosticKind::NegativePerformance,
                t,
                None,
                format!("performance is negative ({})", t.performance),
            ));
        }
        for (k, &v) in &t.properties {
            if !v.is_finite() {
                out.push(diag(
                    DiagnosticKind::NonFinite,
                    t,
                    Some(k),
                    format!("property value is not finite ({v})"),
                ));
            } else if k.is_proportion() && !(0.0..=1.0).contains(&v) {
                out.push(diag(
                    DiagnosticKind::ProportionOutOfRange,
                    t,
                    Some(k),
                    format!("proportion {v} outside [0, 1]"),
                ));
            }
        }
    }

    let all_fuzzers: BTreeSet<&str> = d.fuzzers().iter().map(String::as_str).collect();
    for unit in d.units() {
        let present: BTreeSet<&str> = unit
            .rows
            .iter()
            .map(|&i| d.trials[i].fuzzer.as_str())
            .collect();
        if present != all_fuzzers {
            let missing: Vec<&str> = all_fuzzers.difference(&present).copied().collect();
            out.push(Diagnostic {
                kind: DiagnosticKind::UnbalancedPanel,
                program: Some(unit.key.program.clone()),
                trial: Some(unit.key.trial),
                fuzzer: None,
                key: None,
                message: format!("unbalanced fuzzer panel, missing: {}", missing.join(", ")),
            });
        }
        let first = &d.trials[unit.rows[0]];
        let mut keys: BTreeSet<&PropertyKey> = BTreeSet::new();
        for &i in &unit.rows {
            keys.extend(d.trials[i].properties.keys());
        }
        for key in keys {
            let reference = first.property(key);
            let consistent = unit.rows.iter().all(|&i| {
                match (d.trials[i].property(key), reference) {
                    (Some(a), Some(b)) => a.to_bits() == b.to_bits() || a == b,
                    (None, None) => true,
                    _ => false,
                }
            });
            if !consistent {
                out.push(Diagnostic {
                    kind: DiagnosticKind::PropertyMismatch,
                    program: Some(unit.key.program.clone()),
                    trial: Some(unit.key.trial),
                    fuzzer: None,
                    key: Some(key.to_string()),
                    message: "property differs across the fuzzers of this trial".into(),
                });
            }
        }
    }
    out
}
