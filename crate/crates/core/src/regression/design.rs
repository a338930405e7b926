//! Design matrices for the fuzzer-rank regression
//!
//! ```text
//! R = a + sum_p b_p X_p + sum_f g_f Y_f + sum_p sum_f w_pf X_p Y_f
//! ```
//!
//! `R` is the fuzzer rank in a trial, `X_p` the property rank minus its
//! reference level and `Y_f` the indicator of fuzzer `f` (the reference fuzzer
//! has no indicator). Columns are labelled `intercept`, `prop:<key>`,
//! `fuzzer:<id>` and `inter:<key>:<id>`. In per-benchmark mode every column
//! is replicated per program with a `bench:<program>:` prefix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PropertyKey, PropertyLevel};
use crate::error::{Error, Result};
use crate::ranking::{RankScope, RankedDataset};
use crate::regression::Matrix;

/// Properties of the default model: initial coverage, mean execution time,
/// mean seed size and program size. Seed count is left out because it is
/// nearly collinear with initial coverage, and the instruction-mix
/// proportions for parsimony.
pub const DEFAULT_MLR_PROPERTIES: [PropertyKey; 4] = [
    PropertyKey::InitCoverage,
    PropertyKey::MeanExecNs,
    PropertyKey::MeanSeedBytes,
    PropertyKey::ProgramTextBytes,
];

pub const INTERCEPT: &str = "intercept";

pub fn prop_label(key: &PropertyKey) -> String {
    format!("prop:{key}")
}

pub fn fuzzer_label(fuzzer: &str) -> String {
    format!("fuzzer:{fuzzer}")
}

pub fn inter_label(key: &PropertyKey, fuzzer: &str) -> String {
    format!("inter:{key}:{fuzzer}")
}

pub fn bench_prefix(program: &str) -> String {
    format!("bench:{program}:")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub properties: Vec<PropertyKey>,
    /// Rank scope used for each property.
    pub scopes: BTreeMap<PropertyKey, RankScope>,
    pub fuzzers: Vec<String>,
    pub reference_fuzzer: String,
    /// Rank value subtracted from each property before fitting.
    pub reference_level: BTreeMap<PropertyKey, f64>,
    pub include_interactions: bool,
    /// Replicate the model per program (Benchmark x Fuzzer x Properties).
    pub per_benchmark: bool,
    /// Programs in dataset order; used for per-benchmark blocks.
    #[serde(default)]
    pub programs: Vec<String>,
}

impl DesignSpec {
    /// Default model for `d` with the given reference fuzzer, or LibFuzzer
    /// when present, or the first fuzzer.
    pub fn default_model(d: &Dataset, reference: Option<&str>) -> Result<Self> {
        Self::for_properties(d, &DEFAULT_MLR_PROPERTIES, reference)
    }

    /// Properties at their natural scope: program-level properties ranked
    /// over programs with the median rank as reference, corpus properties
    /// ranked within programs with rank 1 as reference.
    pub fn for_properties(
        d: &Dataset,
        properties: &[PropertyKey],
        reference: Option<&str>,
    ) -> Result<Self> {
        for k in properties {
            if !d.property_keys().contains(k) {
                return Err(Error::Unknown {
                    kind: "property",
                    name: k.to_string(),
                });
            }
        }
        let fuzzers = d.fuzzers().to_vec();
        let reference_fuzzer = match reference {
            Some(r) => {
                if !fuzzers.iter().any(|f| f == r) {
                    return Err(Error::Unknown {
                        kind: "fuzzer",
                        name: r.to_string(),
                    });
                }
                r.to_string()
            }
            None => default_reference(&fuzzers)
                .ok_or_else(|| Error::invalid("dataset has no fuzzers"))?,
        };
        let n_programs = d.programs().len() as f64;
        let mut scopes = BTreeMap::new();
        let mut reference_level = BTreeMap::new();
        for k in properties {
            let (scope, level) = match d.property_level(k) {
                PropertyLevel::Program => (RankScope::Program, (n_programs + 1.0) / 2.0),
                PropertyLevel::Corpus => (RankScope::WithinProgram, 1.0),
            };
            scopes.insert(k.clone(), scope);
            reference_level.insert(k.clone(), level);
        }
        Ok(DesignSpec {
            properties: properties.to_vec(),
            scopes,
            fuzzers,
            reference_fuzzer,
            reference_level,
            include_interactions: true,
            per_benchmark: false,
            programs: d.programs().to_vec(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.fuzzers.contains(&self.reference_fuzzer) {
            return Err(Error::invalid(format!(
                "reference fuzzer `{}` is not among the design fuzzers",
                self.reference_fuzzer
            )));
        }
        for k in self.reference_level.keys() {
            if !self.properties.contains(k) {
                return Err(Error::invalid(format!(
                    "reference level given for `{k}`, which is not a design property"
                )));
            }
        }
        for k in &self.properties {
            if !self.scopes.contains_key(k) {
                return Err(Error::invalid(format!("no rank scope for `{k}`")));
            }
        }
        Ok(())
    }

    pub fn scope(&self, key: &PropertyKey) -> RankScope {
        self.scopes
            .get(key)
            .copied()
            .unwrap_or(RankScope::WithinProgram)
    }

    pub fn reference(&self, key: &PropertyKey) -> f64 {
        self.reference_level.get(key).copied().unwrap_or(0.0)
    }

    pub fn non_reference_fuzzers(&self) -> impl Iterator<Item = &String> {
        self.fuzzers.iter().filter(move |f| **f != self.reference_fuzzer)
    }

    /// Properties that vary within a program; the only ones that can enter a
    /// per-benchmark block.
    pub fn within_program_properties(&self) -> Vec<PropertyKey> {
        self.properties
            .iter()
            .filter(|k| self.scope(k) != RankScope::Program)
            .cloned()
            .collect()
    }

    /// Column labels of the pooled model, in column order.
    pub fn pooled_labels(&self) -> Vec<String> {
        block_labels(self, &self.properties, "")
    }
}

fn default_reference(fuzzers: &[String]) -> Option<String> {
    fuzzers
        .iter()
        .find(|f| f.eq_ignore_ascii_case("libfuzzer"))
        .or_else(|| fuzzers.first())
        .cloned()
}

fn block_labels(spec: &DesignSpec, props: &[PropertyKey], prefix: &str) -> Vec<String> {
    let mut labels = vec![format!("{prefix}{INTERCEPT}")];
    labels.extend(props.iter().map(|k| format!("{prefix}{}", prop_label(k))));
    labels.extend(
        spec.non_reference_fuzzers()
            .map(|f| format!("{prefix}{}", fuzzer_label(f))),
    );
    if spec.include_interactions {
        for k in props {
            for f in spec.non_reference_fuzzers() {
                labels.push(format!("{prefix}{}", inter_label(k, f)));
            }
        }
    }
    labels
}

/// A design matrix with its response and the dataset rows it was built from.
#[derive(Debug, Clone)]
pub struct Design {
    pub matrix: Matrix,
    pub response: Vec<f64>,
    /// Dataset row index of each design row.
    pub rows: Vec<usize>,
}

/// Rank everything the design needs and return the ranked dataset.
pub fn rank_for_design(d: &Dataset, spec: &DesignSpec) -> Result<RankedDataset> {
    let mut rd = RankedDataset::new(d.clone())?;
    for k in &spec.properties {
        rd.add_ranks(std::slice::from_ref(k), spec.scope(k))?;
    }
    Ok(rd)
}

pub fn build_design_matrix(rd: &RankedDataset, spec: &DesignSpec) -> Result<Design> {
    spec.validate()?;
    let d = rd.base();
    let rows: Vec<usize> = d
        .trials()
        .iter()
        .enumerate()
        .filter(|(_, t)| spec.fuzzers.contains(&t.fuzzer))
        .map(|(i, _)| i)
        .collect();
    if rows.is_empty() {
        return Err(Error::invalid("no rows for the design fuzzers"));
    }
    let response: Vec<f64> = rows.iter().map(|&i| rd.fuzzer_rank()[i]).collect();

    let mut centered: BTreeMap<&PropertyKey, Vec<f64>> = BTreeMap::new();
    for k in &spec.properties {
        let ranks = rd.property_rank(k, spec.scope(k))?;
        let r0 = spec.reference(k);
        centered.insert(k, rows.iter().map(|&i| ranks[i] - r0).collect());
    }
    let indicator = |f: &str| -> Vec<f64> {
        rows.iter()
            .map(|&i| if d.trials()[i].fuzzer == f { 1.0 } else { 0.0 })
            .collect()
    };
    let fuzzer_cols: Vec<Vec<f64>> = spec.non_reference_fuzzers().map(|f| indicator(f)).collect();

    let block = |props: &[PropertyKey], mask: Option<&[f64]>| -> Vec<Vec<f64>> {
        let apply = |col: Vec<f64>| -> Vec<f64> {
            match mask {
                Some(m) => col.iter().zip(m).map(|(a, b)| a * b).collect(),
                None => col,
            }
        };
        let mut cols = vec![apply(vec![1.0; rows.len()])];
        for k in props {
            cols.push(apply(centered[k].clone()));
        }
        for c in &fuzzer_cols {
            cols.push(apply(c.clone()));
        }
        if spec.include_interactions {
            for k in props {
                for c in &fuzzer_cols {
                    cols.push(apply(centered[k].iter().zip(c).map(|(x, y)| x * y).collect()));
                }
            }
        }
        cols
    };

    let (labels, columns) = if spec.per_benchmark {
        let props = spec.within_program_properties();
        let mut labels = Vec::new();
        let mut columns = Vec::new();
        let programs: Vec<&String> = if spec.programs.is_empty() {
            d.programs().iter().collect()
        } else {
            spec.programs.iter().collect()
        };
        for p in programs {
            let mask: Vec<f64> = rows
                .iter()
                .map(|&i| if &d.trials()[i].program == p { 1.0 } else { 0.0 })
                .collect();
            labels.extend(block_labels(spec, &props, &bench_prefix(p)));
            columns.extend(block(&props, Some(&mask)));
        }
        (labels, columns)
    } else {
        (spec.pooled_labels(), block(&spec.properties, None))
    };

    Ok(Design {
        matrix: Matrix::from_columns(labels, columns)?,
        response,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TrialRecord;

    fn dataset() -> Dataset {
        let mut rows = Vec::new();
        for (pi, p) in ["p1", "p2", "p3"].iter().enumerate() {
            for t in 0..5u64 {
                for (fi, f) in ["LibFuzzer", "afl", "aflpp", "entropic"].iter().enumerate() {
                    let props = [
                        (PropertyKey::InitCoverage, (t * 7 % 5) as f64),
                        (PropertyKey::MeanExecNs, (t * 3 % 5) as f64 + 0.5),
                        (PropertyKey::MeanSeedBytes, (t * 2 % 5) as f64),
                        (PropertyKey::ProgramTextBytes, 1000.0 * (pi as f64 + 1.0)),
                    ];
                    rows.push(TrialRecord {
                        program: p.to_string(),
                        fuzzer: f.to_string(),
                        trial: t,
                        properties: props.into_iter().collect(),
                        performance: (fi as f64 + 1.0) * (t as f64 + 1.0),
                    });
                }
            }
        }
        Dataset::new(rows).unwrap()
    }

    #[test]
    fn twenty_columns_for_four_by_four() {
        let d = dataset();
        let spec = DesignSpec::default_model(&d, None).unwrap();
        assert_eq!(spec.reference_fuzzer, "LibFuzzer");
        let rd = rank_for_design(&d, &spec).unwrap();
        let design = build_design_matrix(&rd, &spec).unwrap();
        assert_eq!(design.matrix.cols(), 1 + 4 + 3 + 12);
        assert_eq!(design.matrix.rows(), d.len());
        assert_eq!(design.matrix.labels()[0], "intercept");
        assert!(design.matrix.labels().contains(&"inter:program_text_bytes:aflpp".to_string()));
    }

    #[test]
    fn dummy_coding_and_centering() {
        let d = dataset();
        let spec = DesignSpec::default_model(&d, None).unwrap();
        let rd = rank_for_design(&d, &spec).unwrap();
        let design = build_design_matrix(&rd, &spec).unwrap();
        let m = &design.matrix;
        for (r, &i) in design.rows.iter().enumerate() {
            if d.trials()[i].fuzzer == "LibFuzzer" {
                for j in 5..m.cols() {
                    assert_eq!(m.get(r, j), 0.0, "column {}", m.labels()[j]);
                }
            }
        }
        // indicator sums equal per-fuzzer observation counts
        for j in 5..8 {
            assert_eq!(m.column(j).iter().sum::<f64>(), 15.0);
        }
        // median program (rank 2 of 3) sits at the size reference level
        let size = m.labels().iter().position(|l| l == "prop:program_text_bytes").unwrap();
        for (r, &i) in design.rows.iter().enumerate() {
            if d.trials()[i].program == "p2" {
                assert_eq!(m.get(r, size), 0.0);
            }
        }
    }

    #[test]
    fn per_benchmark_blocks_drop_program_properties() {
        let d = dataset();
        let mut spec = DesignSpec::default_model(&d, None).unwrap();
        spec.per_benchmark = true;
        let rd = rank_for_design(&d, &spec).unwrap();
        let design = build_design_matrix(&rd, &spec).unwrap();
        assert_eq!(design.matrix.cols(), 3 * (1 + 3 + 3 + 9));
        assert!(design.matrix.labels().iter().all(|l| l.starts_with("bench:")));
        assert!(!design.matrix.labels().iter().any(|l| l.contains("program_text_bytes")));
    }

    #[test]
    fn unknown_reference_and_property() {
        let d = dataset();
        assert!(DesignSpec::default_model(&d, Some("nope")).is_err());
        assert!(DesignSpec::for_properties(&d, &[PropertyKey::SeedCount], None).is_err());
    }
}
