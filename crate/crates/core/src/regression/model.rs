//! Per-fuzzer slopes, the fuzzer-by-property model and rank prediction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_ols, bootstrap_ols_clustered, BootstrapSpec, CiTable, ResampleUnit};
use crate::data::PropertyKey;
use crate::error::{Error, Result};
use crate::ranking::{RankScope, RankedDataset};
use crate::regression::design::{
    bench_prefix, build_design_matrix, fuzzer_label, inter_label, prop_label, DesignSpec, INTERCEPT,
};
use crate::regression::{ols_fit, Matrix, RegressionFit};

/// Simple regression of one fuzzer's rank on one property rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub fuzzer: String,
    pub property: PropertyKey,
    pub scope: RankScope,
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// The interval excludes zero.
    pub significant: bool,
    pub n: usize,
}

/// Regress each fuzzer's per-trial rank on the property rank at `scope`,
/// independently per fuzzer. Intervals come from `boot` with a per-fuzzer
/// seed stream.
pub fn per_fuzzer_slopes(
    rd: &RankedDataset,
    key: &PropertyKey,
    scope: RankScope,
    boot: &BootstrapSpec,
) -> Result<Vec<SlopeEstimate>> {
    let x = rd.property_rank(key, scope)?;
    let y = rd.fuzzer_rank();
    let d = rd.base();
    let mut out = Vec::with_capacity(d.fuzzers().len());
    for f in d.fuzzers() {
        let rows: Vec<usize> = (0..d.len()).filter(|&i| &d.trials()[i].fuzzer == f).collect();
        if rows.len() < 3 {
            return Err(Error::invalid(format!(
                "fuzzer `{f}` has {} observations; at least 3 are needed for a slope",
                rows.len()
            )));
        }
        let xs: Vec<f64> = rows.iter().map(|&i| x[i]).collect();
        let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        let m = Matrix::from_columns(
            vec![INTERCEPT.to_string(), prop_label(key)],
            vec![vec![1.0; xs.len()], xs],
        )?;
        let ci = bootstrap_ols(&m, &ys, &boot.for_stream(f))?;
        let (b0, b1) = (&ci.entries[0], &ci.entries[1]);
        out.push(SlopeEstimate {
            fuzzer: f.clone(),
            property: key.clone(),
            scope,
            slope: b1.estimate,
            intercept: b0.estimate,
            ci_low: b1.ci_low,
            ci_high: b1.ci_high,
            significant: b1.significant,
            n: rows.len(),
        });
    }
    Ok(out)
}

/// Fitted model together with the design it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainableFit {
    pub design: DesignSpec,
    pub fit: RegressionFit,
    pub ci: CiTable,
    /// Dataset row of each observation.
    #[serde(default)]
    pub rows: Vec<usize>,
}

/// Coefficients of one model block, keyed by what they multiply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTerms {
    pub intercept: f64,
    pub beta: BTreeMap<PropertyKey, f64>,
    pub gamma: BTreeMap<String, f64>,
    /// `omega[property][fuzzer]`
    pub omega: BTreeMap<PropertyKey, BTreeMap<String, f64>>,
}

pub fn fit_explainable_model(
    rd: &RankedDataset,
    spec: &DesignSpec,
    boot: &BootstrapSpec,
) -> Result<ExplainableFit> {
    let design = build_design_matrix(rd, spec)?;
    let fit = ols_fit(&design.matrix, &design.response)?;
    let ci = match boot.unit {
        ResampleUnit::Observation => bootstrap_ols(&design.matrix, &design.response, boot)?,
        ResampleUnit::Trial => {
            let units = rd.base().units();
            let mut unit_of = vec![0; rd.base().len()];
            for (u, unit) in units.iter().enumerate() {
                for &r in &unit.rows {
                    unit_of[r] = u;
                }
            }
            let clusters: Vec<usize> = design.rows.iter().map(|&r| unit_of[r]).collect();
            bootstrap_ols_clustered(&design.matrix, &design.response, &clusters, boot)?
        }
    };
    Ok(ExplainableFit {
        design: spec.clone(),
        fit,
        ci,
        rows: design.rows,
    })
}

impl ExplainableFit {
    fn prefix(&self, program: Option<&str>) -> Result<String> {
        match (self.design.per_benchmark, program) {
            (false, _) => Ok(String::new()),
            (true, Some(p)) => {
                if self.design.programs.iter().any(|q| q == p) {
                    Ok(bench_prefix(p))
                } else {
                    Err(Error::Unknown {
                        kind: "program",
                        name: p.to_string(),
                    })
                }
            }
            (true, None) => Err(Error::invalid(
                "per-benchmark fit: a program is required to read its coefficients",
            )),
        }
    }

    fn properties_in(&self, prefix: &str) -> Vec<PropertyKey> {
        if prefix.is_empty() {
            self.design.properties.clone()
        } else {
            self.design.within_program_properties()
        }
    }

    /// Coefficients of the pooled model, or of `program`'s block in a
    /// per-benchmark fit.
    pub fn terms(&self, program: Option<&str>) -> Result<ModelTerms> {
        let prefix = self.prefix(program)?;
        let get = |label: String| -> Result<f64> {
            let full = format!("{prefix}{label}");
            self.fit
                .coefficient(&full)
                .ok_or(Error::Unknown { kind: "term", name: full })
        };
        let props = self.properties_in(&prefix);
        let mut terms = ModelTerms {
            intercept: get(INTERCEPT.to_string())?,
            beta: BTreeMap::new(),
            gamma: BTreeMap::new(),
            omega: BTreeMap::new(),
        };
        for k in &props {
            terms.beta.insert(k.clone(), get(prop_label(k))?);
        }
        for f in self.design.non_reference_fuzzers() {
            terms.gamma.insert(f.clone(), get(fuzzer_label(f))?);
            if self.design.include_interactions {
                for k in &props {
                    terms
                        .omega
                        .entry(k.clone())
                        .or_default()
                        .insert(f.clone(), get(inter_label(k, f))?);
                }
            }
        }
        Ok(terms)
    }

    /// Predicted fuzzer rank at raw property ranks. Keys not given sit at
    /// their reference level.
    pub fn predict_rank(
        &self,
        fuzzer: &str,
        property_ranks: &BTreeMap<PropertyKey, f64>,
        program: Option<&str>,
    ) -> Result<f64> {
        let centered = self.center(property_ranks, program)?;
        self.predict_centered(fuzzer, &centered, program)
    }

    fn center(
        &self,
        property_ranks: &BTreeMap<PropertyKey, f64>,
        program: Option<&str>,
    ) -> Result<BTreeMap<PropertyKey, f64>> {
        let props = self.properties_in(&self.prefix(program)?);
        let mut out = BTreeMap::new();
        for (k, v) in property_ranks {
            if !props.contains(k) {
                return Err(Error::Unknown {
                    kind: "property",
                    name: k.to_string(),
                });
            }
            out.insert(k.clone(), v - self.design.reference(k));
        }
        Ok(out)
    }

    /// Predicted rank at property ranks already shifted by their reference
    /// levels (`X_p - ref_p`).
    pub fn predict_centered(
        &self,
        fuzzer: &str,
        centered: &BTreeMap<PropertyKey, f64>,
        program: Option<&str>,
    ) -> Result<f64> {
        let (a, b) = self.linear_form(fuzzer, program)?;
        let mut r = a;
        for (k, x) in centered {
            let slope = b.get(k).ok_or_else(|| Error::Unknown {
                kind: "property",
                name: k.to_string(),
            })?;
            r += slope * x;
        }
        Ok(r)
    }

    /// `(a_f, b_f)` with `rank = a_f + sum_p b_f[p] * (X_p - ref_p)`.
    pub fn linear_form(
        &self,
        fuzzer: &str,
        program: Option<&str>,
    ) -> Result<(f64, BTreeMap<PropertyKey, f64>)> {
        if !self.design.fuzzers.iter().any(|f| f == fuzzer) {
            return Err(Error::Unknown {
                kind: "fuzzer",
                name: fuzzer.to_string(),
            });
        }
        let t = self.terms(program)?;
        let is_ref = fuzzer == self.design.reference_fuzzer;
        let a = t.intercept + if is_ref { 0.0 } else { t.gamma[fuzzer] };
        let mut b = t.beta.clone();
        if !is_ref {
            for (k, per_f) in &t.omega {
                *b.get_mut(k).expect("omega keys are design properties") += per_f[fuzzer];
            }
        }
        Ok((a, b))
    }

    /// Where the predicted ranks of `first` and `second` cross as `key`
    /// moves away from `base` (other properties fixed at `base`, or at their
    /// reference levels when absent).
    pub fn crossover(
        &self,
        first: &str,
        second: &str,
        key: &PropertyKey,
        base: &BTreeMap<PropertyKey, f64>,
        program: Option<&str>,
    ) -> Result<Crossover> {
        let centered = self.center(base, program)?;
        let (_, b1) = self.linear_form(first, program)?;
        let (_, b2) = self.linear_form(second, program)?;
        let slope1 = *b1.get(key).ok_or_else(|| Error::Unknown {
            kind: "property",
            name: key.to_string(),
        })?;
        let slope2 = b2[key];
        let r1 = self.predict_centered(first, &centered, program)?;
        let r2 = self.predict_centered(second, &centered, program)?;
        let base_rank = base
            .get(key)
            .copied()
            .unwrap_or_else(|| self.design.reference(key));
        Ok(Crossover::solve(r1, slope1, r2, slope2, base_rank))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossoverRegion {
    /// The second fuzzer ranks at least as high for every change at or above
    /// the threshold.
    Above,
    /// ... for every change at or below the threshold.
    Below,
    Always,
    Never,
}

/// Solution of `r2 + s2 * d >= r1 + s1 * d` in the change `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    pub region: CrossoverRegion,
    /// Change in the property rank at which the ranks are equal.
    pub delta: Option<f64>,
    /// `base + delta`.
    pub rank: Option<f64>,
    pub first_rank: f64,
    pub second_rank: f64,
}

impl Crossover {
    pub fn solve(r1: f64, s1: f64, r2: f64, s2: f64, base: f64) -> Crossover {
        let ds = s2 - s1;
        let (region, delta) = if ds > 0.0 {
            (CrossoverRegion::Above, Some((r1 - r2) / ds))
        } else if ds < 0.0 {
            (CrossoverRegion::Below, Some((r1 - r2) / ds))
        } else if r2 >= r1 {
            (CrossoverRegion::Always, None)
        } else {
            (CrossoverRegion::Never, None)
        };
        Crossover {
            region,
            delta,
            rank: delta.map(|d| base + d),
            first_rank: r1,
            second_rank: r2,
        }
    }
}
