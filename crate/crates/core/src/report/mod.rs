//! The full evaluation: correlations, pairwise comparisons, per-fuzzer
//! slopes, the fuzzer-by-property model and its diagnostics.
//!
//! JSON is the primary output; [`render_text`] and the plot files are views
//! of it.

pub mod plots;
mod text;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{BootstrapMethod, BootstrapSpec, CiTable};
use crate::data::{format_number, Dataset, PropertyKey};
use crate::diagnostics::{diagnose, DiagnosticsReport, ResidualOrder};
use crate::error::{Error, Result};
use crate::ranking::{RankScope, RankedDataset};
use crate::regression::{
    build_design_matrix, fit_explainable_model, ols_fit, per_fuzzer_slopes, DesignSpec,
    SlopeEstimate, DEFAULT_MLR_PROPERTIES,
};
use crate::stats::{
    correlation_matrix, pairwise_table, performance_by_fuzzer, property_performance_rho,
    PairwiseTable, DEFAULT_ALPHA,
};

pub use plots::{perf_scope_for, scatter_svg};
pub use text::render_text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    /// Label of the input, echoed in the metadata.
    pub dataset: String,
    /// Bootstrap for the model; slopes use the same seed and replicate count
    /// with the pairs method.
    pub boot: BootstrapSpec,
    pub alpha: f64,
    pub reference: Option<String>,
    /// Model properties; the default set when `None`.
    pub properties: Option<Vec<PropertyKey>>,
    pub dw_order: ResidualOrder,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            dataset: String::new(),
            boot: BootstrapSpec::default(),
            alpha: DEFAULT_ALPHA,
            reference: None,
            properties: None,
            dw_order: ResidualOrder::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub dataset: String,
    pub seed: u64,
    pub boot: BootstrapSpec,
    pub alpha: f64,
    pub reference_fuzzer: String,
    pub properties: Vec<PropertyKey>,
    pub dw_order: ResidualOrder,
    pub rows: usize,
    pub fuzzers: Vec<String>,
    pub programs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanEntry {
    pub property: PropertyKey,
    pub scope: RankScope,
    pub perf_scope: RankScope,
    /// `None` when a rank vector is constant.
    pub rho: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub keys: Vec<PropertyKey>,
    pub rho: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeTable {
    pub property: PropertyKey,
    pub scope: RankScope,
    pub estimates: Vec<SlopeEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlrSummary {
    pub reference_fuzzer: String,
    pub coefficients: CiTable,
    pub r2: f64,
    #[serde(with = "crate::serde_util::float")]
    pub r2_adjusted: f64,
    #[serde(with = "crate::serde_util::float")]
    pub f_statistic: f64,
    #[serde(with = "crate::serde_util::float")]
    pub f_p_value: f64,
    pub median_residual: f64,
    pub median_abs_residual: f64,
    #[serde(with = "crate::serde_util::float")]
    pub residual_std_error: f64,
    pub n_obs: usize,
    pub df_residual: usize,
    /// R² of the model replicated per program, when that design is full rank.
    pub per_benchmark_r2: Option<f64>,
    pub per_benchmark_r2_adjusted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metadata: Metadata,
    pub spearman: Vec<SpearmanEntry>,
    pub correlation: Option<CorrelationMatrix>,
    pub pairwise_pooled: PairwiseTable,
    pub pairwise_by_program: BTreeMap<String, PairwiseTable>,
    pub mean_fuzzer_rank: Vec<(String, f64)>,
    pub slopes: Vec<SlopeTable>,
    pub mlr: MlrSummary,
    pub diagnostics: DiagnosticsReport,
    /// Files written by [`emit_plot_data`], relative to its directory.
    #[serde(default)]
    pub plots: Vec<String>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Rank every property at its natural scope and globally.
pub fn rank_all(d: &Dataset) -> Result<RankedDataset> {
    let keys = d.property_keys().to_vec();
    let mut rd = RankedDataset::with_natural_ranks(d.clone(), &keys)?;
    rd.add_ranks(&keys, RankScope::Global)?;
    Ok(rd)
}

/// Scopes reported for a property: its natural scope, then global.
pub fn report_scopes(rd: &RankedDataset, key: &PropertyKey) -> Vec<RankScope> {
    let natural = rd.natural_scope(key);
    if natural == RankScope::Global {
        vec![natural]
    } else {
        vec![natural, RankScope::Global]
    }
}

pub fn build_report(d: &Dataset, cfg: &ReportConfig) -> Result<EvaluationReport> {
    cfg.boot.validate()?;
    let rd = rank_all(d)?;
    let properties = cfg
        .properties
        .clone()
        .unwrap_or_else(|| DEFAULT_MLR_PROPERTIES.to_vec());
    let design = DesignSpec::for_properties(d, &properties, cfg.reference.as_deref())?;

    let mut spearman = Vec::new();
    for k in d.property_keys() {
        for scope in report_scopes(&rd, k) {
            let perf_scope = perf_scope_for(scope);
            spearman.push(SpearmanEntry {
                property: k.clone(),
                scope,
                perf_scope,
                rho: property_performance_rho(&rd, k, scope, perf_scope).ok(),
                n: d.len(),
            });
        }
    }

    let varying: Vec<PropertyKey> = d
        .property_keys()
        .iter()
        .filter(|k| {
            rd.property_rank(k, rd.natural_scope(k))
                .map(|r| r.iter().any(|v| *v != r[0]))
                .unwrap_or(false)
        })
        .cloned()
        .collect();
    let correlation = if varying.len() >= 2 {
        Some(CorrelationMatrix {
            rho: correlation_matrix(&rd, &varying)?,
            keys: varying,
        })
    } else {
        None
    };

    let pairwise_pooled = pairwise_table(&performance_by_fuzzer(d, None)?, cfg.alpha)?;
    let mut pairwise_by_program = BTreeMap::new();
    for p in d.programs() {
        pairwise_by_program.insert(
            p.clone(),
            pairwise_table(&performance_by_fuzzer(d, Some(p))?, cfg.alpha)?,
        );
    }

    let slope_boot = BootstrapSpec {
        method: BootstrapMethod::Pairs,
        ..cfg.boot.clone()
    };
    let mut slopes = Vec::new();
    for k in &properties {
        let scope = design.scope(k);
        let estimates = per_fuzzer_slopes(&rd, k, scope, &slope_boot.for_stream(&format!("slopes:{k}")))?;
        slopes.push(SlopeTable {
            property: k.clone(),
            scope,
            estimates,
        });
    }

    let model = fit_explainable_model(&rd, &design, &cfg.boot.for_stream("mlr"))?;
    let mut bench = design.clone();
    bench.per_benchmark = true;
    let bench_fit = build_design_matrix(&rd, &bench).and_then(|m| ols_fit(&m.matrix, &m.response));
    let diagnostics = diagnose(&model, &rd, cfg.dw_order)?;
    let fit = &model.fit;
    let mlr = MlrSummary {
        reference_fuzzer: design.reference_fuzzer.clone(),
        coefficients: model.ci.clone(),
        r2: fit.r2,
        r2_adjusted: fit.r2_adjusted,
        f_statistic: fit.f_statistic,
        f_p_value: fit.f_p_value,
        median_residual: fit.median_residual,
        median_abs_residual: fit.median_abs_residual,
        residual_std_error: fit.residual_std_error,
        n_obs: fit.n_obs(),
        df_residual: fit.df_residual,
        per_benchmark_r2: bench_fit.as_ref().ok().map(|f| f.r2),
        per_benchmark_r2_adjusted: bench_fit.as_ref().ok().and_then(|f| finite(f.r2_adjusted)),
    };

    Ok(EvaluationReport {
        metadata: Metadata {
            dataset: cfg.dataset.clone(),
            seed: cfg.boot.seed,
            boot: cfg.boot.clone(),
            alpha: cfg.alpha,
            reference_fuzzer: design.reference_fuzzer.clone(),
            properties,
            dw_order: cfg.dw_order,
            rows: d.len(),
            fuzzers: d.fuzzers().to_vec(),
            programs: d.programs().to_vec(),
        },
        spearman,
        correlation,
        pairwise_pooled,
        pairwise_by_program,
        mean_fuzzer_rank: rd.mean_fuzzer_ranks(),
        slopes,
        mlr,
        diagnostics,
        plots: Vec::new(),
    })
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Write the data behind every figure into `dir` and record the file names
/// in `report.plots`. `data` must be the dataset the report was built from.
pub fn emit_plot_data(report: &mut EvaluationReport, data: &Dataset, dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rd = rank_all(data)?;
    let mut manifest = Vec::new();
    for e in report.spearman.iter().filter(|e| e.rho.is_some()) {
        let pts = plots::correlate_points(&rd, &e.property, e.scope)?;
        let stem = format!("correlate_{}_{}", plots::file_stem(&e.property), e.scope);
        plots::write_file(dir, &format!("{stem}.csv"), &plots::correlate_csv(&pts), &mut manifest)?;
        let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.property_rank, p.perf_rank)).collect();
        let svg = scatter_svg(
            &format!("{} ({})", e.property, e.scope),
            &format!("{} rank", e.property),
            "performance rank",
            &xy,
        );
        plots::write_file(dir, &format!("{stem}.svg"), &svg, &mut manifest)?;
    }
    for t in &report.slopes {
        let pts = plots::slope_points(&rd, &t.property, t.scope)?;
        let stem = format!("slopes_{}", plots::file_stem(&t.property));
        plots::write_file(dir, &format!("{stem}.csv"), &plots::slope_points_csv(&pts), &mut manifest)?;
        plots::write_file(
            dir,
            &format!("{stem}_lines.csv"),
            &plots::slope_lines_csv(&pts, &t.estimates),
            &mut manifest,
        )?;
        let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.property_rank, p.fuzzer_rank)).collect();
        let svg = scatter_svg(&format!("fuzzer rank by {}", t.property), &format!("{} rank", t.property), "fuzzer rank", &xy);
        plots::write_file(dir, &format!("{stem}.svg"), &svg, &mut manifest)?;
    }
    plots::write_file(dir, "mlr_coefficients.csv", &report.mlr.coefficients.to_csv(), &mut manifest)?;
    let d = &report.diagnostics;
    plots::write_file(dir, "qq.csv", &plots::pairs_csv("theoretical,sample", &d.qq_points), &mut manifest)?;
    plots::write_file(
        dir,
        "scale_location.csv",
        &plots::pairs_csv("fitted,sqrt_abs_std_residual", &d.scale_location),
        &mut manifest,
    )?;
    if let Some(c) = &report.correlation {
        let mut s = String::from("key");
        for k in &c.keys {
            s.push(',');
            s.push_str(k.as_str());
        }
        s.push('\n');
        for (k, row) in c.keys.iter().zip(&c.rho) {
            s.push_str(k.as_str());
            for v in row {
                s.push(',');
                s.push_str(&format_number(*v));
            }
            s.push('\n');
        }
        plots::write_file(dir, "correlation_matrix.csv", &s, &mut manifest)?;
    }
    let mut s = String::from("group,row,column,a12,p,significant\n");
    let tables = std::iter::once(("pooled", &report.pairwise_pooled))
        .chain(report.pairwise_by_program.iter().map(|(k, v)| (k.as_str(), v)));
    for (g, t) in tables {
        for (i, a) in t.labels.iter().enumerate() {
            for (j, b) in t.labels.iter().enumerate() {
                if i != j {
                    s.push_str(&format!(
                        "{g},{a},{b},{},{},{}\n",
                        format_number(t.a12[i][j]),
                        format_number(t.p[i][j]),
                        t.significant[i][j]
                    ));
                }
            }
        }
    }
    plots::write_file(dir, "pairwise.csv", &s, &mut manifest)?;
    manifest.sort();
    report.plots = manifest.clone();
    Ok(manifest)
}
