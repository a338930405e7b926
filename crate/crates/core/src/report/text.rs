use std::fmt::Write as _;

use super::EvaluationReport;

fn f4(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        v.to_string()
    }
}

fn opt4(v: Option<f64>) -> String {
    v.map(f4).unwrap_or_else(|| "n/a".into())
}

/// Human-readable summary; numbers rounded to 4 decimal places.
pub fn render_text(r: &EvaluationReport) -> String {
    let m = &r.metadata;
    let mut s = String::new();
    let _ = writeln!(s, "dataset: {}", if m.dataset.is_empty() { "-" } else { &m.dataset });
    let _ = writeln!(
        s,
        "rows: {}  fuzzers: {}\nprograms: {}",
        m.rows,
        m.fuzzers.join(", "),
        m.programs.join(", ")
    );
    let _ = writeln!(
        s,
        "seed: {}  bootstrap: {:?}, {} replicates ({:?})  alpha: {}",
        m.seed, m.boot.method, m.boot.replicates, m.boot.unit, m.alpha
    );

    let _ = writeln!(s, "\nmean fuzzer rank (higher is better)");
    for (f, v) in &r.mean_fuzzer_rank {
        let _ = writeln!(s, "  {f:<16} {}", f4(*v));
    }

    let _ = writeln!(s, "\nproperty vs performance (Spearman)");
    for e in &r.spearman {
        let _ = writeln!(
            s,
            "  {:<24} {:<8} vs {:<8} rho = {}",
            e.property.as_str(),
            e.scope.as_str(),
            e.perf_scope.as_str(),
            opt4(e.rho)
        );
    }

    let _ = writeln!(s, "\npairwise, pooled (A12 row vs column, * p < alpha)");
    let t = &r.pairwise_pooled;
    let _ = write!(s, "  {:<16}", "");
    for l in &t.labels {
        let _ = write!(s, " {l:>12}");
    }
    s.push('\n');
    for (i, a) in t.labels.iter().enumerate() {
        let _ = write!(s, "  {a:<16}");
        for j in 0..t.labels.len() {
            let cell = if i == j {
                "-".to_string()
            } else {
                format!("{}{}", f4(t.a12[i][j]), if t.significant[i][j] { "*" } else { "" })
            };
            let _ = write!(s, " {cell:>12}");
        }
        s.push('\n');
    }

    for table in &r.slopes {
        let _ = writeln!(s, "\nfuzzer rank slope on {} ({})", table.property, table.scope);
        for e in &table.estimates {
            let _ = writeln!(
                s,
                "  {:<16} {:>9} [{}, {}]{}",
                e.fuzzer,
                f4(e.slope),
                f4(e.ci_low),
                f4(e.ci_high),
                if e.significant { " *" } else { "" }
            );
        }
    }

    let mlr = &r.mlr;
    let _ = writeln!(
        s,
        "\nmodel (reference fuzzer {}), {:?} bootstrap CIs",
        mlr.reference_fuzzer, mlr.coefficients.method
    );
    for e in &mlr.coefficients.entries {
        let _ = writeln!(
            s,
            "  {:<40} {:>9} [{}, {}]{}",
            e.term,
            f4(e.estimate),
            f4(e.ci_low),
            f4(e.ci_high),
            if e.significant { " *" } else { "" }
        );
    }
    let _ = writeln!(
        s,
        "  R2 {}  adj R2 {}  F {} (p {})  n {}",
        f4(mlr.r2),
        f4(mlr.r2_adjusted),
        f4(mlr.f_statistic),
        f4(mlr.f_p_value),
        mlr.n_obs
    );
    let _ = writeln!(
        s,
        "  median residual {}  median |residual| {}",
        f4(mlr.median_residual),
        f4(mlr.median_abs_residual)
    );
    if let Some(v) = mlr.per_benchmark_r2 {
        let _ = writeln!(s, "  per-benchmark R2 {}", f4(v));
    }

    let d = &r.diagnostics;
    let _ = writeln!(s, "\ndiagnostics");
    let _ = writeln!(
        s,
        "  Durbin-Watson {} (p {}, order {:?})",
        f4(d.durbin_watson),
        f4(d.dw_p_value),
        d.dw_order
    );
    for v in &d.vif {
        let _ = writeln!(s, "  VIF {:<24} {}{}", v.key.as_str(), f4(v.vif), if v.flagged { " !" } else { "" });
    }
    if !r.plots.is_empty() {
        let _ = writeln!(s, "\nplot data: {}", r.plots.join(", "));
    }
    s
}
