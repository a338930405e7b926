//! Plot data as CSV and minimal standalone SVG scatter plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::data::{format_number, PropertyKey};
use crate::error::{Error, Result};
use crate::ranking::{RankScope, RankedDataset};
use crate::regression::SlopeEstimate;

/// Performance rank scope paired with a property rank scope: within-program
/// properties against within-program performance, anything else against
/// global performance.
pub fn perf_scope_for(scope: RankScope) -> RankScope {
    match scope {
        RankScope::WithinProgram => RankScope::WithinProgram,
        RankScope::Global | RankScope::Program => RankScope::Global,
    }
}

/// File-name-safe form of a property key.
pub fn file_stem(key: &PropertyKey) -> String {
    key.as_str()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelatePoint {
    pub property_rank: f64,
    pub perf_rank: f64,
    pub program: String,
    pub fuzzer: String,
    /// Mean performance rank of all points sharing this property rank.
    pub mean_perf_rank: f64,
}

/// One point per row: property rank against performance rank.
pub fn correlate_points(
    rd: &RankedDataset,
    key: &PropertyKey,
    scope: RankScope,
) -> Result<Vec<CorrelatePoint>> {
    let x = rd.property_rank(key, scope)?;
    let y = rd.perf_rank(perf_scope_for(scope))?;
    let mut means: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for (a, b) in x.iter().zip(y) {
        let e = means.entry(a.to_bits()).or_insert((0.0, 0));
        e.0 += b;
        e.1 += 1;
    }
    Ok(rd
        .base()
        .trials()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let (s, n) = means[&x[i].to_bits()];
            CorrelatePoint {
                property_rank: x[i],
                perf_rank: y[i],
                program: t.program.clone(),
                fuzzer: t.fuzzer.clone(),
                mean_perf_rank: s / n as f64,
            }
        })
        .collect())
}

pub fn correlate_csv(points: &[CorrelatePoint]) -> String {
    let mut s = String::from("property_rank,perf_rank,program,fuzzer,mean_perf_rank\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            format_number(p.property_rank),
            format_number(p.perf_rank),
            p.program,
            p.fuzzer,
            format_number(p.mean_perf_rank)
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopePoint {
    pub property_rank: f64,
    pub fuzzer_rank: f64,
    pub program: String,
    pub fuzzer: String,
}

pub fn slope_points(rd: &RankedDataset, key: &PropertyKey, scope: RankScope) -> Result<Vec<SlopePoint>> {
    let x = rd.property_rank(key, scope)?;
    let y = rd.fuzzer_rank();
    Ok(rd
        .base()
        .trials()
        .iter()
        .enumerate()
        .map(|(i, t)| SlopePoint {
            property_rank: x[i],
            fuzzer_rank: y[i],
            program: t.program.clone(),
            fuzzer: t.fuzzer.clone(),
        })
        .collect())
}

pub fn slope_points_csv(points: &[SlopePoint]) -> String {
    let mut s = String::from("property_rank,fuzzer_rank,program,fuzzer\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            format_number(p.property_rank),
            format_number(p.fuzzer_rank),
            p.program,
            p.fuzzer
        );
    }
    s
}

/// Fitted line of each fuzzer between the smallest and largest property
/// rank of its points.
pub fn slope_lines_csv(points: &[SlopePoint], slopes: &[SlopeEstimate]) -> String {
    let mut s = String::from("fuzzer,slope,intercept,ci_low,ci_high,x0,y0,x1,y1\n");
    for e in slopes {
        let xs = points.iter().filter(|p| p.fuzzer == e.fuzzer).map(|p| p.property_rank);
        let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        if !lo.is_finite() {
            continue;
        }
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            e.fuzzer,
            format_number(e.slope),
            format_number(e.intercept),
            format_number(e.ci_low),
            format_number(e.ci_high),
            format_number(lo),
            format_number(e.intercept + e.slope * lo),
            format_number(hi),
            format_number(e.intercept + e.slope * hi)
        );
    }
    s
}

pub fn pairs_csv(header: &str, points: &[(f64, f64)]) -> String {
    let mut s = format!("{header}\n");
    for (a, b) in points {
        let _ = writeln!(s, "{},{}", format_number(*a), format_number(*b));
    }
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Standalone SVG scatter plot with one `<circle>` per point.
pub fn scatter_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const M: f64 = 48.0;
    let finite = points.iter().filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in finite {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        xml_escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{M}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{M}" y1="{M}" x2="{M}" y2="{b}" stroke="black"/>"#,
        b = H - M,
        r = W - M
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
        W / 2.0,
        H - 12.0,
        xml_escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        xml_escape(y_label)
    );
    let _ = writeln!(s, r#"<g fill="steelblue" fill-opacity="0.5">"#);
    for (x, y) in points {
        if x.is_finite() && y.is_finite() {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5"/>"#, px(*x), py(*y));
        }
    }
    s.push_str("</g>\n</svg>\n");
    s
}

pub(crate) fn write_file(dir: &Path, name: &str, contents: &str, manifest: &mut Vec<String>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(path, e))?;
    manifest.push(name.to_string());
    Ok(())
}
