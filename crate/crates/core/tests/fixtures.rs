//! Checks against the files bundled under `fixtures/`.

use std::path::PathBuf;

use fuzzeval_core::bootstrap::BootstrapSpec;
use fuzzeval_core::data::{read_dataset, DataFormat};
use fuzzeval_core::diagnostics::{diagnose, ResidualOrder};
use fuzzeval_core::props::{parse_disassembly, parse_section_headers, program_properties};
use fuzzeval_core::regression::{build_design_matrix, fit_explainable_model, ols_fit, rank_for_design, DesignSpec};
use fuzzeval_core::synth::{generate, suite_fixture, GroundTruth, SynthSpec};
use fuzzeval_core::PropertyKey;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

#[test]
fn bundled_suite_regenerates_identically() {
    let (d, truth) = generate(&SynthSpec::suite()).unwrap();
    assert_eq!(d.to_csv_string().unwrap(), read("suite.csv"));
    let mut json = serde_json::to_string_pretty(&truth).unwrap();
    json.push('\n');
    assert_eq!(json, read("suite.truth.json"));
    assert_eq!(suite_fixture().trials(), d.trials());
}

#[test]
fn bundled_suite_loads_from_disk() {
    let d = read_dataset(&fixture("suite.csv"), DataFormat::Csv).unwrap();
    assert_eq!(d.trials(), suite_fixture().trials());
    assert_eq!(d.fuzzers().len(), 4);
    assert_eq!(d.programs().len(), 11);
    assert_eq!(d.len(), 4 * 11 * 24);
}

#[test]
fn objdump_fixture_matches_hand_tally() {
    let expected: Value = serde_json::from_str(&read("objdump/tokenizer.expected.json")).unwrap();
    let n = |k: &str| expected[k].as_u64().unwrap();

    let text = parse_section_headers(&read("objdump/tokenizer.headers.txt")).unwrap();
    assert_eq!(text, n("text_bytes"));

    let s = parse_disassembly(&read("objdump/tokenizer.disasm.txt"));
    assert_eq!(s.cond_branches_eq, n("cond_branches_eq"));
    assert_eq!(s.cond_branches_ineq, n("cond_branches_ineq"));
    assert_eq!(s.calls_total, n("calls_total"));
    assert_eq!(s.calls_extern, n("calls_extern"));

    let s = fuzzeval_core::props::DisasmSummary { text_bytes: Some(text), ..s };
    let props = program_properties(&s);
    assert_eq!(props[&PropertyKey::ProgramTextBytes], 1238.0);
    assert_eq!(props[&PropertyKey::EqProportion], 40.0 / 47.0);
    assert_eq!(props[&PropertyKey::ExternCallProportion], 13.0 / 23.0);
}

#[test]
fn section_header_line_in_hex() {
    let headers = "Sections:\nIdx Name          Size      VMA               LMA               File off  Algn\n  12 .text  0001a2b0\n";
    assert_eq!(parse_section_headers(headers).unwrap(), 107_184);
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

#[test]
fn suite_fit_recovers_injected_structure() {
    let d = suite_fixture();
    let truth: GroundTruth = serde_json::from_str(&read("suite.truth.json")).unwrap();
    let spec = DesignSpec::default_model(&d, None).unwrap();
    let m = build_design_matrix(&rank_for_design(&d, &spec).unwrap(), &spec).unwrap();
    let fit = ols_fit(&m.matrix, &m.response).unwrap();
    assert!((0.5..=0.8).contains(&fit.r2), "R2 {}", fit.r2);

    let mut checked = 0;
    for (label, est) in fit.labels.iter().zip(&fit.coefficients) {
        let t = truth.get(label).unwrap_or_else(|| panic!("no truth for {label}"));
        if label != "intercept" && t != 0.0 {
            assert_eq!(sign(*est), sign(t), "{label}: fitted {est}, injected {t}");
            checked += 1;
        }
    }
    assert!(checked >= 10, "only {checked} nonzero terms");

    let per = DesignSpec { per_benchmark: true, ..spec.clone() };
    let m = build_design_matrix(&rank_for_design(&d, &per).unwrap(), &per).unwrap();
    let per_r2 = ols_fit(&m.matrix, &m.response).unwrap().r2;
    assert!(per_r2 > fit.r2, "per-benchmark {per_r2} vs pooled {}", fit.r2);
}

// Residuals are independent across trials but the fuzzers of one trial share
// a rank budget, so adjacent rows of the same trial are negatively correlated.
// The check of independent noise therefore uses an order in which neighbours
// come from different trials.
#[test]
fn suite_durbin_watson_by_residual_order() {
    let d = suite_fixture();
    let spec = DesignSpec::default_model(&d, None).unwrap();
    let rd = rank_for_design(&d, &spec).unwrap();
    let model = fit_explainable_model(&rd, &spec, &BootstrapSpec::wild(100, 1)).unwrap();

    let across = diagnose(&model, &rd, ResidualOrder::ProgramFuzzerTrial).unwrap();
    assert!(across.dw_p_value > 0.05, "p {}", across.dw_p_value);

    let within = diagnose(&model, &rd, ResidualOrder::Sorted).unwrap();
    assert!(within.durbin_watson > 2.0 && within.dw_p_value < 0.05, "{within:?}");
}
