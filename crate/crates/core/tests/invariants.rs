//! Property tests for invariants that hold across modules.

use std::collections::BTreeMap;

use fuzzeval_core::bootstrap::{wild_bootstrap, BootstrapSpec, ResampleUnit};
use fuzzeval_core::data::{parse_dataset, validate_dataset, DataFormat, Dataset, TrialRecord};
use fuzzeval_core::props::{corpus_properties, parse_disassembly, CorpusManifest, SeedEntry};
use fuzzeval_core::regression::{
    build_design_matrix, fit_explainable_model, ols_fit, rank_for_design, DesignSpec, Matrix,
};
use fuzzeval_core::synth::{generate, SynthSpec};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn small(seed: u64) -> Dataset {
    let mut s = SynthSpec::small(3, 8, seed);
    s.noise_sd = 0.8;
    generate(&s).unwrap().0
}

fn quick_boot() -> BootstrapSpec {
    BootstrapSpec::wild(100, 1)
}

const LINES: &[&str] = &[
    "  401000:\t74 05\tje     401007 <f+0x7>",
    "  401002:\t0f 8f 10 00 00 00\tjg     401018 <f+0x18>",
    "  401008:\te8 00 00 00 00\tcall   40100d <puts@plt>",
    "  40100d:\te8 00 00 00 00\tcallq  401012 <g>",
    "  401012:\t0f 94 c0\tsete   %al",
    "  401015:\t48 89 e5\tmov    %rsp,%rbp",
    "  401018:\tc3\tret",
    "0000000000401020 <h>:",
    "",
    "  401020:\tf2 e8 00 00 00 00\tbnd call 401030 <memcpy@plt>",
    "  401026:\t0f 4e c1\tcmovle %ecx,%eax",
    "  401029:\t66 90\txchg   %ax,%ax",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn csv_round_trip_is_identical_and_clean(seed in any::<u64>()) {
        let d = small(seed);
        let csv = d.to_csv_string().unwrap();
        let back = parse_dataset(csv.as_bytes(), DataFormat::Csv).unwrap();
        prop_assert_eq!(back.to_csv_string().unwrap(), csv);
        prop_assert!(validate_dataset(&back).is_empty());
        prop_assert_eq!(back.trials(), d.trials());
    }

    #[test]
    fn fit_ignores_row_order(seed in any::<u64>(), shuffle in any::<u64>()) {
        let d = small(seed);
        let mut rows: Vec<TrialRecord> = d.trials().to_vec();
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let e = Dataset::new(rows).unwrap();
        let fit = |d: &Dataset| {
            let spec = DesignSpec::default_model(d, Some("libfuzzer")).unwrap();
            let m = build_design_matrix(&rank_for_design(d, &spec).unwrap(), &spec).unwrap();
            let f = ols_fit(&m.matrix, &m.response).unwrap();
            f.labels.into_iter().zip(f.coefficients).collect::<BTreeMap<_, _>>()
        };
        let (a, b) = (fit(&d), fit(&e));
        prop_assert_eq!(a.len(), b.len());
        for (k, v) in &a {
            prop_assert!((v - b[k]).abs() < 1e-9, "{}: {} vs {}", k, v, b[k]);
        }
    }

    #[test]
    fn indicator_columns_count_fuzzer_rows(seed in any::<u64>()) {
        let d = small(seed);
        let spec = DesignSpec::default_model(&d, None).unwrap();
        let m = build_design_matrix(&rank_for_design(&d, &spec).unwrap(), &spec).unwrap();
        for f in spec.non_reference_fuzzers() {
            let j = m.matrix.labels().iter().position(|l| *l == format!("fuzzer:{f}")).unwrap();
            let sum: f64 = m.matrix.column(j).iter().sum();
            let count = d.trials().iter().filter(|t| &t.fuzzer == f).count();
            prop_assert_eq!(sum, count as f64);
        }
    }

    #[test]
    fn disassembly_counts_are_additive(
        a in prop::collection::vec(0..LINES.len(), 0..40),
        b in prop::collection::vec(0..LINES.len(), 0..40),
    ) {
        let text = |idx: &[usize]| idx.iter().map(|&i| format!("{}\n", LINES[i])).collect::<String>();
        let (ta, tb) = (text(&a), text(&b));
        prop_assert_eq!(
            parse_disassembly(&format!("{ta}{tb}")),
            parse_disassembly(&ta) + parse_disassembly(&tb)
        );
    }

    #[test]
    fn corpus_properties_ignore_manifest_order(seed in any::<u64>(), n in 1usize..60) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let entries: Vec<SeedEntry> = (0..n)
            .map(|i| SeedEntry {
                id: format!("s{i}"),
                size_bytes: r.random_range(1..10_000),
                exec_ns: r.random_range(1..1_000_000) as f64,
                covered: (0..r.random_range(0..30)).map(|_| r.random_range(0..500)).collect(),
            })
            .collect();
        let mut shuffled = entries.clone();
        shuffled.shuffle(&mut r);
        let a = corpus_properties(&CorpusManifest { entries, universe: Some(500) }).unwrap();
        let b = corpus_properties(&CorpusManifest { entries: shuffled, universe: Some(500) }).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_give_different_data(a in any::<u64>(), b in any::<u64>()) {
        prop_assume!(a != b);
        let (da, db, again) = (small(a), small(b), small(a));
        prop_assert_ne!(da.trials(), db.trials());
        prop_assert_eq!(da.trials(), again.trials());
    }
}

#[test]
fn single_fuzzer_without_interactions_is_plain_multiple_regression() {
    let d = small(3);
    let rows: Vec<TrialRecord> = d.trials().iter().filter(|t| t.fuzzer == "afl").cloned().collect();
    let one = Dataset::new(rows).unwrap();
    let mut spec = DesignSpec::default_model(&one, None).unwrap();
    spec.include_interactions = false;
    let rd = rank_for_design(&one, &spec).unwrap();
    let model = fit_explainable_model(&rd, &spec, &quick_boot()).unwrap();

    let mut labels = vec!["intercept".to_string()];
    let mut cols = vec![vec![1.0; one.len()]];
    for k in &spec.properties {
        labels.push(format!("prop:{k}"));
        let ranks = rd.property_rank(k, spec.scope(k)).unwrap();
        cols.push(ranks.iter().map(|r| r - spec.reference(k)).collect());
    }
    let y = rd.fuzzer_rank().to_vec();
    let direct = ols_fit(&Matrix::from_columns(labels, cols).unwrap(), &y).unwrap();
    assert_eq!(model.fit.labels, direct.labels);
    for (a, b) in model.fit.coefficients.iter().zip(&direct.coefficients) {
        assert!((a - b).abs() < 1e-9);
    }
}

/// Shuffle performance among the fuzzers of each trial, which breaks any
/// link between fuzzer, properties and rank.
fn permute_within_trials(d: &Dataset, seed: u64) -> Dataset {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = d.trials().to_vec();
    for unit in d.units() {
        let mut perf: Vec<f64> = unit.rows.iter().map(|&i| rows[i].performance).collect();
        perf.shuffle(&mut r);
        for (&i, p) in unit.rows.iter().zip(perf) {
            rows[i].performance = p;
        }
    }
    Dataset::new(rows).unwrap()
}

#[test]
fn permuted_response_gives_null_r2() {
    let mut spec = SynthSpec::small(11, 24, 9);
    spec.noise_sd = 1.0;
    let d = generate(&spec).unwrap().0;
    let r2 = |d: &Dataset| {
        let spec = DesignSpec::default_model(d, None).unwrap();
        let m = build_design_matrix(&rank_for_design(d, &spec).unwrap(), &spec).unwrap();
        ols_fit(&m.matrix, &m.response).unwrap().r2
    };
    let observed = r2(&d);
    let null: Vec<f64> = (0..50).map(|s| r2(&permute_within_trials(&d, s))).collect();
    let mean = null.iter().sum::<f64>() / null.len() as f64;
    // 19 regressors on 1056 rows: E[R2] under the null is about 19/1055.
    assert!(mean < 0.04, "null mean R2 {mean}");
    assert!(null.iter().all(|&v| v < observed), "observed {observed}");
}

#[test]
fn interval_width_shrinks_with_sample_size() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut width = |n: usize| {
        (0..20)
            .map(|s| {
                let x: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
                let y: Vec<f64> = x.iter().map(|x| x + noise.sample(&mut r)).collect();
                let m = Matrix::from_columns(
                    vec!["intercept".into(), "x".into()],
                    vec![vec![1.0; n], x],
                )
                .unwrap();
                let e = wild_bootstrap(&m, &y, &BootstrapSpec::wild(200, s)).unwrap();
                let e = e.get("x").unwrap();
                e.ci_high - e.ci_low
            })
            .sum::<f64>()
    };
    let (w50, w200, w800) = (width(50), width(200), width(800));
    assert!(w50 > w200 && w200 > w800, "{w50} {w200} {w800}");
}

#[test]
fn overwhelming_noise_leaves_no_signal() {
    let mut inside = 0;
    let mut total = 0;
    for seed in 0..5 {
        let mut spec = SynthSpec::small(11, 24, seed);
        spec.noise_sd = 1e6;
        let d = generate(&spec).unwrap().0;
        let design = DesignSpec::default_model(&d, None).unwrap();
        let rd = rank_for_design(&d, &design).unwrap();
        let boot = BootstrapSpec {
            unit: ResampleUnit::Trial,
            ..BootstrapSpec::wild(400, seed)
        };
        let model = fit_explainable_model(&rd, &design, &boot).unwrap();
        for e in model.ci.entries.iter().filter(|e| e.term != "intercept") {
            total += 1;
            if e.contains(0.0) {
                inside += 1;
            }
        }
    }
    let rate = inside as f64 / total as f64;
    assert!(rate >= 0.85, "{inside}/{total}");
}
