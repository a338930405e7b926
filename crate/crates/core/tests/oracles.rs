//! Results checked against independent reference computations: brute-force
//! enumeration, normal equations, set unions and Monte-Carlo simulation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use fuzzeval_core::bootstrap::{derive_replicate_seed, wild_bootstrap, BootstrapSpec};
use fuzzeval_core::data::{PropertyKey, PropertyLevel};
use fuzzeval_core::diagnostics::{qq_normal, scale_location, standardized_residuals, vif_from_columns};
use fuzzeval_core::props::{corpus_properties, draw_sample_size, parse_manifest};
use fuzzeval_core::ranking::{rank_dataset, RankScope};
use fuzzeval_core::regression::{ols_fit, per_fuzzer_slopes, Matrix};
use fuzzeval_core::stats::{pairwise_table, spearman_rho};
use fuzzeval_core::synth::{generate, FuzzerTruth, Mechanism, PropertyDist, PropertyGenerator, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Solve `(X'X) b = X'y` by Gauss-Jordan elimination with partial pivoting.
fn normal_equations(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = rows[0].len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (r, yi) in rows.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += r[i] * r[j];
            }
            a[i][p] += r[i] * yi;
        }
    }
    for c in 0..p {
        let piv = (c..p)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, piv);
        for r in 0..p {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=p {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    (0..p).map(|i| a[i][p] / a[i][i]).collect()
}

#[test]
fn ols_matches_normal_equations_on_random_systems() {
    let mut r = rng(11);
    let noise = Normal::new(0.0, 1.0).unwrap();
    for _ in 0..50 {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let mut v = vec![1.0];
                v.extend((0..4).map(|_| r.random_range(-3.0..3.0)));
                v
            })
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|x| 0.5 + 2.0 * x[1] - x[2] + 0.25 * x[4] + noise.sample(&mut r))
            .collect();
        let fit = ols_fit(&Matrix::from_rows(&rows).unwrap(), &y).unwrap();
        let oracle = normal_equations(&rows, &y);
        for (b, o) in fit.coefficients.iter().zip(&oracle) {
            assert!((b - o).abs() <= 1e-6 * o.abs().max(1e-3), "{b} vs {o}");
        }
        for j in 0..5 {
            let dot: f64 = rows.iter().zip(&fit.residuals).map(|(x, e)| x[j] * e).sum();
            assert!(dot.abs() < 1e-8, "residuals not orthogonal to column {j}: {dot}");
        }
    }
}

fn latent_spec(seed: u64) -> SynthSpec {
    let mut s = SynthSpec::small(3, 24, seed);
    s.noise_sd = 0.7;
    s
}

#[test]
fn mean_fuzzer_rank_matches_brute_force() {
    let (d, _) = generate(&latent_spec(5)).unwrap();
    let rd = rank_dataset(&d, &[], RankScope::Global).unwrap();
    let mut trials: HashMap<(String, u64), Vec<(String, f64)>> = HashMap::new();
    for t in d.trials() {
        trials
            .entry((t.program.clone(), t.trial))
            .or_default()
            .push((t.fuzzer.clone(), t.performance));
    }
    let mut sums: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for runs in trials.values() {
        for (f, v) in runs {
            let below = runs.iter().filter(|(_, w)| w < v).count() as f64;
            let equal = runs.iter().filter(|(_, w)| w == v).count() as f64;
            let e = sums.entry(f.clone()).or_default();
            e.0 += below + (equal + 1.0) / 2.0;
            e.1 += 1.0;
        }
    }
    for (f, mean) in rd.mean_fuzzer_ranks() {
        let (s, n) = sums[&f];
        assert!((mean - s / n).abs() < 1e-12, "{f}: {mean} vs {}", s / n);
    }
}

#[test]
fn within_program_ranks_of_generated_data_match_sort_oracle() {
    let (d, _) = generate(&latent_spec(6)).unwrap();
    let key = PropertyKey::MeanExecNs;
    let rd = rank_dataset(&d, std::slice::from_ref(&key), RankScope::WithinProgram).unwrap();
    let ranks = rd.property_rank(&key, RankScope::WithinProgram).unwrap();
    for p in d.programs() {
        // One value per trial; every row of a trial shares its rank.
        let mut per_trial: BTreeMap<u64, (f64, Vec<usize>)> = BTreeMap::new();
        for (i, t) in d.trials().iter().enumerate().filter(|(_, t)| &t.program == p) {
            let e = per_trial.entry(t.trial).or_insert((t.property(&key).unwrap(), Vec::new()));
            e.1.push(i);
        }
        let mut sorted: Vec<(f64, Vec<usize>)> = per_trial.into_values().collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j < sorted.len() && sorted[j].0 == sorted[i].0 {
                j += 1;
            }
            let avg = (i + 1 + j) as f64 / 2.0;
            for (_, rows) in &sorted[i..j] {
                for row in rows {
                    assert_eq!(ranks[*row], avg);
                }
            }
            i = j;
        }
    }
}

#[test]
fn pairwise_a12_on_shifted_groups_matches_double_loop() {
    let mut r = rng(3);
    let n = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..25).map(|_| (n.sample(&mut r) * 8.0_f64).round()).collect();
    let y: Vec<f64> = (0..25).map(|_| (n.sample(&mut r) * 8.0_f64 + 5.0).round()).collect();
    let t = pairwise_table(&[("x".into(), x.clone()), ("y".into(), y.clone())], 0.05).unwrap();
    let mut score = 0.0;
    for a in &x {
        for b in &y {
            score += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
        }
    }
    assert_eq!(t.a12[0][1], score / 625.0);
}

#[test]
fn independent_properties_are_weakly_correlated() {
    let mut r = rng(17);
    let mut small = 0;
    for _ in 0..200 {
        let x: Vec<f64> = (0..264).map(|_| r.random()).collect();
        let y: Vec<f64> = (0..264).map(|_| r.random()).collect();
        if spearman_rho(&x, &y).unwrap().abs() < 0.2 {
            small += 1;
        }
    }
    assert!(small >= 196, "{small}/200");
}

/// One program-level property ranked over eleven programs; `first` has a
/// centered rank slope of `slope` and the others share the opposite amount.
fn slope_spec(seed: u64, slope: f64) -> SynthSpec {
    let raw = slope * 4.0 / 3.0;
    let fuzzer = |id: &str, s: f64| FuzzerTruth {
        id: id.into(),
        skill: 0.0,
        sensitivity: BTreeMap::from([(PropertyKey::ProgramTextBytes, s)]),
    };
    SynthSpec {
        programs: 11,
        trials_per_program: 24,
        fuzzers: vec![
            fuzzer("first", raw),
            fuzzer("b", 0.0),
            fuzzer("c", 0.0),
            fuzzer("d", 0.0),
        ],
        properties: vec![PropertyGenerator {
            key: PropertyKey::ProgramTextBytes,
            level: PropertyLevel::Program,
            dist: PropertyDist::LogNormal { mu: 12.0, sigma: 1.0 },
            round: true,
            performance_weight: 0.0,
        }],
        noise_sd: 0.0,
        mechanism: Mechanism::ExpectedRank,
        reference_fuzzer: None,
        seed,
        perf_spread: 0.05,
        trial_noise_sd: 0.1,
    }
}

#[test]
fn injected_slope_is_covered_by_slope_intervals() {
    let key = PropertyKey::ProgramTextBytes;
    let mut covered = 0;
    for seed in 0..50 {
        let spec = slope_spec(seed, -0.15);
        let truth = spec.ground_truth().rank_slopes["first"][&key];
        assert!((truth + 0.15).abs() < 1e-12);
        let (d, _) = generate(&spec).unwrap();
        let rd = rank_dataset(&d, std::slice::from_ref(&key), RankScope::Program).unwrap();
        let est = per_fuzzer_slopes(&rd, &key, RankScope::Program, &BootstrapSpec::pairs(500, seed)).unwrap();
        let first = est.iter().find(|e| e.fuzzer == "first").unwrap();
        if first.ci_low <= truth && truth <= first.ci_high {
            covered += 1;
        }
    }
    assert!(covered >= 45, "covered {covered}/50");
}

fn line_design(x: &[f64]) -> Matrix {
    Matrix::from_columns(vec!["intercept".into(), "x".into()], vec![vec![1.0; x.len()], x.to_vec()]).unwrap()
}

#[test]
fn wild_interval_coverage_on_homoscedastic_line() {
    let mut r = rng(21);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut covered = 0;
    for sim in 0..200 {
        let x: Vec<f64> = (0..200).map(|_| r.random_range(0.0..10.0)).collect();
        let y: Vec<f64> = x.iter().map(|x| 1.0 + 2.0 * x + noise.sample(&mut r)).collect();
        let ci = wild_bootstrap(&line_design(&x), &y, &BootstrapSpec::wild(500, sim)).unwrap();
        if ci.get("x").unwrap().contains(2.0) {
            covered += 1;
        }
    }
    let rate = covered as f64 / 200.0;
    assert!((0.90..=1.0).contains(&rate), "coverage {rate}");
}

/// Percentile interval from resampling residuals i.i.d., which assumes
/// constant variance.
fn residual_bootstrap_covers(x: &[f64], y: &[f64], truth: f64, seed: u64) -> bool {
    let m = line_design(x);
    let fit = ols_fit(&m, y).unwrap();
    let mut r = rng(seed);
    let mut slopes: Vec<f64> = (0..500)
        .map(|_| {
            let yb: Vec<f64> = fit
                .fitted
                .iter()
                .map(|f| f + fit.residuals[r.random_range(0..x.len())])
                .collect();
            ols_fit(&m, &yb).unwrap().coefficients[1]
        })
        .collect();
    slopes.sort_by(f64::total_cmp);
    let lo = slopes[12];
    let hi = slopes[487];
    lo <= truth && truth <= hi
}

#[test]
fn wild_covers_at_least_as_often_as_residual_resampling_under_heteroscedasticity() {
    let mut r = rng(23);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let (mut wild, mut naive) = (0, 0);
    for sim in 0..200 {
        let x: Vec<f64> = (0..200).map(|_| r.random_range(0.0..10.0)).collect();
        let y: Vec<f64> = x.iter().map(|x| 1.0 + 2.0 * x + x * unit.sample(&mut r)).collect();
        if wild_bootstrap(&line_design(&x), &y, &BootstrapSpec::wild(500, sim))
            .unwrap()
            .get("x")
            .unwrap()
            .contains(2.0)
        {
            wild += 1;
        }
        if residual_bootstrap_covers(&x, &y, 2.0, sim) {
            naive += 1;
        }
    }
    assert!(wild >= naive, "wild {wild} naive {naive}");
}

#[test]
fn replicate_seeds_never_collide_for_adjacent_indices() {
    let mut r = rng(99);
    for _ in 0..1_000_000 {
        let s: u64 = r.random();
        assert_ne!(derive_replicate_seed(s, 0), derive_replicate_seed(s, 1));
    }
}

#[test]
fn heavy_tails_bend_away_from_the_identity_line() {
    let mut r = rng(31);
    let t = StudentT::new(3.0).unwrap();
    let v: Vec<f64> = (0..500).map(|_| t.sample(&mut r)).collect();
    let mean = v.iter().sum::<f64>() / 500.0;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 499.0).sqrt();
    let z: Vec<f64> = v.iter().map(|x| (x - mean) / sd).collect();
    let q = qq_normal(&z).unwrap();
    let (lo, hi) = (q[0], q[q.len() - 1]);
    assert!(lo.1 < lo.0, "lower tail {lo:?}");
    assert!(hi.1 > hi.0, "upper tail {hi:?}");
}

fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn scale_location_trend() {
    let mut r = rng(37);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..500).map(|_| r.random_range(1.0..10.0)).collect();
    let flat: Vec<f64> = x.iter().map(|x| 3.0 + x + unit.sample(&mut r)).collect();
    let fit = ols_fit(&line_design(&x), &flat).unwrap();
    assert!(ls_slope(&scale_location(&fit).unwrap()).abs() < 0.05);

    let growing: Vec<f64> = x.iter().map(|x| 3.0 + x + 0.3 * (3.0 + x) * unit.sample(&mut r)).collect();
    let fit = ols_fit(&line_design(&x), &growing).unwrap();
    assert!(ls_slope(&scale_location(&fit).unwrap()) > 0.0);
    assert_eq!(standardized_residuals(&fit).unwrap().len(), 500);
}

#[test]
fn independent_predictors_have_small_vif() {
    let mut r = rng(41);
    for _ in 0..20 {
        let cols: Vec<Vec<f64>> = (0..4).map(|_| (0..264).map(|_| r.random()).collect()).collect();
        for v in vif_from_columns(&cols).unwrap() {
            assert!(v < 2.0, "vif {v}");
        }
    }
}

#[test]
fn initial_coverage_is_the_union_of_covered_branches() {
    let mut r = rng(43);
    let universe = 5000u64;
    let mut text = format!("#universe={universe}\nseed_id,size_bytes,exec_ns,covered\n");
    let mut bits = vec![false; universe as usize];
    for i in 0..1000 {
        let k = r.random_range(0..20);
        let covered: Vec<String> = (0..k)
            .map(|_| {
                let b = r.random_range(0..universe);
                bits[b as usize] = true;
                b.to_string()
            })
            .collect();
        text.push_str(&format!("s{i},{},{},{}\n", r.random_range(1..5000), r.random_range(1..100000), covered.join(";")));
    }
    let p = corpus_properties(&parse_manifest(&text).unwrap()).unwrap();
    let expected = bits.iter().filter(|b| **b).count() as f64;
    assert_eq!(p[&PropertyKey::InitCoverage], expected);
    assert_eq!(p[&PropertyKey::SeedCount], 1000.0);
    assert_eq!(
        p[&PropertyKey::Custom("init_coverage_fraction".into())],
        expected / universe as f64
    );
}

#[test]
fn pre_clamp_sample_size_mean() {
    let mut r = rng(47);
    let total: u64 = (0..100_000).map(|_| draw_sample_size(1000, 0.2, &mut r).unwrap()).sum();
    let mean = total as f64 / 1e5;
    assert!((mean - 200.0).abs() <= 4.0, "mean {mean}");
}

#[test]
fn generated_panel_is_complete() {
    let (d, _) = generate(&latent_spec(8)).unwrap();
    let units: BTreeSet<(String, u64)> = d.trials().iter().map(|t| (t.program.clone(), t.trial)).collect();
    assert_eq!(units.len() * d.fuzzers().len(), d.len());
}
