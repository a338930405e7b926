//! Synthetic campaigns with known ground truth.
//!
//! Properties are drawn per trial (corpus level) or per program, ranked the
//! same way the regression design ranks them, and shifted by the same
//! reference levels. Each fuzzer then gets a score
//!
//! ```text
//! s_f(X) = skill_f + sum_p sens_{p,f} * X_p
//! ```
//!
//! which decides the order of the fuzzers in the trial through one of the
//! [`Mechanism`]s. Performance values are generated so that their order
//! within a trial is exactly that order.
//!
//! Only differences between fuzzers affect ranks, so the reported truth uses
//! skills and sensitivities centered over fuzzers.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PropertyKey, PropertyLevel, TrialRecord};
use crate::error::{Error, Result};
use crate::ranking::ranks_unchecked;
use crate::regression::design::{fuzzer_label, inter_label, prop_label, INTERCEPT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Order fuzzers by `s_f(X) + N(0, noise_sd)`.
    #[default]
    Latent,
    /// Draw the order so that the expected rank of fuzzer `f` is exactly
    /// `(F + 1)/2 + s_f(X)` (scores centered over fuzzers). The rank noise is
    /// intrinsic and `noise_sd` is unused. Coefficients are then on the rank
    /// scale and a correctly specified regression recovers them.
    ExpectedRank,
    /// Like `Latent` but each centered rank enters through a monotone
    /// nonlinear map, so a linear model on ranks is misspecified.
    Monotone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PropertyDist {
    LogNormal { mu: f64, sigma: f64 },
    Uniform { low: f64, high: f64 },
    /// `ln v = intercept + slope * ln(of) + N(0, sigma)`; `of` must be
    /// generated earlier at the same level.
    LogLinear {
        of: PropertyKey,
        intercept: f64,
        slope: f64,
        sigma: f64,
    },
    /// `1 - of`.
    Complement { of: PropertyKey },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyGenerator {
    pub key: PropertyKey,
    pub level: PropertyLevel,
    pub dist: PropertyDist,
    #[serde(default)]
    pub round: bool,
    /// Effect of the property's normalized rank on every fuzzer's performance
    /// (does not change the order of fuzzers within a trial).
    #[serde(default)]
    pub performance_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzerTruth {
    pub id: String,
    pub skill: f64,
    #[serde(default)]
    pub sensitivity: BTreeMap<PropertyKey, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub programs: usize,
    #[serde(default = "default_trials")]
    pub trials_per_program: usize,
    pub fuzzers: Vec<FuzzerTruth>,
    pub properties: Vec<PropertyGenerator>,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub mechanism: Mechanism,
    /// Defaults to the first fuzzer.
    #[serde(default)]
    pub reference_fuzzer: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Spread of performance between fuzzers of one trial, as a log factor
    /// per position.
    #[serde(default = "default_perf_spread")]
    pub perf_spread: f64,
    /// Log-scale noise on the trial's baseline performance.
    #[serde(default = "default_trial_noise")]
    pub trial_noise_sd: f64,
}

fn default_trials() -> usize {
    24
}

fn default_perf_spread() -> f64 {
    0.05
}

fn default_trial_noise() -> f64 {
    0.1
}

/// True coefficients, labelled like the regression design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub mechanism: Mechanism,
    pub reference_fuzzer: String,
    /// `intercept`, `prop:<key>`, `fuzzer:<id>`, `inter:<key>:<id>` for all
    /// generated properties. On the rank scale for `ExpectedRank`, on the
    /// latent score scale otherwise.
    pub coefficients: BTreeMap<String, f64>,
    /// Slope of each fuzzer's rank on each property rank (centered
    /// sensitivities), keyed `fuzzer -> property`.
    pub rank_slopes: BTreeMap<String, BTreeMap<PropertyKey, f64>>,
}

impl GroundTruth {
    pub fn get(&self, label: &str) -> Option<f64> {
        self.coefficients.get(label).copied()
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.programs == 0 || self.trials_per_program == 0 {
            return Err(Error::invalid("programs and trials per program must be at least 1"));
        }
        if self.fuzzers.is_empty() {
            return Err(Error::invalid("at least one fuzzer is required"));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::invalid(format!("noise_sd {} must be finite and >= 0", self.noise_sd)));
        }
        if !(self.perf_spread.is_finite() && self.perf_spread > 0.0) {
            return Err(Error::invalid("perf_spread must be finite and > 0"));
        }
        if !(self.trial_noise_sd.is_finite() && self.trial_noise_sd >= 0.0) {
            return Err(Error::invalid("trial_noise_sd must be finite and >= 0"));
        }
        let mut ids: Vec<&str> = self.fuzzers.iter().map(|f| f.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate fuzzer id"));
        }
        if let Some(r) = &self.reference_fuzzer {
            if !self.fuzzers.iter().any(|f| &f.id == r) {
                return Err(Error::Unknown { kind: "fuzzer", name: r.clone() });
            }
        }
        for (i, g) in self.properties.iter().enumerate() {
            if self.properties[..i].iter().any(|h| h.key == g.key) {
                return Err(Error::invalid(format!("property `{}` generated twice", g.key)));
            }
            if let Some(l) = g.key.known_level() {
                if l != g.level {
                    return Err(Error::invalid(format!(
                        "property `{}` is {:?}-level, generator says {:?}",
                        g.key, l, g.level
                    )));
                }
            }
            if let PropertyDist::LogLinear { of, .. } | PropertyDist::Complement { of } = &g.dist {
                let ok = self.properties[..i].iter().any(|h| &h.key == of && h.level == g.level);
                if !ok {
                    return Err(Error::invalid(format!(
                        "`{}` depends on `{of}`, which must be generated earlier at the same level",
                        g.key
                    )));
                }
            }
        }
        for f in &self.fuzzers {
            for k in f.sensitivity.keys() {
                if !self.properties.iter().any(|g| &g.key == k) {
                    return Err(Error::invalid(format!(
                        "fuzzer `{}` is sensitive to `{k}`, which is not generated",
                        f.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn reference(&self) -> &str {
        self.reference_fuzzer
            .as_deref()
            .unwrap_or(self.fuzzers[0].id.as_str())
    }

    fn centered(&self) -> (Vec<f64>, BTreeMap<PropertyKey, Vec<f64>>) {
        let nf = self.fuzzers.len() as f64;
        let mean_skill = self.fuzzers.iter().map(|f| f.skill).sum::<f64>() / nf;
        let skill = self.fuzzers.iter().map(|f| f.skill - mean_skill).collect();
        let mut sens = BTreeMap::new();
        for g in &self.properties {
            let raw: Vec<f64> = self
                .fuzzers
                .iter()
                .map(|f| f.sensitivity.get(&g.key).copied().unwrap_or(0.0))
                .collect();
            let m = raw.iter().sum::<f64>() / nf;
            sens.insert(g.key.clone(), raw.iter().map(|v| v - m).collect());
        }
        (skill, sens)
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let (skill, sens) = self.centered();
        let r = self.fuzzers.iter().position(|f| f.id == self.reference()).unwrap_or(0);
        let mut c = BTreeMap::new();
        let base = match self.mechanism {
            Mechanism::ExpectedRank => (self.fuzzers.len() as f64 + 1.0) / 2.0,
            _ => 0.0,
        };
        c.insert(INTERCEPT.to_string(), base + skill[r]);
        for g in &self.properties {
            c.insert(prop_label(&g.key), sens[&g.key][r]);
        }
        for (i, f) in self.fuzzers.iter().enumerate() {
            if i == r {
                continue;
            }
            c.insert(fuzzer_label(&f.id), skill[i] - skill[r]);
            for g in &self.properties {
                let s = &sens[&g.key];
                c.insert(inter_label(&g.key, &f.id), s[i] - s[r]);
            }
        }
        let rank_slopes = self
            .fuzzers
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let m = self.properties.iter().map(|g| (g.key.clone(), sens[&g.key][i])).collect();
                (f.id.clone(), m)
            })
            .collect();
        GroundTruth {
            mechanism: self.mechanism,
            reference_fuzzer: self.reference().to_string(),
            coefficients: c,
            rank_slopes,
        }
    }

    /// Four fuzzers and the four default model properties plus seed count,
    /// with moderate latent noise. Intended for tests and examples.
    pub fn small(programs: usize, trials_per_program: usize, seed: u64) -> SynthSpec {
        let mut s = SynthSpec::suite();
        s.programs = programs;
        s.trials_per_program = trials_per_program;
        s.seed = seed;
        s.properties.retain(|g| {
            matches!(
                g.key,
                PropertyKey::SeedCount
                    | PropertyKey::InitCoverage
                    | PropertyKey::MeanExecNs
                    | PropertyKey::MeanSeedBytes
                    | PropertyKey::ProgramTextBytes
            )
        });
        s
    }

    /// Four fuzzers, eleven programs, 24 trials each. The reference fuzzer
    /// loses ground as initial coverage, execution time and program size
    /// grow; `aflplusplus` gains with program size.
    pub fn suite() -> SynthSpec {
        let fuzzer = |id: &str, skill: f64, cov: f64, exec: f64, size: f64| FuzzerTruth {
            id: id.to_string(),
            skill,
            sensitivity: BTreeMap::from([
                (PropertyKey::InitCoverage, cov),
                (PropertyKey::MeanExecNs, exec),
                (PropertyKey::ProgramTextBytes, size),
            ]),
        };
        let corpus = |key, dist, round, w| PropertyGenerator {
            key,
            level: PropertyLevel::Corpus,
            dist,
            round,
            performance_weight: w,
        };
        let program = |key, dist, round| PropertyGenerator {
            key,
            level: PropertyLevel::Program,
            dist,
            round,
            performance_weight: 0.0,
        };
        SynthSpec {
            programs: 11,
            trials_per_program: 24,
            fuzzers: vec![
                fuzzer("libfuzzer", 0.0, -0.08, -0.05, -0.25),
                fuzzer("afl", -1.2, 0.04, 0.0, 0.0),
                fuzzer("aflplusplus", 0.8, 0.02, 0.05, 0.25),
                fuzzer("entropic", 0.6, 0.02, 0.0, 0.0),
            ],
            properties: vec![
                corpus(
                    PropertyKey::SeedCount,
                    PropertyDist::LogNormal { mu: 5.3, sigma: 0.8 },
                    true,
                    0.0,
                ),
                corpus(
                    PropertyKey::InitCoverage,
                    PropertyDist::LogLinear {
                        of: PropertyKey::SeedCount,
                        intercept: 5.0,
                        slope: 0.6,
                        sigma: 0.12,
                    },
                    true,
                    1.0,
                ),
                corpus(
                    PropertyKey::MeanExecNs,
                    PropertyDist::LogNormal { mu: 10.8, sigma: 0.5 },
                    false,
                    -0.2,
                ),
                corpus(
                    PropertyKey::MeanSeedBytes,
                    PropertyDist::LogNormal { mu: 7.6, sigma: 1.0 },
                    false,
                    0.0,
                ),
                program(
                    PropertyKey::ProgramTextBytes,
                    PropertyDist::LogNormal { mu: 13.1, sigma: 0.8 },
                    true,
                ),
                program(
                    PropertyKey::EqProportion,
                    PropertyDist::Uniform { low: 0.35, high: 0.65 },
                    false,
                ),
                program(
                    PropertyKey::IneqProportion,
                    PropertyDist::Complement { of: PropertyKey::EqProportion },
                    false,
                ),
                program(
                    PropertyKey::ExternCallProportion,
                    PropertyDist::Uniform { low: 0.05, high: 0.4 },
                    false,
                ),
            ],
            noise_sd: 1.0,
            mechanism: Mechanism::Latent,
            reference_fuzzer: Some("libfuzzer".into()),
            seed: 0x5EED_2024,
            perf_spread: default_perf_spread(),
            trial_noise_sd: 0.15,
        }
    }
}

fn draw<R: Rng>(dist: &PropertyDist, done: &BTreeMap<PropertyKey, f64>, rng: &mut R) -> Result<f64> {
    let normal = |sd: f64| Normal::new(0.0, sd).map_err(|e| Error::invalid(e.to_string()));
    Ok(match dist {
        PropertyDist::LogNormal { mu, sigma } => (mu + normal(*sigma)?.sample(rng)).exp(),
        PropertyDist::Uniform { low, high } => {
            if !(low < high) {
                return Err(Error::invalid(format!("uniform bounds {low} >= {high}")));
            }
            rng.random_range(*low..*high)
        }
        PropertyDist::LogLinear { of, intercept, slope, sigma } => {
            let base = done[of];
            if base <= 0.0 {
                return Err(Error::invalid(format!("`{of}` must be positive for a log-linear draw")));
            }
            (intercept + slope * base.ln() + normal(*sigma)?.sample(rng)).exp()
        }
        PropertyDist::Complement { of } => 1.0 - done[of],
    })
}

fn draw_level<R: Rng>(
    spec: &SynthSpec,
    level: PropertyLevel,
    rng: &mut R,
) -> Result<BTreeMap<PropertyKey, f64>> {
    let mut out = BTreeMap::new();
    for g in spec.properties.iter().filter(|g| g.level == level) {
        let mut v = draw(&g.dist, &out, rng)?;
        if g.round {
            v = v.round();
        }
        out.insert(g.key.clone(), v);
    }
    Ok(out)
}

fn monotone(x: f64, span: f64) -> f64 {
    if span <= 0.0 {
        x
    } else {
        span * x.signum() * (x.abs() / span).powi(2)
    }
}

/// Sample an ordering (positions 1..=F per fuzzer) with expected positions
/// `(F + 1)/2 + s_f`: with probability `2 s_f / F` fuzzer `f` is placed top
/// (bottom when negative), the others uniformly at random.
fn expected_rank_order<R: Rng>(scores: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    let nf = scores.len();
    let c: Vec<f64> = scores.iter().map(|s| 2.0 * s / nf as f64).collect();
    let total: f64 = c.iter().map(|v| v.abs()).sum();
    if total > 1.0 + 1e-12 {
        return Err(Error::invalid(format!(
            "expected-rank mechanism infeasible: mixture weights sum to {total:.3} > 1; \
             reduce skills or sensitivities"
        )));
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pinned = None;
    for (f, ci) in c.iter().enumerate() {
        acc += ci.abs();
        if u < acc {
            pinned = Some((f, *ci > 0.0));
            break;
        }
    }
    let mut order: Vec<usize> = (0..nf).filter(|&f| Some(f) != pinned.map(|p| p.0)).collect();
    order.shuffle(rng);
    match pinned {
        Some((f, true)) => order.push(f),
        Some((f, false)) => order.insert(0, f),
        None => {}
    }
    // order lists fuzzers worst to best
    let mut pos = vec![0; nf];
    for (i, &f) in order.iter().enumerate() {
        pos[f] = i + 1;
    }
    Ok(pos)
}

/// Generate a dataset and its ground truth.
pub fn generate(spec: &SynthSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let np = spec.programs;
    let nt = spec.trials_per_program;
    let nf = spec.fuzzers.len();
    let width = np.to_string().len().max(2);
    let programs: Vec<String> = (1..=np).map(|i| format!("prog{i:0width$}")).collect();

    let prog_vals: Vec<BTreeMap<PropertyKey, f64>> = (0..np)
        .map(|_| draw_level(spec, PropertyLevel::Program, &mut rng))
        .collect::<Result<_>>()?;
    let prog_base: Vec<f64> = (0..np).map(|_| 1000.0 * rng.random_range(1.0f64..20.0)).collect();
    let trial_vals: Vec<Vec<BTreeMap<PropertyKey, f64>>> = (0..np)
        .map(|_| {
            (0..nt)
                .map(|_| draw_level(spec, PropertyLevel::Corpus, &mut rng))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    // centered ranks, as the design computes them
    let mut xc: BTreeMap<PropertyKey, Vec<Vec<f64>>> = BTreeMap::new();
    let mut span: BTreeMap<PropertyKey, f64> = BTreeMap::new();
    for g in &spec.properties {
        let m = match g.level {
            PropertyLevel::Program => {
                let vals: Vec<f64> = prog_vals.iter().map(|v| v[&g.key]).collect();
                let r = ranks_unchecked(&vals);
                let ref_level = (np as f64 + 1.0) / 2.0;
                span.insert(g.key.clone(), (np as f64 - 1.0) / 2.0);
                (0..np).map(|p| vec![r[p] - ref_level; nt]).collect()
            }
            PropertyLevel::Corpus => {
                span.insert(g.key.clone(), nt as f64 - 1.0);
                (0..np)
                    .map(|p| {
                        let vals: Vec<f64> = trial_vals[p].iter().map(|v| v[&g.key]).collect();
                        ranks_unchecked(&vals).into_iter().map(|r| r - 1.0).collect()
                    })
                    .collect()
            }
        };
        xc.insert(g.key.clone(), m);
    }

    let (skill, sens) = spec.centered();
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::invalid(e.to_string()))?;
    let trial_noise =
        Normal::new(0.0, spec.trial_noise_sd).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rows = Vec::with_capacity(np * nt * nf);
    for p in 0..np {
        for t in 0..nt {
            let mut scores = skill.clone();
            let mut base_log = prog_base[p].ln() + trial_noise.sample(&mut rng);
            for g in &spec.properties {
                let x = xc[&g.key][p][t];
                let s = span[&g.key];
                let xe = if spec.mechanism == Mechanism::Monotone { monotone(x, s) } else { x };
                for (f, sc) in scores.iter_mut().enumerate() {
                    *sc += sens[&g.key][f] * xe;
                }
                if g.performance_weight != 0.0 {
                    let unit = if s > 0.0 {
                        match g.level {
                            PropertyLevel::Corpus => x / s,
                            PropertyLevel::Program => (x + s) / (2.0 * s),
                        }
                    } else {
                        0.0
                    };
                    base_log += (1.0 + g.performance_weight * unit).max(0.05).ln();
                }
            }
            let position_score: Vec<f64> = match spec.mechanism {
                Mechanism::ExpectedRank => expected_rank_order(&scores, &mut rng)?
                    .into_iter()
                    .map(|v| v as f64)
                    .collect(),
                Mechanism::Latent | Mechanism::Monotone => {
                    scores.iter().map(|s| s + noise.sample(&mut rng)).collect()
                }
            };
            // Performance follows the within-trial position, which keeps the
            // order and stays finite whatever the score scale.
            let position = ranks_unchecked(&position_score);
            let mut props = prog_vals[p].clone();
            props.extend(trial_vals[p][t].clone());
            for (f, fz) in spec.fuzzers.iter().enumerate() {
                rows.push(TrialRecord {
                    program: programs[p].clone(),
                    fuzzer: fz.id.clone(),
                    trial: t as u64,
                    properties: props.clone(),
                    performance: (base_log + spec.perf_spread * position[f]).exp(),
                });
            }
        }
    }
    Ok((Dataset::new(rows)?, spec.ground_truth()))
}

/// The bundled demonstration dataset.
pub fn suite_fixture() -> Dataset {
    generate(&SynthSpec::suite())
        .expect("built-in spec is valid")
        .0
}
