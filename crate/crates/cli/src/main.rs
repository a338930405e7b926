//! `fuzzeval`: explainable fuzzer evaluation from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input data, 3 the
//! computation failed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fuzzeval_core::bootstrap::ResampleUnit;
use fuzzeval_core::data::{format_number, parse_dataset};
use fuzzeval_core::diagnostics::{diagnose, ResidualOrder};
use fuzzeval_core::props::{
    corpus_properties, parse_disassembly, parse_manifest, parse_section_headers,
    program_properties, sample_corpus, DEFAULT_MEAN_FRACTION,
};
use fuzzeval_core::ranking::{rank_dataset, RankScope};
use fuzzeval_core::regression::{
    build_design_matrix, fit_explainable_model, per_fuzzer_slopes, rank_for_design,
};
use fuzzeval_core::report::{self, build_report, emit_plot_data, plots, render_text, ReportConfig};
use fuzzeval_core::stats::{pairwise_table, performance_by_fuzzer, property_performance_rho};
use fuzzeval_core::synth::{generate, SynthSpec};
use fuzzeval_core::{
    validate_dataset, BootstrapMethod, BootstrapSpec, DataFormat, Dataset, DesignSpec, Error,
    ExplainableFit, PropertyKey,
};

const SEED_ENV: &str = "FUZZEVAL_SEED";

#[derive(Parser)]
#[command(name = "fuzzeval", version, about = "Explainable fuzzer evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check dataset invariants; exits 0 only when there are none to report.
    Validate {
        #[command(flatten)]
        input: Input,
    },
    /// Spearman correlation of each property with performance.
    Correlate {
        #[command(flatten)]
        input: Input,
        /// Rank every property at this scope instead of its natural one.
        #[arg(long, value_enum)]
        scope: Option<ScopeArg>,
        /// Directory for plot data.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise A12 and Mann-Whitney tests between fuzzers.
    Compare {
        #[command(flatten)]
        input: Input,
        /// Restrict to one program; all programs are pooled otherwise.
        #[arg(long)]
        program: Option<String>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Per-fuzzer slope of fuzzer rank on one property rank.
    Slopes {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        property: String,
        /// Defaults to the property's natural scope.
        #[arg(long, value_enum)]
        scope: Option<ScopeArg>,
        #[command(flatten)]
        boot: BootArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit fuzzer rank on fuzzer, property ranks and their interactions.
    Regress {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        reference: Option<String>,
        /// Replicate the model per program.
        #[arg(long)]
        per_benchmark: bool,
        /// Comma-separated property keys; the default model otherwise.
        #[arg(long, value_delimiter = ',')]
        properties: Option<Vec<String>>,
        #[arg(long)]
        no_interactions: bool,
        #[arg(long, value_enum, default_value_t = OrderArg::Sorted)]
        dw_order: OrderArg,
        #[command(flatten)]
        boot: BootArgs,
        /// Also write coefficients.csv, fit.json, diagnostics.json, qq.csv
        /// and scale_location.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predicted rank from a saved fit, or where two fuzzers cross.
    Predict {
        fit: PathBuf,
        #[arg(long)]
        fuzzer: String,
        /// `<property>=<rank>`; unset properties sit at their reference level.
        #[arg(long = "set", value_name = "KEY=RANK")]
        set: Vec<String>,
        #[arg(long)]
        program: Option<String>,
        #[arg(long, requires = "vary")]
        versus: Option<String>,
        #[arg(long, requires = "versus")]
        vary: Option<String>,
    },
    /// Extract benchmark properties from raw artifacts.
    Props {
        #[command(subcommand)]
        which: PropsCommand,
    },
    /// Draw a random corpus subset with exponentially distributed size.
    SampleCorpus {
        /// One seed id per line; `-` for stdin.
        pool: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MEAN_FRACTION)]
        mean_fraction: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a synthetic campaign with known coefficients.
    Synth {
        /// The built-in four-fuzzer, eleven-program suite (the default).
        #[arg(long, conflicts_with = "spec")]
        suite: bool,
        /// Generator parameters as JSON.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the generator seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset CSV path; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ground-truth JSON path; `<out>.truth.json` when `--out` is given.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Full evaluation as JSON, or text with `--text`.
    Report {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        reference: Option<String>,
        #[arg(long, value_delimiter = ',')]
        properties: Option<Vec<String>>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = OrderArg::Sorted)]
        dw_order: OrderArg,
        #[command(flatten)]
        boot: BootArgs,
        /// Print the text rendering instead of JSON.
        #[arg(long)]
        text: bool,
        /// Write report.json, report.txt and plot data here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PropsCommand {
    /// Corpus properties from a seed manifest.
    Corpus { manifest: PathBuf },
    /// Program properties from `objdump -h` and `objdump -d` output.
    Program {
        #[arg(long)]
        headers: PathBuf,
        #[arg(long)]
        disasm: PathBuf,
    },
}

#[derive(Args)]
struct Input {
    /// Dataset file (CSV or JSON); `-` for stdin.
    data: PathBuf,
    /// Input format; guessed from the extension, CSV for stdin.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct BootArgs {
    #[arg(long, value_enum)]
    boot: Option<MethodArg>,
    #[arg(long, default_value_t = fuzzeval_core::bootstrap::DEFAULT_REPLICATES)]
    boot_reps: usize,
    /// Falls back to FUZZEVAL_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    /// Model bootstrap unit.
    #[arg(long, value_enum, default_value_t = UnitArg::Trial)]
    resample: UnitArg,
    /// Worker threads for bootstrap replicates; all cores by default.
    #[arg(long)]
    threads: Option<usize>,
    /// Run replicates on the calling thread only.
    #[arg(long)]
    serial: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Within,
    Global,
    Program,
}

impl From<ScopeArg> for RankScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Within => RankScope::WithinProgram,
            ScopeArg::Global => RankScope::Global,
            ScopeArg::Program => RankScope::Program,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Wild,
    Pairs,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitArg {
    Trial,
    Observation,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    /// (program, trial, fuzzer)
    Sorted,
    /// (program, fuzzer, trial)
    ProgramFuzzerTrial,
    /// Dataset row order.
    Observed,
}

impl From<OrderArg> for ResidualOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Sorted => ResidualOrder::Sorted,
            OrderArg::ProgramFuzzerTrial => ResidualOrder::ProgramFuzzerTrial,
            OrderArg::Observed => ResidualOrder::Observed,
        }
    }
}

enum Failure {
    Usage(String),
    Core(Error),
    /// Already reported; exit with this code.
    Exit(u8),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::InvalidDataset(_)
        | Error::Json(_)
        | Error::Csv(_) => 2,
        Error::Unknown { .. } => 1,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("fuzzeval: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("fuzzeval: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Exit(c)) => ExitCode::from(c),
    }
}

fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Validate { input } => validate(&input),
        Command::Correlate { input, scope, out } => correlate(&input, scope, out.as_deref()),
        Command::Compare {
            input,
            program,
            alpha,
        } => compare(&input, program.as_deref(), alpha),
        Command::Slopes {
            input,
            property,
            scope,
            boot,
            out,
        } => slopes(&input, &property, scope, &boot, out.as_deref()),
        Command::Regress {
            input,
            reference,
            per_benchmark,
            properties,
            no_interactions,
            dw_order,
            boot,
            out,
        } => {
            let d = load(&input)?;
            let mut spec = design_spec(&d, properties.as_deref(), reference.as_deref())?;
            spec.per_benchmark = per_benchmark;
            spec.include_interactions = !no_interactions;
            regress(&d, &spec, dw_order.into(), &boot, out.as_deref())
        }
        Command::Predict {
            fit,
            fuzzer,
            set,
            program,
            versus,
            vary,
        } => predict(&fit, &fuzzer, &set, program.as_deref(), versus.as_deref(), vary.as_deref()),
        Command::Props { which } => props(which),
        Command::SampleCorpus {
            pool,
            mean_fraction,
            seed,
        } => {
            let text = read_text(&pool)?;
            let ids: Vec<String> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect();
            let picked = sample_corpus(&ids, mean_fraction, resolve_seed(seed)?)?;
            let mut s = String::new();
            for id in picked {
                s.push_str(&id);
                s.push('\n');
            }
            emit(&s)
        }
        Command::Synth {
            suite: _,
            spec,
            seed,
            out,
            truth,
        } => synth(spec.as_deref(), seed, out.as_deref(), truth.as_deref()),
        Command::Report {
            input,
            reference,
            properties,
            alpha,
            dw_order,
            boot,
            text,
            out,
        } => {
            let d = load(&input)?;
            let cfg = ReportConfig {
                dataset: input.data.display().to_string(),
                boot: boot_spec(&boot, BootstrapMethod::Wild)?,
                alpha,
                reference,
                properties: properties.map(|p| parse_keys(&p)).transpose()?,
                dw_order: dw_order.into(),
            };
            let mut r = with_threads(boot.threads, || build_report(&d, &cfg))?;
            if let Some(dir) = &out {
                emit_plot_data(&mut r, &d, &dir.join("plots"))?;
                r.plots = r.plots.iter().map(|p| format!("plots/{p}")).collect();
                write(&dir.join("report.json"), &r.to_json()?)?;
                write(&dir.join("report.txt"), &render_text(&r))?;
            }
            emit(&if text { render_text(&r) } else { r.to_json()? })
        }
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    let mut s = String::new();
    if path == Path::new("-") {
        io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| Error::Io {
                path: "<stdin>".into(),
                source: e,
            })?;
    } else {
        s = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    Ok(s)
}

fn load(input: &Input) -> CliResult<Dataset> {
    let format = match input.format {
        Some(FormatArg::Csv) => DataFormat::Csv,
        Some(FormatArg::Json) => DataFormat::Json,
        None if input.data == Path::new("-") => DataFormat::Csv,
        None => DataFormat::from_path(&input.data),
    };
    let text = read_text(&input.data)?;
    Ok(parse_dataset(text.as_bytes(), format)?)
}

fn emit(s: &str) -> CliResult {
    let mut out = io::stdout().lock();
    // A closed pipe downstream is not an error worth reporting.
    let _ = out.write_all(s.as_bytes()).and_then(|_| out.flush());
    Ok(())
}

fn write(path: &Path, contents: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, contents).map_err(|e| {
        Failure::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn resolve_seed(flag: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn boot_spec(b: &BootArgs, default_method: BootstrapMethod) -> CliResult<BootstrapSpec> {
    let method = match b.boot {
        Some(MethodArg::Wild) => BootstrapMethod::Wild,
        Some(MethodArg::Pairs) => BootstrapMethod::Pairs,
        None => default_method,
    };
    if b.threads == Some(0) {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    let spec = BootstrapSpec {
        replicates: b.boot_reps,
        seed: resolve_seed(b.seed)?,
        method,
        ci_level: b.ci_level,
        unit: match b.resample {
            UnitArg::Trial => ResampleUnit::Trial,
            UnitArg::Observation => ResampleUnit::Observation,
        },
        parallel: !b.serial,
        ..BootstrapSpec::default()
    };
    spec.validate()?;
    Ok(spec)
}

fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> fuzzeval_core::Result<T> + Send,
) -> CliResult<T> {
    match threads {
        None => Ok(f()?),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::Usage(format!("cannot start {n} threads: {e}")))?;
            Ok(pool.install(f)?)
        }
    }
}

fn parse_key(s: &str) -> CliResult<PropertyKey> {
    s.trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("invalid property key `{s}`")))
}

fn parse_keys(keys: &[String]) -> CliResult<Vec<PropertyKey>> {
    keys.iter().map(|k| parse_key(k)).collect()
}

fn design_spec(d: &Dataset, properties: Option<&[String]>, reference: Option<&str>) -> CliResult<DesignSpec> {
    Ok(match properties {
        Some(p) => DesignSpec::for_properties(d, &parse_keys(p)?, reference)?,
        None => DesignSpec::default_model(d, reference)?,
    })
}

fn validate(input: &Input) -> CliResult {
    let format = match input.format {
        Some(FormatArg::Json) => DataFormat::Json,
        Some(FormatArg::Csv) => DataFormat::Csv,
        None if input.data == Path::new("-") => DataFormat::Csv,
        None => DataFormat::from_path(&input.data),
    };
    let text = read_text(&input.data)?;
    let d = fuzzeval_core::data::read_dataset_from(text.as_bytes(), format)?;
    let diags = validate_dataset(&d);
    if diags.is_empty() {
        return emit(&format!(
            "ok: {} rows, {} programs, {} fuzzers\n",
            d.len(),
            d.programs().len(),
            d.fuzzers().len()
        ));
    }
    let mut s = String::new();
    for g in &diags {
        let _ = writeln!(s, "{g}");
    }
    eprint!("{s}");
    eprintln!("fuzzeval: {} problem(s) found", diags.len());
    Err(Failure::Exit(2))
}

fn correlate(input: &Input, scope: Option<ScopeArg>, out: Option<&Path>) -> CliResult {
    let d = load(input)?;
    let keys = d.property_keys().to_vec();
    let mut rd = report::rank_all(&d)?;
    let mut s = String::from("property,scope,perf_scope,rho,n\n");
    for k in &keys {
        let sc = match scope {
            Some(sc) => sc.into(),
            None => rd.natural_scope(k),
        };
        if rd.add_ranks(std::slice::from_ref(k), sc).is_err() {
            let _ = writeln!(s, "{k},{sc},{},NA,{}", plots::perf_scope_for(sc), d.len());
            continue;
        }
        let perf = plots::perf_scope_for(sc);
        let rho = property_performance_rho(&rd, k, sc, perf).ok();
        let _ = writeln!(
            s,
            "{k},{sc},{perf},{},{}",
            rho.map(format_number).unwrap_or_else(|| "NA".into()),
            d.len()
        );
        if let (Some(dir), Some(_)) = (out, rho) {
            let pts = plots::correlate_points(&rd, k, sc)?;
            let stem = format!("correlate_{}_{sc}", plots::file_stem(k));
            write(&dir.join(format!("{stem}.csv")), &plots::correlate_csv(&pts))?;
            let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.property_rank, p.perf_rank)).collect();
            let svg = plots::scatter_svg(&format!("{k} ({sc})"), &format!("{k} rank"), "performance rank", &xy);
            write(&dir.join(format!("{stem}.svg")), &svg)?;
        }
    }
    emit(&s)
}

fn compare(input: &Input, program: Option<&str>, alpha: f64) -> CliResult {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Failure::Usage(format!("--alpha {alpha} outside (0, 1)")));
    }
    let d = load(input)?;
    let t = pairwise_table(&performance_by_fuzzer(&d, program)?, alpha)?;
    let mut s = String::from("row,column,a12,magnitude,p,significant\n");
    for (i, a) in t.labels.iter().enumerate() {
        for (j, b) in t.labels.iter().enumerate() {
            if i == j {
                continue;
            }
            let _ = writeln!(
                s,
                "{a},{b},{},{},{},{}",
                format_number(t.a12[i][j]),
                variant(t.effect(i, j).magnitude),
                format_number(t.p[i][j]),
                t.significant[i][j]
            );
        }
    }
    emit(&s)
}

/// Serialized name of a unit enum variant.
fn variant<T: serde::Serialize>(v: T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

fn slopes(
    input: &Input,
    property: &str,
    scope: Option<ScopeArg>,
    boot: &BootArgs,
    out: Option<&Path>,
) -> CliResult {
    let d = load(input)?;
    let key = parse_key(property)?;
    if !d.property_keys().contains(&key) {
        return Err(Error::Unknown {
            kind: "property",
            name: property.to_string(),
        }
        .into());
    }
    let probe = rank_dataset(&d, &[], RankScope::Global)?;
    let sc = scope.map(RankScope::from).unwrap_or_else(|| probe.natural_scope(&key));
    let rd = rank_dataset(&d, std::slice::from_ref(&key), sc)?;
    let spec = boot_spec(boot, BootstrapMethod::Pairs)?;
    let est = with_threads(boot.threads, || {
        per_fuzzer_slopes(&rd, &key, sc, &spec.for_stream(&format!("slopes:{key}")))
    })?;
    let mut s = String::from("fuzzer,property,scope,slope,intercept,ci_low,ci_high,significant,n\n");
    for e in &est {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            e.fuzzer,
            e.property,
            e.scope,
            format_number(e.slope),
            format_number(e.intercept),
            format_number(e.ci_low),
            format_number(e.ci_high),
            e.significant,
            e.n
        );
    }
    if let Some(dir) = out {
        let pts = plots::slope_points(&rd, &key, sc)?;
        let stem = format!("slopes_{}", plots::file_stem(&key));
        write(&dir.join(format!("{stem}.csv")), &plots::slope_points_csv(&pts))?;
        write(&dir.join(format!("{stem}_lines.csv")), &plots::slope_lines_csv(&pts, &est))?;
        let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.property_rank, p.fuzzer_rank)).collect();
        let svg = plots::scatter_svg(&format!("fuzzer rank by {key}"), &format!("{key} rank"), "fuzzer rank", &xy);
        write(&dir.join(format!("{stem}.svg")), &svg)?;
    }
    emit(&s)
}

fn regress(
    d: &Dataset,
    spec: &DesignSpec,
    order: ResidualOrder,
    boot: &BootArgs,
    out: Option<&Path>,
) -> CliResult {
    let bs = boot_spec(boot, BootstrapMethod::Wild)?;
    let rd = rank_for_design(d, spec)?;
    // Surface rank deficiency before spending time on the bootstrap.
    build_design_matrix(&rd, spec)?;
    let model = with_threads(boot.threads, || fit_explainable_model(&rd, spec, &bs.for_stream("mlr")))?;
    let csv = model.ci.to_csv();
    if let Some(dir) = out {
        let diag = diagnose(&model, &rd, order)?;
        write(&dir.join("coefficients.csv"), &csv)?;
        write(&dir.join("fit.json"), &json(&model)?)?;
        write(&dir.join("diagnostics.json"), &json(&diag)?)?;
        write(
            &dir.join("qq.csv"),
            &plots::pairs_csv("theoretical,sample", &diag.qq_points),
        )?;
        write(
            &dir.join("scale_location.csv"),
            &plots::pairs_csv("fitted,sqrt_abs_std_residual", &diag.scale_location),
        )?;
    }
    emit(&csv)
}

fn json<T: serde::Serialize>(v: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(Error::from)?;
    s.push('\n');
    Ok(s)
}

fn predict(
    fit_path: &Path,
    fuzzer: &str,
    set: &[String],
    program: Option<&str>,
    versus: Option<&str>,
    vary: Option<&str>,
) -> CliResult {
    let model: ExplainableFit = serde_json::from_str(&read_text(fit_path)?).map_err(Error::from)?;
    let mut ranks = BTreeMap::new();
    for item in set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=RANK, got `{item}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("invalid rank `{v}` for `{k}`")))?;
        ranks.insert(parse_key(k)?, v);
    }
    let rank = model.predict_rank(fuzzer, &ranks, program)?;
    let mut s = format!("predicted_rank,{}\n", format_number(rank));
    if let (Some(other), Some(key)) = (versus, vary) {
        let c = model.crossover(fuzzer, other, &parse_key(key)?, &ranks, program)?;
        let opt = |v: Option<f64>| v.map(format_number).unwrap_or_else(|| "NA".into());
        let _ = writeln!(s, "versus_rank,{}", format_number(c.second_rank));
        let _ = writeln!(s, "region,{}", variant(c.region));
        let _ = writeln!(s, "crossover_delta,{}", opt(c.delta));
        let _ = writeln!(s, "crossover_rank,{}", opt(c.rank));
    }
    emit(&s)
}

fn props(which: PropsCommand) -> CliResult {
    let map = match which {
        PropsCommand::Corpus { manifest } => corpus_properties(&parse_manifest(&read_text(&manifest)?)?)?,
        PropsCommand::Program { headers, disasm } => {
            let mut s = parse_disassembly(&read_text(&disasm)?);
            s.text_bytes = Some(parse_section_headers(&read_text(&headers)?)?);
            program_properties(&s)
        }
    };
    let mut s = String::from("key,value\n");
    for (k, v) in map {
        let _ = writeln!(s, "{k},{}", format_number(v));
    }
    emit(&s)
}

fn synth(spec: Option<&Path>, seed: Option<u64>, out: Option<&Path>, truth: Option<&Path>) -> CliResult {
    let mut s = match spec {
        Some(p) => serde_json::from_str::<SynthSpec>(&read_text(p)?).map_err(Error::from)?,
        None => SynthSpec::suite(),
    };
    if let Some(seed) = seed {
        s.seed = seed;
    } else if std::env::var_os(SEED_ENV).is_some() {
        s.seed = resolve_seed(None)?;
    }
    let (d, gt) = generate(&s)?;
    let csv = d.to_csv_string()?;
    let truth_path = truth.map(Path::to_path_buf).or_else(|| {
        out.map(|o| {
            let mut p = o.as_os_str().to_owned();
            p.push(".truth.json");
            PathBuf::from(p)
        })
    });
    if let Some(p) = truth_path {
        write(&p, &json(&gt)?)?;
    }
    match out {
        Some(p) => write(p, &csv),
        None => emit(&csv),
    }
}
