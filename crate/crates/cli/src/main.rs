use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use sbfl_core::eval::{evaluate, generate_random_spectrum, EvalOptions, EvalReport, GeneratorConfig};
use sbfl_core::flitsr::render_trace;
use sbfl_core::ingest;
use sbfl_core::{flitsr_run, flitsr_star, rank, ElementTable, FaultOracle, MetricId, Ranking, Spectrum};

#[derive(Parser)]
#[command(name = "sbfl", version, about = "Spectrum-based fault localization with FLITSR")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank the elements of a spectrum.
    Localize(LocalizeArgs),
    /// Compute AWE, precision and recall for a ranking.
    Evaluate(EvaluateArgs),
    /// Write the expected-recall curve of a ranking as CSV.
    Curve(CurveArgs),
    /// Evaluate every variant under a directory and aggregate the measures.
    Batch(BatchArgs),
    /// Write a random spectrum with planted faults.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    CoverageDir,
    Tcm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Base,
    Flitsr,
    FlitsrStar,
}

#[derive(Args, Clone)]
struct MetricArgs {
    /// Metric name, case-insensitive [default: ochiai].
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    dstar_exponent: Option<f64>,
    #[arg(long)]
    hyperbolic_k1: Option<f64>,
    #[arg(long)]
    hyperbolic_k2: Option<f64>,
    #[arg(long)]
    hyperbolic_k3: Option<f64>,
    #[arg(long, value_enum, default_value = "base")]
    mode: Mode,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Coverage directory or TCM file.
    input: PathBuf,
    /// Defaults to coverage-dir for directories and tcm for files.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct LocalizeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    metric: MetricArgs,
    /// Fault oracle used to fill the is_faulty column.
    #[arg(long)]
    oracle: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Write per-iteration scores of the FLITSR run(s) to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvalSource {
    /// A ranking TSV written by `localize`.
    #[arg(long, conflicts_with_all = ["input", "format"])]
    ranking: Option<PathBuf>,
    /// Spectrum to rank first (coverage directory or TCM file).
    #[arg(required_unless_present = "ranking")]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[command(flatten)]
    metric: MetricArgs,
    #[arg(long)]
    oracle: PathBuf,
    /// Reject oracle entries naming unknown elements instead of skipping them.
    #[arg(long)]
    strict_oracle: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Seed for Monte-Carlo tie expectations.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    mc_samples: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    source: EvalSource,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10])]
    precision: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10])]
    recall: Vec<usize>,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    source: EvalSource,
    #[arg(long, default_value_t = 50)]
    resolution: usize,
}

#[derive(Args)]
struct BatchArgs {
    /// Directory with one subdirectory per variant.
    dir: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
    /// Directory receiving per_variant.csv, aggregate.csv and failures.csv.
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, env = "SBFL_WORKERS")]
    workers: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory (coverage-dir layout plus faults.tsv and params.txt).
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, default_value_t = 12)]
    elements: usize,
    #[arg(long, default_value_t = 16)]
    tests: usize,
    #[arg(long, default_value_t = 2)]
    faults: usize,
    #[arg(long, default_value_t = 0.3)]
    density: f64,
    #[arg(long, default_value_t = 0.0)]
    masking_bias: f64,
    #[arg(long, default_value_t = 0)]
    dominators: usize,
    #[arg(long, default_value_t = 0.0)]
    coincidental_correctness: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Error in the arguments that clap cannot see.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Localize(a) => cmd_localize(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Curve(a) => cmd_curve(&a),
        Command::Batch(a) => cmd_batch(&a),
        Command::Generate(a) => cmd_generate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    for cause in e.chain() {
        if let Some(core) = cause.downcast_ref::<sbfl_core::Error>() {
            return match core {
                sbfl_core::Error::Invariant(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

impl MetricArgs {
    fn metric(&self) -> Result<MetricId> {
        let name = self.metric.as_deref().unwrap_or("ochiai");
        let mut metric: MetricId = name.parse().map_err(|e: sbfl_core::Error| usage(e.to_string()))?;
        match &mut metric {
            MetricId::DStar { star } => {
                if let Some(x) = self.dstar_exponent {
                    *star = x;
                }
            }
            _ if self.dstar_exponent.is_some() => {
                return Err(usage("--dstar-exponent only applies to --metric dstar"));
            }
            _ => {}
        }
        let overrides = [self.hyperbolic_k1, self.hyperbolic_k2, self.hyperbolic_k3];
        match &mut metric {
            MetricId::Hyperbolic { k1, k2, k3 } => {
                for (slot, value) in [k1, k2, k3].into_iter().zip(overrides) {
                    if let Some(v) = value {
                        *slot = v;
                    }
                }
            }
            _ if overrides.iter().any(Option::is_some) => {
                return Err(usage("--hyperbolic-k* only apply to --metric hyperbolic"));
            }
            _ => {}
        }
        metric.validate().map_err(|e| usage(e.to_string()))?;
        Ok(metric)
    }
}

fn load_spectrum(input: &Path, format: Option<Format>) -> Result<Spectrum> {
    let format = format.unwrap_or(if input.is_dir() { Format::CoverageDir } else { Format::Tcm });
    let spectrum = match format {
        Format::CoverageDir => ingest::load_coverage_dir(input)?,
        Format::Tcm => ingest::load_tcm(input)?,
    };
    Ok(spectrum)
}

fn load_oracle(path: &Path, elements: &ElementTable, strict: bool) -> Result<FaultOracle> {
    let loaded = ingest::load_fault_oracle(path, elements, strict)?;
    for (line, name) in &loaded.unresolved {
        eprintln!("warning: {}:{line}: unknown element {name:?} skipped", path.display());
    }
    Ok(loaded.oracle)
}

struct Localized {
    ranking: Ranking,
    trace: Option<String>,
}

fn localize(spectrum: &Spectrum, metric: MetricId, mode: Mode) -> Result<Localized> {
    let view = spectrum.full_view();
    Ok(match mode {
        Mode::Base => Localized {
            ranking: rank(&view, metric),
            trace: None,
        },
        Mode::Flitsr => {
            let run = flitsr_run(&view, metric)?;
            Localized {
                trace: Some(render_trace(spectrum, "flitsr", &run.trace, &run.basis)),
                ranking: run.merged_ranking,
            }
        }
        Mode::FlitsrStar => {
            let run = flitsr_star(&view, metric)?;
            let mut trace = String::new();
            for (i, round) in run.rounds.iter().enumerate() {
                trace.push_str(&render_trace(spectrum, &format!("round {}", i + 1), &round.trace, &round.basis));
            }
            Localized {
                trace: Some(trace),
                ranking: run.merged_ranking,
            }
        }
    })
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}

fn cmd_localize(a: &LocalizeArgs) -> Result<()> {
    let metric = a.metric.metric()?;
    if a.trace.is_some() && a.metric.mode == Mode::Base {
        return Err(usage("--trace needs --mode flitsr or flitsr-star"));
    }
    let spectrum = load_spectrum(&a.input.input, a.input.format)?;
    let oracle = match &a.oracle {
        Some(p) => Some(load_oracle(p, spectrum.elements(), false)?),
        None => None,
    };
    let result = localize(&spectrum, metric, a.metric.mode)?;
    if let (Some(path), Some(trace)) = (&a.trace, &result.trace) {
        fs::write(path, trace).with_context(|| format!("writing {}", path.display()))?;
    }
    emit(
        a.output.as_deref(),
        &ingest::render_ranking(&result.ranking, spectrum.elements(), oracle.as_ref()),
    )
}

/// Ranking plus oracle for `evaluate`/`curve`, with the faults left out as
/// unexposed by the suite.
fn ranking_and_oracle(src: &EvalSource) -> Result<(Ranking, FaultOracle, Vec<String>)> {
    if let Some(path) = &src.ranking {
        if src.metric.mode != Mode::Base || src.metric.metric.is_some() {
            return Err(usage("--metric/--mode only apply when ranking a spectrum"));
        }
        let loaded = ingest::load_ranking(path)?;
        let oracle = load_oracle(&src.oracle, &loaded.elements, src.strict_oracle)?;
        return Ok((loaded.ranking, oracle, Vec::new()));
    }
    let input = src.input.as_deref().ok_or_else(|| usage("need a spectrum or --ranking"))?;
    let metric = src.metric.metric()?;
    let spectrum = load_spectrum(input, src.format)?;
    let oracle = load_oracle(&src.oracle, spectrum.elements(), src.strict_oracle)?;
    let (oracle, unexposed) = drop_unexposed(&spectrum, oracle);
    if !unexposed.is_empty() {
        eprintln!("warning: faults not executed by any failing test: {}", unexposed.join(", "));
    }
    let ranking = localize(&spectrum, metric, src.metric.mode)?.ranking;
    Ok((ranking, oracle, unexposed))
}

/// Splits off the faults no failing test executes.
fn drop_unexposed(spectrum: &Spectrum, oracle: FaultOracle) -> (FaultOracle, Vec<String>) {
    let unexposed: Vec<String> = spectrum.unexposed_faults(&oracle).into_iter().map(String::from).collect();
    if unexposed.is_empty() {
        return (oracle, unexposed);
    }
    let kept = FaultOracle::from_pairs(
        oracle
            .faults()
            .filter(|(label, _)| !unexposed.iter().any(|u| u == label))
            .flat_map(|(label, elems)| elems.iter().map(move |&e| (label.to_string(), e)))
            .collect::<Vec<_>>(),
    );
    (kept, unexposed)
}

fn run_evaluation(src: &EvalSource, opts: EvalOptions) -> Result<EvalReport> {
    let (ranking, oracle, unexposed) = ranking_and_oracle(src)?;
    if oracle.is_empty() {
        bail!(sbfl_core::Error::Contract("no usable fault in the oracle".into()));
    }
    let mut report = evaluate(&ranking, &oracle, &opts)?;
    for label in &report.dropped_faults {
        eprintln!("warning: fault {label} has no ranked element");
    }
    report.dropped_faults.extend(unexposed);
    report.dropped_faults.sort();
    Ok(report)
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    if a.precision.contains(&0) || a.recall.contains(&0) {
        return Err(usage("cut-offs must be >= 1"));
    }
    let opts = EvalOptions {
        precision_cutoffs: a.precision.clone(),
        recall_cutoffs: a.recall.clone(),
        mc_samples: a.source.mc_samples,
        seed: a.source.seed,
        ..Default::default()
    };
    let report = run_evaluation(&a.source, opts)?;
    emit(a.source.output.as_deref(), &report.to_csv())
}

fn cmd_curve(a: &CurveArgs) -> Result<()> {
    if a.resolution < 2 {
        return Err(usage("--resolution must be >= 2"));
    }
    let opts = EvalOptions {
        curve_resolution: a.resolution,
        mc_samples: a.source.mc_samples,
        seed: a.source.seed,
        ..Default::default()
    };
    let report = run_evaluation(&a.source, opts)?;
    emit(a.source.output.as_deref(), &report.curve_csv())
}

const BATCH_MEASURES: [&str; 10] = [
    "n_faults",
    "awe_first",
    "awe_median",
    "awe_last",
    "p_at_1",
    "p_at_5",
    "r_at_1",
    "r_at_10",
    "r_at_nf",
    "dropped_faults",
];

fn variant_spectrum(dir: &Path) -> Result<Spectrum> {
    if dir.join(ingest::MATRIX_FILE).exists() {
        return Ok(ingest::load_coverage_dir(dir)?);
    }
    let mut tcms: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tcm"))
        .collect();
    tcms.sort();
    match tcms.as_slice() {
        [one] => Ok(ingest::load_tcm(one)?),
        [] => Err(anyhow!("no matrix.txt or .tcm file")),
        _ => Err(anyhow!("more than one .tcm file")),
    }
}

fn batch_variant(dir: &Path, metric: MetricId, mode: Mode, opts: &EvalOptions) -> Result<Vec<f64>> {
    let spectrum = variant_spectrum(dir)?;
    let oracle = ingest::load_fault_oracle(&dir.join("faults.tsv"), spectrum.elements(), false)?.oracle;
    let (oracle, unexposed) = drop_unexposed(&spectrum, oracle);
    if oracle.is_empty() {
        bail!(sbfl_core::Error::Contract("no exposed fault".into()));
    }
    let ranking = localize(&spectrum, metric, mode)?.ranking;
    let report = evaluate(&ranking, &oracle, opts)?;
    let measures: BTreeMap<String, f64> = report.measures().into_iter().collect();
    Ok(BATCH_MEASURES
        .iter()
        .map(|&m| match m {
            "dropped_faults" => (report.dropped_faults.len() + unexposed.len()) as f64,
            _ => measures.get(m).copied().unwrap_or(f64::NAN),
        })
        .collect())
}

fn cmd_batch(a: &BatchArgs) -> Result<()> {
    let metric = a.metric.metric()?;
    if a.workers == Some(0) {
        return Err(usage("--workers must be >= 1"));
    }
    let mut variants: Vec<(String, PathBuf)> = fs::read_dir(&a.dir)
        .with_context(|| format!("reading {}", a.dir.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .collect();
    variants.sort();
    if variants.is_empty() {
        bail!(sbfl_core::Error::Contract(format!("{} has no variant directories", a.dir.display())));
    }
    let opts = EvalOptions {
        precision_cutoffs: vec![1, 5],
        recall_cutoffs: vec![1, 10],
        seed: a.seed,
        ..Default::default()
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = a.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build()?;
    let results: Vec<(String, Result<Vec<f64>>)> = pool.install(|| {
        variants
            .par_iter()
            .map(|(name, dir)| (name.clone(), batch_variant(dir, metric, a.metric.mode, &opts)))
            .collect()
    });

    let mut per_variant = format!("variant,{}\n", BATCH_MEASURES.join(","));
    let mut failures = String::from("variant,error\n");
    let mut groups: BTreeMap<(u8, usize), Vec<&Vec<f64>>> = BTreeMap::new();
    for (name, result) in &results {
        match result {
            Ok(values) => {
                let cells: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(per_variant, "{},{}", csv_field(name), cells.join(","));
                groups.entry((0, values[0] as usize)).or_default().push(values);
                groups.entry((1, 0)).or_default().push(values);
            }
            Err(e) => {
                eprintln!("warning: variant {name} failed: {e:#}");
                let _ = writeln!(failures, "{},{}", csv_field(name), csv_field(&format!("{e:#}")));
            }
        }
    }
    let mut aggregate = format!("group,variants,{}\n", BATCH_MEASURES.map(|m| format!("mean_{m}")).join(","));
    for ((kind, nf), rows) in &groups {
        let key = if *kind == 0 { format!("n_faults={nf}") } else { "all".to_string() };
        let means: Vec<String> = (0..BATCH_MEASURES.len())
            .map(|i| (rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64).to_string())
            .collect();
        let _ = writeln!(aggregate, "{key},{},{}", rows.len(), means.join(","));
    }
    fs::create_dir_all(&a.output)?;
    fs::write(a.output.join("per_variant.csv"), per_variant)?;
    fs::write(a.output.join("aggregate.csv"), aggregate)?;
    fs::write(a.output.join("failures.csv"), failures)?;
    if groups.is_empty() {
        bail!(sbfl_core::Error::Contract("every variant failed".into()));
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let cfg = GeneratorConfig {
        elements: a.elements,
        tests: a.tests,
        faults: a.faults,
        coverage_density: a.density,
        masking_bias: a.masking_bias,
        dominator_count: a.dominators,
        coincidental_correctness: a.coincidental_correctness,
        seed: a.seed,
    };
    let g = generate_random_spectrum(&cfg)?;
    ingest::write_coverage_dir(&g.spectrum, &a.output)?;
    ingest::write_fault_oracle(&g.oracle, g.spectrum.elements(), &a.output.join("faults.tsv"))?;
    let params = format!(
        "elements={}\ntests={}\nfaults={}\ndensity={}\nmasking_bias={}\ndominators={}\ncoincidental_correctness={}\nseed={}\n",
        cfg.elements,
        cfg.tests,
        cfg.faults,
        cfg.coverage_density,
        cfg.masking_bias,
        cfg.dominator_count,
        cfg.coincidental_correctness,
        cfg.seed
    );
    fs::write(a.output.join("params.txt"), params)?;
    Ok(())
}
