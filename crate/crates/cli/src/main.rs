use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use speechsieve::adapters::mock::NoiseSpec;
use speechsieve::adapters::serve;
use speechsieve::align::parse_timestamp_tokens;
use speechsieve::audio::ResampleMode;
use speechsieve::manifest::{
    read_manifest, render_report, stage_report, write_manifest, GroupBy, UtteranceRecord,
};
use speechsieve::metrics::MiouDenominator;
use speechsieve::pipeline::{
    build_backend, generate_synthetic_corpus, merge_minimal, minimal_stage_passed,
    reconcile_sample_rates, render_score_table, render_stage_table, report_header, run_pipeline,
    score_manifests, stage_table_from_dir, AdapterSpec, Adapters, DurationDist, PipelineConfig,
    PipelineError, RegionMix, RunOptions, ScoreLayout, SynthSpec,
};

#[derive(Parser)]
#[command(
    name = "speechsieve",
    version,
    about = "Refine noisy speech corpora into timestamped ASR data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage over a manifest, resuming from an earlier run in the same directory.
    Run(RunArgs),
    /// Score a hypothesis manifest against a reference manifest.
    Score(ScoreArgs),
    /// Print the per-stage hours table of a finished or partial run.
    Report(ReportArgs),
    /// Generate a synthetic corpus with WAV files and hidden references.
    Synth(SynthArgs),
    /// Merge minimally processed records with refined ones; refined records win.
    Merge(MergeArgs),
    /// Check that manifests parse and satisfy record invariants.
    ValidateManifest(ValidateArgs),
    /// Print the default configuration as TOML.
    DefaultConfig,
    /// Serve a built-in backend over the line protocol on stdin/stdout.
    #[command(hide = true)]
    ServeMock(ServeArgs),
}

/// Configuration file plus flags that override individual settings.
#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    wer_threshold: Option<f64>,
    #[arg(long)]
    max_duration_s: Option<f64>,
    #[arg(long)]
    target_sample_rate_hz: Option<u32>,
    #[arg(long)]
    target_peak: Option<f32>,
    #[arg(long, value_enum)]
    resample_mode: Option<Resample>,
    #[arg(long)]
    quantization_step_s: Option<f64>,
    #[arg(long)]
    collar_s: Option<f64>,
    #[arg(long, value_enum)]
    miou: Option<Miou>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    adapter_timeout_s: Option<f64>,
    /// Character profile name (vi, en).
    #[arg(long)]
    char_profile: Option<String>,
    /// Number lexicon name (vi, en).
    #[arg(long)]
    lexicon: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Resample {
    Linear,
    Sinc,
}

#[derive(Clone, Copy, ValueEnum)]
enum Miou {
    AllReferences,
    MatchedOnly,
}

impl From<Miou> for MiouDenominator {
    fn from(m: Miou) -> Self {
        match m {
            Miou::AllReferences => MiouDenominator::AllReferences,
            Miou::MatchedOnly => MiouDenominator::MatchedOnly,
        }
    }
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let mut cfg = PipelineConfig::load(p)?;
                resolve_relative(&mut cfg, p.parent().unwrap_or(Path::new(".")));
                cfg
            }
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag { cfg.$field = v; })*
            };
        }
        set!(
            seed => seed,
            wer_threshold => wer_threshold,
            max_duration_s => max_duration_s,
            target_sample_rate_hz => target_sample_rate_hz,
            target_peak => target_peak,
            quantization_step_s => quantization_step_s,
            collar_s => collar_s,
            workers => worker_pool_size,
            batch_size => batch_size,
            adapter_timeout_s => adapter_timeout_s,
        );
        if let Some(m) = self.resample_mode {
            cfg.resample_mode = match m {
                Resample::Linear => ResampleMode::Linear,
                Resample::Sinc => ResampleMode::Sinc,
            };
        }
        if let Some(m) = self.miou {
            cfg.miou = m.into();
        }
        if let Some(p) = &self.char_profile {
            cfg.char_profile = speechsieve::pipeline::Named::Name(p.clone());
        }
        if let Some(l) = &self.lexicon {
            cfg.lexicon = speechsieve::pipeline::Named::Name(l.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reference files named in a config file are relative to that file.
fn resolve_relative(cfg: &mut PipelineConfig, base: &Path) {
    let a = &mut cfg.adapters;
    let specs = [
        &mut a.asr_primary,
        &mut a.asr_secondary,
        &mut a.asr_filter,
        &mut a.punctuate,
        &mut a.align,
    ];
    for spec in specs.into_iter().chain(a.normalize_numbers.as_mut()) {
        if let AdapterSpec::MockAsr {
            references: Some(p),
            ..
        } = spec
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Input manifest (JSONL).
    #[arg(long)]
    input: PathBuf,
    /// Run directory; reusing it resumes.
    #[arg(long)]
    output: PathBuf,
    /// Base for relative audio paths; defaults to the manifest's directory.
    #[arg(long)]
    input_base: Option<PathBuf>,
    /// Checkpoint and stop after this many records (for testing resume).
    #[arg(long, hide = true)]
    stop_after: Option<usize>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    hypothesis: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Label for the hypothesis system.
    #[arg(long, default_value = "hypothesis")]
    system: String,
    #[arg(long, value_enum, default_value_t = Layout::MetricRows)]
    layout: Layout,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Layout {
    MetricRows,
    DatasetRows,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory written by `run`.
    run: PathBuf,
    /// Also print final hours grouped by region.
    #[arg(long)]
    by_region: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 100)]
    records: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2.0)]
    min_duration_s: f64,
    #[arg(long, default_value_t = 8.0)]
    max_duration_s: f64,
    #[arg(long, default_value_t = 4)]
    min_words: usize,
    #[arg(long, default_value_t = 16)]
    max_words: usize,
    /// Per-word noise on provided transcripts.
    #[arg(long, default_value_t = 0.0)]
    substitution_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    deletion_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    insertion_rate: f64,
    /// Substitute a uniform 0..=N words per transcript instead of using rates.
    #[arg(long)]
    substitute_up_to: Option<usize>,
    /// North:central:south weights.
    #[arg(long, default_value = "1:1:1")]
    region_mix: String,
    #[arg(long, value_delimiter = ',', default_value = "synth")]
    sources: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "16000")]
    sample_rates: Vec<u32>,
    #[arg(long, default_value_t = 8)]
    speakers: usize,
    #[arg(long, default_value_t = 0.0)]
    untranscribed: f64,
    #[arg(long, default_value_t = 0.0)]
    manual: f64,
    #[arg(long, default_value_t = 0.0)]
    digits: f64,
    #[arg(long, default_value_t = 0.0)]
    silence: f64,
}

#[derive(Args)]
struct MergeArgs {
    /// Minimally processed manifest.
    #[arg(long)]
    full: PathBuf,
    /// Refined manifest.
    #[arg(long)]
    refined: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Drop records of the full manifest that did not pass cleaning and punctuation.
    #[arg(long)]
    passed_only: bool,
    /// Resample merged records not at this rate, writing audio next to the output.
    #[arg(long)]
    target_sample_rate_hz: Option<u32>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(required = true)]
    manifests: Vec<PathBuf>,
    /// Quantization step used to check `ts_text`.
    #[arg(long, default_value_t = 0.02)]
    quantization_step_s: f64,
}

#[derive(Args)]
struct ServeArgs {
    /// Adapter spec as JSON, for example {"kind":"mock_aligner"}.
    #[arg(long)]
    spec: String,
    /// Role advertised in the handshake.
    #[arg(long, default_value = "mock")]
    role: String,
    #[command(flatten)]
    config: ConfigArgs,
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let cfg = a.config.load()?;
    let records =
        read_manifest(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let input_base = a
        .input_base
        .or_else(|| a.input.parent().map(Path::to_path_buf));
    let adapters = Adapters::from_config(&cfg)?;
    let opts = RunOptions {
        input_base,
        stop_after: a.stop_after,
    };
    log::info!(
        "running {} records into {}",
        records.len(),
        a.output.display()
    );
    match run_pipeline(&cfg, &adapters, &records, &a.output, &opts) {
        Ok(s) => {
            print!("{}", s.report);
            eprintln!(
                "{} of {} records in {}",
                s.final_records,
                s.input_records,
                s.final_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(e @ (PipelineError::Interrupted { .. } | PipelineError::Adapter { .. })) => {
            eprintln!("speechsieve: {e}");
            Ok(ExitCode::from(3))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_score(a: ScoreArgs) -> Result<ExitCode> {
    let cfg = a.config.load()?;
    let reference = read_manifest(&a.reference)?;
    let hypothesis = read_manifest(&a.hypothesis)?;
    let rows = score_manifests(&reference, &hypothesis, cfg.collar_s, cfg.miou);
    let layout = match a.layout {
        Layout::MetricRows => ScoreLayout::MetricRows,
        Layout::DatasetRows => ScoreLayout::DatasetRows,
    };
    println!("# seed={}", cfg.seed);
    print!(
        "{}",
        render_score_table(&rows, &a.system, cfg.collar_s, cfg.miou, layout)
    );
    let missing: usize = rows.last().map_or(0, |r| r.missing);
    if missing > 0 {
        eprintln!("{missing} reference utterances have no hypothesis and were scored as empty");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(a: ReportArgs) -> Result<ExitCode> {
    let cfg_path = a.run.join("config.toml");
    let header = if cfg_path.exists() {
        report_header(&PipelineConfig::load(&cfg_path)?)
    } else {
        vec!["seed=unknown".to_string()]
    };
    let table = stage_table_from_dir(&a.run)?;
    print!("{}", render_stage_table(&table, &header));
    if a.by_region {
        let finals = read_manifest(a.run.join("final.jsonl"))?;
        println!();
        print!(
            "{}",
            render_report(&stage_report(&finals, GroupBy::Region), "Region")
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_mix(s: &str) -> Result<RegionMix> {
    let parts: Vec<u32> = s
        .split(':')
        .map(str::parse)
        .collect::<Result<_, _>>()
        .with_context(|| format!("region mix {s:?}"))?;
    let [north, central, south] = parts[..] else {
        bail!("region mix {s:?} needs three weights, as in 2:1:1");
    };
    Ok(RegionMix {
        north,
        central,
        south,
    })
}

fn cmd_synth(a: SynthArgs) -> Result<ExitCode> {
    let noise = match a.substitute_up_to {
        Some(n) => NoiseSpec::exact_substitutions(n, a.seed),
        None => NoiseSpec {
            substitution_rate: a.substitution_rate,
            deletion_rate: a.deletion_rate,
            insertion_rate: a.insertion_rate,
            substitute_up_to: None,
            seed: a.seed,
        },
    };
    let duration = if a.min_duration_s == a.max_duration_s {
        DurationDist::Fixed(a.min_duration_s)
    } else {
        DurationDist::Uniform {
            min_s: a.min_duration_s,
            max_s: a.max_duration_s,
        }
    };
    let spec = SynthSpec {
        n_records: a.records,
        duration,
        noise,
        region_mix: parse_mix(&a.region_mix)?,
        seed: a.seed,
        sources: a.sources,
        sample_rates: a.sample_rates,
        words: (a.min_words, a.max_words),
        speakers: a.speakers,
        untranscribed_fraction: a.untranscribed,
        manual_fraction: a.manual,
        digit_fraction: a.digits,
        silence_fraction: a.silence,
        ..Default::default()
    };
    let c = generate_synthetic_corpus(&spec, &a.output)?;
    let hours: f64 = c.records.iter().map(|r| r.duration_s).sum::<f64>() / 3600.0;
    println!("# seed={}", a.seed);
    println!(
        "{} records, {hours:.2} h -> {} (references: {})",
        c.records.len(),
        c.manifest_path.display(),
        c.references_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Reads a manifest, making relative audio paths relative to its directory.
fn read_with_base(path: &Path) -> Result<Vec<UtteranceRecord>> {
    let mut recs = read_manifest(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for r in &mut recs {
        if r.audio_path.is_relative() {
            r.audio_path = base.join(&r.audio_path);
        }
    }
    Ok(recs)
}

fn cmd_merge(a: MergeArgs) -> Result<ExitCode> {
    let mut full = read_with_base(&a.full)?;
    if a.passed_only {
        full.retain(minimal_stage_passed);
    }
    let refined = read_with_base(&a.refined)?;
    let mut merged = merge_minimal(&full, &refined)?;
    let mut resampled = 0;
    if let Some(hz) = a.target_sample_rate_hz {
        let dir = a.output.with_extension("audio");
        resampled = reconcile_sample_rates(&mut merged, hz, ResampleMode::Linear, &dir)?;
    }
    write_manifest(&merged, &a.output)?;
    let replaced = full.len() + refined.len() - merged.len();
    println!(
        "{} records ({} full, {} refined, {replaced} replaced, {resampled} resampled) -> {}",
        merged.len(),
        full.len(),
        refined.len(),
        a.output.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(a: ValidateArgs) -> Result<ExitCode> {
    let mut bad = 0;
    for path in &a.manifests {
        match read_manifest(path) {
            Ok(recs) => {
                let mut problems = Vec::new();
                for r in &recs {
                    if let Some(ts) = &r.ts_text {
                        if let Err(e) = parse_timestamp_tokens(ts, a.quantization_step_s) {
                            problems.push(format!("{}: ts_text: {e}", r.utterance_id));
                        }
                    }
                }
                if problems.is_empty() {
                    println!("{}: ok, {} records", path.display(), recs.len());
                } else {
                    bad += 1;
                    for p in problems {
                        println!("{}: {p}", path.display());
                    }
                }
            }
            Err(e) => {
                bad += 1;
                println!("{}: {e}", path.display());
            }
        }
    }
    Ok(if bad == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_serve(a: ServeArgs) -> Result<ExitCode> {
    let cfg = a.config.load()?;
    let spec: AdapterSpec = serde_json::from_str(&a.spec).context("parsing --spec")?;
    if matches!(spec, AdapterSpec::Process { .. } | AdapterSpec::Http { .. }) {
        bail!("serve-mock only serves built-in backends");
    }
    let backend = build_backend(&spec, &cfg)?;
    let stdin = io::stdin();
    serve(backend.as_ref(), &a.role, stdin.lock(), io::stdout().lock())?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Score(a) => cmd_score(a),
        Command::Report(a) => cmd_report(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Merge(a) => cmd_merge(a),
        Command::ValidateManifest(a) => cmd_validate(a),
        Command::DefaultConfig => {
            print!("{}", PipelineConfig::default().to_toml());
            Ok(ExitCode::SUCCESS)
        }
        Command::ServeMock(a) => cmd_serve(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("speechsieve: {e:#}");
        ExitCode::FAILURE
    })
}
