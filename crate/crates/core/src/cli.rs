//! Command-line front end: configuration loading, subcommand dispatch and
//! report layout.
//!
//! Every report is a pure function of its inputs, flags and seed. CSV
//! reports start with a `# config_hash <sha256>` comment and JSON reports
//! carry a `config_hash` field. Errors go to stderr as one JSON object; the
//! exit code is 0 on success, 1 on a runtime failure and 2 on a usage or
//! configuration error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{harvest_all, CorpusSpec};
use crate::energy::{energy_report, DutyTimes, EnergyParams, EnergyReport};
use crate::error::{Error, Result};
use crate::fusion::{train_head, FusionModel, TrainConfig};
use crate::io::write_string_atomic;
use crate::metrics::{
    comparison_table, metrics_report, sweep_csv_row, sweep_t, Counts, MatchRule, MetricsReport, SweepRow, TableRow,
    SWEEP_HEADER,
};
use crate::pipeline::{
    collect_eye_only, collect_snippets, save_decision_log, DecisionLog, FusionConfig, PipelineConfig, TvaFusion,
};
use crate::scenario::{builtin_extended, generate, ScenarioSpec, BUILTINS};
use crate::trace::{load_trace, save_trace, AttentionTruth, Trace};

pub const DEFAULT_SWEEP: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Input and output locations; inputs must exist when the config loads.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub trace: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
}

/// Everything a command needs besides its positional inputs. Loaded from
/// TOML; command-line flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub paths: Paths,
    pub pipeline: PipelineConfig,
    pub fusion: FusionConfig,
    pub matching: MatchRule,
    pub train: TrainConfig,
    pub corpus: CorpusSpec,
    pub sweep_t: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            paths: Paths::default(),
            pipeline: PipelineConfig::default(),
            fusion: FusionConfig::default(),
            matching: MatchRule::default(),
            train: TrainConfig::default(),
            corpus: CorpusSpec::default(),
            sweep_t: DEFAULT_SWEEP.to_vec(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))?;
        cfg.pipeline.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.paths;
        for slot in [&mut p.trace, &mut p.scenario, &mut p.model, &mut p.params, &mut p.report_dir] {
            if let Some(rel) = slot.as_mut().filter(|r| r.is_relative()) {
                *rel = base.join(&*rel);
            }
        }
        for input in [&p.trace, &p.scenario, &p.model, &p.params].into_iter().flatten() {
            if !input.exists() {
                return Err(Error::Config(format!("config references missing file {}", input.display())));
            }
        }
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("configs serialize");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn header(&self) -> String {
        format!("# config_hash {}\n", self.hash())
    }
}

#[derive(Debug, Parser)]
#[command(name = "gazegate", version, about = "Gaze-gated attention capture: simulate, replay, train, account energy")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for scenario rendering and training; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Suppress progress and tables on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a builtin or JSON scenario into a trace file.
    Simulate {
        /// Builtin name or path to a scenario JSON file.
        scenario: String,
        /// Repeat a builtin's blocks to exactly this many seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Replay a trace through the gate and fusion stage.
    Run {
        /// Trace file; defaults to `paths.trace` of the config.
        trace: Option<PathBuf>,
        /// Trained fusion model JSON.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Energy parameter file; defaults to the calibrated set.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Replay traces over a list of gate periods.
    Sweep {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Trained fusion model JSON.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Energy parameter file; defaults to the calibrated set.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Comma-separated periods in seconds.
        #[arg(long, value_delimiter = ',')]
        t_values: Option<Vec<f64>>,
    },
    /// Train the fusion head on a synthetic corpus.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        /// Corpus size per builtin scenario.
        #[arg(long)]
        traces_per_scenario: Option<usize>,
    },
    /// Energy report from a decision log or from duty fractions.
    Energy {
        #[arg(long, conflicts_with_all = ["span", "fusion_fraction", "capture_fraction"])]
        /// Decision log written by `run`.
        log: Option<PathBuf>,
        /// Fraction of the span spent waiting on fusion.
        #[arg(long, requires = "span")]
        fusion_fraction: Option<f64>,
        /// Fraction of the span spent recording.
        #[arg(long, requires = "span")]
        capture_fraction: Option<f64>,
        /// Operating time in seconds.
        #[arg(long)]
        span: Option<f64>,
        /// Energy parameter file; defaults to the calibrated set.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Check a trace, scenario, config, model or energy parameter file.
    Validate {
        path: PathBuf,
        /// File kind; guessed from the extension when omitted.
        #[arg(long, value_enum)]
        kind: Option<FileKind>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FileKind {
    Trace,
    Scenario,
    Config,
    Model,
    Params,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: Error,
}

impl Failure {
    fn usage(error: Error) -> Self {
        Failure { code: 2, error }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.error.kind(),
            "message": self.error.to_string(),
            "exit_code": self.code,
        })
        .to_string()
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match error {
            Error::Config(_) | Error::Parameter(_) | Error::UnknownScenario { .. } | Error::Scenario(_) => 2,
            _ => 1,
        };
        Failure { code, error }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Loading a named input: a missing or unreadable file is a usage error.
fn input<T>(r: Result<T>) -> CliResult<T> {
    r.map_err(|e| match e {
        Error::FileIo { .. } => Failure::usage(e),
        other => other.into(),
    })
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
    quiet: bool,
}

impl Context {
    fn say(&self, text: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", text.as_ref());
        }
    }

    fn seed(&self, what: &str) -> CliResult<u64> {
        self.cfg
            .seed
            .ok_or_else(|| Failure::usage(Error::Config(format!("{what} needs a seed (--seed or `seed` in the config)"))))
    }

    fn params(&self, flag: &Option<PathBuf>) -> CliResult<EnergyParams> {
        match flag.as_ref().or(self.cfg.paths.params.as_ref()) {
            Some(p) => input(EnergyParams::load(p)),
            None => Ok(EnergyParams::calibrated()),
        }
    }

    fn model(&self, flag: &Option<PathBuf>) -> CliResult<FusionModel> {
        let path = flag
            .as_ref()
            .or(self.cfg.paths.model.as_ref())
            .ok_or_else(|| Failure::usage(Error::Config("no model given (--model or paths.model)".into())))?;
        input(FusionModel::load(path))
    }

    fn csv(&self, name: &str, header: &str, rows: &[String]) -> Result<PathBuf> {
        let path = self.out.join(name);
        let mut text = self.cfg.header();
        text.push_str(header);
        text.push('\n');
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        write_string_atomic(&path, &text)?;
        Ok(path)
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_cli(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.to_json());
            f.code
        }
    }
}

pub fn run_cli(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.global.config {
        Some(p) => input(RunConfig::load(p))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.global.seed {
        cfg.seed = Some(s);
    }
    let out = cli
        .global
        .out
        .clone()
        .or_else(|| cfg.paths.report_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let ctx = Context {
        cfg,
        out,
        quiet: cli.global.quiet,
    };
    match cli.command {
        Command::Simulate { scenario, duration } => cmd_simulate(&ctx, &scenario, duration).map(drop),
        Command::Run { trace, model, params } => cmd_run(&ctx, trace, &model, &params).map(drop),
        Command::Sweep {
            traces,
            model,
            params,
            t_values,
        } => cmd_sweep(&ctx, &traces, &model, &params, t_values).map(drop),
        Command::Train {
            epochs,
            traces_per_scenario,
        } => cmd_train(&ctx, epochs, traces_per_scenario).map(drop),
        Command::Energy {
            log,
            fusion_fraction,
            capture_fraction,
            span,
            params,
        } => cmd_energy(&ctx, log, fusion_fraction, capture_fraction, span, &params).map(drop),
        Command::Validate { path, kind } => cmd_validate(&ctx, &path, kind),
    }
}

fn truth_summary(truth: Option<&AttentionTruth>) -> String {
    match truth {
        Some(t) if !t.intervals.is_empty() => {
            let mut s = format!("{} attention interval(s):", t.intervals.len());
            for iv in &t.intervals {
                let _ = write!(s, " [{:.3}, {:.3}) object {};", iv.t_start, iv.t_end, iv.instance);
            }
            s.pop();
            s
        }
        _ => "no attention intervals".into(),
    }
}

fn cmd_simulate(ctx: &Context, scenario: &str, duration: Option<f64>) -> CliResult<PathBuf> {
    let seed = ctx.seed("simulate")?;
    let spec = if BUILTINS.contains(&scenario) {
        builtin_extended(scenario, seed, duration.unwrap_or(0.0))?
    } else if Path::new(scenario).exists() {
        if duration.is_some() {
            return Err(Failure::usage(Error::Config("--duration applies to builtin scenarios only".into())));
        }
        let text = std::fs::read_to_string(scenario).map_err(|e| Failure::usage(Error::file(Path::new(scenario), e)))?;
        let mut spec = ScenarioSpec::from_json(&text)?;
        spec.seed = seed;
        spec
    } else {
        return Err(Error::UnknownScenario {
            name: scenario.to_string(),
            available: BUILTINS.to_vec(),
        }
        .into());
    };
    let trace = generate(&spec)?;
    let path = ctx.out.join(format!("{}-{seed}.trace.jsonl", spec.name));
    save_trace(&trace, &path)?;
    ctx.say(format!(
        "wrote {} ({} gaze samples, {} frames); {}",
        path.display(),
        trace.gaze.len(),
        trace.frames.len(),
        truth_summary(trace.truth.as_ref())
    ));
    Ok(path)
}

/// What `run` writes for one trace.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config_hash: String,
    pub scenario: String,
    pub seed: u64,
    pub snippets: usize,
    pub invocations: usize,
    pub tva: Option<MetricsReport>,
    pub eye_only: Option<MetricsReport>,
    pub savings: f64,
    pub trigger_rate: f64,
}

fn cmd_run(ctx: &Context, trace: Option<PathBuf>, model: &Option<PathBuf>, params: &Option<PathBuf>) -> CliResult<RunReport> {
    let trace_path = trace
        .or_else(|| ctx.cfg.paths.trace.clone())
        .ok_or_else(|| Failure::usage(Error::Config("no trace given (argument or paths.trace)".into())))?;
    let model = ctx.model(model)?;
    let params = ctx.params(params)?;
    let trace = input(load_trace(&trace_path))?;
    let cfg = &ctx.cfg;
    let mut fusion = TvaFusion::new(model, cfg.fusion);
    let outcome = collect_snippets(&trace, &cfg.pipeline, &mut fusion)?;
    let eye = collect_eye_only(&trace, &cfg.pipeline)?;
    let (tva, eye_only) = match &trace.truth {
        Some(t) => (
            Some(metrics_report(&outcome, t, &cfg.matching)),
            Some(metrics_report(&eye, t, &cfg.matching)),
        ),
        None => (None, None),
    };
    let energy = energy_report(&DutyTimes::from_log(&outcome.log)?, &params)?;

    let rows: Vec<String> = outcome
        .snippets
        .iter()
        .map(|s| format!("{:.6},{:.6},{:.6}", s.t_start, s.t_end, s.trigger_score))
        .collect();
    ctx.csv("snippets.csv", "t_start,t_end,trigger_score", &rows)?;
    save_decision_log(&outcome.log, &ctx.out.join("decisions.csv"), &cfg.header())?;
    ctx.csv("energy.csv", EnergyReport::CSV_HEADER, &[energy.csv_row()])?;
    let report = RunReport {
        config_hash: cfg.hash(),
        scenario: trace.meta.scenario.clone(),
        seed: trace.meta.seed,
        snippets: outcome.snippets.len(),
        invocations: outcome.log.invocations(),
        tva,
        eye_only,
        savings: energy.savings,
        trigger_rate: energy.trigger_rate,
    };
    let json = serde_json::to_string_pretty(&report).expect("reports serialize") + "\n";
    write_string_atomic(&ctx.out.join("metrics.json"), &json)?;

    ctx.say(format!(
        "{} snippet(s) from {} fusion request(s); trigger rate {:.4}, energy savings {:.2} %",
        report.snippets,
        report.invocations,
        energy.trigger_rate,
        100.0 * energy.savings
    ));
    if let (Some(t), Some(e)) = (&report.tva, &report.eye_only) {
        let row = |method: &str, m: &MetricsReport, savings| TableRow {
            method: method.into(),
            precision: m.precision,
            recall: m.recall,
            ap: m.ap,
            savings,
        };
        ctx.say(comparison_table(&[
            row("TVA", t, Some(energy.savings)),
            row("Eye tracking alone", e, None),
        ]));
    }
    ctx.say(format!("reports in {}", ctx.out.display()));
    Ok(report)
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Mean of the rates over traces; TP, FP and FN are summed.
pub fn aggregate(rows: &[&SweepRow]) -> SweepRow {
    let mut counts = Counts::default();
    for r in rows {
        counts += r.metrics.counts;
    }
    SweepRow {
        t_seconds: rows[0].t_seconds,
        alpha: mean(rows.iter().map(|r| Some(r.alpha))).unwrap_or(0.0),
        savings: mean(rows.iter().map(|r| Some(r.savings))).unwrap_or(0.0),
        metrics: MetricsReport {
            counts,
            precision: mean(rows.iter().map(|r| r.metrics.precision)),
            recall: mean(rows.iter().map(|r| r.metrics.recall)),
            ap: mean(rows.iter().map(|r| r.metrics.ap)),
        },
        invocations: rows.iter().map(|r| r.invocations).sum(),
    }
}

fn cmd_sweep(
    ctx: &Context,
    traces: &[PathBuf],
    model: &Option<PathBuf>,
    params: &Option<PathBuf>,
    t_values: Option<Vec<f64>>,
) -> CliResult<Vec<SweepRow>> {
    let t_values = t_values.unwrap_or_else(|| ctx.cfg.sweep_t.clone());
    if t_values.len() < 2 {
        return Err(Failure::usage(Error::Config(format!(
            "a sweep needs at least two T values (got {})",
            t_values.len()
        ))));
    }
    let model = ctx.model(model)?;
    let params = ctx.params(params)?;
    let mut per_trace = Vec::new();
    let mut plot_rows = Vec::new();
    for path in traces {
        let trace = input(load_trace(path))?;
        let mut fusion = TvaFusion::new(model.clone(), ctx.cfg.fusion);
        let rows = sweep_t(&trace, &ctx.cfg.pipeline, &t_values, &mut fusion, &params, &ctx.cfg.matching)?;
        for r in &rows {
            plot_rows.push(format!("{},{}", trace_label(&trace, path), sweep_csv_row(r)));
        }
        per_trace.push(rows);
    }
    let aggregated: Vec<SweepRow> = (0..t_values.len())
        .map(|k| aggregate(&per_trace.iter().map(|rows| &rows[k]).collect::<Vec<_>>()))
        .collect();
    ctx.csv("sweep.csv", SWEEP_HEADER, &aggregated.iter().map(sweep_csv_row).collect::<Vec<_>>())?;
    ctx.csv("sweep_traces.csv", &format!("trace,{SWEEP_HEADER}"), &plot_rows)?;
    ctx.say(format!("{SWEEP_HEADER}"));
    for r in &aggregated {
        ctx.say(sweep_csv_row(r));
    }
    Ok(aggregated)
}

fn trace_label(trace: &Trace, path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    format!("{}:{}:{}", name.replace(',', "_"), trace.meta.scenario, trace.meta.seed)
}

pub const TRAINING_LOG_HEADER: &str =
    "epoch,learning_rate,median_batch_loss,mean_batch_loss,validation_loss,validation_accuracy";

fn cmd_train(ctx: &Context, epochs: Option<usize>, traces_per_scenario: Option<usize>) -> CliResult<PathBuf> {
    let seed = ctx.seed("train")?;
    let mut corpus = ctx.cfg.corpus.clone();
    if let Some(n) = traces_per_scenario {
        corpus.traces_per_scenario = n;
    }
    let mut train = ctx.cfg.train;
    train.seed = seed;
    if let Some(e) = epochs {
        train.epochs = e;
    }
    train.validate()?;
    let traces = corpus.generate()?;
    let examples = harvest_all(&traces, &ctx.cfg.pipeline, &ctx.cfg.fusion)?;
    let positives = examples.iter().filter(|e| e.label).count();
    ctx.say(format!(
        "{} examples ({positives} positive) from {} traces",
        examples.len(),
        traces.len()
    ));
    let head = train_head(&examples, &train)?;
    let model_path = ctx.out.join("model.json");
    head.model.save(&model_path)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_default();
    let rows: Vec<String> = head
        .log
        .iter()
        .map(|l| {
            format!(
                "{},{:.9},{:.9},{:.9},{},{}",
                l.epoch,
                l.learning_rate,
                l.median_batch_loss,
                l.mean_batch_loss,
                opt(l.validation_loss),
                opt(l.validation_accuracy)
            )
        })
        .collect();
    ctx.csv("training_log.csv", TRAINING_LOG_HEADER, &rows)?;
    ctx.say(format!(
        "kept epoch {}; test accuracy {}; split {}/{}/{} train/test/validation; model at {}",
        head.best_epoch,
        opt(head.test_accuracy),
        head.split.train.len(),
        head.split.test.len(),
        head.split.validation.len(),
        model_path.display()
    ));
    Ok(model_path)
}

fn cmd_energy(
    ctx: &Context,
    log: Option<PathBuf>,
    fusion_fraction: Option<f64>,
    capture_fraction: Option<f64>,
    span: Option<f64>,
    params: &Option<PathBuf>,
) -> CliResult<EnergyReport> {
    let params = ctx.params(params)?;
    let duty = match (log, span) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(&path).map_err(|e| Failure::usage(Error::file(&path, e)))?;
            DutyTimes::from_log(&DecisionLog::read_csv(&text)?)?
        }
        (None, Some(span)) => {
            DutyTimes::from_fractions(span, fusion_fraction.unwrap_or(0.0), capture_fraction.unwrap_or(0.0))
        }
        (None, None) => {
            return Err(Failure::usage(Error::Config("energy needs --log or --span".into())));
        }
    };
    let report = energy_report(&duty, &params)?;
    ctx.csv("energy.csv", EnergyReport::CSV_HEADER, &[report.csv_row()])?;
    ctx.say(format!(
        "total {:.3} J vs {:.3} J recording everything; savings {:.2} %; average power {:.4} W; {:.2} h on {} Wh",
        report.e_total,
        report.e_baseline,
        100.0 * report.savings,
        report.average_power_w,
        report.battery_hours,
        params.battery_capacity_wh
    ));
    Ok(report)
}

fn guess_kind(path: &Path) -> CliResult<FileKind> {
    let name = path.to_string_lossy();
    if name.ends_with(".jsonl") {
        Ok(FileKind::Trace)
    } else if name.ends_with(".toml") {
        Ok(FileKind::Config)
    } else if name.ends_with(".params") {
        Ok(FileKind::Params)
    } else if name.ends_with(".json") {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(Error::file(path, e)))?;
        Ok(if text.contains("\"gazegate-fusion-head/") {
            FileKind::Model
        } else {
            FileKind::Scenario
        })
    } else {
        Err(Failure::usage(Error::Config(format!(
            "cannot tell what {} is; pass --kind",
            path.display()
        ))))
    }
}

fn cmd_validate(ctx: &Context, path: &Path, kind: Option<FileKind>) -> CliResult<()> {
    if !path.exists() {
        return Err(Failure::usage(Error::Config(format!("no such file {}", path.display()))));
    }
    let kind = match kind {
        Some(k) => k,
        None => guess_kind(path)?,
    };
    // a file that loads but is invalid is a runtime failure, not a usage error
    let invalid = |e: Error| Failure { code: 1, error: e };
    let summary = match kind {
        FileKind::Trace => {
            let t = load_trace(path).map_err(invalid)?;
            format!("trace: {} gaze samples, {} frames; {}", t.gaze.len(), t.frames.len(), truth_summary(t.truth.as_ref()))
        }
        FileKind::Scenario => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(Error::file(path, e)))?;
            let spec = ScenarioSpec::from_json(&text).map_err(invalid)?;
            spec.validate().map_err(invalid)?;
            format!("scenario '{}': {} s, {} phases", spec.name, spec.duration, spec.gaze_script.len())
        }
        FileKind::Config => {
            let c = RunConfig::load(path).map_err(invalid)?;
            format!("config: hash {}", c.hash())
        }
        FileKind::Model => {
            let m = FusionModel::load(path).map_err(invalid)?;
            format!("model: grid {}, {} input channels, history {}", m.dims.grid, m.dims.in_channels, m.dims.history)
        }
        FileKind::Params => {
            let p = EnergyParams::load(path).map_err(invalid)?;
            format!("energy parameters: battery {} Wh", p.battery_capacity_wh)
        }
    };
    ctx.say(format!("ok: {summary}"));
    Ok(())
}
