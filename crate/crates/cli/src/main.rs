use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use eami::decision::{
    DecisionBackendSet, HoursPolicy, HttpChatTransport, LlmBackend, LlmEndpointConfig, OrderPolicy, PromptTemplates,
    ScriptedBackend, ScriptedPolicy,
};
use eami::embed::{Embedder, HashEmbedder, RemoteEmbedder, RemoteEmbedderConfig};
use eami::emergence::{render_diagram, DiagramFormat, EmergenceDiagram, DIAGRAM_SCHEMA};
use eami::metrics::{
    effective_hours, hours_csv, hours_vs_orders, involution_csv, involution_index, position_heatmap,
    DEFAULT_HEATMAP_FACTOR,
};
use eami::mining::{EmergenceDetector, LlmDetector, DEFAULT_THETA};
use eami::pipeline::{analyze, records_from_trace, write_outputs, AnalysisConfig};
use eami::sim::{run_simulation, SimConfig, SimOptions};
use eami::trace::{
    audit_trace, digest_bytes, ingest_external, load_trace, IngestMapping, Trace, TraceError, TraceHeader, TraceWriter,
};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  internal error
  2  usage error (unknown flag, bad value)
  3  input file missing or unreadable
  4  schema or format mismatch (trace version, malformed line, bad config or mapping)
  5  backend failure (LLM or embedding endpoint)
  6  cannot write outputs
  7  trace audit found violations";

#[derive(Parser)]
#[command(name = "eami", version, about = "Delivery-rider simulation and emergent-intention analysis", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the delivery world and write DIR/trace.jsonl.
    #[command(after_help = EXIT_CODES)]
    Simulate(SimulateArgs),
    /// Mine, cluster and diagram the thoughts of a trace or an ingested log.
    #[command(after_help = EXIT_CODES)]
    Analyze(AnalyzeArgs),
    /// Write involution, hours and heat-map CSVs for a trace.
    #[command(after_help = EXIT_CODES)]
    Metrics(MetricsArgs),
    /// Re-render a diagram.json in another format.
    #[command(after_help = EXIT_CODES)]
    Diagram(DiagramArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Scripted,
    Llm,
}

#[derive(Clone, Copy, ValueEnum)]
enum HoursKind {
    /// Copy the top earner's hours and widen them by --delta.
    Imitate,
    /// Keep each rider's own hours (or --fixed-hours).
    Fixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrdersKind {
    Greedy,
    Route,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedderKind {
    Hash,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorKind {
    Similarity,
    Llm,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Dot,
    Json,
    Svg,
}

#[derive(Args)]
struct SimulateArgs {
    /// World parameters (TOML, SimConfig field names).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    riders: Option<u32>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long, value_enum, default_value = "scripted")]
    backend: BackendKind,
    #[arg(long, value_enum, default_value = "imitate")]
    hours_policy: HoursKind,
    /// Hours added on each side of the imitated shift.
    #[arg(long, default_value_t = 1)]
    delta: u8,
    /// START,END for the fixed policy, e.g. 8,18.
    #[arg(long, value_parser = parse_hours)]
    fixed_hours: Option<(u8, u8)>,
    #[arg(long, value_enum, default_value = "greedy")]
    order_policy: OrdersKind,
    /// Endpoint settings for --backend llm (TOML).
    #[arg(long)]
    llm_config: Option<PathBuf>,
    /// Directory of prompt template overrides.
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Record only the rational perspective.
    #[arg(long)]
    no_inspector: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, required_unless_present = "ingest", conflicts_with = "ingest")]
    trace: Option<PathBuf>,
    /// Foreign log (JSON array or JSON lines); needs --mapping.
    #[arg(long, requires = "mapping")]
    ingest: Option<PathBuf>,
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_THETA)]
    theta: f64,
    #[arg(long, default_value_t = eami::emergence::DEFAULT_WINDOW_TICKS)]
    window_ticks: u64,
    /// Seed for k-means.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value = "hash")]
    embedder: EmbedderKind,
    #[arg(long)]
    embed_url: Option<String>,
    #[arg(long)]
    embed_model: Option<String>,
    #[arg(long, value_enum, default_value = "similarity")]
    detector: DetectorKind,
    /// Endpoint settings for --detector llm (TOML).
    #[arg(long)]
    llm_config: Option<PathBuf>,
    /// Drop the bounded perspective before mining.
    #[arg(long)]
    no_inspector: bool,
    /// Skip emergence detection; the repository stays empty.
    #[arg(long)]
    no_analyzer: bool,
    /// Also write silhouette.csv for k = 2..=10.
    #[arg(long)]
    silhouette: bool,
    #[arg(long, default_value = "analysis")]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value_t = eami::emergence::DEFAULT_WINDOW_TICKS)]
    window_ticks: u64,
    #[arg(long, default_value_t = DEFAULT_HEATMAP_FACTOR)]
    heatmap_factor: u32,
    /// Also replay the trace's bookkeeping and fail on any violation.
    #[arg(long)]
    audit: bool,
    #[arg(long, default_value = "metrics")]
    out: PathBuf,
}

#[derive(Args)]
struct DiagramArgs {
    /// A diagram.json written by `analyze`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: FormatArg,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn parse_hours(s: &str) -> Result<(u8, u8), String> {
    let (a, b) = s.split_once(',').ok_or("expected START,END")?;
    let parse = |x: &str| {
        x.trim()
            .parse::<u8>()
            .ok()
            .filter(|h| *h <= 23)
            .ok_or(format!("{x:?} is not an hour 0-23"))
    };
    Ok((parse(a)?, parse(b)?))
}

enum Failure {
    Internal(String),
    Missing(PathBuf),
    Schema(String),
    Backend(String),
    Write(String),
    Audit(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Internal(_) => 1,
            Failure::Missing(_) => 3,
            Failure::Schema(_) => 4,
            Failure::Backend(_) => 5,
            Failure::Write(_) => 6,
            Failure::Audit(_) => 7,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Missing(p) => format!("cannot read {}", p.display()),
            Failure::Internal(m) | Failure::Schema(m) | Failure::Backend(m) | Failure::Write(m) | Failure::Audit(m) => {
                m.clone()
            }
        }
    }
}

type Outcome = Result<(), Failure>;

fn existing(path: &Path) -> Result<&Path, Failure> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Failure::Missing(path.to_path_buf()))
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(existing(path)?).map_err(|_| Failure::Missing(path.to_path_buf()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Outcome {
    fs::write(path, contents).map_err(|e| Failure::Write(format!("{}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::Write(format!("{}: {e}", dir.display())))
}

fn trace_failure(path: &Path, e: TraceError) -> Failure {
    match e {
        TraceError::Io(_) => Failure::Missing(path.to_path_buf()),
        other => Failure::Schema(format!("{}: {other}", path.display())),
    }
}

fn open_trace(path: &Path) -> Result<Trace, Failure> {
    load_trace(existing(path)?).map_err(|e| trace_failure(path, e))
}

fn llm_config(path: Option<&Path>) -> Result<LlmEndpointConfig, Failure> {
    match path {
        None => Ok(LlmEndpointConfig::default()),
        Some(p) => toml::from_str(&read_text(p)?).map_err(|e| Failure::Schema(format!("{}: {e}", p.display()))),
    }
}

fn simulate(a: SimulateArgs) -> Outcome {
    let mut config = match &a.config {
        Some(p) => SimConfig::from_toml_str(&read_text(p)?).map_err(|e| Failure::Schema(format!("{}: {e}", p.display())))?,
        None => SimConfig::default(),
    };
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(n) = a.riders {
        config.n_riders = n;
    }
    if let Some(n) = a.steps {
        config.total_steps = n;
    }
    config.validate().map_err(|e| Failure::Schema(e.to_string()))?;

    let backends = match a.backend {
        BackendKind::Scripted => {
            let hours = match a.hours_policy {
                HoursKind::Imitate => HoursPolicy::ImitateTopRanked { delta: a.delta },
                HoursKind::Fixed => HoursPolicy::FixedHours {
                    hours: a.fixed_hours.map(|(s, e)| eami::decision::WorkHoursDecision::new(s, e)),
                },
            };
            let orders = match a.order_policy {
                OrdersKind::Greedy => OrderPolicy::GreedyNearest,
                OrdersKind::Route => OrderPolicy::RouteOptimizer,
            };
            DecisionBackendSet::new(ScriptedBackend::new(ScriptedPolicy { hours, orders }, config.seed))
        }
        BackendKind::Llm => {
            let endpoint = llm_config(a.llm_config.as_deref())?;
            let templates = match &a.prompts {
                Some(dir) => PromptTemplates::from_dir(dir).map_err(|e| Failure::Schema(e.to_string()))?,
                None => PromptTemplates::default(),
            };
            let transport = HttpChatTransport::new(&endpoint);
            DecisionBackendSet::new(
                LlmBackend::new(transport, endpoint, templates).with_dual_perspective(!a.no_inspector),
            )
        }
    };

    out_dir(&a.out)?;
    let path = a.out.join("trace.jsonl");
    let partial = a.out.join("trace.jsonl.partial");
    let header = TraceHeader::for_config(&config, 0);
    let started = Instant::now();
    let mut writer = TraceWriter::create(&partial, &header).map_err(|e| Failure::Write(e.to_string()))?;
    let options = SimOptions {
        inspector: !a.no_inspector,
    };
    let world = run_simulation(config, options, &backends, &mut writer).map_err(|e| match e {
        eami::sim::SimError::Trace(TraceError::Io(io)) => Failure::Write(format!("{}: {io}", partial.display())),
        other => Failure::Internal(other.to_string()),
    })?;
    writer.into_inner().map_err(|e| Failure::Write(e.to_string()))?;
    fs::rename(&partial, &path).map_err(|e| Failure::Write(format!("{}: {e}", path.display())))?;
    let bytes = fs::read(&path).map_err(|e| Failure::Write(e.to_string()))?;
    println!(
        "wrote {} ({} ticks, {} orders) sha256 {} in {:.1}s",
        path.display(),
        world.tick,
        world.order_book.len(),
        digest_bytes(&bytes),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn analyze_cmd(a: AnalyzeArgs) -> Outcome {
    let (records, total_ticks, mut notes) = if let Some(trace) = &a.trace {
        let t = open_trace(trace)?;
        let total = t.config().map(|c| c.total_steps);
        (records_from_trace(&t), total, Vec::new())
    } else {
        let input = a.ingest.as_deref().expect("clap enforces --trace or --ingest");
        let mapping_path = a.mapping.as_deref().expect("clap enforces --mapping");
        let mapping = IngestMapping::from_toml_str(&read_text(mapping_path)?)
            .map_err(|e| Failure::Schema(format!("{}: {e}", mapping_path.display())))?;
        let r = ingest_external(existing(input)?, &mapping).map_err(|e| match e {
            eami::trace::IngestError::Io(_) => Failure::Missing(input.to_path_buf()),
            other => Failure::Schema(format!("{}: {other}", input.display())),
        })?;
        let mut notes = r.warnings;
        if r.skipped > 0 {
            notes.push(format!("skipped {} foreign records", r.skipped));
        }
        (r.records, None, notes)
    };

    let embedder = match a.embedder {
        EmbedderKind::Hash => Embedder::Hash(HashEmbedder::default()),
        EmbedderKind::Remote => {
            let mut c = RemoteEmbedderConfig::default();
            if let Some(u) = &a.embed_url {
                c.url = u.clone();
            }
            if let Some(m) = &a.embed_model {
                c.model = m.clone();
            }
            Embedder::Remote(RemoteEmbedder::new(c))
        }
    };
    let detector = match a.detector {
        DetectorKind::Similarity => EmergenceDetector::Similarity { theta: a.theta },
        DetectorKind::Llm => {
            let config = llm_config(a.llm_config.as_deref())?;
            EmergenceDetector::Llm(LlmDetector {
                transport: Box::new(HttpChatTransport::new(&config)),
                config,
                template: PromptTemplates::default().detector,
                fallback_theta: a.theta,
            })
        }
    };
    if !(0.0..=1.0).contains(&a.theta) {
        return Err(Failure::Schema(format!("--theta {} is outside [0, 1]", a.theta)));
    }
    if a.k == 0 || a.window_ticks == 0 {
        return Err(Failure::Schema("--k and --window-ticks must be positive".into()));
    }
    let cfg = AnalysisConfig {
        theta: a.theta,
        k: a.k,
        seed: a.seed,
        window_ticks: a.window_ticks,
        inspector: !a.no_inspector,
        analyzer: !a.no_analyzer,
        silhouette: a.silhouette,
        ..AnalysisConfig::default()
    };
    let started = Instant::now();
    let analysis = analyze(&records, total_ticks, &cfg, &embedder, &detector).map_err(|e| match e {
        eami::pipeline::AnalysisError::Detect(d) => Failure::Backend(d.to_string()),
        other => Failure::Internal(other.to_string()),
    })?;
    out_dir(&a.out)?;
    write_outputs(&a.out, &analysis).map_err(|e| Failure::Write(e.to_string()))?;
    if a.silhouette {
        let mut s = String::from("k,silhouette\n");
        for (k, v) in &analysis.silhouette {
            s.push_str(&format!("{k},{v:.6}\n"));
        }
        write_file(&a.out.join("silhouette.csv"), s)?;
    }
    notes.extend(analysis.warnings.iter().cloned());
    for n in &notes {
        eprintln!("warning: {n}");
    }
    println!(
        "{} thoughts, {} emergent intentions, {} clusters, {} emergence points -> {} in {:.1}s",
        analysis.records_seen,
        analysis.repository.len(),
        analysis.labels.len(),
        analysis.diagram.points.len(),
        a.out.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn metrics_cmd(a: MetricsArgs) -> Outcome {
    let trace = open_trace(&a.trace)?;
    let cfg = trace
        .config()
        .cloned()
        .ok_or_else(|| Failure::Schema(format!("{}: no sim_start config", a.trace.display())))?;
    if a.heatmap_factor == 0 || a.window_ticks == 0 {
        return Err(Failure::Schema("--heatmap-factor and --window-ticks must be positive".into()));
    }
    let schema = |e: eami::metrics::MetricsError| Failure::Schema(e.to_string());
    out_dir(&a.out)?;
    write_file(&a.out.join("involution.csv"), involution_csv(&involution_index(&trace).map_err(schema)?))?;
    write_file(&a.out.join("hours.csv"), hours_csv(&hours_vs_orders(&trace).map_err(schema)?))?;

    let mut daily = String::from("day,agent_id,total_hours,effective_hours,total_orders\n");
    for day in 0..cfg.days() {
        for r in effective_hours(&trace, day).map_err(schema)? {
            daily.push_str(&format!(
                "{day},{},{:.4},{:.4},{}\n",
                r.agent_id, r.total_hours, r.effective_hours, r.total_orders
            ));
        }
    }
    write_file(&a.out.join("effective_hours.csv"), daily)?;

    let windows = cfg.total_steps.div_ceil(a.window_ticks) as usize;
    for w in 0..windows {
        let grid = position_heatmap(&trace, w, a.window_ticks, a.heatmap_factor).map_err(schema)?;
        write_file(&a.out.join(format!("heatmap_w{w}.csv")), grid.to_csv())?;
    }

    if a.audit {
        let report = audit_trace(&trace);
        if !report.is_clean() {
            return Err(Failure::Audit(format!(
                "{} audit violations, first: {}",
                report.violations.len(),
                report.violations[0]
            )));
        }
        eprintln!("audit: {} events, all checks passed", report.events);
    }
    println!("wrote metrics for {} days and {windows} windows -> {}", cfg.days(), a.out.display());
    Ok(())
}

fn diagram_cmd(a: DiagramArgs) -> Outcome {
    let text = read_text(&a.input)?;
    let d: EmergenceDiagram =
        serde_json::from_str(&text).map_err(|e| Failure::Schema(format!("{}: {e}", a.input.display())))?;
    if d.diagram_schema != DIAGRAM_SCHEMA {
        return Err(Failure::Schema(format!(
            "{}: diagram schema {} is not supported (expected {DIAGRAM_SCHEMA})",
            a.input.display(),
            d.diagram_schema
        )));
    }
    d.check_invariants()
        .map_err(|e| Failure::Schema(format!("{}: {e}", a.input.display())))?;
    let format = match a.format {
        FormatArg::Dot => DiagramFormat::Dot,
        FormatArg::Json => DiagramFormat::Json,
        FormatArg::Svg => DiagramFormat::Svg,
    };
    out_dir(&a.out)?;
    let path = a.out.join(format!("diagram.{}", format.extension()));
    write_file(&path, render_diagram(&d, format))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                // --help / --version
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("usage error");
            eprintln!("{line} (try --help)");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze_cmd(a),
        Command::Metrics(a) => metrics_cmd(a),
        Command::Diagram(a) => diagram_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message().replace('\n', " "));
            ExitCode::from(f.code())
        }
    }
}
