//! `sgr`: generate fixtures, build scene graphs, answer queries, score output.
//!
//! Exit status: 0 on success, 2 on an input error, 3 on a query parse error.
//! Errors are printed to standard error as a single line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sgr_core::eval::{parse_records, EvalReport};
use sgr_core::graph::{build_graph, SceneGraph};
use sgr_core::io::{load_scene_bundle, save_scene_bundle};
use sgr_core::query::{parse_query_with, parse_structured, ParseOptions, QueryError, StructuredQuery};
use sgr_core::search::execute;
use sgr_core::synth::{gen_queries_with, gen_scene, CameraKind, SynthEntity};
use sgr_core::{EngineConfig, OutputFormat};

#[derive(Parser)]
#[command(name = "sgr", version, about = "Scene-graph spatial reasoning over detections and point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic fixture directory with oracle-answered queries.
    Gen(GenArgs),
    /// Build a scene graph from a fixture manifest or directory.
    Build(BuildArgs),
    /// Answer one query, or a batch of queries, over a built graph.
    Query(QueryArgs),
    /// Score grounding records (JSON lines) with mIoU and mAP@[.50:.95].
    Eval(EvalArgs),
}

#[derive(Args, Clone)]
struct EngineArgs {
    /// JSON engine configuration file.
    #[arg(long, env = "SGR_CONFIG")]
    config: Option<PathBuf>,
    /// Upper bound of the close distance bin, meters.
    #[arg(long)]
    close: Option<f64>,
    /// Upper bound of the medium distance bin, meters.
    #[arg(long)]
    medium: Option<f64>,
    /// Adjacency radius, meters.
    #[arg(long)]
    adjacency: Option<f64>,
    /// Outlier trim percentage for 3D localization.
    #[arg(long)]
    trim: Option<f64>,
    /// Output format: json or text.
    #[arg(long)]
    format: Option<OutputFormat>,
    /// Skip unknown words in queries instead of rejecting them.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of entities (1 to 500).
    #[arg(long, short = 'n', default_value_t = 10)]
    n: usize,
    /// Camera model: pinhole or cylindrical.
    #[arg(long, default_value = "pinhole")]
    camera: CameraKind,
    /// Number of generated queries.
    #[arg(long, default_value_t = 30)]
    num_queries: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct BuildArgs {
    /// Manifest file or directory containing manifest.json.
    scene: PathBuf,
    /// Graph output path (standard output when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct QueryArgs {
    /// Graph file written by `build`.
    graph: PathBuf,
    /// Query sentence.
    query: Option<String>,
    /// Structured query document (JSON) instead of a sentence.
    #[arg(long, conflicts_with = "query")]
    structured: Option<PathBuf>,
    /// Batch file with one query sentence per line.
    #[arg(long, conflicts_with_all = ["query", "structured"])]
    queries: Option<PathBuf>,
    /// Worker threads for batch mode.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Records file, one JSON record per line.
    records: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
}

/// A failure with its exit status and single-line message.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Self { code: 2, message: message.to_string() }
    }

    fn parse(message: impl ToString) -> Self {
        Self { code: 3, message: message.to_string() }
    }
}

type CmdResult = Result<(), Failure>;

fn resolve_config(args: &EngineArgs) -> Result<EngineConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => EngineConfig::load(path).map_err(|e| Failure::input(format!("ConfigError: {e}")))?,
        None => EngineConfig::default(),
    };
    let r = &mut cfg.relation;
    if let Some(v) = args.close {
        r.close_max_m = v;
    }
    if let Some(v) = args.medium {
        r.medium_max_m = v;
    }
    if let Some(v) = args.adjacency {
        r.adjacency_max_m = v;
    }
    if let Some(v) = args.trim {
        r.outlier_trim_pct = v;
    }
    if let Some(f) = args.format {
        cfg.output_format = f;
    }
    if args.lenient {
        cfg.grammar_strict = false;
    }
    cfg.relation.validate().map_err(|e| Failure::input(format!("ConfigError: {e}")))?;
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::input(format!("IoError: {}: {e}", path.display())))
}

fn read_file(path: &Path, name: &str) -> Result<String, Failure> {
    if !path.exists() {
        return Err(Failure::input(format!("MissingInput: {name}")));
    }
    fs::read_to_string(path).map_err(|e| Failure::input(format!("IoError: {}: {e}", path.display())))
}

#[derive(Serialize)]
struct QueryLine<'a> {
    family: sgr_core::synth::QueryFamily,
    text: &'a str,
    query: &'a StructuredQuery,
    answer: &'a sgr_core::Answer,
}

#[derive(Serialize)]
struct SceneDoc<'a> {
    seed: u64,
    camera: CameraKind,
    entities: &'a [SynthEntity],
}

fn cmd_gen(args: &GenArgs) -> CmdResult {
    let cfg = resolve_config(&args.engine)?;
    let (scene, bundle) = gen_scene(args.seed, args.n, args.camera).map_err(Failure::input)?;
    save_scene_bundle(&bundle, &args.out).map_err(Failure::input)?;
    let doc = SceneDoc { seed: scene.seed, camera: scene.kind, entities: &scene.entities };
    write_file(&args.out.join("scene.json"), &(serde_json::to_string_pretty(&doc).expect("scene serializes") + "\n"))?;
    let mut lines = String::new();
    for q in gen_queries_with(&scene, args.seed, args.num_queries, &cfg.relation) {
        let line = QueryLine { family: q.family, text: &q.text, query: &q.query, answer: &q.answer };
        lines.push_str(&serde_json::to_string(&line).expect("query serializes"));
        lines.push('\n');
    }
    write_file(&args.out.join("queries.jsonl"), &lines)
}

fn cmd_build(args: &BuildArgs) -> CmdResult {
    let cfg = resolve_config(&args.engine)?;
    let bundle = load_scene_bundle(&args.scene).map_err(Failure::input)?;
    let graph = build_graph(&bundle, &cfg.relation);
    for d in graph.diagnostics() {
        eprintln!("dropped detection {}: {:?}", d.id, d.reason);
    }
    let json = graph.to_json() + "\n";
    match &args.out {
        Some(path) => {
            write_file(path, &json)?;
            let summary = match cfg.output_format {
                OutputFormat::Json => format!(
                    "{{\"nodes\": {}, \"edges\": {}, \"dropped\": {}}}",
                    graph.len(),
                    graph.edges().len(),
                    graph.diagnostics().len()
                ),
                OutputFormat::Text => format!(
                    "{} nodes, {} edges, {} dropped detections",
                    graph.len(),
                    graph.edges().len(),
                    graph.diagnostics().len()
                ),
            };
            println!("{summary}");
        }
        None => print!("{json}"),
    }
    Ok(())
}

fn parse_sentence(text: &str, cfg: &EngineConfig) -> Result<StructuredQuery, QueryError> {
    parse_query_with(text, ParseOptions { strict: cfg.grammar_strict })
}

fn render(answer: &sgr_core::Answer, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => answer.to_json(),
        OutputFormat::Text => answer.to_text(),
    }
}

fn cmd_query(args: &QueryArgs) -> CmdResult {
    let cfg = resolve_config(&args.engine)?;
    let graph_text = read_file(&args.graph, "graph")?;
    let graph = SceneGraph::from_json(&graph_text).map_err(Failure::input)?;

    if let Some(batch) = &args.queries {
        let text = read_file(batch, "queries")?;
        let mut queries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let q = parse_sentence(line, &cfg).map_err(|e| Failure::parse(format!("line {}: {e}", i + 1)))?;
            queries.push(q);
        }
        for line in run_batch(&graph, &queries, args.jobs.max(1), cfg.output_format) {
            println!("{line}");
        }
        return Ok(());
    }

    let q = match (&args.query, &args.structured) {
        (_, Some(path)) => {
            let doc = read_file(path, "structured query")?;
            parse_structured(&doc).map_err(Failure::parse)?
        }
        (Some(text), None) => parse_sentence(text, &cfg).map_err(Failure::parse)?,
        (None, None) => return Err(Failure::input("MissingInput: query")),
    };
    println!("{}", render(&execute(&graph, &q), cfg.output_format));
    Ok(())
}

/// Executes queries on `jobs` threads; output order follows input order.
fn run_batch(graph: &SceneGraph, queries: &[StructuredQuery], jobs: usize, format: OutputFormat) -> Vec<String> {
    let mut out = vec![String::new(); queries.len()];
    let chunk = queries.len().div_ceil(jobs).max(1);
    std::thread::scope(|s| {
        for (qs, slots) in queries.chunks(chunk).zip(out.chunks_mut(chunk)) {
            s.spawn(move || {
                for (q, slot) in qs.iter().zip(slots) {
                    *slot = render(&execute(graph, q), format);
                }
            });
        }
    });
    out
}

fn cmd_eval(args: &EvalArgs) -> CmdResult {
    let cfg = resolve_config(&args.engine)?;
    let text = read_file(&args.records, "records")?;
    let records = parse_records(&text).map_err(Failure::input)?;
    let report = EvalReport::compute(&records);
    match cfg.output_format {
        OutputFormat::Json => println!("{}", report.to_json()),
        OutputFormat::Text => print!("{}", report.to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Build(a) => cmd_build(a),
        Command::Query(a) => cmd_query(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
