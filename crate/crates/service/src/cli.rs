//! The `flowforge` command line.
//!
//! Exit status is 0 on success, 1 when an input fails validation or
//! generation fails, and 2 on usage errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use flowforge::catalog::EnvironmentCatalog;
use flowforge::dataset::{
    derive_retrieval_samples, gold_presence, inject_teacher_forcing, load_corpus, split_create_flow,
    split_populate_inputs, write_jsonl, LabeledWorkflow,
};
use flowforge::eval::{evaluate_corpus, flow_similarity, Aggregate, EvaluationPair, TreeMode};
use flowforge::model::{serialize_workflow, Violation};
use flowforge::orchestrator::{Orchestrator, Phase};
use flowforge::retriever::{BuildStatus, LexicalIndex};

use crate::config::ServiceConfig;
use crate::state::AppState;

#[derive(Debug, Parser)]
#[command(name = "flowforge", version, about = "Generate and evaluate low-code workflows")]
pub struct Cli {
    /// Print machine-readable JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// TOML configuration file; FLOWFORGE_* variables override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Catalog directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub catalog: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Retrieval index maintenance.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Generate workflows for requirements.
    Generate(GenerateArgs),
    /// Compare generated workflows against expected ones.
    Evaluate(EvaluateArgs),
    /// Build training and retrieval datasets from a corpus.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Build the index unless one for this catalog exists.
    Build {
        #[arg(long, value_name = "DIR")]
        dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, required_unless_present = "file", conflicts_with = "file")]
    pub requirement: Option<String>,
    /// One requirement per non-empty line.
    #[arg(long, value_name = "FILE")]
    pub file: Option<PathBuf>,
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long, value_name = "URL")]
    pub generator_url: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Reject ungrounded names instead of repairing them.
    #[arg(long)]
    pub no_repair: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "DIR")]
    pub expected: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub generated: PathBuf,
    /// full, outline or step:<name>
    #[arg(long, default_value = "full")]
    pub mode: TreeMode,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Write create_flow.jsonl and populate_inputs.jsonl.
    Split {
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Write one retrieval sample per artifact use.
    DeriveRetrieval {
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Write retrieval samples with the gold payload forced into the choices.
    TeacherForce {
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_name = "ADDR")]
    pub listen: Option<String>,
}

/// A failed command and its exit status.
#[derive(Debug)]
pub struct Failure {
    pub status: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Self {
            status: 2,
            message: message.to_string(),
        }
    }

    fn invalid(message: impl ToString) -> Self {
        Self {
            status: 1,
            message: message.to_string(),
        }
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if json {
                eprintln!("{}", json!({ "error": f.message, "status": f.status }));
            } else {
                eprintln!("flowforge: {}", f.message);
            }
            ExitCode::from(f.status)
        }
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = ServiceConfig::load(cli.config.as_deref()).map_err(Failure::usage)?;
    if let Some(dir) = cli.catalog {
        config.catalog_dir = dir;
    }
    let out = Output { json: cli.json };
    match cli.command {
        Command::Index(IndexCommand::Build { dir }) => index_build(&out, &config, dir),
        Command::Generate(args) => generate(&out, config, args),
        Command::Evaluate(args) => evaluate(&out, &args),
        Command::Dataset(cmd) => dataset(&out, &config, cmd),
        Command::Serve(args) => serve(&out, config, args),
    }
}

struct Output {
    json: bool,
}

impl Output {
    fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
        } else {
            print!("{}", text());
        }
    }
}

fn load_catalog(config: &ServiceConfig) -> Result<EnvironmentCatalog, Failure> {
    EnvironmentCatalog::load(&config.catalog_dir).map_err(Failure::invalid)
}

fn load_items(dir: &Path) -> Result<Vec<LabeledWorkflow>, Failure> {
    if !dir.is_dir() {
        return Err(Failure::usage(format!("{} is not a directory", dir.display())));
    }
    load_corpus(dir).map_err(Failure::invalid)
}

fn index_build(out: &Output, config: &ServiceConfig, dir: Option<PathBuf>) -> Result<(), Failure> {
    let catalog = load_catalog(config)?;
    let dir = dir.unwrap_or_else(|| config.index_dir.clone());
    let (_, status) = LexicalIndex::build_or_load(&dir, &catalog).map_err(Failure::invalid)?;
    let path = LexicalIndex::path_in(&dir, catalog.version());
    let word = match status {
        BuildStatus::Built => "built",
        BuildStatus::UpToDate => "up-to-date",
    };
    out.emit(
        &json!({ "status": status, "path": path, "catalog": catalog.version() }),
        || format!("{word} {}\n", path.display()),
    );
    Ok(())
}

#[derive(Serialize)]
struct Generated {
    requirement: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    workflow: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    violations: Vec<Violation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl Generated {
    fn ok(&self) -> bool {
        self.error.is_none() && self.violations.is_empty()
    }
}

fn generate(out: &Output, mut config: ServiceConfig, args: GenerateArgs) -> Result<(), Failure> {
    if let Some(g) = args.generator {
        config.generator_name = g;
    }
    if args.generator_url.is_some() {
        config.generator_url = args.generator_url;
    }
    if let Some(k) = args.k {
        config.k = k;
    }
    if args.no_repair {
        config.repair_mode = false;
    }
    let registry = crate::registry(&config);
    config.check(&registry).map_err(Failure::usage)?;
    let requirements: Vec<String> = match (&args.requirement, &args.file) {
        (Some(r), _) => vec![r.clone()],
        (None, Some(f)) => std::fs::read_to_string(f)
            .map_err(|e| Failure::usage(format!("{}: {e}", f.display())))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect(),
        (None, None) => return Err(Failure::usage("give --requirement or --file")),
    };

    let catalog = Arc::new(load_catalog(&config)?);
    let index = Arc::new(LexicalIndex::build(&catalog));
    let generator = registry
        .create(&config.generator_name, catalog.clone())
        .ok_or_else(|| Failure::usage(format!("unknown generator `{}`", config.generator_name)))?;
    let mut oc = config.orchestration();
    oc.auto_continue = true;
    let orch = Orchestrator::new(catalog, index, generator, oc);

    let results: Vec<Generated> = requirements.iter().map(|r| generate_one(&orch, r)).collect();
    let failed = results.iter().filter(|g| !g.ok()).count();
    let text = || {
        let mut s = String::new();
        for g in &results {
            if results.len() > 1 {
                s.push_str(&format!("# {}\n", g.requirement));
            }
            if let Some(w) = &g.workflow {
                s.push_str(w);
            }
            for v in &g.violations {
                s.push_str(&format!("# {v}\n"));
            }
            if let Some(e) = &g.error {
                s.push_str(&format!("# error: {e}\n"));
            }
        }
        s
    };
    if args.requirement.is_some() {
        out.emit(&results[0], text);
    } else {
        out.emit(&results, text);
    }
    if failed > 0 {
        return Err(Failure::invalid(format!(
            "{failed} of {} requirement(s) failed",
            results.len()
        )));
    }
    Ok(())
}

fn generate_one(orch: &Orchestrator, requirement: &str) -> Generated {
    let mut g = Generated {
        requirement: requirement.to_owned(),
        workflow: None,
        violations: Vec::new(),
        error: None,
    };
    match orch.start_session(requirement) {
        Ok(s) if s.phase == Phase::Complete => {
            let w = s.workflow.expect("complete sessions have a workflow");
            g.violations = orch.validate(&w).violations;
            g.workflow = Some(serialize_workflow(&w));
        }
        Ok(s) => g.error = Some(format!("session ended in {:?}", s.phase)),
        Err(e) => g.error = Some(e.to_string()),
    }
    g
}

fn evaluate(out: &Output, args: &EvaluateArgs) -> Result<(), Failure> {
    let expected = load_items(&args.expected)?;
    let generated = load_items(&args.generated)?;
    if expected.is_empty() {
        return Err(Failure::invalid(format!("no workflows in {}", args.expected.display())));
    }
    let mut missing = Vec::new();
    let mut pairs = Vec::new();
    for e in expected {
        match generated.iter().find(|g| g.id == e.id) {
            Some(g) => pairs.push(EvaluationPair {
                id: e.id,
                expected: e.workflow,
                generated: g.workflow.clone(),
            }),
            None => missing.push(e.id),
        }
    }
    if !missing.is_empty() {
        return Err(Failure::invalid(format!(
            "no generated workflow for: {}",
            missing.join(", ")
        )));
    }
    let scores: Vec<(String, f64)> = pairs
        .iter()
        .map(|p| (p.id.clone(), flow_similarity(&p.expected, &p.generated, &args.mode)))
        .collect();
    let values: Vec<f64> = scores.iter().map(|s| s.1).collect();
    let summary = Aggregate::of(&values).expect("at least one pair");
    let report = evaluate_corpus(&pairs).map_err(Failure::invalid)?;
    let rows: Vec<_> = scores
        .iter()
        .map(|(id, s)| json!({ "id": id, "similarity": s }))
        .collect();
    out.emit(
        &json!({ "mode": args.mode.to_string(), "similarity": summary, "pairs": rows, "report": report }),
        || {
            let mut s = String::new();
            for (id, v) in &scores {
                s.push_str(&format!("{id:<40} {v:.4}\n"));
            }
            s.push_str(&format!(
                "{} ({} pairs): mean {:.4}, median {:.4}\n\n",
                args.mode, summary.count, summary.mean, summary.median
            ));
            s.push_str(&report.render_table());
            s
        },
    );
    Ok(())
}

fn dataset(out: &Output, config: &ServiceConfig, cmd: DatasetCommand) -> Result<(), Failure> {
    let catalog = load_catalog(config)?;
    let corpus_dir = |c: &Option<PathBuf>| c.clone().unwrap_or_else(|| config.corpus_dir.clone());
    match cmd {
        DatasetCommand::Split { corpus, out: dir } => {
            let items = load_items(&corpus_dir(&corpus))?;
            let create = split_create_flow(&items, &catalog).map_err(Failure::invalid)?;
            let populate = split_populate_inputs(&items, &catalog).map_err(Failure::invalid)?;
            std::fs::create_dir_all(&dir).map_err(|e| Failure::invalid(format!("{}: {e}", dir.display())))?;
            write_jsonl(dir.join("create_flow.jsonl"), &create).map_err(Failure::invalid)?;
            write_jsonl(dir.join("populate_inputs.jsonl"), &populate).map_err(Failure::invalid)?;
            out.emit(
                &json!({ "items": items.len(), "create_flow": create.len(), "populate_inputs": populate.len() }),
                || {
                    format!(
                        "{} items: {} create_flow, {} populate_inputs samples\n",
                        items.len(),
                        create.len(),
                        populate.len()
                    )
                },
            );
        }
        DatasetCommand::DeriveRetrieval { corpus, out: file } => {
            let items = load_items(&corpus_dir(&corpus))?;
            let samples = derive_retrieval_samples(&items, &catalog);
            write_jsonl(&file, &samples).map_err(Failure::invalid)?;
            let unresolved = samples.iter().filter(|s| s.unresolved).count();
            out.emit(&json!({ "samples": samples.len(), "unresolved": unresolved }), || {
                format!("{} retrieval samples ({unresolved} unresolved)\n", samples.len())
            });
        }
        DatasetCommand::TeacherForce { corpus, out: file, k } => {
            let k = k.unwrap_or(config.k);
            if k == 0 {
                return Err(Failure::usage("k must be at least 1"));
            }
            let items = load_items(&corpus_dir(&corpus))?;
            let samples = derive_retrieval_samples(&items, &catalog);
            let index = LexicalIndex::build(&catalog);
            let forced = inject_teacher_forcing(&samples, &index, k);
            write_jsonl(&file, &forced).map_err(Failure::invalid)?;
            let n = forced.iter().filter(|t| t.forced).count();
            let presence = gold_presence(&forced);
            out.emit(
                &json!({ "samples": forced.len(), "forced": n, "gold_presence": presence }),
                || format!("{} samples, {n} forced, gold presence {presence:.4}\n", forced.len()),
            );
        }
    }
    Ok(())
}

fn serve(out: &Output, mut config: ServiceConfig, args: ServeArgs) -> Result<(), Failure> {
    if let Some(addr) = args.listen {
        config.listen_address = addr;
    }
    let state = AppState::new(config.clone()).map_err(Failure::usage)?;
    let rt = tokio::runtime::Runtime::new().map_err(Failure::invalid)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&config.listen_address)
            .await
            .map_err(|e| Failure::usage(format!("{}: {e}", config.listen_address)))?;
        let addr = listener.local_addr().map_err(Failure::invalid)?;
        out.emit(&json!({ "listening": addr.to_string() }), || {
            format!("listening on {addr}\n")
        });
        crate::serve(state, listener).await.map_err(Failure::invalid)
    })
}
