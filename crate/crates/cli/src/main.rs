// SPDX-License-Identifier: Apache-2.0

//! `svacov`: command-line front end for the assertion coverage pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use svacov_core::clustering::{cluster_batch, AssertionGroup, ClusterError};
use svacov_core::config::{Config, ConfigError};
use svacov_core::feedback::{run_loop, ExternalCommand, Generator, LoopError, LoopInputs, Synthetic, SyntheticMode};
use svacov_core::gateway::{BackendKind, Gateway, GatewayError};
use svacov_core::mapping::map_all;
use svacov_core::prompts::PromptSet;
use svacov_core::rundir::{self, InputHash, Manifest, RunDirError};
use svacov_core::semantic::{semantic_records, SemanticError, SemanticRecord};
use svacov_core::spec::{build_subspecs, load_fixture, save_fixture, Glossary, SpecError, SubSpec};
use svacov_core::structural::{build_structural_vector, distance_matrix, pad_batch, StructuralBatch, StructuralError};
use svacov_core::sva::source::{load_assertions, SourceError};
use svacov_core::sva::{parse_assertion, ParsedAssertion};

const EXIT_VALIDATION: u8 = 1;
const EXIT_BACKEND: u8 = 2;
const EXIT_ARGS: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "svacov",
    version,
    about = "Cluster SystemVerilog assertions, map them to a specification and drive coverage feedback"
)]
struct Cli {
    /// error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    /// Overrides `clustering.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Parse assertions (JSON Lines or .sv) into ParsedAssertion records.
    Parse {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Intent text and embedding per parsed assertion.
    Semantics {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Padded structural vectors and the distance matrix.
    Features {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-stage grouping from semantic and structural features.
    Cluster {
        #[arg(long)]
        sem: PathBuf,
        #[arg(long = "struct")]
        structural: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split a specification into sub-specs with functional points.
    Spec {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        glossary: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Map groups to sub-specs and align assertions to functional points.
    Map {
        #[arg(long)]
        groups: PathBuf,
        #[arg(long)]
        subspecs: PathBuf,
        #[arg(long)]
        sem: PathBuf,
        /// Parsed assertions, for their signal sets.
        #[arg(long)]
        parsed: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the coverage feedback loop and write a run directory.
    Iterate(IterateArgs),
    /// Render the per-round report of a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Overrides `gateway.backend`.
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IterateArgs {
    /// Specification text (markdown).
    #[arg(long, required_unless_present = "subspecs", conflicts_with = "subspecs")]
    spec: Option<PathBuf>,
    /// Pre-extracted sub-specs instead of `--spec`.
    #[arg(long)]
    subspecs: Option<PathBuf>,
    #[arg(long)]
    glossary: Option<PathBuf>,
    #[arg(long)]
    assertions: PathBuf,
    /// Shell command run once per feedback round.
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    generator_cmd: Option<String>,
    /// Built-in offline generator: perfect, one-per-round, imperfect or silent.
    #[arg(long)]
    synthetic: Option<SyntheticMode>,
    #[command(flatten)]
    common: Common,
    /// Directory with optional `round<k>.json` coverage reports.
    #[arg(long)]
    coverage_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn args(message: impl ToString) -> Failure {
        Failure {
            code: EXIT_ARGS,
            message: message.to_string(),
        }
    }

    fn validation(message: impl ToString) -> Failure {
        Failure {
            code: EXIT_VALIDATION,
            message: message.to_string(),
        }
    }

    fn backend(message: impl ToString) -> Failure {
        Failure {
            code: EXIT_BACKEND,
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::args(e)
    }
}

impl From<SourceError> for Failure {
    fn from(e: SourceError) -> Self {
        match e {
            SourceError::Io { .. } => Failure::args(e),
            _ => Failure::validation(e),
        }
    }
}

impl From<GatewayError> for Failure {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Argument(_) => Failure::args(e),
            _ => Failure::backend(e),
        }
    }
}

impl From<SemanticError> for Failure {
    fn from(e: SemanticError) -> Self {
        match e {
            SemanticError::Backend(g) => g.into(),
            other => Failure::validation(other),
        }
    }
}

impl From<SpecError> for Failure {
    fn from(e: SpecError) -> Self {
        match e {
            SpecError::Backend(g) => g.into(),
            SpecError::Io { .. } | SpecError::Argument(_) => Failure::args(e),
            other => Failure::validation(other),
        }
    }
}

impl From<StructuralError> for Failure {
    fn from(e: StructuralError) -> Self {
        Failure::validation(e)
    }
}

impl From<ClusterError> for Failure {
    fn from(e: ClusterError) -> Self {
        Failure::validation(e)
    }
}

impl From<LoopError> for Failure {
    fn from(e: LoopError) -> Self {
        match e {
            LoopError::Semantic(s) => s.into(),
            LoopError::Generator { .. } => Failure::backend(e),
            other => Failure::validation(other),
        }
    }
}

impl From<RunDirError> for Failure {
    fn from(e: RunDirError) -> Self {
        match e {
            RunDirError::Io { .. } => Failure::args(e),
            RunDirError::Format { .. } => Failure::validation(e),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::args(format!("{}: no such file", path.display())))
    }
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> CliResult<T> {
    require_file(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::args(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

/// Writes pretty JSON to `out`, or to standard output when absent.
fn emit<T: Serialize + ?Sized>(out: Option<&Path>, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("output serializes") + "\n";
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::args(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> CliResult<Config> {
    let mut cfg = match path {
        Some(p) => {
            require_file(p)?;
            Config::load(p)?
        }
        None => Config::default(),
    };
    if let Some(s) = seed {
        cfg.clustering.seed = s;
    }
    Ok(cfg)
}

fn gateway(cfg: &Config, backend: Option<BackendKind>) -> CliResult<Gateway> {
    let mut gcfg = cfg.gateway.clone();
    if let Some(b) = backend {
        gcfg.backend = b;
    }
    Ok(Gateway::new(gcfg)?)
}

fn run(cli: Cli) -> CliResult<()> {
    let seed = cli.seed;
    match cli.command {
        Cmd::Parse { input, out } => {
            require_file(&input)?;
            let raw = load_assertions(&input)?;
            let parsed = raw
                .iter()
                .map(|r| parse_assertion(&r.id, &r.sva))
                .collect::<Result<Vec<_>, _>>()
                .map_err(Failure::validation)?;
            let ok = parsed.iter().filter(|p| p.syntax_ok).count();
            for p in parsed.iter().filter(|p| !p.syntax_ok) {
                eprintln!(
                    "{}: {}",
                    p.assertion_id,
                    p.diagnostic.as_deref().unwrap_or("syntax error")
                );
            }
            emit(out.as_deref(), &parsed)?;
            eprintln!("parsed {} assertions, {ok} syntax-correct", parsed.len());
        }
        Cmd::Semantics { input, common, out } => {
            let parsed: Vec<ParsedAssertion> = read_json(&input)?;
            let cfg = load_config(common.config.as_deref(), seed)?;
            let gw = gateway(&cfg, common.backend)?;
            let records = semantic_records(&parsed, &gw, &cfg.prompt_set()?)?;
            emit(out.as_deref(), &records)?;
            eprintln!("{} semantic records from {}", records.len(), gw.backend_tag());
        }
        Cmd::Features { input, config, out } => {
            let parsed: Vec<ParsedAssertion> = read_json(&input)?;
            let cfg = load_config(config.as_deref(), seed)?;
            let mut unpadded = Vec::new();
            for pa in &parsed {
                if pa.syntax_ok {
                    unpadded.push(build_structural_vector(pa)?);
                } else {
                    log::warn!("skipping {}: not syntax-correct", pa.assertion_id);
                }
            }
            let batch = if unpadded.is_empty() {
                StructuralBatch::default()
            } else {
                let vectors = pad_batch(unpadded)?;
                let distance_matrix = distance_matrix(&vectors, &cfg.structural, cfg.runtime.execution)?;
                StructuralBatch {
                    vectors,
                    distance_matrix,
                }
            };
            emit(out.as_deref(), &batch)?;
            eprintln!("{} structural vectors", batch.vectors.len());
        }
        Cmd::Cluster {
            sem,
            structural,
            config,
            out,
        } => {
            let records: Vec<SemanticRecord> = read_json(&sem)?;
            let batch: StructuralBatch = read_json(&structural)?;
            let cfg = load_config(config.as_deref(), seed)?;
            let with_structure: BTreeSet<&str> = batch.vectors.iter().map(|v| v.assertion_id.as_str()).collect();
            let records: Vec<SemanticRecord> = records
                .into_iter()
                .filter(|r| {
                    let keep = with_structure.contains(r.assertion_id.as_str());
                    if !keep {
                        log::warn!("skipping {}: no structural vector", r.assertion_id);
                    }
                    keep
                })
                .collect();
            if records.is_empty() {
                return Err(Failure::validation(
                    "no assertion has both semantic and structural features",
                ));
            }
            let outcome = cluster_batch(
                &records,
                &batch.vectors,
                &batch.distance_matrix,
                &cfg.clustering,
                cfg.runtime.execution,
            )?;
            emit(out.as_deref(), &outcome.groups)?;
            eprintln!("{} assertions in {} groups", records.len(), outcome.groups.len());
        }
        Cmd::Spec {
            input,
            glossary,
            common,
            out,
        } => {
            require_file(&input)?;
            let text =
                std::fs::read_to_string(&input).map_err(|e| Failure::args(format!("{}: {e}", input.display())))?;
            let glossary = match glossary {
                Some(p) => {
                    require_file(&p)?;
                    Glossary::load(&p)?
                }
                None => Glossary::default(),
            };
            let cfg = load_config(common.config.as_deref(), seed)?;
            let gw = gateway(&cfg, common.backend)?;
            let subs = build_subspecs(&text, &glossary, &gw, &cfg.prompt_set()?)?;
            match out.as_deref() {
                Some(p) => save_fixture(p, &subs)?,
                None => emit(None, &subs)?,
            }
            let points: usize = subs.iter().map(|s| s.points.len()).sum();
            eprintln!("{} sub-specs, {points} functional points", subs.len());
        }
        Cmd::Map {
            groups,
            subspecs,
            sem,
            parsed,
            config,
            out,
        } => {
            let groups: Vec<AssertionGroup> = read_json(&groups)?;
            require_file(&subspecs)?;
            let subs: Vec<SubSpec> = load_fixture(&subspecs)?;
            let records: Vec<SemanticRecord> = read_json(&sem)?;
            let parsed: Vec<ParsedAssertion> = read_json(&parsed)?;
            let cfg = load_config(config.as_deref(), seed)?;
            let signals: BTreeMap<String, Vec<String>> =
                parsed.into_iter().map(|p| (p.assertion_id, p.signals)).collect();
            let mapping = map_all(&groups, &subs, &records, &signals, &cfg.mapping, cfg.runtime.execution)
                .map_err(Failure::validation)?;
            emit(out.as_deref(), &mapping)?;
            for row in &mapping.coverage_table {
                eprintln!(
                    "{}: {}/{} points covered ({:.2})",
                    row.subspec_id, row.covered, row.total, row.ratio
                );
            }
        }
        Cmd::Iterate(args) => iterate(args, seed)?,
        Cmd::Report { run, format } => {
            let rows = rundir::report_rows(&rundir::read_rounds(&run)?);
            match format {
                Format::Table => print!("{}", rundir::render_table(&rows)),
                Format::Json => emit(None, &rows)?,
            }
        }
    }
    Ok(())
}

fn iterate(args: IterateArgs, seed: Option<u64>) -> CliResult<()> {
    // Every input is checked before anything is written.
    for p in [&args.spec, &args.subspecs, &args.glossary, &args.common.config]
        .into_iter()
        .flatten()
        .chain([&args.assertions])
    {
        require_file(p)?;
    }
    if let Some(dir) = &args.coverage_dir {
        if !dir.is_dir() {
            return Err(Failure::args(format!("{}: no such directory", dir.display())));
        }
    }
    let cfg = load_config(args.common.config.as_deref(), seed)?;
    let prompts: PromptSet = cfg.prompt_set()?;
    let gw = gateway(&cfg, args.common.backend)?;
    let glossary = match &args.glossary {
        Some(p) => Glossary::load(p)?,
        None => Glossary::default(),
    };

    let mut inputs: BTreeMap<String, InputHash> = BTreeMap::new();
    let subspecs = if let Some(path) = &args.subspecs {
        inputs.insert("subspecs".into(), rundir::hash_file(path)?);
        load_fixture(path)?
    } else {
        let path = args.spec.as_ref().expect("clap enforces --spec or --subspecs");
        inputs.insert("spec".into(), rundir::hash_file(path)?);
        let text = std::fs::read_to_string(path).map_err(|e| Failure::args(format!("{}: {e}", path.display())))?;
        build_subspecs(&text, &glossary, &gw, &prompts)?
    };
    if let Some(p) = &args.glossary {
        inputs.insert("glossary".into(), rundir::hash_file(p)?);
    }
    if let Some(p) = &args.common.config {
        inputs.insert("config".into(), rundir::hash_file(p)?);
    }
    inputs.insert("assertions".into(), rundir::hash_file(&args.assertions)?);
    let seed_assertions = load_assertions(&args.assertions)?;

    let mut generator: Box<dyn Generator> = match (&args.generator_cmd, args.synthetic) {
        (Some(cmd), _) => Box::new(ExternalCommand::new(
            cmd.clone(),
            Duration::from_secs(cfg.loop_.generator_timeout_secs),
        )),
        (None, Some(mode)) => Box::new(Synthetic::new(mode)),
        (None, None) => unreachable!("clap enforces a generator"),
    };
    let loop_inputs = LoopInputs {
        subspecs,
        seed: seed_assertions,
        coverage_dir: args.coverage_dir.clone(),
    };
    let outcome = run_loop(&cfg, &loop_inputs, &gw, &prompts, generator.as_mut())?;
    let manifest = Manifest {
        tool: "svacov".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.clustering.seed,
        config: cfg.clone(),
        inputs,
        rounds: outcome.rounds.len(),
        converged: outcome.state.converged,
        created_at: rundir::now_unix(),
    };
    rundir::write_run(&args.out, &outcome, &manifest)?;
    eprint!(
        "{}",
        rundir::render_table(&rundir::report_rows(&rundir::read_rounds(&args.out)?))
    );
    eprintln!(
        "{} after round {} (network requests: {})",
        if outcome.state.converged {
            "converged"
        } else {
            "not converged"
        },
        outcome.state.round,
        gw.network_requests()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ARGS } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
