//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 when a request is not solved or a plan is
//! invalid, 1 on usage, input or I/O errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::composer::{compose, ComposeError, ComposerConfig, CompositionProblem};
use crate::io::{
    generate_instance, parse_instance, verify_plan, GeneratorParams, PlanDocument, Verdict,
};
use crate::knowledge::{init_from_request, Binding};
use crate::matcher::{
    build_data_graph, build_query_graph, enumerate_matches, MatchConfig, MatchError,
};
use crate::service::rule_as_virtual_service;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_UNSOLVED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "wscompose",
    version,
    about = "Compose semantic web services by forward chaining"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compose a plan answering the instance's query.
    Compose(ComposeArgs),
    /// Replay a plan against an instance.
    Verify { instance: PathBuf, plan: PathBuf },
    /// Generate a random instance with a planted solution.
    Gen(GenArgs),
    /// List the bindings of one service (or rule) in the initial knowledge.
    #[command(hide = true)]
    Match {
        instance: PathBuf,
        #[arg(long)]
        service: String,
        #[arg(long)]
        injective: bool,
        /// Fail if there are more bindings than this.
        #[arg(long)]
        limit: Option<NonZeroUsize>,
    },
}

#[derive(Debug, Args)]
struct ComposeArgs {
    instance: PathBuf,
    /// Write the plan here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Require distinct objects for distinct parameters.
    #[arg(long)]
    injective: bool,
    /// Drop calls the answer does not depend on.
    #[arg(long)]
    prune: bool,
    /// Leave rule applications out of the plan.
    #[arg(long)]
    omit_rule_calls: bool,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    #[arg(long, default_value_t = 10_000)]
    max_objects: usize,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 15)]
    concepts: usize,
    #[arg(long, default_value_t = 6)]
    subtype_edges: usize,
    #[arg(long, default_value_t = 3)]
    relations: usize,
    #[arg(long, default_value_t = 1)]
    rules: usize,
    #[arg(long, default_value_t = 8)]
    services: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 1)]
    rule_steps: usize,
    #[arg(long, default_value_t = 2)]
    max_inputs: usize,
    #[arg(long, default_value_t = 1)]
    max_outputs: usize,
    #[arg(long, default_value_t = 0.1)]
    property_chance: f64,
    #[arg(long, default_value_t = 0.5)]
    open_chance: f64,
    /// Make the goal unreachable.
    #[arg(long)]
    unsolvable: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl From<&GenArgs> for GeneratorParams {
    fn from(a: &GenArgs) -> Self {
        GeneratorParams {
            concepts: a.concepts,
            subtype_edges: a.subtype_edges,
            relations: a.relations,
            rules: a.rules,
            services: a.services,
            depth: a.depth,
            rule_steps: a.rule_steps,
            max_inputs: a.max_inputs,
            max_outputs: a.max_outputs,
            property_chance: a.property_chance,
            open_chance: a.open_chance,
            solvable: !a.unsolvable,
            seed: a.seed,
        }
    }
}

/// A failure with its exit code; the message goes to standard error.
struct Failure {
    code: i32,
    message: String,
}

fn fail(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_FAILURE,
        message: message.into(),
    }
}

fn load_instance(path: &Path) -> Result<CompositionProblem, Failure> {
    let text = fs::read_to_string(path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
    parse_instance(&text).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| fail(format!("{}: {e}", path.display()))),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| fail(e.to_string())),
    }
}

fn run_compose(args: &ComposeArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let config = ComposerConfig {
        max_iterations: args.max_iterations,
        max_objects: args.max_objects,
        injective: args.injective,
        prune: args.prune,
        include_rule_calls_in_plan: !args.omit_rule_calls,
    };
    config.validate().map_err(|e| fail(e.to_string()))?;
    let problem = load_instance(&args.instance)?;
    let plan = compose(&problem, &config).map_err(|e| match e {
        ComposeError::NotSolved(_) => Failure {
            code: EXIT_UNSOLVED,
            message: e.to_string(),
        },
        other => fail(other.to_string()),
    })?;
    let doc = PlanDocument::from_plan(&problem, &plan, &config).map_err(|e| fail(e.to_string()))?;
    emit(args.out.as_deref(), &doc.to_json(), stdout)
}

fn run_verify(instance: &Path, plan: &Path, stdout: &mut dyn Write) -> Result<(), Failure> {
    let problem = load_instance(instance)?;
    let text = fs::read_to_string(plan).map_err(|e| fail(format!("{}: {e}", plan.display())))?;
    let doc =
        PlanDocument::from_json(&text).map_err(|e| fail(format!("{}: {e}", plan.display())))?;
    match verify_plan(&problem, &doc) {
        Verdict::Valid => writeln!(stdout, "valid").map_err(|e| fail(e.to_string())),
        invalid => Err(Failure {
            code: EXIT_UNSOLVED,
            message: invalid.to_string(),
        }),
    }
}

fn run_gen(args: &GenArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let doc = generate_instance(&GeneratorParams::from(args)).map_err(|e| fail(e.to_string()))?;
    emit(args.out.as_deref(), &doc.to_json(), stdout)
}

fn run_match(
    instance: &Path,
    service: &str,
    config: MatchConfig,
    stdout: &mut dyn Write,
) -> Result<(), Failure> {
    let problem = load_instance(instance)?;
    let ontology = &problem.ontology;
    let service = problem
        .repository
        .get(service)
        .cloned()
        .or_else(|| {
            ontology
                .all_rules()
                .find(|r| r.name == service)
                .map(rule_as_virtual_service)
        })
        .ok_or_else(|| fail(format!("no service or rule named `{service}`")))?;
    let (state, _) =
        init_from_request(ontology, &problem.request).map_err(|e| fail(e.to_string()))?;
    let query = build_query_graph(ontology, &service, &Binding::default())
        .map_err(|e| fail(e.to_string()))?;
    let bindings = enumerate_matches(&query, &build_data_graph(ontology, &state), &config)
        .map_err(|e| match e {
            MatchError::LimitExceeded { .. } => Failure {
                code: EXIT_UNSOLVED,
                message: e.to_string(),
            },
            other => fail(other.to_string()),
        })?;
    let mut text = String::new();
    for b in &bindings {
        text.push_str(&b.to_string());
        text.push('\n');
    }
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| fail(e.to_string()))
}

/// Runs the command line `args` (program name first), writing documents to
/// `stdout` and diagnostics to `stderr`. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            // Help and version requests are not errors.
            if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
                return EXIT_FAILURE;
            }
            let _ = stdout.write_all(text.as_bytes());
            return EXIT_OK;
        }
    };
    let result = match &cli.command {
        Command::Compose(args) => run_compose(args, stdout),
        Command::Verify { instance, plan } => run_verify(instance, plan, stdout),
        Command::Gen(args) => run_gen(args, stdout),
        Command::Match {
            instance,
            service,
            injective,
            limit,
        } => {
            let mut config = MatchConfig::all().injective(*injective);
            if let Some(l) = limit {
                config = config.limit(l.get());
            }
            run_match(instance, service, config, stdout)
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "wscompose: {}", f.message);
            f.code
        }
    }
}
