//! `cbr`: command-line access to schemas, case bases, retrieval, grade
//! prediction, leave-one-out evaluation and the HTTP service.
//!
//! Exit codes: 0 success, 1 data or validation error, 2 usage error, 3 I/O error.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use cbr_core::case_base::peek_schema_id;
use cbr_core::formative::find_levers;
use cbr_core::{
    define_schema, generate_feedback, leave_one_out, predict_final_grade, retrieve_k, student_schema, AttributeType,
    CaseBase, CaseSchema, ErrorClass, FeedbackConfig, Format, Query, Value, DEFAULT_K,
};
use cbr_service::{ServiceConfig, ServiceError};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "cbr",
    version,
    about = "Case-based reasoning workbench for student final-grade outlooks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inspect and check case schemas.
    #[command(subcommand)]
    Schema(SchemaCommand),
    /// Convert and list case bases.
    #[command(subcommand)]
    Casebase(CaseBaseCommand),
    /// Rank the k most similar cases for a query.
    Retrieve(RetrieveArgs),
    /// Predict the final grade distribution and print formative feedback.
    Predict(RetrieveArgs),
    /// Leave-one-out accuracy of the grade prediction.
    Evaluate {
        casebase: PathBuf,
        #[arg(long)]
        schema: Option<String>,
        #[arg(short, default_value_t = DEFAULT_K)]
        k: usize,
    },
    /// Run the JSON/HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
enum SchemaCommand {
    /// Check a schema document and report the first problem.
    Validate { file: PathBuf },
    /// Print a schema as a table, or as its JSON document.
    Show {
        /// Schema document to show.
        file: Option<PathBuf>,
        /// Show a built-in schema instead (`student`).
        #[arg(long, conflicts_with = "file")]
        builtin: Option<String>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
enum CaseBaseCommand {
    /// Read a CSV case base, validate it and write it as JSON.
    Import {
        csv: PathBuf,
        /// Schema document, or `student` for the built-in schema.
        #[arg(long, default_value = "student")]
        schema: String,
        /// Output file; standard output if omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// List the cases of a case base.
    List {
        casebase: PathBuf,
        #[arg(long)]
        schema: Option<String>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
struct RetrieveArgs {
    casebase: PathBuf,
    /// A JSON object, `@file.json`, or `name=value,name=value`.
    #[arg(long, short)]
    query: String,
    #[arg(short, default_value_t = DEFAULT_K)]
    k: usize,
    /// Schema document, or `student`; JSON case bases name their own schema.
    #[arg(long)]
    schema: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Directory holding `*.schema.json` schemas and `*.json` / `*.csv` case bases.
    #[arg(long, env = "CASEBASE_DATA")]
    data: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Idle session timeout in seconds.
    #[arg(long, default_value_t = 1800)]
    session_timeout: u64,
    #[arg(long, default_value_t = DEFAULT_K)]
    default_k: usize,
    /// Require `Authorization: Bearer <token>` on every endpoint except /health.
    #[arg(long, env = "CBR_TOKEN")]
    token: Option<String>,
}

#[derive(Debug)]
enum CliError {
    Core(cbr_core::Error),
    Service(ServiceError),
    Io(PathBuf, std::io::Error),
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) | CliError::Service(ServiceError::DataDir(e)) => match e.class() {
                ErrorClass::Io => 3,
                _ => 1,
            },
            CliError::Service(ServiceError::ZeroK) | CliError::Usage(_) => 2,
            CliError::Service(_) | CliError::Io(..) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(cbr_core::Error::Validation { case_id, report }) => {
                write!(f, "case `{case_id}` is invalid:")?;
                for v in &report.violations {
                    write!(f, "\n  {v}")?;
                }
                Ok(())
            }
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Service(e) => write!(f, "{e}"),
            CliError::Io(path, e) => write!(f, "{}: {e}", path.display()),
            CliError::Usage(msg) => f.write_str(msg),
        }
    }
}

impl From<cbr_core::Error> for CliError {
    fn from(e: cbr_core::Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Schema(SchemaCommand::Validate { file }) => {
            let schema = read_schema_file(&file)?;
            println!("ok: schema `{}` with {} attributes", schema.id(), schema.len());
            Ok(())
        }
        Command::Schema(SchemaCommand::Show { file, builtin, json }) => {
            let schema = match (file, builtin) {
                (Some(file), _) => read_schema_file(&file)?,
                (None, Some(name)) => builtin_schema(&name)?,
                (None, None) => return Err(CliError::Usage("give a schema file or --builtin <name>".into())),
            };
            if json {
                println!("{}", schema.to_json());
            } else {
                print_schema(&schema);
            }
            Ok(())
        }
        Command::Casebase(CaseBaseCommand::Import { csv, schema, output }) => {
            let schema = Arc::new(resolve_schema(&schema)?);
            let text = read(&csv)?;
            let cb = CaseBase::from_csv(&text, schema)?;
            match output {
                Some(path) => {
                    cb.save(&path, Format::Json)?;
                    eprintln!("imported {} cases into {}", cb.len(), path.display());
                }
                None => write_stdout(&cb.to_json())?,
            }
            Ok(())
        }
        Command::Casebase(CaseBaseCommand::List { casebase, schema, json }) => {
            let cb = load_case_base(&casebase, schema.as_deref())?;
            if json {
                write_stdout(&cb.to_json())?;
            } else {
                for case in cb.cases() {
                    let values: Vec<String> = cb
                        .schema()
                        .attributes()
                        .iter()
                        .filter_map(|a| case.get(&a.name).map(|v| format!("{}={v}", a.name)))
                        .collect();
                    println!("{}\t{}", case.id, values.join(" "));
                }
            }
            Ok(())
        }
        Command::Retrieve(args) => {
            let cb = load_case_base(&args.casebase, args.schema.as_deref())?;
            let query = parse_query(cb.schema(), &args.query)?;
            let results = retrieve_k(&cb, &query, args.k)?;
            if args.json {
                println!("{}", serde_json::to_string_pretty(&results).expect("results serialize"));
            } else {
                println!("{:>4}  {:<12}  score", "rank", "case");
                for (i, r) in results.iter().enumerate() {
                    println!("{:>4}  {:<12}  {:.12}", i + 1, r.case_id, r.score.value());
                }
            }
            Ok(())
        }
        Command::Predict(args) => {
            let cb = load_case_base(&args.casebase, args.schema.as_deref())?;
            let query = parse_query(cb.schema(), &args.query)?;
            let distribution = predict_final_grade(&cb, &query, args.k)?;
            let config = FeedbackConfig::default();
            let feedback = generate_feedback(cb.schema(), &distribution, &query, &config);
            if args.json {
                let levers = find_levers(cb.schema(), &distribution, &query, &config);
                let body = serde_json::json!({
                    "distribution": distribution,
                    "levers": levers,
                    "feedback": feedback,
                });
                println!(
                    "{}",
                    serde_json::to_string_pretty(&body).expect("prediction serializes")
                );
            } else {
                println!("{}\n", feedback.trim_end());
                for n in &distribution.neighbors {
                    println!("  {:<12} {:.12}  {}", n.case_id, n.score.value(), n.grade);
                }
            }
            Ok(())
        }
        Command::Evaluate { casebase, schema, k } => {
            let cb = load_case_base(&casebase, schema.as_deref())?;
            let report = leave_one_out(&cb, k)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
        Command::Serve(args) => serve(args),
    }
}

fn serve(args: ServeArgs) -> CliResult {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let mut config = ServiceConfig::new(args.data);
    config.addr = (args.host, args.port).into();
    config.session_timeout = Duration::from_secs(args.session_timeout);
    config.default_k = args.default_k;
    config.bearer_token = args.token;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io("tokio runtime".into(), e))?;
    runtime
        .block_on(cbr_service::serve_until_signal(config))
        .map_err(CliError::Service)
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn write_stdout(bytes: &[u8]) -> CliResult {
    std::io::stdout()
        .write_all(bytes)
        .map_err(|e| CliError::Io("<stdout>".into(), e))
}

fn builtin_schema(name: &str) -> CliResult<CaseSchema> {
    match name {
        "student" => Ok(student_schema()),
        other => Err(CliError::Usage(format!(
            "no built-in schema `{other}` (available: student)"
        ))),
    }
}

fn read_schema_file(path: &Path) -> CliResult<CaseSchema> {
    Ok(define_schema(&read(path)?)?)
}

/// `student` names the built-in schema; anything else is a schema file.
fn resolve_schema(arg: &str) -> CliResult<CaseSchema> {
    if arg == "student" {
        Ok(student_schema())
    } else {
        read_schema_file(Path::new(arg))
    }
}

fn load_case_base(path: &Path, schema: Option<&str>) -> CliResult<CaseBase> {
    let format = Format::from_path(path)
        .ok_or_else(|| CliError::Usage(format!("{}: expected a .csv or .json case base", path.display())))?;
    let text = read(path)?;
    let schema = match (schema, format) {
        (Some(arg), _) => resolve_schema(arg)?,
        (None, Format::Csv) => student_schema(),
        (None, Format::Json) => {
            let id = peek_schema_id(&text)?;
            builtin_schema(&id)
                .map_err(|_| CliError::Usage(format!("case base uses schema `{id}`; pass --schema <file>")))?
        }
    };
    let schema = Arc::new(schema);
    Ok(match format {
        Format::Csv => CaseBase::from_csv(&text, schema)?,
        Format::Json => CaseBase::from_json(&text, schema)?,
    })
}

fn parse_query(schema: &CaseSchema, arg: &str) -> CliResult<Query> {
    let arg = arg.trim();
    let json_text = if let Some(file) = arg.strip_prefix('@') {
        Some(read(Path::new(file))?)
    } else if arg.starts_with('{') {
        Some(arg.to_string())
    } else {
        None
    };
    if let Some(text) = json_text {
        let raw: BTreeMap<String, Value> = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("query is not a JSON object of values: {e}")))?;
        return Ok(Query::parse(schema, raw)?);
    }
    let mut raw = BTreeMap::new();
    for pair in arg.split(',').filter(|p| !p.trim().is_empty()) {
        let (name, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("query term `{pair}` is not name=value")))?;
        let name = name.trim();
        let spec = schema
            .attribute(name)
            .ok_or_else(|| cbr_core::Error::InvalidQuery(format!("unknown attribute `{name}`")))?;
        raw.insert(name.to_string(), spec.parse_text(value)?);
    }
    Ok(Query::parse(schema, raw)?)
}

fn print_schema(schema: &CaseSchema) {
    println!("schema `{}` ({} attributes)", schema.id(), schema.len());
    println!("{:<24} {:<14} {:<11} {:>6}  domain", "name", "group", "type", "weight");
    for a in schema.attributes() {
        let domain = match &a.ty {
            AttributeType::Numeric { min, max } => format!("[{min}, {max}]"),
            AttributeType::Grade { scale } => scale.join(" < "),
            AttributeType::Categorical { allowed } => allowed.join(", "),
            AttributeType::Boolean => "true, false".into(),
            AttributeType::Text => "free text".into(),
        };
        let group = format!("{:?}", a.group).to_lowercase();
        println!(
            "{:<24} {:<14} {:<11} {:>6}  {domain}",
            a.name,
            group,
            a.ty.tag(),
            a.weight
        );
    }
}
