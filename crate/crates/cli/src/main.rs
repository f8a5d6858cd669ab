//! `cwall`: validate policies, decide requests, replay traces, run the
//! warehouse transform chain and serve decisions over a local socket.
//!
//! Exit status: 0 for a clean policy or a granted request, 2 for a denied
//! request, 1 for any parse, validation or I/O error.

mod serve;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cwall_core::checkpoint::{authorize, parse_trace, replay, AccessRequest, Operation};
use cwall_core::fixtures;
use cwall_core::policy::{validate_policy, Policy};
use cwall_core::report::render_wall_table;
use cwall_core::store::{
    load_policy, load_snapshot, load_validated_policy, persist_snapshot, AuditLog, EngineState,
};
use cwall_core::transform::{build_warehouse_chain, AttributeSchema, Dataset, PseudonymKey, Tier};

#[derive(Debug, Parser)]
#[command(name = "cwall", version, about = "Chinese-wall decision point with a de-identification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a policy for structural defects.
    Validate(PolicyArg),
    /// Decide one request against the current walls without changing them.
    Authorize(AuthorizeArgs),
    /// Decide every request of a trace, appending to an audit log and writing a final snapshot.
    Replay(ReplayArgs),
    /// Build the OD -> DD -> AD warehouse chain and print its confidentiality.
    Transform(TransformArgs),
    /// Print the wall table.
    Report(ReportArgs),
    /// Answer `seq subject object op` lines with `seq GRANTED|DENIED reason`.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct PolicyArg {
    /// Policy file (TOML). The bundled healthcare policy is used when omitted.
    #[arg(long, env = "CWALL_POLICY")]
    policy: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StateArgs {
    #[command(flatten)]
    policy: PolicyArg,
    /// Wall snapshot to start from. A missing file means freshly seeded walls.
    #[arg(long)]
    state: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AuthorizeArgs {
    #[command(flatten)]
    state: StateArgs,
    #[arg(long)]
    subject: String,
    #[arg(long)]
    object: String,
    #[arg(long)]
    op: String,
    #[arg(long, default_value_t = 1)]
    seq: u64,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[command(flatten)]
    state: StateArgs,
    #[arg(long)]
    trace: PathBuf,
    /// Audit log to append to; created if missing.
    #[arg(long)]
    audit: PathBuf,
    /// Where the final walls are written.
    #[arg(long)]
    snapshot: PathBuf,
}

#[derive(Debug, Args)]
struct TransformArgs {
    #[command(flatten)]
    policy: PolicyArg,
    /// Attribute schema (TOML). Defaults to the bundled patient schema.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Original data (CSV). Defaults to the bundled patient table.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Overrides the recipe's k.
    #[arg(long)]
    k: Option<usize>,
    /// Writes od.csv, dd.csv and ad.csv here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Pseudonymization key. A random key is drawn per run when unset.
    #[arg(long, env = "CWALL_PSEUDONYM_KEY", hide_env_values = true)]
    key: Option<String>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    state: StateArgs,
    /// Also summarise this audit log.
    #[arg(long)]
    audit: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    state: StateArgs,
    /// Unix socket to listen on.
    #[arg(long, conflicts_with = "stdio", required_unless_present = "stdio")]
    socket: Option<PathBuf>,
    /// Read requests from stdin and write decisions to stdout.
    #[arg(long)]
    stdio: bool,
    #[arg(long)]
    audit: Option<PathBuf>,
    /// Rewritten after every decision.
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn policy_text(arg: &PolicyArg) -> Result<(String, String)> {
    match &arg.policy {
        Some(path) => Ok((read(path)?, path.display().to_string())),
        None => Ok((fixtures::CASE_STUDY_POLICY.to_string(), "<bundled policy>".into())),
    }
}

fn policy(arg: &PolicyArg) -> Result<Policy> {
    let (text, name) = policy_text(arg)?;
    load_validated_policy(&text).with_context(|| name)
}

fn engine(args: &StateArgs) -> Result<EngineState> {
    let policy = policy(&args.policy)?;
    match &args.state {
        Some(path) if path.exists() => {
            load_snapshot(policy, &read(path)?).with_context(|| path.display().to_string())
        }
        _ => Ok(EngineState::new(policy)?),
    }
}

fn validate(args: PolicyArg) -> Result<ExitCode> {
    let (text, name) = policy_text(&args)?;
    let policy = load_policy(&text).with_context(|| name)?;
    let report = validate_policy(&policy);
    print!("{report}");
    Ok(if report.is_clean() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn authorize_one(args: AuthorizeArgs) -> Result<ExitCode> {
    let state = engine(&args.state)?;
    let op: Operation = args.op.parse().expect("infallible");
    let request = AccessRequest::new(args.seq, args.subject, args.object, op);
    let decision = authorize(&state, &request)?;
    println!("{}", decision.render_line());
    Ok(if decision.is_granted() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn replay_trace(args: ReplayArgs) -> Result<ExitCode> {
    let mut state = engine(&args.state)?;
    let start = state.version();
    let trace = parse_trace(&read(&args.trace)?).with_context(|| args.trace.display().to_string())?;
    let mut audit = AuditLog::open(&args.audit).with_context(|| args.audit.display().to_string())?;
    let decisions = replay(&mut state, &trace, &mut audit)?;
    if !(state.version() == start && args.snapshot.exists()) {
        persist_snapshot(&args.snapshot, &state)?;
    }
    let granted = decisions.iter().filter(|d| d.is_granted()).count();
    println!(
        "replayed {} request(s): {granted} granted, {} denied; state version {}",
        decisions.len(),
        decisions.len() - granted,
        state.version()
    );
    Ok(ExitCode::SUCCESS)
}

fn transform(args: TransformArgs) -> Result<ExitCode> {
    let policy = policy(&args.policy)?;
    let Some(mut recipe) = policy.recipe.clone() else {
        bail!("policy has no [recipe] table");
    };
    if let Some(k) = args.k {
        recipe.k = k;
    }
    let schema = match &args.schema {
        Some(path) => AttributeSchema::parse(&read(path)?).with_context(|| path.display().to_string())?,
        None => fixtures::ehr_schema(),
    };
    let od = match &args.data {
        Some(path) => Dataset::read_csv(&read(path)?, schema, Tier::OD).with_context(|| path.display().to_string())?,
        None => Dataset::read_csv(fixtures::EHR_ORIGINAL, schema, Tier::OD)?,
    };
    let key = match args.key {
        Some(k) => PseudonymKey::new(k.into_bytes()),
        None => PseudonymKey::random(),
    };
    let chain = build_warehouse_chain(&od, &recipe, &key)?;
    let alphas = chain.alphas()?;
    for ((tier, ds), alpha) in [("OD", &chain.od), ("DD", &chain.dd), ("AD", &chain.ad)].iter().zip(alphas) {
        println!("{tier}  rows={:<5} alpha={alpha:.6}", ds.len());
    }
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for (name, ds) in [("od.csv", &chain.od), ("dd.csv", &chain.dd), ("ad.csv", &chain.ad)] {
            let path = dir.join(name);
            fs::write(&path, ds.to_csv()).with_context(|| format!("cannot write {}", path.display()))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn report(args: ReportArgs) -> Result<ExitCode> {
    let state = engine(&args.state)?;
    print!("{}", render_wall_table(&state));
    if let Some(path) = &args.audit {
        let records = AuditLog::open(path).with_context(|| path.display().to_string())?.read_all()?;
        let granted = records.iter().filter(|r| r.decision.is_granted()).count();
        println!(
            "\naudit: {} record(s), {granted} granted, {} denied",
            records.len(),
            records.len() - granted
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate(args) => validate(args),
        Command::Authorize(args) => authorize_one(args),
        Command::Replay(args) => replay_trace(args),
        Command::Transform(args) => transform(args),
        Command::Report(args) => report(args),
        Command::Serve(args) => {
            let state = engine(&args.state)?;
            let audit = match &args.audit {
                Some(path) => Some(AuditLog::open(path).with_context(|| path.display().to_string())?),
                None => None,
            };
            let service = serve::Service::new(state, audit, args.snapshot);
            match args.socket {
                Some(path) => serve::listen(service, &path)?,
                None => serve::stdio(service)?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("cwall: {e:#}");
            ExitCode::from(1)
        }
    }
}
