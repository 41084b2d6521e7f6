use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use corrlab::completion::{
    completion_interval_2x2, find_completion, AngleInterval, CompletionKind, Correlator,
    MarginClass,
};
use corrlab::geometry::{
    exposedness_from, is_extreme, support_value, ExtremalityStatus, SupportResult,
};
use corrlab::linalg::{SymMatrix, Tolerances};
use corrlab::models::Extremal2x2Sampler;
use corrlab::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

mod input;
mod report;

use report::{num, write_matrix, Method};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Parse(String),
    /// The report has been written already.
    NotMember,
    Solver(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Parse(_) => 2,
            CliError::NotMember => 3,
            CliError::Solver(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Machine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Extremality,
    Exposedness,
}

#[derive(Debug, Parser)]
#[command(
    name = "corrlab",
    version,
    about = "Membership, extremality, exposedness and locality of quantum correlators"
)]
struct Cli {
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Tolerance preset.
    #[arg(
        long,
        global = true,
        env = "CORRLAB_TOL_PROFILE",
        default_value = "default"
    )]
    profile: String,
    /// Relative eigenvalue cutoff for numerical rank.
    #[arg(long, global = true)]
    rank_tol: Option<f64>,
    /// Tightness threshold for angle inequalities (radians).
    #[arg(long, global = true)]
    tight_tol: Option<f64>,
    /// Duality-gap target of the SDP solver.
    #[arg(long, global = true)]
    gap_tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full analysis of one correlator.
    Analyze {
        /// Inline matrix `[[a,b],[c,d]]`, instance name, or file.
        input: String,
        #[arg(long, value_enum, default_value_t = Method::Both)]
        method: Method,
    },
    /// Random extreme points of the 2x2 correlator set, one record per line.
    Generate(GenerateArgs),
    /// Verdicts for every record of a file, with summary counts.
    Batch {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Extremality)]
        mode: Mode,
    },
    /// Maximum of a linear functional over the quantum set.
    Support {
        /// Coefficient matrix, same forms as `analyze`.
        functional: String,
    },
    /// Completion of the correlator and, for 2x2 inputs, the admissible angle interval.
    Complete { input: String },
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn tolerances(cli: &Cli) -> Result<Tolerances, CliError> {
    let mut t = Tolerances::profile(&cli.profile)
        .map_err(|_| CliError::Usage(format!("unknown tolerance profile `{}`", cli.profile)))?;
    if let Some(v) = cli.rank_tol {
        t.rank_rel = v;
    }
    if let Some(v) = cli.tight_tol {
        t.tight_abs = v;
    }
    if let Some(v) = cli.gap_tol {
        t.sdp_gap = v;
    }
    t.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(t)
}

fn emit(out: &mut impl Write, s: &str) -> Result<(), CliError> {
    out.write_all(s.as_bytes())
        .map_err(|e| CliError::Io(e.to_string()))
}

fn machine<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string(v).expect("reports serialize");
    s.push('\n');
    s
}

fn cmd_analyze(
    input: &str,
    method: Method,
    fmt: Format,
    tol: &Tolerances,
    out: &mut impl Write,
) -> Result<(), CliError> {
    let c = input::resolve(input)?;
    let r = report::analyze(&c, method, tol)?;
    let text = match fmt {
        Format::Text => r.to_text(),
        Format::Machine => machine(&r),
    };
    emit(out, &text)?;
    if r.membership.member {
        Ok(())
    } else {
        Err(CliError::NotMember)
    }
}

fn cmd_generate(
    args: &GenerateArgs,
    tol: &Tolerances,
    out: &mut impl Write,
) -> Result<(), CliError> {
    let mut text = String::new();
    for c in Extremal2x2Sampler::with_tolerance(args.seed, tol.tight_abs).take(args.count as usize)
    {
        text.push_str(&machine(&c));
    }
    match &args.out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => emit(out, &text),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BatchRecord {
    index: usize,
    line: usize,
    verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BatchSummary {
    total: usize,
    skipped: usize,
    solver_failures: usize,
    counts: BTreeMap<String, usize>,
}

const SOLVER_FAILURE: &str = "SolverFailure";

fn batch_verdict(c: &Correlator, mode: Mode, tol: &Tolerances) -> (String, Option<String>) {
    let v = match is_extreme(c, tol) {
        Ok(v) => v,
        Err(Error::NotAMember { margin }) => {
            return ("NotMember".into(), Some(format!("margin {margin:e}")))
        }
        Err(e) => return (SOLVER_FAILURE.into(), Some(e.to_string())),
    };
    let detail = (v.status == ExtremalityStatus::Inconclusive).then(|| {
        format!(
            "rank {} completion, rank {} dual, nullspace dimension {}",
            v.evidence.rank_completion, v.evidence.rank_dual, v.null_dim
        )
    });
    if mode == Mode::Extremality || v.status != ExtremalityStatus::Extreme {
        return (format!("{:?}", v.status), detail);
    }
    match exposedness_from(&v, tol) {
        Ok(e) => (format!("{:?}", e.status), None),
        Err(e) => (SOLVER_FAILURE.into(), Some(e.to_string())),
    }
}

fn cmd_batch(
    path: &PathBuf,
    mode: Mode,
    fmt: Format,
    tol: &Tolerances,
    out: &mut impl Write,
) -> Result<(), CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut items = Vec::new();
    let mut skipped = 0;
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match input::parse_line(line) {
            Ok(c) => items.push((k + 1, c)),
            Err(e) => {
                skipped += 1;
                eprintln!("warning: line {}: skipped: {}", k + 1, message(&e));
            }
        }
    }
    let records: Vec<BatchRecord> = items
        .par_iter()
        .enumerate()
        .map(|(index, (line, c))| {
            let (verdict, detail) = batch_verdict(c, mode, tol);
            BatchRecord {
                index,
                line: *line,
                verdict,
                detail,
            }
        })
        .collect();

    let keys: &[&str] = match mode {
        Mode::Extremality => &["Extreme", "NotExtreme", "Inconclusive"],
        Mode::Exposedness => &["Exposed", "Unknown"],
    };
    let mut counts: BTreeMap<String, usize> = keys.iter().map(|k| (k.to_string(), 0)).collect();
    let mut body = String::new();
    for r in &records {
        *counts.entry(r.verdict.clone()).or_default() += 1;
        if r.verdict == "Inconclusive" {
            eprintln!(
                "inconclusive: line {}: {}",
                r.line,
                r.detail.as_deref().unwrap_or("")
            );
        }
        match fmt {
            Format::Machine => body.push_str(&machine(r)),
            Format::Text => {
                body.push_str(&format!("{}\tline {}\t{}", r.index, r.line, r.verdict));
                if let Some(d) = &r.detail {
                    body.push_str(&format!("\t{d}"));
                }
                body.push('\n');
            }
        }
    }
    let summary = BatchSummary {
        total: records.len(),
        skipped,
        solver_failures: counts.get(SOLVER_FAILURE).copied().unwrap_or(0),
        counts,
    };
    match fmt {
        Format::Machine => body.push_str(&machine(&summary)),
        Format::Text => {
            let parts: Vec<String> = summary
                .counts
                .iter()
                .map(|(k, v)| format!("{k} {v}"))
                .collect();
            body.push_str(&format!(
                "summary: total {}, skipped {}, {}\n",
                summary.total,
                summary.skipped,
                parts.join(", ")
            ));
        }
    }
    emit(out, &body)?;
    if summary.solver_failures > 0 {
        return Err(CliError::Solver(format!(
            "{} instance(s) failed",
            summary.solver_failures
        )));
    }
    Ok(())
}

fn cmd_support(
    functional: &str,
    fmt: Format,
    tol: &Tolerances,
    out: &mut impl Write,
) -> Result<(), CliError> {
    let rows = if functional.trim().starts_with('[') {
        input::parse_inline(functional)?
    } else {
        input::resolve(functional)?.to_rows()
    };
    let lambda = input::rows_to_matrix(&rows)?;
    let r: SupportResult = support_value(&lambda, tol)?;
    let text = match fmt {
        Format::Machine => machine(&r),
        Format::Text => {
            let mut s = format!("value: {}\nargmax:\n", num(r.value));
            write_matrix(&mut s, &r.argmax.to_rows());
            s.push_str(&format!(
                "solver: {:?}, {} iterations, gap {}\n",
                r.solver.status,
                r.solver.iterations,
                num(r.solver.gap)
            ));
            s
        }
    };
    emit(out, &text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CompleteReport {
    input: Correlator,
    member: bool,
    margin: f64,
    class: MarginClass,
    completion: Option<SymMatrix>,
    kind: Option<CompletionKind>,
    unique: bool,
    /// Admissible angle between the two second-party vectors (2x2 only).
    interval: Option<AngleInterval>,
}

fn cmd_complete(
    input: &str,
    fmt: Format,
    tol: &Tolerances,
    out: &mut impl Write,
) -> Result<(), CliError> {
    let c = input::resolve(input)?;
    let r = find_completion(&c, tol)?;
    let interval = if c.n() == 2 && c.m() == 2 {
        completion_interval_2x2(&c, tol)?
    } else {
        None
    };
    let rep = CompleteReport {
        input: c,
        member: r.member,
        margin: r.margin,
        class: r.class,
        completion: r.completion,
        kind: r.kind,
        unique: r.unique,
        interval,
    };
    let text = match fmt {
        Format::Machine => machine(&rep),
        Format::Text => {
            let mut s = format!(
                "member: {} (margin {}, {:?})\n",
                rep.member,
                num(rep.margin),
                rep.class
            );
            if let Some(x) = &rep.completion {
                s.push_str(&format!(
                    "completion ({:?}, unique {}):\n",
                    rep.kind.expect("set with completion"),
                    rep.unique
                ));
                write_matrix(&mut s, &x.to_rows());
            }
            if let Some(i) = rep.interval {
                s.push_str(&format!(
                    "interval: theta in [{}, {}], c in [{}, {}]\n",
                    num(i.lo),
                    num(i.hi),
                    num(i.hi.cos()),
                    num(i.lo.cos())
                ));
            }
            s
        }
    };
    emit(out, &text)?;
    if rep.member {
        Ok(())
    } else {
        Err(CliError::NotMember)
    }
}

fn message(e: &CliError) -> String {
    match e {
        CliError::Usage(m) | CliError::Parse(m) | CliError::Solver(m) | CliError::Io(m) => {
            m.clone()
        }
        CliError::NotMember => "not a member of the quantum correlator set".into(),
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let tol = tolerances(cli)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Analyze { input, method } => {
            cmd_analyze(input, *method, cli.format, &tol, &mut out)
        }
        Command::Generate(args) => cmd_generate(args, &tol, &mut out),
        Command::Batch { path, mode } => cmd_batch(path, *mode, cli.format, &tol, &mut out),
        Command::Support { functional } => cmd_support(functional, cli.format, &tol, &mut out),
        Command::Complete { input } => cmd_complete(input, cli.format, &tol, &mut out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(e.code())
        }
    }
}
