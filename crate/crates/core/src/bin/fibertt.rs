//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or other failure, 2 pattern validation
//! failure, 3 identifiability failure, 4 I/O or format error. Every failure
//! prints a single JSON object to standard output.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use fibertt::completion::{complete, reconstruct_fibers, Combine, CompletionConfig};
use fibertt::error::{CompletionError, FormatError, HarnessError};
use fibertt::harness::{relative_error, run_sweep, ExperimentSpec};
use fibertt::io::{load_dense, load_masked, load_pattern, load_tt, save, Dtns};
use fibertt::numlin::DEFAULT_RANK_TOL;
use fibertt::pattern::validate;
use fibertt::subspace::SubspaceMethod;

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_IDENTIFIABILITY: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "fibertt", version, about = "Tensor-train completion from fully observed or missing mode-N fibers")]
struct Cli {
    /// Worker threads for the library's internal parallel loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a tensor train to a fiber-masked tensor.
    Complete(CompleteArgs),
    /// Expand a tensor train to a dense tensor.
    Reconstruct(ReconstructArgs),
    /// Check a pattern against the uniqueness conditions.
    Validate(ValidateArgs),
    /// Run a synthetic sweep and write per-trial CSV.
    Synth(SynthArgs),
    /// Relative Frobenius error of an estimate.
    Error(ErrorArgs),
}

#[derive(Args)]
struct CompleteArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    pattern: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    ranks: Vec<usize>,
    #[arg(long, default_value = "intersection")]
    method: SubspaceMethod,
    #[arg(long, default_value = "none")]
    combine: Combine,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    tol: f64,
    #[arg(long)]
    output: PathBuf,
    /// Skip the pattern check; numerical failures are still reported.
    #[arg(long)]
    no_validate: bool,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    tt: PathBuf,
    #[arg(long, requires = "pattern")]
    input: Option<PathBuf>,
    #[arg(long, requires = "input")]
    pattern: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    pattern: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    ranks: Vec<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    shape: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    ranks_true: Vec<usize>,
    /// Defaults to the true ranks.
    #[arg(long, value_delimiter = ',')]
    ranks_fit: Vec<usize>,
    /// SNR values in dB; `inf` means noiseless.
    #[arg(long, value_delimiter = ',', default_value = "inf", allow_negative_numbers = true)]
    snr: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    missing: Vec<f64>,
    #[arg(long, default_value_t = 30)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "intersection")]
    method: SubspaceMethod,
    #[arg(long, default_value = "none")]
    combine: Combine,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    tol: f64,
    #[arg(long)]
    csv: PathBuf,
}

#[derive(Args)]
struct ErrorArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    est: PathBuf,
}

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
    details: Option<Value>,
}

impl Failure {
    fn new(code: u8, kind: &'static str, message: impl ToString) -> Self {
        Self {
            code,
            kind,
            message: message.to_string(),
            details: None,
        }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        let kind = if matches!(e, FormatError::Io(_)) { "io" } else { "format" };
        Failure::new(EXIT_IO, kind, e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_IO, "io", e)
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::new(EXIT_USAGE, "invalid_input", e)
    }
}

impl From<CompletionError> for Failure {
    fn from(e: CompletionError) -> Self {
        let message = e.to_string();
        match e {
            CompletionError::Validation(report) => Failure {
                details: serde_json::to_value(&*report).ok(),
                ..Failure::new(EXIT_VALIDATION, "validation", message)
            },
            CompletionError::Unidentifiable { .. }
            | CompletionError::SliceUnderdetermined { .. }
            | CompletionError::InsufficientFibers { .. }
            | CompletionError::Linalg(_) => Failure::new(EXIT_IDENTIFIABILITY, "identifiability", message),
            CompletionError::MaskMismatch(_) => Failure::new(EXIT_IO, "format", message),
            CompletionError::OrderTooLow(_) | CompletionError::Pattern(_) | CompletionError::Tensor(_) => {
                Failure::new(EXIT_USAGE, "invalid_input", message)
            }
        }
    }
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON values always serialize"));
}

fn run_complete(a: CompleteArgs) -> Result<(), Failure> {
    let pattern = load_pattern(&a.pattern)?;
    let data = load_masked(&a.input, &pattern)?;
    let mut cfg = CompletionConfig::new(a.ranks);
    cfg.method = a.method;
    cfg.combine = a.combine;
    cfg.tol = a.tol;
    cfg.validate_first = !a.no_validate;
    let out = complete(&data, &pattern, &cfg)?;
    save(&a.output, &Dtns::Tt(out.tt))?;
    print_json(&json!({ "output": a.output, "diagnostics": out.diagnostics }));
    Ok(())
}

fn run_reconstruct(a: ReconstructArgs) -> Result<(), Failure> {
    let tt = load_tt(&a.tt)?;
    let dense = match (a.input, a.pattern) {
        (Some(input), Some(pattern)) => {
            let pattern = load_pattern(pattern)?;
            let data = load_masked(input, &pattern)?;
            reconstruct_fibers(&tt, &data, &pattern)?
        }
        _ => tt.to_dense(),
    };
    save(&a.output, &Dtns::Dense(dense))?;
    Ok(())
}

fn run_validate(a: ValidateArgs) -> Result<(), Failure> {
    let pattern = load_pattern(&a.pattern)?;
    let report = validate(&pattern, &a.ranks).map_err(|e| Failure::new(EXIT_USAGE, "invalid_input", e))?;
    print_json(&serde_json::to_value(&report).expect("report serializes"));
    if report.overall_valid {
        Ok(())
    } else {
        // The report is already on stdout; only the exit code signals failure.
        Err(Failure::new(EXIT_VALIDATION, "", ""))
    }
}

fn run_synth(a: SynthArgs) -> Result<(), Failure> {
    let mut spec = ExperimentSpec::new(a.shape, a.ranks_true);
    if !a.ranks_fit.is_empty() {
        spec.ranks_fit = a.ranks_fit;
    }
    spec.snr_db = a.snr;
    spec.missing_rate = a.missing;
    spec.trials = a.trials;
    spec.seed = a.seed;
    spec.method = a.method;
    spec.combine = a.combine;
    spec.tol = a.tol;
    let result = run_sweep(&spec)?;
    result.write_csv(BufWriter::new(File::create(&a.csv)?))?;
    print_json(&json!({ "csv": a.csv, "summary": result.summary }));
    Ok(())
}

fn run_error(a: ErrorArgs) -> Result<(), Failure> {
    let reference = load_dense(&a.reference)?;
    let estimate = load_dense(&a.est)?;
    println!("{:e}", relative_error(&reference, &estimate)?);
    Ok(())
}

fn set_threads(n: usize) -> Result<(), Failure> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(EXIT_USAGE, "usage", e))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            print_json(&json!({ "error": "usage", "exit_code": EXIT_USAGE, "message": e.to_string().trim_end() }));
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = cli.threads.map_or(Ok(()), set_threads).and_then(|()| match cli.command {
        Command::Complete(a) => run_complete(a),
        Command::Reconstruct(a) => run_reconstruct(a),
        Command::Validate(a) => run_validate(a),
        Command::Synth(a) => run_synth(a),
        Command::Error(a) => run_error(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) if f.kind.is_empty() => ExitCode::from(f.code),
        Err(f) => {
            let mut obj = json!({ "error": f.kind, "exit_code": f.code, "message": f.message });
            if let Some(d) = f.details {
                obj["details"] = d;
            }
            print_json(&obj);
            ExitCode::from(f.code)
        }
    }
}
