use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mechforce_cli::report::{to_json, RunReport};
use mechforce_cli::run::{
    cmd_integrate, cmd_list, cmd_reduce, cmd_verify, prepare, IntegrateOpts, RunContext,
};
use mechforce_cli::{registry, Failure};
use mechforce_core::hj::DEFAULT_SEED;

/// Checks of invariant-graph candidates for force-driven mechanical
/// systems: verdicts over sampled boxes, trajectory comparisons, and
/// symmetry reduction.
#[derive(Parser)]
#[command(name = "mechforce", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Verify candidate sections against their expected verdicts.
    Verify(RunArgs),
    /// Integrate the projected, lifted, and direct trajectories of one
    /// candidate and compare them.
    Integrate(IntegrateArgs),
    /// Reduce by the declared symmetry and verify quotient candidates.
    Reduce(RunArgs),
    /// List systems and their candidates.
    List(ListArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file; omit to run a builtin system.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// System name: a key in the config file, or a builtin.
    #[arg(long, value_name = "NAME")]
    system: Option<String>,
    /// Restrict to one named candidate.
    #[arg(long, value_name = "NAME")]
    candidate: Option<String>,
    /// Seed for the deterministic sample sequence.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Verdict tolerance override.
    #[arg(long, value_name = "X")]
    tol: Option<f64>,
    /// Sampling box override, one lo:hi pair per coordinate.
    #[arg(long = "box", value_name = "lo:hi,...", allow_hyphen_values = true)]
    sample_box: Option<String>,
    /// Directory for reports and trajectory files.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Dimension override for builtins that support it.
    #[arg(long, value_name = "N")]
    n: Option<usize>,
    /// Drag coefficients for the builtin drag systems.
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    kappa: Option<String>,
    /// Family parameters for builtin candidates.
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    lambda: Option<String>,
    /// Momentum levels for builtin reductions.
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    mu: Option<String>,
}

#[derive(Args)]
struct IntegrateArgs {
    #[command(flatten)]
    common: RunArgs,
    /// Base start point, comma-separated.
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    q0: Option<String>,
    /// End time (integration starts at 0).
    #[arg(long, value_name = "T", allow_hyphen_values = true)]
    t1: Option<f64>,
    /// Fixed integrator step.
    #[arg(long, value_name = "H")]
    step: Option<f64>,
}

#[derive(Args)]
struct ListArgs {
    /// Config file to list; omit for the builtin registry.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Failure::input(format!("--{what}: `{t}` is not a number")))
        })
        .collect()
}

fn parse_box(s: &str) -> Result<Vec<(f64, f64)>, Failure> {
    s.split(',')
        .map(|axis| {
            let (lo, hi) = axis
                .split_once(':')
                .ok_or_else(|| Failure::input(format!("--box: `{axis}` is not lo:hi")))?;
            let lo = lo
                .trim()
                .parse::<f64>()
                .map_err(|_| Failure::input(format!("--box: `{lo}` is not a number")))?;
            let hi = hi
                .trim()
                .parse::<f64>()
                .map_err(|_| Failure::input(format!("--box: `{hi}` is not a number")))?;
            Ok((lo, hi))
        })
        .collect()
}

/// The document for a run: a config file's contents, or a generated
/// builtin document when only `--system` is given.
fn document_for(args: &RunArgs) -> Result<(String, Option<String>), Failure> {
    match &args.config {
        Some(path) => {
            for (flag, set) in [
                ("--n", args.n.is_some()),
                ("--kappa", args.kappa.is_some()),
                ("--lambda", args.lambda.is_some()),
                ("--mu", args.mu.is_some()),
            ] {
                if set {
                    return Err(Failure::input(format!(
                        "{flag} shapes builtin systems; with --config, set params in the file"
                    )));
                }
            }
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
            Ok((text, args.system.clone()))
        }
        None => {
            let name = args.system.as_deref().ok_or_else(|| {
                Failure::input("pass --config FILE or --system BUILTIN".into())
            })?;
            let ov = registry::Overrides {
                n: args.n,
                kappa: args.kappa.as_deref().map(|s| parse_list(s, "kappa")).transpose()?,
                lambda: args
                    .lambda
                    .as_deref()
                    .map(|s| parse_list(s, "lambda"))
                    .transpose()?,
                mu: args.mu.as_deref().map(|s| parse_list(s, "mu")).transpose()?,
            };
            Ok((registry::document(name, &ov)?, Some(name.to_string())))
        }
    }
}

fn context_for(args: &RunArgs) -> Result<RunContext, Failure> {
    Ok(RunContext {
        seed: args.seed,
        tol: args.tol,
        sample_box: args.sample_box.as_deref().map(parse_box).transpose()?,
        candidate: args.candidate.clone(),
        out: args.out.clone(),
    })
}

fn elapsed_ms(started: Instant) -> u64 {
    if std::env::var_os("MECHFORCE_FIXED_TIMING").is_some() {
        0
    } else {
        started.elapsed().as_millis() as u64
    }
}

fn emit(json: String, out: &Option<PathBuf>) -> Result<(), Failure> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::input(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join("report.json");
        std::fs::write(&path, &json)
            .map_err(|e| Failure::run(format!("cannot write {}: {e}", path.display())))?;
    }
    print!("{json}");
    Ok(())
}

fn finish(mut report: RunReport, code: i32, started: Instant, out: &Option<PathBuf>) -> Result<i32, Failure> {
    report.timing_ms = elapsed_ms(started);
    emit(to_json(&report)?, out)?;
    Ok(code)
}

fn dispatch(cli: Cli, started: Instant) -> Result<i32, Failure> {
    match cli.command {
        Cmd::Verify(args) => {
            let (doc, system) = document_for(&args)?;
            let ctx = context_for(&args)?;
            let prepared = prepare(doc, system.as_deref())?;
            let (report, code) = cmd_verify(&prepared, &ctx)?;
            finish(report, code, started, &ctx.out)
        }
        Cmd::Integrate(args) => {
            let (doc, system) = document_for(&args.common)?;
            let ctx = context_for(&args.common)?;
            let io = IntegrateOpts {
                q0: args.q0.as_deref().map(|s| parse_list(s, "q0")).transpose()?,
                t1: args.t1,
                step: args.step,
            };
            let prepared = prepare(doc, system.as_deref())?;
            let (report, code) = cmd_integrate(&prepared, &ctx, &io)?;
            finish(report, code, started, &ctx.out)
        }
        Cmd::Reduce(args) => {
            let (doc, system) = document_for(&args)?;
            let ctx = context_for(&args)?;
            let prepared = prepare(doc, system.as_deref())?;
            let (report, code) = cmd_reduce(&prepared, &ctx)?;
            finish(report, code, started, &ctx.out)
        }
        Cmd::List(args) => {
            let (text, source) = match &args.config {
                Some(path) => (
                    Some(std::fs::read_to_string(path).map_err(|e| {
                        Failure::input(format!("cannot read {}: {e}", path.display()))
                    })?),
                    path.display().to_string(),
                ),
                None => (None, "builtin".to_string()),
            };
            let mut report = cmd_list(text, source, args.seed.unwrap_or(DEFAULT_SEED))?;
            report.timing_ms = elapsed_ms(started);
            emit(to_json(&report)?, &args.out)?;
            Ok(0)
        }
    }
}

fn main() {
    let started = Instant::now();
    let cli = Cli::parse();
    let code = match dispatch(cli, started) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    };
    std::process::exit(code);
}
