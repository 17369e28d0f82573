//! Command dispatch for the `rfde-unfold` binary.
//!
//! Machine-readable JSON goes to stdout (or `--out`), a one-line summary to
//! stderr. Exit codes: 0 success, 2 criterion inconclusive, 1 error.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use rfde_unfold::problem::{self, Problem};
use rfde_unfold::spectral::{jordan_structure, real_ordering, spectral_bases};
use rfde_unfold::synthesis::{self, SynthesisOptions};
use rfde_unfold::validate::run_suite;
use rfde_unfold::versality::check_family;
use rfde_unfold::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;

pub const RANK_TOL_ENV: &str = "RFDE_RANK_TOL";

#[derive(Debug, Parser)]
#[command(name = "rfde-unfold", version, about = "Spectral reduction, versality checks and unfoldings for linear delay equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Jordan structure and normalized bases at the given roots
    Analyze { file: PathBuf },
    /// Versality test for the family in the problem file
    Check { file: PathBuf },
    /// Build a mini-versal unfolding
    Synthesize {
        file: PathBuf,
        /// Split into real parameters (real equations only)
        #[arg(long)]
        real: bool,
        /// Rewrite a scalar family as parameters on z(tau_j)
        #[arg(long)]
        scalar_simplify: bool,
        /// Number of grid points for delay selection
        #[arg(long)]
        grid: Option<usize>,
        /// Write the result here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle suite
    Validate {
        file: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

/// Result of one command: exit code, JSON document, summary line.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub output: Option<Value>,
    pub summary: String,
}

fn rank_tol_override() -> Result<Option<f64>, Error> {
    match std::env::var(RANK_TOL_ENV) {
        Ok(s) => {
            let t: f64 = s.trim().parse().map_err(|_| Error::Parse(format!("{RANK_TOL_ENV}={s} is not a number")))?;
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Parse(format!("{RANK_TOL_ENV} must lie in (0, 1), got {t}")));
            }
            Ok(Some(t))
        }
        Err(_) => Ok(None),
    }
}

fn load(file: &Path) -> Result<Problem, Error> {
    let mut p = problem::parse_problem(file)?;
    if let Some(t) = rank_tol_override()? {
        p.rank_tol = t;
    }
    if p.lambdas.is_empty() {
        return Err(Error::Parse(format!("{}: lambdas must list at least one root", file.display())));
    }
    Ok(p)
}

fn analyze(p: &Problem) -> Result<Outcome, Error> {
    let analysis = jordan_structure(&p.rfde, &p.lambdas, p.rank_tol)?;
    let (bases, _) = spectral_bases(&p.rfde, &p.lambdas, p.rank_tol)?;
    let summary = format!(
        "c = {}, delta = {}, block sizes {:?}",
        bases.c(),
        bases.spec.delta(),
        bases.spec.block_sizes
    );
    let output = json!({
        "format": problem::FORMAT_VERSION,
        "command": "analyze",
        "bases": problem::bases_json(&bases),
        "decisions": problem::decisions_json(&analysis.decisions),
    });
    Ok(Outcome { code: EXIT_OK, output: Some(output), summary })
}

fn check(p: &Problem) -> Result<Outcome, Error> {
    let family = p
        .family
        .as_ref()
        .ok_or_else(|| Error::Parse("check needs a \"directions\" array".into()))?;
    let (bases, decisions) = spectral_bases(&p.rfde, &p.lambdas, p.rank_tol)?;
    let report = check_family(family, &bases, p.rank_tol)?;
    let code = if report.versal && !report.ambiguous { EXIT_OK } else { EXIT_INCONCLUSIVE };
    let summary = format!("rank S = {} (c^2 = {}), p = {}: {}", report.rank_s, report.c * report.c, report.p, report.verdict());
    let output = json!({
        "format": problem::FORMAT_VERSION,
        "command": "check",
        "names": family.names,
        "report": problem::report_json(&report),
        "decisions": problem::decisions_json(&decisions),
    });
    Ok(Outcome { code, output: Some(output), summary })
}

fn synthesize(p: &Problem, real: bool, scalar: bool, grid: Option<usize>) -> Result<Outcome, Error> {
    let opts = SynthesisOptions { rank_tol: p.rank_tol, grid_size: grid.unwrap_or(p.grid), ..Default::default() };
    let lambdas = if real { real_ordering(&p.lambdas)? } else { p.lambdas.clone() };
    let family = if real {
        synthesis::synthesize_real(&p.rfde, &lambdas, &opts)?.0
    } else {
        synthesis::synthesize_for_roots(&p.rfde, &lambdas, &opts)?
    };
    let mut info = json!({
        "delays": family.delays,
        "delta": family.delta(),
        "c": family.bases.c(),
        "labels": family.labels.iter().map(|l| l.to_string()).collect::<Vec<_>>(),
        "report": problem::report_json(&family.report),
        "decisions": problem::decisions_json(&family.decisions),
    });
    let (names, directions, kind) = if scalar {
        let form = synthesis::simplify_scalar(&family)?;
        info["change_matrix"] = problem::matrix_json(&form.change_matrix);
        let names = (0..form.delays.len()).map(|j| format!("beta_{j}")).collect::<Vec<_>>();
        (names, form.directions, "scalar")
    } else if real {
        let rf = synthesis::decomplexify(&family)?;
        info["real_labels"] = json!(rf.operators.iter().map(|o| o.label.clone()).collect::<Vec<_>>());
        (rf.param_names(), rf.directions(), "real")
    } else {
        (family.param_names(), family.directions(), "complex")
    };
    info["kind"] = json!(kind);
    let mut out = problem::problem_json(&p.rfde, &lambdas, &names, &directions, p.real, p.rank_tol, opts.grid_size);
    out["synthesis"] = info;
    let summary = format!("{kind} unfolding: {} parameters, delays {:?}", names.len(), family.delays);
    Ok(Outcome { code: EXIT_OK, output: Some(out), summary })
}

fn validate(p: &Problem, seed: u64) -> Result<Outcome, Error> {
    let opts = SynthesisOptions { rank_tol: p.rank_tol, grid_size: p.grid, ..Default::default() };
    let report = run_suite(&p.rfde, &p.lambdas, p.family.as_ref(), &opts, seed)?;
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    let summary = if failed.is_empty() {
        format!("all {} oracle checks passed", report.checks.len())
    } else {
        format!("failed: {}", failed.join(", "))
    };
    let code = if report.pass { EXIT_OK } else { EXIT_INCONCLUSIVE };
    let output = json!({"format": problem::FORMAT_VERSION, "command": "validate", "suite": problem::report_json(&report)});
    Ok(Outcome { code, output: Some(output), summary })
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::AmbiguousRank(_) => EXIT_INCONCLUSIVE,
        _ => EXIT_ERROR,
    }
}

/// Runs a parsed command; `--out` is honoured here.
pub fn run(cli: &Cli) -> Outcome {
    let result = match &cli.command {
        Command::Analyze { file } => load(file).and_then(|p| analyze(&p)),
        Command::Check { file } => load(file).and_then(|p| check(&p)),
        Command::Synthesize { file, real, scalar_simplify, grid, out } => {
            load(file).and_then(|p| synthesize(&p, *real, *scalar_simplify, *grid)).and_then(|mut o| {
                if let (Some(path), Some(doc)) = (out, &o.output) {
                    std::fs::write(path, problem::to_pretty(doc))?;
                    o.summary = format!("{} -> {}", o.summary, path.display());
                    o.output = None;
                }
                Ok(o)
            })
        }
        Command::Validate { file, seed } => load(file).and_then(|p| validate(&p, *seed)),
    };
    match result {
        Ok(o) => o,
        Err(e) => Outcome { code: exit_code_for(&e), output: None, summary: format!("error: {e}") },
    }
}
