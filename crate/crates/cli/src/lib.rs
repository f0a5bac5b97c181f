//! Command-line front end: state-set files in, verdicts and witnesses out.
//!
//! Exit codes: 0 feasible, 1 infeasible, 2 indeterminate, 3 input error,
//! 4 internal error.

pub mod error;
pub mod format;
pub mod io;
pub mod report;
pub mod selftest;
pub mod suites;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde_json::{json, Map, Value};
use statemorph_core::channelkit::{verify_channel, verify_instrument};
use statemorph_core::decide::{
    auto_method, check_multiprob, check_with, choi_oracle, helstrom, realize_instrument, Decision, Method, Verdict,
};
use statemorph_core::stateset::{canonical_gram, gram_from_kets, StateSet};

pub use error::CliError;
use report::{channel_report_json, decision_json, instrument_report_json, verdict_exit_code};
use suites::Agreement;

#[derive(Debug, Parser)]
#[command(name = "statemorph", version, about = "Decide whether a quantum channel maps one set of states onto another")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide whether some channel maps every source state onto its target.
    Check {
        source: PathBuf,
        target: PathBuf,
        /// auto, pure, pure-pair, qubit-pair, mixed-to-pure, pure-to-mixed, choi, fidelity or unitary
        #[arg(long, default_value = "auto")]
        method: String,
        /// Cross-check the verdict with the Choi-matrix oracle.
        #[arg(long)]
        verify: bool,
        /// Report wall time (makes output run-dependent).
        #[arg(long)]
        timing: bool,
    },
    /// Build a channel (or, with --probs, an instrument), verify it and write it to --out.
    Construct {
        source: PathBuf,
        #[arg(required = true)]
        targets: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        probs: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Print the Gram matrix of a file of pure states.
    Gram {
        path: PathBuf,
        /// Fix phases so that the first row is real and non-negative.
        #[arg(long)]
        canonical: bool,
    },
    /// Decide a probabilistic transformation onto several target families.
    Multiprob {
        source: PathBuf,
        #[arg(required = true)]
        targets: Vec<PathBuf>,
        #[arg(long)]
        probs: PathBuf,
        #[arg(long)]
        timing: bool,
    },
    /// Minimum error probability for telling two states apart.
    Helstrom {
        path: PathBuf,
        #[arg(long, num_args = 2, value_names = ["P1", "P2"], required = true, allow_negative_numbers = true)]
        priors: Vec<f64>,
    },
    /// Re-verify a channel or instrument file written by construct.
    Verify {
        source: PathBuf,
        #[arg(required = true)]
        targets: Vec<PathBuf>,
        #[arg(long)]
        witness: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Randomized agreement, construction and round-trip checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        instances: usize,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Reports go to `out`, diagnostics to `err`.
pub fn execute<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    3
                }
            }
        }
    };
    match run(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.exit_code()
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Internal(format!("writing output: {e}")))
}

fn parse_method(tag: &str) -> Result<Option<Method>, CliError> {
    Ok(Some(match tag {
        "auto" => return Ok(None),
        "pure" => Method::PureToPure,
        "pure-pair" => Method::PurePair,
        "qubit-pair" => Method::QubitPair,
        "mixed-to-pure" => Method::MixedToPure,
        "pure-to-mixed" => Method::PureToMixed,
        "choi" => Method::Choi,
        "fidelity" | "fidelity-necessary" => Method::FidelityNecessary,
        "unitary" | "unitary-equivalence" => Method::UnitaryEquivalence,
        other => return Err(CliError::Input(format!("unknown method {other:?}"))),
    }))
}

fn check_tol(tol: f64) -> Result<f64, CliError> {
    if tol.is_finite() && tol > 0.0 {
        Ok(tol)
    } else {
        Err(CliError::Input(format!("--tol must be positive, got {tol}")))
    }
}

fn load_pair(source: &Path, target: &Path) -> Result<(StateSet, StateSet), CliError> {
    let a = io::read_state_set(source)?.set;
    let b = io::read_state_set(target)?.set;
    if a.len() != b.len() {
        return Err(CliError::Input(format!(
            "source lists {} states but target lists {}",
            a.len(),
            b.len()
        )));
    }
    Ok((a, b))
}

fn load_families(paths: &[PathBuf]) -> Result<Vec<StateSet>, CliError> {
    paths.iter().map(|p| io::read_state_set(p).map(|l| l.set)).collect()
}

fn into_map(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("reports are JSON objects"),
    }
}

fn agreement_name(a: Agreement) -> &'static str {
    match a {
        Agreement::Agree => "agree",
        Agreement::Disagree => "disagree",
        Agreement::Skipped => "inconclusive",
    }
}

fn write_file(path: &Path, v: &Value) -> Result<(), CliError> {
    std::fs::write(path, format::render(v)).map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display())))
}

pub fn run(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, CliError> {
    match command {
        Command::Check {
            source,
            target,
            method,
            verify,
            timing,
        } => {
            let (a, b) = load_pair(&source, &target)?;
            let method = parse_method(&method)?.unwrap_or_else(|| auto_method(&a, &b));
            let start = Instant::now();
            let d = check_with(method, &a, &b)?;
            let mut rep = into_map(decision_json(&d));
            let mut code = verdict_exit_code(d.verdict);
            if verify {
                let o = choi_oracle(&a, &b)?;
                let agreement = suites::compare(&d, &o);
                rep.insert(
                    "cross_check".into(),
                    json!({"oracle": decision_json(&o), "agreement": agreement_name(agreement)}),
                );
                if agreement == Agreement::Disagree {
                    let _ = writeln!(
                        err,
                        "internal error: {} says {} but the Choi oracle says {}",
                        d.method.tag(),
                        d.verdict.as_str(),
                        o.verdict.as_str()
                    );
                    code = 4;
                }
            }
            if timing {
                rep.insert("wall_time_s".into(), format::num(start.elapsed().as_secs_f64()));
            }
            emit(out, &format::render(&Value::Object(rep)))?;
            Ok(code)
        }
        Command::Construct {
            source,
            targets,
            out: out_path,
            probs,
            tol,
        } => {
            let tol = check_tol(tol)?;
            match probs {
                None => construct_channel(&source, &targets, &out_path, tol, out, err),
                Some(p) => construct_instrument(&source, &targets, &p, &out_path, tol, out, err),
            }
        }
        Command::Gram { path, canonical } => {
            let set = io::read_state_set(&path)?.set;
            let g = if canonical {
                canonical_gram(&set)?
            } else {
                gram_from_kets(&set.kets()?)?
            };
            emit(out, &format::render(&format::matrix(g.matrix())))?;
            Ok(0)
        }
        Command::Multiprob {
            source,
            targets,
            probs,
            timing,
        } => {
            let a = io::read_state_set(&source)?.set;
            let fams = load_families(&targets)?;
            let (p, mode) = io::read_probabilities(&probs)?;
            let start = Instant::now();
            let d = check_multiprob(&a, &fams, &p, mode)?;
            let mut rep = into_map(decision_json(&d));
            rep.insert("mode".into(), json!(io::mode_name(mode)));
            if timing {
                rep.insert("wall_time_s".into(), format::num(start.elapsed().as_secs_f64()));
            }
            emit(out, &format::render(&Value::Object(rep)))?;
            Ok(verdict_exit_code(d.verdict))
        }
        Command::Helstrom { path, priors } => {
            let set = io::read_state_set(&path)?.set;
            if set.len() != 2 {
                return Err(CliError::Input(format!("helstrom needs exactly 2 states, found {}", set.len())));
            }
            let m = set.members();
            let pe = helstrom(priors[0], &m[0].density, priors[1], &m[1].density)?;
            let text = format::format_number(pe).ok_or_else(|| CliError::Internal("non-finite result".into()))?;
            emit(out, &format!("{text}\n"))?;
            Ok(0)
        }
        Command::Verify {
            source,
            targets,
            witness,
            tol,
        } => {
            let tol = check_tol(tol)?;
            let a = io::read_state_set(&source)?.set;
            let fams = load_families(&targets)?;
            let (rep, passed) = match io::read_witness(&witness)? {
                io::WitnessFile::Channel(ch) => {
                    if fams.len() != 1 {
                        return Err(CliError::Input("a channel is verified against exactly one target file".into()));
                    }
                    let r = verify_channel(&ch, &a, &fams[0], tol);
                    (channel_report_json(&r), r.passed)
                }
                io::WitnessFile::Instrument { instrument, probs, .. } => {
                    let r = verify_instrument(&instrument, &a, &fams, &probs, tol);
                    (instrument_report_json(&r), r.passed)
                }
            };
            emit(out, &format::render(&rep))?;
            Ok(if passed { 0 } else { 1 })
        }
        Command::Selftest { seed, instances } => {
            let r = selftest::run_selftest(seed, instances);
            emit(out, &format::render(&r.to_json()))?;
            if !r.passed() {
                let _ = writeln!(err, "self-test failed; see first_failure in the report");
            }
            Ok(if r.passed() { 0 } else { 1 })
        }
    }
}

/// Report for an instance without a Feasible verdict; returns its exit code.
fn report_unfeasible(d: &Decision, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, CliError> {
    emit(out, &format::render(&decision_json(d)))?;
    let _ = writeln!(err, "nothing constructed: instance is {}", d.verdict.as_str());
    Ok(verdict_exit_code(d.verdict))
}

fn construct_channel(
    source: &Path,
    targets: &[PathBuf],
    out_path: &Path,
    tol: f64,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<u8, CliError> {
    let [target] = targets else {
        return Err(CliError::Input("a channel needs exactly one target file; pass --probs for several".into()));
    };
    let (a, b) = load_pair(source, target)?;
    let d = check_with(auto_method(&a, &b), &a, &b)?;
    if d.verdict != Verdict::Feasible {
        return report_unfeasible(&d, out, err);
    }
    let ch = suites::build_channel(&d, &a, &b).map_err(CliError::Internal)?;
    let r = verify_channel(&ch, &a, &b, tol);
    let mut rep = into_map(decision_json(&d));
    rep.insert("verification".into(), channel_report_json(&r));
    if r.passed {
        write_file(out_path, &io::channel_json(&ch))?;
        rep.insert("written".into(), json!(out_path.display().to_string()));
    }
    emit(out, &format::render(&Value::Object(rep)))?;
    if r.passed {
        Ok(0)
    } else {
        let _ = writeln!(err, "internal error: constructed channel fails verification at tol {tol}");
        Ok(4)
    }
}

fn construct_instrument(
    source: &Path,
    targets: &[PathBuf],
    probs: &Path,
    out_path: &Path,
    tol: f64,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<u8, CliError> {
    let a = io::read_state_set(source)?.set;
    let fams = load_families(targets)?;
    let (p, mode) = io::read_probabilities(probs)?;
    let d = check_multiprob(&a, &fams, &p, mode)?;
    if d.verdict != Verdict::Feasible {
        return report_unfeasible(&d, out, err);
    }
    let inst = realize_instrument(&d, &a, &fams, &p, mode)?
        .ok_or_else(|| CliError::Internal("feasible verdict without an instrument witness".into()))?;
    let r = verify_instrument(&inst, &a, &fams, &p, tol);
    let mut rep = into_map(decision_json(&d));
    rep.insert("verification".into(), instrument_report_json(&r));
    if r.passed {
        write_file(out_path, &io::instrument_json(&inst, &p, mode))?;
        rep.insert("written".into(), json!(out_path.display().to_string()));
    }
    emit(out, &format::render(&Value::Object(rep)))?;
    if r.passed {
        Ok(0)
    } else {
        let _ = writeln!(err, "internal error: constructed instrument fails verification at tol {tol}");
        Ok(4)
    }
}
