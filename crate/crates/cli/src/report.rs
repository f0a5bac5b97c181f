//! JSON encoding of decisions and verification reports.

use serde_json::{json, Map, Value};
use statemorph_core::channelkit::{ChannelReport, InstrumentReport};
use statemorph_core::decide::{Decision, Verdict, Witness};

use crate::format::{self, num};

pub fn witness_json(w: &Witness) -> Value {
    match w {
        Witness::Completion(m) => json!({"kind": "completion", "m": format::matrix(m)}),
        Witness::Expansion { kets, origin, m } => json!({
            "kind": "expansion",
            "origin": origin,
            "kets": kets.iter().map(|k| format::vector(k.amplitudes())).collect::<Vec<_>>(),
            "m": format::matrix(m),
        }),
        Witness::PurifiedPair { purifications, m } => json!({
            "kind": "purified-pair",
            "purifications": purifications.iter().map(|k| format::vector(k.amplitudes())).collect::<Vec<_>>(),
            "m": format::matrix(m),
        }),
        Witness::HadamardFamily(pis) => json!({
            "kind": "hadamard-family",
            "pi": pis.iter().map(format::matrix).collect::<Vec<_>>(),
        }),
        Witness::Choi(j) => json!({
            "kind": "choi",
            "dim_in": j.dim_in(),
            "dim_out": j.dim_out(),
            "matrix": format::matrix(j.matrix()),
        }),
        Witness::PureToMixed { choi, decompositions, .. } => json!({
            "kind": "pure-to-mixed",
            "choi": {
                "dim_in": choi.dim_in(),
                "dim_out": choi.dim_out(),
                "matrix": format::matrix(choi.matrix()),
            },
            "decompositions": decompositions
                .iter()
                .map(|dec| dec
                    .iter()
                    .map(|(p, k)| json!({"probability": num(*p), "state": format::vector(k.amplitudes())}))
                    .collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        }),
        Witness::Phases(ph) => json!({"kind": "phases", "thetas": format::reals(&ph.thetas)}),
        Witness::ViolatingPair { i, j, source_fidelity, target_fidelity } => json!({
            "kind": "violating-pair",
            "i": i,
            "j": j,
            "source_fidelity": num(*source_fidelity),
            "target_fidelity": num(*target_fidelity),
        }),
        Witness::ViolatingParameter { t, source_norm, target_norm } => json!({
            "kind": "violating-parameter",
            "t": num(*t),
            "source_norm": num(*source_norm),
            "target_norm": num(*target_norm),
        }),
        Witness::ForcedZero { i, j, source_overlap } => json!({
            "kind": "forced-zero",
            "i": i,
            "j": j,
            "source_overlap": num(*source_overlap),
        }),
        Witness::Obstruction(ob) => json!({"kind": "obstruction", "description": ob.to_string()}),
    }
}

/// One-line reading of an Infeasible witness.
fn explanation(d: &Decision) -> Option<String> {
    if d.verdict != Verdict::Infeasible {
        return None;
    }
    Some(match d.witness.as_ref()? {
        Witness::ViolatingPair { i, j, source_fidelity, target_fidelity } => format!(
            "fidelity of targets {i},{j} is {}, below the source fidelity {}; channels never decrease fidelity",
            format::format_number(*target_fidelity)?,
            format::format_number(*source_fidelity)?
        ),
        Witness::ViolatingParameter { t, source_norm, target_norm } => format!(
            "at t = {} the target trace distance {} exceeds the source value {}",
            format::format_number(*t)?,
            format::format_number(*target_norm)?,
            format::format_number(*source_norm)?
        ),
        Witness::ForcedZero { i, j, .. } => {
            format!("targets {i},{j} are orthogonal while the sources are not")
        }
        Witness::Obstruction(ob) => format!("no positive semidefinite witness exists: {ob}"),
        _ => return None,
    })
}

pub fn decision_json(d: &Decision) -> Value {
    let mut diagnostics: Vec<String> = explanation(d).into_iter().collect();
    diagnostics.extend(d.notes.iter().cloned());
    let mut m = Map::new();
    m.insert("verdict".into(), json!(d.verdict.as_str()));
    m.insert("method".into(), json!(d.method.tag()));
    m.insert("margin".into(), num(d.margin));
    m.insert("residual".into(), d.residual.map(num).unwrap_or(Value::Null));
    m.insert("boundary".into(), json!(d.is_boundary()));
    m.insert("witness".into(), d.witness.as_ref().map(witness_json).unwrap_or(Value::Null));
    m.insert("diagnostics".into(), json!(diagnostics));
    Value::Object(m)
}

pub fn channel_report_json(r: &ChannelReport) -> Value {
    json!({
        "passed": r.passed,
        "tol": num(r.tol),
        "max_error": num(r.max_error()),
        "errors": format::reals(&r.errors),
        "completeness_residual": num(r.completeness_residual),
    })
}

pub fn instrument_report_json(r: &InstrumentReport) -> Value {
    json!({
        "passed": r.passed,
        "tol": num(r.tol),
        "max_error": num(r.max_error()),
        "probability_errors": format::real_rows(&r.probability_errors),
        "state_errors": format::real_rows(&r.state_errors),
        "completeness_residual": num(r.completeness_residual),
    })
}

pub fn verdict_exit_code(v: Verdict) -> u8 {
    match v {
        Verdict::Feasible => 0,
        Verdict::Infeasible => 1,
        Verdict::Indeterminate => 2,
    }
}
