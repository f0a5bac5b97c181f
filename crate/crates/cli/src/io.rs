//! JSON files: state sets, probability matrices, channels and instruments.
//! Complex scalars are `[re, im]`; matrices are row-major nested arrays.

use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Value};
use statemorph_core::channelkit::{Instrument, KrausChannel};
use statemorph_core::decide::{Mode, ProbabilityMatrix};
use statemorph_core::matcore::{c, CMatrix, CVector, C64};
use statemorph_core::stateset::{DensityMatrix, Ket, State, StateSet};

use crate::error::CliError;
use crate::format;

/// Largest accepted deviation of a ket's norm from one.
pub const KET_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateSetFile {
    dim: usize,
    states: Vec<StateRecord>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateRecord {
    kind: String,
    data: Value,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LoadedSet {
    pub set: StateSet,
    pub labels: Vec<Option<String>>,
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::input(&path.display().to_string(), e))
}

pub fn read_state_set(path: &Path) -> Result<LoadedSet, CliError> {
    parse_state_set(&read_text(path)?).map_err(|e| match e {
        CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn parse_complex(v: &Value) -> Result<C64, String> {
    match v.as_array().map(|a| a.as_slice()) {
        Some([re, im]) => match (re.as_f64(), im.as_f64()) {
            (Some(re), Some(im)) => Ok(c(re, im)),
            _ => Err(format!("complex entry {v} must hold two numbers")),
        },
        _ => Err(format!("complex entry {v} must be [re, im]")),
    }
}

fn parse_vector(v: &Value, dim: usize) -> Result<CVector, String> {
    let items = v.as_array().ok_or("pure data must be an array of [re, im] pairs")?;
    if items.len() != dim {
        return Err(format!("vector has {} entries, expected {dim}", items.len()));
    }
    let zs = items.iter().map(parse_complex).collect::<Result<Vec<_>, _>>()?;
    Ok(CVector::from_vec(zs))
}

fn parse_matrix(v: &Value, rows: usize, cols: usize) -> Result<CMatrix, String> {
    let r = v.as_array().ok_or("matrix must be an array of rows")?;
    if r.len() != rows {
        return Err(format!("matrix has {} rows, expected {rows}", r.len()));
    }
    let mut m = CMatrix::zeros(rows, cols);
    for (i, row) in r.iter().enumerate() {
        let row = row.as_array().ok_or(format!("row {i} is not an array"))?;
        if row.len() != cols {
            return Err(format!("row {i} has {} entries, expected {cols}", row.len()));
        }
        for (j, z) in row.iter().enumerate() {
            m[(i, j)] = parse_complex(z)?;
        }
    }
    Ok(m)
}

pub fn parse_state_set(text: &str) -> Result<LoadedSet, CliError> {
    let file: StateSetFile = serde_json::from_str(text).map_err(|e| CliError::input("malformed state file", e))?;
    if file.dim == 0 {
        return Err(CliError::Input("dim must be positive".into()));
    }
    if file.states.is_empty() {
        return Err(CliError::Input("no states listed".into()));
    }
    let mut states = Vec::with_capacity(file.states.len());
    let mut labels = Vec::with_capacity(file.states.len());
    for (i, rec) in file.states.into_iter().enumerate() {
        let bad = |m: String| CliError::Input(format!("state {i}: {m}"));
        let state = match rec.kind.as_str() {
            "pure" => {
                let v = parse_vector(&rec.data, file.dim).map_err(bad)?;
                let norm = v.norm();
                if (norm - 1.0).abs() > KET_NORM_TOL {
                    return Err(bad(format!("ket norm {norm} differs from 1")));
                }
                State::Pure(Ket::new(v).map_err(|e| bad(e.to_string()))?)
            }
            "mixed" => {
                let m = parse_matrix(&rec.data, file.dim, file.dim).map_err(bad)?;
                State::Mixed(DensityMatrix::new(m).map_err(|e| bad(e.to_string()))?)
            }
            other => return Err(bad(format!("unknown kind {other:?}, expected \"pure\" or \"mixed\""))),
        };
        states.push(state);
        labels.push(rec.label);
    }
    let set = StateSet::new(states).map_err(|e| CliError::input("state set", e))?;
    Ok(LoadedSet { set, labels })
}

/// Pure members are written as kets, the rest as density matrices.
pub fn state_set_json(set: &StateSet) -> Value {
    let states: Vec<Value> = set
        .members()
        .iter()
        .map(|m| match &m.ket {
            Some(k) => json!({"kind": "pure", "data": format::vector(k.amplitudes())}),
            None => json!({"kind": "mixed", "data": format::matrix(m.density.matrix())}),
        })
        .collect();
    json!({"dim": set.dim(), "states": states})
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbabilityFile {
    #[serde(default)]
    mode: Option<String>,
    matrix: Vec<Vec<f64>>,
}

pub fn parse_mode(s: &str) -> Result<Mode, CliError> {
    match s {
        "subnormalized" => Ok(Mode::Subnormalized),
        "exact" => Ok(Mode::Exact),
        other => Err(CliError::Input(format!("unknown mode {other:?}, expected \"exact\" or \"subnormalized\""))),
    }
}

pub fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Exact => "exact",
        Mode::Subnormalized => "subnormalized",
    }
}

/// Probability file; the mode defaults to subnormalized.
pub fn parse_probabilities(text: &str) -> Result<(ProbabilityMatrix, Mode), CliError> {
    let file: ProbabilityFile =
        serde_json::from_str(text).map_err(|e| CliError::input("malformed probability file", e))?;
    let mode = parse_mode(file.mode.as_deref().unwrap_or("subnormalized"))?;
    let p = ProbabilityMatrix::new(file.matrix).map_err(|e| CliError::input("probability matrix", e))?;
    Ok((p, mode))
}

pub fn read_probabilities(path: &Path) -> Result<(ProbabilityMatrix, Mode), CliError> {
    parse_probabilities(&read_text(path)?).map_err(|e| match e {
        CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn operators_json(ops: &[CMatrix]) -> Value {
    Value::Array(ops.iter().map(format::matrix).collect())
}

pub fn channel_json(ch: &KrausChannel) -> Value {
    json!({
        "kind": "channel",
        "dim_in": ch.dim_in(),
        "dim_out": ch.dim_out(),
        "kraus": operators_json(ch.operators()),
    })
}

pub fn instrument_json(inst: &Instrument, probs: &ProbabilityMatrix, mode: Mode) -> Value {
    json!({
        "kind": "instrument",
        "dim_in": inst.dim_in(),
        "dim_out": inst.dim_out(),
        "mode": mode_name(mode),
        "probabilities": format::real_rows(&probs.rows()),
        "outcomes": inst.outcomes.iter().map(|ops| operators_json(ops)).collect::<Vec<_>>(),
        "failure": inst.failure.as_deref().map(operators_json),
    })
}

/// A channel or instrument read back from disk.
#[derive(Debug, Clone)]
pub enum WitnessFile {
    Channel(KrausChannel),
    Instrument {
        instrument: Instrument,
        probs: ProbabilityMatrix,
        mode: Mode,
    },
}

fn parse_operators(v: &Value, rows: usize, cols: usize) -> Result<Vec<CMatrix>, String> {
    v.as_array()
        .ok_or("operator list must be an array")?
        .iter()
        .map(|m| parse_matrix(m, rows, cols))
        .collect()
}

pub fn parse_witness(text: &str) -> Result<WitnessFile, CliError> {
    let v: Value = serde_json::from_str(text).map_err(|e| CliError::input("malformed witness file", e))?;
    let field = |k: &str| v.get(k).ok_or_else(|| CliError::Input(format!("witness file lacks {k:?}")));
    let dim = |k: &str| -> Result<usize, CliError> {
        field(k)?
            .as_u64()
            .map(|d| d as usize)
            .ok_or_else(|| CliError::Input(format!("{k} must be a positive integer")))
    };
    let (d_in, d_out) = (dim("dim_in")?, dim("dim_out")?);
    let bad = |m: String| CliError::Input(format!("witness file: {m}"));
    match field("kind")?.as_str() {
        Some("channel") => {
            let ops = parse_operators(field("kraus")?, d_out, d_in).map_err(bad)?;
            let ch = KrausChannel::new_unchecked(d_in, d_out, ops).map_err(|e| CliError::input("witness file", e))?;
            Ok(WitnessFile::Channel(ch))
        }
        Some("instrument") => {
            let mode = parse_mode(field("mode")?.as_str().unwrap_or(""))?;
            let rows: Vec<Vec<f64>> = serde_json::from_value(field("probabilities")?.clone())
                .map_err(|e| CliError::input("witness probabilities", e))?;
            let probs = ProbabilityMatrix::new(rows).map_err(|e| CliError::input("witness probabilities", e))?;
            let outcomes = field("outcomes")?
                .as_array()
                .ok_or_else(|| bad("outcomes must be an array".into()))?
                .iter()
                .map(|o| parse_operators(o, d_out, d_in))
                .collect::<Result<Vec<_>, _>>()
                .map_err(bad)?;
            let failure = match v.get("failure") {
                None | Some(Value::Null) => None,
                Some(f) => Some(parse_operators(f, d_out, d_in).map_err(bad)?),
            };
            let instrument =
                Instrument::new(d_in, d_out, outcomes, failure).map_err(|e| CliError::input("witness instrument", e))?;
            Ok(WitnessFile::Instrument { instrument, probs, mode })
        }
        _ => Err(bad("kind must be \"channel\" or \"instrument\"".into())),
    }
}

pub fn read_witness(path: &Path) -> Result<WitnessFile, CliError> {
    parse_witness(&read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PLUS: &str = r#"{"dim": 2, "states": [
        {"kind": "pure", "data": [[1, 0], [0, 0]], "label": "zero"},
        {"kind": "pure", "data": [[0.7071067811865476, 0], [0.7071067811865476, 0]]}
    ]}"#;

    #[test]
    fn parses_pure_states_with_labels() {
        let l = parse_state_set(PLUS).unwrap();
        assert_eq!(l.set.len(), 2);
        assert_eq!(l.set.dim(), 2);
        assert_eq!(l.labels, vec![Some("zero".to_string()), None]);
        assert!(l.set.all_pure());
    }

    #[test]
    fn parses_mixed_states() {
        let text = r#"{"dim": 2, "states": [
            {"kind": "mixed", "data": [[[0.5, 0], [0, 0]], [[0, 0], [0.5, 0]]]}
        ]}"#;
        let l = parse_state_set(text).unwrap();
        assert!(!l.set.all_pure());
    }

    #[test]
    fn rejects_bad_inputs() {
        let cases = [
            "not json",
            r#"{"dim": 2, "states": []}"#,
            r#"{"dim": 2, "states": [{"kind": "pure", "data": [[1, 0]]}]}"#,
            r#"{"dim": 2, "states": [{"kind": "pure", "data": [[2, 0], [0, 0]]}]}"#,
            r#"{"dim": 2, "states": [{"kind": "pure", "data": [1, 0]}]}"#,
            r#"{"dim": 2, "states": [{"kind": "weird", "data": [[1, 0], [0, 0]]}]}"#,
            r#"{"dim": 2, "states": [{"kind": "mixed", "data": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]}]}"#,
            r#"{"dim": 2, "states": [{"kind": "pure", "data": [[1, 0], [0, 0]]}], "extra": 1}"#,
        ];
        for t in cases {
            assert!(matches!(parse_state_set(t), Err(CliError::Input(_))), "{t}");
        }
    }

    #[test]
    fn state_sets_round_trip() {
        let l = parse_state_set(PLUS).unwrap();
        let text = serde_json::to_string(&state_set_json(&l.set)).unwrap();
        let back = parse_state_set(&text).unwrap();
        for (a, b) in l.set.members().iter().zip(back.set.members()) {
            assert!((a.density.matrix() - b.density.matrix()).norm() < 1e-11);
        }
    }

    #[test]
    fn probability_files() {
        let (p, mode) = parse_probabilities(r#"{"matrix": [[0.1], [0.1]]}"#).unwrap();
        assert_eq!(mode, Mode::Subnormalized);
        assert_eq!(p.n(), 2);
        let (_, mode) = parse_probabilities(r#"{"mode": "exact", "matrix": [[1.0], [1.0]]}"#).unwrap();
        assert_eq!(mode, Mode::Exact);
        assert!(parse_probabilities(r#"{"matrix": [[0.7, 0.7]]}"#).is_err());
        assert!(parse_probabilities(r#"{"mode": "odd", "matrix": [[0.1]]}"#).is_err());
    }

    #[test]
    fn channels_round_trip() {
        let ch = KrausChannel::identity(3);
        let text = serde_json::to_string(&channel_json(&ch)).unwrap();
        match parse_witness(&text).unwrap() {
            WitnessFile::Channel(back) => {
                assert_eq!(back.operators().len(), 1);
                assert!((&back.operators()[0] - &ch.operators()[0]).norm() < 1e-12);
            }
            _ => panic!("expected a channel"),
        }
    }
}
