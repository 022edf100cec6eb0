//! File formats: MDP and policy JSON, value-function and distance-matrix CSV, the binary
//! distance-matrix format, and atomic writes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, Policy};
use crate::metrics::{MetricKind, MetricMeta, StateMetric};
use crate::solvers::ValueFunctions;

/// Magic bytes of the binary distance-matrix format.
pub const MATRIX_MAGIC: &[u8; 4] = b"MDPM";
/// Header: magic, u32 state count, u32 kind id, u32 reserved (all little endian).
pub const MATRIX_HEADER_LEN: usize = 16;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpFile {
    gamma: f64,
    num_states: usize,
    num_actions: usize,
    rewards: Vec<Vec<f64>>,
    transitions: Vec<Vec<Vec<f64>>>,
}

fn parse_err(context: impl Into<String>, message: impl ToString) -> Error {
    Error::Parse { context: context.into(), message: message.to_string() }
}

pub fn mdp_to_json(mdp: &FiniteMdp) -> String {
    let file = MdpFile {
        gamma: mdp.gamma(),
        num_states: mdp.num_states(),
        num_actions: mdp.num_actions(),
        rewards: mdp.rewards().rows().into_iter().map(|r| r.to_vec()).collect(),
        transitions: (0..mdp.num_states())
            .map(|s| (0..mdp.num_actions()).map(|a| mdp.transition_row(s, a).to_vec()).collect())
            .collect(),
    };
    serde_json::to_string(&file).expect("plain numeric data serializes")
}

/// Parses and validates an MDP. Parse errors carry serde's line/column and field name.
pub fn mdp_from_json(text: &str, context: &str) -> Result<FiniteMdp> {
    let file: MdpFile = serde_json::from_str(text).map_err(|e| parse_err(context, e))?;
    if file.rewards.len() != file.num_states || file.transitions.len() != file.num_states {
        return Err(parse_err(
            context,
            format!("field \"num_states\" = {} disagrees with the tensors", file.num_states),
        ));
    }
    if file.rewards.iter().any(|r| r.len() != file.num_actions) {
        return Err(parse_err(
            context,
            format!("field \"num_actions\" = {} disagrees with \"rewards\"", file.num_actions),
        ));
    }
    FiniteMdp::from_nested(file.rewards, file.transitions, file.gamma)
}

pub fn save_mdp(path: &Path, mdp: &FiniteMdp) -> Result<()> {
    write_atomic(path, mdp_to_json(mdp).as_bytes())
}

pub fn load_mdp(path: &Path) -> Result<FiniteMdp> {
    let text = std::fs::read_to_string(path)?;
    mdp_from_json(&text, &path.display().to_string())
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PolicyFile {
    Probs { probs: Vec<Vec<f64>> },
    Actions { actions: Vec<usize> },
}

/// Policy JSON: `{"probs": [[...]]}` or `{"actions": [a_0, a_1, ...]}`.
pub fn policy_from_json(text: &str, num_actions: usize, context: &str) -> Result<Policy> {
    match serde_json::from_str(text).map_err(|e| parse_err(context, e))? {
        PolicyFile::Probs { probs } => Policy::from_nested(probs),
        PolicyFile::Actions { actions } => Policy::deterministic(&actions, num_actions),
    }
}

pub fn policy_to_json(pi: &Policy) -> String {
    match pi.actions() {
        Some(actions) => serde_json::json!({ "actions": actions }).to_string(),
        None => {
            let probs: Vec<Vec<f64>> = pi.probs().rows().into_iter().map(|r| r.to_vec()).collect();
            serde_json::json!({ "probs": probs }).to_string()
        }
    }
}

/// Rows are states; columns `state, v, q0, q1, ...`.
pub fn value_functions_to_csv(vf: &ValueFunctions) -> String {
    let mut out = String::from("state,v");
    for a in 0..vf.q.ncols() {
        write!(out, ",q{a}").unwrap();
    }
    out.push('\n');
    for s in 0..vf.v.len() {
        write!(out, "{s},{}", vf.v[s]).unwrap();
        for a in 0..vf.q.ncols() {
            write!(out, ",{}", vf.q[[s, a]]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn value_functions_from_csv(text: &str) -> Result<ValueFunctions> {
    let rows = read_numeric_csv(text, "value functions")?;
    let ns = rows.len();
    let na = rows.first().map_or(0, |r| r.len().saturating_sub(2));
    let v = Array1::from_iter(rows.iter().map(|r| r[1]));
    let q = Array2::from_shape_fn((ns, na), |(s, a)| rows[s][a + 2]);
    Ok(ValueFunctions { v, q, residual: 0.0, iterations: 0 })
}

/// First row and first column hold state ids.
pub fn metric_to_csv(m: &StateMetric) -> String {
    let n = m.num_states();
    let mut out = String::from("state");
    for t in 0..n {
        write!(out, ",{t}").unwrap();
    }
    out.push('\n');
    for s in 0..n {
        write!(out, "{s}").unwrap();
        for t in 0..n {
            write!(out, ",{}", m.d[[s, t]]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn metric_from_csv(text: &str, kind: MetricKind) -> Result<StateMetric> {
    let rows = read_numeric_csv(text, "distance matrix")?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n + 1) {
        return Err(parse_err("distance matrix", "matrix is not square"));
    }
    let d = Array2::from_shape_fn((n, n), |(s, t)| rows[s][t + 1]);
    Ok(StateMetric::new(d, kind, MetricMeta::default()))
}

fn read_numeric_csv(text: &str, context: &str) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(format!("{context}, line {}", line + 2), e))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn metric_to_bytes(m: &StateMetric) -> Vec<u8> {
    let n = m.num_states();
    let mut out = Vec::with_capacity(MATRIX_HEADER_LEN + 8 * n * n);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&m.kind.id().to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for x in m.d.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn metric_from_bytes(bytes: &[u8]) -> Result<StateMetric> {
    let err = |msg: &str| parse_err("binary distance matrix", msg);
    if bytes.len() < MATRIX_HEADER_LEN || &bytes[..4] != MATRIX_MAGIC {
        return Err(err("missing MDPM header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let n = word(4) as usize;
    let kind = MetricKind::from_id(word(8)).ok_or_else(|| err("unknown kind id"))?;
    if bytes.len() != MATRIX_HEADER_LEN + 8 * n * n {
        return Err(err("payload length does not match the header"));
    }
    let values = bytes[MATRIX_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let d = Array2::from_shape_vec((n, n), values).map_err(|e| err(&e.to_string()))?;
    Ok(StateMetric::new(d, kind, MetricMeta::default()))
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::generate_garnet;
    use crate::metrics::identity_metric;

    #[test]
    fn mdp_json_roundtrip_is_exact() {
        let m = generate_garnet(5, 2, 0).unwrap();
        assert_eq!(mdp_from_json(&mdp_to_json(&m), "mem").unwrap(), m);
    }

    #[test]
    fn missing_gamma_is_a_parse_error() {
        let text = r#"{"num_states":1,"num_actions":1,"rewards":[[1]],"transitions":[[[1]]]}"#;
        match mdp_from_json(text, "x.json") {
            Err(Error::Parse { message, .. }) => assert!(message.contains("gamma"), "{message}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_row_sum_is_rejected() {
        let text = r#"{"gamma":0.9,"num_states":2,"num_actions":1,"rewards":[[0],[1]],
            "transitions":[[[0.5,0.48]],[[0,1]]]}"#;
        assert!(matches!(mdp_from_json(text, "x"), Err(Error::RowNotStochastic { state: 0, .. })));
    }

    #[test]
    fn binary_layout() {
        let m = identity_metric(3);
        let bytes = metric_to_bytes(&m);
        assert_eq!(&bytes[..4], b"MDPM");
        assert_eq!(bytes.len(), 16 + 9 * 8);
        let back = metric_from_bytes(&bytes).unwrap();
        assert_eq!((back.d, back.kind), (m.d, MetricKind::Identity));
        assert!(metric_from_bytes(&bytes[..20]).is_err());
    }

    #[test]
    fn csv_matrix_roundtrip() {
        let m = identity_metric(3);
        let text = metric_to_csv(&m);
        assert!(text.starts_with("state,0,1,2\n0,0,1,1\n"));
        assert_eq!(metric_from_csv(&text, MetricKind::Identity).unwrap().d, m.d);
    }

    #[test]
    fn policy_json_forms() {
        let pi = policy_from_json(r#"{"actions":[1,0]}"#, 2, "p").unwrap();
        assert_eq!(pi.actions(), Some(vec![1, 0]));
        let pi = policy_from_json(r#"{"probs":[[0.5,0.5]]}"#, 2, "p").unwrap();
        assert!(!pi.is_deterministic());
        assert_eq!(policy_from_json(&policy_to_json(&pi), 2, "p").unwrap(), pi);
    }
}
