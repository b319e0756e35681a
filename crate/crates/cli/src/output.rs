//! Deterministic JSON rendering: sorted object keys, floats at 9 significant digits.

use serde::Serialize;
use serde_json::{Number, Value};

use crate::error::{CliError, CliResult};

/// Round to 9 significant digits; integral and non-finite values pass through.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn canonicalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig9(n.as_f64().expect("f64 number"));
            Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonicalize).collect()),
        // serde_json's default map is ordered by key
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, canonicalize(v))).collect()),
        other => other,
    }
}

/// Canonical value tree of `data`.
pub fn to_canonical<T: Serialize>(data: &T) -> CliResult<Value> {
    let v = serde_json::to_value(data).map_err(|e| CliError::Input(format!("serialization failed: {e}")))?;
    Ok(canonicalize(v))
}

/// Pretty-printed canonical JSON with a trailing newline.
pub fn render<T: Serialize>(data: &T) -> CliResult<String> {
    let v = to_canonical(data)?;
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    Ok(s)
}
