//! Canonical output: sorted keys and floats rounded to six significant digits.

use serde_json::{Map, Number, Value};

const SIG_DIGITS: usize = 6;

pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    // scientific formatting does the decimal rounding for us
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Rounds every float in place. Integers are left alone; the default
/// `serde_json` map is ordered, so keys come out sorted.
pub fn canonicalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().unwrap_or(f64::NAN));
            // -0.0 and 0.0 must print the same
            let x = if x == 0.0 { 0.0 } else { x };
            Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonicalize).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, canonicalize(v))).collect::<Map<_, _>>()),
        other => other,
    }
}

pub fn to_json(v: Value) -> String {
    let mut s = serde_json::to_string_pretty(&canonicalize(v)).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// Two-column `path  value` listing of the leaves.
pub fn to_table(v: Value) -> String {
    let mut rows = Vec::new();
    flatten(&canonicalize(v), String::new(), &mut rows);
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
}

fn flatten(v: &Value, prefix: String, rows: &mut Vec<(String, String)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(o) if !o.is_empty() => {
            for (k, x) in o {
                flatten(x, join(k), rows);
            }
        }
        Value::Array(a) if !a.is_empty() => {
            for (i, x) in a.iter().enumerate() {
                flatten(x, join(&i.to_string()), rows);
            }
        }
        Value::String(s) => rows.push((prefix, s.clone())),
        other => rows.push((prefix, other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounding() {
        assert_eq!(round_sig(0.834983498349835), 0.834983);
        assert_eq!(round_sig(123456789.0), 123457000.0);
        assert_eq!(round_sig(-1.0 / 3.0), -0.333333);
        assert_eq!(round_sig(0.0), 0.0);
    }

    #[test]
    fn keys_sorted_and_ints_kept() {
        let s = to_json(json!({"b": 1, "a": [0.1234567, 2], "c": -0.0}));
        assert_eq!(s, "{\n  \"a\": [\n    0.123457,\n    2\n  ],\n  \"b\": 1,\n  \"c\": 0.0\n}\n");
    }

    #[test]
    fn table_rows() {
        let t = to_table(json!({"x": {"y": 1.5}, "name": "n"}));
        assert_eq!(t, "name  n\nx.y   1.5\n");
    }
}
