//! Canonical JSON emission: 2-space indent, sorted keys, LF line endings,
//! trailing newline.

use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FloatStyle {
    /// Shortest representation that parses back to the same `f64`.
    Shortest,
    /// At most six significant digits, trailing zeros trimmed but never
    /// fewer than two decimals (`9.50`, `0.201`, `1.00`).
    Rounded,
}

pub fn to_canonical_string(value: &Value, style: FloatStyle) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0, style);
    out.push('\n');
    out
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_value(out: &mut String, value: &Value, level: usize, style: FloatStyle) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().unwrap_or(f64::NAN);
                match style {
                    FloatStyle::Shortest => out.push_str(&n.to_string()),
                    FloatStyle::Rounded => out.push_str(&format_rounded(x)),
                }
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                indent(out, level + 1);
                write_value(out, item, level + 1, style);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(out, level);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, key) in keys.iter().enumerate() {
                indent(out, level + 1);
                out.push_str(&serde_json::to_string(key).expect("key serializes"));
                out.push_str(": ");
                write_value(out, &map[*key], level + 1, style);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(out, level);
            out.push('}');
        }
    }
}

/// Number of decimals that keeps six significant digits for `x`.
pub(crate) fn rounded_decimals(x: f64) -> usize {
    if x == 0.0 || !x.is_finite() {
        return 2;
    }
    let magnitude = x.abs().log10().floor() as i32;
    (5 - magnitude).clamp(2, 17) as usize
}

fn trim_decimals(mut s: String) -> String {
    if let Some(dot) = s.find('.') {
        while s.len() > dot + 3 && s.ends_with('0') {
            s.pop();
        }
    }
    s
}

pub(crate) fn format_with_decimals(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    let s = if s.starts_with("-0") && s.trim_start_matches(['-', '0', '.']).is_empty() {
        s[1..].to_string()
    } else {
        s
    };
    trim_decimals(s)
}

pub fn format_rounded(x: f64) -> String {
    format_with_decimals(x, rounded_decimals(x))
}
