//! Rendering of reports as JSON or as a two-line TSV table.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::Value;

use crate::args::OutputFormat;

/// Flattens nested objects into dotted keys, preserving field order.
fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

pub fn write_report<W: Write, T: Serialize>(
    w: &mut W,
    format: OutputFormat,
    report: &T,
) -> io::Result<()> {
    let value = serde_json::to_value(report).map_err(io::Error::other)?;
    match format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut *w, &value).map_err(io::Error::other)?;
            writeln!(w)
        }
        OutputFormat::Tsv => {
            let mut fields = Vec::new();
            flatten("", &value, &mut fields);
            let (keys, values): (Vec<_>, Vec<_>) = fields.into_iter().unzip();
            writeln!(w, "{}", keys.join("\t"))?;
            writeln!(w, "{}", values.join("\t"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn tsv_flattens_nested_fields() {
        let mut out = Vec::new();
        let report = json!({"a": 1, "b": {"c": "x", "d": [1, 2]}, "e": null});
        write_report(&mut out, OutputFormat::Tsv, &report).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "a\tb.c\tb.d\te\n1\tx\t[1,2]\tnull\n"
        );
    }
}
