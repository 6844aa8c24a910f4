use serde_json::{Map, Value};

use super::{ExecutionRecord, TestOutcome};
use crate::error::{Error, Result};

fn format_err(line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        line,
        message: message.into(),
    }
}

fn required<'a>(obj: &'a Map<String, Value>, key: &str, line: usize) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| format_err(line, format!("missing key {key}")))
}

fn optional_string(obj: &Map<String, Value>, key: &str, line: usize) -> Result<Option<String>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(format_err(line, format!("key {key} must be a string"))),
    }
}

/// Parses the canonical one-object-per-line history format.
///
/// Blank lines are ignored; line numbers in errors are 1-based and count
/// blank lines.
pub fn parse_history_jsonl(text: &str) -> Result<Vec<ExecutionRecord>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw)
            .map_err(|e| format_err(line, format!("invalid json ({e})")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| format_err(line, "expected a json object"))?;

        let test_id = required(obj, "test_id", line)?
            .as_str()
            .ok_or_else(|| format_err(line, "key test_id must be a string"))?
            .to_string();
        let timestamp = required(obj, "timestamp", line)?
            .as_i64()
            .ok_or_else(|| format_err(line, "key timestamp must be an integer"))?;
        let outcome_str = required(obj, "outcome", line)?
            .as_str()
            .ok_or_else(|| format_err(line, "key outcome must be a string"))?;
        let outcome: TestOutcome = outcome_str
            .parse()
            .map_err(|e: String| format_err(line, e))?;
        let duration = required(obj, "duration", line)?
            .as_f64()
            .ok_or_else(|| format_err(line, "key duration must be a number"))?;
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(format_err(line, format!("negative or non-finite duration {duration}")));
        }
        if timestamp <= 0 {
            return Err(format_err(line, format!("non-positive timestamp {timestamp}")));
        }

        out.push(ExecutionRecord {
            test_id,
            timestamp,
            outcome,
            duration,
            build_id: optional_string(obj, "build_id", line)?,
            pipeline: optional_string(obj, "pipeline", line)?,
        });
    }
    Ok(out)
}

/// Serializes records in the format read by [`parse_history_jsonl`].
pub fn write_history_jsonl(records: &[ExecutionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records always serialize"));
        out.push('\n');
    }
    out
}
