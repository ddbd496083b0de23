//! Tolerant parsing of JSON returned by chat models.

use serde_json::Value;

/// Parses `raw` as JSON; on failure strips code fences and surrounding prose
/// and tries exactly once more.
pub(crate) fn parse_lenient(raw: &str) -> Result<Value, String> {
    match serde_json::from_str(raw.trim()) {
        Ok(v) => Ok(v),
        Err(first) => {
            let repaired = repair(raw).ok_or_else(|| format!("no JSON payload found ({first})"))?;
            serde_json::from_str(repaired)
                .map_err(|e| format!("unparseable JSON after repair: {e}"))
        }
    }
}

fn repair(raw: &str) -> Option<&str> {
    let body = strip_fences(raw);
    let start = body.find(['{', '['])?;
    let close = if body[start..].starts_with('{') {
        '}'
    } else {
        ']'
    };
    let end = body.rfind(close)?;
    (end > start).then(|| &body[start..=end])
}

fn strip_fences(raw: &str) -> &str {
    let Some(open) = raw.find("```") else {
        return raw;
    };
    let after = &raw[open + 3..];
    // skip an info string such as `json`
    let after = after.find('\n').map_or(after, |nl| &after[nl + 1..]);
    match after.find("```") {
        Some(close) => &after[..close],
        None => after,
    }
}

/// Strings of a JSON array, also accepting an object wrapping a single array.
pub(crate) fn string_array(value: &Value) -> Option<Vec<String>> {
    let items = match value {
        Value::Array(items) => items,
        Value::Object(map) => map.values().find_map(Value::as_array)?,
        _ => return None,
    };
    Some(
        items
            .iter()
            .filter_map(|v| v.as_str().map(str::to_string))
            .collect(),
    )
}
